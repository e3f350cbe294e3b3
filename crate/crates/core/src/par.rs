//! Parallel/sequential execution helpers.
//!
//! With the `parallel` feature the helpers fan work out over rayon; without
//! it they degrade to plain loops. Both paths produce bit-identical results:
//! each output element is computed by exactly one task in a fixed sequential
//! order, and no reduction ever depends on thread scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Minimum number of f64 operations before a loop is worth parallelizing.
pub(crate) const PAR_THRESHOLD: usize = 16 * 1024;

/// Maps `0..n` through `f`, collecting results in index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, work_per_item: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n * work_per_item >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, _work_per_item: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Applies `f` to each `cols`-wide row of `data`, in parallel when the total
/// work justifies it.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_row<F>(data: &mut [f64], cols: usize, work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let rows = if cols == 0 { 0 } else { data.len() / cols };
    if rows * work_per_row >= PAR_THRESHOLD {
        data.par_chunks_mut(cols)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    } else {
        for (i, row) in data.chunks_mut(cols).enumerate() {
            f(i, row);
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row<F>(data: &mut [f64], cols: usize, _work_per_row: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    for (i, row) in data.chunks_mut(cols).enumerate() {
        f(i, row);
    }
}
