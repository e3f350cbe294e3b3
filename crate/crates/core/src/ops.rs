//! Row-major `f64` matrices and the handful of products the batch math needs.
//!
//! Every product assigns each output row to exactly one task and accumulates
//! the inner dimension sequentially, so results do not depend on the thread
//! count or on whether the `parallel` feature is enabled.

use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "from_flat: size mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "from_rows: ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols)
    }
}

/// `a * b^T`: (m x k) by (n x k) -> (m x n).
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_nt: inner dimension mismatch");
    let (m, k, n) = (a.rows, a.cols, b.rows);
    let mut out = Matrix::zeros(m, n);
    par::for_each_row(&mut out.data, n, n * k, |i, row| {
        let ar = a.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = crate::vector::dot(ar, b.row(j));
        }
    });
    out
}

/// `a * b`: (m x k) by (k x n) -> (m x n).
pub fn matmul_nn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul_nn: inner dimension mismatch");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, n);
    par::for_each_row(&mut out.data, n, n * k, |i, row| {
        let ar = a.row(i);
        for (p, &apv) in ar.iter().enumerate().take(k) {
            let br = b.row(p);
            for j in 0..n {
                row[j] += apv * br[j];
            }
        }
    });
    out
}

/// `a^T * b`: (k x m) by (k x n) -> (m x n).
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_tn: inner dimension mismatch");
    let (k, m, n) = (a.rows, a.cols, b.cols);
    let mut out = Matrix::zeros(m, n);
    par::for_each_row(&mut out.data, n, n * k, |i, row| {
        for p in 0..k {
            let apv = a.get(p, i);
            let br = b.row(p);
            for j in 0..n {
                row[j] += apv * br[j];
            }
        }
    });
    out
}

/// Adds `bias` to every row in place.
pub fn add_bias_rows(m: &mut Matrix, bias: &[f64]) {
    assert_eq!(m.cols, bias.len(), "add_bias_rows: width mismatch");
    for row in m.data.chunks_mut(m.cols) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums: (m x n) -> n.
pub fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols];
    for row in m.iter_rows() {
        for (acc, v) in out.iter_mut().zip(row) {
            *acc += v;
        }
    }
    out
}

/// Index of the row maximum; ties resolve to the smaller index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    // Naive triple-loop oracle for the product checks.
    fn naive_nt(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.rows());
        for i in 0..a.rows() {
            for j in 0..b.rows() {
                let mut acc = 0.0;
                for p in 0..a.cols() {
                    acc += a.get(i, p) * b.get(j, p);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn seeded(rows: usize, cols: usize, scale: f64) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        let mut s = 0x2545F4914F6CDD1Du64;
        for v in m.data_mut() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            *v = ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * scale;
        }
        m
    }

    #[test]
    fn products_match_naive_oracle() {
        let a = seeded(7, 5, 2.0);
        let b = seeded(9, 5, 2.0);
        assert_eq!(matmul_nt(&a, &b), naive_nt(&a, &b));

        // a*b == a * (b^T)^T exercised through the nt oracle
        let c = seeded(5, 9, 2.0);
        let nn = matmul_nn(&a, &c);
        for i in 0..a.rows() {
            for j in 0..c.cols() {
                let mut acc = 0.0;
                for p in 0..a.cols() {
                    acc += a.get(i, p) * c.get(p, j);
                }
                assert!((nn.get(i, j) - acc).abs() < 1e-12);
            }
        }

        let e = seeded(7, 9, 2.0);
        let tn = matmul_tn(&a, &e);
        for i in 0..a.cols() {
            for j in 0..e.cols() {
                let mut acc = 0.0;
                for p in 0..a.rows() {
                    acc += a.get(p, i) * e.get(p, j);
                }
                assert!((tn.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
    }

    #[test]
    fn bias_and_column_sums() {
        let mut m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        add_bias_rows(&mut m, &[10.0, 20.0]);
        assert_eq!(m.row(1), &[13.0, 24.0]);
        assert_eq!(column_sums(&m), vec![24.0, 46.0]);
    }
}
