//! Angular analysis of logit and softmax fields.
//!
//! A weight set restricted to a 2-plane gives each class an activation
//! `z_j(theta) = sigma * rho_j * cos(theta - phi_j)` along an angular sweep
//! of unit embeddings in that plane. This module computes those sweeps, the
//! criterion sum `sum_j (dz_j/dtheta) e^{z_j}` whose zeros locate softmax
//! extrema, verifiers for the root and positivity claims, and the
//! divergence between logit peaks and softmax peaks.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{gram_schmidt, PlaneBasis, SymmetricLayout};
use crate::ops::Matrix;
use crate::par;
use crate::vector::VectorD;

const TWO_PI: f64 = 2.0 * PI;

/// Default sweep resolution in degrees. The refinement step narrows
/// extremum estimates to [`REFINE_TOL_DEG`].
pub const DEFAULT_RESOLUTION_DEG: f64 = 0.1;

/// Angular tolerance (degrees) to which extrema are refined.
pub const REFINE_TOL_DEG: f64 = 0.01;

fn wrap_2pi(theta: f64) -> f64 {
    let mut t = theta % TWO_PI;
    if t <= -0.0 {
        t += TWO_PI;
    }
    if t >= TWO_PI {
        t -= TWO_PI;
    }
    t
}

/// Wraps an angular difference into [0, 180] degrees.
fn wrap_deg_180(delta_deg: f64) -> f64 {
    let mut d = delta_deg.abs() % 360.0;
    if d > 180.0 {
        d = 360.0 - d;
    }
    d
}

/// Per-class planar norms and angles of a weight set restricted to an
/// analysis plane.
#[derive(Clone, Debug)]
pub struct PlanarWeights {
    norms: Vec<f64>,
    angles: Vec<f64>,
}

impl PlanarWeights {
    /// Angles are wrapped into [0, 2*pi); norms must be finite and
    /// non-negative.
    pub fn new(norms: Vec<f64>, angles: Vec<f64>) -> Result<Self> {
        if norms.len() != angles.len() {
            return Err(Error::InvalidParameter(format!(
                "planar form length mismatch: {} norms vs {} angles",
                norms.len(),
                angles.len()
            )));
        }
        if norms.iter().any(|r| !r.is_finite() || *r < 0.0)
            || angles.iter().any(|a| !a.is_finite())
        {
            return Err(Error::InvalidParameter(
                "planar form entries must be finite, norms non-negative".into(),
            ));
        }
        Ok(Self {
            norms,
            angles: angles.into_iter().map(wrap_2pi).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }
}

/// An arbitrary set of class weight vectors, optionally carrying its planar
/// restriction.
#[derive(Clone, Debug)]
pub struct WeightSet {
    weights: Vec<VectorD>,
    planar: Option<PlanarWeights>,
}

impl WeightSet {
    /// At least two weights, all of one dimension.
    pub fn from_vectors(weights: Vec<VectorD>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "weight set needs n >= 2, got {}",
                weights.len()
            )));
        }
        let d = weights[0].dim();
        if weights.iter().any(|w| w.dim() != d) {
            return Err(Error::InvalidParameter(
                "weight set dimensions disagree".into(),
            ));
        }
        Ok(Self {
            weights,
            planar: None,
        })
    }

    /// Builds planar weights `norm_j * (cos phi_j, sin phi_j)` in `R^2`,
    /// with the planar form attached.
    pub fn from_planar(angles_rad: &[f64], norms: &[f64]) -> Result<Self> {
        let planar = PlanarWeights::new(norms.to_vec(), angles_rad.to_vec())?;
        if planar.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "weight set needs n >= 2, got {}",
                planar.len()
            )));
        }
        let weights = planar
            .angles
            .iter()
            .zip(&planar.norms)
            .map(|(&a, &r)| VectorD::from_trusted(vec![r * a.cos(), r * a.sin()]))
            .collect();
        Ok(Self {
            weights,
            planar: Some(planar),
        })
    }

    /// Unit-norm planar weights at the given angles.
    pub fn from_planar_angles(angles_rad: &[f64]) -> Result<Self> {
        WeightSet::from_planar(angles_rad, &vec![1.0; angles_rad.len()])
    }

    pub fn from_layout(layout: &SymmetricLayout) -> Self {
        let planar = planar_restriction(layout.weights(), layout.basis());
        Self {
            weights: layout.weights().to_vec(),
            planar: Some(planar),
        }
    }

    pub fn weights(&self) -> &[VectorD] {
        &self.weights
    }

    pub fn class_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].dim()
    }

    pub fn planar(&self) -> Option<&PlanarWeights> {
        self.planar.as_ref()
    }

    /// Returns a copy with the planar restriction against `basis` attached.
    pub fn restricted_to(&self, basis: &PlaneBasis) -> Result<Self> {
        if basis.dim() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "plane dimension {} does not match weights dimension {}",
                basis.dim(),
                self.dim()
            )));
        }
        Ok(Self {
            weights: self.weights.clone(),
            planar: Some(planar_restriction(&self.weights, basis)),
        })
    }

    /// `sum_j (dz_j/dtheta) e^{z_j}` at `theta`; requires the planar form.
    pub fn criterion_sum(&self, theta: f64) -> Result<f64> {
        let planar = self.planar.as_ref().ok_or_else(|| {
            Error::InvalidParameter("criterion_sum requires the planar form".into())
        })?;
        Ok(criterion_sum(planar, theta))
    }
}

/// Planar norms `||w_par||` and angles `atan2(w.n2, w.n1)` of each weight
/// against a basis.
pub fn planar_restriction(weights: &[VectorD], basis: &PlaneBasis) -> PlanarWeights {
    let mut norms = Vec::with_capacity(weights.len());
    let mut angles = Vec::with_capacity(weights.len());
    for w in weights {
        let (a, b) = basis.coords(w);
        norms.push(a.hypot(b));
        angles.push(wrap_2pi(b.atan2(a)));
    }
    PlanarWeights { norms, angles }
}

/// The criterion sum `sum_j (dz_j/dtheta) e^{z_j}` with
/// `z_j = rho_j cos(theta - phi_j)`, i.e.
/// `-sum_j rho_j sin(theta - phi_j) e^{rho_j cos(theta - phi_j)}`.
///
/// Only the zero set carries meaning; the sign follows the derivative of
/// the class softmax along increasing `theta`.
pub fn criterion_sum(planar: &PlanarWeights, theta: f64) -> f64 {
    let mut acc = 0.0;
    for (&rho, &phi) in planar.norms.iter().zip(&planar.angles) {
        acc -= rho * (theta - phi).sin() * (rho * (theta - phi).cos()).exp();
    }
    acc
}

/// Planar criterion residual `|criterion_sum|` of arbitrary weights
/// restricted to an arbitrary plane.
pub fn plane_criterion_residual(weights: &[VectorD], basis: &PlaneBasis, theta: f64) -> f64 {
    criterion_sum(&planar_restriction(weights, basis), theta).abs()
}

/// Result of evaluating the criterion sum at each claimed root
/// `x_r = 2*pi*r/n`.
#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub max_abs_residual: f64,
    pub passes: bool,
}

/// Checks that `sum_k sin(x - 2k*pi/n) e^{cos(x - 2k*pi/n)} = 0` at every
/// `x_r = 2r*pi/n`, `r < n`.
pub fn verify_lemma2(n: usize, tol: f64) -> Result<LemmaReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "root check needs n >= 2, got {n}"
        )));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut max_abs = 0.0f64;
    for r in 0..n {
        let x = TWO_PI * r as f64 / n as f64;
        let mut sum = 0.0;
        for k in 0..n {
            let t = x - TWO_PI * k as f64 / n as f64;
            sum += t.sin() * t.cos().exp();
        }
        max_abs = max_abs.max(sum.abs());
    }
    Ok(LemmaReport {
        max_abs_residual: max_abs,
        passes: max_abs <= tol,
    })
}

/// `sum_{j=0}^{n-1} sin(j*pi/n) e^{cos(j*pi/n)}`, the criterion value of the
/// half-spaced counterexample layout at its reference direction. Strictly
/// positive for every `n >= 3`, which is what makes the arbitrary-layout
/// assumption refutable.
pub fn refutability_value(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidClassCount(n));
    }
    let mut sum = 0.0;
    for j in 0..n {
        let t = PI * j as f64 / n as f64;
        sum += t.sin() * t.cos().exp();
    }
    Ok(sum)
}

/// Angular sweep of logits and softmax outputs over [0, 2*pi).
#[derive(Clone, Debug)]
pub struct SweepResult {
    thetas: Vec<f64>,
    logits: Matrix,
    softmax: Matrix,
    winner: Vec<usize>,
}

impl SweepResult {
    /// Sampled angles in radians.
    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// Sample count.
    pub fn samples(&self) -> usize {
        self.thetas.len()
    }

    pub fn class_count(&self) -> usize {
        self.logits.cols()
    }

    /// `z_j(theta_t)` as row `t`, column `j`.
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    /// `S_j(theta_t)` as row `t`, column `j`.
    pub fn softmax(&self) -> &Matrix {
        &self.softmax
    }

    /// Argmax class per sample; ties resolve to the smaller index.
    pub fn winner(&self) -> &[usize] {
        &self.winner
    }

    /// CSV with header `theta_deg,z_0..z_{n-1},s_0..s_{n-1},winner`; angles
    /// in degrees with 6 decimal places.
    pub fn to_csv(&self) -> String {
        let n = self.class_count();
        let mut out = String::from("theta_deg");
        for j in 0..n {
            out.push_str(&format!(",z_{j}"));
        }
        for j in 0..n {
            out.push_str(&format!(",s_{j}"));
        }
        out.push_str(",winner\n");
        for t in 0..self.samples() {
            out.push_str(&format!("{:.6}", self.thetas[t].to_degrees()));
            for j in 0..n {
                out.push_str(&format!(",{}", self.logits.get(t, j)));
            }
            for j in 0..n {
                out.push_str(&format!(",{}", self.softmax.get(t, j)));
            }
            out.push_str(&format!(",{}\n", self.winner[t]));
        }
        out
    }
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        let e = (v - m).exp();
        *o = e;
        total += e;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Sweeps unit embeddings `rotate_in_plane(basis, theta)` over [0, 2*pi) and
/// records `z_j = sigma * (w_j . e)`, the per-sample softmax, and the
/// winning class.
///
/// `resolution_deg` must lie in (0, 1]; `sigma` must be positive.
pub fn sweep(
    ws: &WeightSet,
    basis: &PlaneBasis,
    resolution_deg: f64,
    sigma: f64,
) -> Result<SweepResult> {
    if !(resolution_deg > 0.0 && resolution_deg <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "resolution must lie in (0, 1] degrees, got {resolution_deg}"
        )));
    }
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if basis.dim() != ws.dim() {
        return Err(Error::InvalidParameter(format!(
            "basis dimension {} does not match weights dimension {}",
            basis.dim(),
            ws.dim()
        )));
    }
    let planar = planar_restriction(&ws.weights, basis);
    let samples = (360.0 / resolution_deg).round() as usize;
    let step = TWO_PI / samples as f64;
    let n = ws.class_count();

    let rows = par::map_indexed(samples, 8 * n, |t| {
        let theta = step * t as f64;
        let mut z = vec![0.0; n];
        for j in 0..n {
            z[j] = sigma * planar.norms[j] * (theta - planar.angles[j]).cos();
        }
        let mut s = vec![0.0; n];
        softmax_into(&z, &mut s);
        let winner = crate::ops::argmax(&z);
        (z, s, winner)
    });

    let mut logits = Matrix::zeros(samples, n);
    let mut softmax = Matrix::zeros(samples, n);
    let mut winner = Vec::with_capacity(samples);
    let mut thetas = Vec::with_capacity(samples);
    for (t, (z, s, w)) in rows.into_iter().enumerate() {
        logits.row_mut(t).copy_from_slice(&z);
        softmax.row_mut(t).copy_from_slice(&s);
        winner.push(w);
        thetas.push(step * t as f64);
    }
    Ok(SweepResult {
        thetas,
        logits,
        softmax,
        winner,
    })
}

/// Locates the extrema of values sampled uniformly over [0, 2*pi).
///
/// Sign changes of the cyclic forward difference bracket each extremum; the
/// bracket is then narrowed by bisection on `derivative` when one is given,
/// or by a quadratic fit through the three bracketing samples otherwise.
/// Angles come back sorted in [0, 2*pi).
pub fn find_extrema(values: &[f64], derivative: Option<&dyn Fn(f64) -> f64>) -> Result<Vec<f64>> {
    let t = values.len();
    if t < 8 {
        return Err(Error::InvalidParameter(format!(
            "grid of {t} samples is too coarse"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "sampled values must be finite".into(),
        ));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-14 {
        return Err(Error::NoExtremumFound);
    }
    let h = TWO_PI / t as f64;
    let refine_tol = REFINE_TOL_DEG.to_radians();

    let mut out = Vec::new();
    for i in 0..t {
        let prev = values[(i + t - 1) % t];
        let here = values[i];
        let next = values[(i + 1) % t];
        let gm = here - prev;
        let gp = next - here;
        let bracketed = (gm > 0.0 && gp < 0.0) || (gm < 0.0 && gp > 0.0);
        if !bracketed {
            continue;
        }
        let a = (i as f64 - 1.0) * h;
        let b = (i as f64 + 1.0) * h;
        let angle = match derivative {
            Some(df) => bisect_root(df, a, b, refine_tol).unwrap_or(i as f64 * h),
            None => quadratic_vertex(i as f64 * h, h, prev, here, next),
        };
        out.push(wrap_2pi(angle));
    }
    if out.is_empty() {
        return Err(Error::NoExtremumFound);
    }
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(out)
}

/// Bisection on a bracketed sign change of `df`. Returns `None` if the
/// endpoints do not actually bracket a sign change.
fn bisect_root(df: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = df(a);
    let fb = df(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let fm = df(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

/// Vertex of the parabola through `(c-h, prev)`, `(c, here)`, `(c+h, next)`.
fn quadratic_vertex(c: f64, h: f64, prev: f64, here: f64, next: f64) -> f64 {
    let denom = prev - 2.0 * here + next;
    if denom.abs() < 1e-300 {
        return c;
    }
    c + 0.5 * h * (prev - next) / denom
}

/// Where one class's logit and softmax curves peak, and how far apart the
/// peaks are.
#[derive(Clone, Debug)]
pub struct ClassDivergence {
    pub class: usize,
    pub dot_extremum_deg: f64,
    pub softmax_extremum_deg: f64,
    pub divergence_deg: f64,
}

#[derive(Clone, Debug)]
pub struct DivergenceReport {
    pub classes: Vec<ClassDivergence>,
}

impl DivergenceReport {
    pub fn max_divergence_deg(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.divergence_deg)
            .fold(0.0, f64::max)
    }
}

/// Measures, per class, the angular distance between the peak of the raw
/// logit curve and the peak of the softmax curve, in degrees wrapped to
/// [0, 180].
///
/// The softmax peak (its global maximum over the sweep) is paired with the
/// nearest logit maximum of the same class; for a cosine logit curve that
/// maximum is unique.
pub fn extremum_divergence(
    ws: &WeightSet,
    basis: &PlaneBasis,
    sigma: f64,
) -> Result<DivergenceReport> {
    if sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if basis.dim() != ws.dim() {
        return Err(Error::InvalidParameter(format!(
            "basis dimension {} does not match weights dimension {}",
            basis.dim(),
            ws.dim()
        )));
    }
    let planar = planar_restriction(&ws.weights, basis);
    let n = planar.len();
    let samples = (360.0 / DEFAULT_RESOLUTION_DEG).round() as usize;
    let step = TWO_PI / samples as f64;

    let z_at = |theta: f64, j: usize| sigma * planar.norms[j] * (theta - planar.angles[j]).cos();
    let dz_at = |theta: f64, j: usize| -sigma * planar.norms[j] * (theta - planar.angles[j]).sin();
    // S_i and dS_i/dtheta from the planar closed form, stabilized by max
    // subtraction.
    let softmax_at = |theta: f64| {
        let z: Vec<f64> = (0..n).map(|j| z_at(theta, j)).collect();
        let mut s = vec![0.0; n];
        softmax_into(&z, &mut s);
        s
    };
    let ds_at = |theta: f64, i: usize| {
        let s = softmax_at(theta);
        let mean_dz: f64 = (0..n).map(|j| s[j] * dz_at(theta, j)).sum();
        s[i] * (dz_at(theta, i) - mean_dz)
    };

    let classes = par::map_indexed(n, 64 * samples, |i| -> Result<ClassDivergence> {
        let z_vals: Vec<f64> = (0..samples).map(|t| z_at(step * t as f64, i)).collect();
        let dz = |theta: f64| dz_at(theta, i);
        let z_extrema = find_extrema(&z_vals, Some(&dz))?;
        let dot_maxima: Vec<f64> = {
            // classify: a maximum beats the curve midpoint
            let mid = 0.5 * (z_vals.iter().cloned().fold(f64::INFINITY, f64::min)
                + z_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            z_extrema
                .iter()
                .cloned()
                .filter(|&a| z_at(a, i) > mid)
                .collect()
        };
        if dot_maxima.is_empty() {
            return Err(Error::NoExtremumFound);
        }

        let s_vals: Vec<f64> = (0..samples).map(|t| softmax_at(step * t as f64)[i]).collect();
        let ds = |theta: f64| ds_at(theta, i);
        let s_extrema = find_extrema(&s_vals, Some(&ds))?;
        let s_peak = s_extrema
            .iter()
            .cloned()
            .max_by(|&a, &b| softmax_at(a)[i].partial_cmp(&softmax_at(b)[i]).unwrap())
            .unwrap();

        // nearest dot maximum under wrap-around distance; ties toward the
        // smaller angle (max_by keeps the later of equals, so scan manually)
        let mut dot_peak = dot_maxima[0];
        let mut best = f64::INFINITY;
        for &cand in &dot_maxima {
            let dist = wrap_deg_180((s_peak - cand).to_degrees());
            if dist < best || (dist == best && cand < dot_peak) {
                best = dist;
                dot_peak = cand;
            }
        }
        Ok(ClassDivergence {
            class: i,
            dot_extremum_deg: dot_peak.to_degrees(),
            softmax_extremum_deg: s_peak.to_degrees(),
            divergence_deg: wrap_deg_180((s_peak - dot_peak).to_degrees()),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    Ok(DivergenceReport { classes })
}

/// Validates the criterion at `theta = phi_i` on an off-plane analysis
/// plane through `w_i`: projects every layout weight onto the plane spanned
/// by `w_i` and the orthonormalized `plane_seed`, evaluates the criterion
/// sum there, and returns its absolute value.
///
/// Fails with `DegenerateInput` when the seed is parallel to `w_i`.
pub fn astride_cancellation_check(
    layout: &SymmetricLayout,
    class: usize,
    plane_seed: &VectorD,
) -> Result<f64> {
    if class >= layout.class_count() {
        return Err(Error::InvalidParameter(format!(
            "class {class} out of range for {} classes",
            layout.class_count()
        )));
    }
    let w_i = layout.weight(class);
    let plane = gram_schmidt(w_i, plane_seed)?;
    let planar = planar_restriction(layout.weights(), &plane);
    let (a, b) = plane.coords(w_i);
    let theta_i = b.atan2(a);
    Ok(criterion_sum(&planar, theta_i).abs())
}
