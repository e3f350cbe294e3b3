//! Comparison heads: plain fully-connected, additive angular margin, and
//! multiplicative angular margin with softmax annealing.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ops::{column_sums, matmul_nn, matmul_nt, matmul_tn, Matrix};
use crate::vector::dot;

use super::normalize_rows;

/// Plain fully-connected head: `logits = x W^T + bias`.
#[derive(Clone, Debug)]
pub struct FcHead {
    w: Matrix,
    bias: Vec<f64>,
}

impl FcHead {
    pub fn new(w: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != w.rows() {
            return Err(Error::InvalidParameter(format!(
                "bias length {} does not match {} classes",
                bias.len(),
                w.rows()
            )));
        }
        Ok(Self { w, bias })
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn class_count(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::InvalidParameter(format!(
                "input width {} does not match head dimension {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut logits = matmul_nt(x, &self.w);
        crate::ops::add_bias_rows(&mut logits, &self.bias);
        Ok(logits)
    }

    pub fn backward(&self, x: &Matrix, upstream: &Matrix) -> Result<(Matrix, Vec<f64>, Matrix)> {
        if upstream.rows() != x.rows() || upstream.cols() != self.class_count() {
            return Err(Error::InvalidParameter("upstream shape mismatch".into()));
        }
        let d_w = matmul_tn(upstream, x);
        let d_bias = column_sums(upstream);
        let d_x = matmul_nn(upstream, &self.w);
        Ok((d_w, d_bias, d_x))
    }
}

/// Shared cosine machinery of the margin heads: normalized weight rows
/// against normalized input rows.
struct CosineBatch {
    x_hat: Matrix,
    x_norms: Vec<f64>,
    w_hat: Matrix,
    w_norms: Vec<f64>,
    /// `cos(theta)` entries, clamped into [-1, 1].
    cos: Matrix,
}

fn cosine_batch(w: &Matrix, x: &Matrix) -> Result<CosineBatch> {
    if x.cols() != w.cols() {
        return Err(Error::InvalidParameter(format!(
            "input width {} does not match head dimension {}",
            x.cols(),
            w.cols()
        )));
    }
    let (x_hat, x_norms) = normalize_rows(x)?;
    let mut w_norms = Vec::with_capacity(w.rows());
    let mut w_hat = w.clone();
    for i in 0..w.rows() {
        let norm = dot(w.row(i), w.row(i)).sqrt();
        if !(norm > super::INPUT_NORM_EPS) {
            return Err(Error::DegenerateInput(format!(
                "weight row {i} has zero norm"
            )));
        }
        for v in w_hat.row_mut(i) {
            *v /= norm;
        }
        w_norms.push(norm);
    }
    let mut cos = matmul_nt(&x_hat, &w_hat);
    for v in cos.data_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(CosineBatch {
        x_hat,
        x_norms,
        w_hat,
        w_norms,
        cos,
    })
}

/// Pushes a gradient on the cosine matrix back through both row
/// normalizations, yielding gradients on the raw weights and inputs.
fn cosine_backward(batch: &CosineBatch, d_cos: &Matrix) -> (Matrix, Matrix) {
    let mut d_w = matmul_tn(d_cos, &batch.x_hat);
    for j in 0..d_w.rows() {
        let wj = batch.w_hat.row(j);
        let along = dot(wj, d_w.row(j));
        let norm = batch.w_norms[j];
        let row = d_w.row_mut(j);
        for (v, wv) in row.iter_mut().zip(wj) {
            *v = (*v - along * wv) / norm;
        }
    }
    let mut d_x = matmul_nn(d_cos, &batch.w_hat);
    for b in 0..d_x.rows() {
        let xb = batch.x_hat.row(b);
        let along = dot(xb, d_x.row(b));
        let norm = batch.x_norms[b];
        let row = d_x.row_mut(b);
        for (v, xv) in row.iter_mut().zip(xb) {
            *v = (*v - along * xv) / norm;
        }
    }
    (d_w, d_x)
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::InvalidParameter(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Additive angular margin head: the training-time target logit is
/// `sigma * cos(theta_y + m)`; other logits (and all logits at scoring
/// time) are `sigma * cos(theta_j)`.
///
/// When `theta_y + m` would exceed pi the margin is dropped for that sample
/// ("easy margin"), keeping the logit monotone in the angle.
#[derive(Clone, Debug)]
pub struct ArcFaceHead {
    w: Matrix,
    sigma: f64,
    margin: f64,
}

impl ArcFaceHead {
    pub fn new(w: Matrix, sigma: f64, margin: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(0.0..=PI).contains(&margin) {
            return Err(Error::InvalidParameter(format!(
                "additive margin must lie in [0, pi], got {margin}"
            )));
        }
        Ok(Self { w, sigma, margin })
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn class_count(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix, labels: Option<&[usize]>) -> Result<Matrix> {
        let batch = cosine_batch(&self.w, x)?;
        let mut logits = batch.cos.clone();
        if let Some(labels) = labels {
            check_labels(labels, x.rows(), self.class_count())?;
            let (cos_m, sin_m) = (self.margin.cos(), self.margin.sin());
            for (b, &y) in labels.iter().enumerate() {
                let c = logits.get(b, y);
                if c.acos() + self.margin <= PI {
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    logits.set(b, y, c * cos_m - s * sin_m);
                }
            }
        }
        for v in logits.data_mut() {
            *v *= self.sigma;
        }
        Ok(logits)
    }

    pub fn backward(
        &self,
        x: &Matrix,
        labels: Option<&[usize]>,
        upstream: &Matrix,
    ) -> Result<(Matrix, Matrix)> {
        if upstream.rows() != x.rows() || upstream.cols() != self.class_count() {
            return Err(Error::InvalidParameter("upstream shape mismatch".into()));
        }
        let batch = cosine_batch(&self.w, x)?;
        let mut d_cos = upstream.clone();
        for v in d_cos.data_mut() {
            *v *= self.sigma;
        }
        if let Some(labels) = labels {
            check_labels(labels, x.rows(), self.class_count())?;
            let (cos_m, sin_m) = (self.margin.cos(), self.margin.sin());
            for (b, &y) in labels.iter().enumerate() {
                let c = batch.cos.get(b, y);
                if c.acos() + self.margin <= PI {
                    // d/dc [c cos m - sqrt(1-c^2) sin m]
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    let factor = if sin_m == 0.0 {
                        cos_m
                    } else if s > 0.0 {
                        cos_m + c * sin_m / s
                    } else {
                        f64::INFINITY
                    };
                    d_cos.set(b, y, d_cos.get(b, y) * factor);
                }
            }
        }
        let (d_w, d_x) = cosine_backward(&batch, &d_cos);
        Ok((d_w, d_x))
    }
}

/// Piecewise angular function `psi(theta) = (-1)^k cos(m theta) - 2k` on
/// `theta in [k pi/m, (k+1) pi/m]`, together with its derivative in
/// `c = cos(theta)`. The derivative limit at the interval ends is `m^2`.
fn psi(c: f64, m: u32) -> (f64, f64) {
    let c = c.clamp(-1.0, 1.0);
    let mf = m as f64;
    let theta = c.acos();
    let k = (((theta * mf) / PI).floor() as u32).min(m - 1);
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let value = sign * (mf * theta).cos() - 2.0 * k as f64;
    let s = (1.0 - c * c).max(0.0).sqrt();
    let dvalue = if s > 1e-12 {
        sign * mf * (mf * theta).sin() / s
    } else {
        mf * mf
    };
    (value, dvalue)
}

/// Multiplicative angular margin head with annealed softmax supervision.
///
/// Scoring logits are `||x|| cos(theta_j)` (the input norm is preserved;
/// the hypersphere radius convention is `sigma = 1`). During training the
/// target logit blends the bent angular function against the plain cosine:
/// `||x|| (lambda cos(theta) + psi(theta)) / (1 + lambda)`.
#[derive(Clone, Debug)]
pub struct SphereFaceHead {
    w: Matrix,
    margin: u32,
    lambda: f64,
}

impl SphereFaceHead {
    pub fn new(w: Matrix, margin: u32) -> Result<Self> {
        if margin == 0 {
            return Err(Error::InvalidParameter(
                "multiplicative margin must be a positive integer".into(),
            ));
        }
        Ok(Self {
            w,
            margin,
            lambda: 0.0,
        })
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn margin(&self) -> u32 {
        self.margin
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Sets the annealing blend used by the next forward/backward pair.
    pub fn set_lambda(&mut self, lambda: f64) {
        assert!(lambda >= 0.0, "lambda must be non-negative");
        self.lambda = lambda;
    }

    pub fn class_count(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn forward(&self, x: &Matrix, labels: Option<&[usize]>) -> Result<Matrix> {
        let batch = cosine_batch(&self.w, x)?;
        let mut logits = batch.cos.clone();
        if let Some(labels) = labels {
            check_labels(labels, x.rows(), self.class_count())?;
            for (b, &y) in labels.iter().enumerate() {
                let c = logits.get(b, y);
                let (value, _) = psi(c, self.margin);
                logits.set(b, y, (self.lambda * c + value) / (1.0 + self.lambda));
            }
        }
        for b in 0..logits.rows() {
            let norm = batch.x_norms[b];
            for v in logits.row_mut(b) {
                *v *= norm;
            }
        }
        Ok(logits)
    }

    pub fn backward(
        &self,
        x: &Matrix,
        labels: Option<&[usize]>,
        upstream: &Matrix,
    ) -> Result<(Matrix, Matrix)> {
        if upstream.rows() != x.rows() || upstream.cols() != self.class_count() {
            return Err(Error::InvalidParameter("upstream shape mismatch".into()));
        }
        let batch = cosine_batch(&self.w, x)?;
        let n = self.class_count();

        // per-entry: logit = r * g(c); collect dL/dc and dL/dr
        let mut d_cos = Matrix::zeros(x.rows(), n);
        let mut d_r = vec![0.0; x.rows()];
        for b in 0..x.rows() {
            let r = batch.x_norms[b];
            let target = labels.map(|l| l[b]);
            for j in 0..n {
                let u = upstream.get(b, j);
                let c = batch.cos.get(b, j);
                let (g, dg_dc) = if Some(j) == target {
                    let (value, dvalue) = psi(c, self.margin);
                    (
                        (self.lambda * c + value) / (1.0 + self.lambda),
                        (self.lambda + dvalue) / (1.0 + self.lambda),
                    )
                } else {
                    (c, 1.0)
                };
                d_cos.set(b, j, u * r * dg_dc);
                d_r[b] += u * g;
            }
        }
        if let Some(labels) = labels {
            check_labels(labels, x.rows(), n)?;
        }

        let (d_w, mut d_x) = cosine_backward(&batch, &d_cos);
        // the preserved input norm adds a radial gradient component
        for b in 0..d_x.rows() {
            let row = d_x.row_mut(b);
            for (v, xv) in row.iter_mut().zip(batch.x_hat.row(b)) {
                *v += d_r[b] * xv;
            }
        }
        Ok((d_w, d_x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        let mut s = seed | 1;
        for v in m.data_mut() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            *v = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        }
        m
    }

    #[test]
    fn fc_identity_and_bias() {
        let head = FcHead::new(
            Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            vec![0.0, 0.0],
        )
        .unwrap();
        let x = Matrix::from_rows(vec![vec![0.0, 1.0]]);
        let logits = head.forward(&x).unwrap();
        assert_eq!(logits.row(0), &[0.0, 1.0]);

        let head = FcHead::new(Matrix::zeros(3, 2), vec![1.0, 2.0, 3.0]).unwrap();
        let x = Matrix::zeros(1, 2);
        let logits = head.forward(&x).unwrap();
        assert_eq!(logits.row(0), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn fc_matches_naive_triple_loop() {
        let w = seeded_matrix(4, 6, 21);
        let bias = vec![0.3, -0.2, 0.05, 1.1];
        let head = FcHead::new(w.clone(), bias.clone()).unwrap();
        let x = seeded_matrix(3, 6, 99);
        let logits = head.forward(&x).unwrap();
        for b in 0..3 {
            for j in 0..4 {
                let mut acc = bias[j];
                for p in 0..6 {
                    acc += x.get(b, p) * w.get(j, p);
                }
                assert!((logits.get(b, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn arcface_zero_margin_reduces_to_scaled_cosine() {
        let w = seeded_matrix(5, 8, 5);
        let head = ArcFaceHead::new(w.clone(), 16.0, 0.0).unwrap();
        let x = seeded_matrix(3, 8, 17);
        let labels = vec![0usize, 3, 4];
        let with_labels = head.forward(&x, Some(&labels)).unwrap();
        let without = head.forward(&x, None).unwrap();
        for (a, b) in with_labels.data().iter().zip(without.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
        // reference: sigma-scaled normalized FC with no bias
        let (x_hat, _) = normalize_rows(&x).unwrap();
        let mut w_hat = w.clone();
        for i in 0..w.rows() {
            let norm = dot(w.row(i), w.row(i)).sqrt();
            for v in w_hat.row_mut(i) {
                *v /= norm;
            }
        }
        let reference = matmul_nt(&x_hat, &w_hat);
        for (a, r) in without.data().iter().zip(reference.data()) {
            assert!((a - 16.0 * r).abs() <= 1e-12);
        }
    }

    #[test]
    fn arcface_aligned_target_logit() {
        // scalar evaluation oracle: theta_y = 0 makes the target logit
        // sigma * cos(m)
        let w = Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, 1.0]]);
        let head = ArcFaceHead::new(w, 64.0, 0.1).unwrap();
        let x = Matrix::from_rows(vec![vec![0.5, 0.0]]);
        let logits = head.forward(&x, Some(&[0])).unwrap();
        let expected = 64.0 * 0.1f64.cos();
        assert!((logits.get(0, 0) - expected).abs() < 1e-9);
        assert!((expected - 63.680).abs() < 1e-3);
    }

    #[test]
    fn arcface_margin_only_penalizes() {
        let w = seeded_matrix(6, 5, 77);
        let with_margin = ArcFaceHead::new(w.clone(), 8.0, 0.25).unwrap();
        let plain = ArcFaceHead::new(w, 8.0, 0.0).unwrap();
        let x = seeded_matrix(4, 5, 31);
        let labels = vec![1usize, 2, 556 % 6, 0];
        let a = with_margin.forward(&x, Some(&labels)).unwrap();
        let b = plain.forward(&x, Some(&labels)).unwrap();
        for (bi, &y) in labels.iter().enumerate() {
            assert!(a.get(bi, y) <= b.get(bi, y) + 1e-12);
        }
    }

    #[test]
    fn sphereface_margin_one_is_plain_cosine() {
        let w = seeded_matrix(4, 6, 13);
        let head = SphereFaceHead::new(w, 1).unwrap();
        let x = seeded_matrix(2, 6, 19);
        let labels = vec![2usize, 0];
        let a = head.forward(&x, Some(&labels)).unwrap();
        let b = head.forward(&x, None).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn sphereface_preserves_input_norm() {
        let w = seeded_matrix(4, 6, 13);
        let head = SphereFaceHead::new(w, 4).unwrap();
        let x = seeded_matrix(2, 6, 19);
        let scaled = Matrix::from_flat(2, 6, x.data().iter().map(|v| 3.0 * v).collect());
        let a = head.forward(&x, None).unwrap();
        let b = head.forward(&scaled, None).unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((3.0 * u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn psi_values_and_continuity() {
        // piecewise evaluation oracle for m = 4
        let (v, _) = psi(1.0, 4);
        assert!((v - 1.0).abs() <= 1e-15);

        let theta = PI / 3.0;
        let k = ((theta * 4.0 / PI).floor()) as i32; // k = 1
        let oracle = (-1.0f64).powi(k) * (4.0 * theta).cos() - 2.0 * k as f64;
        let (v, _) = psi(theta.cos(), 4);
        assert!((v - oracle).abs() <= 1e-12);

        for m in [2u32, 3, 4, 5] {
            for k in 1..m {
                let boundary = k as f64 * PI / m as f64;
                // evaluate both segment formulas at the boundary angle
                let left = (-1.0f64).powi(k as i32 - 1) * (m as f64 * boundary).cos()
                    - 2.0 * (k as f64 - 1.0);
                let right =
                    (-1.0f64).powi(k as i32) * (m as f64 * boundary).cos() - 2.0 * k as f64;
                assert!(
                    (left - right).abs() <= 1e-12,
                    "m = {m}, k = {k}: {left} vs {right}"
                );
            }
        }
    }

    #[test]
    fn margin_heads_reject_bad_labels() {
        let head = ArcFaceHead::new(seeded_matrix(3, 4, 1), 8.0, 0.1).unwrap();
        let x = seeded_matrix(2, 4, 2);
        assert!(head.forward(&x, Some(&[0, 3])).is_err());
        assert!(head.forward(&x, Some(&[0])).is_err());
    }
}
