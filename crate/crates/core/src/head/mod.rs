//! Classifier heads with analytic forward and backward passes.
//!
//! Four heads share one calling convention: `forward(x, labels)` maps a
//! batch of feature rows to logits, where `labels` enables the training-time
//! margin path of the angular-margin heads and is ignored by the others;
//! `backward` returns exact parameter gradients plus the gradient with
//! respect to the input batch.

mod comparison;
pub mod loss;
mod symmetric;

pub use comparison::{ArcFaceHead, FcHead, SphereFaceHead};
pub use symmetric::SymmetricalHead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops::Matrix;
use crate::vector::VectorD;

/// Input rows with norm at or below this are rejected rather than clamped;
/// silently clamping would mask data bugs upstream.
pub const INPUT_NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Symmetric,
    Fc,
    ArcFace,
    SphereFace,
}

impl HeadKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeadKind::Symmetric => "symmetric",
            HeadKind::Fc => "fc",
            HeadKind::ArcFace => "arcface",
            HeadKind::SphereFace => "sphereface",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(HeadKind::Symmetric),
            "fc" => Ok(HeadKind::Fc),
            "arcface" => Ok(HeadKind::ArcFace),
            "sphereface" => Ok(HeadKind::SphereFace),
            other => Err(Error::InvalidParameter(format!(
                "unknown head kind '{other}' (expected symmetric|fc|arcface|sphereface)"
            ))),
        }
    }

    fn code(&self) -> u32 {
        match self {
            HeadKind::Symmetric => 0,
            HeadKind::Fc => 1,
            HeadKind::ArcFace => 2,
            HeadKind::SphereFace => 3,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(HeadKind::Symmetric),
            1 => Ok(HeadKind::Fc),
            2 => Ok(HeadKind::ArcFace),
            3 => Ok(HeadKind::SphereFace),
            other => Err(Error::FormatError(format!("unknown head kind code {other}"))),
        }
    }
}

/// Head kind plus its hyperparameters. `sigma` scales cosine logits
/// (ignored by FC and by the norm-preserving multiplicative-margin head);
/// `margin` is the additive angle for ArcFace and the integer multiplier
/// for SphereFace.
#[derive(Clone, Copy, Debug)]
pub struct HeadSpec {
    pub kind: HeadKind,
    pub sigma: f64,
    pub margin: f64,
}

impl HeadSpec {
    pub fn symmetric(sigma: f64) -> Self {
        Self {
            kind: HeadKind::Symmetric,
            sigma,
            margin: 0.0,
        }
    }

    pub fn fc() -> Self {
        Self {
            kind: HeadKind::Fc,
            sigma: 1.0,
            margin: 0.0,
        }
    }

    pub fn arcface(sigma: f64, margin: f64) -> Self {
        Self {
            kind: HeadKind::ArcFace,
            sigma,
            margin,
        }
    }

    pub fn sphereface(margin: u32) -> Self {
        Self {
            kind: HeadKind::SphereFace,
            sigma: 1.0,
            margin: margin as f64,
        }
    }
}

/// Parameter gradients of one head. Shapes mirror the parameters exactly.
#[derive(Clone, Debug)]
pub enum HeadGradients {
    Symmetric { d_v1: Vec<f64>, d_v2: Vec<f64> },
    Fc { d_w: Matrix, d_bias: Vec<f64> },
    Margin { d_w: Matrix },
}

#[derive(Clone, Debug)]
pub enum Head {
    Symmetric(SymmetricalHead),
    Fc(FcHead),
    ArcFace(ArcFaceHead),
    SphereFace(SphereFaceHead),
}

const INIT_ATTEMPTS: usize = 100;

/// Deterministic initialization per seed. The symmetric head draws `v1, v2`
/// uniformly from `U(0, 1)^d` and re-draws (up to 100 attempts) until the
/// pair orthonormalizes; the matrix heads draw `W` from
/// `U(-1/sqrt(d), 1/sqrt(d))`.
pub fn init_head(spec: &HeadSpec, n: usize, d: usize, seed: u64) -> Result<Head> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec.kind {
        HeadKind::Symmetric => {
            if n < 3 {
                return Err(Error::InvalidClassCount(n));
            }
            for _ in 0..INIT_ATTEMPTS {
                let v1 = VectorD::new((0..d).map(|_| rng.gen_range(0.0..1.0)).collect())?;
                let v2 = VectorD::new((0..d).map(|_| rng.gen_range(0.0..1.0)).collect())?;
                if let Ok(head) = SymmetricalHead::new(v1, v2, spec.sigma, n) {
                    return Ok(Head::Symmetric(head));
                }
            }
            Err(Error::DegenerateInput(format!(
                "failed to draw a non-degenerate basis in {INIT_ATTEMPTS} attempts"
            )))
        }
        HeadKind::Fc => Ok(Head::Fc(FcHead::new(uniform_matrix(&mut rng, n, d), vec![0.0; n])?)),
        HeadKind::ArcFace => Ok(Head::ArcFace(ArcFaceHead::new(
            uniform_matrix(&mut rng, n, d),
            spec.sigma,
            spec.margin,
        )?)),
        HeadKind::SphereFace => {
            let m = spec.margin;
            if m < 1.0 || m.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "multiplicative margin must be a positive integer, got {m}"
                )));
            }
            Ok(Head::SphereFace(SphereFaceHead::new(
                uniform_matrix(&mut rng, n, d),
                m as u32,
            )?))
        }
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let bound = 1.0 / (d as f64).sqrt();
    let mut w = Matrix::zeros(n, d);
    for v in w.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    w
}

impl Head {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Symmetric(_) => HeadKind::Symmetric,
            Head::Fc(_) => HeadKind::Fc,
            Head::ArcFace(_) => HeadKind::ArcFace,
            Head::SphereFace(_) => HeadKind::SphereFace,
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            Head::Symmetric(h) => h.class_count(),
            Head::Fc(h) => h.class_count(),
            Head::ArcFace(h) => h.class_count(),
            Head::SphereFace(h) => h.class_count(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Head::Symmetric(h) => h.input_dim(),
            Head::Fc(h) => h.input_dim(),
            Head::ArcFace(h) => h.input_dim(),
            Head::SphereFace(h) => h.input_dim(),
        }
    }

    /// Training forward when `labels` is given (margin heads bend the
    /// target logit), plain scoring forward otherwise.
    pub fn forward(&self, x: &Matrix, labels: Option<&[usize]>) -> Result<Matrix> {
        match self {
            Head::Symmetric(h) => h.forward(x),
            Head::Fc(h) => h.forward(x),
            Head::ArcFace(h) => h.forward(x, labels),
            Head::SphereFace(h) => h.forward(x, labels),
        }
    }

    /// Gradients of `sum(upstream * logits)` with respect to the parameters
    /// and the input batch. `labels` must match the corresponding forward.
    pub fn backward(
        &self,
        x: &Matrix,
        labels: Option<&[usize]>,
        upstream: &Matrix,
    ) -> Result<(HeadGradients, Matrix)> {
        match self {
            Head::Symmetric(h) => {
                let (d_v1, d_v2, d_x) = h.backward(x, upstream)?;
                Ok((HeadGradients::Symmetric { d_v1, d_v2 }, d_x))
            }
            Head::Fc(h) => {
                let (d_w, d_bias, d_x) = h.backward(x, upstream)?;
                Ok((HeadGradients::Fc { d_w, d_bias }, d_x))
            }
            Head::ArcFace(h) => {
                let (d_w, d_x) = h.backward(x, labels, upstream)?;
                Ok((HeadGradients::Margin { d_w }, d_x))
            }
            Head::SphereFace(h) => {
                let (d_w, d_x) = h.backward(x, labels, upstream)?;
                Ok((HeadGradients::Margin { d_w }, d_x))
            }
        }
    }

    /// Updates the annealing blend of the multiplicative-margin head;
    /// no-op for the others.
    pub fn set_anneal_lambda(&mut self, lambda: f64) {
        if let Head::SphereFace(h) = self {
            h.set_lambda(lambda);
        }
    }

    pub fn anneal_lambda(&self) -> Option<f64> {
        match self {
            Head::SphereFace(h) => Some(h.lambda()),
            _ => None,
        }
    }

    /// Walks `(parameter, gradient)` slice pairs in a fixed order so an
    /// optimizer can keep velocity state positionally.
    pub fn visit_params_mut(
        &mut self,
        grads: &HeadGradients,
        f: &mut dyn FnMut(&mut [f64], &[f64]),
    ) {
        match (self, grads) {
            (Head::Symmetric(h), HeadGradients::Symmetric { d_v1, d_v2 }) => {
                h.visit_params_mut(d_v1, d_v2, f);
            }
            (Head::Fc(h), HeadGradients::Fc { d_w, d_bias }) => {
                f(h.w_mut().data_mut(), d_w.data());
                f(h.bias_mut(), d_bias);
            }
            (Head::ArcFace(h), HeadGradients::Margin { d_w }) => {
                f(h.w_mut().data_mut(), d_w.data());
            }
            (Head::SphereFace(h), HeadGradients::Margin { d_w }) => {
                f(h.w_mut().data_mut(), d_w.data());
            }
            _ => panic!("gradient variant does not match head kind"),
        }
    }

    /// Parameter tensor sizes, in `visit_params_mut` order.
    pub fn param_sizes(&self) -> Vec<usize> {
        let (n, d) = (self.class_count(), self.input_dim());
        match self {
            Head::Symmetric(_) => vec![d, d],
            Head::Fc(_) => vec![n * d, n],
            Head::ArcFace(_) | Head::SphereFace(_) => vec![n * d],
        }
    }

    /// Serializes the trainable parameters: a 16-byte header (magic, kind,
    /// n, d as little-endian u32) followed by the parameters as f64
    /// little-endian, in `visit_params_mut` order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.kind().code().to_le_bytes());
        out.extend_from_slice(&(self.class_count() as u32).to_le_bytes());
        out.extend_from_slice(&(self.input_dim() as u32).to_le_bytes());
        let mut push = |s: &[f64]| {
            for v in s {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        match self {
            Head::Symmetric(h) => {
                push(h.v1().as_slice());
                push(h.v2().as_slice());
            }
            Head::Fc(h) => {
                push(h.w().data());
                push(h.bias());
            }
            Head::ArcFace(h) => push(h.w().data()),
            Head::SphereFace(h) => push(h.w().data()),
        }
        out
    }

    /// Rebuilds a head from [`Head::to_bytes`] output. The
    /// hyperparameters are not part of the checkpoint and must be supplied.
    pub fn from_bytes(bytes: &[u8], sigma: f64, margin: f64) -> Result<Head> {
        if bytes.len() < 16 {
            return Err(Error::FormatError("checkpoint shorter than header".into()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::FormatError("bad checkpoint magic".into()));
        }
        let kind = HeadKind::from_code(u32::from_le_bytes(bytes[4..8].try_into().unwrap()))?;
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        let expect = match kind {
            HeadKind::Symmetric => 2 * d,
            HeadKind::Fc => n * d + n,
            HeadKind::ArcFace | HeadKind::SphereFace => n * d,
        };
        if body.len() != expect * 8 {
            return Err(Error::FormatError(format!(
                "checkpoint body holds {} values, expected {expect}",
                body.len() / 8
            )));
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        match kind {
            HeadKind::Symmetric => {
                let v1 = VectorD::new(vals[0..d].to_vec())?;
                let v2 = VectorD::new(vals[d..2 * d].to_vec())?;
                Ok(Head::Symmetric(SymmetricalHead::new(v1, v2, sigma, n)?))
            }
            HeadKind::Fc => {
                let w = Matrix::from_flat(n, d, vals[0..n * d].to_vec());
                Ok(Head::Fc(FcHead::new(w, vals[n * d..].to_vec())?))
            }
            HeadKind::ArcFace => {
                let w = Matrix::from_flat(n, d, vals);
                Ok(Head::ArcFace(ArcFaceHead::new(w, sigma, margin)?))
            }
            HeadKind::SphereFace => {
                let w = Matrix::from_flat(n, d, vals);
                if margin < 1.0 || margin.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "multiplicative margin must be a positive integer, got {margin}"
                    )));
                }
                Ok(Head::SphereFace(SphereFaceHead::new(w, margin as u32)?))
            }
        }
    }
}

const MAGIC: &[u8; 4] = b"SYMH";

/// Normalizes each row of `x`, returning the normalized matrix and the row
/// norms. Rows at or below [`INPUT_NORM_EPS`] are an error carrying the row
/// index.
pub(crate) fn normalize_rows(x: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let norm = crate::vector::dot(x.row(i), x.row(i)).sqrt();
        if !(norm > INPUT_NORM_EPS) {
            return Err(Error::ZeroNormInput(i));
        }
        for v in out.row_mut(i) {
            *v /= norm;
        }
        norms.push(norm);
    }
    Ok((out, norms))
}
