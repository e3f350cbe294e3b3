//! The symmetric head: two trainable vectors define a plane, the class
//! weights are fixed rotations of the plane's first basis vector, and the
//! logits are scaled cosines against normalized inputs.

use crate::error::{Error, Result};
use crate::geometry::{build_symmetric_layout, gram_schmidt, PlaneBasis, SymmetricLayout};
use crate::ops::{matmul_nn, matmul_nt, matmul_tn, Matrix};
use crate::vector::{dot, VectorD};

use super::normalize_rows;

/// Classifier head whose `n` unit weight vectors are rotations of
/// `n1 = v1/||v1||` by `2*pi*i/n` inside the plane spanned by `v1` and the
/// orthogonal part of `v2`. Only `v1` and `v2` train; the layout itself is
/// structural.
#[derive(Clone, Debug)]
pub struct SymmetricalHead {
    v1: VectorD,
    v2: VectorD,
    sigma: f64,
    n: usize,
}

impl SymmetricalHead {
    /// `sigma > 0`, `n >= 3`, and `(v1, v2)` must already orthonormalize.
    pub fn new(v1: VectorD, v2: VectorD, sigma: f64, n: usize) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidClassCount(n));
        }
        gram_schmidt(&v1, &v2)?;
        Ok(Self { v1, v2, sigma, n })
    }

    pub fn v1(&self) -> &VectorD {
        &self.v1
    }

    pub fn v2(&self) -> &VectorD {
        &self.v2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn class_count(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.v1.dim()
    }

    /// Current plane basis; fails when training has driven `v1`, `v2`
    /// (numerically) collinear.
    pub fn basis(&self) -> Result<PlaneBasis> {
        gram_schmidt(&self.v1, &self.v2)
    }

    /// Current weight layout, re-validated against every structural
    /// invariant.
    pub fn layout(&self) -> Result<SymmetricLayout> {
        build_symmetric_layout(&self.basis()?, self.n)
    }

    fn weight_matrix(&self) -> Result<Matrix> {
        let layout = self.layout()?;
        let d = self.input_dim();
        let mut w = Matrix::zeros(self.n, d);
        for (i, wv) in layout.weights().iter().enumerate() {
            w.row_mut(i).copy_from_slice(wv.as_slice());
        }
        Ok(w)
    }

    /// `logits[b][i] = sigma * cos(angle(x_b, w_i))`. Every entry lies in
    /// `[-sigma, sigma]`; positive rescaling of any input row leaves the
    /// output unchanged.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::InvalidParameter(format!(
                "input width {} does not match head dimension {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let (x_hat, _) = normalize_rows(x)?;
        let w = self.weight_matrix()?;
        let mut logits = matmul_nt(&x_hat, &w);
        for v in logits.data_mut() {
            *v *= self.sigma;
        }
        Ok(logits)
    }

    /// Exact gradients of `sum(upstream * logits)` with respect to `v1`,
    /// `v2`, and the input batch, differentiated through the input
    /// normalization, the orthonormalization, and the rotations.
    pub fn backward(
        &self,
        x: &Matrix,
        upstream: &Matrix,
    ) -> Result<(Vec<f64>, Vec<f64>, Matrix)> {
        let batch = x.rows();
        let d = self.input_dim();
        if upstream.rows() != batch || upstream.cols() != self.n {
            return Err(Error::InvalidParameter(format!(
                "upstream shape {}x{} does not match {}x{}",
                upstream.rows(),
                upstream.cols(),
                batch,
                self.n
            )));
        }
        let (x_hat, x_norms) = normalize_rows(x)?;
        let w = self.weight_matrix()?;

        // dL/dw_i = sigma * sum_b upstream[b][i] x_hat[b]
        let mut g_w = matmul_tn(upstream, &x_hat);
        for v in g_w.data_mut() {
            *v *= self.sigma;
        }

        // weights are w_i = cos(t_i) n1 + sin(t_i) n2 with fixed angles, so
        // the basis gradients are cosine/sine-weighted sums of the rows
        let step = 2.0 * std::f64::consts::PI / self.n as f64;
        let mut g_n1 = vec![0.0; d];
        let mut g_n2 = vec![0.0; d];
        for i in 0..self.n {
            let (c, s) = ((step * i as f64).cos(), (step * i as f64).sin());
            let row = g_w.row(i);
            for j in 0..d {
                g_n1[j] += c * row[j];
                g_n2[j] += s * row[j];
            }
        }

        // replay the orthonormalization to get its intermediates
        let r1 = self.v1.norm();
        let n1: Vec<f64> = self.v1.as_slice().iter().map(|v| v / r1).collect();
        let v2 = self.v2.as_slice();
        let n1_dot_v2 = dot(&n1, v2);
        let u: Vec<f64> = v2
            .iter()
            .zip(&n1)
            .map(|(v, n)| v - n1_dot_v2 * n)
            .collect();
        let ru = dot(&u, &u).sqrt();
        let n2: Vec<f64> = u.iter().map(|v| v / ru).collect();

        // n2 = u/||u||  =>  dL/du = (g_n2 - (n2.g_n2) n2) / ||u||
        let n2_dot_g = dot(&n2, &g_n2);
        let g_u: Vec<f64> = g_n2
            .iter()
            .zip(&n2)
            .map(|(g, n)| (g - n2_dot_g * n) / ru)
            .collect();

        // u = v2 - (n1.v2) n1 contributes to both v2 and n1
        let n1_dot_gu = dot(&n1, &g_u);
        let d_v2: Vec<f64> = g_u
            .iter()
            .zip(&n1)
            .map(|(g, n)| g - n1_dot_gu * n)
            .collect();
        let g_n1_total: Vec<f64> = (0..d)
            .map(|j| g_n1[j] - n1_dot_gu * v2[j] - n1_dot_v2 * g_u[j])
            .collect();

        // n1 = v1/||v1||
        let n1_dot_g1 = dot(&n1, &g_n1_total);
        let d_v1: Vec<f64> = g_n1_total
            .iter()
            .zip(&n1)
            .map(|(g, n)| (g - n1_dot_g1 * n) / r1)
            .collect();

        // input gradient through the row normalization
        let mut d_x = matmul_nn(upstream, &w);
        for v in d_x.data_mut() {
            *v *= self.sigma;
        }
        for b in 0..batch {
            let xb = x_hat.row(b);
            let hb = d_x.row(b);
            let along = dot(xb, hb);
            let norm = x_norms[b];
            let row = d_x.row_mut(b);
            for j in 0..d {
                row[j] = (row[j] - along * x_hat.get(b, j)) / norm;
            }
        }
        Ok((d_v1, d_v2, d_x))
    }

    pub(super) fn visit_params_mut(
        &mut self,
        d_v1: &[f64],
        d_v2: &[f64],
        f: &mut dyn FnMut(&mut [f64], &[f64]),
    ) {
        let mut v1 = std::mem::replace(&mut self.v1, VectorD::zeros(2))
            .as_slice()
            .to_vec();
        f(&mut v1, d_v1);
        self.v1 = VectorD::from_trusted(v1);
        let mut v2 = std::mem::replace(&mut self.v2, VectorD::zeros(2))
            .as_slice()
            .to_vec();
        f(&mut v2, d_v2);
        self.v2 = VectorD::from_trusted(v2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlaneBasis;

    fn vec_of(c: &[f64]) -> VectorD {
        VectorD::new(c.to_vec()).unwrap()
    }

    fn square_head(sigma: f64) -> SymmetricalHead {
        SymmetricalHead::new(vec_of(&[1.0, 0.0]), vec_of(&[0.0, 1.0]), sigma, 4).unwrap()
    }

    #[test]
    fn aligned_input_maxes_its_own_logit() {
        let head = square_head(8.0);
        let layout = head.layout().unwrap();
        for (i, w) in layout.weights().iter().enumerate() {
            let x = Matrix::from_rows(vec![w.scale(3.5).as_slice().to_vec()]);
            let logits = head.forward(&x).unwrap();
            assert!((logits.get(0, i) - 8.0).abs() < 1e-12);
            let best = crate::ops::argmax(logits.row(0));
            assert_eq!(best, i);
        }
    }

    #[test]
    fn diagonal_input_logits_match_cosine_oracle() {
        // direct cosine oracle against the square layout
        let head = square_head(8.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = Matrix::from_rows(vec![vec![s, s]]);
        let logits = head.forward(&x).unwrap();
        let expected = [8.0 * s, 8.0 * s, -8.0 * s, -8.0 * s];
        for (j, e) in expected.iter().enumerate() {
            assert!((logits.get(0, j) - e).abs() < 1e-12, "logit {j}");
        }
    }

    #[test]
    fn logits_bounded_by_sigma() {
        let head = SymmetricalHead::new(
            vec_of(&[0.3, -0.8, 0.2, 0.5]),
            vec_of(&[1.0, 0.1, -0.4, 0.9]),
            5.0,
            7,
        )
        .unwrap();
        let x = Matrix::from_rows(vec![
            vec![2.0, -1.0, 0.5, 0.3],
            vec![-0.2, 0.9, -1.5, 2.2],
        ]);
        let logits = head.forward(&x).unwrap();
        for v in logits.data() {
            assert!(v.abs() <= 5.0 + 1e-12);
        }
    }

    #[test]
    fn input_rescaling_leaves_logits_unchanged() {
        let head = square_head(4.0);
        let x = Matrix::from_rows(vec![vec![0.4, -1.1]]);
        let x2 = Matrix::from_rows(vec![vec![0.8, -2.2]]);
        let a = head.forward(&x).unwrap();
        let b = head.forward(&x2).unwrap();
        for j in 0..4 {
            assert!((a.get(0, j) - b.get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn v1_rescaling_leaves_logits_unchanged() {
        let v1 = vec_of(&[0.3, 0.4, 0.5]);
        let v2 = vec_of(&[-0.2, 0.8, 0.1]);
        let a = SymmetricalHead::new(v1.clone(), v2.clone(), 4.0, 5).unwrap();
        let b = SymmetricalHead::new(v1.scale(3.0), v2, 4.0, 5).unwrap();
        let x = Matrix::from_rows(vec![vec![1.0, -0.5, 0.25]]);
        let la = a.forward(&x).unwrap();
        let lb = b.forward(&x).unwrap();
        for j in 0..5 {
            assert!((la.get(0, j) - lb.get(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_norm_row_is_reported_with_index() {
        let head = square_head(1.0);
        let x = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(head.forward(&x), Err(Error::ZeroNormInput(1))));
    }

    #[test]
    fn collinear_parameters_are_degenerate() {
        let err = SymmetricalHead::new(vec_of(&[1.0, 1.0]), vec_of(&[2.0, 2.0]), 1.0, 3);
        assert!(matches!(err, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let head = square_head(2.0);
        let x = Matrix::from_rows(vec![vec![0.7, 0.2]]);
        let upstream = Matrix::zeros(1, 4);
        let (d_v1, d_v2, d_x) = head.backward(&x, &upstream).unwrap();
        assert!(d_v1.iter().all(|v| *v == 0.0));
        assert!(d_v2.iter().all(|v| *v == 0.0));
        assert!(d_x.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn input_scale_invariance_extends_to_parameter_gradients() {
        let head = SymmetricalHead::new(
            vec_of(&[0.4, 0.1, 0.8]),
            vec_of(&[0.2, 0.9, -0.3]),
            4.0,
            3,
        )
        .unwrap();
        let x = Matrix::from_rows(vec![vec![0.5, -0.7, 0.9]]);
        let x2 = Matrix::from_rows(vec![vec![1.0, -1.4, 1.8]]);
        let upstream = Matrix::from_rows(vec![vec![0.3, -0.2, 0.7]]);
        let (a1, a2, _) = head.backward(&x, &upstream).unwrap();
        let (b1, b2, _) = head.backward(&x2, &upstream).unwrap();
        for (a, b) in a1.iter().zip(&b1).chain(a2.iter().zip(&b2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        // central finite differences at step 1e-5 over every coordinate of
        // v1, v2, and x
        let n = 5;
        let d = 7;
        let batch = 3;
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let v1 = VectorD::new((0..d).map(|_| next() + 1.0).collect()).unwrap();
        let v2 = VectorD::new((0..d).map(|_| next() + 0.5).collect()).unwrap();
        let x = Matrix::from_flat(batch, d, (0..batch * d).map(|_| next() * 2.0).collect());
        let upstream =
            Matrix::from_flat(batch, n, (0..batch * n).map(|_| next()).collect());
        let head = SymmetricalHead::new(v1.clone(), v2.clone(), 3.0, n).unwrap();
        let (d_v1, d_v2, d_x) = head.backward(&x, &upstream).unwrap();

        let loss = |v1c: &[f64], v2c: &[f64], xc: &Matrix| -> f64 {
            let h = SymmetricalHead::new(
                VectorD::new(v1c.to_vec()).unwrap(),
                VectorD::new(v2c.to_vec()).unwrap(),
                3.0,
                n,
            )
            .unwrap();
            let logits = h.forward(xc).unwrap();
            logits
                .data()
                .iter()
                .zip(upstream.data())
                .map(|(l, u)| l * u)
                .sum()
        };

        let h = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
        for j in 0..d {
            let mut plus = v1.as_slice().to_vec();
            let mut minus = plus.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (loss(&plus, v2.as_slice(), &x) - loss(&minus, v2.as_slice(), &x))
                / (2.0 * h);
            assert!(rel(fd, d_v1[j]) <= 1e-5, "v1[{j}]: fd {fd} vs {}", d_v1[j]);

            let mut plus = v2.as_slice().to_vec();
            let mut minus = plus.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (loss(v1.as_slice(), &plus, &x) - loss(v1.as_slice(), &minus, &x))
                / (2.0 * h);
            assert!(rel(fd, d_v2[j]) <= 1e-5, "v2[{j}]: fd {fd} vs {}", d_v2[j]);
        }
        for b in 0..batch {
            for j in 0..d {
                let mut plus = x.clone();
                let mut minus = x.clone();
                plus.set(b, j, x.get(b, j) + h);
                minus.set(b, j, x.get(b, j) - h);
                let fd = (loss(v1.as_slice(), v2.as_slice(), &plus)
                    - loss(v1.as_slice(), v2.as_slice(), &minus))
                    / (2.0 * h);
                assert!(
                    rel(fd, d_x.get(b, j)) <= 1e-5,
                    "x[{b}][{j}]: fd {fd} vs {}",
                    d_x.get(b, j)
                );
            }
        }
    }

    #[test]
    fn forward_layout_matches_plane_basis() {
        let head = SymmetricalHead::new(
            vec_of(&[2.0, 0.0, 0.0]),
            vec_of(&[1.0, 1.0, 0.0]),
            1.0,
            4,
        )
        .unwrap();
        let layout = head.layout().unwrap();
        let expected = PlaneBasis::canonical(3);
        assert!(layout.basis().n1().sub(expected.n1()).norm() < 1e-12);
        assert!(layout.basis().n2().sub(expected.n2()).norm() < 1e-12);
    }
}
