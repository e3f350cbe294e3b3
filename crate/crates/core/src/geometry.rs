//! Plane bases, in-plane rotations in arbitrary dimension, the symmetric
//! weight layout, and the projection machinery behind the rhombus check.
//!
//! All arithmetic is 64-bit. Construction-time tolerances are deliberately
//! tight (1e-12 and below): the builders produce values accurate to a few
//! ulps, so anything looser would only mask bugs.

use crate::error::{Error, Result};
use crate::vector::{angle_between, VectorD};

/// Norm threshold below which a vector is treated as degenerate input to
/// orthonormalization.
pub const EPS_NORM: f64 = 1e-9;

/// Unit-norm tolerance for basis vectors and layout weights.
pub const UNIT_TOL: f64 = 1e-12;

/// Orthogonality tolerance for basis vectors, and in-plane residual
/// tolerance for layout weights.
pub const PLANE_TOL: f64 = 1e-12;

/// Tolerance on adjacent angles of a symmetric layout (radians).
pub const ANGLE_TOL: f64 = 1e-10;

/// Tolerance on the norm of a symmetric layout's weight sum.
pub const SUM_TOL: f64 = 1e-10;

/// An ordered orthonormal pair spanning a 2-plane of `R^d`.
#[derive(Clone, Debug)]
pub struct PlaneBasis {
    n1: VectorD,
    n2: VectorD,
}

impl PlaneBasis {
    /// Validates orthonormality to within [`UNIT_TOL`] / [`PLANE_TOL`].
    pub fn new(n1: VectorD, n2: VectorD) -> Result<Self> {
        if n1.dim() != n2.dim() {
            return Err(Error::InvalidParameter(format!(
                "basis dimension mismatch: {} vs {}",
                n1.dim(),
                n2.dim()
            )));
        }
        if (n1.norm() - 1.0).abs() > UNIT_TOL || (n2.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidParameter(
                "basis vectors must have unit norm".into(),
            ));
        }
        if n1.dot(&n2).abs() > PLANE_TOL {
            return Err(Error::InvalidParameter(
                "basis vectors must be orthogonal".into(),
            ));
        }
        Ok(Self { n1, n2 })
    }

    /// The canonical basis `(e_1, e_2)` of `R^d`.
    pub fn canonical(d: usize) -> Self {
        Self {
            n1: VectorD::unit(d, 0),
            n2: VectorD::unit(d, 1),
        }
    }

    pub fn n1(&self) -> &VectorD {
        &self.n1
    }

    pub fn n2(&self) -> &VectorD {
        &self.n2
    }

    pub fn dim(&self) -> usize {
        self.n1.dim()
    }

    /// In-plane coordinates `(v . n1, v . n2)` of a vector.
    pub fn coords(&self, v: &VectorD) -> (f64, f64) {
        (v.dot(&self.n1), v.dot(&self.n2))
    }
}

/// Orthonormalizes `(v1, v2)` into a plane basis: `n1 = v1/||v1||`, `n2` the
/// unit residual of `v2` against `n1`.
///
/// Fails with `DegenerateInput` when `||v1|| <= EPS_NORM` or when the
/// residual norm is at or below `EPS_NORM` (collinear inputs). Callers that
/// own the inputs are expected to re-initialize rather than perturb them, so
/// runs stay reproducible per seed.
pub fn gram_schmidt(v1: &VectorD, v2: &VectorD) -> Result<PlaneBasis> {
    if v1.dim() != v2.dim() {
        return Err(Error::InvalidParameter(format!(
            "gram_schmidt dimension mismatch: {} vs {}",
            v1.dim(),
            v2.dim()
        )));
    }
    let n1 = v1.try_normalized(EPS_NORM)?;
    let residual = v2.sub(&n1.scale(n1.dot(v2)));
    let n2 = residual.try_normalized(EPS_NORM).map_err(|_| {
        Error::DegenerateInput(format!(
            "v2 is collinear with v1 (residual norm {:.3e})",
            residual.norm()
        ))
    })?;
    PlaneBasis::new(n1, n2)
}

/// Rotates `n1` by `theta` within the plane: `cos(theta) n1 + sin(theta) n2`.
///
/// This is the action of the plane rotation
/// `R = I + (n2 n1^T - n1 n2^T) sin(theta) + (n1 n1^T + n2 n2^T)(cos(theta) - 1)`
/// on `n1`, written without materializing `R`.
pub fn rotate_in_plane(basis: &PlaneBasis, theta: f64) -> VectorD {
    let (c, s) = (theta.cos(), theta.sin());
    basis.n1.scale(c).add(&basis.n2.scale(s))
}

/// Rotates the whole basis by `theta`, preserving its span.
pub fn rotate_basis(basis: &PlaneBasis, theta: f64) -> PlaneBasis {
    let (c, s) = (theta.cos(), theta.sin());
    let n1 = basis.n1.scale(c).add(&basis.n2.scale(s));
    let n2 = basis.n1.scale(-s).add(&basis.n2.scale(c));
    PlaneBasis { n1, n2 }
}

/// `n` unit weight vectors in one 2-plane at `2*pi/n` spacing, summing to
/// zero.
#[derive(Clone, Debug)]
pub struct SymmetricLayout {
    weights: Vec<VectorD>,
    basis: PlaneBasis,
}

impl SymmetricLayout {
    pub fn weights(&self) -> &[VectorD] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> &VectorD {
        &self.weights[i]
    }

    pub fn basis(&self) -> &PlaneBasis {
        &self.basis
    }

    pub fn class_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Re-checks every structural invariant; used both after construction
    /// and as a per-forward defense in the symmetric head.
    pub fn validate(&self) -> Result<()> {
        let n = self.weights.len();
        let d = self.basis.dim();
        let mut sum = VectorD::zeros(d);
        for (i, w) in self.weights.iter().enumerate() {
            if (w.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidParameter(format!(
                    "layout weight {i} has norm {:.17}",
                    w.norm()
                )));
            }
            let in_plane = project_onto_plane(w, &self.basis);
            if w.sub(&in_plane).norm() > PLANE_TOL {
                return Err(Error::InvalidParameter(format!(
                    "layout weight {i} leaves the plane by {:.3e}",
                    w.sub(&in_plane).norm()
                )));
            }
            sum = sum.add(w);
        }
        let step = 2.0 * std::f64::consts::PI / n as f64;
        for i in 0..n {
            let a = angle_between(&self.weights[i], &self.weights[(i + 1) % n]);
            if (a - step).abs() > ANGLE_TOL {
                return Err(Error::InvalidParameter(format!(
                    "adjacent angle {i} is {a:.12}, expected {step:.12}"
                )));
            }
        }
        if sum.norm() > SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "layout weights sum to norm {:.3e}",
                sum.norm()
            )));
        }
        Ok(())
    }
}

/// Builds the symmetric layout by rotating `n1` by `2*pi*i/n` for
/// `i = 0..n-1`. Rejects `n < 3`.
pub fn build_symmetric_layout(basis: &PlaneBasis, n: usize) -> Result<SymmetricLayout> {
    if n < 3 {
        return Err(Error::InvalidClassCount(n));
    }
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let weights = (0..n)
        .map(|i| rotate_in_plane(basis, step * i as f64))
        .collect();
    let layout = SymmetricLayout {
        weights,
        basis: basis.clone(),
    };
    layout.validate()?;
    Ok(layout)
}

/// Orthogonal projection `(v . n1) n1 + (v . n2) n2` onto the plane.
pub fn project_onto_plane(v: &VectorD, basis: &PlaneBasis) -> VectorD {
    let (a, b) = basis.coords(v);
    basis.n1.scale(a).add(&basis.n2.scale(b))
}

/// Outcome of the rhombus check: projections of two unit vectors onto a
/// plane through their sum must have equal norms and equal angles to the
/// sum.
#[derive(Clone, Debug)]
pub struct RhombusReport {
    pub norm_a_par: f64,
    pub norm_b_par: f64,
    pub angle_a_s: f64,
    pub angle_b_s: f64,
    pub passes: bool,
}

impl RhombusReport {
    pub fn norm_gap(&self) -> f64 {
        (self.norm_a_par - self.norm_b_par).abs()
    }

    pub fn angle_gap(&self) -> f64 {
        (self.angle_a_s - self.angle_b_s).abs()
    }
}

const RHOMBUS_TOL: f64 = 1e-9;

/// Verifies the rhombus property for unit vectors `a`, `b` and a plane that
/// passes through `s = a + b`.
///
/// Errors with `PlaneMissesSum` when `s` is not in the span of the basis
/// (residual above 1e-9), which signals a misconstructed test plane rather
/// than a failed check.
pub fn verify_lemma3(a: &VectorD, b: &VectorD, basis: &PlaneBasis) -> Result<RhombusReport> {
    for (name, v) in [("a", a), ("b", b)] {
        if (v.norm() - 1.0).abs() > RHOMBUS_TOL {
            return Err(Error::DegenerateInput(format!(
                "{name} must be a unit vector (norm {:.12})",
                v.norm()
            )));
        }
    }
    let s = a.add(b);
    if s.norm() <= EPS_NORM {
        return Err(Error::DegenerateInput(
            "a + b is numerically zero; no summation direction".into(),
        ));
    }
    let s_residual = s.sub(&project_onto_plane(&s, basis)).norm();
    if s_residual > RHOMBUS_TOL {
        return Err(Error::PlaneMissesSum(s_residual));
    }

    let a_par = project_onto_plane(a, basis);
    let b_par = project_onto_plane(b, basis);
    let norm_a_par = a_par.norm();
    let norm_b_par = b_par.norm();
    let angle_a_s = angle_between(&a_par, &s);
    let angle_b_s = angle_between(&b_par, &s);
    let passes =
        (norm_a_par - norm_b_par).abs() <= RHOMBUS_TOL && (angle_a_s - angle_b_s).abs() <= RHOMBUS_TOL;
    Ok(RhombusReport {
        norm_a_par,
        norm_b_par,
        angle_a_s,
        angle_b_s,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn vec_of(c: &[f64]) -> VectorD {
        VectorD::new(c.to_vec()).unwrap()
    }

    #[test]
    fn gram_schmidt_axis_aligned() {
        let basis = gram_schmidt(&vec_of(&[3.0, 0.0, 0.0, 0.0]), &vec_of(&[1.0, 2.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(basis.n1().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(basis.n2().as_slice(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn gram_schmidt_2d_residual() {
        let basis = gram_schmidt(&vec_of(&[1.0, 0.0]), &vec_of(&[1.0, 1.0])).unwrap();
        assert_eq!(basis.n1().as_slice(), &[1.0, 0.0]);
        assert!((basis.n2().as_slice()[0]).abs() < 1e-15);
        assert!((basis.n2().as_slice()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gram_schmidt_rejects_collinear_and_zero() {
        let err = gram_schmidt(&vec_of(&[1.0, 1.0, 0.0]), &vec_of(&[2.0, 2.0, 0.0]));
        assert!(matches!(err, Err(Error::DegenerateInput(_))));
        let err = gram_schmidt(&VectorD::zeros(3), &vec_of(&[1.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn rotation_quarter_half_and_third() {
        let basis = PlaneBasis::canonical(3);
        let q = rotate_in_plane(&basis, PI / 2.0);
        assert!(q.sub(&vec_of(&[0.0, 1.0, 0.0])).norm() < 1e-15);
        let h = rotate_in_plane(&basis, PI);
        assert!(h.sub(&vec_of(&[-1.0, 0.0, 0.0])).norm() < 1e-15);

        let basis4 = PlaneBasis::canonical(4);
        let t = rotate_in_plane(&basis4, PI / 3.0);
        let expected = vec_of(&[0.5, 3.0_f64.sqrt() / 2.0, 0.0, 0.0]);
        assert!(t.sub(&expected).norm() < 1e-15);
    }

    #[test]
    fn rotation_by_zero_is_exactly_n1() {
        let basis = gram_schmidt(&vec_of(&[0.3, -1.2, 0.7]), &vec_of(&[1.0, 0.4, -0.2])).unwrap();
        let r = rotate_in_plane(&basis, 0.0);
        assert!(r.sub(basis.n1()).norm() <= 1e-15);
    }

    #[test]
    fn square_layout_in_r2() {
        let layout = build_symmetric_layout(&PlaneBasis::canonical(2), 4).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (w, e) in layout.weights().iter().zip(expected.iter()) {
            assert!(w.sub(&vec_of(e)).norm() < 1e-15);
        }
    }

    #[test]
    fn three_class_sum_vanishes() {
        let basis = gram_schmidt(&vec_of(&[0.2, 0.5, -0.1, 0.9]), &vec_of(&[1.0, -0.3, 0.4, 0.2]))
            .unwrap();
        let layout = build_symmetric_layout(&basis, 3).unwrap();
        let sum = layout
            .weights()
            .iter()
            .fold(VectorD::zeros(4), |acc, w| acc.add(w));
        assert!(sum.norm() <= 1e-10);
    }

    #[test]
    fn seven_class_adjacent_angles() {
        // angle oracle: clamped arccos of pairwise dot products
        let basis = gram_schmidt(
            &vec_of(&[0.1, 0.2, 0.3, 0.4, 0.5]),
            &vec_of(&[-0.5, 0.4, -0.3, 0.2, -0.1]),
        )
        .unwrap();
        let layout = build_symmetric_layout(&basis, 7).unwrap();
        let step = 2.0 * PI / 7.0;
        for i in 0..7 {
            let a = angle_between(layout.weight(i), layout.weight((i + 1) % 7));
            assert!((a - step).abs() <= 1e-10, "angle {i} = {a}");
        }
    }

    #[test]
    fn layout_rejects_small_class_counts() {
        let basis = PlaneBasis::canonical(2);
        assert!(matches!(
            build_symmetric_layout(&basis, 2),
            Err(Error::InvalidClassCount(2))
        ));
        assert!(matches!(
            build_symmetric_layout(&basis, 0),
            Err(Error::InvalidClassCount(0))
        ));
    }

    #[test]
    fn projection_truncates_annihilates_and_fixes() {
        let basis = PlaneBasis::canonical(3);
        let p = project_onto_plane(&vec_of(&[1.0, 2.0, 3.0]), &basis);
        assert!(p.sub(&vec_of(&[1.0, 2.0, 0.0])).norm() < 1e-15);

        let orth = vec_of(&[0.0, 0.0, 5.0]);
        assert!(project_onto_plane(&orth, &basis).norm() == 0.0);

        let inside = vec_of(&[0.6, -0.8, 0.0]);
        assert!(project_onto_plane(&inside, &basis).sub(&inside).norm() <= 1e-15);
    }

    #[test]
    fn rhombus_report_on_offset_plane() {
        // direct projection oracle: both projections are (0.5, 0.5, 0)
        let a = vec_of(&[1.0, 0.0, 0.0]);
        let b = vec_of(&[0.0, 1.0, 0.0]);
        let n1 = vec_of(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0]);
        let basis = PlaneBasis::new(n1, VectorD::unit(3, 2)).unwrap();
        let report = verify_lemma3(&a, &b, &basis).unwrap();
        assert!((report.norm_a_par - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((report.norm_b_par - FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(report.angle_a_s.abs() < 1e-12);
        assert!(report.angle_b_s.abs() < 1e-12);
        assert!(report.passes);
    }

    #[test]
    fn rhombus_coincident_vectors_pass() {
        let a = vec_of(&[0.0, 0.6, 0.8]);
        let basis = gram_schmidt(&a.add(&a), &vec_of(&[1.0, 0.0, 0.0])).unwrap();
        let report = verify_lemma3(&a, &a.clone(), &basis).unwrap();
        assert!(report.passes);
        assert_eq!(report.norm_gap(), 0.0);
    }

    #[test]
    fn rhombus_in_plane_pair_is_exactly_symmetric() {
        // in-plane oracle: with both vectors in the plane the projections
        // are the vectors themselves, sides of a rhombus around s
        let a = vec_of(&[0.8, 0.6]);
        let b = vec_of(&[0.6, 0.8]);
        let basis = PlaneBasis::canonical(2);
        let report = verify_lemma3(&a, &b, &basis).unwrap();
        assert!((report.norm_a_par - 1.0).abs() < 1e-12);
        assert!((report.norm_b_par - 1.0).abs() < 1e-12);
        assert!(report.angle_gap() < 1e-12);
        assert!(report.passes);
    }

    #[test]
    fn rhombus_detects_plane_missing_sum() {
        let a = vec_of(&[1.0, 0.0, 0.0]);
        let b = vec_of(&[0.0, 1.0, 0.0]);
        // plane spanned by e1, e3 does not contain a + b
        let basis = PlaneBasis::new(VectorD::unit(3, 0), VectorD::unit(3, 2)).unwrap();
        assert!(matches!(
            verify_lemma3(&a, &b, &basis),
            Err(Error::PlaneMissesSum(_))
        ));
    }
}
