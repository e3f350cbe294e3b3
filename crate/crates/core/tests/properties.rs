//! Quantified invariants of the geometry and analysis modules, exercised
//! over the full grids they are claimed for plus randomized property tests.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symhead::analysis::{
    astride_cancellation_check, refutability_value, sweep, verify_lemma2, WeightSet,
};
use symhead::geometry::{
    build_symmetric_layout, gram_schmidt, project_onto_plane, rotate_basis, rotate_in_plane,
    verify_lemma3, PlaneBasis,
};
use symhead::vector::VectorD;

const TWO_PI: f64 = std::f64::consts::TAU;

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> VectorD {
    VectorD::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_basis(rng: &mut ChaCha8Rng, d: usize) -> PlaneBasis {
    loop {
        let v1 = random_vector(rng, d);
        let v2 = random_vector(rng, d);
        if let Ok(basis) = gram_schmidt(&v1, &v2) {
            return basis;
        }
    }
}

#[test]
fn layout_sum_vanishes_over_the_full_grid() {
    // every n in [3, 64], 100 random bases per dimension
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for d in [2usize, 3, 8, 128] {
        for n in 3..=64 {
            for _ in 0..100 {
                let basis = random_basis(&mut rng, d);
                let layout = build_symmetric_layout(&basis, n).unwrap();
                let sum = layout
                    .weights()
                    .iter()
                    .fold(VectorD::zeros(d), |acc, w| acc.add(w));
                assert!(
                    sum.norm() <= 1e-10,
                    "n = {n}, d = {d}: sum norm {}",
                    sum.norm()
                );
            }
        }
    }
}

#[test]
fn rhombus_projection_holds_for_random_pairs() {
    // 1000 random unit pairs per dimension; the plane passes through the
    // summation vector, completed by a random second direction
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for d in [3usize, 8, 32] {
        let mut done = 0;
        while done < 1000 {
            let a = match random_vector(&mut rng, d).try_normalized(1e-9) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let b = match random_vector(&mut rng, d).try_normalized(1e-9) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let s = a.add(&b);
            if s.norm() < 1e-3 {
                continue; // nearly antipodal pair has no stable sum direction
            }
            let basis = match gram_schmidt(&s, &random_vector(&mut rng, d)) {
                Ok(basis) => basis,
                Err(_) => continue,
            };
            let report = verify_lemma3(&a, &b, &basis).unwrap();
            assert!(
                report.passes,
                "d = {d}: norm gap {}, angle gap {}",
                report.norm_gap(),
                report.angle_gap()
            );
            done += 1;
        }
    }
}

#[test]
fn criterion_roots_hold_for_all_layout_sizes() {
    // the scalar form for every n, plus layouts restricted to their own
    // plane in a higher-dimensional space
    for n in 3..=64 {
        let report = verify_lemma2(n, 1e-10).unwrap();
        assert!(
            report.passes,
            "n = {n}: residual {}",
            report.max_abs_residual
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for n in 3..=64 {
        let basis = random_basis(&mut rng, 8);
        let layout = build_symmetric_layout(&basis, n).unwrap();
        let ws = WeightSet::from_layout(&layout);
        for r in 0..n {
            let theta = TWO_PI * r as f64 / n as f64;
            let v = ws.criterion_sum(theta).unwrap();
            assert!(v.abs() <= 1e-10, "n = {n}, r = {r}: criterion {v}");
        }
    }
}

#[test]
fn refutability_positive_up_to_256() {
    for n in 3..=256 {
        let v = refutability_value(n).unwrap();
        assert!(v > 0.0, "n = {n}: value {v}");
    }
}

#[test]
fn astride_residuals_vanish_on_random_planes() {
    // 100 random analysis planes per (n, d) cell
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for d in [3usize, 8, 32] {
        for n in 3..=16 {
            let basis = random_basis(&mut rng, d);
            let layout = build_symmetric_layout(&basis, n).unwrap();
            for _ in 0..100 {
                let class = rng.gen_range(0..n);
                let seed = random_vector(&mut rng, d);
                let residual = astride_cancellation_check(&layout, class, &seed).unwrap();
                assert!(
                    residual <= 1e-10,
                    "n = {n}, d = {d}, class {class}: residual {residual}"
                );
            }
        }
    }
}

#[test]
fn symmetric_argmax_cells_are_centered_intervals() {
    // each class wins exactly the angular cell of width 2*pi/n around its
    // own direction, up to one grid step at the boundaries
    for n in [3usize, 4, 7, 10] {
        let layout = build_symmetric_layout(&PlaneBasis::canonical(2), n).unwrap();
        let ws = WeightSet::from_layout(&layout);
        let result = sweep(&ws, layout.basis(), 0.25, 4.0).unwrap();
        let samples = result.samples();
        let cell = TWO_PI / n as f64;
        for (t, &winner) in result.winner().iter().enumerate() {
            let theta = TWO_PI * t as f64 / samples as f64;
            let expected = ((theta + cell / 2.0) / cell).floor() as usize % n;
            if winner != expected {
                // only tolerable exactly at a cell boundary
                let boundary = (theta + cell / 2.0) % cell;
                let step = TWO_PI / samples as f64;
                assert!(
                    boundary < step || cell - boundary < step,
                    "n = {n}, theta = {theta}: winner {winner}, expected {expected}"
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn projection_is_contraction_and_idempotent(
        coords in prop::collection::vec(-10.0f64..10.0, 3..24),
        raw1 in prop::collection::vec(-1.0f64..1.0, 24),
        raw2 in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let d = coords.len();
        let v = VectorD::new(coords).unwrap();
        let v1 = VectorD::new(raw1[..d].to_vec()).unwrap();
        let v2 = VectorD::new(raw2[..d].to_vec()).unwrap();
        prop_assume!(v1.norm() > 1e-3);
        let basis = match gram_schmidt(&v1, &v2) {
            Ok(basis) => basis,
            Err(_) => return Ok(()),
        };
        let once = project_onto_plane(&v, &basis);
        prop_assert!(once.norm() <= v.norm() * (1.0 + 1e-12) + 1e-12);
        let twice = project_onto_plane(&once, &basis);
        prop_assert!(twice.sub(&once).norm() <= 1e-12 * (1.0 + v.norm()));
    }

    #[test]
    fn rotation_composes_additively(
        raw1 in prop::collection::vec(-1.0f64..1.0, 6),
        raw2 in prop::collection::vec(-1.0f64..1.0, 6),
        theta1 in -10.0f64..10.0,
        theta2 in -10.0f64..10.0,
    ) {
        let v1 = VectorD::new(raw1).unwrap();
        let v2 = VectorD::new(raw2).unwrap();
        prop_assume!(v1.norm() > 1e-3);
        let basis = match gram_schmidt(&v1, &v2) {
            Ok(basis) => basis,
            Err(_) => return Ok(()),
        };
        let stepped = rotate_in_plane(&rotate_basis(&basis, theta1), theta2);
        let direct = rotate_in_plane(&basis, theta1 + theta2);
        prop_assert!(stepped.sub(&direct).norm() <= 1e-12);
    }

    #[test]
    fn sweep_softmax_always_normalizes(
        angles in prop::collection::vec(0.0f64..TWO_PI, 2..10),
        sigma in 0.1f64..24.0,
    ) {
        let ws = WeightSet::from_planar_angles(&angles).unwrap();
        let result = sweep(&ws, &PlaneBasis::canonical(2), 1.0, sigma).unwrap();
        for t in 0..result.samples() {
            let total: f64 = (0..angles.len())
                .map(|j| result.softmax().get(t, j))
                .sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }
    }
}
