//! `verify-lemmas`: randomized grid over the three geometric claims.

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symhead::analysis::{astride_cancellation_check, WeightSet};
use symhead::geometry::{build_symmetric_layout, gram_schmidt, verify_lemma3, PlaneBasis};
use symhead::derive_seed;
use symhead::vector::VectorD;

use crate::config::{parse_list, resolve, Manifest};
use crate::{CliError, CliOutcome, VerifyArgs};

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> VectorD {
    VectorD::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_basis(rng: &mut ChaCha8Rng, d: usize) -> PlaneBasis {
    loop {
        if let Ok(b) = gram_schmidt(&random_vector(rng, d), &random_vector(rng, d)) {
            return b;
        }
    }
}

/// Residual of one randomized trial of one lemma.
fn trial_residual(lemma: u32, n: usize, d: usize, rng: &mut ChaCha8Rng) -> f64 {
    match lemma {
        // weight sum of a randomly based layout
        1 => {
            let layout = build_symmetric_layout(&random_basis(rng, d), n).unwrap();
            layout
                .weights()
                .iter()
                .fold(VectorD::zeros(d), |acc, w| acc.add(w))
                .norm()
        }
        // criterion sum at every claimed root, on an off-plane analysis
        // plane through a random class direction
        2 => {
            let layout = build_symmetric_layout(&random_basis(rng, d), n).unwrap();
            let ws = WeightSet::from_layout(&layout);
            let mut worst = 0.0f64;
            for r in 0..n {
                let theta = std::f64::consts::TAU * r as f64 / n as f64;
                worst = worst.max(ws.criterion_sum(theta).unwrap().abs());
            }
            let class = rng.gen_range(0..n);
            let residual = loop {
                match astride_cancellation_check(&layout, class, &random_vector(rng, d)) {
                    Ok(r) => break r,
                    Err(_) => continue,
                }
            };
            worst.max(residual)
        }
        // rhombus projections of a random unit pair
        3 => loop {
            let a = match random_vector(rng, d).try_normalized(1e-9) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let b = match random_vector(rng, d).try_normalized(1e-9) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let s = a.add(&b);
            if s.norm() < 1e-3 {
                continue;
            }
            let basis = match gram_schmidt(&s, &random_vector(rng, d)) {
                Ok(b) => b,
                Err(_) => continue,
            };
            let report = verify_lemma3(&a, &b, &basis).unwrap();
            break report.norm_gap().max(report.angle_gap());
        },
        _ => unreachable!(),
    }
}

pub fn run(args: VerifyArgs) -> Result<CliOutcome, CliError> {
    let mut file = super::open_file_config(&args.common.config)?;
    file.check_command("verify-lemmas")?;
    let n_min = resolve(&args.n_min, &mut file, "n_min", 3usize)?;
    let n_max = resolve(&args.n_max, &mut file, "n_max", 32usize)?;
    let dims_raw = resolve(&args.dims, &mut file, "dims", "2,3,8,32".to_string())?;
    let dims: Vec<usize> = parse_list(&dims_raw, "dimension")?;
    let trials = resolve(&args.trials, &mut file, "trials", 50usize)?;
    let tol = resolve(&args.tol, &mut file, "tol", 1e-9f64)?;
    let seed = resolve(&args.seed, &mut file, "seed", 7u64)?;
    file.ensure_consumed()?;

    if n_min < 3 {
        return Err(CliError::usage(format!(
            "n_min must be >= 3 (the layout is undefined below 3 classes), got {n_min}"
        )));
    }
    if n_max < n_min {
        return Err(CliError::usage(format!("n_max {n_max} < n_min {n_min}")));
    }
    if dims.iter().any(|&d| d < 2) {
        return Err(CliError::usage("dimensions must be >= 2".into()));
    }
    if trials == 0 {
        return Err(CliError::usage("trials must be >= 1".into()));
    }
    if tol <= 0.0 {
        return Err(CliError::usage("tol must be positive".into()));
    }

    let mut manifest = Manifest::new("verify-lemmas");
    manifest.push("n_min", n_min);
    manifest.push("n_max", n_max);
    manifest.push("dims", &dims_raw);
    manifest.push("trials", trials);
    manifest.push("tol", tol);
    manifest.push("seed", seed);
    manifest.write(&args.common.out)?;

    let mut csv = String::from("lemma,n,d,trial,residual,pass\n");
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for lemma in 1u32..=3 {
        for n in n_min..=n_max {
            for &d in &dims {
                for trial in 0..trials {
                    let stream = (lemma as u64) << 48
                        | (n as u64) << 32
                        | (d as u64) << 16
                        | trial as u64;
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
                    let residual = trial_residual(lemma, n, d, &mut rng);
                    let pass = residual <= tol;
                    if !pass {
                        failures += 1;
                    }
                    worst = worst.max(residual);
                    csv.push_str(&format!(
                        "{lemma},{n},{d},{trial},{residual:e},{}\n",
                        if pass { "true" } else { "false" }
                    ));
                }
            }
        }
    }
    fs::write(args.common.out.join("lemmas.csv"), csv)?;

    let cells = 3 * (n_max - n_min + 1) * dims.len() * trials;
    println!("checked {cells} cells, worst residual {worst:e}, {failures} failures");
    if failures == 0 {
        Ok(CliOutcome::Success)
    } else {
        Ok(CliOutcome::VerificationFailed)
    }
}
