//! `analyze`: angular sweep plus extremum-divergence measurement.

use std::fs;

use symhead::analysis::{extremum_divergence, sweep, WeightSet};
use symhead::geometry::{build_symmetric_layout, PlaneBasis};

use crate::config::{parse_list, resolve, Manifest};
use crate::{AnalyzeArgs, CliError, CliOutcome};

fn parse_weights(spec: &str) -> Result<WeightSet, CliError> {
    if let Some(n) = spec.strip_prefix("symmetric:") {
        let n: usize = n
            .parse()
            .map_err(|_| CliError::usage(format!("bad class count in '{spec}'")))?;
        let layout = build_symmetric_layout(&PlaneBasis::canonical(2), n)?;
        return Ok(WeightSet::from_layout(&layout));
    }
    if let Some(list) = spec.strip_prefix("angles:") {
        let degrees: Vec<f64> = parse_list(list, "angle")?;
        let radians: Vec<f64> = degrees.iter().map(|d| d.to_radians()).collect();
        return Ok(WeightSet::from_planar_angles(&radians)?);
    }
    Err(CliError::usage(format!(
        "bad weights spec '{spec}' (expected symmetric:<n> or angles:<deg,...>)"
    )))
}

pub fn run(args: AnalyzeArgs) -> Result<CliOutcome, CliError> {
    let mut file = super::open_file_config(&args.common.config)?;
    file.check_command("analyze")?;
    let weights_raw = resolve(&args.weights, &mut file, "weights", "symmetric:10".to_string())?;
    let sigma = resolve(&args.sigma, &mut file, "sigma", 1.0f64)?;
    let resolution = resolve(&args.resolution, &mut file, "resolution", 0.1f64)?;
    file.ensure_consumed()?;

    let ws = parse_weights(&weights_raw)?;
    let basis = PlaneBasis::canonical(2);

    let mut manifest = Manifest::new("analyze");
    manifest.push("weights", &weights_raw);
    manifest.push("sigma", sigma);
    manifest.push("resolution", resolution);
    manifest.write(&args.common.out)?;

    let result = sweep(&ws, &basis, resolution, sigma)?;
    fs::write(args.common.out.join("sweep.csv"), result.to_csv())?;

    let report = extremum_divergence(&ws, &basis, sigma)?;
    let mut csv = String::from("class,dot_extremum_deg,softmax_extremum_deg,divergence_deg\n");
    for c in &report.classes {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            c.class, c.dot_extremum_deg, c.softmax_extremum_deg, c.divergence_deg
        ));
    }
    fs::write(args.common.out.join("divergence.csv"), csv)?;

    println!(
        "max extremum divergence: {:.6} degrees",
        report.max_divergence_deg()
    );
    Ok(CliOutcome::Success)
}
