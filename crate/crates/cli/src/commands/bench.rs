//! `bench`: wall-clock seconds per training epoch, per head kind.

use std::fs;

use symhead::trainer::{bench_epoch, bench_to_csv};

use crate::config::{resolve, Manifest};
use crate::{BenchArgs, CliError, CliOutcome};

pub fn run(args: BenchArgs) -> Result<CliOutcome, CliError> {
    let mut file = super::open_file_config(&args.common.config)?;
    file.check_command("bench")?;
    let mut manifest = Manifest::new("bench");
    let repeats = resolve(&args.repeats, &mut file, "repeats", 3usize)?;
    if repeats < 3 {
        return Err(CliError::usage(format!(
            "bench needs repeats >= 3, got {repeats}"
        )));
    }
    manifest.push("repeats", repeats);
    let resolved = super::resolve_train(&args.train, &mut file, &mut manifest)?;
    file.ensure_consumed()?;
    manifest.write(&args.common.out)?;

    let dataset = super::build_dataset(&resolved)?;
    let rows = bench_epoch(&resolved.config, &dataset, repeats)?;
    fs::write(args.common.out.join("timing.csv"), bench_to_csv(&rows))?;

    for r in &rows {
        println!(
            "{:<11} {:.4} +/- {:.4} sec/epoch over {} epochs",
            r.kind.as_str(),
            r.mean_sec,
            r.std_sec,
            r.repeats
        );
    }
    Ok(CliOutcome::Success)
}
