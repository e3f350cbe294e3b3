//! `refute`: tabulate the counterexample criterion value over class counts.

use std::fs;

use symhead::analysis::refutability_value;

use crate::config::{resolve, Manifest};
use crate::{CliError, CliOutcome, RefuteArgs};

pub fn run(args: RefuteArgs) -> Result<CliOutcome, CliError> {
    let mut file = super::open_file_config(&args.common.config)?;
    file.check_command("refute")?;
    let n_max = resolve(&args.n_max, &mut file, "n_max", 64usize)?;
    file.ensure_consumed()?;

    if n_max < 3 {
        return Err(CliError::usage(format!("n_max must be >= 3, got {n_max}")));
    }

    let mut manifest = Manifest::new("refute");
    manifest.push("n_max", n_max);
    manifest.write(&args.common.out)?;

    let mut csv = String::from("n,value\n");
    let mut all_positive = true;
    for n in 3..=n_max {
        let value = refutability_value(n)?;
        if value <= 0.0 {
            all_positive = false;
        }
        csv.push_str(&format!("{n},{value}\n"));
    }
    fs::write(args.common.out.join("refutability.csv"), csv)?;

    println!(
        "{} rows, all positive: {all_positive}",
        n_max - 2
    );
    if all_positive {
        Ok(CliOutcome::Success)
    } else {
        Ok(CliOutcome::VerificationFailed)
    }
}
