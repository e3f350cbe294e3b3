//! `stability`: seed-repeat grid over head configurations.

use std::fs;

use symhead::head::HeadSpec;
use symhead::trainer::stability_study;

use crate::config::{resolve, Manifest};
use crate::{CliError, CliOutcome, StabilityArgs};

const DEFAULT_GRID: &str = "arcface:sigma=4,8,16,32,64:m=0.1";

pub fn run(args: StabilityArgs) -> Result<CliOutcome, CliError> {
    let mut file = super::open_file_config(&args.common.config)?;
    file.check_command("stability")?;
    let mut manifest = Manifest::new("stability");

    let grid_raw: Vec<String> = if args.grid.is_empty() {
        match file.take_raw("grid") {
            // config files separate multiple grids with ';'
            Some(raw) => raw.split(';').map(|s| s.trim().to_string()).collect(),
            None => vec![DEFAULT_GRID.to_string()],
        }
    } else {
        file.take_raw("grid");
        args.grid.clone()
    };
    let repeats = resolve(&args.repeats, &mut file, "repeats", 3usize)?;
    if repeats == 0 {
        return Err(CliError::usage("repeats must be >= 1".into()));
    }

    let mut specs: Vec<HeadSpec> = Vec::new();
    for raw in &grid_raw {
        specs.extend(super::parse_grid(raw)?);
    }
    if specs.is_empty() {
        return Err(CliError::usage("the head grid is empty".into()));
    }

    manifest.push("grid", grid_raw.join(";"));
    manifest.push("repeats", repeats);
    let resolved = super::resolve_train(&args.train, &mut file, &mut manifest)?;
    file.ensure_consumed()?;
    manifest.write(&args.common.out)?;

    let dataset = super::build_dataset(&resolved)?;
    let table = stability_study(&specs, repeats, &resolved.config, &dataset)?;
    fs::write(args.common.out.join("stability.csv"), table.to_csv())?;

    let diverged = table
        .cells
        .iter()
        .filter(|c| c.best_eval_acc.is_none())
        .count();
    println!(
        "{} cells ({} diverged); per-configuration outcomes in stability.csv",
        table.cells.len(),
        diverged
    );
    Ok(CliOutcome::Success)
}
