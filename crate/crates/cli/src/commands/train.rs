//! `train`: one training run with full logging and a parameter checkpoint.

use std::fs;

use symhead::trainer::train_full;

use crate::config::Manifest;
use crate::{CliError, CliOutcome, TrainCmdArgs};

pub fn run(args: TrainCmdArgs) -> Result<CliOutcome, CliError> {
    let mut file = super::open_file_config(&args.common.config)?;
    file.check_command("train")?;
    let mut manifest = Manifest::new("train");
    let resolved = super::resolve_train(&args.train, &mut file, &mut manifest)?;
    file.ensure_consumed()?;

    // the manifest lands on disk before any training work starts
    manifest.write(&args.common.out)?;

    let dataset = super::build_dataset(&resolved)?;
    let (log, head) = train_full(&resolved.config, &dataset)?;

    for r in &log.epochs {
        let mut line = format!(
            "epoch {:>3}: train_loss {:.6} train_acc {:.4} eval_loss {:.6} eval_acc {:.4}",
            r.epoch, r.train_loss, r.train_acc, r.eval_loss, r.eval_acc
        );
        if let (Some(delta), Some(step)) = (r.plane_delta_deg, r.n1_step_deg) {
            line.push_str(&format!(
                " plane_delta {delta:.4} deg (n1 step {step:.4} deg)"
            ));
        }
        println!("{line}");
    }
    println!(
        "best eval accuracy {:.4}, diverged: {}",
        log.best_eval_acc, log.diverged
    );

    fs::write(args.common.out.join("runlog.csv"), log.to_csv())?;
    fs::write(args.common.out.join("head.bin"), head.to_bytes())?;

    Ok(CliOutcome::Success)
}
