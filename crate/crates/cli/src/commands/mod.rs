pub mod analyze;
pub mod bench;
pub mod refute;
pub mod stability;
pub mod train;
pub mod verify;

use std::path::Path;

use symhead::head::{HeadKind, HeadSpec};
use symhead::trainer::{load_idx, make_blobs, Split, SplitDataset, TrainConfig};

use crate::config::{parse_list, resolve, FileConfig, Manifest};
use crate::{CliError, TrainOpts};

/// Resolved training-family options plus the strings the manifest echoes.
pub struct ResolvedTrain {
    pub config: TrainConfig,
    pub dataset_spec: String,
    pub per_class: usize,
    pub spread: f64,
}

const DEFAULT_DATASET: &str = "blobs:10x64";

/// Merges flags, config file, and defaults into a [`TrainConfig`] and the
/// dataset description, pushing every resolved value into the manifest.
pub fn resolve_train(
    opts: &TrainOpts,
    file: &mut FileConfig,
    manifest: &mut Manifest,
) -> Result<ResolvedTrain, CliError> {
    let head_raw = resolve(&opts.head, file, "head", "symmetric".to_string())?;
    let kind = HeadKind::parse(&head_raw)?;
    let sigma = resolve(&opts.sigma, file, "sigma", default_sigma(kind))?;
    let margin = resolve(&opts.margin, file, "margin", default_margin(kind))?;
    let spec = HeadSpec {
        kind,
        sigma,
        margin,
    };

    let dataset_spec = resolve(&opts.dataset, file, "dataset", DEFAULT_DATASET.to_string())?;
    let per_class = resolve(&opts.per_class, file, "per_class", 625usize)?;
    let spread = resolve(&opts.spread, file, "spread", 0.05f64)?;

    let mut config = TrainConfig::new(spec);
    config.epochs = resolve(&opts.epochs, file, "epochs", config.epochs)?;
    config.batch_size = resolve(&opts.batch_size, file, "batch_size", config.batch_size)?;
    config.lr0 = resolve(&opts.lr0, file, "lr0", config.lr0)?;
    config.momentum = resolve(&opts.momentum, file, "momentum", config.momentum)?;
    config.weight_decay = resolve(&opts.weight_decay, file, "weight_decay", config.weight_decay)?;
    let lr_decay_raw = resolve(&opts.lr_decay, file, "lr_decay", "0.5,0.75".to_string())?;
    config.lr_decay_epochs = parse_list(&lr_decay_raw, "lr_decay fraction")?;
    let widths_raw = resolve(&opts.widths, file, "widths", "64,64".to_string())?;
    config.backbone_widths = parse_list(&widths_raw, "backbone width")?;
    config.seed = resolve(&opts.seed, file, "seed", config.seed)?;
    config.validate()?;

    manifest.push("head", kind.as_str());
    manifest.push("sigma", sigma);
    manifest.push("margin", margin);
    manifest.push("dataset", &dataset_spec);
    manifest.push("per_class", per_class);
    manifest.push("spread", spread);
    manifest.push("epochs", config.epochs);
    manifest.push("batch_size", config.batch_size);
    manifest.push("lr0", config.lr0);
    manifest.push("momentum", config.momentum);
    manifest.push("weight_decay", config.weight_decay);
    manifest.push("lr_decay", &lr_decay_raw);
    manifest.push("widths", &widths_raw);
    manifest.push("seed", config.seed);

    Ok(ResolvedTrain {
        config,
        dataset_spec,
        per_class,
        spread,
    })
}

fn default_sigma(kind: HeadKind) -> f64 {
    match kind {
        HeadKind::Symmetric => 16.0,
        HeadKind::Fc | HeadKind::SphereFace => 1.0,
        HeadKind::ArcFace => 64.0,
    }
}

fn default_margin(kind: HeadKind) -> f64 {
    match kind {
        HeadKind::ArcFace => 0.1,
        HeadKind::SphereFace => 4.0,
        _ => 0.0,
    }
}

/// Builds the dataset a training-family command asked for.
pub fn build_dataset(resolved: &ResolvedTrain) -> Result<SplitDataset, CliError> {
    let spec = &resolved.dataset_spec;
    if let Some(rest) = spec.strip_prefix("blobs:") {
        let (classes, d_in) = rest.split_once('x').ok_or_else(|| {
            CliError::usage(format!("bad dataset '{spec}': expected blobs:<classes>x<d_in>"))
        })?;
        let classes: usize = classes
            .parse()
            .map_err(|_| CliError::usage(format!("bad class count in '{spec}'")))?;
        let d_in: usize = d_in
            .parse()
            .map_err(|_| CliError::usage(format!("bad dimension in '{spec}'")))?;
        return Ok(make_blobs(
            classes,
            d_in,
            resolved.per_class,
            resolved.spread,
            resolved.config.seed,
        )?);
    }
    if let Some(rest) = spec.strip_prefix("idx:") {
        let paths: Vec<&str> = rest.split(',').collect();
        if paths.len() != 4 {
            return Err(CliError::usage(format!(
                "bad dataset '{spec}': expected idx:<timg>,<tlbl>,<eimg>,<elbl>"
            )));
        }
        let train = load_idx(Path::new(paths[0]), Path::new(paths[1]))?;
        let mut eval = load_idx(Path::new(paths[2]), Path::new(paths[3]))?;
        eval.split = Split::Eval;
        return Ok(SplitDataset::new(train, eval)?);
    }
    Err(CliError::usage(format!(
        "unknown dataset spec '{spec}' (expected blobs:... or idx:...)"
    )))
}

/// Parses one `--grid` entry: `kind[:sigma=a,b,...][:m=x,y,...]`, producing
/// the cross product of the listed hyperparameters.
pub fn parse_grid(raw: &str) -> Result<Vec<HeadSpec>, CliError> {
    let mut parts = raw.split(':');
    let kind = HeadKind::parse(parts.next().unwrap_or_default())?;
    let mut sigmas = vec![default_sigma(kind)];
    let mut margins = vec![default_margin(kind)];
    for part in parts {
        if let Some(list) = part.strip_prefix("sigma=") {
            sigmas = parse_list(list, "sigma")?;
        } else if let Some(list) = part.strip_prefix("m=") {
            margins = parse_list(list, "margin")?;
        } else {
            return Err(CliError::usage(format!(
                "bad grid component '{part}' in '{raw}'"
            )));
        }
    }
    let mut specs = Vec::new();
    for &sigma in &sigmas {
        for &margin in &margins {
            if sigma <= 0.0 {
                return Err(CliError::usage(format!("grid sigma must be > 0 in '{raw}'")));
            }
            if kind == HeadKind::SphereFace && (margin < 1.0 || margin.fract() != 0.0) {
                return Err(CliError::usage(format!(
                    "sphereface margin must be a positive integer in '{raw}'"
                )));
            }
            specs.push(HeadSpec {
                kind,
                sigma,
                margin,
            });
        }
    }
    Ok(specs)
}

/// Loads the config file named by the common args, if any.
pub fn open_file_config(path: &Option<std::path::PathBuf>) -> Result<FileConfig, CliError> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::empty()),
    }
}
