//! Desk-scale experiment engine: SGD training with the step schedule,
//! run logging, plane-rotation monitoring, seed-repeat stability studies,
//! and epoch timing.

pub mod data;
pub mod mlp;

pub use data::{load_idx, make_blobs, Dataset, Split, SplitDataset};
pub use mlp::Mlp;

use std::time::Instant;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::PlaneBasis;
use crate::head::loss::{accuracy, cross_entropy};
use crate::head::{init_head, Head, HeadKind, HeadSpec};
use crate::ops::Matrix;
use crate::par;
use crate::vector::angle_between;

const BACKBONE_STREAM: u64 = 0x6261_636b;
const HEAD_STREAM: u64 = 0x6865_6164;
const SHUFFLE_STREAM: u64 = 0x7368_7566;

/// A recorded loss at or above this value (or any non-finite loss) marks
/// the run as diverged.
pub const DIVERGENCE_LOSS_CAP: f64 = 1e4;

/// Full training configuration. The learning rate decays by an order of
/// magnitude as each fraction in `lr_decay_epochs` of the total duration is
/// reached.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay_epochs: Vec<f64>,
    pub seed: u64,
    pub head: HeadSpec,
    pub backbone_widths: Vec<usize>,
    pub sphere_lambda0: f64,
    pub sphere_lambda_min: f64,
}

impl TrainConfig {
    /// Momentum 0.9, weight decay 1e-4, lr 0.1 with decays at 50% and 75%
    /// of the run, batch 128, a 64-64 backbone.
    pub fn new(head: HeadSpec) -> Self {
        Self {
            epochs: 40,
            batch_size: 128,
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            lr_decay_epochs: vec![0.5, 0.75],
            seed: 1,
            head,
            backbone_widths: vec![64, 64],
            sphere_lambda0: 1000.0,
            sphere_lambda_min: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if self.lr0 < 0.0 || !self.lr0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lr0 must be finite and non-negative, got {}",
                self.lr0
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::InvalidParameter("weight decay must be >= 0".into()));
        }
        if self
            .lr_decay_epochs
            .iter()
            .any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return Err(Error::InvalidParameter(
                "lr decay fractions must lie in (0, 1]".into(),
            ));
        }
        if self.sphere_lambda0 < 0.0 || self.sphere_lambda_min < 0.0 {
            return Err(Error::InvalidParameter(
                "annealing constants must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (1-indexed).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let mut lr = self.lr0;
        for f in &self.lr_decay_epochs {
            if epoch >= (f * self.epochs as f64).ceil() as usize {
                lr *= 0.1;
            }
        }
        lr
    }
}

/// Annealing blend for the multiplicative-margin head:
/// `max(lambda_min, lambda0 / (1 + 0.1 * iteration))`.
pub fn sphere_lambda(lambda0: f64, lambda_min: f64, iteration: u64) -> f64 {
    (lambda0 / (1.0 + 0.1 * iteration as f64)).max(lambda_min)
}

#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub eval_loss: f64,
    pub eval_acc: f64,
    /// Largest principal angle between this epoch's plane span and the
    /// previous snapshot (symmetric head only).
    pub plane_delta_deg: Option<f64>,
    /// Raw angular step of the first basis vector between the same
    /// snapshots; reported alongside the span angle, asserted on by
    /// nothing.
    pub n1_step_deg: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub epochs: Vec<EpochRecord>,
    pub best_eval_acc: f64,
    pub diverged: bool,
}

fn loss_diverged(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS_CAP
}

impl RunLog {
    /// CSV with header
    /// `epoch,train_loss,train_acc,eval_loss,eval_acc,plane_delta_deg,seconds`.
    /// Floats print in shortest round-trip form; the plane column is empty
    /// for heads without a plane.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,train_loss,train_acc,eval_loss,eval_acc,plane_delta_deg,seconds\n");
        for r in &self.epochs {
            let plane = r
                .plane_delta_deg
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.train_acc, r.eval_loss, r.eval_acc, plane, r.seconds
            ));
        }
        out
    }
}

struct Model {
    mlp: Mlp,
    head: Head,
    velocities: Vec<Vec<f64>>,
    global_step: u64,
}

impl Model {
    fn new(cfg: &TrainConfig, input_dim: usize, classes: usize) -> Result<Self> {
        let mlp = Mlp::new(
            input_dim,
            &cfg.backbone_widths,
            derive_seed(cfg.seed, BACKBONE_STREAM),
        )?;
        let head = init_head(
            &cfg.head,
            classes,
            mlp.output_dim(),
            derive_seed(cfg.seed, HEAD_STREAM),
        )?;
        let velocities = mlp
            .param_sizes()
            .into_iter()
            .chain(head.param_sizes())
            .map(|len| vec![0.0; len])
            .collect();
        Ok(Self {
            mlp,
            head,
            velocities,
            global_step: 0,
        })
    }

    fn basis(&self) -> Option<PlaneBasis> {
        match &self.head {
            Head::Symmetric(h) => h.basis().ok(),
            _ => None,
        }
    }

    fn gather(data: &Dataset, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let d = data.input_dim();
        let mut x = Matrix::zeros(indices.len(), d);
        let mut y = Vec::with_capacity(indices.len());
        for (row, &idx) in indices.iter().enumerate() {
            x.row_mut(row).copy_from_slice(data.features.row(idx));
            y.push(data.labels[idx]);
        }
        (x, y)
    }

    /// One pass over the shuffled training set. Returns the mean loss, the
    /// accuracy, and whether a batch tripped the divergence cap (in which
    /// case the returned loss is the tripping value and the epoch stopped
    /// there).
    fn run_train_epoch(
        &mut self,
        cfg: &TrainConfig,
        train: &Dataset,
        epoch: usize,
        lr: f64,
    ) -> Result<(f64, f64, bool)> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order: Vec<usize> = (0..train.len()).collect();
        let shuffle_seed = derive_seed(derive_seed(cfg.seed, SHUFFLE_STREAM), epoch as u64);
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));

        let mut loss_sum = 0.0;
        let mut hit_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = Self::gather(train, chunk);
            let cache = self.mlp.forward(&x)?;
            if matches!(self.head.kind(), HeadKind::SphereFace) {
                self.head.set_anneal_lambda(sphere_lambda(
                    cfg.sphere_lambda0,
                    cfg.sphere_lambda_min,
                    self.global_step,
                ));
            }
            let logits = self.head.forward(&cache.features, Some(&y))?;
            let (loss, d_logits) = cross_entropy(&logits, &y)?;
            if loss_diverged(loss) {
                // report the tripping value itself; the caller records it
                return Ok((loss, hit_sum / seen.max(1) as f64, true));
            }
            loss_sum += loss * y.len() as f64;
            hit_sum += accuracy(&logits, &y) * y.len() as f64;
            seen += y.len();

            let (h_grads, d_features) = self.head.backward(&cache.features, Some(&y), &d_logits)?;
            let m_grads = self.mlp.backward(&cache, &d_features);

            let mut slot = 0usize;
            let velocities = &mut self.velocities;
            let (mu, wd) = (cfg.momentum, cfg.weight_decay);
            let mut step = |p: &mut [f64], g: &[f64]| {
                let v = &mut velocities[slot];
                slot += 1;
                for i in 0..p.len() {
                    v[i] = mu * v[i] + g[i] + wd * p[i];
                    p[i] -= lr * v[i];
                }
            };
            self.mlp.visit_params_mut(&m_grads, &mut step);
            self.head.visit_params_mut(&h_grads, &mut step);
            self.global_step += 1;
        }
        Ok((loss_sum / seen as f64, hit_sum / seen as f64, false))
    }

    /// Margin-free scoring pass over a dataset.
    fn evaluate(&self, data: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
        let mut loss_sum = 0.0;
        let mut hit_sum = 0.0;
        let all: Vec<usize> = (0..data.len()).collect();
        for chunk in all.chunks(batch_size) {
            let (x, y) = Self::gather(data, chunk);
            let cache = self.mlp.forward(&x)?;
            let logits = self.head.forward(&cache.features, None)?;
            let (loss, _) = cross_entropy(&logits, &y)?;
            loss_sum += loss * y.len() as f64;
            hit_sum += accuracy(&logits, &y) * y.len() as f64;
        }
        Ok((loss_sum / data.len() as f64, hit_sum / data.len() as f64))
    }
}

/// SGD training with momentum, uniform weight decay, and the step LR
/// schedule. Deterministic per `(config, dataset, seed)`: the shuffle order
/// is derived from the seed and epoch alone, and every gradient reduction
/// runs in a fixed order.
///
/// Divergence (a recorded epoch loss that is non-finite or above
/// [`DIVERGENCE_LOSS_CAP`]) halts the run early and is reported in the log,
/// not as an error.
pub fn train(cfg: &TrainConfig, dataset: &SplitDataset) -> Result<RunLog> {
    train_full(cfg, dataset).map(|(log, _)| log)
}

/// [`train`], also handing back the trained head for checkpointing.
pub fn train_full(cfg: &TrainConfig, dataset: &SplitDataset) -> Result<(RunLog, Head)> {
    cfg.validate()?;
    if dataset.train.is_empty() || dataset.eval.is_empty() {
        return Err(Error::InvalidParameter(
            "train and eval splits must be non-empty".into(),
        ));
    }
    let classes = dataset.class_count();
    let mut model = Model::new(cfg, dataset.train.input_dim(), classes)?;
    let mut prev_basis = model.basis();

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best_eval_acc = 0.0f64;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at_epoch(epoch);
        let (train_loss, train_acc, tripped) =
            model.run_train_epoch(cfg, &dataset.train, epoch, lr)?;
        let (eval_loss, eval_acc) = model.evaluate(&dataset.eval, cfg.batch_size)?;

        let (plane_delta_deg, n1_step_deg) = match (&prev_basis, model.basis()) {
            (Some(prev), Some(cur)) => {
                let delta = plane_rotation_monitor(prev, &cur);
                let step = angle_between(prev.n1(), cur.n1()).to_degrees();
                prev_basis = Some(cur);
                (Some(delta), Some(step))
            }
            _ => (None, None),
        };

        best_eval_acc = best_eval_acc.max(eval_acc);
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            eval_loss,
            eval_acc,
            plane_delta_deg,
            n1_step_deg,
            seconds: started.elapsed().as_secs_f64(),
        });
        if tripped || loss_diverged(train_loss) || loss_diverged(eval_loss) {
            break;
        }
    }
    let diverged = epochs
        .iter()
        .any(|r| loss_diverged(r.train_loss) || loss_diverged(r.eval_loss));
    Ok((
        RunLog {
            epochs,
            best_eval_acc,
            diverged,
        },
        model.head,
    ))
}

/// Largest principal angle between the spans of two plane bases, in
/// degrees. Depends only on the spans: re-parameterizing a basis inside its
/// own plane reports zero.
pub fn plane_rotation_monitor(prev: &PlaneBasis, cur: &PlaneBasis) -> f64 {
    assert_eq!(prev.dim(), cur.dim(), "plane monitor: dimension mismatch");
    // cross-Gram matrix of the two orthonormal pairs
    let m11 = prev.n1().dot(cur.n1());
    let m12 = prev.n1().dot(cur.n2());
    let m21 = prev.n2().dot(cur.n1());
    let m22 = prev.n2().dot(cur.n2());
    // singular values via the eigenvalues of M^T M
    let a = m11 * m11 + m21 * m21;
    let b = m11 * m12 + m21 * m22;
    let c = m12 * m12 + m22 * m22;
    let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
    let smallest_sq = 0.5 * (a + c - disc);
    let s = smallest_sq.clamp(0.0, 1.0).sqrt();
    s.clamp(-1.0, 1.0).acos().to_degrees()
}

/// One stability cell: a head configuration, a repeat index, the seed that
/// repeat ran with, and its best accuracy (`None` when the run diverged).
#[derive(Clone, Debug)]
pub struct StabilityCell {
    pub kind: HeadKind,
    pub sigma: f64,
    pub margin: f64,
    pub repeat: usize,
    pub seed: u64,
    pub best_eval_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StabilityTable {
    pub cells: Vec<StabilityCell>,
}

impl StabilityTable {
    /// CSV with header `kind,sigma,m,repeat,seed,best_eval_acc_or_x`;
    /// diverged cells carry the marker `x`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,sigma,m,repeat,seed,best_eval_acc_or_x\n");
        for cell in &self.cells {
            let outcome = cell
                .best_eval_acc
                .map(|a| format!("{a:.6}"))
                .unwrap_or_else(|| "x".into());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                cell.kind.as_str(),
                cell.sigma,
                cell.margin,
                cell.repeat,
                cell.seed,
                outcome
            ));
        }
        out
    }

    /// Max-minus-min best accuracy across the finite repeats of one
    /// configuration; `None` when no repeat finished.
    pub fn accuracy_spread(&self, kind: HeadKind, sigma: f64, margin: f64) -> Option<f64> {
        let accs: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.kind == kind && c.sigma == sigma && c.margin == margin)
            .filter_map(|c| c.best_eval_acc)
            .collect();
        if accs.is_empty() {
            return None;
        }
        let lo = accs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(hi - lo)
    }

    /// True when some repeats of a configuration diverged and others did
    /// not.
    pub fn divergence_disagreement(&self, kind: HeadKind, sigma: f64, margin: f64) -> bool {
        let outcomes: Vec<bool> = self
            .cells
            .iter()
            .filter(|c| c.kind == kind && c.sigma == sigma && c.margin == margin)
            .map(|c| c.best_eval_acc.is_none())
            .collect();
        outcomes.iter().any(|&d| d) && outcomes.iter().any(|&d| !d)
    }

    pub fn diverged_count(&self, kind: HeadKind) -> usize {
        self.cells
            .iter()
            .filter(|c| c.kind == kind && c.best_eval_acc.is_none())
            .count()
    }
}

/// Runs every head configuration in `grid` for `repeats` seeds each
/// (seed = base seed + repeat index, recorded per cell). Cells are
/// independent and may execute concurrently; results merge in
/// `(grid, repeat)` order.
pub fn stability_study(
    grid: &[HeadSpec],
    repeats: usize,
    base: &TrainConfig,
    dataset: &SplitDataset,
) -> Result<StabilityTable> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be >= 1".into()));
    }
    base.validate()?;
    let jobs: Vec<(HeadSpec, usize)> = grid
        .iter()
        .flat_map(|spec| (0..repeats).map(move |r| (*spec, r)))
        .collect();
    let cells = par::map_indexed(jobs.len(), par::PAR_THRESHOLD, |j| {
        let (spec, repeat) = jobs[j];
        let mut cfg = base.clone();
        cfg.head = spec;
        cfg.seed = base.seed + repeat as u64;
        let log = train(&cfg, dataset)?;
        Ok(StabilityCell {
            kind: spec.kind,
            sigma: spec.sigma,
            margin: spec.margin,
            repeat,
            seed: cfg.seed,
            best_eval_acc: if log.diverged {
                None
            } else {
                Some(log.best_eval_acc)
            },
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(StabilityTable { cells })
}

/// Per-head-kind wall-clock seconds per training epoch under an identical
/// backbone and dataset.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub kind: HeadKind,
    pub repeats: usize,
    pub mean_sec: f64,
    pub std_sec: f64,
}

/// Times `repeats` training epochs (no evaluation pass) for each head kind
/// under the base configuration. `repeats >= 3` so the standard deviation
/// means something.
pub fn bench_epoch(
    base: &TrainConfig,
    dataset: &SplitDataset,
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    if repeats < 3 {
        return Err(Error::InvalidParameter("bench needs repeats >= 3".into()));
    }
    base.validate()?;
    let specs = [
        HeadSpec::fc(),
        HeadSpec::sphereface(4),
        HeadSpec::arcface(64.0, 0.1),
        HeadSpec::symmetric(16.0),
    ];
    let classes = dataset.class_count();
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut cfg = base.clone();
        cfg.head = spec;
        let mut model = Model::new(&cfg, dataset.train.input_dim(), classes)?;
        let mut times = Vec::with_capacity(repeats);
        for epoch in 1..=repeats {
            let lr = cfg.lr_at_epoch(epoch.min(cfg.epochs));
            let started = Instant::now();
            let _ = model.run_train_epoch(&cfg, &dataset.train, epoch, lr)?;
            times.push(started.elapsed().as_secs_f64());
        }
        let mean = times.iter().sum::<f64>() / repeats as f64;
        let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / (repeats - 1) as f64;
        rows.push(BenchRow {
            kind: spec.kind,
            repeats,
            mean_sec: mean,
            std_sec: var.sqrt(),
        });
    }
    Ok(rows)
}

/// CSV for [`bench_epoch`] results: `kind,repeats,mean_sec,std_sec`.
pub fn bench_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("kind,repeats,mean_sec,std_sec\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.kind.as_str(),
            r.repeats,
            r.mean_sec,
            r.std_sec
        ));
    }
    out
}
