//! Multi-task training: hybrid sequencing loss (direct anchoring + sampled
//! pairwise ordering) plus biomarker-count-normalized staging loss.
//!
//! One cohort is one batch: each step runs a full forward on a dataset,
//! computes `lambda_seq * (0.5 L_direct + 0.5 L_pair) + lambda_stage *
//! L_stage`, backpropagates and applies one Adam update. Ordering targets
//! are rank positions normalized to [0, 1] for discrete-event experiments
//! and min-max-normalized event times for continuous ones; staging targets
//! are the ordinal stages for every experiment.

use crate::error::Error;
use crate::model::{ModelConfig, TempoModel};
use crate::rng::{derive_seed, Xoshiro256pp};
use crate::scalar::Scalar;
use crate::sim::{generate_dataset, Cohort, ExperimentConfig, ExperimentDesign, GroundTruth};
use crate::tensor::{Adam, AdamConfig, NodeId, Tape, Tensor};
use crate::Result;
use std::fs;
use std::path::Path;

/// Loss mixing weights.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub lambda_seq: f64,
    pub lambda_stage: f64,
    pub seq_direct_weight: f64,
    pub seq_pair_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_seq: 1.0,
            lambda_stage: 1.0,
            seq_direct_weight: 0.5,
            seq_pair_weight: 0.5,
        }
    }
}

/// Training-run configuration.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub n_train_datasets: usize,
    pub n_val_datasets: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Sequencing targets are continuous event times (experiments 8-9)
    /// rather than discrete ranks.
    pub continuous_targets: bool,
    pub loss_weights: LossWeights,
}

impl TrainConfig {
    /// Defaults matched to the full-scale protocol: 950 training datasets,
    /// 50 validation datasets, 25 epochs, Adam at 1e-3.
    pub fn for_experiment(experiment_id: u8, seed: u64) -> Result<Self> {
        let design = ExperimentDesign::for_experiment(experiment_id)?;
        Ok(TrainConfig {
            n_train_datasets: 950,
            n_val_datasets: 50,
            epochs: 25,
            lr: 1e-3,
            seed,
            continuous_targets: design.continuous_targets(),
            loss_weights: LossWeights::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1".to_string()));
        }
        if self.n_train_datasets == 0 || self.n_val_datasets == 0 {
            return Err(Error::config("dataset counts must be >= 1".to_string()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

// Seed-derivation tags for the training-side streams.
const TAG_INIT: u64 = 10;
const TAG_PAIRS: u64 = 11;
const TAG_VAL_PAIRS: u64 = 12;
const TAG_TRAIN_POOL: u64 = 13;
const TAG_VAL_POOL: u64 = 14;

/// Supervision extracted from ground truth: sequencing targets in [0, 1],
/// ordinal stage targets, and the list of valid (distinct-rank) pairs.
#[derive(Clone, Debug)]
pub struct TrainTargets {
    pub seq: Vec<f64>,
    pub stage: Vec<u32>,
    pub valid_pairs: Vec<(usize, usize)>,
}

impl TrainTargets {
    pub fn from_truth(truth: &GroundTruth, continuous: bool) -> Result<Self> {
        let b = truth.xi.len();
        if b < 2 {
            return Err(Error::config("need at least 2 biomarkers".to_string()));
        }
        let seq: Vec<f64> = if continuous {
            let min = truth.xi.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = truth.xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max - min <= 0.0 {
                return Err(Error::Degenerate("event times"));
            }
            truth.xi.iter().map(|&t| (t - min) / (max - min)).collect()
        } else {
            truth.xi.iter().map(|&r| (r - 1.0) / (b as f64 - 1.0)).collect()
        };
        let mut valid_pairs = Vec::new();
        for a in 0..b {
            for p in (a + 1)..b {
                if truth.xi[a] != truth.xi[p] {
                    valid_pairs.push((a, p));
                }
            }
        }
        Ok(TrainTargets {
            seq,
            stage: truth.y_star.clone(),
            valid_pairs,
        })
    }
}

/// A dataset ready for training.
#[derive(Clone, Debug)]
pub struct TrainDataset {
    pub cohort: Cohort,
    pub truth: GroundTruth,
    pub targets: TrainTargets,
}

impl TrainDataset {
    pub fn new(cohort: Cohort, truth: GroundTruth, continuous: bool) -> Result<Self> {
        let targets = TrainTargets::from_truth(&truth, continuous)?;
        Ok(TrainDataset {
            cohort,
            truth,
            targets,
        })
    }
}

/// Mean squared error between scores and their normalized targets.
pub fn loss_direct(s: &[f64], t: &[f64]) -> f64 {
    debug_assert_eq!(s.len(), t.len());
    s.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>() / s.len() as f64
}

/// Binary cross-entropy of `sigmoid(s_b - s_a)` against `1[r_a < r_b]`,
/// i.e. the Bradley-Terry log-likelihood of the observed order.
pub fn loss_pair_discrete(s_a: f64, s_b: f64, r_a: f64, r_b: f64) -> Result<f64> {
    if r_a == r_b {
        return Err(Error::InvalidPair { rank: r_a });
    }
    let d = s_b - s_a;
    // y = 1 -> -ln sigmoid(d) = softplus(-d); y = 0 -> softplus(d).
    let x = if r_a < r_b { -d } else { d };
    Ok(x.max(0.0) + (-x.abs()).exp().ln_1p())
}

/// Squared difference between the predicted score gap and the true time
/// gap.
pub fn loss_pair_continuous(s_a: f64, s_b: f64, t_a: f64, t_b: f64) -> f64 {
    let d = (s_b - s_a) - (t_b - t_a);
    d * d
}

/// Mean squared staging error normalized by the squared biomarker count.
pub fn loss_stage(y_hat: &[f64], y_star: &[u32], n_biomarkers: usize) -> f64 {
    debug_assert_eq!(y_hat.len(), y_star.len());
    let mse = y_hat
        .iter()
        .zip(y_star)
        .map(|(&p, &t)| {
            let d = p - t as f64;
            d * d
        })
        .sum::<f64>()
        / y_hat.len() as f64;
    mse / (n_biomarkers * n_biomarkers) as f64
}

/// Component values of one loss evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepLosses {
    pub total: f64,
    /// Unweighted sequencing component (direct/pair mix).
    pub seq: f64,
    pub direct: f64,
    pub pair: f64,
    /// Unweighted staging component.
    pub stage: f64,
    pub pair_skipped: bool,
}

/// Builds the full loss on the tape. Returns the loss node plus component
/// values. `pair` is the sampled biomarker pair (None when no valid pair
/// exists: the pair term is skipped).
fn build_loss<T: Scalar>(
    tape: &mut Tape<T>,
    scores: NodeId,
    stages: NodeId,
    ds: &TrainDataset,
    weights: &LossWeights,
    continuous: bool,
    pair: Option<(usize, usize)>,
) -> Result<(NodeId, StepLosses)> {
    let b = ds.truth.xi.len();
    let t_seq = Tensor::new(
        vec![b, 1],
        ds.targets.seq.iter().map(|&v| T::from_f64(v)).collect(),
    )?;
    let direct = tape.mse_loss(scores, t_seq)?;

    let pair_node = match pair {
        Some((a, p)) => {
            let s_a = tape.pick(scores, a)?;
            let s_b = tape.pick(scores, p)?;
            let d = tape.sub(s_b, s_a)?;
            if continuous {
                let gap = ds.targets.seq[p] - ds.targets.seq[a];
                Some(tape.mse_loss(d, Tensor::scalar(T::from_f64(gap)))?)
            } else {
                // softplus(-d) for r_a < r_b, softplus(d) otherwise.
                let flip = if ds.truth.xi[a] < ds.truth.xi[p] {
                    T::from_f64(-1.0)
                } else {
                    T::one()
                };
                let x = tape.scale(d, flip);
                Some(tape.softplus(x))
            }
        }
        None => None,
    };

    let j = ds.targets.stage.len();
    let t_stage = Tensor::new(
        vec![j, 1],
        ds.targets.stage.iter().map(|&v| T::from_f64(v as f64)).collect(),
    )?;
    let stage_mse = tape.mse_loss(stages, t_stage)?;
    let stage = tape.scale(stage_mse, T::from_f64(1.0 / (b * b) as f64));

    let direct_w = tape.scale(direct, T::from_f64(weights.seq_direct_weight));
    let seq = match pair_node {
        Some(p) => {
            let pair_w = tape.scale(p, T::from_f64(weights.seq_pair_weight));
            tape.add(direct_w, pair_w)?
        }
        None => direct_w,
    };
    let seq_w = tape.scale(seq, T::from_f64(weights.lambda_seq));
    let stage_w = tape.scale(stage, T::from_f64(weights.lambda_stage));
    let total = tape.add(seq_w, stage_w)?;

    let losses = StepLosses {
        total: tape.scalar_value(total),
        seq: tape.scalar_value(seq),
        direct: tape.scalar_value(direct),
        pair: pair_node.map(|p| tape.scalar_value(p)).unwrap_or(0.0),
        stage: tape.scalar_value(stage),
        pair_skipped: pair.is_none(),
    };
    Ok((total, losses))
}

fn sample_pair(ds: &TrainDataset, rng: &mut Xoshiro256pp) -> Option<(usize, usize)> {
    if ds.targets.valid_pairs.is_empty() {
        return None;
    }
    let idx = rng.next_below(ds.targets.valid_pairs.len() as u64) as usize;
    Some(ds.targets.valid_pairs[idx])
}

/// One optimizer step on one dataset (the cohort is the batch): forward,
/// direct loss over all scores, one sampled valid pair, staging loss over
/// all patients, backward, Adam update.
pub fn training_step<T: Scalar>(
    model: &mut TempoModel<T>,
    adam: &mut Adam<T>,
    ds: &TrainDataset,
    weights: &LossWeights,
    continuous: bool,
    pair_rng: &mut Xoshiro256pp,
) -> Result<StepLosses> {
    model.params_mut().zero_grad();
    let mut tape = Tape::new();
    let nodes = model.forward_on_tape(&mut tape, &ds.cohort)?;
    let pair = sample_pair(ds, pair_rng);
    let (total, losses) =
        build_loss(&mut tape, nodes.scores, nodes.stages, ds, weights, continuous, pair)?;
    if !losses.total.is_finite() {
        return Err(Error::non_finite("training loss"));
    }
    tape.backward(total, model.params_mut())?;
    adam.step(model.params_mut());
    Ok(losses)
}

/// Loss evaluation without a gradient step (validation).
pub fn evaluate_loss<T: Scalar>(
    model: &TempoModel<T>,
    ds: &TrainDataset,
    weights: &LossWeights,
    continuous: bool,
    pair_rng: &mut Xoshiro256pp,
) -> Result<StepLosses> {
    let mut tape = Tape::new();
    let nodes = model.forward_on_tape(&mut tape, &ds.cohort)?;
    let pair = sample_pair(ds, pair_rng);
    let (_, losses) =
        build_loss(&mut tape, nodes.scores, nodes.stages, ds, weights, continuous, pair)?;
    Ok(losses)
}

/// Per-epoch mean losses.
#[derive(Clone, Copy, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_seq: f64,
    pub train_stage: f64,
    pub val_loss: f64,
    pub val_seq: f64,
    pub val_stage: f64,
}

pub struct FitResult<T> {
    /// Weights from the epoch with the lowest validation loss.
    pub model: TempoModel<T>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Core training loop over pre-built datasets. Datasets are visited in a
/// fixed order each epoch; with the pair stream seeded, the whole run is
/// deterministic in (config, datasets).
pub fn fit_datasets<T: Scalar>(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    train: &[TrainDataset],
    val: &[TrainDataset],
) -> Result<FitResult<T>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("need at least one training and one validation dataset".to_string()));
    }
    let mut model = TempoModel::<T>::new(*model_cfg, derive_seed(cfg.seed, TAG_INIT))?;
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), model.params());
    let mut pair_rng = Xoshiro256pp::stream(cfg.seed, TAG_PAIRS);
    let mut warned_skip = false;

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;
    let mut best_val = f64::INFINITY;
    let mut best_params = model.params().clone();

    for epoch in 1..=cfg.epochs {
        let mut tr = MeanLosses::default();
        for ds in train {
            let losses = training_step(&mut model, &mut adam, ds, &cfg.loss_weights, cfg.continuous_targets, &mut pair_rng)
                .map_err(|e| Error::config(format!("epoch {epoch}: {e}")))?;
            if losses.pair_skipped && !warned_skip {
                eprintln!("warning: dataset without a valid biomarker pair; pair loss skipped");
                warned_skip = true;
            }
            tr.push(&losses);
        }
        let mut va = MeanLosses::default();
        let mut val_pair_rng =
            Xoshiro256pp::from_seed(derive_seed(derive_seed(cfg.seed, TAG_VAL_PAIRS), epoch as u64));
        for ds in val {
            let losses =
                evaluate_loss(&model, ds, &cfg.loss_weights, cfg.continuous_targets, &mut val_pair_rng)?;
            va.push(&losses);
        }
        let entry = EpochLog {
            epoch,
            train_loss: tr.total(),
            train_seq: tr.seq(),
            train_stage: tr.stage(),
            val_loss: va.total(),
            val_seq: va.seq(),
            val_stage: va.stage(),
        };
        log.push(entry);
        if entry.val_loss < best_val {
            best_val = entry.val_loss;
            best_epoch = epoch;
            best_params = model.params().clone();
        }
    }

    *model.params_mut() = best_params;
    Ok(FitResult {
        model,
        log,
        best_epoch,
    })
}

/// Generates the training and validation pools for an experiment and runs
/// the loop. Dataset seeds derive from the experiment seed; model
/// initialization and pair sampling derive from the training seed.
pub fn fit<T: Scalar>(
    cfg: &TrainConfig,
    exp: &ExperimentConfig,
    model_cfg: &ModelConfig,
) -> Result<FitResult<T>> {
    cfg.validate()?;
    exp.validate()?;
    let make = |pool_tag: u64, count: usize| -> Result<Vec<TrainDataset>> {
        let pool_seed = derive_seed(exp.seed, pool_tag);
        (0..count)
            .map(|i| {
                let mut ds_cfg = exp.clone();
                ds_cfg.seed = derive_seed(pool_seed, i as u64);
                let (cohort, truth) = generate_dataset(&ds_cfg)?;
                TrainDataset::new(cohort, truth, cfg.continuous_targets)
            })
            .collect()
    };
    let train = make(TAG_TRAIN_POOL, cfg.n_train_datasets)?;
    let val = make(TAG_VAL_POOL, cfg.n_val_datasets)?;
    fit_datasets(cfg, model_cfg, &train, &val)
}

#[derive(Default)]
struct MeanLosses {
    total: f64,
    seq: f64,
    stage: f64,
    n: usize,
}

impl MeanLosses {
    fn push(&mut self, l: &StepLosses) {
        self.total += l.total;
        self.seq += l.seq;
        self.stage += l.stage;
        self.n += 1;
    }
    fn total(&self) -> f64 {
        self.total / self.n as f64
    }
    fn seq(&self) -> f64 {
        self.seq / self.n as f64
    }
    fn stage(&self) -> f64 {
        self.stage / self.n as f64
    }
}

/// Writes the per-epoch log as CSV.
pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,train_seq,train_stage,val_loss,val_seq,val_stage\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch, e.train_loss, e.train_seq, e.train_stage, e.val_loss, e.val_seq, e.val_stage
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
