//! Evaluation: sequencing distance, staging error, event-time error,
//! cross-experiment matrices, consensus rankings, timelines and group
//! means.

mod report;

pub use report::{write_cross_matrix_csv, write_eval_report_csv, write_summary_json};

use crate::error::Error;
use crate::model::TempoModel;
use crate::scalar::Scalar;
use crate::sim::{Cohort, ExperimentDesign, GroundTruth};
use crate::Result;

/// How predicted scores map back to event-time units; must match the
/// normalization the model was trained with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetMode {
    /// Ranks normalized as (r - 1) / (B - 1); the inverse is the direct
    /// affine map back to rank units.
    DiscreteRank,
    /// Min-max normalized event times; scores are first min-max normalized
    /// themselves, which makes the mapping invariant to positive affine
    /// transforms of the scores.
    ContinuousMinMax,
}

impl TargetMode {
    pub fn for_experiment(experiment_id: u8) -> Result<Self> {
        Ok(if ExperimentDesign::for_experiment(experiment_id)?.continuous_targets() {
            TargetMode::ContinuousMinMax
        } else {
            TargetMode::DiscreteRank
        })
    }
}

/// How continuous stage predictions are compared to ordinal truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StagingMode {
    /// Clamp to [0, B], then round to the nearest integer (ground truth is
    /// ordinal).
    #[default]
    RoundClamp,
    /// Use the raw continuous prediction.
    Raw,
}

/// Ascending argsort with ties broken by index. Scores must be finite.
pub fn order_from_scores(scores: &[f64]) -> Result<Vec<usize>> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::non_finite("scores"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
    Ok(idx)
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::config(format!(
            "ordering length {} does not match {n} items",
            order.len()
        )));
    }
    for &i in order {
        if i >= n || seen[i] {
            return Err(Error::config(format!(
                "orderings are not permutations of the same {n} items"
            )));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Normalized Kendall tau distance: discordant pairs / C(B, 2), in [0, 1].
/// 0 is perfect alignment, 1 a full reversal. O(B log B) via merge-count.
pub fn normalized_kendall_tau(pred_order: &[usize], true_order: &[usize]) -> Result<f64> {
    let n = pred_order.len();
    if n < 2 {
        return Err(Error::config(format!("need at least 2 items, got {n}")));
    }
    check_permutation(pred_order, n)?;
    check_permutation(true_order, n)?;
    let mut pos = vec![0usize; n];
    for (p, &item) in true_order.iter().enumerate() {
        pos[item] = p;
    }
    let mut seq: Vec<usize> = pred_order.iter().map(|&item| pos[item]).collect();
    let mut buf = vec![0usize; n];
    let inversions = merge_count(&mut seq, &mut buf);
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(inversions as f64 / pairs)
}

/// Counts inversions while merge-sorting `seq` in place.
fn merge_count(seq: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = seq.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = seq.split_at_mut(mid);
    let mut inv = merge_count(left, buf) + merge_count(right, buf);
    let (mut i, mut j, mut k) = (0usize, 0usize, 0usize);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            // left[i..] are all greater than right[j].
            inv += (left.len() - i) as u64;
            buf[k] = right[j];
            j += 1;
        }
        k += 1;
    }
    buf[k..k + left.len() - i].copy_from_slice(&left[i..]);
    let tail = k + left.len() - i;
    buf[tail..tail + right.len() - j].copy_from_slice(&right[j..]);
    seq.copy_from_slice(&buf[..n]);
    inv
}

/// Mean absolute staging error against ordinal truth.
pub fn staging_mae(y_hat: &[f64], y_star: &[u32], n_biomarkers: usize, mode: StagingMode) -> f64 {
    debug_assert_eq!(y_hat.len(), y_star.len());
    let b = n_biomarkers as f64;
    y_hat
        .iter()
        .zip(y_star)
        .map(|(&p, &t)| {
            let p = match mode {
                StagingMode::RoundClamp => p.clamp(0.0, b).round(),
                StagingMode::Raw => p,
            };
            (p - t as f64).abs()
        })
        .sum::<f64>()
        / y_hat.len() as f64
}

/// Maps scores back to event-time units (inverting the training
/// normalization) and takes the mean absolute error against the true event
/// times.
pub fn sequence_mae(scores: &[f64], xi: &[f64], mode: TargetMode) -> Result<f64> {
    if scores.len() != xi.len() {
        return Err(Error::config(format!(
            "{} scores vs {} event times",
            scores.len(),
            xi.len()
        )));
    }
    let b = xi.len();
    let mapped: Vec<f64> = match mode {
        TargetMode::DiscreteRank => scores.iter().map(|&s| s * (b as f64 - 1.0) + 1.0).collect(),
        TargetMode::ContinuousMinMax => {
            let lo = xi.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= 0.0 {
                return Err(Error::Degenerate("event times"));
            }
            let t = continuous_timeline(scores)?;
            t.iter().map(|&u| u * (hi - lo) + lo).collect()
        }
    };
    Ok(mapped.iter().zip(xi).map(|(&m, &t)| (m - t).abs()).sum::<f64>() / b as f64)
}

/// Min-max normalization of scores to [0, 1]; the monotone map preserves
/// the predicted order.
pub fn continuous_timeline(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.len() < 2 {
        return Err(Error::config("need at least 2 scores".to_string()));
    }
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_finite() || hi - lo <= 0.0 {
        return Err(Error::Degenerate("timeline scores"));
    }
    Ok(scores.iter().map(|&s| (s - lo) / (hi - lo)).collect())
}

/// Mean predicted stage per group label, in first-appearance order.
pub fn staging_by_group(y_hat: &[f64], groups: &[String]) -> Vec<(String, f64)> {
    debug_assert_eq!(y_hat.len(), groups.len());
    let mut order: Vec<String> = Vec::new();
    let mut sums: std::collections::HashMap<&str, (f64, usize)> = std::collections::HashMap::new();
    for (g, &y) in groups.iter().zip(y_hat) {
        if !sums.contains_key(g.as_str()) {
            order.push(g.clone());
        }
        let e = sums.entry(g.as_str()).or_insert((0.0, 0));
        e.0 += y;
        e.1 += 1;
    }
    order
        .into_iter()
        .map(|g| {
            let (sum, n) = sums[g.as_str()];
            (g, sum / n as f64)
        })
        .collect()
}

/// Per-biomarker rank statistics across several orderings.
#[derive(Clone, Debug)]
pub struct Consensus {
    /// Mean rank position per biomarker (1-based ranks).
    pub mean: Vec<f64>,
    /// Sample standard deviation of the rank (0 for a single ordering).
    pub std: Vec<f64>,
    /// 95% CI half-width: 1.96 * std / sqrt(n).
    pub ci95: Vec<f64>,
    /// Consensus order: biomarkers by ascending mean rank, ties broken by
    /// lower std then index.
    pub order: Vec<usize>,
}

pub fn consensus_ranking(orderings: &[Vec<usize>]) -> Result<Consensus> {
    if orderings.is_empty() {
        return Err(Error::config("need at least one ordering".to_string()));
    }
    let b = orderings[0].len();
    for o in orderings {
        check_permutation(o, b)?;
    }
    let n = orderings.len() as f64;
    let mut mean = vec![0.0f64; b];
    for o in orderings {
        for (pos, &item) in o.iter().enumerate() {
            mean[item] += (pos + 1) as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut std = vec![0.0f64; b];
    if orderings.len() > 1 {
        for o in orderings {
            for (pos, &item) in o.iter().enumerate() {
                let d = (pos + 1) as f64 - mean[item];
                std[item] += d * d;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / (n - 1.0)).sqrt();
        }
    }
    let ci95: Vec<f64> = std.iter().map(|s| 1.96 * s / n.sqrt()).collect();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&a, &c| {
        mean[a]
            .partial_cmp(&mean[c])
            .unwrap()
            .then(std[a].partial_cmp(&std[c]).unwrap())
            .then(a.cmp(&c))
    });
    Ok(Consensus {
        mean,
        std,
        ci95,
        order,
    })
}

/// Mean / sample-std / normal-approximation CI summary of a metric across
/// datasets.
#[derive(Clone, Copy, Debug)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    /// 1.96 * std / sqrt(n).
    pub ci95: f64,
    pub n: usize,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Stats {
                mean: f64::NAN,
                std: f64::NAN,
                ci95: f64::NAN,
                n: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        Stats {
            mean,
            std,
            ci95: 1.96 * std / (n as f64).sqrt(),
            n,
        }
    }
}

/// Metrics for one dataset.
#[derive(Clone, Copy, Debug)]
pub struct DatasetEval {
    pub tau: f64,
    pub staging_mae: f64,
    pub sequence_mae: f64,
}

/// Computes all three metrics from raw predictions and ground truth.
pub fn evaluate_predictions(
    scores: &[f64],
    stages: &[f64],
    truth: &GroundTruth,
    mode: TargetMode,
) -> Result<DatasetEval> {
    let b = truth.xi.len();
    let pred_order = order_from_scores(scores)?;
    let true_order = order_from_scores(&truth.xi)?;
    Ok(DatasetEval {
        tau: normalized_kendall_tau(&pred_order, &true_order)?,
        staging_mae: staging_mae(stages, &truth.y_star, b, StagingMode::RoundClamp),
        sequence_mae: sequence_mae(scores, &truth.xi, mode)?,
    })
}

/// Runs a model on one cohort and evaluates it against the truth.
pub fn evaluate_model<T: Scalar>(
    model: &TempoModel<T>,
    cohort: &Cohort,
    truth: &GroundTruth,
    mode: TargetMode,
) -> Result<DatasetEval> {
    let out = model.forward(cohort)?;
    let scores: Vec<f64> = out.scores.iter().map(|&s| s.as_f64()).collect();
    let stages: Vec<f64> = out.stages.iter().map(|&s| s.as_f64()).collect();
    evaluate_predictions(&scores, &stages, truth, mode)
}

/// One row of an evaluation report; datasets that failed to evaluate keep
/// their error text and are excluded from aggregates.
#[derive(Clone, Debug)]
pub struct EvalRow {
    pub dataset: String,
    pub metrics: Option<DatasetEval>,
    pub error: Option<String>,
}

/// Per-dataset rows plus aggregate statistics over the successful ones.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub tau: Stats,
    pub staging: Stats,
    pub sequence: Stats,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let ok: Vec<&DatasetEval> = rows.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let tau: Vec<f64> = ok.iter().map(|m| m.tau).collect();
        let stage: Vec<f64> = ok.iter().map(|m| m.staging_mae).collect();
        let seq: Vec<f64> = ok.iter().map(|m| m.sequence_mae).collect();
        EvalReport {
            rows,
            tau: Stats::from_values(&tau),
            staging: Stats::from_values(&stage),
            sequence: Stats::from_values(&seq),
        }
    }

    pub fn n_failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Metric selector for cross-experiment matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossMetric {
    Tau,
    StageMae,
    SeqMae,
}

impl CrossMetric {
    pub fn extract(&self, m: &DatasetEval) -> f64 {
        match self {
            CrossMetric::Tau => m.tau,
            CrossMetric::StageMae => m.staging_mae,
            CrossMetric::SeqMae => m.sequence_mae,
        }
    }
}

/// A trained model entering a cross-experiment evaluation; the experiment
/// id pins the score-to-time inversion mode it was trained with.
pub struct CrossModel<'a, T> {
    pub label: String,
    pub model: &'a TempoModel<T>,
    pub experiment_id: u8,
}

/// A labelled suite of test datasets.
pub struct CrossSuite {
    pub label: String,
    pub datasets: Vec<(Cohort, GroundTruth)>,
}

/// Trained-by-tested matrix of a metric with row, column and grand means.
/// Cells where evaluation failed hold `None`; means skip them.
#[derive(Clone, Debug)]
pub struct CrossMatrix {
    pub metric: CrossMetric,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub entries: Vec<Vec<Option<f64>>>,
    pub row_means: Vec<Option<f64>>,
    pub col_means: Vec<Option<f64>>,
    pub grand_mean: Option<f64>,
}

fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

impl CrossMatrix {
    pub fn from_entries(
        metric: CrossMetric,
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        entries: Vec<Vec<Option<f64>>>,
    ) -> Self {
        let row_means: Vec<Option<f64>> = entries
            .iter()
            .map(|row| mean_present(row.iter().copied()))
            .collect();
        let col_means: Vec<Option<f64>> = (0..col_labels.len())
            .map(|c| mean_present(entries.iter().map(|row| row[c])))
            .collect();
        let grand_mean = mean_present(entries.iter().flat_map(|row| row.iter().copied()));
        CrossMatrix {
            metric,
            row_labels,
            col_labels,
            entries,
            row_means,
            col_means,
            grand_mean,
        }
    }

    pub fn has_missing(&self) -> bool {
        self.entries.iter().any(|row| row.iter().any(|c| c.is_none()))
    }
}

/// Evaluates every model on every suite: entry (i, j) is the mean metric
/// of model i over suite j.
pub fn cross_experiment_matrix<T: Scalar>(
    models: &[CrossModel<'_, T>],
    suites: &[CrossSuite],
    metric: CrossMetric,
) -> Result<CrossMatrix> {
    if models.is_empty() || suites.is_empty() {
        return Err(Error::config("need at least one model and one suite".to_string()));
    }
    let b = models[0].model.config().n_biomarkers;
    if models.iter().any(|m| m.model.config().n_biomarkers != b) {
        return Err(Error::config("models disagree on biomarker count".to_string()));
    }
    let mut entries = Vec::with_capacity(models.len());
    for m in models {
        let mode = TargetMode::for_experiment(m.experiment_id)?;
        let mut row = Vec::with_capacity(suites.len());
        for suite in suites {
            if suite.datasets.is_empty() {
                row.push(None);
                continue;
            }
            let mut values = Vec::with_capacity(suite.datasets.len());
            let mut failed = false;
            for (cohort, truth) in &suite.datasets {
                match evaluate_model(m.model, cohort, truth, mode) {
                    Ok(e) => values.push(metric.extract(&e)),
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            row.push(if failed {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            });
        }
        entries.push(row);
    }
    Ok(CrossMatrix::from_entries(
        metric,
        models.iter().map(|m| m.label.clone()).collect(),
        suites.iter().map(|s| s.label.clone()).collect(),
        entries,
    ))
}
