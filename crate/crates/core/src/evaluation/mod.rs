//! Classification evaluation: per-run predictions are folded into per-image
//! verdicts (majority vote) and scores (mean of run verdicts), then scored
//! per context (precision, recall, F1, ROC-AUC) and aggregated with micro,
//! macro, weighted, and samples averaging.
//!
//! Degenerate inputs produce explicit `None` markers instead of NaN; the
//! averaging layer substitutes 0 for them and counts every substitution.

mod report;

pub use report::render_text;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ContextId, Dataset};
use crate::num::Real;
use crate::prompting::RunResult;
use crate::MetricScalar;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("no runs to aggregate")]
    EmptyRuns,
    #[error("no contexts to average")]
    NoContexts,
    #[error("no sample rows to average")]
    EmptySamples,
    #[error("sample row {row}: {preds} predictions vs {labels} labels")]
    RaggedRow {
        row: usize,
        preds: usize,
        labels: usize,
    },
    #[error("prediction and label image sets differ: {0}")]
    ImageSetMismatch(String),
    #[error("duplicate prediction for image {image:?}, context {context:?}, run {run}")]
    DuplicatePrediction {
        image: String,
        context: String,
        run: usize,
    },
    #[error("prediction for unknown cell (image {image:?}, context {context:?})")]
    UnknownCell { image: String, context: String },
    #[error("run index {run} out of range (expected < {runs}) for image {image:?}")]
    RunOutOfRange { image: String, run: usize, runs: usize },
    #[error("{} prediction cell(s) missing; first: {}", .0.len(), .0.first().map(|c| c.describe()).unwrap_or_default())]
    MissingCells(Vec<MissingCell>),
}

/// One absent (image, context, run) prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingCell {
    pub image_id: String,
    pub context: ContextId,
    pub run_index: usize,
}

impl MissingCell {
    fn describe(&self) -> String {
        format!(
            "image {:?}, context {:?}, run {}",
            self.image_id,
            self.context.as_str(),
            self.run_index
        )
    }
}

/// Majority verdict over one cell's runs; exact ties resolve to negative.
pub fn majority_vote(runs: &[bool]) -> Result<bool, EvaluationError> {
    if runs.is_empty() {
        return Err(EvaluationError::EmptyRuns);
    }
    let positives = runs.iter().filter(|b| **b).count();
    Ok(positives * 2 > runs.len())
}

/// Fraction of positive runs, used as the score for ROC-AUC.
pub fn mean_probability<T: Real>(runs: &[bool]) -> Result<T, EvaluationError> {
    if runs.is_empty() {
        return Err(EvaluationError::EmptyRuns);
    }
    let positives = runs.iter().filter(|b| **b).count();
    Ok(T::from_count(positives) / T::from_count(runs.len()))
}

/// Standard binary confusion counts with the expert label as truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Actual positives.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn precision<T: Real>(&self) -> Option<T> {
        let denom = self.tp + self.fp;
        (denom > 0).then(|| T::from_count(self.tp) / T::from_count(denom))
    }

    pub fn recall<T: Real>(&self) -> Option<T> {
        let denom = self.tp + self.fn_;
        (denom > 0).then(|| T::from_count(self.tp) / T::from_count(denom))
    }

    /// Harmonic mean of precision and recall; 0 when both are defined and
    /// zero, undefined when either side is undefined.
    pub fn f1<T: Real>(&self) -> Option<T> {
        let p = self.precision::<T>()?;
        let r = self.recall::<T>()?;
        Some(f1_from(p, r))
    }

    pub fn add(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

fn f1_from<T: Real>(p: T, r: T) -> T {
    if (p + r).is_zero() {
        T::zero()
    } else {
        T::from_count(2) * p * r / (p + r)
    }
}

/// Count confusion cells for one context. Both maps must cover the same
/// image set.
pub fn confusion(
    preds: &BTreeMap<String, bool>,
    labels: &BTreeMap<String, bool>,
) -> Result<ConfusionMatrix, EvaluationError> {
    if preds.len() != labels.len() || !preds.keys().eq(labels.keys()) {
        let only_preds = preds.keys().find(|k| !labels.contains_key(*k));
        let only_labels = labels.keys().find(|k| !preds.contains_key(*k));
        return Err(EvaluationError::ImageSetMismatch(format!(
            "{} predictions vs {} labels (prediction-only: {:?}, label-only: {:?})",
            preds.len(),
            labels.len(),
            only_preds,
            only_labels
        )));
    }
    let mut matrix = ConfusionMatrix::default();
    for (image, pred) in preds {
        match (pred, labels[image]) {
            (true, true) => matrix.tp += 1,
            (true, false) => matrix.fp += 1,
            (false, true) => matrix.fn_ += 1,
            (false, false) => matrix.tn += 1,
        }
    }
    Ok(matrix)
}

/// Mann-Whitney ROC-AUC: the probability that a random positive outscores a
/// random negative, ties counting one half. Undefined when either class is
/// empty. Computed from average ranks; equal to the exhaustive pairwise
/// count because tied ranks contribute exact half-integers.
pub fn roc_auc<T: Real>(scored: &[(T, bool)]) -> Option<T> {
    let positives = scored.iter().filter(|(_, label)| *label).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .0
            .partial_cmp(&scored[b].0)
            .expect("scores must not be NaN")
    });

    // Average rank over each tie group, summed for positives.
    let mut positive_rank_sum = T::zero();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Ranks are 1-based: group spans ranks i+1 ..= j+1.
        let avg_rank = (T::from_count(i + 1) + T::from_count(j + 1)) / T::from_count(2);
        for &idx in &order[i..=j] {
            if scored[idx].1 {
                positive_rank_sum = positive_rank_sum + avg_rank;
            }
        }
        i = j + 1;
    }
    let p = T::from_count(positives);
    let u = positive_rank_sum - p * (p + T::one()) / T::from_count(2);
    Some(u / (p * T::from_count(negatives)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    Micro,
    Macro,
    Weighted,
}

/// One averaged (precision, recall, f1) triple. `undefined_substitutions`
/// counts the inputs that were undefined and entered the average as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub undefined_substitutions: usize,
}

/// Aggregate per-context confusion matrices.
///
/// Micro sums the matrices and derives all three metrics from the summed
/// counts (F1 from micro precision and recall). Macro takes the unweighted
/// mean of per-context metrics, weighted the support-weighted mean; in both,
/// per-context F1 values are averaged directly, and undefined values enter
/// as 0 and are counted.
pub fn average_metrics<T: Real>(
    per_context: &[(ConfusionMatrix, usize)],
    mode: AverageMode,
) -> Result<AverageMetrics<T>, EvaluationError> {
    if per_context.is_empty() {
        return Err(EvaluationError::NoContexts);
    }
    let mut substitutions = 0usize;
    let mut value_of = |metric: Option<T>| -> T {
        metric.unwrap_or_else(|| {
            substitutions += 1;
            T::zero()
        })
    };
    match mode {
        AverageMode::Micro => {
            let summed = per_context
                .iter()
                .fold(ConfusionMatrix::default(), |acc, (m, _)| acc.add(m));
            let p = value_of(summed.precision());
            let r = value_of(summed.recall());
            Ok(AverageMetrics {
                precision: p,
                recall: r,
                f1: f1_from(p, r),
                undefined_substitutions: substitutions,
            })
        }
        AverageMode::Macro => {
            let n = T::from_count(per_context.len());
            let mut sums = [T::zero(); 3];
            for (matrix, _) in per_context {
                sums[0] = sums[0] + value_of(matrix.precision());
                sums[1] = sums[1] + value_of(matrix.recall());
                sums[2] = sums[2] + value_of(matrix.f1());
            }
            Ok(AverageMetrics {
                precision: sums[0] / n,
                recall: sums[1] / n,
                f1: sums[2] / n,
                undefined_substitutions: substitutions,
            })
        }
        AverageMode::Weighted => {
            let total: usize = per_context.iter().map(|(_, s)| *s).sum();
            if total == 0 {
                // Every weight is zero; the weighted mean of nothing is
                // reported as zeros, one substitution per metric.
                return Ok(AverageMetrics {
                    precision: T::zero(),
                    recall: T::zero(),
                    f1: T::zero(),
                    undefined_substitutions: 3,
                });
            }
            let mut sums = [T::zero(); 3];
            for (matrix, support) in per_context {
                let w = T::from_count(*support);
                sums[0] = sums[0] + w * value_of(matrix.precision());
                sums[1] = sums[1] + w * value_of(matrix.recall());
                sums[2] = sums[2] + w * value_of(matrix.f1());
            }
            let t = T::from_count(total);
            Ok(AverageMetrics {
                precision: sums[0] / t,
                recall: sums[1] / t,
                f1: sums[2] / t,
                undefined_substitutions: substitutions,
            })
        }
    }
}

/// Samples average: precision/recall/F1 of each image's context vector
/// (undefined values enter as 0), averaged over images.
pub fn samples_average<T: Real>(
    rows: &[(&[bool], &[bool])],
) -> Result<AverageMetrics<T>, EvaluationError> {
    if rows.is_empty() {
        return Err(EvaluationError::EmptySamples);
    }
    let mut substitutions = 0usize;
    let mut sums = [T::zero(); 3];
    for (i, (preds, labels)) in rows.iter().enumerate() {
        if preds.len() != labels.len() {
            return Err(EvaluationError::RaggedRow {
                row: i,
                preds: preds.len(),
                labels: labels.len(),
            });
        }
        let tp = preds
            .iter()
            .zip(*labels)
            .filter(|(p, l)| **p && **l)
            .count();
        let pred_pos = preds.iter().filter(|p| **p).count();
        let actual_pos = labels.iter().filter(|l| **l).count();
        let p = if pred_pos > 0 {
            T::from_count(tp) / T::from_count(pred_pos)
        } else {
            substitutions += 1;
            T::zero()
        };
        let r = if actual_pos > 0 {
            T::from_count(tp) / T::from_count(actual_pos)
        } else {
            substitutions += 1;
            T::zero()
        };
        sums[0] = sums[0] + p;
        sums[1] = sums[1] + r;
        sums[2] = sums[2] + f1_from(p, r);
    }
    let n = T::from_count(rows.len());
    Ok(AverageMetrics {
        precision: sums[0] / n,
        recall: sums[1] / n,
        f1: sums[2] / n,
        undefined_substitutions: substitutions,
    })
}

/// Run-ordered boolean predictions for every (image, context) cell of a
/// dataset. Completeness and uniform run count are enforced at assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    cells: BTreeMap<(String, ContextId), Vec<bool>>,
    runs: usize,
}

/// Bookkeeping from assembly: how many run replies carried no parseable
/// verdict (scored as negative).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssemblyStats {
    pub unparseable: usize,
}

impl PredictionSet {
    /// Fold run results into per-cell prediction vectors. Every dataset
    /// (image, context) must be covered by exactly `runs` results with run
    /// indexes 0..runs; anything else is itemized in the error.
    pub fn from_results(
        results: &[RunResult],
        dataset: &Dataset,
        runs: usize,
    ) -> Result<(PredictionSet, AssemblyStats), EvaluationError> {
        if runs == 0 {
            return Err(EvaluationError::EmptyRuns);
        }
        let mut stats = AssemblyStats::default();
        let mut slots: BTreeMap<(String, ContextId), Vec<Option<bool>>> = BTreeMap::new();
        for image in dataset.images() {
            for context in dataset.contexts() {
                slots.insert((image.id.clone(), context.clone()), vec![None; runs]);
            }
        }
        for result in results {
            let key = (result.image_id.clone(), result.context.clone());
            let Some(cell) = slots.get_mut(&key) else {
                return Err(EvaluationError::UnknownCell {
                    image: result.image_id.clone(),
                    context: result.context.as_str().into(),
                });
            };
            if result.run_index >= runs {
                return Err(EvaluationError::RunOutOfRange {
                    image: result.image_id.clone(),
                    run: result.run_index,
                    runs,
                });
            }
            if cell[result.run_index].is_some() {
                return Err(EvaluationError::DuplicatePrediction {
                    image: result.image_id.clone(),
                    context: result.context.as_str().into(),
                    run: result.run_index,
                });
            }
            let verdict = match result.parsed {
                Some(v) => v,
                None => {
                    stats.unparseable += 1;
                    false
                }
            };
            cell[result.run_index] = Some(verdict);
        }

        let mut missing = Vec::new();
        let mut cells = BTreeMap::new();
        for ((image_id, context), slot) in slots {
            let mut votes = Vec::with_capacity(runs);
            for (run_index, v) in slot.iter().enumerate() {
                match v {
                    Some(v) => votes.push(*v),
                    None => missing.push(MissingCell {
                        image_id: image_id.clone(),
                        context: context.clone(),
                        run_index,
                    }),
                }
            }
            cells.insert((image_id, context), votes);
        }
        if !missing.is_empty() {
            return Err(EvaluationError::MissingCells(missing));
        }
        Ok((PredictionSet { cells, runs }, stats))
    }

    pub fn runs(&self) -> usize {
        self.runs
    }

    /// Per-image majority verdicts for one context.
    pub fn majority_map(&self, context: &ContextId) -> BTreeMap<String, bool> {
        self.cells
            .iter()
            .filter(|((_, c), _)| c == context)
            .map(|((image, _), votes)| {
                (image.clone(), majority_vote(votes).expect("cells are non-empty"))
            })
            .collect()
    }

    /// Per-image mean-of-runs scores for one context.
    pub fn probability_map<T: Real>(&self, context: &ContextId) -> BTreeMap<String, T> {
        self.cells
            .iter()
            .filter(|((_, c), _)| c == context)
            .map(|((image, _), votes)| {
                (
                    image.clone(),
                    mean_probability(votes).expect("cells are non-empty"),
                )
            })
            .collect()
    }
}

/// Scores for one context: confusion counts plus derived metrics, `None`
/// where the metric is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextMetrics {
    pub context: ContextId,
    pub matrix: ConfusionMatrix,
    pub support: usize,
    pub precision: Option<MetricScalar>,
    pub recall: Option<MetricScalar>,
    pub f1: Option<MetricScalar>,
    pub roc_auc: Option<MetricScalar>,
}

/// The full evaluation artifact for one results set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: usize,
    pub unparseable_runs: usize,
    pub contexts: Vec<ContextMetrics>,
    pub micro: AverageMetrics<MetricScalar>,
    #[serde(rename = "macro")]
    pub macro_: AverageMetrics<MetricScalar>,
    pub weighted: AverageMetrics<MetricScalar>,
    pub samples: AverageMetrics<MetricScalar>,
}

/// Score one context of an assembled prediction set.
pub fn evaluate_context(
    predictions: &PredictionSet,
    dataset: &Dataset,
    context: &ContextId,
) -> Result<ContextMetrics, EvaluationError> {
    let labels = dataset.label_map(context);
    let majority = predictions.majority_map(context);
    let matrix = confusion(&majority, &labels)?;
    let probabilities = predictions.probability_map::<MetricScalar>(context);
    let scored: Vec<(MetricScalar, bool)> = probabilities
        .iter()
        .map(|(image, score)| (*score, labels[image]))
        .collect();
    Ok(ContextMetrics {
        context: context.clone(),
        support: matrix.support(),
        precision: matrix.precision(),
        recall: matrix.recall(),
        f1: matrix.f1(),
        roc_auc: roc_auc(&scored),
        matrix,
    })
}

/// Assemble predictions from run results and produce the complete report.
pub fn evaluate(
    results: &[RunResult],
    dataset: &Dataset,
    runs: usize,
) -> Result<MetricsReport, EvaluationError> {
    let (predictions, stats) = PredictionSet::from_results(results, dataset, runs)?;
    let mut contexts = Vec::with_capacity(dataset.contexts().len());
    for context in dataset.contexts() {
        contexts.push(evaluate_context(&predictions, dataset, context)?);
    }
    let per_context: Vec<(ConfusionMatrix, usize)> =
        contexts.iter().map(|c| (c.matrix, c.support)).collect();

    let context_order = dataset.contexts();
    let mut rows_data: Vec<(Vec<bool>, Vec<bool>)> = Vec::with_capacity(dataset.len());
    for image in dataset.images() {
        let mut preds = Vec::with_capacity(context_order.len());
        let mut labels = Vec::with_capacity(context_order.len());
        for context in context_order {
            let majority = predictions.majority_map(context);
            preds.push(majority[&image.id]);
            labels.push(
                dataset
                    .label(&image.id, context)
                    .expect("labels complete")
                    .acceptable,
            );
        }
        rows_data.push((preds, labels));
    }
    let rows: Vec<(&[bool], &[bool])> = rows_data
        .iter()
        .map(|(p, l)| (p.as_slice(), l.as_slice()))
        .collect();

    Ok(MetricsReport {
        runs,
        unparseable_runs: stats.unparseable,
        micro: average_metrics(&per_context, AverageMode::Micro)?,
        macro_: average_metrics(&per_context, AverageMode::Macro)?,
        weighted: average_metrics(&per_context, AverageMode::Weighted)?,
        samples: samples_average(&rows)?,
        contexts,
    })
}
