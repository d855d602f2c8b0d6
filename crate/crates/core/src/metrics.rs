//! Procedure step recognition metrics: procedure order similarity (POS),
//! event-level F1 with temporal true-positive rules, and average delay.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ProcedureSpec, StepEvent, StepSequence, Transition};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("F1 is undefined when TP, FP and FN are all zero")]
    UndefinedF1,
    #[error("recording mismatch: ground truth '{gt}' vs prediction '{pred}'")]
    RecordingMismatch { gt: String, pred: String },
    #[error("fps mismatch: ground truth {gt} vs prediction {pred}")]
    FpsMismatch { gt: f64, pred: f64 },
    #[error("no reports left for subset {0}")]
    EmptySubset(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Costs of the four edit operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditWeights {
    pub insertion: f64,
    pub deletion: f64,
    pub substitution: f64,
    pub transposition: f64,
}

impl Default for EditWeights {
    /// Substitution costs as much as a deletion plus an insertion, which
    /// removes any benefit of substituting.
    fn default() -> Self {
        Self {
            insertion: 1.0,
            deletion: 1.0,
            substitution: 2.0,
            transposition: 1.0,
        }
    }
}

/// Weighted optimal-string-alignment distance: the cheapest way to edit
/// `hypothesis` into `reference` with insertions, deletions, substitutions and
/// swaps of adjacent elements, where no element takes part in more than one
/// swap and a swapped pair is not edited further.
///
/// Insertion adds an element of `reference`; deletion drops an element of
/// `hypothesis`. With the default weights the distance is symmetric.
pub fn weighted_damlev<T: PartialEq>(reference: &[T], hypothesis: &[T], w: &EditWeights) -> f64 {
    let (src, dst) = (hypothesis, reference);
    let m = dst.len();
    // rows i-2, i-1 and i of the (|src|+1) x (|dst|+1) table
    let mut before: Vec<f64> = vec![0.0; m + 1];
    let mut prev: Vec<f64> = (0..=m).map(|j| j as f64 * w.insertion).collect();
    let mut cur: Vec<f64> = vec![0.0; m + 1];
    for i in 1..=src.len() {
        cur[0] = i as f64 * w.deletion;
        for j in 1..=m {
            let same = src[i - 1] == dst[j - 1];
            let mut best = (prev[j] + w.deletion)
                .min(cur[j - 1] + w.insertion)
                .min(prev[j - 1] + if same { 0.0 } else { w.substitution });
            if i > 1 && j > 1 && src[i - 1] == dst[j - 2] && src[i - 2] == dst[j - 1] {
                best = best.min(before[j - 2] + w.transposition);
            }
            cur[j] = best;
        }
        std::mem::swap(&mut before, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// `1 - min(distance / |reference|, 1)` with default weights.
pub fn pos_from_orders<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let d = weighted_damlev(reference, hypothesis, &EditWeights::default());
    Ok(1.0 - (d / reference.len() as f64).min(1.0))
}

/// Procedure order similarity between the action orders of two sequences.
pub fn pos_score(y: &StepSequence, yhat: &StepSequence) -> Result<f64, MetricsError> {
    pos_from_orders(&y.action_order(), &yhat.action_order())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    TruePositive,
    FalsePositive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatch {
    pub event: StepEvent,
    pub verdict: Verdict,
    /// Ground-truth completion of the same action, if it happened at all.
    pub matched: Option<StepEvent>,
    /// Recognition delay, true positives only.
    pub delay_s: Option<f64>,
}

/// Verdict for every prediction plus the ground-truth steps nobody predicted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchOutcome {
    pub predictions: Vec<PredictionMatch>,
    pub missed: Vec<StepEvent>,
}

impl MatchOutcome {
    pub fn tp(&self) -> usize {
        self.predictions
            .iter()
            .filter(|p| p.verdict == Verdict::TruePositive)
            .count()
    }

    pub fn fp(&self) -> usize {
        self.predictions.len() - self.tp()
    }

    pub fn fn_count(&self) -> usize {
        self.missed.len()
    }

    pub fn delays(&self) -> impl Iterator<Item = f64> + '_ {
        self.predictions.iter().filter_map(|p| p.delay_s)
    }
}

/// Classifies predictions against ground truth.
///
/// A prediction is a true positive iff its action was completed and it was
/// made at or after that completion; otherwise it is a false positive. A
/// completed action that never appears among the predictions is a false
/// negative, so an early prediction counts as FP but not also as FN.
pub fn classify_events(y: &StepSequence, yhat: &StepSequence) -> Result<MatchOutcome, MetricsError> {
    y.validate()?;
    yhat.validate()?;
    let truth: HashMap<&str, &StepEvent> =
        y.events.iter().map(|e| (e.action_id.as_str(), e)).collect();
    let predicted: HashSet<&str> = yhat.events.iter().map(|e| e.action_id.as_str()).collect();

    let predictions = yhat
        .events
        .iter()
        .map(|e| {
            let matched = truth.get(e.action_id.as_str()).copied();
            let on_time = matched.is_some_and(|t| e.time_s >= t.time_s);
            PredictionMatch {
                event: e.clone(),
                verdict: if on_time {
                    Verdict::TruePositive
                } else {
                    Verdict::FalsePositive
                },
                matched: matched.cloned(),
                delay_s: matched.filter(|_| on_time).map(|t| e.time_s - t.time_s),
            }
        })
        .collect();
    let missed = y
        .events
        .iter()
        .filter(|e| !predicted.contains(e.action_id.as_str()))
        .cloned()
        .collect();
    Ok(MatchOutcome { predictions, missed })
}

fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> Result<f64, MetricsError> {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Err(MetricsError::UndefinedF1);
    }
    Ok(2.0 * tp as f64 / denom as f64)
}

pub fn f1_score(outcome: &MatchOutcome) -> Result<f64, MetricsError> {
    f1_from_counts(outcome.tp(), outcome.fp(), outcome.fn_count())
}

/// Mean delay over true positives; `None` without any.
pub fn average_delay(outcome: &MatchOutcome) -> Option<f64> {
    let (sum, n) = outcome.delays().fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recording_id: String,
    pub pos: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tau_s: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub has_errors: bool,
    /// Recordings summarized by this report.
    #[serde(default = "one")]
    pub n_recordings: usize,
}

fn one() -> usize {
    1
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Scores one recording. Incorrect completions are dropped from both sides
/// before scoring; their presence in `y` marks the recording as erroneous.
pub fn evaluate_recording(y: &StepSequence, yhat: &StepSequence) -> Result<MetricsReport, MetricsError> {
    if y.recording_id != yhat.recording_id {
        return Err(MetricsError::RecordingMismatch {
            gt: y.recording_id.clone(),
            pred: yhat.recording_id.clone(),
        });
    }
    if y.fps != yhat.fps {
        return Err(MetricsError::FpsMismatch {
            gt: y.fps,
            pred: yhat.fps,
        });
    }
    let truth = y.correct_only();
    let predicted = yhat.correct_only();
    let pos = pos_score(&truth, &predicted)?;
    let outcome = classify_events(&truth, &predicted)?;
    let (tp, fp, fn_) = (outcome.tp(), outcome.fp(), outcome.fn_count());
    Ok(MetricsReport {
        recording_id: y.recording_id.clone(),
        pos,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: f1_from_counts(tp, fp, fn_)?,
        tau_s: average_delay(&outcome),
        tp,
        fp,
        fn_,
        has_errors: y.has_incorrect(),
        n_recordings: 1,
    })
}

/// True if the ground truth misses an action of `spec`, contains an incorrect
/// completion, or completes an action before one of its prerequisites.
pub fn ground_truth_has_errors(spec: &ProcedureSpec, y: &StepSequence) -> bool {
    if y.has_incorrect() {
        return true;
    }
    let done: HashMap<&str, usize> = y
        .events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.transition != Transition::Incorrect)
        .map(|(i, e)| (e.action_id.as_str(), i))
        .collect();
    spec.actions.iter().any(|a| match done.get(a.action_id.as_str()) {
        None => true,
        Some(&at) => a
            .prerequisites
            .iter()
            .any(|p| done.get(p.as_str()).is_none_or(|&pat| pat > at)),
    })
}

/// [`evaluate_recording`] with omissions and order violations relative to
/// `spec` also counted as errors.
pub fn evaluate_with_procedure(
    spec: &ProcedureSpec,
    y: &StepSequence,
    yhat: &StepSequence,
) -> Result<MetricsReport, MetricsError> {
    let mut report = evaluate_recording(y, yhat)?;
    report.has_errors = ground_truth_has_errors(spec, y);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subset {
    All,
    ErrorsOnly,
}

impl Subset {
    pub fn label(self) -> &'static str {
        match self {
            Self::All => "ALL",
            Self::ErrorsOnly => "ERRORS_ONLY",
        }
    }
}

/// Unweighted mean over recordings; undefined delays are skipped and counts
/// are summed.
pub fn aggregate_reports(reports: &[MetricsReport], subset: Subset) -> Result<MetricsReport, MetricsError> {
    let kept: Vec<&MetricsReport> = reports
        .iter()
        .filter(|r| subset == Subset::All || r.has_errors)
        .collect();
    if kept.is_empty() {
        return Err(MetricsError::EmptySubset(subset.label()));
    }
    let n = kept.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| kept.iter().map(|r| f(r)).sum::<f64>() / n;
    let taus: Vec<f64> = kept.iter().filter_map(|r| r.tau_s).collect();
    Ok(MetricsReport {
        recording_id: subset.label().to_string(),
        pos: mean(|r| r.pos),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        f1: mean(|r| r.f1),
        tau_s: (!taus.is_empty()).then(|| taus.iter().sum::<f64>() / taus.len() as f64),
        tp: kept.iter().map(|r| r.tp).sum(),
        fp: kept.iter().map(|r| r.fp).sum(),
        fn_: kept.iter().map(|r| r.fn_).sum(),
        has_errors: kept.iter().any(|r| r.has_errors),
        n_recordings: kept.iter().map(|r| r.n_recordings).sum(),
    })
}
