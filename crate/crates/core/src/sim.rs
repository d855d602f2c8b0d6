//! Seeded ground-truth executions and noisy detection streams.
//!
//! A scenario is built in two independent random passes: one samples the
//! execution (step order and dwell times), the other renders one detection
//! frame per video frame from the resulting state timeline. Each pass owns
//! its own ChaCha stream derived from the seed, so the same seed always gives
//! the same scenario.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{Detection, DetectionFrame};
use crate::model::{
    events_between, AssemblyState, Component, ComponentStatus, EventSource, ModelError, ProceduralAction,
    ProcedureSpec, StepSequence, Transition,
};

const EXECUTION_STREAM: u64 = 0;
const RENDER_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("injection references unknown action '{0}'")]
    UnknownAction(String),
    #[error("invalid injection: {0}")]
    Injection(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub fps: f64,
    /// Time spent in each state, drawn uniformly from
    /// `dwell_mean_s ± dwell_jitter_s` and never shorter than one frame.
    pub dwell_mean_s: f64,
    pub dwell_jitter_s: f64,
    pub detect_prob: f64,
    /// Confidence is drawn uniformly from `conf_mean ± conf_spread`, clamped
    /// to `[0, 1]`.
    pub conf_mean: f64,
    pub conf_spread: f64,
    /// Chance that a detection is replaced by a random Hamming-distance-1
    /// neighbor.
    pub misclass_prob: f64,
    /// Chance that an error state is detected as its nearest correct state.
    pub error_fp_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fps: 10.0,
            dwell_mean_s: 3.0,
            dwell_jitter_s: 1.0,
            detect_prob: 0.9,
            conf_mean: 0.8,
            conf_spread: 0.2,
            misclass_prob: 0.05,
            error_fp_rate: 0.65,
        }
    }
}

impl SimConfig {
    /// Every frame carries the exact timeline state at confidence 1.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            seed,
            detect_prob: 1.0,
            conf_mean: 1.0,
            conf_spread: 0.0,
            misclass_prob: 0.0,
            error_fp_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let probs = [
            ("detect_prob", self.detect_prob),
            ("conf_mean", self.conf_mean),
            ("misclass_prob", self.misclass_prob),
            ("error_fp_rate", self.error_fp_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidConfig(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(SimError::InvalidConfig(format!("fps = {} must be positive", self.fps)));
        }
        if !(self.dwell_mean_s > 0.0 && self.dwell_mean_s.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "dwell_mean_s = {} must be positive",
                self.dwell_mean_s
            )));
        }
        for (name, v) in [("dwell_jitter_s", self.dwell_jitter_s), ("conf_spread", self.conf_spread)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Procedural and execution errors to inject into a sampled execution.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorInjection {
    /// Actions that are skipped.
    pub omit: BTreeSet<String>,
    /// Install actions completed incorrectly (component ends at `-1`).
    pub incorrect: BTreeSet<String>,
    /// Positions `k` in the executed order whose steps `k` and `k + 1` are
    /// swapped, applied in list order.
    pub swaps: Vec<usize>,
}

impl ErrorInjection {
    pub fn is_empty(&self) -> bool {
        self.omit.is_empty() && self.incorrect.is_empty() && self.swaps.is_empty()
    }

    pub fn validate(&self, spec: &ProcedureSpec) -> Result<(), SimError> {
        for id in self.omit.iter().chain(&self.incorrect) {
            if spec.action(id).is_none() {
                return Err(SimError::UnknownAction(id.clone()));
            }
        }
        if let Some(id) = self.omit.intersection(&self.incorrect).next() {
            return Err(SimError::Injection(format!("'{id}' is both omitted and incorrect")));
        }
        for id in &self.incorrect {
            if spec.action(id).map(|a| a.transition) != Some(Transition::Install) {
                return Err(SimError::Injection(format!(
                    "'{id}' is not an install action and cannot be completed incorrectly"
                )));
            }
        }
        let executed = spec.actions.len() - self.omit.len();
        if let Some(&k) = self.swaps.iter().find(|&&k| k + 1 >= executed) {
            return Err(SimError::Injection(format!(
                "swap position {k} needs at least {} executed steps, have {executed}",
                k + 2
            )));
        }
        Ok(())
    }
}

/// Frames `[start_frame, end_frame)` showing one state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: u64,
    pub end_frame: u64,
    pub state: AssemblyState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Errors-included labels; see [`StepSequence::correct_only`].
    pub ground_truth: StepSequence,
    pub timeline: Vec<Segment>,
    pub stream: Vec<DetectionFrame>,
}

impl Scenario {
    pub fn recording_id(&self) -> &str {
        &self.ground_truth.recording_id
    }

    pub fn fps(&self) -> f64 {
        self.ground_truth.fps
    }
}

fn dwell_frames(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> u64 {
    let jitter = if cfg.dwell_jitter_s > 0.0 {
        rng.gen_range(-cfg.dwell_jitter_s..=cfg.dwell_jitter_s)
    } else {
        0.0
    };
    ((cfg.dwell_mean_s + jitter) * cfg.fps).round().max(1.0) as u64
}

/// Random prerequisite-respecting order over all actions, picking uniformly
/// among the ready actions at each step, with omitted actions dropped
/// afterwards.
fn sample_order(spec: &ProcedureSpec, omit: &BTreeSet<String>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let index: HashMap<&str, usize> = spec
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| (a.action_id.as_str(), i))
        .collect();
    let n = spec.actions.len();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let ready: Vec<usize> = (0..n)
            .filter(|&i| !done[i])
            .filter(|&i| spec.actions[i].prerequisites.iter().all(|p| done[index[p.as_str()]]))
            .collect();
        let &pick = ready.choose(rng).expect("validated specs are acyclic");
        done[pick] = true;
        order.push(pick);
    }
    order.retain(|&i| !omit.contains(&spec.actions[i].action_id));
    order
}

/// Samples an execution of `spec` with `inj` applied and returns the
/// errors-included ground truth together with its state timeline.
pub fn sample_execution(
    spec: &ProcedureSpec,
    inj: &ErrorInjection,
    cfg: &SimConfig,
    recording_id: &str,
) -> Result<(StepSequence, Vec<Segment>), SimError> {
    cfg.validate()?;
    spec.clone().validated()?;
    inj.validate(spec)?;
    let mut rng = cfg.rng(EXECUTION_STREAM);
    let mut order = sample_order(spec, &inj.omit, &mut rng);
    for &k in &inj.swaps {
        order.swap(k, k + 1);
    }

    let mut state = spec.initial_state.clone();
    let mut start = 0u64;
    let mut end = dwell_frames(&mut rng, cfg);
    let mut timeline = vec![Segment {
        start_frame: start,
        end_frame: end,
        state: state.clone(),
    }];
    let mut events = Vec::new();
    for i in order {
        let action = &spec.actions[i];
        let transition = if inj.incorrect.contains(&action.action_id) {
            Transition::Incorrect
        } else {
            action.transition
        };
        let mut next = state.clone();
        next.apply(action.component, transition);
        if next == state {
            continue;
        }
        start = end;
        end = start + dwell_frames(&mut rng, cfg);
        events.extend(events_between(spec, &state, &next, start, cfg.fps, 1.0, EventSource::GroundTruth)?);
        timeline.push(Segment {
            start_frame: start,
            end_frame: end,
            state: next.clone(),
        });
        state = next;
    }
    Ok((StepSequence::new(recording_id, cfg.fps, events)?, timeline))
}

/// Nearest state without incorrect components: every `-1` becomes `1`.
fn nearest_correct(state: &AssemblyState) -> AssemblyState {
    AssemblyState::new(
        state
            .statuses()
            .iter()
            .map(|&s| {
                if s == ComponentStatus::Incorrect {
                    ComponentStatus::Installed
                } else {
                    s
                }
            })
            .collect(),
    )
}

/// Renders one detection frame per timeline frame.
pub fn render_stream(timeline: &[Segment], cfg: &SimConfig) -> Result<Vec<DetectionFrame>, SimError> {
    cfg.validate()?;
    let mut rng = cfg.rng(RENDER_STREAM);
    let mut frames = Vec::new();
    for segment in timeline {
        for f in segment.start_frame..segment.end_frame {
            let detected = rng.gen_bool(cfg.detect_prob);
            let fp = rng.gen_bool(cfg.error_fp_rate);
            let misclass = rng.gen_bool(cfg.misclass_prob);
            let component = rng.gen_range(0..segment.state.len().max(1));
            let flip: bool = rng.gen();
            let jitter: f64 = rng.gen_range(-1.0..=1.0);
            if !detected {
                frames.push(DetectionFrame::at(f, cfg.fps, Vec::new()));
                continue;
            }
            let mut state = segment.state.clone();
            if fp && state.is_error_state() {
                state = nearest_correct(&state);
            }
            if misclass && !state.is_empty() {
                let others: Vec<ComponentStatus> = ComponentStatus::ALL
                    .into_iter()
                    .filter(|&s| Some(s) != state.get(component))
                    .collect();
                state.set(component, others[usize::from(flip)]);
            }
            let confidence = (cfg.conf_mean + cfg.conf_spread * jitter).clamp(0.0, 1.0);
            frames.push(DetectionFrame::at(
                f,
                cfg.fps,
                vec![Detection {
                    state,
                    confidence,
                    bbox: None,
                }],
            ));
        }
    }
    Ok(frames)
}

pub fn simulate(
    spec: &ProcedureSpec,
    inj: &ErrorInjection,
    cfg: &SimConfig,
    recording_id: &str,
) -> Result<Scenario, SimError> {
    let (ground_truth, timeline) = sample_execution(spec, inj, cfg, recording_id)?;
    let stream = render_stream(&timeline, cfg)?;
    Ok(Scenario {
        ground_truth,
        timeline,
        stream,
    })
}

/// Random install-only procedure over `components` parts starting from the
/// all-absent state. Each action requires a random subset of earlier ones.
pub fn random_procedure(seed: u64, components: usize) -> ProcedureSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: Vec<usize> = (0..components).collect();
    parts.shuffle(&mut rng);
    let actions: Vec<ProceduralAction> = parts
        .iter()
        .enumerate()
        .map(|(k, &component)| ProceduralAction {
            action_id: format!("a{k}"),
            component,
            transition: Transition::Install,
            prerequisites: (0..k).filter(|_| rng.gen_bool(0.3)).map(|j| format!("a{j}")).collect(),
            description: format!("install part {component}"),
        })
        .collect();
    ProcedureSpec::new(
        format!("random-{seed}"),
        (0..components)
            .map(|index| Component {
                index,
                name: format!("part{index}"),
            })
            .collect(),
        AssemblyState::absent(components),
        actions,
    )
    .expect("generated procedures are valid")
}
