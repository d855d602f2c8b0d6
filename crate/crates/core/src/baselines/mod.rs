//! Online procedure step recognizers driven by per-frame assembly-state
//! detections.
//!
//! Every recognizer implements [`Recognizer`] and is constructed through a
//! [`Registry`] by name, so callers pick a variant at runtime:
//!
//! * `b1` emits every change of the top detection above a confidence threshold.
//! * `b2` accumulates per-component confidence with decay until a threshold.
//! * `b3` is `b2` restricted to transitions into expected procedure states.

mod accumulate;
mod registry;
mod state_change;

use std::borrow::Borrow;
use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AssemblyState, ComponentStatus, EventSource, ModelError, ProcedureSpec, StepEvent, StepSequence,
    Transition,
};

pub use accumulate::{AccumulatingRecognizer, EmissionGuard};
pub use registry::{Factory, Registry};
pub use state_change::StateChangeRecognizer;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecognizeError {
    #[error("frame {frame} arrived after frame {previous}")]
    OutOfOrder { previous: u64, frame: u64 },
    #[error("frame {frame}: detected state has {found} components, procedure expects {expected}")]
    DetectionLength { frame: u64, expected: usize, found: usize },
    #[error("frame {frame}: confidence {value} outside [0, 1]")]
    Confidence { frame: u64, value: f64 },
    #[error("frame {frame}: time {time_s} s does not equal frame / fps")]
    FrameTime { frame: u64, time_s: f64 },
    #[error("unknown baseline '{0}'")]
    UnknownBaseline(String),
    #[error("invalid baseline config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub state: AssemblyState,
    pub confidence: f64,
    /// `[x_min, y_min, x_max, y_max]` in normalized image coordinates.
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub frame: u64,
    pub time_s: f64,
    pub detections: Vec<Detection>,
}

impl DetectionFrame {
    pub fn at(frame: u64, fps: f64, detections: Vec<Detection>) -> Self {
        Self {
            frame,
            time_s: frame as f64 / fps,
            detections,
        }
    }
}

/// Highest-confidence detection; ties go to the earliest in the list.
pub fn select_top_detection(frame: &DetectionFrame) -> Option<(&AssemblyState, f64)> {
    let mut best: Option<&Detection> = None;
    for d in &frame.detections {
        if best.is_none_or(|b| d.confidence > b.confidence) {
            best = Some(d);
        }
    }
    best.map(|d| (&d.state, d.confidence))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Registry name of the recognizer (`b1`, `b2`, `b3`).
    pub variant: String,
    /// Minimum top-detection confidence for `b1`.
    pub detection_threshold: f64,
    /// Accumulated confidence needed to emit in `b2`/`b3`.
    pub accumulation_threshold: f64,
    /// Per-frame multiplier applied to accumulators of agreeing components.
    pub decay: f64,
}

impl BaselineConfig {
    pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.5;
    pub const DEFAULT_ACCUMULATION_THRESHOLD: f64 = 8.0;
    pub const DEFAULT_DECAY: f64 = 0.75;

    pub fn new(variant: impl Into<String>) -> Self {
        Self {
            variant: variant.into(),
            detection_threshold: Self::DEFAULT_DETECTION_THRESHOLD,
            accumulation_threshold: Self::DEFAULT_ACCUMULATION_THRESHOLD,
            decay: Self::DEFAULT_DECAY,
        }
    }

    pub fn validate(&self) -> Result<(), RecognizeError> {
        if !self.detection_threshold.is_finite() || self.detection_threshold < 0.0 {
            return Err(RecognizeError::InvalidConfig(format!(
                "detection threshold {} must be finite and non-negative",
                self.detection_threshold
            )));
        }
        if !self.accumulation_threshold.is_finite() || self.accumulation_threshold < 0.0 {
            return Err(RecognizeError::InvalidConfig(format!(
                "accumulation threshold {} must be finite and non-negative",
                self.accumulation_threshold
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(RecognizeError::InvalidConfig(format!(
                "decay {} must lie in (0, 1]",
                self.decay
            )));
        }
        Ok(())
    }
}

/// Mutable state shared by all recognizers.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizerState {
    /// Believed assembly state; `None` until a first detection arrives for
    /// variants that initialize from the stream.
    pub current: Option<AssemblyState>,
    /// Value `current` started from.
    pub initial: Option<AssemblyState>,
    pub confs: Vec<f64>,
    /// Most recent conflicting status seen per component.
    pub pending: Vec<Option<ComponentStatus>>,
    pub emitted: Vec<StepEvent>,
    last_frame: Option<u64>,
    emitted_ids: HashSet<String>,
}

impl RecognizerState {
    pub fn new(components: usize, current: Option<AssemblyState>) -> Self {
        Self {
            initial: current.clone(),
            current,
            confs: vec![0.0; components],
            pending: vec![None; components],
            emitted: Vec::new(),
            last_frame: None,
            emitted_ids: HashSet::new(),
        }
    }

    fn initialize(&mut self, state: AssemblyState) {
        self.initial = Some(state.clone());
        self.current = Some(state);
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    /// Enforces strictly increasing frames and checks the detections.
    fn admit(&mut self, frame: &DetectionFrame, components: usize) -> Result<(), RecognizeError> {
        if let Some(previous) = self.last_frame {
            if frame.frame <= previous {
                return Err(RecognizeError::OutOfOrder {
                    previous,
                    frame: frame.frame,
                });
            }
        }
        for d in &frame.detections {
            if d.state.len() != components {
                return Err(RecognizeError::DetectionLength {
                    frame: frame.frame,
                    expected: components,
                    found: d.state.len(),
                });
            }
            if !(0.0..=1.0).contains(&d.confidence) {
                return Err(RecognizeError::Confidence {
                    frame: frame.frame,
                    value: d.confidence,
                });
            }
        }
        self.last_frame = Some(frame.frame);
        Ok(())
    }

    /// Records an event unless its action was already emitted. Returns
    /// whether it was recorded.
    fn emit(&mut self, event: StepEvent) -> bool {
        if self.emitted_ids.contains(&event.action_id) {
            return false;
        }
        self.emitted_ids.insert(event.action_id.clone());
        self.emitted.push(event);
        true
    }
}

fn recognized(
    spec: &ProcedureSpec,
    component: usize,
    transition: Transition,
    frame: &DetectionFrame,
    confidence: f64,
) -> StepEvent {
    StepEvent {
        action_id: spec.event_action_id(component, transition),
        component,
        transition,
        time_s: frame.time_s,
        frame: frame.frame,
        confidence,
        source: EventSource::Recognized,
    }
}

/// An online recognizer: consumes frames in order, emits completed steps.
pub trait Recognizer: Send {
    fn name(&self) -> &str;

    fn state(&self) -> &RecognizerState;

    /// Processes one frame and returns the events it completed.
    fn step_frame(&mut self, frame: &DetectionFrame) -> Result<Vec<StepEvent>, RecognizeError>;
}

/// Creates the configured recognizer and feeds it `first_frame`, if any.
pub fn init_recognizer(
    config: &BaselineConfig,
    spec: Arc<ProcedureSpec>,
    first_frame: Option<&DetectionFrame>,
) -> Result<Box<dyn Recognizer>, RecognizeError> {
    let mut recognizer = Registry::default().create(config, spec)?;
    if let Some(frame) = first_frame {
        recognizer.step_frame(frame)?;
    }
    Ok(recognizer)
}

/// Drives `recognizer` over `frames`. Frames are consumed lazily, so memory
/// does not grow with the stream length.
pub fn run_recognizer<I>(
    recognizer: &mut dyn Recognizer,
    frames: I,
    recording_id: &str,
    fps: f64,
) -> Result<StepSequence, RecognizeError>
where
    I: IntoIterator,
    I::Item: Borrow<DetectionFrame>,
{
    let mut events = Vec::new();
    for frame in frames {
        let frame = frame.borrow();
        if frame.time_s != frame.frame as f64 / fps {
            return Err(RecognizeError::FrameTime {
                frame: frame.frame,
                time_s: frame.time_s,
            });
        }
        events.extend(recognizer.step_frame(frame)?);
    }
    Ok(StepSequence::new(recording_id, fps, events)?)
}

/// Runs the baseline named by `config.variant` from the default registry.
pub fn run_baseline<I>(
    config: &BaselineConfig,
    spec: Arc<ProcedureSpec>,
    frames: I,
    recording_id: &str,
    fps: f64,
) -> Result<StepSequence, RecognizeError>
where
    I: IntoIterator,
    I::Item: Borrow<DetectionFrame>,
{
    let mut recognizer = Registry::default().create(config, spec)?;
    run_recognizer(recognizer.as_mut(), frames, recording_id, fps)
}
