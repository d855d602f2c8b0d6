use std::collections::HashSet;
use std::sync::Arc;

use super::{recognized, select_top_detection, BaselineConfig, DetectionFrame, RecognizeError, Recognizer, RecognizerState};
use crate::model::{AssemblyState, ProcedureSpec, StepEvent, Transition};

/// Decides whether a component may switch to its pending status.
#[derive(Debug, Clone)]
pub enum EmissionGuard {
    Unrestricted,
    /// Only transitions whose resulting overall state is expected.
    ExpectedStates(HashSet<AssemblyState>),
}

impl EmissionGuard {
    pub fn allows(&self, candidate: &AssemblyState) -> bool {
        match self {
            Self::Unrestricted => true,
            Self::ExpectedStates(states) => states.contains(candidate),
        }
    }
}

/// Per-component confidence accumulation.
///
/// A component whose detected status conflicts with the believed one adds the
/// detection confidence to its accumulator; once the accumulator reaches the
/// threshold (and the guard agrees) the step is emitted, the component takes
/// the pending status and the accumulator resets. Agreeing components decay
/// their accumulator. Frames without detections change nothing.
#[derive(Debug, Clone)]
pub struct AccumulatingRecognizer {
    name: String,
    spec: Arc<ProcedureSpec>,
    threshold: f64,
    decay: f64,
    guard: EmissionGuard,
    state: RecognizerState,
}

impl AccumulatingRecognizer {
    pub fn new(
        config: &BaselineConfig,
        spec: Arc<ProcedureSpec>,
        guard: EmissionGuard,
        initial: Option<AssemblyState>,
    ) -> Result<Self, RecognizeError> {
        config.validate()?;
        if let Some(s) = &initial {
            spec.check_state(s)?;
        }
        let state = RecognizerState::new(spec.component_count(), initial);
        Ok(Self {
            name: config.variant.clone(),
            threshold: config.accumulation_threshold,
            decay: config.decay,
            guard,
            spec,
            state,
        })
    }

    /// Starts from the first detected state, no guard.
    pub fn unguarded(config: &BaselineConfig, spec: Arc<ProcedureSpec>) -> Result<Self, RecognizeError> {
        Self::new(config, spec, EmissionGuard::Unrestricted, None)
    }

    /// Starts from the procedure's initial state and only emits into states
    /// reachable by a correct execution.
    pub fn procedure_guarded(config: &BaselineConfig, spec: Arc<ProcedureSpec>) -> Result<Self, RecognizeError> {
        let expected = spec.expected_states()?;
        let initial = spec.initial_state.clone();
        Self::new(config, spec, EmissionGuard::ExpectedStates(expected), Some(initial))
    }

    pub fn guard(&self) -> &EmissionGuard {
        &self.guard
    }
}

impl Recognizer for AccumulatingRecognizer {
    fn name(&self) -> &str {
        &self.name
    }

    fn state(&self) -> &RecognizerState {
        &self.state
    }

    fn step_frame(&mut self, frame: &DetectionFrame) -> Result<Vec<StepEvent>, RecognizeError> {
        self.state.admit(frame, self.spec.component_count())?;
        let Some((detected, conf)) = select_top_detection(frame) else {
            return Ok(Vec::new());
        };
        let state = &mut self.state;
        let Some(current) = state.current.as_mut() else {
            state.initialize(detected.clone());
            return Ok(Vec::new());
        };

        let mut fired = Vec::new();
        for (i, &seen) in detected.statuses().iter().enumerate() {
            let believed = current.statuses()[i];
            if seen == believed {
                state.confs[i] *= self.decay;
                continue;
            }
            state.confs[i] += conf;
            state.pending[i] = Some(seen);
            if state.confs[i] >= self.threshold && self.guard.allows(&current.with(i, seen)) {
                let transition = Transition::between(believed, seen).expect("statuses differ");
                fired.push(recognized(&self.spec, i, transition, frame, state.confs[i]));
                current.set(i, seen);
                state.confs[i] = 0.0;
            }
        }
        Ok(fired.into_iter().filter(|e| state.emit(e.clone())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{chain_spec, det, frame};
    use super::*;

    fn b2() -> AccumulatingRecognizer {
        AccumulatingRecognizer::unguarded(&BaselineConfig::new("b2"), chain_spec(3)).unwrap()
    }

    #[test]
    fn ninth_conflicting_frame_at_conf_point_nine() {
        let mut r = b2();
        r.step_frame(&frame(0, vec![det("000", 0.9)])).unwrap();
        for k in 1..=8 {
            assert!(r.step_frame(&frame(k, vec![det("100", 0.9)])).unwrap().is_empty());
        }
        let out = r.step_frame(&frame(9, vec![det("100", 0.9)])).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].confidence - 8.1).abs() < 1e-9);
        assert_eq!(r.state().confs[0], 0.0);
    }

    #[test]
    fn decays_after_single_conflict() {
        let mut r = b2();
        r.step_frame(&frame(0, vec![det("000", 0.9)])).unwrap();
        r.step_frame(&frame(1, vec![det("100", 0.9)])).unwrap();
        assert_eq!(r.state().pending[0], Some(crate::model::ComponentStatus::Installed));
        let mut expected = 0.9;
        for k in 2..40 {
            assert!(r.step_frame(&frame(k, vec![det("000", 0.9)])).unwrap().is_empty());
            expected *= 0.75;
            assert!((r.state().confs[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_frames_do_not_touch_accumulators() {
        let mut r = b2();
        r.step_frame(&frame(0, vec![det("000", 0.9)])).unwrap();
        r.step_frame(&frame(1, vec![det("100", 0.9)])).unwrap();
        r.step_frame(&frame(2, vec![])).unwrap();
        assert_eq!(r.state().confs[0], 0.9);
    }

    #[test]
    fn guard_blocks_unexpected_states() {
        let mut r = AccumulatingRecognizer::procedure_guarded(&BaselineConfig::new("b3"), chain_spec(3)).unwrap();
        // component 1 without component 0 is not reachable in a chain
        for k in 0..100 {
            assert!(r.step_frame(&frame(k, vec![det("010", 1.0)])).unwrap().is_empty());
        }
        assert!(r.state().confs[1] >= 100.0 - 1e-9);
        assert!(r.state().emitted.is_empty());
    }

    #[test]
    fn guard_lets_expected_steps_through() {
        let mut r = AccumulatingRecognizer::procedure_guarded(&BaselineConfig::new("b3"), chain_spec(3)).unwrap();
        let mut all = Vec::new();
        for k in 0..30 {
            all.extend(r.step_frame(&frame(k, vec![det("110", 1.0)])).unwrap());
        }
        // a0 fires at frame 7; a1 is blocked until then, having accumulated
        // past the threshold, and fires in the same frame after a0
        let ids: Vec<_> = all.iter().map(|e| (e.action_id.as_str(), e.frame)).collect();
        assert_eq!(ids, [("a0", 7), ("a1", 7)]);
    }
}
