use std::sync::Arc;

use super::{recognized, select_top_detection, BaselineConfig, DetectionFrame, RecognizeError, Recognizer, RecognizerState};
use crate::model::{diff_states, ProcedureSpec, StepEvent};

/// Emits every step between the believed state and a differing top
/// detection whose confidence reaches the threshold.
#[derive(Debug, Clone)]
pub struct StateChangeRecognizer {
    name: String,
    spec: Arc<ProcedureSpec>,
    threshold: f64,
    state: RecognizerState,
}

impl StateChangeRecognizer {
    /// Starts idle; the first detected state becomes the believed state.
    pub fn new(config: &BaselineConfig, spec: Arc<ProcedureSpec>) -> Result<Self, RecognizeError> {
        config.validate()?;
        let state = RecognizerState::new(spec.component_count(), None);
        Ok(Self {
            name: config.variant.clone(),
            threshold: config.detection_threshold,
            spec,
            state,
        })
    }
}

impl Recognizer for StateChangeRecognizer {
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
        let Some(current) = self.state.current.as_ref() else {
            self.state.initialize(detected.clone());
            return Ok(Vec::new());
        };
        if conf < self.threshold || detected == current {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for (component, transition) in diff_states(current, detected)? {
            let event = recognized(&self.spec, component, transition, frame, conf);
            if self.state.emit(event.clone()) {
                out.push(event);
            }
        }
        self.state.current = Some(detected.clone());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{chain_spec, det, frame};
    use super::*;
    use crate::model::Transition;

    fn b1() -> StateChangeRecognizer {
        StateChangeRecognizer::new(&BaselineConfig::new("b1"), chain_spec(3)).unwrap()
    }

    #[test]
    fn emits_on_confident_change() {
        let mut r = b1();
        assert!(r.step_frame(&frame(0, vec![det("000", 0.9)])).unwrap().is_empty());
        let out = r.step_frame(&frame(1, vec![det("100", 0.9)])).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].action_id, "a0");
        assert_eq!(out[0].frame, 1);
        assert_eq!(out[0].time_s, 0.1);
    }

    #[test]
    fn ignores_low_confidence() {
        let mut r = b1();
        r.step_frame(&frame(0, vec![det("000", 0.9)])).unwrap();
        assert!(r.step_frame(&frame(1, vec![det("100", 0.4)])).unwrap().is_empty());
        assert_eq!(r.state().current.as_ref().unwrap().to_string(), "0,0,0");
    }

    #[test]
    fn multi_component_jump_in_index_order() {
        let mut r = b1();
        r.step_frame(&frame(0, vec![det("000", 0.9)])).unwrap();
        let out = r.step_frame(&frame(1, vec![det("111", 0.9)])).unwrap();
        let ids: Vec<_> = out.iter().map(|e| e.action_id.as_str()).collect();
        assert_eq!(ids, ["a0", "a1", "a2"]);
    }

    #[test]
    fn repeated_action_is_not_emitted_twice() {
        let mut r = b1();
        r.step_frame(&frame(0, vec![det("000", 0.9)])).unwrap();
        r.step_frame(&frame(1, vec![det("100", 0.9)])).unwrap();
        let back = r.step_frame(&frame(2, vec![det("000", 0.9)])).unwrap();
        assert_eq!(back[0].transition, Transition::Remove);
        assert_eq!(back[0].action_id, "c0:remove");
        assert!(r.step_frame(&frame(3, vec![det("100", 0.9)])).unwrap().is_empty());
        assert_eq!(r.state().current.as_ref().unwrap().to_string(), "1,0,0");
        assert_eq!(r.state().emitted.len(), 2);
    }
}
