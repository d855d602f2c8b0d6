use proptest::prelude::*;
use psr_core::metrics::{average_delay, classify_events, evaluate_recording, pos_score, Verdict};
use psr_core::model::EventSource;
use psr_core::{StepEvent, StepSequence, Transition};

const FPS: f64 = 2.0;

fn event(action: usize, frame: u64, source: EventSource) -> StepEvent {
    StepEvent {
        action_id: format!("a{action}"),
        component: action,
        transition: Transition::Install,
        time_s: frame as f64 / FPS,
        frame,
        confidence: 1.0,
        source,
    }
}

fn sequence(id: &str, mut events: Vec<StepEvent>) -> StepSequence {
    events.sort_by_key(|e| (e.frame, e.component));
    StepSequence::new(id, FPS, events).unwrap()
}

/// Distinct actions out of 0..12, each at a random frame.
fn events(source: EventSource) -> impl Strategy<Value = Vec<StepEvent>> {
    proptest::collection::btree_map(0usize..12, 0u64..200, 0..10)
        .prop_map(move |m| m.into_iter().map(|(a, f)| event(a, f, source)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn counting_invariants(y in events(EventSource::GroundTruth), yhat in events(EventSource::Recognized)) {
        let y = sequence("r", y);
        let yhat = sequence("r", yhat);
        let outcome = classify_events(&y, &yhat).unwrap();
        prop_assert_eq!(outcome.tp() + outcome.fp(), yhat.len());
        prop_assert!(outcome.tp() + outcome.fn_count() <= y.len());
        for p in &outcome.predictions {
            match p.verdict {
                Verdict::TruePositive => prop_assert!(p.delay_s.unwrap() >= 0.0),
                Verdict::FalsePositive => prop_assert!(p.delay_s.is_none()),
            }
        }
        let pos = pos_score(&y, &yhat);
        if y.is_empty() {
            prop_assert!(pos.is_err());
        } else {
            let pos = pos.unwrap();
            prop_assert!((0.0..=1.0).contains(&pos));
            let report = evaluate_recording(&y, &yhat).unwrap();
            prop_assert!((0.0..=1.0).contains(&report.f1));
            prop_assert_eq!(report.tau_s, average_delay(&outcome));
        }
    }

    #[test]
    fn shifting_true_positives(
        y in events(EventSource::GroundTruth),
        yhat in events(EventSource::Recognized),
        shift in 0u64..40,
    ) {
        let y = sequence("r", y);
        let yhat = sequence("r", yhat);
        let before = classify_events(&y, &yhat).unwrap();
        let shifted: Vec<StepEvent> = before
            .predictions
            .iter()
            .map(|p| match p.verdict {
                Verdict::TruePositive => event(p.event.component, p.event.frame + shift, p.event.source),
                Verdict::FalsePositive => p.event.clone(),
            })
            .collect();
        let after = classify_events(&y, &sequence("r", shifted)).unwrap();
        let verdicts = |o: &psr_core::metrics::MatchOutcome| {
            let mut v: Vec<(String, Verdict)> =
                o.predictions.iter().map(|p| (p.event.action_id.clone(), p.verdict)).collect();
            v.sort_by(|a, b| a.0.cmp(&b.0));
            v
        };
        if verdicts(&before) == verdicts(&after) {
            let delta = shift as f64 / FPS;
            match (average_delay(&before), average_delay(&after)) {
                (Some(b), Some(a)) => {
                    // half-second grid: sums are exact, the mean only rounds once
                    let sum = |o: &psr_core::metrics::MatchOutcome| o.delays().sum::<f64>();
                    prop_assert_eq!(sum(&after), sum(&before) + delta * before.tp() as f64);
                    prop_assert!((a - (b + delta)).abs() <= 1e-9);
                }
                (None, None) => {}
                other => prop_assert!(false, "tau defined on one side only: {:?}", other),
            }
        }
    }

    #[test]
    fn perfect_prediction(y in events(EventSource::GroundTruth)) {
        prop_assume!(!y.is_empty());
        let truth = sequence("r", y.clone());
        let pred = sequence("r", y.into_iter().map(|e| StepEvent { source: EventSource::Recognized, ..e }).collect());
        let report = evaluate_recording(&truth, &pred).unwrap();
        prop_assert_eq!((report.pos, report.f1, report.tau_s), (1.0, 1.0, Some(0.0)));
    }
}
