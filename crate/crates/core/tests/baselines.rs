use std::sync::Arc;

use proptest::prelude::*;
use psr_core::baselines::{run_baseline, run_recognizer, Registry};
use psr_core::io::bundled_procedure;
use psr_core::sim::{random_procedure, simulate, ErrorInjection, SimConfig};
use psr_core::{BaselineConfig, DetectionFrame, ProcedureSpec};

fn procedures() -> Vec<Arc<ProcedureSpec>> {
    vec![
        Arc::new(bundled_procedure("industreal_car_assembly").unwrap()),
        Arc::new(bundled_procedure("industreal_car_maintenance").unwrap()),
        Arc::new(random_procedure(5, 7)),
    ]
}

fn noisy(seed: u64) -> SimConfig {
    SimConfig {
        seed,
        misclass_prob: 0.15,
        detect_prob: 0.8,
        ..SimConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn prefix_runs_are_prefixes(seed in 0u64..10_000, which in 0usize..3, variant in 0usize..3, cut in 0.0f64..1.0) {
        let spec = procedures()[which].clone();
        let sc = simulate(&spec, &ErrorInjection::default(), &noisy(seed), "r").unwrap();
        let config = BaselineConfig::new(["b1", "b2", "b3"][variant]);
        let full = run_baseline(&config, spec.clone(), &sc.stream, "r", sc.fps()).unwrap();
        let k = (cut * sc.stream.len() as f64) as usize;
        let part = run_baseline(&config, spec, &sc.stream[..k], "r", sc.fps()).unwrap();
        prop_assert!(part.events.len() <= full.events.len());
        prop_assert_eq!(&part.events[..], &full.events[..part.events.len()]);
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..10_000, which in 0usize..3, variant in 0usize..3) {
        let spec = procedures()[which].clone();
        let sc = simulate(&spec, &ErrorInjection::default(), &noisy(seed), "r").unwrap();
        let config = BaselineConfig::new(["b1", "b2", "b3"][variant]);
        let a = run_baseline(&config, spec.clone(), &sc.stream, "r", sc.fps()).unwrap();
        let b = run_baseline(&config, spec, &sc.stream, "r", sc.fps()).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn b2_and_b3_agree_without_conflicts(seed in 0u64..10_000, which in 0usize..3) {
        let spec = procedures()[which].clone();
        let sc = simulate(&spec, &ErrorInjection::default(), &SimConfig::noiseless(seed), "r").unwrap();
        let b2 = run_baseline(&BaselineConfig::new("b2"), spec.clone(), &sc.stream, "r", sc.fps()).unwrap();
        let b3 = run_baseline(&BaselineConfig::new("b3"), spec, &sc.stream, "r", sc.fps()).unwrap();
        prop_assert_eq!(b2, b3);
    }

    #[test]
    fn b3_stays_inside_expected_states(seed in 0u64..10_000, which in 0usize..3) {
        let spec = procedures()[which].clone();
        let expected = spec.expected_states().unwrap();
        let inj = ErrorInjection {
            swaps: vec![0],
            ..Default::default()
        };
        let sc = simulate(&spec, &inj, &noisy(seed), "r").unwrap();
        let mut rec = Registry::default().create(&BaselineConfig::new("b3"), spec).unwrap();
        for frame in &sc.stream {
            let events = rec.step_frame(frame).unwrap();
            if !events.is_empty() {
                prop_assert!(expected.contains(rec.state().current.as_ref().unwrap()));
            }
        }
    }
}

#[test]
fn frames_with_wrong_timestamps_are_rejected() {
    let spec = procedures()[0].clone();
    let mut rec = Registry::default().create(&BaselineConfig::new("b1"), spec).unwrap();
    let bad = DetectionFrame {
        frame: 3,
        time_s: 0.25,
        detections: vec![],
    };
    assert!(run_recognizer(rec.as_mut(), [bad], "r", 10.0).is_err());
}

#[test]
fn unknown_variant_is_rejected() {
    let spec = procedures()[0].clone();
    assert!(Registry::default().create(&BaselineConfig::new("b9"), spec).is_err());
}
