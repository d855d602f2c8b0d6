use proptest::prelude::*;
use psr_core::io::{parse_ground_truth, parse_stream, write_ground_truth_to, write_stream_to, FileKind, FileManifest, LabelView};
use psr_core::model::EventSource;
use psr_core::sim::{random_procedure, simulate, ErrorInjection, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn valid_files(seed: u64) -> (String, String) {
    let spec = random_procedure(seed, 5);
    let cfg = SimConfig {
        seed,
        dwell_mean_s: 0.5,
        dwell_jitter_s: 0.2,
        ..SimConfig::default()
    };
    let sc = simulate(&spec, &ErrorInjection::default(), &cfg, "fz").unwrap();
    let mut stream = Vec::new();
    write_stream_to(&mut stream, &FileManifest::new(FileKind::Stream, cfg.fps, "fz"), &sc.stream).unwrap();
    let mut gt = Vec::new();
    write_ground_truth_to(&mut gt, &sc.ground_truth, &spec.initial_state, &spec, EventSource::GroundTruth).unwrap();
    (String::from_utf8(stream).unwrap(), String::from_utf8(gt).unwrap())
}

const JUNK: &[&str] = &[
    "", " ", "{", "}", "null", "[]", "\"x\"", "-1", "1e999", "NaN", ":", ",", "\"state\"", "\"frame\"", "2,2", "0,0,0,0,0,0", "\u{feff}", "\t",
];

/// Damages one random spot of a valid file.
fn mutate(text: &str, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut bytes = text.as_bytes().to_vec();
    match rng.gen_range(0..6) {
        0 => {
            let at = rng.gen_range(0..bytes.len());
            bytes.truncate(at);
        }
        1 => {
            let at = rng.gen_range(0..bytes.len());
            bytes[at] = rng.gen();
        }
        2 => {
            let at = rng.gen_range(0..=bytes.len());
            let junk = JUNK[rng.gen_range(0..JUNK.len())];
            bytes.splice(at..at, junk.bytes());
        }
        3 => {
            let lines: Vec<&str> = text.lines().collect();
            let mut lines: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
            let i = rng.gen_range(0..lines.len());
            let j = rng.gen_range(0..lines.len());
            lines.swap(i, j);
            if i == j {
                lines.insert(i, lines[i].clone());
            }
            bytes = (lines.join("\n") + "\n").into_bytes();
        }
        4 => {
            let at = rng.gen_range(0..bytes.len());
            let len = rng.gen_range(1..8).min(bytes.len() - at);
            bytes.drain(at..at + len);
        }
        _ => {
            let numeric: Vec<usize> = bytes.iter().enumerate().filter(|(_, b)| b.is_ascii_digit()).map(|(i, _)| i).collect();
            if let Some(&at) = numeric.get(rng.gen_range(0..numeric.len().max(1))) {
                bytes.splice(at..at + 1, b"-7".iter().copied());
            }
        }
    }
    bytes
}

#[test]
fn fuzzed_files_fail_with_line_numbers() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rejected = 0;
    let mut cases = 0;
    for seed in 0..50u64 {
        let spec = random_procedure(seed, 5);
        let (stream, gt) = valid_files(seed);
        for _ in 0..12 {
            cases += 2;
            let bad = mutate(&stream, &mut rng);
            if let Err(e) = parse_stream(bad.as_slice()) {
                rejected += 1;
                assert!(e.line_number().is_some(), "stream error without line: {e}");
            }
            let bad = mutate(&gt, &mut rng);
            if let Err(e) = parse_ground_truth(bad.as_slice(), &spec, LabelView::ErrorsIncluded) {
                rejected += 1;
                assert!(e.line_number().is_some(), "label error without line: {e}");
            }
        }
    }
    assert!(cases >= 1000);
    assert!(rejected * 2 >= cases, "only {rejected} of {cases} mutations rejected");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
        let spec = random_procedure(1, 5);
        if let Err(e) = parse_stream(bytes.as_slice()) {
            prop_assert!(e.line_number().is_some());
        }
        if let Err(e) = parse_ground_truth(bytes.as_slice(), &spec, LabelView::CorrectOnly) {
            prop_assert!(e.line_number().is_some());
        }
    }

    #[test]
    fn valid_files_round_trip(seed in 0u64..5_000) {
        let spec = random_procedure(seed, 5);
        let (stream, gt) = valid_files(seed);
        let (manifest, frames) = parse_stream(stream.as_bytes()).unwrap();
        let mut again = Vec::new();
        write_stream_to(&mut again, &manifest, &frames).unwrap();
        prop_assert_eq!(String::from_utf8(again).unwrap(), stream);

        let (_, seq) = parse_ground_truth(gt.as_bytes(), &spec, LabelView::ErrorsIncluded).unwrap();
        let mut again = Vec::new();
        write_ground_truth_to(&mut again, &seq, &spec.initial_state, &spec, EventSource::GroundTruth).unwrap();
        prop_assert_eq!(String::from_utf8(again).unwrap(), gt);
    }
}
