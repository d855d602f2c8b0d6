use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, create, write_err, write_ground_truth, write_stream, FileKind, FileManifest, FormatError, FORMAT_VERSION};
use crate::model::{EventSource, ProcedureSpec};
use crate::sim::{ErrorInjection, Scenario, Segment, SimConfig};

pub const STREAM_FILE: &str = "stream.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const SCENARIO_FILE: &str = "scenario.json";

/// Everything needed to regenerate a simulated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub format_version: String,
    pub kind: FileKind,
    pub recording_id: String,
    pub fps: f64,
    pub procedure: String,
    pub seed: u64,
    pub config: SimConfig,
    pub injection: ErrorInjection,
    pub stream_file: String,
    pub ground_truth_file: String,
    pub timeline: Vec<Segment>,
}

/// Writes `stream.jsonl`, `ground_truth.jsonl` and `scenario.json` into
/// `dir`, creating it if needed.
pub fn write_scenario(
    dir: &Path,
    scenario: &Scenario,
    spec: &ProcedureSpec,
    inj: &ErrorInjection,
    cfg: &SimConfig,
) -> Result<ScenarioManifest, FormatError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut stream_manifest = FileManifest::new(FileKind::Stream, scenario.fps(), scenario.recording_id());
    stream_manifest.source = None;
    write_stream(&dir.join(STREAM_FILE), &stream_manifest, &scenario.stream)?;
    write_ground_truth(
        &dir.join(GROUND_TRUTH_FILE),
        &scenario.ground_truth,
        &spec.initial_state,
        spec,
        EventSource::GroundTruth,
    )?;
    let manifest = ScenarioManifest {
        format_version: FORMAT_VERSION.to_string(),
        kind: FileKind::Scenario,
        recording_id: scenario.recording_id().to_string(),
        fps: scenario.fps(),
        procedure: spec.id.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        injection: inj.clone(),
        stream_file: STREAM_FILE.to_string(),
        ground_truth_file: GROUND_TRUTH_FILE.to_string(),
        timeline: scenario.timeline.clone(),
    };
    let mut w = create(&dir.join(SCENARIO_FILE))?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| FormatError::Other(e.to_string()))?;
    use std::io::Write;
    writeln!(w).map_err(write_err)?;
    w.flush().map_err(write_err)?;
    Ok(manifest)
}

pub fn read_scenario_manifest(path: &Path) -> Result<ScenarioManifest, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let m: ScenarioManifest =
        serde_json::from_str(&text).map_err(|e| FormatError::line(e.line(), format!("invalid scenario manifest: {e}")))?;
    check_version(&m.format_version).map_err(FormatError::Other)?;
    if m.kind != FileKind::Scenario {
        return Err(FormatError::Other(format!("expected a scenario, found {}", m.kind.as_str())));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{bundled_procedure, read_ground_truth, read_stream, LabelView};
    use crate::sim::simulate;

    #[test]
    fn written_scenario_reads_back() {
        let spec = bundled_procedure("industreal_car_assembly").unwrap();
        let cfg = SimConfig {
            seed: 11,
            ..SimConfig::default()
        };
        let inj = ErrorInjection::default();
        let sc = simulate(&spec, &inj, &cfg, "sim-11").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_scenario(dir.path(), &sc, &spec, &inj, &cfg).unwrap();
        assert_eq!(read_scenario_manifest(&dir.path().join(SCENARIO_FILE)).unwrap(), m);
        let (_, frames) = read_stream(&dir.path().join(STREAM_FILE)).unwrap();
        assert_eq!(frames, sc.stream);
        let (_, gt) = read_ground_truth(&dir.path().join(GROUND_TRUTH_FILE), &spec, LabelView::ErrorsIncluded).unwrap();
        assert_eq!(gt.action_order(), sc.ground_truth.action_order());
    }
}
