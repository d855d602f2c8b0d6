use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, create, write_err, FileKind, FormatError, FORMAT_VERSION};
use crate::model::{validate_procedure, ProcedureSpec};

/// Procedures shipped with the crate.
pub const BUNDLED_PROCEDURES: &[&str] = &["industreal_car_assembly", "industreal_car_maintenance"];

const ASSEMBLY: &str = include_str!("../../procedures/industreal_car_assembly.json");
const MAINTENANCE: &str = include_str!("../../procedures/industreal_car_maintenance.json");

#[derive(Serialize, Deserialize)]
struct ProcedureDoc {
    format_version: String,
    kind: FileKind,
    #[serde(flatten)]
    spec: ProcedureSpec,
}

/// Parses and validates a procedure document.
pub fn parse_procedure(text: &str) -> Result<ProcedureSpec, FormatError> {
    let doc: ProcedureDoc = serde_json::from_str(text)
        .map_err(|e| FormatError::line(e.line(), format!("invalid procedure document: {e}")))?;
    check_version(&doc.format_version).map_err(FormatError::Other)?;
    if doc.kind != FileKind::Procedure {
        return Err(FormatError::Other(format!(
            "expected a procedure document, found {}",
            doc.kind.as_str()
        )));
    }
    let diagnostics = validate_procedure(&doc.spec);
    if !diagnostics.is_empty() {
        return Err(FormatError::Procedure(diagnostics));
    }
    Ok(doc.spec)
}

pub fn read_procedure(path: &Path) -> Result<ProcedureSpec, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_procedure(&text)
}

pub fn write_procedure(path: &Path, spec: &ProcedureSpec) -> Result<(), FormatError> {
    let doc = ProcedureDoc {
        format_version: FORMAT_VERSION.to_string(),
        kind: FileKind::Procedure,
        spec: spec.clone(),
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| FormatError::Other(e.to_string()))?;
    writeln!(w).map_err(write_err)?;
    w.flush().map_err(write_err)
}

pub fn bundled_procedure(name: &str) -> Option<ProcedureSpec> {
    let text = match name {
        "industreal_car_assembly" => ASSEMBLY,
        "industreal_car_maintenance" => MAINTENANCE,
        _ => return None,
    };
    Some(parse_procedure(text).expect("bundled procedures are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ComponentStatus, Diagnostic, Transition};

    #[test]
    fn bundled_assembly() {
        let spec = bundled_procedure("industreal_car_assembly").unwrap();
        assert!(validate_procedure(&spec).is_empty());
        let names: Vec<_> = spec.components.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "base",
                "front chassis",
                "front chassis pin",
                "rear chassis",
                "short-rear chassis",
                "front-rear chassis pin",
                "rear-rear chassis pin",
                "front bracket",
                "front bracket screw",
                "front wheel assy",
                "rear wheel assy",
            ]
        );
        assert!(spec.initial_state.statuses().iter().all(|s| *s == ComponentStatus::Absent));
        let states = spec.expected_states().unwrap();
        assert!(states.contains(&crate::model::AssemblyState::parse("11100000000").unwrap()));
        assert!(states.contains(&spec.final_state().unwrap()));
    }

    #[test]
    fn bundled_maintenance() {
        let spec = bundled_procedure("industreal_car_maintenance").unwrap();
        assert!(validate_procedure(&spec).is_empty());
        assert_eq!(spec.component_count(), 11);
        assert!(spec.actions.iter().any(|a| a.transition == Transition::Remove));
        let end = spec.final_state().unwrap();
        assert_eq!(end.get(3), Some(ComponentStatus::Absent));
        assert_eq!(end.get(4), Some(ComponentStatus::Installed));
    }

    #[test]
    fn unknown_bundle() {
        assert!(bundled_procedure("bicycle").is_none());
    }

    #[test]
    fn cycle_is_an_error() {
        let text = r#"{"format_version":"1.0.0","kind":"procedure","id":"c",
            "components":[{"index":0,"name":"x"},{"index":1,"name":"y"}],
            "initial_state":"0,0",
            "actions":[
              {"action_id":"A","component":0,"transition":"install","prerequisites":["B"]},
              {"action_id":"B","component":1,"transition":"install","prerequisites":["A"]}]}"#;
        match parse_procedure(text) {
            Err(FormatError::Procedure(d)) => assert!(matches!(d[0], Diagnostic::PrerequisiteCycle { .. })),
            other => panic!("expected cycle diagnostic, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_procedure("{\n\"format_version\": \"1.0.0\",\n oops }").unwrap_err();
        assert_eq!(err.line_number(), Some(3));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in BUNDLED_PROCEDURES {
            let spec = bundled_procedure(name).unwrap();
            let path = dir.path().join(format!("{name}.json"));
            write_procedure(&path, &spec).unwrap();
            assert_eq!(read_procedure(&path).unwrap(), spec);
        }
    }
}
