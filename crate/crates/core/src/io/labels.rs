use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{create, json_line, open, read_manifest, write_err, FileKind, FileManifest, FormatError, LineReader};
use crate::model::{diff_states, AssemblyState, EventSource, ProcedureSpec, StepEvent, StepSequence};

/// Which label set to build from a label file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelView {
    /// Correctly completed steps only.
    CorrectOnly,
    /// Also incorrect completions and removals of incorrect parts.
    ErrorsIncluded,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateRecord {
    frame: u64,
    state: AssemblyState,
}

/// Parses a label file: the first record is the starting state, every later
/// record the state right after a step completion. Events come from the
/// differences between consecutive states.
pub fn parse_ground_truth<R: BufRead>(
    reader: R,
    spec: &ProcedureSpec,
    view: LabelView,
) -> Result<(FileManifest, StepSequence), FormatError> {
    let mut lines = LineReader::new(reader);
    let manifest = read_manifest(&mut lines, FileKind::GroundTruth)?;
    let fps = manifest.fps();
    let source = manifest.source.unwrap_or(EventSource::GroundTruth);

    let mut prev: Option<StateRecord> = None;
    let mut seen_change = false;
    let mut ids = HashSet::new();
    let mut events = Vec::new();
    while let Some((line, text)) = lines.next_line()? {
        let record: StateRecord =
            serde_json::from_str(&text).map_err(|e| FormatError::line(line, format!("invalid state record: {e}")))?;
        spec.check_state(&record.state)
            .map_err(|e| FormatError::line(line, e.to_string()))?;
        let Some(before) = prev.as_ref() else {
            prev = Some(record);
            continue;
        };
        // the starting record may share its frame with the first change
        let monotonic = if seen_change {
            record.frame > before.frame
        } else {
            record.frame >= before.frame
        };
        if !monotonic {
            return Err(FormatError::line(
                line,
                format!("frame {} does not follow frame {}", record.frame, before.frame),
            ));
        }
        seen_change = true;
        let changes = diff_states(&before.state, &record.state).map_err(|e| FormatError::line(line, e.to_string()))?;
        for (component, transition) in changes {
            let action_id = spec.event_action_id(component, transition);
            if !ids.insert(action_id.clone()) {
                return Err(FormatError::line(line, format!("action '{action_id}' completed twice")));
            }
            events.push(StepEvent {
                action_id,
                component,
                transition,
                time_s: record.frame as f64 / fps,
                frame: record.frame,
                confidence: 1.0,
                source,
            });
        }
        prev = Some(record);
    }
    if prev.is_none() {
        return Err(FormatError::line(lines.line + 1, "label file has no starting state"));
    }
    let seq = StepSequence::new(manifest.recording_id(), fps, events).map_err(|e| FormatError::Other(e.to_string()))?;
    let seq = match view {
        LabelView::CorrectOnly => seq.correct_only(),
        LabelView::ErrorsIncluded => seq,
    };
    Ok((manifest, seq))
}

pub fn read_ground_truth(path: &Path, spec: &ProcedureSpec, view: LabelView) -> Result<(FileManifest, StepSequence), FormatError> {
    parse_ground_truth(open(path)?, spec, view)
}

/// Writes `seq` as a label file, replaying its events from `initial`.
/// Confidences are not stored. Fails if an event does not change the
/// replayed state, since it could not be read back.
pub fn write_ground_truth_to<W: Write>(
    mut w: W,
    seq: &StepSequence,
    initial: &AssemblyState,
    spec: &ProcedureSpec,
    source: EventSource,
) -> Result<(), FormatError> {
    spec.check_state(initial).map_err(|e| FormatError::Other(e.to_string()))?;
    let mut state = initial.clone();
    for e in &seq.events {
        if e.component >= state.len() || state.get(e.component) == Some(e.transition.target()) {
            return Err(FormatError::Other(format!(
                "event '{}' at frame {} does not change the replayed state",
                e.action_id, e.frame
            )));
        }
        state.apply(e.component, e.transition);
    }

    let mut manifest = FileManifest::new(FileKind::GroundTruth, seq.fps, seq.recording_id.clone());
    manifest.procedure = Some(spec.id.clone());
    manifest.source = Some(source);
    json_line(&mut w, &manifest)?;
    json_line(
        &mut w,
        &StateRecord {
            frame: 0,
            state: initial.clone(),
        },
    )?;
    for (frame, state) in seq.state_changes(initial) {
        json_line(&mut w, &StateRecord { frame, state })?;
    }
    w.flush().map_err(write_err)
}

pub fn write_ground_truth(
    path: &Path,
    seq: &StepSequence,
    initial: &AssemblyState,
    spec: &ProcedureSpec,
    source: EventSource,
) -> Result<(), FormatError> {
    write_ground_truth_to(create(path)?, seq, initial, spec, source)
}
