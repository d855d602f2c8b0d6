//! File formats.
//!
//! Detection streams and step labels are line-delimited JSON: the first line
//! is a [`FileManifest`], every following line one record. Procedures,
//! scenario manifests and reports are single JSON documents. All files are
//! UTF-8 with LF line endings; states are always written in the
//! comma-separated form.

mod labels;
mod procedure;
mod report;
mod scenario;
mod stream;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Diagnostic, EventSource};

pub use labels::{parse_ground_truth, read_ground_truth, write_ground_truth, write_ground_truth_to, LabelView};
pub use procedure::{bundled_procedure, parse_procedure, read_procedure, write_procedure, BUNDLED_PROCEDURES};
pub use report::{read_report, write_report, write_report_to, ReportFormat, ReportSet};
pub use scenario::{read_scenario_manifest, write_scenario, ScenarioManifest, GROUND_TRUTH_FILE, SCENARIO_FILE, STREAM_FILE};
pub use stream::{parse_stream, read_stream, write_stream, write_stream_to, StreamReader};

pub const FORMAT_VERSION: &str = "1.0.0";
const SUPPORTED_MAJOR: u64 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("procedure is invalid: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Procedure(Vec<Diagnostic>),
    #[error("{0}")]
    Other(String),
}

impl FormatError {
    pub(crate) fn line(line: usize, message: impl Into<String>) -> Self {
        Self::Line {
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1-based line of the offending input, when known.
    pub fn line_number(&self) -> Option<usize> {
        match self {
            Self::Line { line, .. } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Stream,
    GroundTruth,
    Procedure,
    Scenario,
    Report,
}

impl FileKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stream => "stream",
            Self::GroundTruth => "ground_truth",
            Self::Procedure => "procedure",
            Self::Scenario => "scenario",
            Self::Report => "report",
        }
    }
}

/// Header line of line-delimited files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileManifest {
    pub format_version: String,
    pub kind: FileKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recording_id: Option<String>,
    /// Procedure the states refer to (label files).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub procedure: Option<String>,
    /// Origin of the events in a label file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<EventSource>,
}

impl FileManifest {
    pub fn new(kind: FileKind, fps: f64, recording_id: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            kind,
            fps: Some(fps),
            recording_id: Some(recording_id.into()),
            procedure: None,
            source: None,
        }
    }

    pub fn fps(&self) -> f64 {
        self.fps.expect("checked on read")
    }

    pub fn recording_id(&self) -> &str {
        self.recording_id.as_deref().expect("checked on read")
    }
}

/// Accepts `MAJOR.MINOR.PATCH` with a supported major version.
pub fn check_version(version: &str) -> Result<(), String> {
    let parts: Vec<&str> = version.split('.').collect();
    if parts.len() != 3 || parts.iter().any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit())) {
        return Err(format!("format_version '{version}' is not MAJOR.MINOR.PATCH"));
    }
    let major: u64 = parts[0].parse().map_err(|_| format!("format_version '{version}' is too large"))?;
    if major != SUPPORTED_MAJOR {
        return Err(format!(
            "unsupported format major version {major} (supported: {SUPPORTED_MAJOR})"
        ));
    }
    Ok(())
}

/// Reads and checks the manifest line of a line-delimited file.
fn read_manifest<R: BufRead>(lines: &mut LineReader<R>, kind: FileKind) -> Result<FileManifest, FormatError> {
    let (n, text) = lines
        .next_line()?
        .ok_or_else(|| FormatError::line(1, "missing manifest line"))?;
    let manifest: FileManifest =
        serde_json::from_str(&text).map_err(|e| FormatError::line(n, format!("invalid manifest: {e}")))?;
    check_version(&manifest.format_version).map_err(|m| FormatError::line(n, m))?;
    if manifest.kind != kind {
        return Err(FormatError::line(
            n,
            format!("expected a {} file, found {}", kind.as_str(), manifest.kind.as_str()),
        ));
    }
    match manifest.fps {
        Some(fps) if fps > 0.0 && fps.is_finite() => {}
        Some(fps) => return Err(FormatError::line(n, format!("fps {fps} must be positive"))),
        None => return Err(FormatError::line(n, "manifest lacks fps")),
    }
    match manifest.recording_id.as_deref() {
        Some(id) if !id.is_empty() => {}
        _ => return Err(FormatError::line(n, "manifest lacks recording_id")),
    }
    Ok(manifest)
}

/// Numbered lines; invalid UTF-8 and blank lines are reported with their
/// line number.
struct LineReader<R> {
    inner: R,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> LineReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            buf: Vec::new(),
        }
    }

    fn next_line(&mut self) -> Result<Option<(usize, String)>, FormatError> {
        self.buf.clear();
        let read = self
            .inner
            .read_until(b'\n', &mut self.buf)
            .map_err(|e| FormatError::line(self.line + 1, format!("read failed: {e}")))?;
        if read == 0 {
            return Ok(None);
        }
        self.line += 1;
        if self.buf.last() == Some(&b'\n') {
            self.buf.pop();
        }
        let text = std::str::from_utf8(&self.buf)
            .map_err(|_| FormatError::line(self.line, "invalid UTF-8"))?
            .to_string();
        if text.trim().is_empty() {
            return Err(FormatError::line(self.line, "blank line"));
        }
        Ok(Some((self.line, text)))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path).map(BufReader::new).map_err(|e| FormatError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, FormatError> {
    File::create(path).map(BufWriter::new).map_err(|e| FormatError::io(path, e))
}

fn write_err(e: std::io::Error) -> FormatError {
    FormatError::Other(format!("write failed: {e}"))
}

fn json_line<W: std::io::Write, T: Serialize>(w: &mut W, value: &T) -> Result<(), FormatError> {
    let line = serde_json::to_string(value).map_err(|e| FormatError::Other(e.to_string()))?;
    writeln!(w, "{line}").map_err(write_err)
}

/// Reads and checks the manifest line of a line-delimited file of any kind.
pub fn peek_manifest(path: &Path) -> Result<FileManifest, FormatError> {
    let mut lines = LineReader::new(open(path)?);
    let (n, first) = lines
        .next_line()?
        .ok_or_else(|| FormatError::line(1, "missing manifest line"))?;
    let manifest: FileManifest =
        serde_json::from_str(&first).map_err(|e| FormatError::line(n, format!("invalid manifest: {e}")))?;
    check_version(&manifest.format_version).map_err(|m| FormatError::line(n, m))?;
    Ok(manifest)
}

/// Reads only the manifest line of a line-delimited file, or the top-level
/// `kind` of a JSON document.
pub fn sniff_kind(path: &Path) -> Result<FileKind, FormatError> {
    #[derive(Deserialize)]
    struct Kind {
        kind: FileKind,
    }
    let mut lines = LineReader::new(open(path)?);
    let (n, first) = lines
        .next_line()?
        .ok_or_else(|| FormatError::line(1, "empty file"))?;
    if let Ok(k) = serde_json::from_str::<Kind>(&first) {
        return Ok(k.kind);
    }
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str::<Kind>(&text)
        .map(|k| k.kind)
        .map_err(|e| FormatError::line(n.max(e.line()), format!("cannot determine file kind: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn versions() {
        assert!(check_version("1.0.0").is_ok());
        assert!(check_version("1.7.2").is_ok());
        assert!(check_version("2.0.0").is_err());
        assert!(check_version("1.0").is_err());
        assert!(check_version("1.x.0").is_err());
    }
}
