use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_version, create, write_err, FileKind, FormatError, FORMAT_VERSION};
use crate::metrics::{aggregate_reports, MetricsError, MetricsReport, Subset};

pub const CSV_COLUMNS: [&str; 10] = [
    "recording_id",
    "pos",
    "precision",
    "recall",
    "f1",
    "tau_s",
    "tp",
    "fp",
    "fn",
    "has_errors",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Per-recording reports, sorted by recording id, with both aggregates.
/// `errors_only` is `None` when no recording has errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub recordings: Vec<MetricsReport>,
    pub all: MetricsReport,
    pub errors_only: Option<MetricsReport>,
}

impl ReportSet {
    pub fn from_reports(mut recordings: Vec<MetricsReport>) -> Result<Self, MetricsError> {
        recordings.sort_by(|a, b| a.recording_id.cmp(&b.recording_id));
        let all = aggregate_reports(&recordings, Subset::All)?;
        let errors_only = match aggregate_reports(&recordings, Subset::ErrorsOnly) {
            Ok(r) => Some(r),
            Err(MetricsError::EmptySubset(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            recordings,
            all,
            errors_only,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Aggregates {
    all: MetricsReport,
    errors_only: Option<MetricsReport>,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    format_version: String,
    kind: FileKind,
    recordings: Vec<MetricsReport>,
    aggregates: Aggregates,
}

fn csv_row(r: &MetricsReport) -> [String; 10] {
    [
        r.recording_id.clone(),
        r.pos.to_string(),
        r.precision.to_string(),
        r.recall.to_string(),
        r.f1.to_string(),
        r.tau_s.map(|t| t.to_string()).unwrap_or_default(),
        r.tp.to_string(),
        r.fp.to_string(),
        r.fn_.to_string(),
        r.has_errors.to_string(),
    ]
}

pub fn write_report_to<W: Write>(w: W, set: &ReportSet, format: ReportFormat) -> Result<(), FormatError> {
    match format {
        ReportFormat::Json => {
            let mut w = w;
            let doc = ReportDoc {
                format_version: FORMAT_VERSION.to_string(),
                kind: FileKind::Report,
                recordings: set.recordings.clone(),
                aggregates: Aggregates {
                    all: set.all.clone(),
                    errors_only: set.errors_only.clone(),
                },
            };
            serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| FormatError::Other(e.to_string()))?;
            writeln!(w).map_err(write_err)?;
            w.flush().map_err(write_err)
        }
        ReportFormat::Csv => {
            let csv_err = |e: csv::Error| FormatError::Other(format!("write failed: {e}"));
            let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
            out.write_record(CSV_COLUMNS).map_err(csv_err)?;
            for r in set.recordings.iter().chain(std::iter::once(&set.all)) {
                out.write_record(csv_row(r)).map_err(csv_err)?;
            }
            match &set.errors_only {
                Some(r) => out.write_record(csv_row(r)).map_err(csv_err)?,
                None => {
                    let mut empty = vec![String::new(); CSV_COLUMNS.len()];
                    empty[0] = Subset::ErrorsOnly.label().to_string();
                    out.write_record(empty).map_err(csv_err)?;
                }
            }
            out.flush().map_err(write_err)
        }
    }
}

pub fn write_report(path: &Path, set: &ReportSet, format: ReportFormat) -> Result<(), FormatError> {
    write_report_to(create(path)?, set, format)
}

/// Reads a JSON report.
pub fn read_report(path: &Path) -> Result<ReportSet, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let doc: ReportDoc =
        serde_json::from_str(&text).map_err(|e| FormatError::line(e.line(), format!("invalid report: {e}")))?;
    check_version(&doc.format_version).map_err(FormatError::Other)?;
    if doc.kind != FileKind::Report {
        return Err(FormatError::Other(format!("expected a report, found {}", doc.kind.as_str())));
    }
    Ok(ReportSet {
        recordings: doc.recordings,
        all: doc.aggregates.all,
        errors_only: doc.aggregates.errors_only,
    })
}
