//! Batch front end: `validate`, `run`, `eval`, `simulate` and `bench`.
//!
//! Every command returns an exit code: 0 on success, 1 for invalid input,
//! 2 for internal failures. Diagnostics go to standard error.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use psr_core::baselines::{BaselineConfig, Registry};
use psr_core::io::{
    self, bundled_procedure, peek_manifest, read_ground_truth, read_procedure, read_report, read_scenario_manifest,
    sniff_kind, write_ground_truth, write_report, write_scenario, FileKind, FormatError, LabelView, ReportFormat,
    ReportSet, StreamReader,
};
use psr_core::metrics::evaluate_with_procedure;
use psr_core::model::EventSource;
use psr_core::sim::{simulate, ErrorInjection, SimConfig};
use psr_core::{ProcedureSpec, StepSequence};

pub const PREDICTION_FILE: &str = "prediction.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    InvalidInput = 1,
    Internal = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) | Self::Internal(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn status(&self) -> ExitStatus {
        match self {
            Self::Input(_) => ExitStatus::InvalidInput,
            Self::Internal(_) => ExitStatus::Internal,
        }
    }
}

fn input(context: impl fmt::Display, e: impl fmt::Display) -> CliError {
    CliError::Input(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "psr", version, about = "Procedure step recognition toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check files and print diagnostics.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Procedure for label files (path or bundled name); defaults to the
        /// procedure named in the file.
        #[arg(long)]
        spec: Option<String>,
    },
    /// Run a baseline recognizer over a detection stream.
    Run {
        #[arg(long)]
        baseline: String,
        #[arg(long)]
        spec: String,
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Detection threshold for b1, accumulation threshold for b2 and b3.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        decay: Option<f64>,
    },
    /// Score a prediction file against a ground-truth file.
    Eval {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Simulate a recording: stream, ground truth and scenario manifest.
    Simulate {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        seed: u64,
        /// JSON simulation config; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        recording_id: Option<String>,
        #[arg(long, value_delimiter = ',')]
        omit: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        incorrect: Vec<String>,
        /// Swap the executed steps at positions k and k + 1.
        #[arg(long, value_delimiter = ',')]
        swap: Vec<usize>,
    },
    /// Score many recordings and aggregate.
    Bench {
        #[arg(long)]
        spec: String,
        /// Directory of `<run>/ground_truth.jsonl` + `<run>/prediction.jsonl`
        /// subdirectories and/or `<id>.gt.jsonl` + `<id>.pred.jsonl` files.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::InvalidInput.code()
            } else {
                ExitStatus::Success.code()
            };
        }
    };
    execute(cli.command).code()
}

pub fn execute(command: Command) -> ExitStatus {
    let result = match command {
        Command::Validate { paths, spec } => return cmd_validate(&paths, spec.as_deref()),
        Command::Run {
            baseline,
            spec,
            stream,
            out,
            threshold,
            decay,
        } => cmd_run(&baseline, &spec, &stream, &out, threshold, decay),
        Command::Eval {
            spec,
            gt,
            pred,
            out,
            format,
        } => cmd_eval(&spec, &gt, &pred, &out, format.into()),
        Command::Simulate {
            spec,
            seed,
            config,
            out_dir,
            recording_id,
            omit,
            incorrect,
            swap,
        } => {
            let inj = ErrorInjection {
                omit: omit.into_iter().collect(),
                incorrect: incorrect.into_iter().collect(),
                swaps: swap,
            };
            cmd_simulate(&spec, seed, config.as_deref(), &out_dir, recording_id.as_deref(), &inj)
        }
        Command::Bench {
            spec,
            runs,
            out,
            format,
        } => cmd_bench(&spec, &runs, &out, format.into()),
    };
    match result {
        Ok(()) => ExitStatus::Success,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    }
}

/// Loads a procedure from a file, or by bundled name.
pub fn load_spec(spec: &str) -> Result<ProcedureSpec, CliError> {
    let path = Path::new(spec);
    if path.exists() {
        return read_procedure(path).map_err(|e| input(spec, e));
    }
    bundled_procedure(spec).ok_or_else(|| {
        CliError::Input(format!(
            "{spec}: no such file or bundled procedure (bundled: {})",
            io::BUNDLED_PROCEDURES.join(", ")
        ))
    })
}

fn validate_one(path: &Path, spec: Option<&ProcedureSpec>) -> Result<(), CliError> {
    let shown = path.display();
    match sniff_kind(path).map_err(|e| input(&shown, e))? {
        FileKind::Stream => {
            let reader = StreamReader::new(io_open(path)?).map_err(|e| input(&shown, e))?;
            let reader = match spec {
                Some(s) => reader.with_components(s.component_count()),
                None => reader,
            };
            for frame in reader {
                frame.map_err(|e| input(&shown, e))?;
            }
        }
        FileKind::GroundTruth => {
            let owned;
            let spec = match spec {
                Some(s) => s,
                None => {
                    let manifest = peek_manifest(path).map_err(|e| input(&shown, e))?;
                    let name = manifest.procedure.ok_or_else(|| {
                        CliError::Input(format!("{shown}: label file names no procedure; pass --spec"))
                    })?;
                    owned = load_spec(&name)?;
                    &owned
                }
            };
            read_ground_truth(path, spec, LabelView::ErrorsIncluded).map_err(|e| input(&shown, e))?;
        }
        FileKind::Procedure => {
            read_procedure(path).map_err(|e| input(&shown, e))?;
        }
        FileKind::Scenario => {
            read_scenario_manifest(path).map_err(|e| input(&shown, e))?;
        }
        FileKind::Report => {
            read_report(path).map_err(|e| input(&shown, e))?;
        }
    }
    Ok(())
}

fn io_open(path: &Path) -> Result<std::io::BufReader<std::fs::File>, CliError> {
    std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| input(path.display(), e))
}

pub fn cmd_validate(paths: &[PathBuf], spec: Option<&str>) -> ExitStatus {
    let spec = match spec.map(load_spec).transpose() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return e.status();
        }
    };
    let mut status = ExitStatus::Success;
    for path in paths {
        if let Err(e) = validate_one(path, spec.as_ref()) {
            eprintln!("{e}");
            status = ExitStatus::InvalidInput;
        }
    }
    status
}

pub fn cmd_run(
    baseline: &str,
    spec: &str,
    stream: &Path,
    out: &Path,
    threshold: Option<f64>,
    decay: Option<f64>,
) -> Result<(), CliError> {
    let spec = Arc::new(load_spec(spec)?);
    let mut config = BaselineConfig::new(baseline.to_ascii_lowercase());
    if let Some(t) = threshold {
        if config.variant == "b1" {
            config.detection_threshold = t;
        } else {
            config.accumulation_threshold = t;
        }
    }
    if let Some(d) = decay {
        config.decay = d;
    }
    let mut recognizer = Registry::default()
        .create(&config, spec.clone())
        .map_err(|e| CliError::Input(e.to_string()))?;

    let shown = stream.display();
    let reader = StreamReader::new(io_open(stream)?)
        .map_err(|e| input(&shown, e))?
        .with_components(spec.component_count());
    let fps = reader.manifest().fps();
    let recording_id = reader.manifest().recording_id().to_string();
    let mut events = Vec::new();
    for frame in reader {
        let frame = frame.map_err(|e| input(&shown, e))?;
        events.extend(recognizer.step_frame(&frame).map_err(|e| input(&shown, e))?);
    }
    let seq = StepSequence::new(recording_id, fps, events).map_err(|e| CliError::Internal(e.to_string()))?;
    let initial = recognizer
        .state()
        .initial
        .clone()
        .unwrap_or_else(|| spec.initial_state.clone());
    write_ground_truth(out, &seq, &initial, &spec, EventSource::Recognized).map_err(|e| output_error(out, e))
}

fn output_error(path: &Path, e: FormatError) -> CliError {
    match e {
        FormatError::Io { .. } => input(path.display(), e),
        other => CliError::Internal(format!("{}: {other}", path.display())),
    }
}

fn load_labels(path: &Path, spec: &ProcedureSpec) -> Result<StepSequence, CliError> {
    read_ground_truth(path, spec, LabelView::ErrorsIncluded)
        .map(|(_, seq)| seq)
        .map_err(|e| input(path.display(), e))
}

pub fn cmd_eval(spec: &str, gt: &Path, pred: &Path, out: &Path, format: ReportFormat) -> Result<(), CliError> {
    let spec = load_spec(spec)?;
    let y = load_labels(gt, &spec)?;
    let yhat = load_labels(pred, &spec)?;
    let report = evaluate_with_procedure(&spec, &y, &yhat).map_err(|e| CliError::Input(e.to_string()))?;
    let set = ReportSet::from_reports(vec![report]).map_err(|e| CliError::Internal(e.to_string()))?;
    write_report(out, &set, format).map_err(|e| output_error(out, e))
}

pub fn cmd_simulate(
    spec: &str,
    seed: u64,
    config: Option<&Path>,
    out_dir: &Path,
    recording_id: Option<&str>,
    inj: &ErrorInjection,
) -> Result<(), CliError> {
    let spec = load_spec(spec)?;
    let mut cfg: SimConfig = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| input(path.display(), e))?;
            serde_json::from_str(&text)
                .map_err(|e| input(path.display(), format!("line {}: {e}", e.line())))?
        }
        None => SimConfig::default(),
    };
    cfg.seed = seed;
    let id = recording_id.map_or_else(|| format!("{}-{seed}", spec.id), str::to_string);
    let scenario = simulate(&spec, inj, &cfg, &id).map_err(|e| CliError::Input(e.to_string()))?;
    write_scenario(out_dir, &scenario, &spec, inj, &cfg)
        .map(|_| ())
        .map_err(|e| output_error(out_dir, e))
}

/// (ground truth, prediction) file pairs under `runs`, sorted by path.
pub fn find_runs(runs: &Path) -> Result<Vec<(PathBuf, PathBuf)>, CliError> {
    let entries = std::fs::read_dir(runs).map_err(|e| input(runs.display(), e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| input(runs.display(), e))?;
    paths.sort();
    let mut pairs = Vec::new();
    for path in paths {
        if path.is_dir() {
            let gt = path.join(io::GROUND_TRUTH_FILE);
            let pred = path.join(PREDICTION_FILE);
            if gt.is_file() && pred.is_file() {
                pairs.push((gt, pred));
            }
        } else if let Some(stem) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".gt.jsonl"))
        {
            let pred = runs.join(format!("{stem}.pred.jsonl"));
            if !pred.is_file() {
                return Err(CliError::Input(format!("{}: no matching {stem}.pred.jsonl", path.display())));
            }
            pairs.push((path, pred));
        }
    }
    Ok(pairs)
}

pub fn cmd_bench(spec: &str, runs: &Path, out: &Path, format: ReportFormat) -> Result<(), CliError> {
    let spec = load_spec(spec)?;
    let pairs = find_runs(runs)?;
    if pairs.is_empty() {
        return Err(CliError::Input(format!("{}: no recordings found", runs.display())));
    }
    let mut reports = Vec::with_capacity(pairs.len());
    for (gt, pred) in &pairs {
        let y = load_labels(gt, &spec)?;
        let yhat = load_labels(pred, &spec)?;
        let report = evaluate_with_procedure(&spec, &y, &yhat).map_err(|e| input(gt.display(), e))?;
        reports.push(report);
    }
    let set = ReportSet::from_reports(reports).map_err(|e| CliError::Internal(e.to_string()))?;
    if set.errors_only.is_none() {
        eprintln!("note: no recording has errors; the ERRORS_ONLY aggregate is empty");
    }
    write_report(out, &set, format).map_err(|e| output_error(out, e))
}
