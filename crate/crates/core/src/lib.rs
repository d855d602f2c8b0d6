//! Procedure step recognition toolkit.
//!
//! * [`model`]: assembly states, procedures and step events
//! * [`metrics`]: procedure order similarity, event F1, average delay
//! * [`baselines`]: online recognizers selected by name from a registry
//! * [`sim`]: seeded executions and noisy detection streams
//! * [`io`]: line-delimited stream and label files, procedures, reports

pub mod baselines;
pub mod io;
pub mod metrics;
pub mod model;
pub mod sim;

pub use baselines::{BaselineConfig, Detection, DetectionFrame, Recognizer, Registry};
pub use metrics::{EditWeights, MetricsReport, Subset};
pub use model::{AssemblyState, ComponentStatus, ProcedureSpec, StepEvent, StepSequence, Transition};
