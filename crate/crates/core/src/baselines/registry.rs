use std::collections::BTreeMap;
use std::sync::Arc;

use super::{AccumulatingRecognizer, BaselineConfig, RecognizeError, Recognizer, StateChangeRecognizer};
use crate::model::ProcedureSpec;

pub type Factory = fn(&BaselineConfig, Arc<ProcedureSpec>) -> Result<Box<dyn Recognizer>, RecognizeError>;

struct Entry {
    description: &'static str,
    factory: Factory,
}

/// Recognizer constructors keyed by name.
pub struct Registry {
    entries: BTreeMap<String, Entry>,
}

impl Registry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Adds or replaces the constructor registered under `name`.
    pub fn register(&mut self, name: impl Into<String>, description: &'static str, factory: Factory) {
        self.entries.insert(name.into(), Entry { description, factory });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn describe(&self, name: &str) -> Option<&'static str> {
        self.entries.get(name).map(|e| e.description)
    }

    /// Builds the recognizer named by `config.variant`.
    pub fn create(&self, config: &BaselineConfig, spec: Arc<ProcedureSpec>) -> Result<Box<dyn Recognizer>, RecognizeError> {
        let entry = self
            .entries
            .get(&config.variant)
            .ok_or_else(|| RecognizeError::UnknownBaseline(config.variant.clone()))?;
        (entry.factory)(config, spec)
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("b1", "report every confident change of the detected state", |c, s| {
            Ok(Box::new(StateChangeRecognizer::new(c, s)?))
        });
        r.register("b2", "accumulate per-component confidence with decay", |c, s| {
            Ok(Box::new(AccumulatingRecognizer::unguarded(c, s)?))
        });
        r.register("b3", "accumulate confidence, emit only into expected procedure states", |c, s| {
            Ok(Box::new(AccumulatingRecognizer::procedure_guarded(c, s)?))
        });
        r
    }
}
