//! Assembly states, procedure specifications and step events.
//!
//! An assembly state is a fixed-length code with one status per component:
//! `-1` (incorrectly installed), `0` (absent) or `1` (correctly installed).
//! The difference between two consecutive states determines which procedure
//! steps were completed between them.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Procedures with more actions than this cannot be enumerated by
/// [`ProcedureSpec::expected_states`].
pub const MAX_ACTIONS: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("state has {found} components, procedure expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("invalid state text: {0}")]
    StateSyntax(String),
    #[error("procedure '{id}' is invalid: {}", join_diagnostics(.diagnostics))]
    InvalidProcedure { id: String, diagnostics: Vec<Diagnostic> },
    #[error("events out of order at index {index}")]
    UnsortedEvents { index: usize },
    #[error("duplicate event for action '{0}'")]
    DuplicateAction(String),
    #[error("fps must be positive and finite, got {0}")]
    InvalidFps(f64),
}

fn join_diagnostics(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentStatus {
    Incorrect,
    Absent,
    Installed,
}

impl ComponentStatus {
    pub const ALL: [ComponentStatus; 3] = [Self::Incorrect, Self::Absent, Self::Installed];

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(Self::Incorrect),
            0 => Some(Self::Absent),
            1 => Some(Self::Installed),
            _ => None,
        }
    }

    pub fn code(self) -> i8 {
        match self {
            Self::Incorrect => -1,
            Self::Absent => 0,
            Self::Installed => 1,
        }
    }
}

/// What happened to a single component between two states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transition {
    /// Anything to `1`.
    Install,
    /// `1 -> 0` or `-1 -> 0`.
    Remove,
    /// Anything to `-1`.
    Incorrect,
}

impl Transition {
    pub fn between(prev: ComponentStatus, next: ComponentStatus) -> Option<Self> {
        if prev == next {
            return None;
        }
        Some(match next {
            ComponentStatus::Installed => Self::Install,
            ComponentStatus::Absent => Self::Remove,
            ComponentStatus::Incorrect => Self::Incorrect,
        })
    }

    /// Status a component ends up in after this transition.
    pub fn target(self) -> ComponentStatus {
        match self {
            Self::Install => ComponentStatus::Installed,
            Self::Remove => ComponentStatus::Absent,
            Self::Incorrect => ComponentStatus::Incorrect,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Install => "install",
            Self::Remove => "remove",
            Self::Incorrect => "incorrect",
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-component status code of the object under assembly.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssemblyState(Vec<ComponentStatus>);

impl AssemblyState {
    pub fn new(statuses: Vec<ComponentStatus>) -> Self {
        Self(statuses)
    }

    pub fn absent(components: usize) -> Self {
        Self(vec![ComponentStatus::Absent; components])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn statuses(&self) -> &[ComponentStatus] {
        &self.0
    }

    pub fn get(&self, component: usize) -> Option<ComponentStatus> {
        self.0.get(component).copied()
    }

    /// Panics if `component` is out of range.
    pub fn set(&mut self, component: usize, status: ComponentStatus) {
        self.0[component] = status;
    }

    pub fn with(&self, component: usize, status: ComponentStatus) -> Self {
        let mut next = self.clone();
        next.set(component, status);
        next
    }

    pub fn apply(&mut self, component: usize, transition: Transition) {
        self.set(component, transition.target());
    }

    /// True iff any component is incorrectly installed.
    pub fn is_error_state(&self) -> bool {
        self.0.contains(&ComponentStatus::Incorrect)
    }

    /// Number of components whose status differs. Panics on length mismatch.
    pub fn hamming(&self, other: &Self) -> usize {
        assert_eq!(self.len(), other.len(), "hamming distance needs equal lengths");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// Compact digit form, e.g. `11100000000`. Not available for error states.
    pub fn to_compact(&self) -> Option<String> {
        if self.is_error_state() {
            return None;
        }
        Some(
            self.0
                .iter()
                .map(|s| if *s == ComponentStatus::Installed { '1' } else { '0' })
                .collect(),
        )
    }

    /// Parses either the comma-separated form (`1,-1,0`) or the compact digit
    /// form (`110`). The compact form cannot express `-1`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        if text.is_empty() {
            return Err(ModelError::StateSyntax("empty state".into()));
        }
        if text.contains(',') {
            text.split(',')
                .enumerate()
                .map(|(i, token)| match token {
                    "-1" => Ok(ComponentStatus::Incorrect),
                    "0" => Ok(ComponentStatus::Absent),
                    "1" => Ok(ComponentStatus::Installed),
                    "" => Err(ModelError::StateSyntax(format!("empty token at position {i}"))),
                    other => Err(ModelError::StateSyntax(format!(
                        "token '{other}' at position {i} is not one of -1, 0, 1"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Self)
        } else if text.starts_with('-') {
            // "-1" alone is a one-component comma form without separators.
            if text == "-1" {
                Ok(Self(vec![ComponentStatus::Incorrect]))
            } else {
                Err(ModelError::StateSyntax(
                    "compact form cannot carry -1, use the comma-separated form".into(),
                ))
            }
        } else {
            text.chars()
                .enumerate()
                .map(|(i, c)| match c {
                    '0' => Ok(ComponentStatus::Absent),
                    '1' => Ok(ComponentStatus::Installed),
                    '-' => Err(ModelError::StateSyntax(
                        "compact form cannot carry -1, use the comma-separated form".into(),
                    )),
                    other => Err(ModelError::StateSyntax(format!(
                        "character '{other}' at position {i} is not a status digit"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Self)
        }
    }
}

/// Canonical comma-separated form.
impl fmt::Display for AssemblyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", s.code())?;
        }
        Ok(())
    }
}

impl FromStr for AssemblyState {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for AssemblyState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AssemblyState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Parses `text` and checks it against the component count of `spec`.
pub fn parse_state(text: &str, spec: &ProcedureSpec) -> Result<AssemblyState, ModelError> {
    let state = AssemblyState::parse(text)?;
    spec.check_state(&state)?;
    Ok(state)
}

pub fn serialize_state(state: &AssemblyState) -> String {
    state.to_string()
}

/// Per-component changes from `prev` to `next`, ascending by component index.
pub fn diff_states(
    prev: &AssemblyState,
    next: &AssemblyState,
) -> Result<Vec<(usize, Transition)>, ModelError> {
    if prev.len() != next.len() {
        return Err(ModelError::LengthMismatch {
            expected: prev.len(),
            found: next.len(),
        });
    }
    Ok(prev
        .0
        .iter()
        .zip(&next.0)
        .enumerate()
        .filter_map(|(i, (a, b))| Transition::between(*a, *b).map(|t| (i, t)))
        .collect())
}

pub fn is_error_state(state: &AssemblyState) -> bool {
    state.is_error_state()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProceduralAction {
    pub action_id: String,
    pub component: usize,
    pub transition: Transition,
    #[serde(default)]
    pub prerequisites: Vec<String>,
    #[serde(default)]
    pub description: String,
}

/// A violated procedure invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    NoComponents,
    ComponentIndex { position: usize, index: usize },
    InitialStateLength { expected: usize, found: usize },
    DuplicateActionId { action_id: String },
    UnknownComponent { action_id: String, component: usize },
    IncorrectAsAction { action_id: String },
    DuplicateTransition { first: String, second: String, component: usize, transition: Transition },
    UnknownPrerequisite { action_id: String, prerequisite: String },
    PrerequisiteCycle { actions: Vec<String> },
    TooManyActions { count: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoComponents => f.write_str("procedure declares no components"),
            Self::ComponentIndex { position, index } => {
                write!(f, "component at position {position} has index {index}")
            }
            Self::InitialStateLength { expected, found } => write!(
                f,
                "initial state has {found} components, procedure declares {expected}"
            ),
            Self::DuplicateActionId { action_id } => {
                write!(f, "action id '{action_id}' is declared more than once")
            }
            Self::UnknownComponent { action_id, component } => {
                write!(f, "action '{action_id}' references unknown component {component}")
            }
            Self::IncorrectAsAction { action_id } => write!(
                f,
                "action '{action_id}' uses transition 'incorrect', only install/remove are procedural"
            ),
            Self::DuplicateTransition { first, second, component, transition } => write!(
                f,
                "actions '{first}' and '{second}' both define ({component}, {transition})"
            ),
            Self::UnknownPrerequisite { action_id, prerequisite } => write!(
                f,
                "action '{action_id}' requires unknown action '{prerequisite}'"
            ),
            Self::PrerequisiteCycle { actions } => {
                write!(f, "prerequisite cycle among [{}]", actions.join(", "))
            }
            Self::TooManyActions { count } => {
                write!(f, "{count} actions exceed the supported maximum of {MAX_ACTIONS}")
            }
        }
    }
}

/// Components, procedural actions with their prerequisite partial order, and
/// the state the procedure starts from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureSpec {
    pub id: String,
    pub components: Vec<Component>,
    pub initial_state: AssemblyState,
    pub actions: Vec<ProceduralAction>,
}

impl ProcedureSpec {
    /// Builds a spec and rejects it unless [`validate_procedure`] is clean.
    pub fn new(
        id: impl Into<String>,
        components: Vec<Component>,
        initial_state: AssemblyState,
        actions: Vec<ProceduralAction>,
    ) -> Result<Self, ModelError> {
        Self {
            id: id.into(),
            components,
            initial_state,
            actions,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, ModelError> {
        let diagnostics = validate_procedure(&self);
        if diagnostics.is_empty() {
            Ok(self)
        } else {
            Err(ModelError::InvalidProcedure {
                id: self.id,
                diagnostics,
            })
        }
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn check_state(&self, state: &AssemblyState) -> Result<(), ModelError> {
        if state.len() != self.component_count() {
            return Err(ModelError::LengthMismatch {
                expected: self.component_count(),
                found: state.len(),
            });
        }
        Ok(())
    }

    pub fn action(&self, action_id: &str) -> Option<&ProceduralAction> {
        self.actions.iter().find(|a| a.action_id == action_id)
    }

    pub fn action_for(&self, component: usize, transition: Transition) -> Option<&ProceduralAction> {
        self.actions
            .iter()
            .find(|a| a.component == component && a.transition == transition)
    }

    /// Identifier used for an event on `(component, transition)`. Transitions
    /// without a procedural action (incorrect installs, unplanned removals)
    /// get a synthetic id of the form `c<component>:<transition>`.
    pub fn event_action_id(&self, component: usize, transition: Transition) -> String {
        match self.action_for(component, transition) {
            Some(action) => action.action_id.clone(),
            None => format!("c{component}:{transition}"),
        }
    }

    /// State after every action has been applied in prerequisite order.
    pub fn final_state(&self) -> Result<AssemblyState, ModelError> {
        let order = self.topological_order()?;
        let mut state = self.initial_state.clone();
        for i in order {
            let action = &self.actions[i];
            state.apply(action.component, action.transition);
        }
        Ok(state)
    }

    /// Action indices in a prerequisite-respecting order (ties by declaration
    /// order). Fails if the spec does not validate.
    pub fn topological_order(&self) -> Result<Vec<usize>, ModelError> {
        let diagnostics = validate_procedure(self);
        if !diagnostics.is_empty() {
            return Err(ModelError::InvalidProcedure {
                id: self.id.clone(),
                diagnostics,
            });
        }
        let (order, _) = kahn(self);
        Ok(order)
    }

    /// All states reachable from the initial state by applying actions in any
    /// prerequisite-respecting order, including the initial and final state.
    pub fn expected_states(&self) -> Result<HashSet<AssemblyState>, ModelError> {
        let diagnostics = validate_procedure(self);
        if !diagnostics.is_empty() {
            return Err(ModelError::InvalidProcedure {
                id: self.id.clone(),
                diagnostics,
            });
        }
        let index: HashMap<&str, usize> = self
            .actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.action_id.as_str(), i))
            .collect();
        let requires: Vec<u128> = self
            .actions
            .iter()
            .map(|a| {
                a.prerequisites
                    .iter()
                    .fold(0u128, |mask, p| mask | (1u128 << index[p.as_str()]))
            })
            .collect();

        // Two orders over the same completed set can disagree on the state
        // when unordered actions touch one component, so key on both.
        let mut seen: HashSet<(u128, AssemblyState)> = HashSet::new();
        let mut states = HashSet::new();
        let mut queue = VecDeque::new();
        queue.push_back((0u128, self.initial_state.clone()));
        seen.insert((0, self.initial_state.clone()));
        while let Some((done, state)) = queue.pop_front() {
            states.insert(state.clone());
            for (i, action) in self.actions.iter().enumerate() {
                let bit = 1u128 << i;
                if done & bit != 0 || requires[i] & !done != 0 {
                    continue;
                }
                let mut next = state.clone();
                next.apply(action.component, action.transition);
                let key = (done | bit, next);
                if !seen.contains(&key) {
                    seen.insert(key.clone());
                    queue.push_back(key);
                }
            }
        }
        Ok(states)
    }
}

/// Kahn's algorithm over valid prerequisite references; returns the order and
/// the indices left over (members of, or blocked by, a cycle).
fn kahn(spec: &ProcedureSpec) -> (Vec<usize>, Vec<usize>) {
    let index: HashMap<&str, usize> = spec
        .actions
        .iter()
        .enumerate()
        .map(|(i, a)| (a.action_id.as_str(), i))
        .collect();
    let n = spec.actions.len();
    let mut indegree = vec![0usize; n];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, action) in spec.actions.iter().enumerate() {
        for p in &action.prerequisites {
            if let Some(&j) = index.get(p.as_str()) {
                indegree[i] += 1;
                dependents[j].push(i);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> =
        (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.insert(d);
            }
        }
    }
    let blocked = (0..n).filter(|&i| indegree[i] > 0).collect();
    (order, blocked)
}

/// Every violated [`ProcedureSpec`] invariant; empty iff the spec is valid.
pub fn validate_procedure(spec: &ProcedureSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.components.is_empty() {
        out.push(Diagnostic::NoComponents);
    }
    for (position, c) in spec.components.iter().enumerate() {
        if c.index != position {
            out.push(Diagnostic::ComponentIndex {
                position,
                index: c.index,
            });
        }
    }
    if spec.initial_state.len() != spec.components.len() {
        out.push(Diagnostic::InitialStateLength {
            expected: spec.components.len(),
            found: spec.initial_state.len(),
        });
    }
    if spec.actions.len() > MAX_ACTIONS {
        out.push(Diagnostic::TooManyActions {
            count: spec.actions.len(),
        });
    }

    let mut ids: HashSet<&str> = HashSet::new();
    let mut pairs: BTreeMap<(usize, Transition), &str> = BTreeMap::new();
    for action in &spec.actions {
        if !ids.insert(&action.action_id) {
            out.push(Diagnostic::DuplicateActionId {
                action_id: action.action_id.clone(),
            });
        }
        if action.component >= spec.components.len() {
            out.push(Diagnostic::UnknownComponent {
                action_id: action.action_id.clone(),
                component: action.component,
            });
        }
        if action.transition == Transition::Incorrect {
            out.push(Diagnostic::IncorrectAsAction {
                action_id: action.action_id.clone(),
            });
        }
        let key = (action.component, action.transition);
        if let Some(first) = pairs.get(&key) {
            out.push(Diagnostic::DuplicateTransition {
                first: first.to_string(),
                second: action.action_id.clone(),
                component: action.component,
                transition: action.transition,
            });
        } else {
            pairs.insert(key, &action.action_id);
        }
    }
    for action in &spec.actions {
        for p in &action.prerequisites {
            if !ids.contains(p.as_str()) {
                out.push(Diagnostic::UnknownPrerequisite {
                    action_id: action.action_id.clone(),
                    prerequisite: p.clone(),
                });
            }
        }
    }

    let (_, blocked) = kahn(spec);
    if !blocked.is_empty() {
        out.push(Diagnostic::PrerequisiteCycle {
            actions: blocked
                .into_iter()
                .map(|i| spec.actions[i].action_id.clone())
                .collect(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventSource {
    Recognized,
    Inferred,
    GroundTruth,
}

/// One completed (or incorrectly completed) procedure step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub action_id: String,
    pub component: usize,
    pub transition: Transition,
    pub time_s: f64,
    pub frame: u64,
    /// Accumulated confidences may exceed 1.
    pub confidence: f64,
    pub source: EventSource,
}

/// Ordered step events of one recording, at most one per action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSequence {
    pub recording_id: String,
    pub fps: f64,
    pub events: Vec<StepEvent>,
}

impl StepSequence {
    pub fn new(
        recording_id: impl Into<String>,
        fps: f64,
        events: Vec<StepEvent>,
    ) -> Result<Self, ModelError> {
        let seq = Self {
            recording_id: recording_id.into(),
            fps,
            events,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn empty(recording_id: impl Into<String>, fps: f64) -> Self {
        Self {
            recording_id: recording_id.into(),
            fps,
            events: Vec::new(),
        }
    }

    /// Checks ordering by `(time_s, component)` and the one-event-per-action rule.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(ModelError::InvalidFps(self.fps));
        }
        for (i, w) in self.events.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            let ordered = a.time_s < b.time_s || (a.time_s == b.time_s && a.component <= b.component);
            if !ordered {
                return Err(ModelError::UnsortedEvents { index: i + 1 });
            }
        }
        let mut seen = HashSet::new();
        for e in &self.events {
            if !seen.insert(e.action_id.as_str()) {
                return Err(ModelError::DuplicateAction(e.action_id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn action_order(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.action_id.as_str()).collect()
    }

    pub fn has_incorrect(&self) -> bool {
        self.events.iter().any(|e| e.transition == Transition::Incorrect)
    }

    /// View with incorrectly completed steps dropped.
    pub fn correct_only(&self) -> Self {
        Self {
            recording_id: self.recording_id.clone(),
            fps: self.fps,
            events: self
                .events
                .iter()
                .filter(|e| e.transition != Transition::Incorrect)
                .cloned()
                .collect(),
        }
    }

    /// Keeps only events with the given source.
    pub fn filter_source(&self, source: EventSource) -> Self {
        Self {
            recording_id: self.recording_id.clone(),
            fps: self.fps,
            events: self.events.iter().filter(|e| e.source == source).cloned().collect(),
        }
    }

    /// Replays the events on `initial`, returning the state after each frame
    /// that carries at least one event.
    pub fn state_changes(&self, initial: &AssemblyState) -> Vec<(u64, AssemblyState)> {
        let mut out: Vec<(u64, AssemblyState)> = Vec::new();
        let mut state = initial.clone();
        for e in &self.events {
            state.apply(e.component, e.transition);
            match out.last_mut() {
                Some((frame, s)) if *frame == e.frame => *s = state.clone(),
                _ => out.push((e.frame, state.clone())),
            }
        }
        out
    }
}

/// Events for every component that changes between `prev` and `next`.
pub fn events_between(
    spec: &ProcedureSpec,
    prev: &AssemblyState,
    next: &AssemblyState,
    frame: u64,
    fps: f64,
    confidence: f64,
    source: EventSource,
) -> Result<Vec<StepEvent>, ModelError> {
    Ok(diff_states(prev, next)?
        .into_iter()
        .map(|(component, transition)| StepEvent {
            action_id: spec.event_action_id(component, transition),
            component,
            transition,
            time_s: frame as f64 / fps,
            frame,
            confidence,
            source,
        })
        .collect())
}
