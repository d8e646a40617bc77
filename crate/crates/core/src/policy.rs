//! Usage automata and validity of framed traces.
//!
//! A usage automaton is an NFA over access events whose *offending* states
//! mark violations: a history complies with a policy when no run of the
//! automaton over it ends in an offending state. Events no transition
//! matches leave the current state unchanged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Name;

/// An access event `α(r)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Event {
    pub action: Name,
    pub resource: Name,
}

impl Event {
    pub fn new(action: &str, resource: &str) -> Self {
        Event {
            action: action.into(),
            resource: resource.into(),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.action, self.resource)
    }
}

/// One item of a trace: an event or a framing marker. Metric markers carry
/// the check's label (`RISK<=75`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceItem {
    Event(Event),
    SecOpen { policy: Name },
    SecClose { policy: Name },
    MetOpen { check: String },
    MetClose { check: String },
}

impl TraceItem {
    pub fn event(action: &str, resource: &str) -> Self {
        TraceItem::Event(Event::new(action, resource))
    }

    pub fn as_event(&self) -> Option<&Event> {
        match self {
            TraceItem::Event(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_marker(&self) -> bool {
        self.as_event().is_none()
    }
}

impl fmt::Display for TraceItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceItem::Event(e) => e.fmt(f),
            TraceItem::SecOpen { policy } => write!(f, "[{policy}"),
            TraceItem::SecClose { policy } => write!(f, "]{policy}"),
            TraceItem::MetOpen { check } => write!(f, "⟨{check}"),
            TraceItem::MetClose { check } => write!(f, "⟩{check}"),
        }
    }
}

pub type Trace = Vec<TraceItem>;

/// Renders a trace as space-separated items, `ε` when empty.
pub fn render_trace(t: &[TraceItem]) -> String {
    if t.is_empty() {
        "ε".to_string()
    } else {
        t.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
    }
}

/// The events of a trace, markers dropped.
pub fn strip_markers(t: &[TraceItem]) -> Trace {
    t.iter().filter(|i| !i.is_marker()).cloned().collect()
}

/// `None` is a wildcard.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventPattern {
    pub action: Option<Name>,
    pub resource: Option<Name>,
}

impl EventPattern {
    pub fn matches(&self, e: &Event) -> bool {
        self.action.as_ref().is_none_or(|a| *a == e.action)
            && self.resource.as_ref().is_none_or(|r| *r == e.resource)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub pattern: EventPattern,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy `{policy}`: unknown state `{state}`")]
    UnknownState { policy: Name, state: String },
    #[error("policy `{policy}` declares no states")]
    NoStates { policy: Name },
    #[error("unknown policy `{0}`")]
    UnknownPolicy(Name),
    #[error("unbalanced framing markers at item {position}: {detail}")]
    Unbalanced { position: usize, detail: String },
    #[error("cannot read policy: {0}")]
    Syntax(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UsageAutomaton {
    pub name: Name,
    pub states: Vec<Name>,
    pub initial: usize,
    pub offending: BTreeSet<usize>,
    pub transitions: Vec<Transition>,
}

/// Policy file layout.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    name: String,
    states: Vec<String>,
    initial: String,
    offending: Vec<String>,
    #[serde(default)]
    transitions: Vec<TransitionDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    from: String,
    action: String,
    #[serde(default = "wildcard")]
    resource: String,
    to: String,
}

fn wildcard() -> String {
    "*".into()
}

fn pattern_part(s: &str) -> Option<Name> {
    (s != "*").then(|| s.into())
}

impl UsageAutomaton {
    /// Builds an automaton from state names and `(from, action, resource,
    /// to)` transitions where `"*"` is a wildcard.
    pub fn new(
        name: &str,
        states: &[&str],
        initial: &str,
        offending: &[&str],
        transitions: &[(&str, &str, &str, &str)],
    ) -> Result<Self, PolicyError> {
        let name: Name = name.into();
        if states.is_empty() {
            return Err(PolicyError::NoStates { policy: name });
        }
        let index = |s: &str| {
            states
                .iter()
                .position(|x| *x == s)
                .ok_or_else(|| PolicyError::UnknownState {
                    policy: name.clone(),
                    state: s.to_string(),
                })
        };
        let initial = index(initial)?;
        let offending = offending.iter().map(|s| index(s)).collect::<Result<_, _>>()?;
        let transitions = transitions
            .iter()
            .map(|(from, action, resource, to)| {
                Ok(Transition {
                    from: index(from)?,
                    pattern: EventPattern {
                        action: pattern_part(action),
                        resource: pattern_part(resource),
                    },
                    to: index(to)?,
                })
            })
            .collect::<Result<_, PolicyError>>()?;
        Ok(UsageAutomaton {
            name: name.clone(),
            states: states.iter().map(|s| Name::from(*s)).collect(),
            initial,
            offending,
            transitions,
        })
    }

    /// Reads the TOML policy format.
    pub fn from_toml(text: &str) -> Result<Self, PolicyError> {
        let doc: PolicyDoc = toml::from_str(text).map_err(|e| PolicyError::Syntax(e.to_string()))?;
        let states: Vec<&str> = doc.states.iter().map(String::as_str).collect();
        let offending: Vec<&str> = doc.offending.iter().map(String::as_str).collect();
        let transitions: Vec<_> = doc
            .transitions
            .iter()
            .map(|t| (t.from.as_str(), t.action.as_str(), t.resource.as_str(), t.to.as_str()))
            .collect();
        Self::new(&doc.name, &states, &doc.initial, &offending, &transitions)
    }

    /// Load-time diagnostics that do not make the automaton invalid.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.offending.contains(&self.initial) {
            out.push(format!(
                "policy `{}`: initial state is offending, so every trace violates it",
                self.name
            ));
        }
        out
    }

    pub fn start(&self) -> BTreeSet<usize> {
        BTreeSet::from([self.initial])
    }

    /// One step of the subset construction.
    pub fn advance(&self, current: &BTreeSet<usize>, e: &Event) -> BTreeSet<usize> {
        let mut next = BTreeSet::new();
        for &s in current {
            let mut moved = false;
            for t in self.transitions.iter().filter(|t| t.from == s) {
                if t.pattern.matches(e) {
                    next.insert(t.to);
                    moved = true;
                }
            }
            if !moved {
                next.insert(s);
            }
        }
        next
    }

    pub fn is_offending(&self, states: &BTreeSet<usize>) -> bool {
        states.iter().any(|s| self.offending.contains(s))
    }

    /// True iff some run over `events` ends in an offending state.
    pub fn offends<'a, I>(&self, events: I) -> bool
    where
        I: IntoIterator<Item = &'a Event>,
    {
        let end = events
            .into_iter()
            .fold(self.start(), |cur, e| self.advance(&cur, e));
        self.is_offending(&end)
    }
}

/// Policies by name.
pub type Policies = BTreeMap<Name, UsageAutomaton>;

/// Incremental runs of every policy over a growing history.
#[derive(Clone, Debug)]
pub struct Monitor {
    runs: BTreeMap<Name, BTreeSet<usize>>,
}

impl Monitor {
    pub fn new(policies: &Policies) -> Self {
        Monitor {
            runs: policies
                .iter()
                .map(|(n, a)| (n.clone(), a.start()))
                .collect(),
        }
    }

    pub fn push(&mut self, policies: &Policies, e: &Event) {
        for (name, cur) in self.runs.iter_mut() {
            if let Some(a) = policies.get(name) {
                *cur = a.advance(cur, e);
            }
        }
    }

    /// Whether the history so far violates `policy`.
    pub fn offends(&self, policies: &Policies, policy: &str) -> Result<bool, PolicyError> {
        match (policies.get(policy), self.runs.get(policy)) {
            (Some(a), Some(cur)) => Ok(a.is_offending(cur)),
            _ => Err(PolicyError::UnknownPolicy(policy.into())),
        }
    }
}

/// Where a framed trace first breaks a policy: the number of trace items
/// in the offending prefix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub policy: Name,
    pub prefix_len: usize,
}

/// First prefix of `trace` whose events violate a policy whose scope is
/// open at that prefix.
pub fn first_violation(trace: &[TraceItem], policies: &Policies) -> Result<Option<Violation>, PolicyError> {
    let mut monitor = Monitor::new(policies);
    let mut stack: Vec<&TraceItem> = Vec::new();
    let mut open: BTreeMap<Name, usize> = BTreeMap::new();
    for (i, item) in trace.iter().enumerate() {
        let unbalanced = |detail: String| PolicyError::Unbalanced {
            position: i,
            detail,
        };
        match item {
            TraceItem::Event(e) => monitor.push(policies, e),
            TraceItem::SecOpen { policy } => {
                if !policies.contains_key(policy) {
                    return Err(PolicyError::UnknownPolicy(policy.clone()));
                }
                *open.entry(policy.clone()).or_default() += 1;
                stack.push(item);
            }
            TraceItem::MetOpen { .. } => stack.push(item),
            TraceItem::SecClose { policy } => match stack.pop() {
                Some(TraceItem::SecOpen { policy: p }) if p == policy => {
                    if let Some(n) = open.get_mut(policy) {
                        *n -= 1;
                    }
                }
                other => return Err(unbalanced(format!("{item} closes {other:?}"))),
            },
            TraceItem::MetClose { check } => match stack.pop() {
                Some(TraceItem::MetOpen { check: c }) if c == check => {}
                other => return Err(unbalanced(format!("{item} closes {other:?}"))),
            },
        }
        for (policy, _) in open.iter().filter(|(_, n)| **n > 0) {
            if monitor.offends(policies, policy)? {
                return Ok(Some(Violation {
                    policy: policy.clone(),
                    prefix_len: i + 1,
                }));
            }
        }
    }
    if let Some(top) = stack.last() {
        return Err(PolicyError::Unbalanced {
            position: trace.len(),
            detail: format!("{top} is never closed"),
        });
    }
    Ok(None)
}

/// Every prefix satisfies every policy whose scope is open there.
pub fn valid(trace: &[TraceItem], policies: &Policies) -> Result<bool, PolicyError> {
    Ok(first_violation(trace, policies)?.is_none())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_overbook() -> UsageAutomaton {
        UsageAutomaton::new("noOB", &["ok", "bad"], "ok", &["bad"], &[("ok", "overbook", "*", "bad")]).unwrap()
    }

    fn policies() -> Policies {
        let a = no_overbook();
        BTreeMap::from([(a.name.clone(), a)])
    }

    fn open() -> TraceItem {
        TraceItem::SecOpen { policy: "noOB".into() }
    }

    fn close() -> TraceItem {
        TraceItem::SecClose { policy: "noOB".into() }
    }

    #[test]
    fn offends_examples() {
        let a = no_overbook();
        assert!(!a.offends([]));
        assert!(a.offends([&Event::new("overbook", "FLIGHT_No")]));
        assert!(!a.offends([&Event::new("reserve", "FLIGHT_No")]));
    }

    #[test]
    fn validity_is_scoped() {
        let p = policies();
        let plain = vec![TraceItem::event("overbook", "F")];
        assert!(valid(&plain, &p).unwrap());
        let inside = vec![open(), TraceItem::event("search", "A"), TraceItem::event("overbook", "F"), close()];
        assert_eq!(
            first_violation(&inside, &p).unwrap(),
            Some(Violation { policy: "noOB".into(), prefix_len: 3 })
        );
        let outside = vec![open(), close(), TraceItem::event("overbook", "F")];
        assert!(valid(&outside, &p).unwrap());
    }

    #[test]
    fn history_before_the_scope_counts() {
        let p = policies();
        let t = vec![TraceItem::event("overbook", "F"), open(), close()];
        assert!(!valid(&t, &p).unwrap());
    }

    #[test]
    fn malformed_traces() {
        let p = policies();
        assert!(matches!(valid(&[close()], &p), Err(PolicyError::Unbalanced { .. })));
        assert!(matches!(valid(&[open()], &p), Err(PolicyError::Unbalanced { .. })));
        let unknown = vec![TraceItem::SecOpen { policy: "x".into() }];
        assert!(matches!(valid(&unknown, &p), Err(PolicyError::UnknownPolicy(_))));
    }

    #[test]
    fn toml_round() {
        let a = UsageAutomaton::from_toml(
            r#"
            name = "noOB"
            states = ["ok", "bad"]
            initial = "ok"
            offending = ["bad"]
            [[transitions]]
            from = "ok"
            action = "overbook"
            to = "bad"
            "#,
        )
        .unwrap();
        assert_eq!(a, no_overbook());
        assert!(a.warnings().is_empty());
        let bad = UsageAutomaton::new("x", &["s"], "s", &["s"], &[]).unwrap();
        assert_eq!(bad.warnings().len(), 1);
        assert!(UsageAutomaton::new("x", &["s"], "t", &[], &[]).is_err());
    }

    #[test]
    fn nondeterminism() {
        // either branch may reach the offending state
        let a = UsageAutomaton::new(
            "nd",
            &["q0", "q1", "q2"],
            "q0",
            &["q2"],
            &[("q0", "a", "*", "q0"), ("q0", "a", "*", "q1"), ("q1", "b", "*", "q2")],
        )
        .unwrap();
        assert!(a.offends([&Event::new("a", "X"), &Event::new("b", "X")]));
        assert!(!a.offends([&Event::new("b", "X")]));
    }
}
