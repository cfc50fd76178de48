//! Labeled prioritized time Petri nets: data model, well-formedness checks and reset
//! augmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::time::{Rat, TimeInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Input,
    Output,
    Internal,
}

/// `a?`, `a!` or `tau`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionLabel {
    pub kind: ActionKind,
    pub name: String,
}

impl ActionLabel {
    pub fn input(name: &str) -> Self {
        ActionLabel { kind: ActionKind::Input, name: name.to_string() }
    }

    pub fn output(name: &str) -> Self {
        ActionLabel { kind: ActionKind::Output, name: name.to_string() }
    }

    pub fn tau() -> Self {
        ActionLabel { kind: ActionKind::Internal, name: String::new() }
    }

    pub fn is_internal(&self) -> bool {
        self.kind == ActionKind::Internal
    }

    pub fn is_input(&self) -> bool {
        self.kind == ActionKind::Input
    }

    pub fn is_output(&self) -> bool {
        self.kind == ActionKind::Output
    }

    /// `a?` <-> `a!`; `tau` has no complement.
    pub fn complement(&self) -> Option<ActionLabel> {
        match self.kind {
            ActionKind::Input => Some(ActionLabel::output(&self.name)),
            ActionKind::Output => Some(ActionLabel::input(&self.name)),
            ActionKind::Internal => None,
        }
    }

    pub fn complements(&self, other: &ActionLabel) -> bool {
        self.complement().as_ref() == Some(other)
    }

    pub fn parse(text: &str) -> Option<ActionLabel> {
        if text == "tau" {
            return Some(ActionLabel::tau());
        }
        let (name, last) = text.split_at(text.len().checked_sub(1)?);
        if name.is_empty() || !crate::format::is_ident(name) {
            return None;
        }
        match last {
            "?" => Some(ActionLabel::input(name)),
            "!" => Some(ActionLabel::output(name)),
            _ => None,
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Input => write!(f, "{}?", self.name),
            ActionKind::Output => write!(f, "{}!", self.name),
            ActionKind::Internal => write!(f, "tau"),
        }
    }
}

/// A marking over named places. Absent places hold zero tokens; zero entries are never
/// stored, so equality is extensional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(BTreeMap<String, u32>);

impl Marking {
    pub fn new() -> Self {
        Marking(BTreeMap::new())
    }

    pub fn get(&self, place: &str) -> u32 {
        self.0.get(place).copied().unwrap_or(0)
    }

    pub fn set(&mut self, place: &str, tokens: u32) {
        if tokens == 0 {
            self.0.remove(place);
        } else {
            self.0.insert(place.to_string(), tokens);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &u32)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<(S, u32)> for Marking {
    fn from_iter<I: IntoIterator<Item = (S, u32)>>(iter: I) -> Self {
        let mut m = Marking::new();
        for (p, n) in iter {
            let total = m.get(p.as_ref()) + n;
            m.set(p.as_ref(), total);
        }
        m
    }
}

impl fmt::Display for Marking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(p, n)| if *n == 1 { p.clone() } else { format!("{p}({n})") })
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// A labeled prioritized time Petri net.
///
/// Identifier sets are ordered; "declaration order" everywhere in the crate means this
/// lexicographic order, so a net and its canonical serialization explore identically.
#[derive(Debug, Clone, Default)]
pub struct Net {
    pub name: String,
    pub places: BTreeSet<String>,
    pub transitions: BTreeSet<String>,
    pub pre: BTreeMap<String, BTreeMap<String, u32>>,
    pub post: BTreeMap<String, BTreeMap<String, u32>>,
    pub m0: BTreeMap<String, u32>,
    pub intervals: BTreeMap<String, TimeInterval>,
    /// `(low, high)`: `high` has priority over `low`.
    pub prio: BTreeSet<(String, String)>,
    pub labels: BTreeMap<String, ActionLabel>,
}

impl PartialEq for Net {
    /// Structural equality; the display name is not part of the model.
    fn eq(&self, other: &Self) -> bool {
        let nz = |m: &BTreeMap<String, u32>| -> BTreeMap<String, u32> {
            m.iter().filter(|(_, v)| **v > 0).map(|(k, v)| (k.clone(), *v)).collect()
        };
        let arcs = |a: &BTreeMap<String, BTreeMap<String, u32>>| -> BTreeMap<String, BTreeMap<String, u32>> {
            a.iter().map(|(t, m)| (t.clone(), nz(m))).filter(|(_, m)| !m.is_empty()).collect()
        };
        self.places == other.places
            && self.transitions == other.transitions
            && arcs(&self.pre) == arcs(&other.pre)
            && arcs(&self.post) == arcs(&other.post)
            && nz(&self.m0) == nz(&other.m0)
            && self.intervals == other.intervals
            && self.prio == other.prio
            && self.labels == other.labels
    }
}

impl Eq for Net {}

impl Net {
    pub fn new(name: &str) -> Self {
        Net { name: name.to_string(), ..Default::default() }
    }

    pub fn add_place(&mut self, name: &str, tokens: u32) -> &mut Self {
        self.places.insert(name.to_string());
        if tokens > 0 {
            self.m0.insert(name.to_string(), tokens);
        }
        self
    }

    pub fn add_transition(
        &mut self,
        name: &str,
        label: ActionLabel,
        interval: TimeInterval,
        pre: &[(&str, u32)],
        post: &[(&str, u32)],
    ) -> &mut Self {
        self.transitions.insert(name.to_string());
        self.labels.insert(name.to_string(), label);
        self.intervals.insert(name.to_string(), interval);
        let to_map = |arcs: &[(&str, u32)]| -> BTreeMap<String, u32> {
            let mut m = BTreeMap::new();
            for (p, w) in arcs {
                *m.entry(p.to_string()).or_insert(0) += w;
            }
            m
        };
        self.pre.insert(name.to_string(), to_map(pre));
        self.post.insert(name.to_string(), to_map(post));
        self
    }

    /// Declares that `high` has priority over `low`.
    pub fn add_priority(&mut self, low: &str, high: &str) -> &mut Self {
        self.prio.insert((low.to_string(), high.to_string()));
        self
    }

    pub fn pre_of(&self, t: &str) -> impl Iterator<Item = (&String, &u32)> {
        self.pre.get(t).into_iter().flatten().filter(|(_, w)| **w > 0)
    }

    pub fn post_of(&self, t: &str) -> impl Iterator<Item = (&String, &u32)> {
        self.post.get(t).into_iter().flatten().filter(|(_, w)| **w > 0)
    }

    pub fn initial_marking(&self) -> Marking {
        self.m0.iter().map(|(p, n)| (p.as_str(), *n)).collect()
    }

    /// Observable labels used by the net, in order.
    pub fn alphabet(&self) -> BTreeSet<ActionLabel> {
        self.labels.values().filter(|l| !l.is_internal()).cloned().collect()
    }

    /// Transitive closure of the priority relation.
    pub fn priority_closure(&self) -> BTreeSet<(String, String)> {
        let mut closure = self.prio.clone();
        loop {
            let mut added = Vec::new();
            for (a, b) in &closure {
                for (c, d) in &closure {
                    if b == c && !closure.contains(&(a.clone(), d.clone())) {
                        added.push((a.clone(), d.clone()));
                    }
                }
            }
            if added.is_empty() {
                return closure;
            }
            closure.extend(added);
        }
    }

    /// Every identifier used by the net.
    pub fn identifiers(&self) -> BTreeSet<String> {
        self.places.union(&self.transitions).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub subject: String,
    pub reason: String,
}

impl Diagnostic {
    fn error(subject: &str, reason: &str) -> Self {
        Diagnostic { severity: Severity::Error, subject: subject.to_string(), reason: reason.to_string() }
    }

    fn warning(subject: &str, reason: &str) -> Self {
        Diagnostic { severity: Severity::Warning, subject: subject.to_string(), reason: reason.to_string() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.subject, self.reason)
    }
}

/// Checks the net invariants. An empty result means the net is well formed.
pub fn validate(net: &Net) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for id in net.places.intersection(&net.transitions) {
        out.push(Diagnostic::error(id, "identifier used as both place and transition"));
    }
    for t in &net.transitions {
        if !net.intervals.contains_key(t) {
            out.push(Diagnostic::error(t, "missing interval"));
        }
        if !net.labels.contains_key(t) {
            out.push(Diagnostic::error(t, "missing label"));
        }
    }
    let unknown_t = |t: &String| !net.transitions.contains(t);
    for t in net.intervals.keys().chain(net.labels.keys()) {
        if unknown_t(t) {
            out.push(Diagnostic::error(t, "attribute given for an unknown transition"));
        }
    }
    for (kind, arcs) in [("input", &net.pre), ("output", &net.post)] {
        for (t, places) in arcs {
            if unknown_t(t) {
                out.push(Diagnostic::error(t, &format!("{kind} arcs of an unknown transition")));
            }
            for p in places.keys() {
                if !net.places.contains(p) {
                    out.push(Diagnostic::error(t, &format!("{kind} arc to unknown place {p}")));
                }
            }
        }
    }
    for p in net.m0.keys() {
        if !net.places.contains(p) {
            out.push(Diagnostic::error(p, "initial tokens in an unknown place"));
        }
    }
    for (low, high) in &net.prio {
        if low == high {
            out.push(Diagnostic::error(low, "priority not irreflexive"));
        }
        if unknown_t(low) || unknown_t(high) {
            out.push(Diagnostic::error(&format!("{low} < {high}"), "priority over an unknown transition"));
        }
        if low != high && net.prio.contains(&(high.clone(), low.clone())) && low < high {
            out.push(Diagnostic::error(&format!("{low} < {high}"), "priority not asymmetric"));
        }
    }
    let closure = net.priority_closure();
    for (a, b) in &closure {
        if a == b && !net.prio.contains(&(a.clone(), b.clone())) {
            out.push(Diagnostic::error(a, "priority cycle"));
        }
    }
    let mut directions: BTreeMap<&str, BTreeSet<ActionKind>> = BTreeMap::new();
    for l in net.labels.values().filter(|l| !l.is_internal()) {
        directions.entry(&l.name).or_default().insert(l.kind);
    }
    for (name, kinds) in directions {
        if kinds.len() > 1 {
            out.push(Diagnostic::error(name, "label used both as input and output"));
        }
    }
    if net.m0.values().all(|n| *n == 0) {
        out.push(Diagnostic::warning(&net.name, "no initial marking"));
    }
    out
}

/// Error-severity diagnostics only.
pub fn validation_errors(net: &Net) -> Vec<Diagnostic> {
    validate(net).into_iter().filter(Diagnostic::is_error).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("marking references unknown place {0}")]
    InvalidMarking(String),
}

/// Adds a reset to `net`: a fresh place `q`, an observable `reset!` transition consuming
/// `m_r` and marking `q`, and an internal transition with interval `[tr,tr]` consuming `q`
/// and restoring the initial marking.
pub fn add_reset(net: &Net, m_r: &Marking, tr: Rat) -> Result<Net, NetError> {
    for (p, _) in m_r.iter() {
        if !net.places.contains(p) {
            return Err(NetError::InvalidMarking(p.clone()));
        }
    }
    let mut out = net.clone();
    let fresh = |base: &str| -> String {
        let ids = net.identifiers();
        if !ids.contains(base) {
            return base.to_string();
        }
        (1..).map(|i| format!("{base}{i}")).find(|c| !ids.contains(c)).expect("unbounded search")
    };
    let q = fresh("reset_q");
    let fire = fresh("reset");
    let back = fresh("reset_back");
    out.add_place(&q, 0);
    let pre: Vec<(&str, u32)> = m_r.iter().map(|(p, n)| (p.as_str(), *n)).collect();
    out.add_transition(&fire, ActionLabel::output("reset"), TimeInterval::at_least(Rat::from_integer(0)), &pre, &[(&q, 1)]);
    let m0: Vec<(&str, u32)> = net.m0.iter().filter(|(_, n)| **n > 0).map(|(p, n)| (p.as_str(), *n)).collect();
    out.add_transition(&back, ActionLabel::tau(), TimeInterval::point(tr), &[(&q, 1)], &m0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::rat;

    fn tiny() -> Net {
        let mut n = Net::new("tiny");
        n.add_place("a", 1).add_place("b", 0);
        n.add_transition("t", ActionLabel::input("go"), TimeInterval::at_least(rat(0)), &[("a", 1)], &[("b", 1)]);
        n.add_transition("u", ActionLabel::output("done"), TimeInterval::point(rat(0)), &[("b", 1)], &[("a", 1)]);
        n
    }

    #[test]
    fn valid_net_has_no_diagnostics() {
        assert!(validate(&tiny()).is_empty());
    }

    #[test]
    fn reflexive_priority_is_reported() {
        let mut n = tiny();
        n.add_priority("t", "t");
        let d = validate(&n);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].reason, "priority not irreflexive");
    }

    #[test]
    fn missing_interval_is_reported() {
        let mut n = tiny();
        n.intervals.remove("u");
        let d = validate(&n);
        assert!(d.iter().any(|d| d.reason == "missing interval" && d.subject == "u"));
    }

    #[test]
    fn priority_cycles_and_asymmetry() {
        let mut n = tiny();
        n.add_priority("t", "u").add_priority("u", "t");
        let reasons: Vec<String> = validate(&n).into_iter().map(|d| d.reason).collect();
        assert!(reasons.contains(&"priority not asymmetric".to_string()));
    }

    #[test]
    fn empty_net_warns_about_marking() {
        let d = validate(&Net::new("empty"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].severity, Severity::Warning);
        assert_eq!(d[0].reason, "no initial marking");
    }

    #[test]
    fn mixed_direction_label_is_an_error() {
        let mut n = tiny();
        n.labels.insert("u".into(), ActionLabel::output("go"));
        assert!(validate(&n).iter().any(|d| d.reason.contains("both as input and output")));
    }

    #[test]
    fn reset_adds_one_place_two_transitions() {
        let n = tiny();
        let m_r: Marking = [("b", 1)].into_iter().collect();
        let r = add_reset(&n, &m_r, rat(1)).unwrap();
        assert_eq!(r.places.len(), n.places.len() + 1);
        assert_eq!(r.transitions.len(), n.transitions.len() + 2);
        assert!(validate(&r).is_empty());
        assert_eq!(r.intervals["reset_back"], TimeInterval::point(rat(1)));
        let bad: Marking = [("zz", 1)].into_iter().collect();
        assert_eq!(add_reset(&n, &bad, rat(1)), Err(NetError::InvalidMarking("zz".into())));
    }

    #[test]
    fn equality_ignores_name_and_zero_entries() {
        let mut a = tiny();
        let mut b = tiny();
        b.name = "other".into();
        b.m0.insert("b".into(), 0);
        assert_eq!(a, b);
        a.add_priority("t", "u");
        assert_ne!(a, b);
    }
}
