//! Test execution against SUT models, mutation operators and a bounded, grid-based
//! timed trace inclusion check.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use thiserror::Error;

use crate::net::{validation_errors, ActionLabel, Net};
use crate::semantics::{elapse, fire, fireable, initial_state, max_delay, Move, Schedule, State};
use crate::system::{compose_with, universal_environment, ComposeError, ComposeOptions, ComposedSystem, Side};
use crate::testgen::{TestCase, TestSuite};
use crate::time::{fmt_rat, parse_rat, ratio, Bound, Rat, TimeInterval};

/// Cap on discrete and delay steps of a single test execution.
pub const MAX_RUN_STEPS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarnessError {
    #[error("observer and SUT alphabets do not match: {0}")]
    AlphabetMismatch(String),
    #[error("cannot compose: {0}")]
    Compose(ComposeError),
    #[error("invalid mutation: {0}")]
    InvalidMutation(String),
    #[error("trace check limit of {0} nodes exceeded")]
    LimitExceeded(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub outcome: Outcome,
    /// Moves executed by observer and SUT together.
    pub witness: Schedule,
    pub reason: Option<String>,
    /// Instant at which the verdict was reached.
    pub at: Rat,
    /// Index of the sequence step at which a failing run left the expected path.
    pub divergence: Option<usize>,
}

fn place_named(sys: &ComposedSystem, name: &str) -> Option<usize> {
    let mut candidate = name.to_string();
    loop {
        if let Some(p) = sys.place_id(&candidate) {
            if sys.places()[p].side == Side::Env {
                return Some(p);
            }
        }
        if candidate.len() > name.len() + 64 {
            return None;
        }
        candidate = format!("env.{candidate}");
    }
}

/// Next instant worth delaying to: the earliest positive lower bound, or a point just
/// after it for strict bounds.
fn next_delay(e: &State) -> Option<Rat> {
    let mut lowers: Vec<(Rat, bool)> = e
        .intervals
        .iter()
        .flatten()
        .filter(|iv| iv.lower > Rat::zero() || iv.lower_strict)
        .map(|iv| (iv.lower, iv.lower_strict))
        .collect();
    lowers.sort();
    let &(a, strict) = lowers.first()?;
    if !strict {
        return Some(a);
    }
    let next = lowers.iter().map(|(v, _)| *v).find(|v| *v > a);
    let cap = match max_delay(e) {
        Bound::Finite { value, .. } => Some(value),
        Bound::Infinite => None,
    };
    let end = match (next, cap) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    };
    Some(match end {
        Some(end) if end > a => a + (end - a) / 2,
        _ => a + 1,
    })
}

/// Runs the observer of `tc` against `sut`. At every instant the composition fires moves
/// in index order, preferring one that reaches `Fail`, then lets time pass to the next
/// lower bound.
pub fn run_test(tc: &TestCase, sut: &Net) -> Result<Verdict, HarnessError> {
    let options = ComposeOptions { lenient: true, ..Default::default() };
    let sys = compose_with(sut, &tc.observer, options).map_err(|e| match e {
        ComposeError::UnmatchedLabel { .. } => HarnessError::AlphabetMismatch(e.to_string()),
        other => HarnessError::Compose(other),
    })?;
    let pass = place_named(&sys, &tc.pass).expect("observer has a pass place");
    let fail = place_named(&sys, &tc.fail).expect("observer has a fail place");
    let mut state = initial_state(&sys);
    let mut now = Rat::zero();
    let mut steps: Vec<(Rat, Move)> = Vec::new();
    let mut progress = 0usize;
    let verdict = |outcome, steps: Vec<(Rat, Move)>, reason: Option<String>, at, divergence| Verdict {
        outcome,
        witness: Schedule::new(steps),
        reason,
        at,
        divergence,
    };
    for _ in 0..MAX_RUN_STEPS {
        if state.tokens[fail] > 0 {
            let last = steps.last().map(|(_, m)| m.name(&sys)).unwrap_or_default();
            return Ok(verdict(Outcome::Fail, steps, Some(format!("fail after {last}")), now, Some(progress)));
        }
        if state.tokens[pass] > 0 {
            return Ok(verdict(Outcome::Pass, steps, None, now, None));
        }
        let moves = fireable(&sys, &state);
        if !moves.is_empty() {
            let next: Vec<State> = moves.iter().map(|&m| fire(&sys, &state, m).expect("fireable")).collect();
            let pick = next.iter().position(|s| s.tokens[fail] > 0).unwrap_or(0);
            let mv = moves[pick];
            let observer_side = mv.fired().into_iter().any(|t| sys.transition(t).side == Side::Env);
            state = next[pick].clone();
            if observer_side && state.tokens[fail] == 0 {
                progress += 1;
            }
            steps.push((now, mv));
            continue;
        }
        let Some(d) = next_delay(&state) else {
            return Ok(verdict(Outcome::Inconclusive, steps, Some("deadlock".into()), now, Some(progress)));
        };
        let d = if max_delay(&state).admits(&d) {
            d
        } else {
            match max_delay(&state) {
                Bound::Finite { value, strict: false } if value > Rat::zero() => value,
                _ => {
                    return Ok(verdict(Outcome::Inconclusive, steps, Some("time-lock".into()), now, Some(progress)));
                }
            }
        };
        state = elapse(&sys, &state, d).expect("admissible delay");
        now += d;
    }
    Ok(verdict(Outcome::Inconclusive, steps, Some("step limit".into()), now, Some(progress)))
}

/// Runs every case; each starts from the initial marking, as after a reset.
pub fn run_suite(suite: &TestSuite, sut: &Net) -> Result<Vec<(String, Verdict)>, HarnessError> {
    suite.cases.iter().map(|tc| Ok((tc.id.clone(), run_test(tc, sut)?))).collect()
}

/// `CASE <id> <PASS|FAIL|INCONCLUSIVE> at=<eta> reason=<...>` lines.
pub fn report(verdicts: &[(String, Verdict)]) -> String {
    let mut out = String::new();
    for (id, v) in verdicts {
        let reason = v.reason.as_deref().unwrap_or("-").replace(' ', "_");
        out.push_str(&format!("CASE {id} {} at={} reason={reason}\n", v.outcome, fmt_rat(&v.at)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    /// Adds `dl` to the lower and `du` to the finite upper bound of `t`.
    IntervalShift { t: String, dl: Rat, du: Rat },
    /// Replaces `low < high` by `high < low`.
    PriorityFlip { low: String, high: String },
    LabelSwap { t1: String, t2: String },
    /// Removes the input arc `p -> t` if present, else the output arc `t -> p`.
    ArcDrop { t: String, p: String },
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::IntervalShift { t, dl, du } => write!(f, "shift:{t}:{}:{}", fmt_rat(dl), fmt_rat(du)),
            Mutation::PriorityFlip { low, high } => write!(f, "flip:{low}:{high}"),
            Mutation::LabelSwap { t1, t2 } => write!(f, "swap:{t1}:{t2}"),
            Mutation::ArcDrop { t, p } => write!(f, "drop:{t}:{p}"),
        }
    }
}

impl FromStr for Mutation {
    type Err = HarnessError;

    /// `shift:t:dl:du`, `flip:low:high`, `swap:t1:t2` or `drop:t:p`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::InvalidMutation(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let rat = |x: &str| parse_rat(x).map_err(|_| bad());
        match parts.as_slice() {
            ["shift", t, dl, du] => Ok(Mutation::IntervalShift { t: t.to_string(), dl: rat(dl)?, du: rat(du)? }),
            ["flip", low, high] => Ok(Mutation::PriorityFlip { low: low.to_string(), high: high.to_string() }),
            ["swap", t1, t2] => Ok(Mutation::LabelSwap { t1: t1.to_string(), t2: t2.to_string() }),
            ["drop", t, p] => Ok(Mutation::ArcDrop { t: t.to_string(), p: p.to_string() }),
            _ => Err(bad()),
        }
    }
}

pub fn mutate(net: &Net, m: &Mutation) -> Result<Net, HarnessError> {
    let invalid = |msg: String| HarnessError::InvalidMutation(msg);
    let known = |t: &String| {
        if net.transitions.contains(t) {
            Ok(())
        } else {
            Err(invalid(format!("unknown transition {t}")))
        }
    };
    let mut out = net.clone();
    match m {
        Mutation::IntervalShift { t, dl, du } => {
            known(t)?;
            let iv = &net.intervals[t];
            let shifted = TimeInterval::new(iv.lower + dl, iv.lower_strict, iv.upper.map(|u| u + du), iv.upper_strict)
                .map_err(|e| invalid(format!("{t}: {e}")))?;
            out.intervals.insert(t.clone(), shifted);
        }
        Mutation::PriorityFlip { low, high } => {
            let pair = (low.clone(), high.clone());
            if !out.prio.remove(&pair) {
                return Err(invalid(format!("no priority {low} < {high}")));
            }
            out.prio.insert((high.clone(), low.clone()));
        }
        Mutation::LabelSwap { t1, t2 } => {
            known(t1)?;
            known(t2)?;
            let (a, b) = (net.labels[t1].clone(), net.labels[t2].clone());
            out.labels.insert(t1.clone(), b);
            out.labels.insert(t2.clone(), a);
        }
        Mutation::ArcDrop { t, p } => {
            known(t)?;
            let dropped = [&mut out.pre, &mut out.post]
                .into_iter()
                .any(|arcs| arcs.get_mut(t).and_then(|m| m.remove(p)).is_some_and(|w| w > 0));
            if !dropped {
                return Err(invalid(format!("no arc between {t} and {p}")));
            }
        }
    }
    let errors = validation_errors(&out);
    if let Some(e) = errors.first() {
        return Err(invalid(e.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// The implementation produced an output the specification does not allow.
    Output { label: ActionLabel, allowed: Vec<ActionLabel> },
    /// The implementation let time pass up to `until` where the specification cannot.
    Delay { until: Rat },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedTrace {
    /// SUT-side labels at absolute instants.
    pub steps: Vec<(Rat, ActionLabel)>,
    pub violation: Violation,
}

impl fmt::Display for TimedTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.steps.iter().map(|(t, a)| format!("{}@{a}", fmt_rat(t))).collect();
        match &self.violation {
            Violation::Output { label, allowed } => {
                let allowed: Vec<String> = allowed.iter().map(ToString::to_string).collect();
                parts.push(format!("-- unexpected {label} (allowed: {})", if allowed.is_empty() { "none".into() } else { allowed.join(" ") }));
            }
            Violation::Delay { until } => parts.push(format!("-- delay to {} not allowed", fmt_rat(until))),
        }
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TiocoResult {
    /// No violation among the grid traces up to the horizon.
    Consistent,
    Counterexample(TimedTrace),
}

pub const DEFAULT_TIOCO_LIMIT: usize = 1_000_000;

fn sut_label(sys: &ComposedSystem, mv: Move) -> Option<ActionLabel> {
    match mv {
        Move::Sync(t, _) => Some(sys.transition(t).label.clone()),
        Move::Internal(_) => None,
    }
}

/// States reachable through internal moves at the current instant.
fn tau_closure(sys: &ComposedSystem, states: BTreeSet<State>) -> BTreeSet<State> {
    let mut out = states.clone();
    let mut todo: Vec<State> = states.into_iter().collect();
    while let Some(s) = todo.pop() {
        for mv in fireable(sys, &s) {
            if let Move::Internal(_) = mv {
                let next = fire(sys, &s, mv).expect("fireable");
                if out.insert(next.clone()) {
                    todo.push(next);
                }
            }
        }
    }
    out
}

/// Grid-based bounded check that the timed traces of `implementation` are traces of
/// `spec`, both under an environment offering every input at all times. Inputs the
/// specification does not accept are not explored further.
pub fn bounded_tioco_check(
    spec: &Net,
    implementation: &Net,
    horizon: Rat,
    granularity: Option<Rat>,
    limit: usize,
) -> Result<TiocoResult, HarnessError> {
    let strict = ComposeOptions::default();
    let s_sys = compose_with(spec, &universal_environment(spec), strict).map_err(HarnessError::Compose)?;
    let i_sys = compose_with(implementation, &universal_environment(implementation), strict).map_err(HarnessError::Compose)?;
    let grid = granularity.unwrap_or_else(|| s_sys.default_granularity().min(i_sys.default_granularity()));
    if grid <= Rat::zero() {
        return Err(HarnessError::InvalidMutation("granularity must be positive".into()));
    }

    type Node = (State, BTreeSet<State>, Rat);
    let mut nodes: Vec<(Node, Vec<(Rat, ActionLabel)>)> = Vec::new();
    let mut seen: HashSet<Node> = HashSet::new();
    let mut heap: BinaryHeap<Reverse<(Rat, usize)>> = BinaryHeap::new();
    let start: Node = (initial_state(&i_sys), tau_closure(&s_sys, BTreeSet::from([initial_state(&s_sys)])), Rat::zero());
    seen.insert(start.clone());
    nodes.push((start, Vec::new()));
    heap.push(Reverse((Rat::zero(), 0)));
    let mut push = |node: Node, trace: Vec<(Rat, ActionLabel)>, nodes: &mut Vec<_>, heap: &mut BinaryHeap<_>| {
        if seen.insert(node.clone()) {
            if nodes.len() >= limit {
                return Err(HarnessError::LimitExceeded(limit));
            }
            heap.push(Reverse((node.2, nodes.len())));
            nodes.push((node, trace));
        }
        Ok(())
    };
    while let Some(Reverse((now, i))) = heap.pop() {
        let ((imp, specs, _), trace) = nodes[i].clone();
        for mv in fireable(&i_sys, &imp) {
            let next_imp = fire(&i_sys, &imp, mv).expect("fireable");
            let Some(label) = sut_label(&i_sys, mv) else {
                push((next_imp, specs.clone(), now), trace.clone(), &mut nodes, &mut heap)?;
                continue;
            };
            let mut next_specs = BTreeSet::new();
            let mut allowed = BTreeSet::new();
            for s in &specs {
                for smv in fireable(&s_sys, s) {
                    if let Some(l) = sut_label(&s_sys, smv) {
                        if l == label {
                            next_specs.insert(fire(&s_sys, s, smv).expect("fireable"));
                        }
                        if l.is_output() {
                            allowed.insert(l);
                        }
                    }
                }
            }
            let mut next_trace = trace.clone();
            next_trace.push((now, label.clone()));
            if next_specs.is_empty() {
                if label.is_output() {
                    let violation = Violation::Output { label, allowed: allowed.into_iter().collect() };
                    return Ok(TiocoResult::Counterexample(TimedTrace { steps: trace, violation }));
                }
                continue;
            }
            push((next_imp, tau_closure(&s_sys, next_specs), now), next_trace, &mut nodes, &mut heap)?;
        }
        let later = now + grid;
        if later > horizon || !max_delay(&imp).admits(&grid) {
            continue;
        }
        let next_imp = elapse(&i_sys, &imp, grid).expect("admissible delay");
        let next_specs: BTreeSet<State> = specs
            .iter()
            .filter(|s| max_delay(s).admits(&grid))
            .map(|s| elapse(&s_sys, s, grid).expect("admissible delay"))
            .collect();
        if next_specs.is_empty() {
            return Ok(TiocoResult::Counterexample(TimedTrace { steps: trace, violation: Violation::Delay { until: later } }));
        }
        push((next_imp, tau_closure(&s_sys, next_specs), later), trace, &mut nodes, &mut heap)?;
    }
    Ok(TiocoResult::Consistent)
}

/// Default trace check granularity for a pair of nets.
pub fn default_granularity(spec: &Net, implementation: &Net) -> Rat {
    let consts = spec.intervals.values().chain(implementation.intervals.values()).flat_map(|iv| {
        let mut v = vec![iv.lower];
        v.extend(iv.upper);
        v
    });
    let values: Vec<Rat> = consts.collect();
    ratio(1, 2 * crate::time::lcm_denominators(values.iter()))
}
