//! Timed transition system semantics of a composed system.
//!
//! A state pairs a marking with the current firing interval of every enabled transition.
//! Time elapse shifts all intervals towards the origin; a discrete move fires either one
//! internal transition or a complementary SUT/ENV pair, subject to priorities.

use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::dbm::{Constraint, Dbm};
use crate::system::{ComposedSystem, PriorityMode, Side, Tokens};
use crate::time::{fmt_rat, Bound, Rat, TimeInterval};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("transition {0} is not enabled")]
    NotEnabled(String),
    #[error("transitions {0} and {1} do not carry complementary labels")]
    NotComplementary(String, String),
    #[error("move {0} is not fireable")]
    NotFireable(String),
    #[error("delay {delay} overruns the deadline of {transition}")]
    DeadlineExceeded { transition: String, delay: String },
    #[error("negative delay {0}")]
    NegativeDelay(String),
}

/// A discrete move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    /// One internal transition firing alone.
    Internal(usize),
    /// An SUT transition and an environment transition with complementary labels.
    Sync(usize, usize),
}

impl Move {
    /// Transitions fired by the move.
    pub fn fired(&self) -> Vec<usize> {
        match *self {
            Move::Internal(t) => vec![t],
            Move::Sync(a, b) => vec![a, b],
        }
    }

    pub fn involves(&self, t: usize) -> bool {
        match *self {
            Move::Internal(a) => a == t,
            Move::Sync(a, b) => a == t || b == t,
        }
    }

    /// Transition-name form: `t0` or `t0+s0`.
    pub fn name(&self, sys: &ComposedSystem) -> String {
        match *self {
            Move::Internal(t) => sys.transition(t).name.clone(),
            Move::Sync(a, b) => format!("{}+{}", sys.transition(a).name, sys.transition(b).name),
        }
    }

    /// Label form: `tau` or `(touch?,touch!)`.
    pub fn label(&self, sys: &ComposedSystem) -> String {
        match *self {
            Move::Internal(_) => "tau".to_string(),
            Move::Sync(a, b) => format!("({},{})", sys.transition(a).label, sys.transition(b).label),
        }
    }

    /// Parses the transition-name form.
    pub fn parse(sys: &ComposedSystem, text: &str) -> Option<Move> {
        match text.split_once('+') {
            Some((a, b)) => {
                let (a, b) = (sys.transition_id(a)?, sys.transition_id(b)?);
                let (sut, env) = if sys.transition(a).side == Side::Sut { (a, b) } else { (b, a) };
                Some(Move::Sync(sut, env))
            }
            None => Some(Move::Internal(sys.transition_id(text)?)),
        }
    }
}

/// A run step: a delay or a discrete move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Delay(Rat),
    Fire(Move),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub tokens: Tokens,
    /// `Some` exactly for enabled transitions.
    pub intervals: Vec<Option<TimeInterval>>,
}

impl State {
    pub fn interval(&self, t: usize) -> Option<&TimeInterval> {
        self.intervals[t].as_ref()
    }

    pub fn enabled(&self) -> impl Iterator<Item = usize> + '_ {
        self.intervals.iter().enumerate().filter_map(|(t, i)| i.as_ref().map(|_| t))
    }

    pub fn describe(&self, sys: &ComposedSystem) -> String {
        let mut parts = vec![sys.to_marking(&self.tokens).to_string()];
        for t in self.enabled() {
            parts.push(format!("{}:{}", sys.transition(t).name, self.intervals[t].as_ref().unwrap()));
        }
        parts.join(" ")
    }
}

/// A timed word of discrete moves at absolute, non-decreasing instants.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schedule {
    pub steps: Vec<(Rat, Move)>,
}

impl Schedule {
    pub fn new(steps: Vec<(Rat, Move)>) -> Self {
        Schedule { steps }
    }

    /// Time of the last step, zero when empty.
    pub fn accumulated(&self) -> Rat {
        self.steps.last().map(|(eta, _)| *eta).unwrap_or_else(Rat::zero)
    }

    pub fn support(&self) -> Vec<Move> {
        self.steps.iter().map(|(_, m)| *m).collect()
    }

    /// `eta@(a?,a!)` tokens.
    pub fn render(&self, sys: &ComposedSystem) -> String {
        self.steps
            .iter()
            .map(|(eta, m)| format!("{}@{}", fmt_rat(eta), m.label(sys)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn is_enabled(sys: &ComposedSystem, tokens: &[u32], t: usize) -> bool {
    sys.transition(t).pre.iter().all(|&(p, w)| tokens[p] >= w)
}

/// `En(m)`.
pub fn enabled(sys: &ComposedSystem, tokens: &[u32]) -> Vec<usize> {
    (0..sys.transitions().len()).filter(|&t| is_enabled(sys, tokens, t)).collect()
}

pub fn initial_state(sys: &ComposedSystem) -> State {
    let tokens = sys.initial_tokens().clone();
    let intervals = (0..sys.transitions().len())
        .map(|t| is_enabled(sys, &tokens, t).then(|| sys.transition(t).interval.clone()))
        .collect();
    State { tokens, intervals }
}

fn consume(sys: &ComposedSystem, tokens: &[u32], fired: &[usize]) -> Tokens {
    let mut out = tokens.to_vec();
    for &t in fired {
        for &(p, w) in &sys.transition(t).pre {
            out[p] -= w;
        }
    }
    out
}

fn produce(sys: &ComposedSystem, tokens: &mut [u32], fired: &[usize]) {
    for &t in fired {
        for &(p, w) in &sys.transition(t).post {
            tokens[p] += w;
        }
    }
}

/// Marking after firing `fired` simultaneously, and the intermediate marking.
pub fn successor_tokens(sys: &ComposedSystem, tokens: &[u32], fired: &[usize]) -> (Tokens, Tokens) {
    let mid = consume(sys, tokens, fired);
    let mut after = mid.clone();
    produce(sys, &mut after, fired);
    (mid, after)
}

/// Newly-enabled predicate for a simultaneous firing of `fired` from `tokens`.
pub fn newly_enabled(sys: &ComposedSystem, k: usize, tokens: &[u32], fired: &[usize]) -> bool {
    let (mid, after) = successor_tokens(sys, tokens, fired);
    is_enabled(sys, &after, k) && (!is_enabled(sys, &mid, k) || fired.contains(&k))
}

/// `ne_tau(l, m, t)`: `l` is newly enabled by firing `t` alone from `m`.
pub fn ne_tau(sys: &ComposedSystem, l: usize, tokens: &[u32], t: usize) -> Result<bool, SemanticsError> {
    if !is_enabled(sys, tokens, t) {
        return Err(SemanticsError::NotEnabled(sys.transition(t).name.clone()));
    }
    Ok(newly_enabled(sys, l, tokens, &[t]))
}

/// `ne_sync(k, m, (t, t'))`: `k` is newly enabled by firing `t` and `t'` together.
pub fn ne_sync(sys: &ComposedSystem, k: usize, tokens: &[u32], t: usize, t2: usize) -> Result<bool, SemanticsError> {
    for x in [t, t2] {
        if !is_enabled(sys, tokens, x) {
            return Err(SemanticsError::NotEnabled(sys.transition(x).name.clone()));
        }
    }
    if !sys.transition(t).label.complements(&sys.transition(t2).label) {
        return Err(SemanticsError::NotComplementary(sys.transition(t).name.clone(), sys.transition(t2).name.clone()));
    }
    Ok(newly_enabled(sys, k, tokens, &[t, t2]))
}

fn ready(e: &State, t: usize) -> bool {
    e.intervals[t].as_ref().is_some_and(TimeInterval::contains_zero)
}

/// Whether `k` could be discharged at this instant, given that `fired` are about to fire.
fn dischargeable(sys: &ComposedSystem, e: &State, k: usize, fired: &[usize]) -> bool {
    if !ready(e, k) {
        return false;
    }
    if sys.options.priority == PriorityMode::Naive {
        return true;
    }
    if sys.transition(k).is_internal() {
        return sys.is_solo(k);
    }
    sys.partners(k).iter().any(|&p| fired.contains(&p) || ready(e, p))
}

/// Some transition with priority over `f` is enabled and could fire now.
pub fn preempted(sys: &ComposedSystem, e: &State, f: usize, fired: &[usize]) -> bool {
    sys.preemptors(f)
        .iter()
        .any(|&k| !fired.contains(&k) && e.intervals[k].is_some() && dischargeable(sys, e, k, fired))
}

/// Discrete moves fireable from `e`, internal moves first, each group in index order.
pub fn fireable(sys: &ComposedSystem, e: &State) -> Vec<Move> {
    let mut out = Vec::new();
    for t in e.enabled() {
        if sys.is_solo(t) && ready(e, t) && !preempted(sys, e, t, &[t]) {
            out.push(Move::Internal(t));
        }
    }
    for (t, t2) in sys.sync_pairs() {
        let fired = [t, t2];
        if ready(e, t) && ready(e, t2) && !preempted(sys, e, t, &fired) && !preempted(sys, e, t2, &fired) {
            out.push(Move::Sync(t, t2));
        }
    }
    out
}

pub fn is_fireable(sys: &ComposedSystem, e: &State, mv: Move) -> bool {
    match mv {
        Move::Internal(t) => sys.is_solo(t) && ready(e, t) && !preempted(sys, e, t, &[t]),
        Move::Sync(t, t2) => {
            let fired = [t, t2];
            sys.partners(t).contains(&t2)
                && sys.transition(t).side == Side::Sut
                && ready(e, t)
                && ready(e, t2)
                && !preempted(sys, e, t, &fired)
                && !preempted(sys, e, t2, &fired)
        }
    }
}

/// Continuous move: every enabled interval shifted by `d`.
pub fn elapse(sys: &ComposedSystem, e: &State, d: Rat) -> Result<State, SemanticsError> {
    if d < Rat::zero() {
        return Err(SemanticsError::NegativeDelay(fmt_rat(&d)));
    }
    let mut intervals = e.intervals.clone();
    for (t, slot) in intervals.iter_mut().enumerate() {
        if let Some(i) = slot {
            *i = i.shift(&d).ok_or_else(|| SemanticsError::DeadlineExceeded {
                transition: sys.transition(t).name.clone(),
                delay: fmt_rat(&d),
            })?;
        }
    }
    Ok(State { tokens: e.tokens.clone(), intervals })
}

/// Largest admissible delay from `e`, as a bound (`Infinite` when no deadline applies).
pub fn max_delay(e: &State) -> Bound {
    e.intervals.iter().flatten().map(TimeInterval::upper_bound).min().unwrap_or(Bound::Infinite)
}

fn fire_unchecked(sys: &ComposedSystem, e: &State, fired: &[usize]) -> State {
    let (mid, after) = successor_tokens(sys, &e.tokens, fired);
    let intervals = (0..sys.transitions().len())
        .map(|k| {
            if !is_enabled(sys, &after, k) {
                None
            } else if !is_enabled(sys, &mid, k) || fired.contains(&k) {
                Some(sys.transition(k).interval.clone())
            } else {
                e.intervals[k].clone()
            }
        })
        .collect();
    State { tokens: after, intervals }
}

pub fn fire_internal(sys: &ComposedSystem, e: &State, t: usize) -> Result<State, SemanticsError> {
    if !is_fireable(sys, e, Move::Internal(t)) {
        return Err(SemanticsError::NotFireable(sys.transition(t).name.clone()));
    }
    Ok(fire_unchecked(sys, e, &[t]))
}

pub fn fire_sync(sys: &ComposedSystem, e: &State, t: usize, t2: usize) -> Result<State, SemanticsError> {
    if !is_fireable(sys, e, Move::Sync(t, t2)) {
        return Err(SemanticsError::NotFireable(Move::Sync(t, t2).name(sys)));
    }
    Ok(fire_unchecked(sys, e, &[t, t2]))
}

pub fn fire(sys: &ComposedSystem, e: &State, mv: Move) -> Result<State, SemanticsError> {
    match mv {
        Move::Internal(t) => fire_internal(sys, e, t),
        Move::Sync(t, t2) => fire_sync(sys, e, t, t2),
    }
}

pub fn apply(sys: &ComposedSystem, e: &State, step: Step) -> Result<State, SemanticsError> {
    match step {
        Step::Delay(d) => elapse(sys, e, d),
        Step::Fire(mv) => fire(sys, e, mv),
    }
}

/// Where and why a schedule stopped being realizable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFailure {
    pub index: usize,
    pub reason: String,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.index, self.reason)
    }
}

/// Replays a schedule from the initial state.
pub fn run(sys: &ComposedSystem, schedule: &Schedule) -> Result<State, RunFailure> {
    run_from(sys, &initial_state(sys), schedule)
}

pub fn run_from(sys: &ComposedSystem, start: &State, schedule: &Schedule) -> Result<State, RunFailure> {
    let mut state = start.clone();
    let mut now = Rat::zero();
    for (index, (eta, mv)) in schedule.steps.iter().enumerate() {
        if *eta < now {
            return Err(RunFailure { index, reason: format!("time {} precedes {}", fmt_rat(eta), fmt_rat(&now)) });
        }
        state = elapse(sys, &state, eta - now).map_err(|e| RunFailure { index, reason: e.to_string() })?;
        now = *eta;
        state = fire(sys, &state, *mv).map_err(|e| RunFailure { index, reason: e.to_string() })?;
    }
    Ok(state)
}

/// The firing domain of a state: one variable per enabled transition, constrained to its
/// current interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiringDomain {
    pub variables: Vec<usize>,
    pub bounds: Dbm,
}

impl FiringDomain {
    pub fn of_state(e: &State) -> Self {
        let variables: Vec<usize> = e.enabled().collect();
        let mut bounds = Dbm::nonnegative(variables.len());
        for (i, &t) in variables.iter().enumerate() {
            let iv = e.interval(t).expect("enabled");
            bounds.constrain(Constraint::new(0, i + 1, iv.lower_bound()));
            bounds.constrain(Constraint::new(i + 1, 0, iv.upper_bound()));
        }
        bounds.close();
        FiringDomain { variables, bounds }
    }

    fn var(&self, t: usize) -> Option<usize> {
        self.variables.iter().position(|&v| v == t).map(|i| i + 1)
    }

    /// Tightest bound on `x - y`, where `None` stands for the origin.
    pub fn bound(&self, x: Option<usize>, y: Option<usize>) -> Option<Bound> {
        let i = match x {
            Some(t) => self.var(t)?,
            None => 0,
        };
        let j = match y {
            Some(t) => self.var(t)?,
            None => 0,
        };
        Some(self.bounds.get(i, j))
    }

    /// Lower and upper bound of one variable.
    pub fn interval(&self, t: usize) -> Option<(Bound, Bound)> {
        Some(self.bounds.var_bounds(self.var(t)?))
    }

    pub fn describe(&self, sys: &ComposedSystem) -> Vec<String> {
        let names: Vec<String> = self.variables.iter().map(|&t| sys.transition(t).name.clone()).collect();
        self.bounds.describe(&names)
    }
}
