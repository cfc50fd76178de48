//! Strong state class graph.
//!
//! A class is a marking plus a clock zone: one clock per enabled transition, measuring the
//! time since it was last newly enabled. The stored zone is the entry zone, i.e. the clock
//! valuations possible at the instant the class is entered. Firing a move intersects the
//! zone's time successors with the guards of the fired transitions and with the negated
//! readiness of every transition that would preempt them, resets the clocks of newly
//! enabled transitions and extrapolates against the largest constant of each clock.
//!
//! The "not preempted" condition is a disjunction when preemption needs a ready partner,
//! so one move may lead to several successor classes, one per convex piece.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::dbm::{Constraint, Dbm};
use crate::net::Marking;
use crate::semantics::{is_enabled, successor_tokens, FiringDomain, Move, State};
use crate::system::{ComposedSystem, PriorityMode, Side, Tokens};
use crate::time::{Rat, TimeInterval};

pub const DEFAULT_CLASS_LIMIT: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SscgError {
    #[error("class graph truncated after {0} classes")]
    Truncated(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_classes: usize,
    pub max_depth: Option<usize>,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_classes: DEFAULT_CLASS_LIMIT, max_depth: None }
    }
}

impl Limits {
    /// Defaults, with `TPTEST_CLASS_LIMIT` overriding the class limit.
    pub fn from_env() -> Self {
        let mut limits = Limits::default();
        if let Some(n) = std::env::var("TPTEST_CLASS_LIMIT").ok().and_then(|v| v.trim().parse().ok()) {
            limits.max_classes = n;
        }
        limits
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateClass {
    pub tokens: Tokens,
    /// Enabled transitions in index order; clock `i + 1` of the zone belongs to `vars[i]`.
    pub vars: Vec<usize>,
    pub zone: Dbm,
}

impl StateClass {
    pub fn marking(&self, sys: &ComposedSystem) -> Marking {
        sys.to_marking(&self.tokens)
    }

    /// Zone variable (1-based) of a transition.
    pub fn var(&self, t: usize) -> Option<usize> {
        self.vars.iter().position(|&v| v == t).map(|i| i + 1)
    }

    /// Clock valuations reachable while staying in the class: time successors of the
    /// entry zone within every enabled transition's deadline.
    pub fn time_closure(&self, sys: &ComposedSystem) -> Dbm {
        let mut z = self.zone.clone();
        z.up();
        for (i, &t) in self.vars.iter().enumerate() {
            let b = sys.transition(t).interval.upper_bound();
            if b.is_finite() {
                z.constrain(Constraint::new(i + 1, 0, b));
            }
        }
        z.close();
        z
    }

    /// Firing domain hull at entry: `phi_t = Is(t) - x_t`, intersected with `phi >= 0`.
    pub fn firing_domain(&self, sys: &ComposedSystem) -> FiringDomain {
        let n = self.vars.len();
        let mut d = Dbm::nonnegative(n);
        let iv = |i: usize| &sys.transition(self.vars[i - 1]).interval;
        for i in 1..=n {
            d.constrain(Constraint::new(i, 0, iv(i).upper_bound() + self.zone.get(0, i)));
            d.constrain(Constraint::new(0, i, iv(i).lower_bound() + self.zone.get(i, 0)));
            for j in 1..=n {
                if i != j {
                    d.constrain(Constraint::new(i, j, iv(i).upper_bound() + iv(j).lower_bound() + self.zone.get(j, i)));
                }
            }
        }
        d.close();
        FiringDomain { variables: self.vars.clone(), bounds: d }
    }

    /// The concrete state for a clock valuation over `vars`.
    pub fn state_at(&self, sys: &ComposedSystem, clocks: &[Rat]) -> Option<State> {
        let mut intervals = vec![None; sys.transitions().len()];
        for (i, &t) in self.vars.iter().enumerate() {
            intervals[t] = Some(sys.transition(t).interval.shift(&clocks[i])?);
        }
        Some(State { tokens: self.tokens.clone(), intervals })
    }

    pub fn describe(&self, sys: &ComposedSystem) -> String {
        let names: Vec<String> = self.vars.iter().map(|&t| format!("x_{}", sys.transition(t).name)).collect();
        format!("{} | {}", self.marking(sys), self.zone.describe(&names).join(", "))
    }
}

fn ready(iv: &TimeInterval, v: usize) -> Constraint {
    Constraint::at_least(v, iv.lower, iv.lower_strict)
}

fn not_ready(iv: &TimeInterval, v: usize) -> Constraint {
    Constraint::at_most(v, iv.lower, !iv.lower_strict)
}

fn and_all(mut z: Dbm, cs: &[Constraint]) -> Option<Dbm> {
    for c in cs {
        if !z.and(*c) {
            return None;
        }
    }
    Some(z)
}

/// How preemptors are judged able to fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartnerAssumption {
    /// Use the actual partners present in the composed system.
    Actual,
    /// Every observable transition is assumed to have a ready partner.
    Universal,
}

/// Pieces of the class's time closure in which `fired` can fire together, priorities
/// honored. `fired` must be a candidate move (all enabled).
pub fn fire_region(sys: &ComposedSystem, c: &StateClass, fired: &[usize], assume: PartnerAssumption) -> Vec<Dbm> {
    let mut z = c.time_closure(sys);
    if z.is_empty() {
        return Vec::new();
    }
    for &f in fired {
        let Some(v) = c.var(f) else { return Vec::new() };
        if !z.and(ready(&sys.transition(f).interval, v)) {
            return Vec::new();
        }
    }
    let mut pieces = vec![z];
    for &f in fired {
        for &k in sys.preemptors(f) {
            if fired.contains(&k) {
                continue;
            }
            let Some(vk) = c.var(k) else { continue };
            let info = sys.transition(k);
            let own = not_ready(&info.interval, vk);
            let naive = sys.options.priority == PriorityMode::Naive;
            let alternatives: Option<Vec<Constraint>> = if naive || assume == PartnerAssumption::Universal {
                if info.is_internal() && !sys.is_solo(k) {
                    continue;
                }
                None
            } else if info.is_internal() {
                if !sys.is_solo(k) {
                    continue;
                }
                None
            } else if sys.partners(k).iter().any(|p| fired.contains(p)) {
                None
            } else {
                let ps: Vec<Constraint> = sys
                    .partners(k)
                    .iter()
                    .filter_map(|&p| c.var(p).map(|vp| not_ready(&sys.transition(p).interval, vp)))
                    .collect();
                if ps.is_empty() {
                    continue;
                }
                Some(ps)
            };
            let mut next = Vec::new();
            for piece in pieces {
                let mut a = piece.clone();
                if a.and(own) {
                    next.push(a);
                }
                if let Some(ps) = &alternatives {
                    let mut b = piece;
                    if b.and(ready(&info.interval, vk)) {
                        if let Some(b) = and_all(b, ps) {
                            next.push(b);
                        }
                    }
                }
            }
            pieces = next;
            if pieces.is_empty() {
                return pieces;
            }
        }
    }
    pieces
}

/// Moves whose transitions are all enabled at the marking, ordered by transition index.
pub fn candidate_moves(sys: &ComposedSystem, tokens: &[u32]) -> Vec<Move> {
    let mut out: Vec<Move> = Vec::new();
    for t in 0..sys.transitions().len() {
        if !is_enabled(sys, tokens, t) {
            continue;
        }
        if sys.is_solo(t) {
            out.push(Move::Internal(t));
        } else if sys.transition(t).side == Side::Sut {
            for &p in sys.partners(t) {
                if is_enabled(sys, tokens, p) {
                    out.push(Move::Sync(t, p));
                }
            }
        }
    }
    out.sort_by_key(|m| match *m {
        Move::Internal(t) => (t, 0),
        Move::Sync(t, p) => (t, p + 1),
    });
    out
}

fn max_constants(sys: &ComposedSystem, vars: &[usize]) -> Vec<Rat> {
    vars.iter()
        .map(|&t| {
            let iv = &sys.transition(t).interval;
            iv.upper.unwrap_or(iv.lower).max(iv.lower)
        })
        .collect()
}

/// Entry class after firing `fired` from clock zone `z` (a piece of the firing region).
fn enter(sys: &ComposedSystem, c: &StateClass, fired: &[usize], z: &Dbm) -> StateClass {
    let (mid, after) = successor_tokens(sys, &c.tokens, fired);
    let vars: Vec<usize> = (0..sys.transitions().len()).filter(|&k| is_enabled(sys, &after, k)).collect();
    let src: Vec<Option<usize>> = vars
        .iter()
        .map(|&k| if !is_enabled(sys, &mid, k) || fired.contains(&k) { None } else { c.var(k) })
        .collect();
    let mut zone = z.remap(&src);
    zone.extrapolate(&max_constants(sys, &vars));
    StateClass { tokens: after, vars, zone }
}

pub fn initial_class(sys: &ComposedSystem) -> StateClass {
    let tokens = sys.initial_tokens().clone();
    let vars: Vec<usize> = (0..sys.transitions().len()).filter(|&k| is_enabled(sys, &tokens, k)).collect();
    let zone = Dbm::zero(vars.len());
    StateClass { tokens, vars, zone }
}

/// Successor classes of `c` by `mv`; empty when the move cannot fire from the class.
pub fn class_successor(sys: &ComposedSystem, c: &StateClass, mv: Move) -> Vec<StateClass> {
    let fired = mv.fired();
    if fired.iter().any(|&t| !is_enabled(sys, &c.tokens, t)) {
        return Vec::new();
    }
    match mv {
        Move::Internal(t) if !sys.is_solo(t) => return Vec::new(),
        Move::Sync(t, p) if sys.transition(t).side != Side::Sut || !sys.partners(t).contains(&p) => return Vec::new(),
        _ => {}
    }
    let mut out: Vec<StateClass> = Vec::new();
    for piece in fire_region(sys, c, &fired, PartnerAssumption::Actual) {
        let next = enter(sys, c, &fired, &piece);
        if !out.contains(&next) {
            out.push(next);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub mv: Move,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct ClassGraph {
    pub classes: Vec<StateClass>,
    pub initial: usize,
    pub edges: Vec<Edge>,
    /// Outgoing edge indices per class, in exploration order.
    pub out: Vec<Vec<usize>>,
    pub truncated: bool,
}

impl ClassGraph {
    pub fn require_complete(&self) -> Result<(), SscgError> {
        if self.truncated {
            Err(SscgError::Truncated(self.classes.len()))
        } else {
            Ok(())
        }
    }

    pub fn successors(&self, c: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.out[c].iter().map(move |&e| &self.edges[e])
    }
}

pub fn build_sscg(sys: &ComposedSystem, limits: Limits) -> ClassGraph {
    let init = initial_class(sys);
    let mut index: HashMap<StateClass, usize> = HashMap::new();
    index.insert(init.clone(), 0);
    let mut g = ClassGraph { classes: vec![init], initial: 0, edges: Vec::new(), out: vec![Vec::new()], truncated: false };
    let mut depth = vec![0usize];
    let mut queue = VecDeque::from([0usize]);
    while let Some(ci) = queue.pop_front() {
        if limits.max_depth.is_some_and(|d| depth[ci] >= d) {
            if !candidate_moves(sys, &g.classes[ci].tokens).is_empty() {
                g.truncated = true;
            }
            continue;
        }
        let c = g.classes[ci].clone();
        for mv in candidate_moves(sys, &c.tokens) {
            for next in class_successor(sys, &c, mv) {
                let to = match index.get(&next) {
                    Some(&i) => i,
                    None => {
                        if g.classes.len() >= limits.max_classes {
                            g.truncated = true;
                            continue;
                        }
                        let i = g.classes.len();
                        index.insert(next.clone(), i);
                        g.classes.push(next);
                        g.out.push(Vec::new());
                        depth.push(depth[ci] + 1);
                        queue.push_back(i);
                        i
                    }
                };
                g.out[ci].push(g.edges.len());
                g.edges.push(Edge { from: ci, mv, to });
            }
        }
    }
    g
}

/// Distinct markings of the graph, optionally projected onto SUT places.
pub fn reachable_markings(sys: &ComposedSystem, g: &ClassGraph, sut_only: bool) -> Result<BTreeSet<Marking>, SscgError> {
    g.require_complete()?;
    Ok(g.classes
        .iter()
        .map(|c| if sut_only { sys.sut_marking(&c.tokens) } else { sys.to_marking(&c.tokens) })
        .collect())
}

impl fmt::Display for ClassGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} classes, {} edges{}",
            self.classes.len(),
            self.edges.len(),
            if self.truncated { " (truncated)" } else { "" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::system::compose;
    use crate::time::{rat, Bound};

    #[test]
    fn initial_class_of_controller() {
        let sys = compose(&models::controller(), &models::user(0)).unwrap();
        let c = initial_class(&sys);
        let names: Vec<&str> = c.vars.iter().map(|&t| sys.transition(t).name.as_str()).collect();
        assert_eq!(names, ["t0", "t8", "s0"]);
        let d = c.firing_domain(&sys);
        assert_eq!(d.interval(sys.transition_id("t8").unwrap()).unwrap().0, Bound::le(rat(-20)));
        let mut again = c.zone.clone();
        again.close();
        assert_eq!(again, c.zone);
    }

    #[test]
    fn both_touch_moves_feasible_from_initial_class() {
        let sys = compose(&models::controller(), &models::user(0)).unwrap();
        let c = initial_class(&sys);
        let id = |n: &str| sys.transition_id(n).unwrap();
        let early = class_successor(&sys, &c, Move::Sync(id("t0"), id("s0")));
        let late = class_successor(&sys, &c, Move::Sync(id("t8"), id("s0")));
        assert_eq!(early.len(), 1);
        assert_eq!(late.len(), 1);
        assert_ne!(early[0].tokens, late[0].tokens);
        assert!(class_successor(&sys, &c, Move::Sync(id("t2"), id("s0"))).is_empty());
    }

    #[test]
    fn single_urgent_self_loop_has_one_class() {
        let net = crate::format::parse_net("pl a (1)\ntr t : tau [0,0] a -> a\n").unwrap();
        let sys = compose(&net, &crate::net::Net::new("empty")).unwrap();
        let g = build_sscg(&sys, Limits::default());
        assert_eq!(g.classes.len(), 1);
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn truncation_is_reported() {
        let sys = compose(&models::controller(), &models::user(0)).unwrap();
        let g = build_sscg(&sys, Limits { max_classes: 2, max_depth: None });
        assert!(g.truncated);
        assert_eq!(g.classes.len(), 2);
        assert!(reachable_markings(&sys, &g, true).is_err());
    }
}
