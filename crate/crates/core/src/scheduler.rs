//! Firing-time constraints over a discrete support and the fastest schedule.
//!
//! Step `i` of a support fires at absolute time `eta_i`; `eta_0 = 0` is the origin. Every
//! transition's enabling instant is the step that last newly enabled it, so all timing
//! conditions are differences `eta_i - eta_j`. Priority conditions that need a ready
//! partner are disjunctions; the solver enumerates their branches.

use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::semantics::{is_enabled, run, successor_tokens, Move, Schedule};
use crate::system::{ComposedSystem, PriorityMode, Side};
use crate::time::{fmt_rat, ratio, Bound, Rat};

/// Largest number of disjunct combinations the solver enumerates.
pub const MAX_BRANCHES: usize = 1 << 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("unknown transition {0}")]
    UnknownTransition(String),
    #[error("support not realizable: {0}")]
    Infeasible(String),
    #[error("too many priority alternatives ({0})")]
    TooManyAlternatives(usize),
}

/// `eta_i - eta_j (<|<=) c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiffConstraint {
    pub i: usize,
    pub j: usize,
    pub bound: Bound,
}

impl DiffConstraint {
    fn new(i: usize, j: usize, bound: Bound) -> Self {
        DiffConstraint { i, j, bound }
    }

    pub fn holds(&self, eta: &[Rat]) -> bool {
        self.bound.admits(&(eta[self.i] - eta[self.j]))
    }
}

impl fmt::Display for DiffConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Bound::Finite { value, strict } = self.bound else {
            return write!(f, "true");
        };
        let (le, ge) = if strict { ("<", ">") } else { ("<=", ">=") };
        match (self.i, self.j) {
            (0, j) => write!(f, "eta{j} {ge} {}", fmt_rat(&-value)),
            (i, 0) => write!(f, "eta{i} {le} {}", fmt_rat(&value)),
            (i, j) if value < Rat::zero() || (value.is_zero() && i < j) => write!(f, "eta{j} - eta{i} {ge} {}", fmt_rat(&-value)),
            (i, j) => write!(f, "eta{i} - eta{j} {le} {}", fmt_rat(&value)),
        }
    }
}

/// All firing times realizing a support: a conjunction of difference constraints and a
/// conjunction of disjunctions (each option itself a conjunction).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScheduleSystem {
    pub steps: usize,
    pub base: Vec<DiffConstraint>,
    pub alternatives: Vec<Vec<Vec<DiffConstraint>>>,
}

impl ScheduleSystem {
    pub fn branch_count(&self) -> usize {
        self.alternatives.iter().fold(1usize, |acc, a| acc.saturating_mul(a.len()))
    }

    pub fn holds(&self, eta: &[Rat]) -> bool {
        self.base.iter().all(|c| c.holds(eta))
            && self.alternatives.iter().all(|alt| alt.iter().any(|opt| opt.iter().all(|c| c.holds(eta))))
    }

    /// One inequality per line.
    pub fn render(&self) -> String {
        let mut lines: Vec<String> = self.base.iter().map(ToString::to_string).collect();
        for alt in &self.alternatives {
            let opts: Vec<String> = alt
                .iter()
                .map(|opt| format!("({})", opt.iter().map(ToString::to_string).collect::<Vec<_>>().join(" and ")))
                .collect();
            lines.push(opts.join(" or "));
        }
        lines.join("\n")
    }
}

/// Parses `t0 t1+s2 ...` into moves.
pub fn parse_support(sys: &ComposedSystem, text: &str) -> Result<Vec<Move>, ScheduleError> {
    text.split_whitespace()
        .map(|tok| Move::parse(sys, tok).ok_or_else(|| ScheduleError::UnknownTransition(tok.to_string())))
        .collect()
}

fn check_move(sys: &ComposedSystem, mv: Move) -> Result<(), ScheduleError> {
    let n = sys.transitions().len();
    for t in mv.fired() {
        if t >= n {
            return Err(ScheduleError::UnknownTransition(format!("#{t}")));
        }
    }
    match mv {
        Move::Internal(t) if !sys.is_solo(t) => {
            Err(ScheduleError::Infeasible(format!("{} cannot fire alone", sys.transition(t).name)))
        }
        Move::Sync(t, p) if sys.transition(t).side != Side::Sut || !sys.partners(t).contains(&p) => {
            Err(ScheduleError::Infeasible(format!("{} is not a synchronizing pair", mv.name(sys))))
        }
        _ => Ok(()),
    }
}

/// The constraint system of a support; `Infeasible` when a move is not enabled by the
/// marking reached so far.
pub fn feasibility_system(sys: &ComposedSystem, support: &[Move]) -> Result<ScheduleSystem, ScheduleError> {
    let n = sys.transitions().len();
    let mut tokens = sys.initial_tokens().clone();
    let mut since: Vec<usize> = vec![0; n];
    let mut out = ScheduleSystem { steps: support.len(), ..Default::default() };
    for (idx, &mv) in support.iter().enumerate() {
        check_move(sys, mv)?;
        let s = idx + 1;
        let fired = mv.fired();
        for &f in &fired {
            if !is_enabled(sys, &tokens, f) {
                return Err(ScheduleError::Infeasible(format!(
                    "step {s}: {} not enabled",
                    sys.transition(f).name
                )));
            }
        }
        out.base.push(DiffConstraint::new(s - 1, s, Bound::zero()));
        for k in (0..n).filter(|&k| is_enabled(sys, &tokens, k)) {
            let ub = sys.transition(k).interval.upper_bound();
            if ub.is_finite() {
                out.base.push(DiffConstraint::new(s, since[k], ub));
            }
        }
        for &f in &fired {
            out.base.push(DiffConstraint::new(since[f], s, sys.transition(f).interval.lower_bound()));
        }
        for &f in &fired {
            for &k in sys.preemptors(f) {
                if fired.contains(&k) || !is_enabled(sys, &tokens, k) {
                    continue;
                }
                let info = sys.transition(k);
                let iv = &info.interval;
                let not_ready = DiffConstraint::new(s, since[k], Bound::finite(iv.lower, !iv.lower_strict));
                let ready = DiffConstraint::new(since[k], s, iv.lower_bound());
                if info.is_internal() {
                    if sys.is_solo(k) {
                        out.base.push(not_ready);
                    }
                    continue;
                }
                if sys.options.priority == PriorityMode::Naive || sys.partners(k).iter().any(|p| fired.contains(p)) {
                    out.base.push(not_ready);
                    continue;
                }
                let partner_idle: Vec<DiffConstraint> = sys
                    .partners(k)
                    .iter()
                    .filter(|&&p| is_enabled(sys, &tokens, p))
                    .map(|&p| {
                        let piv = &sys.transition(p).interval;
                        DiffConstraint::new(s, since[p], Bound::finite(piv.lower, !piv.lower_strict))
                    })
                    .collect();
                if partner_idle.is_empty() {
                    continue;
                }
                let mut second = vec![ready];
                second.extend(partner_idle);
                out.alternatives.push(vec![vec![not_ready], second]);
            }
        }
        let (mid, after) = successor_tokens(sys, &tokens, &fired);
        for k in 0..n {
            if is_enabled(sys, &after, k) && (!is_enabled(sys, &mid, k) || fired.contains(&k)) {
                since[k] = s;
            }
        }
        tokens = after;
    }
    Ok(out)
}

/// `value + eps * infinitesimal`, compared lexicographically.
type Weight = (Rat, i64);

fn weight(b: Bound) -> Option<Weight> {
    match b {
        Bound::Finite { value, strict } => Some((value, if strict { -1 } else { 0 })),
        Bound::Infinite => None,
    }
}

/// Least solution of a conjunction of difference constraints over `eta_0..eta_steps`
/// with `eta_0 = 0`, or `None` when inconsistent.
fn least_solution(steps: usize, constraints: &[DiffConstraint]) -> Option<Vec<Weight>> {
    let nodes = steps + 1;
    // Edge i -> j of weight c for eta_i - eta_j <= c: a path from the origin to j sums to
    // a bound on eta_0 - eta_j, so eta_j >= -dist[j].
    let edges: Vec<(usize, usize, Weight)> =
        constraints.iter().filter_map(|c| weight(c.bound).map(|w| (c.i, c.j, w))).collect();
    let mut dist: Vec<Option<Weight>> = vec![None; nodes];
    dist[0] = Some((Rat::zero(), 0));
    for round in 0..=nodes {
        let mut changed = false;
        for &(i, j, w) in &edges {
            if let Some(di) = dist[i] {
                let cand = (di.0 + w.0, di.1 + w.1);
                if dist[j].is_none_or(|dj| cand < dj) {
                    dist[j] = Some(cand);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
        if round == nodes {
            return None;
        }
    }
    if dist[0] != Some((Rat::zero(), 0)) {
        return None;
    }
    dist.into_iter().map(|d| d.map(|(v, e)| (-v, -e))).collect()
}

/// The fastest schedule of a support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastestSchedule {
    /// A realizable schedule; at the infimum unless `unattained`.
    pub schedule: Schedule,
    /// Earliest firing times; exact infima when `unattained`.
    pub infimum: Vec<Rat>,
    /// Some infimum lies on an open bound and cannot be reached exactly.
    pub unattained: bool,
}

impl FastestSchedule {
    pub fn accumulated(&self) -> Rat {
        self.schedule.accumulated()
    }

    pub fn infimum_accumulated(&self) -> Rat {
        self.infimum.last().copied().unwrap_or_else(Rat::zero)
    }
}

pub const DEFAULT_EPSILON: (i64, i64) = (1, 1000);

pub fn fastest_schedule(sys: &ComposedSystem, support: &[Move]) -> Result<FastestSchedule, ScheduleError> {
    fastest_schedule_with(sys, support, ratio(DEFAULT_EPSILON.0, DEFAULT_EPSILON.1))
}

/// Minimizes the last firing time, each earlier time at its own minimum. Open minima are
/// approached by `eps`, halved until the witness is realizable.
pub fn fastest_schedule_with(sys: &ComposedSystem, support: &[Move], eps: Rat) -> Result<FastestSchedule, ScheduleError> {
    let system = feasibility_system(sys, support)?;
    let branches = system.branch_count();
    if branches > MAX_BRANCHES {
        return Err(ScheduleError::TooManyAlternatives(branches));
    }
    let mut best: Option<(Vec<Weight>, Vec<DiffConstraint>)> = None;
    for b in 0..branches {
        let mut cs = system.base.clone();
        let mut rest = b;
        for alt in &system.alternatives {
            cs.extend(alt[rest % alt.len()].iter().copied());
            rest /= alt.len();
        }
        if let Some(sol) = least_solution(system.steps, &cs) {
            if best.as_ref().is_none_or(|(s, _)| sol[system.steps] < s[system.steps]) {
                best = Some((sol, cs));
            }
        }
    }
    let (sol, cs) = best.ok_or_else(|| ScheduleError::Infeasible("inconsistent timing constraints".into()))?;
    let infimum: Vec<Rat> = sol.iter().map(|w| w.0).collect();
    let unattained = sol.iter().any(|w| w.1 != 0);
    let mut e = eps;
    for _ in 0..64 {
        let eta: Vec<Rat> = sol.iter().map(|w| w.0 + e * Rat::from_integer(w.1)).collect();
        let schedule = Schedule::new(eta[1..].iter().copied().zip(support.iter().copied()).collect());
        if cs.iter().all(|c| c.holds(&eta)) && run(sys, &schedule).is_ok() {
            return Ok(FastestSchedule { schedule, infimum: infimum[1..].to_vec(), unattained });
        }
        if !unattained {
            break;
        }
        e /= 2;
    }
    Err(ScheduleError::Infeasible("no realizable witness near the infimum".into()))
}

/// Replays a schedule through the semantics.
pub fn verify_schedule(sys: &ComposedSystem, s: &Schedule) -> bool {
    run(sys, s).is_ok()
}
