//! Goals over the class graph: witnesses for test purposes, covering plans for coverage
//! criteria, a time-optimal plan search, and the DIEOU testability check.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use thiserror::Error;

use crate::dbm::Dbm;
use crate::net::{ActionLabel, Marking};
use crate::semantics::{elapse, fire, fireable, initial_state, max_delay, successor_tokens, Move, State};
use crate::sscg::{fire_region, reachable_markings, ClassGraph, PartnerAssumption, SscgError};
use crate::system::{ComposedSystem, Side};
use crate::time::{fmt_rat, ratio, Rat};

/// Default cap on the nodes explored by the time-optimal search.
pub const DEFAULT_SEARCH_LIMIT: usize = 4_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error(transparent)]
    Truncated(#[from] SscgError),
    #[error("uncoverable goals: {}", .0.join(", "))]
    Uncoverable(Vec<String>),
    #[error("search limit of {0} nodes exceeded")]
    LimitExceeded(usize),
    #[error("goal atom {0} is not supported by the time-optimal search")]
    Unsupported(String),
    #[error("unknown {kind} {name}")]
    Unknown { kind: &'static str, name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GoalAtom {
    TransitionFired(usize),
    ActionExecuted(ActionLabel),
    PlaceMarked(usize),
    /// Compared on the SUT projection.
    MarkingReached(Marking),
    ClassVisited(usize),
}

impl GoalAtom {
    pub fn on_move(&self, sys: &ComposedSystem, mv: Move) -> bool {
        match self {
            GoalAtom::TransitionFired(t) => mv.involves(*t),
            GoalAtom::ActionExecuted(label) => mv.fired().iter().any(|&t| sys.transition(t).label == *label),
            _ => false,
        }
    }

    pub fn at_tokens(&self, sys: &ComposedSystem, tokens: &[u32]) -> bool {
        match self {
            GoalAtom::PlaceMarked(p) => tokens[*p] > 0,
            GoalAtom::MarkingReached(m) => sys.sut_marking(tokens) == *m,
            _ => false,
        }
    }

    pub fn at_class(&self, sys: &ComposedSystem, g: &ClassGraph, c: usize) -> bool {
        match self {
            GoalAtom::ClassVisited(i) => *i == c,
            _ => self.at_tokens(sys, &g.classes[c].tokens),
        }
    }

    pub fn describe(&self, sys: &ComposedSystem) -> String {
        match self {
            GoalAtom::TransitionFired(t) => format!("fired {}", sys.transition(*t).name),
            GoalAtom::ActionExecuted(l) => format!("event {l}"),
            GoalAtom::PlaceMarked(p) => format!("place {}", sys.places()[*p].name),
            GoalAtom::MarkingReached(m) => format!("marking {m}"),
            GoalAtom::ClassVisited(c) => format!("class {c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalMode {
    ReachAny,
    CoverAll,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    pub atoms: Vec<GoalAtom>,
    pub mode: GoalMode,
}

impl Goal {
    pub fn reach(atom: GoalAtom) -> Self {
        Goal { atoms: vec![atom], mode: GoalMode::ReachAny }
    }

    pub fn describe(&self, sys: &ComposedSystem) -> String {
        let sep = match self.mode {
            GoalMode::ReachAny => " | ",
            GoalMode::CoverAll => " & ",
        };
        self.atoms.iter().map(|a| a.describe(sys)).collect::<Vec<_>>().join(sep)
    }
}

/// Parses `place=NAME` or `event=LABEL` into a reachability goal.
pub fn parse_reach(sys: &ComposedSystem, text: &str) -> Result<Goal, AnalysisError> {
    let unknown = |kind, name: &str| AnalysisError::Unknown { kind, name: name.to_string() };
    let (kind, value) = text.split_once('=').ok_or_else(|| unknown("goal", text))?;
    match kind {
        "place" => Ok(Goal::reach(GoalAtom::PlaceMarked(sys.place_id(value).ok_or_else(|| unknown("place", value))?))),
        "event" => {
            let label = ActionLabel::parse(value).ok_or_else(|| unknown("event", value))?;
            let used = sys.transitions().iter().any(|t| t.label == label);
            if !used {
                return Err(unknown("event", value));
            }
            Ok(Goal::reach(GoalAtom::ActionExecuted(label)))
        }
        "transition" => Ok(Goal::reach(GoalAtom::TransitionFired(
            sys.transition_id(value).ok_or_else(|| unknown("transition", value))?,
        ))),
        _ => Err(unknown("goal kind", kind)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Transitions,
    Statements,
    Places,
    Markings,
    Classes,
}

impl FromStr for Criterion {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transitions" | "transition" => Ok(Criterion::Transitions),
            "statements" | "statement" => Ok(Criterion::Statements),
            "places" | "place" => Ok(Criterion::Places),
            "markings" | "marking" => Ok(Criterion::Markings),
            "classes" | "class" => Ok(Criterion::Classes),
            _ => Err(AnalysisError::Unknown { kind: "criterion", name: s.to_string() }),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Criterion::Transitions => "transitions",
            Criterion::Statements => "statements",
            Criterion::Places => "places",
            Criterion::Markings => "markings",
            Criterion::Classes => "classes",
        };
        f.write_str(s)
    }
}

pub fn goal_from_criterion(sys: &ComposedSystem, criterion: Criterion, g: &ClassGraph) -> Result<Goal, AnalysisError> {
    let atoms = match criterion {
        Criterion::Transitions => sys.sut_transitions().map(GoalAtom::TransitionFired).collect(),
        Criterion::Statements => sys.sut.alphabet().into_iter().map(GoalAtom::ActionExecuted).collect(),
        Criterion::Places => sys.sut_places().map(GoalAtom::PlaceMarked).collect(),
        Criterion::Markings => reachable_markings(sys, g, true)?.into_iter().map(GoalAtom::MarkingReached).collect(),
        Criterion::Classes => {
            g.require_complete()?;
            (0..g.classes.len()).map(GoalAtom::ClassVisited).collect()
        }
    };
    Ok(Goal { atoms, mode: GoalMode::CoverAll })
}

/// Where resets may happen and how long they take.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetInfo {
    /// SUT-projected markings from which a reset is possible; empty means any marking.
    pub markings: Vec<Marking>,
    pub tr: Rat,
}

impl ResetInfo {
    pub fn anywhere(tr: Rat) -> Self {
        ResetInfo { markings: Vec::new(), tr }
    }

    pub fn allows(&self, sys: &ComposedSystem, tokens: &[u32]) -> bool {
        self.markings.is_empty() || self.markings.contains(&sys.sut_marking(tokens))
    }
}

/// Supports separated by resets of duration `reset_tr`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub segments: Vec<Vec<Move>>,
    pub reset_tr: Rat,
}

impl Plan {
    pub fn resets(&self) -> usize {
        self.segments.len().saturating_sub(1)
    }

    pub fn moves(&self) -> impl Iterator<Item = &Move> + '_ {
        self.segments.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub moves: Vec<Move>,
    pub edges: Vec<usize>,
    /// Class where the witness ends.
    pub target: usize,
}

/// Shortest edge path from `from` to the first edge for which `hit(edge)` holds.
fn bfs<F: Fn(usize) -> bool>(g: &ClassGraph, from: usize, hit: F) -> Option<Vec<usize>> {
    let mut parent: Vec<Option<usize>> = vec![None; g.classes.len()];
    let mut seen = vec![false; g.classes.len()];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    let path_to = |parent: &[Option<usize>], mut c: usize, last: usize| {
        let mut edges = vec![last];
        while let Some(e) = parent[c] {
            edges.push(e);
            c = g.edges[e].from;
        }
        edges.reverse();
        edges
    };
    while let Some(c) = queue.pop_front() {
        for &e in &g.out[c] {
            if hit(e) {
                return Some(path_to(&parent, c, e));
            }
            let to = g.edges[e].to;
            if !seen[to] {
                seen[to] = true;
                parent[to] = Some(e);
                queue.push_back(to);
            }
        }
    }
    None
}

fn edge_satisfies(sys: &ComposedSystem, g: &ClassGraph, e: usize, atom: &GoalAtom) -> bool {
    let edge = &g.edges[e];
    atom.on_move(sys, edge.mv) || atom.at_class(sys, g, edge.to)
}

/// Minimum-edge witness for any atom of the goal; `None` when unreachable.
pub fn find_witness(sys: &ComposedSystem, g: &ClassGraph, goal: &Goal) -> Option<Witness> {
    if goal.atoms.iter().any(|a| a.at_class(sys, g, g.initial)) {
        return Some(Witness { moves: Vec::new(), edges: Vec::new(), target: g.initial });
    }
    let edges = bfs(g, g.initial, |e| goal.atoms.iter().any(|a| edge_satisfies(sys, g, e, a)))?;
    let target = g.edges[*edges.last().expect("non-empty path")].to;
    Some(Witness { moves: edges.iter().map(|&e| g.edges[e].mv).collect(), edges, target })
}

/// Greedy plan: repeatedly walk to the nearest edge or class satisfying a pending atom,
/// resetting when nothing pending is reachable.
pub fn find_covering_plan(
    sys: &ComposedSystem,
    g: &ClassGraph,
    goal: &Goal,
    reset: Option<&ResetInfo>,
) -> Result<Plan, AnalysisError> {
    let tr = reset.map(|r| r.tr).unwrap_or_else(Rat::zero);
    if goal.mode == GoalMode::ReachAny {
        return match find_witness(sys, g, goal) {
            Some(w) => Ok(Plan { segments: vec![w.moves], reset_tr: tr }),
            None => Err(AnalysisError::Uncoverable(goal.atoms.iter().map(|a| a.describe(sys)).collect())),
        };
    }
    let mut pending: Vec<bool> = goal.atoms.iter().map(|a| !a.at_class(sys, g, g.initial)).collect();
    let mut segments: Vec<Vec<Move>> = vec![Vec::new()];
    let mut cur = g.initial;
    let stuck = |pending: &[bool]| -> AnalysisError {
        AnalysisError::Uncoverable(
            goal.atoms.iter().zip(pending).filter(|(_, p)| **p).map(|(a, _)| a.describe(sys)).collect(),
        )
    };
    while pending.iter().any(|p| *p) {
        let wanted = |e: usize| goal.atoms.iter().zip(&pending).any(|(a, p)| *p && edge_satisfies(sys, g, e, a));
        let path = match bfs(g, cur, wanted) {
            Some(path) => path,
            None => {
                let Some(reset) = reset else { return Err(stuck(&pending)) };
                if cur == g.initial && segments.last().is_some_and(Vec::is_empty) {
                    return Err(stuck(&pending));
                }
                if !reset.allows(sys, &g.classes[cur].tokens) {
                    let to_reset = bfs(g, cur, |e| reset.allows(sys, &g.classes[g.edges[e].to].tokens))
                        .ok_or_else(|| stuck(&pending))?;
                    segments.last_mut().expect("segment").extend(to_reset.iter().map(|&e| g.edges[e].mv));
                }
                segments.push(Vec::new());
                cur = g.initial;
                for (a, p) in goal.atoms.iter().zip(pending.iter_mut()) {
                    if a.at_class(sys, g, cur) {
                        *p = false;
                    }
                }
                continue;
            }
        };
        for &e in &path {
            for (a, p) in goal.atoms.iter().zip(pending.iter_mut()) {
                if *p && edge_satisfies(sys, g, e, a) {
                    *p = false;
                }
            }
            segments.last_mut().expect("segment").push(g.edges[e].mv);
            cur = g.edges[e].to;
        }
    }
    Ok(Plan { segments, reset_tr: tr })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct SearchNode {
    state: State,
    covered: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
enum SearchStep {
    Delay,
    Fire(Move),
    Reset,
}

fn set_bit(bits: &mut [u64], i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

fn count_bits(bits: &[u64]) -> usize {
    bits.iter().map(|b| b.count_ones() as usize).sum()
}

/// Time-optimal plan over the concrete states on a time grid. Costs are compared as
/// (elapsed time including reset durations, number of moves). Class atoms are not
/// supported since concrete states do not identify classes.
pub fn fastest_plan(
    sys: &ComposedSystem,
    goal: &Goal,
    reset: Option<&ResetInfo>,
    granularity: Option<Rat>,
    limit: usize,
) -> Result<Plan, AnalysisError> {
    if let Some(a) = goal.atoms.iter().find(|a| matches!(a, GoalAtom::ClassVisited(_))) {
        return Err(AnalysisError::Unsupported(a.describe(sys)));
    }
    let grid = granularity.unwrap_or_else(|| sys.default_granularity());
    let tr = reset.map(|r| r.tr).unwrap_or_else(Rat::zero);
    let n_atoms = goal.atoms.len();
    let words = n_atoms.div_ceil(64).max(1);
    let done = |bits: &[u64]| match goal.mode {
        GoalMode::ReachAny => count_bits(bits) > 0,
        GoalMode::CoverAll => count_bits(bits) == n_atoms,
    };
    let mark_tokens = |bits: &mut Vec<u64>, tokens: &[u32]| {
        for (i, a) in goal.atoms.iter().enumerate() {
            if a.at_tokens(sys, tokens) {
                set_bit(bits, i);
            }
        }
    };
    let start_state = initial_state(sys);
    let mut start_bits = vec![0u64; words];
    mark_tokens(&mut start_bits, &start_state.tokens);
    let start = SearchNode { state: start_state.clone(), covered: start_bits };

    let mut nodes: Vec<SearchNode> = vec![start.clone()];
    let mut index: HashMap<SearchNode, usize> = HashMap::from([(start, 0)]);
    let mut cost: Vec<(Rat, u32)> = vec![(Rat::zero(), 0)];
    let mut parent: Vec<Option<(usize, SearchStep)>> = vec![None];
    let mut heap = BinaryHeap::from([Reverse((Rat::zero(), 0u32, 0usize))]);
    let mut found = None;
    while let Some(Reverse((time, steps, i))) = heap.pop() {
        if (time, steps) != cost[i] {
            continue;
        }
        if done(&nodes[i].covered) {
            found = Some(i);
            break;
        }
        let node = nodes[i].clone();
        let mut succ: Vec<(SearchNode, (Rat, u32), SearchStep)> = Vec::new();
        for mv in fireable(sys, &node.state) {
            let next = fire(sys, &node.state, mv).expect("fireable move fires");
            let mut bits = node.covered.clone();
            for (k, a) in goal.atoms.iter().enumerate() {
                if a.on_move(sys, mv) || a.at_tokens(sys, &next.tokens) {
                    set_bit(&mut bits, k);
                }
            }
            succ.push((SearchNode { state: next, covered: bits }, (time, steps + 1), SearchStep::Fire(mv)));
        }
        if max_delay(&node.state).admits(&grid) {
            if let Ok(next) = elapse(sys, &node.state, grid) {
                if next != node.state {
                    succ.push((SearchNode { state: next, covered: node.covered.clone() }, (time + grid, steps), SearchStep::Delay));
                }
            }
        }
        if let Some(r) = reset {
            if r.allows(sys, &node.state.tokens) && node.state != start_state {
                let mut bits = node.covered.clone();
                mark_tokens(&mut bits, &start_state.tokens);
                succ.push((SearchNode { state: start_state.clone(), covered: bits }, (time + r.tr, steps + 1), SearchStep::Reset));
            }
        }
        for (next, c, step) in succ {
            let j = match index.get(&next) {
                Some(&j) => j,
                None => {
                    if nodes.len() >= limit {
                        return Err(AnalysisError::LimitExceeded(limit));
                    }
                    let j = nodes.len();
                    index.insert(next.clone(), j);
                    nodes.push(next);
                    cost.push((c.0 + Rat::from_integer(1), u32::MAX));
                    parent.push(None);
                    j
                }
            };
            if c < cost[j] || parent[j].is_none() && j != 0 && c <= cost[j] {
                cost[j] = c;
                parent[j] = Some((i, step));
                heap.push(Reverse((c.0, c.1, j)));
            }
        }
    }
    let Some(mut i) = found else {
        let pending: Vec<String> = goal.atoms.iter().map(|a| a.describe(sys)).collect();
        return Err(AnalysisError::Uncoverable(pending));
    };
    let mut steps = Vec::new();
    while let Some((p, step)) = parent[i] {
        steps.push(step);
        i = p;
    }
    steps.reverse();
    let mut segments: Vec<Vec<Move>> = vec![Vec::new()];
    for step in steps {
        match step {
            SearchStep::Fire(mv) => segments.last_mut().expect("segment").push(mv),
            SearchStep::Reset => segments.push(Vec::new()),
            SearchStep::Delay => {}
        }
    }
    Ok(Plan { segments, reset_tr: tr })
}

/// A concrete point violating a DIEOU condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DieouWitness {
    pub class: usize,
    /// Clock values of the class variables.
    pub clocks: Vec<Rat>,
    pub state: State,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DieouReport {
    pub deterministic: Option<DieouWitness>,
    pub weak_input_enabled: Option<DieouWitness>,
    pub isolated_outputs: Option<DieouWitness>,
    pub output_urgent: Option<DieouWitness>,
}

impl DieouReport {
    pub fn passes(&self) -> bool {
        self.conditions().iter().all(|(_, w)| w.is_none())
    }

    pub fn conditions(&self) -> [(&'static str, &Option<DieouWitness>); 4] {
        [
            ("deterministic", &self.deterministic),
            ("weak input enabled", &self.weak_input_enabled),
            ("isolated outputs", &self.isolated_outputs),
            ("output urgent", &self.output_urgent),
        ]
    }

    pub fn render(&self, sys: &ComposedSystem) -> String {
        let mut out = String::new();
        for (name, w) in self.conditions() {
            match w {
                None => out.push_str(&format!("{name}: pass\n")),
                Some(w) => out.push_str(&format!(
                    "{name}: FAIL at class {} ({}): {}\n",
                    w.class,
                    w.state.describe(sys),
                    w.detail
                )),
            }
        }
        out
    }
}

fn sample(z: &Dbm) -> Vec<Rat> {
    let mut eps = ratio(1, 1000);
    for _ in 0..32 {
        let p = z.earliest_point(eps);
        if z.contains_point(&p) {
            return p;
        }
        eps /= 2;
    }
    z.earliest_point(eps)
}

fn intersect_all(zones: &[&Dbm]) -> Option<Dbm> {
    let mut acc = zones[0].clone();
    for z in &zones[1..] {
        acc = acc.intersect(z)?;
    }
    Some(acc)
}

/// Checks the four testability conditions on the SUT side, class by class. Firing regions
/// assume an environment that always offers every complementary action.
pub fn check_dieou(sys: &ComposedSystem, g: &ClassGraph) -> Result<DieouReport, AnalysisError> {
    g.require_complete()?;
    let mut report = DieouReport { deterministic: None, weak_input_enabled: None, isolated_outputs: None, output_urgent: None };
    for (ci, c) in g.classes.iter().enumerate() {
        let closure = c.time_closure(sys);
        if closure.is_empty() {
            continue;
        }
        let witness = |z: &Dbm, detail: String| -> DieouWitness {
            let clocks = sample(z);
            let state = c.state_at(sys, &clocks).expect("sample lies within deadlines");
            DieouWitness { class: ci, clocks, state, detail }
        };
        let sut: Vec<usize> = c.vars.iter().copied().filter(|&t| sys.transition(t).side == Side::Sut).collect();
        let mut delay = closure.clone();
        for &t in &sut {
            let (v, iv) = (c.var(t).expect("enabled"), &sys.transition(t).interval);
            if let Some(u) = iv.upper {
                if !delay.and(crate::dbm::Constraint::at_most(v, u, true)) {
                    break;
                }
            }
        }
        let can_delay = !delay.is_empty();
        let regions: Vec<(usize, Option<Dbm>)> = sut
            .iter()
            .map(|&t| (t, fire_region(sys, c, &[t], PartnerAssumption::Universal).into_iter().next()))
            .collect();
        let name = |t: usize| sys.transition(t).name.clone();
        let label = |t: usize| sys.transition(t).label.clone();
        for (a, (t, zt)) in regions.iter().enumerate() {
            let Some(zt) = zt else { continue };
            for (u, zu) in &regions[a + 1..] {
                let Some(zu) = zu else { continue };
                let Some(both) = intersect_all(&[zt, zu]) else { continue };
                if label(*t) == label(*u) && report.deterministic.is_none() {
                    let (_, after_t) = successor_tokens(sys, &c.tokens, &[*t]);
                    let (_, after_u) = successor_tokens(sys, &c.tokens, &[*u]);
                    if sys.sut_marking(&after_t) != sys.sut_marking(&after_u) {
                        report.deterministic = Some(witness(
                            &both,
                            format!("{} and {} both fire {} with different results", name(*t), name(*u), label(*t)),
                        ));
                    }
                }
                if label(*t).is_output()
                    && label(*u).is_output()
                    && label(*t) != label(*u)
                    && report.isolated_outputs.is_none()
                {
                    report.isolated_outputs = Some(witness(
                        &both,
                        format!("outputs {} and {} both possible", label(*t), label(*u)),
                    ));
                }
            }
            if can_delay && !label(*t).is_input() && report.output_urgent.is_none() {
                if let Some(z) = zt.intersect(&delay) {
                    report.output_urgent =
                        Some(witness(&z, format!("{} of {} possible while time may pass", label(*t), name(*t))));
                }
            }
        }
        if can_delay && report.weak_input_enabled.is_none() {
            for input in sys.sut.alphabet().into_iter().filter(ActionLabel::is_input) {
                let mut missing = vec![delay.clone()];
                for (t, zt) in &regions {
                    if label(*t) != input {
                        continue;
                    }
                    if let Some(zt) = zt {
                        let cut = zt.constraints();
                        missing = missing.iter().flat_map(|m| m.subtract(&cut)).collect();
                    }
                }
                if let Some(m) = missing.first() {
                    report.weak_input_enabled = Some(witness(m, format!("input {input} refused while time may pass")));
                    break;
                }
            }
        }
    }
    Ok(report)
}

/// `eta@label` rendering of a plan segment count and resets, for logs.
pub fn describe_plan(sys: &ComposedSystem, plan: &Plan) -> String {
    let segs: Vec<String> = plan
        .segments
        .iter()
        .map(|s| s.iter().map(|m| m.label(sys)).collect::<Vec<_>>().join(" "))
        .collect();
    segs.join(&format!(" | reset {} | ", fmt_rat(&plan.reset_tr)))
}
