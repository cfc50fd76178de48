//! Parallel composition of an SUT net with an environment net.
//!
//! The two nets keep disjoint places; they interact only through synchronizing pairs of
//! complementary observable transitions. Composition compiles both nets into one dense
//! index space (SUT identifiers first, each side in declaration order) that the
//! semantics, class graph and scheduler all share.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::net::{validation_errors, ActionLabel, Diagnostic, Marking, Net};
use crate::time::{Rat, TimeInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Sut,
    Env,
}

/// How deep the "no higher-priority transition is fireable" check looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorityMode {
    /// A higher-priority transition preempts only if it could itself be discharged now:
    /// `0` in its interval and, for a synchronizing transition, some enabled partner with
    /// `0` in its interval.
    #[default]
    Dischargeable,
    /// Literal reading: `0` in the higher-priority transition's interval suffices.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComposeOptions {
    /// Admit internal transitions on the environment side.
    pub lenient: bool,
    pub priority: PriorityMode,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComposeError {
    #[error("environment transition {transition} uses label {label} unknown to the SUT")]
    UnmatchedLabel { transition: String, label: String },
    #[error("environment transition {transition} is internal (strict mode)")]
    SideConflict { transition: String },
    #[error("invalid {side} net: {diagnostics:?}")]
    InvalidNet { side: &'static str, diagnostics: Vec<Diagnostic> },
}

#[derive(Debug, Clone)]
pub struct PlaceInfo {
    pub name: String,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct TransitionInfo {
    pub name: String,
    pub side: Side,
    pub label: ActionLabel,
    pub interval: TimeInterval,
    pub pre: Vec<(usize, u32)>,
    pub post: Vec<(usize, u32)>,
}

impl TransitionInfo {
    pub fn is_internal(&self) -> bool {
        self.label.is_internal()
    }
}

/// Token vector over the composed place index space.
pub type Tokens = Vec<u32>;

#[derive(Debug, Clone)]
pub struct ComposedSystem {
    pub sut: Net,
    pub env: Net,
    pub options: ComposeOptions,
    places: Vec<PlaceInfo>,
    transitions: Vec<TransitionInfo>,
    m0: Tokens,
    /// `preemptors[t]`: every `k` with `t < k` in the closed priority relation.
    preemptors: Vec<Vec<usize>>,
    /// `partners[t]`: complementary transitions on the other side.
    partners: Vec<Vec<usize>>,
    place_index: HashMap<String, usize>,
    transition_index: HashMap<String, usize>,
}

/// `M_SUT || M_E` in strict mode with the default priority check.
pub fn compose(sut: &Net, env: &Net) -> Result<ComposedSystem, ComposeError> {
    compose_with(sut, env, ComposeOptions::default())
}

pub fn compose_with(sut: &Net, env: &Net, options: ComposeOptions) -> Result<ComposedSystem, ComposeError> {
    let errors = validation_errors(sut);
    if !errors.is_empty() {
        return Err(ComposeError::InvalidNet { side: "SUT", diagnostics: errors });
    }
    let env = rename_apart(sut, env);
    let errors = validation_errors(&env);
    if !errors.is_empty() {
        return Err(ComposeError::InvalidNet { side: "environment", diagnostics: errors });
    }
    let sut_alphabet = sut.alphabet();
    for t in &env.transitions {
        let label = &env.labels[t];
        if label.is_internal() {
            if !options.lenient {
                return Err(ComposeError::SideConflict { transition: t.clone() });
            }
            continue;
        }
        let wanted = label.complement().expect("observable");
        if !sut_alphabet.contains(&wanted) {
            return Err(ComposeError::UnmatchedLabel { transition: t.clone(), label: label.to_string() });
        }
    }
    Ok(ComposedSystem::build(sut.clone(), env, options))
}

/// Renames environment identifiers that clash with SUT identifiers to `env.<id>`.
fn rename_apart(sut: &Net, env: &Net) -> Net {
    let taken = sut.identifiers();
    let clashes: BTreeSet<String> = env.identifiers().intersection(&taken).cloned().collect();
    if clashes.is_empty() {
        return env.clone();
    }
    let all: BTreeSet<String> = taken.union(&env.identifiers()).cloned().collect();
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for id in &clashes {
        let mut candidate = format!("env.{id}");
        while all.contains(&candidate) {
            candidate = format!("env.{candidate}");
        }
        map.insert(id.clone(), candidate);
    }
    let r = |id: &String| map.get(id).cloned().unwrap_or_else(|| id.clone());
    let rmap = |m: &BTreeMap<String, u32>| m.iter().map(|(k, v)| (r(k), *v)).collect::<BTreeMap<_, _>>();
    Net {
        name: env.name.clone(),
        places: env.places.iter().map(r).collect(),
        transitions: env.transitions.iter().map(r).collect(),
        pre: env.pre.iter().map(|(t, m)| (r(t), rmap(m))).collect(),
        post: env.post.iter().map(|(t, m)| (r(t), rmap(m))).collect(),
        m0: rmap(&env.m0),
        intervals: env.intervals.iter().map(|(t, i)| (r(t), i.clone())).collect(),
        prio: env.prio.iter().map(|(a, b)| (r(a), r(b))).collect(),
        labels: env.labels.iter().map(|(t, l)| (r(t), l.clone())).collect(),
    }
}

impl ComposedSystem {
    fn build(sut: Net, env: Net, options: ComposeOptions) -> Self {
        let mut places = Vec::new();
        let mut place_index = HashMap::new();
        for (side, net) in [(Side::Sut, &sut), (Side::Env, &env)] {
            for p in &net.places {
                place_index.insert(p.clone(), places.len());
                places.push(PlaceInfo { name: p.clone(), side });
            }
        }
        let mut transitions = Vec::new();
        let mut transition_index = HashMap::new();
        for (side, net) in [(Side::Sut, &sut), (Side::Env, &env)] {
            for t in &net.transitions {
                let arcs = |m: Option<&BTreeMap<String, u32>>| -> Vec<(usize, u32)> {
                    m.into_iter().flatten().filter(|(_, w)| **w > 0).map(|(p, w)| (place_index[p], *w)).collect()
                };
                transition_index.insert(t.clone(), transitions.len());
                transitions.push(TransitionInfo {
                    name: t.clone(),
                    side,
                    label: net.labels[t].clone(),
                    interval: net.intervals[t].clone(),
                    pre: arcs(net.pre.get(t)),
                    post: arcs(net.post.get(t)),
                });
            }
        }
        let mut m0 = vec![0; places.len()];
        for net in [&sut, &env] {
            for (p, n) in &net.m0 {
                m0[place_index[p]] += n;
            }
        }
        let mut preemptors = vec![Vec::new(); transitions.len()];
        for net in [&sut, &env] {
            for (low, high) in net.priority_closure() {
                if low != high {
                    preemptors[transition_index[&low]].push(transition_index[&high]);
                }
            }
        }
        for p in &mut preemptors {
            p.sort_unstable();
            p.dedup();
        }
        let mut partners = vec![Vec::new(); transitions.len()];
        for (i, a) in transitions.iter().enumerate() {
            for (j, b) in transitions.iter().enumerate() {
                if a.side != b.side && a.label.complements(&b.label) {
                    partners[i].push(j);
                }
            }
        }
        ComposedSystem {
            sut,
            env,
            options,
            places,
            transitions,
            m0,
            preemptors,
            partners,
            place_index,
            transition_index,
        }
    }

    pub fn places(&self) -> &[PlaceInfo] {
        &self.places
    }

    pub fn transitions(&self) -> &[TransitionInfo] {
        &self.transitions
    }

    pub fn transition(&self, t: usize) -> &TransitionInfo {
        &self.transitions[t]
    }

    pub fn place_id(&self, name: &str) -> Option<usize> {
        self.place_index.get(name).copied()
    }

    pub fn transition_id(&self, name: &str) -> Option<usize> {
        self.transition_index.get(name).copied()
    }

    pub fn initial_tokens(&self) -> &Tokens {
        &self.m0
    }

    pub fn preemptors(&self, t: usize) -> &[usize] {
        &self.preemptors[t]
    }

    pub fn partners(&self, t: usize) -> &[usize] {
        &self.partners[t]
    }

    /// Synchronizing pairs `(SUT transition, ENV transition)` in index order.
    pub fn sync_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, info) in self.transitions.iter().enumerate() {
            if info.side == Side::Sut {
                for &p in &self.partners[t] {
                    out.push((t, p));
                }
            }
        }
        out
    }

    pub fn sut_transitions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.transitions.len()).filter(|t| self.transitions[*t].side == Side::Sut)
    }

    pub fn sut_places(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.places.len()).filter(|p| self.places[*p].side == Side::Sut)
    }

    /// Internal transitions that may fire alone: SUT-side, or any side in lenient mode.
    pub fn is_solo(&self, t: usize) -> bool {
        let info = &self.transitions[t];
        info.is_internal() && (info.side == Side::Sut || self.options.lenient)
    }

    pub fn to_marking(&self, tokens: &[u32]) -> Marking {
        tokens
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(p, n)| (self.places[p].name.as_str(), *n))
            .collect()
    }

    /// Named marking restricted to SUT places.
    pub fn sut_marking(&self, tokens: &[u32]) -> Marking {
        tokens
            .iter()
            .enumerate()
            .filter(|(p, n)| **n > 0 && self.places[*p].side == Side::Sut)
            .map(|(p, n)| (self.places[p].name.as_str(), *n))
            .collect()
    }

    /// Token vector of a named marking; `None` if a place is unknown.
    pub fn tokens_of(&self, marking: &Marking) -> Option<Tokens> {
        let mut out = vec![0; self.places.len()];
        for (p, n) in marking.iter() {
            out[self.place_id(p)?] = *n;
        }
        Some(out)
    }

    /// All finite interval constants, used to pick discretization grids.
    pub fn constants(&self) -> Vec<Rat> {
        let mut out = Vec::new();
        for t in &self.transitions {
            out.push(t.interval.lower);
            if let Some(u) = t.interval.upper {
                out.push(u);
            }
        }
        out
    }

    pub fn max_constant(&self) -> Rat {
        self.constants().into_iter().max().unwrap_or_default()
    }

    /// Default grid: one over the lcm of all bound denominators, halved once.
    pub fn default_granularity(&self) -> Rat {
        let lcm = crate::time::lcm_denominators(self.constants().iter());
        Rat::new(1, 2 * lcm)
    }

    pub fn with_options(&self, options: ComposeOptions) -> ComposedSystem {
        ComposedSystem::build(self.sut.clone(), self.env.clone(), options)
    }
}

impl fmt::Display for ComposedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system {} || {}", self.sut.name, self.env.name)?;
        for (t, e) in self.sync_pairs() {
            writeln!(
                f,
                "  sync {} / {} ({},{})",
                self.transitions[t].name, self.transitions[e].name, self.transitions[t].label, self.transitions[e].label
            )?;
        }
        Ok(())
    }
}

/// An environment that offers every complementary action of `net` at any time: one
/// place with a `[0,w[` self-loop per observable label.
pub fn universal_environment(net: &Net) -> Net {
    let mut env = Net::new("universal");
    let ids = net.identifiers();
    let fresh = |base: String| -> String {
        let mut id = base;
        while ids.contains(&id) {
            id = format!("u_{id}");
        }
        id
    };
    let place = fresh("u".to_string());
    env.add_place(&place, 1);
    for (i, label) in net.alphabet().iter().enumerate() {
        let name = fresh(format!("u{i}"));
        let co = label.complement().expect("observable");
        env.add_transition(&name, co, TimeInterval::at_least(Rat::from_integer(0)), &[(&place, 1)], &[(&place, 1)]);
    }
    env
}
