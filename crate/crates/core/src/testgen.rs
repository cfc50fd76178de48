//! Test sequences, observer nets and suites.
//!
//! A test sequence is the environment projection of a schedule. Its observer net drives
//! the stimuli at their instants, accepts each expected output inside its window, and
//! sends every other behavior to a `Fail` place.

use num_traits::Zero;
use thiserror::Error;

use crate::analysis::{fastest_plan, find_covering_plan, AnalysisError, Goal, GoalAtom, Plan, ResetInfo, DEFAULT_SEARCH_LIMIT};
use crate::net::{ActionLabel, Net};
use crate::scheduler::{fastest_schedule, ScheduleError};
use crate::semantics::{Move, Schedule};
use crate::sscg::{build_sscg, ClassGraph, Limits};
use crate::system::ComposedSystem;
use crate::time::{fmt_rat, Rat, TimeInterval};

pub const PASS: &str = "Pass";
pub const FAIL: &str = "Fail";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TestgenError {
    #[error("empty test sequence")]
    EmptySequence,
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Environment actions at absolute instants.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TestSequence {
    pub steps: Vec<(Rat, ActionLabel)>,
}

impl TestSequence {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }
}

/// Keeps the environment side of every synchronization with its instant.
pub fn project_env(sys: &ComposedSystem, schedule: &Schedule) -> TestSequence {
    let steps = schedule
        .steps
        .iter()
        .filter_map(|(eta, mv)| match *mv {
            Move::Sync(_, env) => Some((*eta, sys.transition(env).label.clone())),
            Move::Internal(_) => None,
        })
        .collect();
    TestSequence { steps }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObserverOptions {
    /// Extra time granted after an observation window before the timeout fires.
    pub timeout_slack: Rat,
    /// Half-width of each observation window.
    pub window: Rat,
}

impl Default for ObserverOptions {
    fn default() -> Self {
        ObserverOptions { timeout_slack: Rat::zero(), window: Rat::zero() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub id: String,
    pub goal: String,
    pub sequence: TestSequence,
    pub observer: Net,
    pub pass: String,
    pub fail: String,
    /// Time of the last scheduled move of the segment, internal moves included.
    pub accumulated: Rat,
    /// Reset duration paid before this case runs.
    pub reset_before: Option<Rat>,
    pub options: ObserverOptions,
    /// SUT output labels the observer watches for.
    pub outputs: Vec<ActionLabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TestSuite {
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    /// Case times plus reset durations.
    pub fn total(&self) -> Rat {
        self.cases.iter().map(|c| c.accumulated + c.reset_before.unwrap_or_else(Rat::zero)).sum()
    }
}

/// Builds the observer for `seq`. `outputs` are the SUT output labels; any of them seen
/// outside an expected window leads to `Fail`.
pub fn build_test_case(
    seq: &TestSequence,
    outputs: &[ActionLabel],
    options: ObserverOptions,
) -> Result<TestCase, TestgenError> {
    if seq.is_empty() {
        return Err(TestgenError::EmptySequence);
    }
    let n = seq.len();
    let mut net = Net::new("observer");
    let chain: Vec<String> = (0..n).map(|i| format!("o{i}")).collect();
    for (i, p) in chain.iter().enumerate() {
        net.add_place(p, u32::from(i == 0));
    }
    net.add_place(PASS, 0).add_place(FAIL, 0);
    let zero = Rat::zero();
    let w = options.window;
    let mut prev = zero;
    for (i, (eta, label)) in seq.steps.iter().enumerate() {
        let here = chain[i].as_str();
        let next = chain.get(i + 1).map_or(PASS, String::as_str);
        let d = eta - prev;
        prev = *eta;
        let on = [(here, 1)];
        if label.is_output() {
            let (s, r) = (format!("s{i}"), format!("r{i}"));
            net.add_transition(&s, label.clone(), TimeInterval::point(d), &on, &[(next, 1)]);
            net.add_transition(&r, ActionLabel::tau(), TimeInterval::point(d), &on, &[(FAIL, 1)]);
            net.add_priority(&r, &s);
            for (k, out) in outputs.iter().enumerate() {
                let c = out.complement().expect("observable output");
                net.add_transition(&format!("x{i}_{k}"), c, TimeInterval::at_least(zero), &on, &[(FAIL, 1)]);
            }
        } else {
            let lo = if d > w { d - w } else { zero };
            let hi = d + w;
            let e = format!("e{i}");
            let to = format!("to{i}");
            net.add_transition(&e, label.clone(), TimeInterval::closed(lo, hi), &on, &[(next, 1)]);
            net.add_transition(&to, ActionLabel::tau(), TimeInterval::point(hi + options.timeout_slack), &on, &[(FAIL, 1)]);
            net.add_priority(&to, &e);
            for (k, out) in outputs.iter().enumerate() {
                let c = out.complement().expect("observable output");
                let x = format!("x{i}_{k}");
                net.add_transition(&x, c.clone(), TimeInterval::at_least(zero), &on, &[(FAIL, 1)]);
                if c == *label {
                    // inside the window the expected observation wins
                    net.add_priority(&x, &e);
                }
            }
        }
    }
    Ok(TestCase {
        id: String::new(),
        goal: String::new(),
        sequence: seq.clone(),
        observer: net,
        pass: PASS.to_string(),
        fail: FAIL.to_string(),
        accumulated: seq.steps.last().map(|(eta, _)| *eta).unwrap_or(zero),
        reset_before: None,
        options,
        outputs: outputs.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimize {
    /// Minimum total time over all plans.
    Fastest,
    /// Fewest moves first, then the fastest schedule of that support.
    ShortestThenFastest,
}

impl std::str::FromStr for Optimize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fastest" => Ok(Optimize::Fastest),
            "shortest-then-fastest" | "shortest" => Ok(Optimize::ShortestThenFastest),
            _ => Err(format!("unknown optimization {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerateOptions {
    pub optimize: Optimize,
    pub reset: Option<ResetInfo>,
    pub observer: ObserverOptions,
    pub limits: Limits,
    pub search_limit: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            optimize: Optimize::Fastest,
            reset: None,
            observer: ObserverOptions::default(),
            limits: Limits::from_env(),
            search_limit: DEFAULT_SEARCH_LIMIT,
        }
    }
}

/// SUT output labels of the system, in order.
pub fn sut_outputs(sys: &ComposedSystem) -> Vec<ActionLabel> {
    sys.sut.alphabet().into_iter().filter(ActionLabel::is_output).collect()
}

/// Plans, schedules and wraps every segment of a goal into test cases.
pub fn generate(sys: &ComposedSystem, goal: &Goal, options: &GenerateOptions) -> Result<TestSuite, TestgenError> {
    let plan = plan_for(sys, goal, options, None)?;
    suite_from_plan(sys, goal, &plan, options)
}

/// Same as [`generate`], reusing an already built class graph.
pub fn generate_with_graph(
    sys: &ComposedSystem,
    goal: &Goal,
    options: &GenerateOptions,
    g: &ClassGraph,
) -> Result<TestSuite, TestgenError> {
    let plan = plan_for(sys, goal, options, Some(g))?;
    suite_from_plan(sys, goal, &plan, options)
}

fn plan_for(
    sys: &ComposedSystem,
    goal: &Goal,
    options: &GenerateOptions,
    g: Option<&ClassGraph>,
) -> Result<Plan, TestgenError> {
    let needs_graph = options.optimize == Optimize::ShortestThenFastest
        || goal.atoms.iter().any(|a| matches!(a, GoalAtom::ClassVisited(_)));
    if !needs_graph {
        return Ok(fastest_plan(sys, goal, options.reset.as_ref(), None, options.search_limit)?);
    }
    let owned;
    let g = match g {
        Some(g) => g,
        None => {
            owned = build_sscg(sys, options.limits);
            &owned
        }
    };
    if g.truncated && goal.atoms.iter().any(|a| matches!(a, GoalAtom::ClassVisited(_))) {
        g.require_complete().map_err(AnalysisError::from)?;
    }
    Ok(find_covering_plan(sys, g, goal, options.reset.as_ref())?)
}

fn suite_from_plan(
    sys: &ComposedSystem,
    goal: &Goal,
    plan: &Plan,
    options: &GenerateOptions,
) -> Result<TestSuite, TestgenError> {
    let outputs = sut_outputs(sys);
    let description = goal.describe(sys);
    let mut cases = Vec::new();
    for (i, segment) in plan.segments.iter().enumerate() {
        let fastest = fastest_schedule(sys, segment)?;
        let seq = project_env(sys, &fastest.schedule);
        let mut tc = build_test_case(&seq, &outputs, options.observer)?;
        tc.id = format!("tc{i}");
        tc.goal = description.clone();
        tc.accumulated = fastest.accumulated();
        tc.reset_before = (i > 0).then_some(plan.reset_tr);
        cases.push(tc);
    }
    Ok(TestSuite { cases })
}

/// One line per case: id, accumulated time and the sequence.
pub fn describe_suite(suite: &TestSuite) -> String {
    let mut out = String::new();
    for tc in &suite.cases {
        if let Some(tr) = tc.reset_before {
            out.push_str(&format!("reset {}\n", fmt_rat(&tr)));
        }
        out.push_str(&format!(
            "{} [{}] {}\n",
            tc.id,
            fmt_rat(&tc.accumulated),
            crate::format::render_sequence(&tc.sequence)
        ));
    }
    out.push_str(&format!("total {}\n", fmt_rat(&suite.total())));
    out
}
