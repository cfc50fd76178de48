//! Acceptance criteria, one line each. Exact rational comparisons throughout (tolerance 0).
//! Exits non-zero if any criterion fails.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::time::Instant;

use num_traits::Zero;
use tptest_core::analysis::{check_dieou, goal_from_criterion, DieouReport};
use tptest_core::format::{parse_net, render_sequence, serialize_net};
use tptest_core::harness::{bounded_tioco_check, mutate, run_suite, run_test, Mutation, Outcome, TiocoResult, DEFAULT_TIOCO_LIMIT};
use tptest_core::models;
use tptest_core::scheduler::fastest_schedule;
use tptest_core::semantics::{elapse, fire, initial_state, is_enabled, max_delay, successor_tokens, FiringDomain, Step};
use tptest_core::sscg::{build_sscg, candidate_moves};
use tptest_core::system::universal_environment;
use tptest_core::testgen::{generate, GenerateOptions, Optimize, TestSuite};
use tptest_core::time::{fmt_rat, Bound};
use tptest_core::{compose, rat, ratio, Criterion, Goal, GoalAtom, Limits, Move, Net, Rat, State};

type Outcome_ = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome_ {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reach(sys: &tptest_core::ComposedSystem, place: &str) -> Goal {
    Goal::reach(GoalAtom::PlaceMarked(sys.place_id(place).expect("place")))
}

fn suite(env: &Net, goal: impl Fn(&tptest_core::ComposedSystem) -> Goal, optimize: Optimize) -> Result<TestSuite, String> {
    let sys = compose(&models::controller(), env).map_err(|e| e.to_string())?;
    let options = GenerateOptions { optimize, ..Default::default() };
    generate(&sys, &goal(&sys), &options).map_err(|e| e.to_string())
}

fn single_sequence(s: &TestSuite) -> String {
    s.cases.iter().map(|c| render_sequence(&c.sequence)).collect::<Vec<_>>().join(" | ")
}

fn c1() -> Outcome_ {
    let s = suite(&models::user(0), |sys| reach(sys, "BRIGHT"), Optimize::ShortestThenFastest)?;
    let seq = single_sequence(&s);
    let sys = compose(&models::controller(), &models::user(0)).unwrap();
    let bright = sys.place_id("BRIGHT").unwrap();
    let g = build_sscg(&sys, Limits::default());
    let w = tptest_core::analysis::find_witness(&sys, &g, &Goal::reach(GoalAtom::PlaceMarked(bright))).unwrap();
    let f = fastest_schedule(&sys, &w.moves).map_err(|e| e.to_string())?;
    let times: Vec<Rat> = f.schedule.steps.iter().map(|(t, _)| *t).collect();
    check(
        w.moves.len() == 2 && times == [rat(20), rat(20)] && seq == "20@touch! 20@bright?" && s.total() == rat(20),
        format!(
            "support {} times {} sequence {seq} accumulated {}",
            w.moves.len(),
            times.iter().map(fmt_rat).collect::<Vec<_>>().join(","),
            s.total()
        ),
    )
}

fn c2() -> Outcome_ {
    let s = suite(&models::user(0), |sys| reach(sys, "BRIGHT"), Optimize::Fastest)?;
    let seq = single_sequence(&s);
    check(seq == "0@touch! 0@dim? 0@touch! 0@bright?" && s.total() == rat(0), format!("{seq} accumulated {}", s.total()))
}

fn c3() -> Outcome_ {
    let s = suite(&models::tp2_env(0), |sys| reach(sys, "OBJECTIF"), Optimize::Fastest)?;
    let seq = single_sequence(&s);
    let steps = &s.cases[0].sequence.steps;
    check(
        steps.len() == 6 && steps.iter().all(|(t, _)| t.is_zero()) && seq.ends_with("0@off?") && s.total() == rat(0),
        format!("{seq} accumulated {}", s.total()),
    )
}

/// Total time of the fastest transition-coverage suite, checking that replaying it fires
/// every SUT transition.
fn coverage_total(env: &Net) -> Result<Rat, String> {
    let sys = compose(&models::controller(), env).map_err(|e| e.to_string())?;
    let g = build_sscg(&sys, Limits::default());
    let goal = goal_from_criterion(&sys, Criterion::Transitions, &g).map_err(|e| e.to_string())?;
    let s = generate(&sys, &goal, &GenerateOptions::default()).map_err(|e| e.to_string())?;
    let mut fired = BTreeSet::new();
    for tc in &s.cases {
        let v = run_test(tc, &models::controller()).map_err(|e| e.to_string())?;
        if v.outcome != Outcome::Pass {
            return Err(format!("{} does not pass: {:?}", tc.id, v.reason));
        }
        for (_, mv) in &v.witness.steps {
            for t in mv.fired() {
                if let Some(name) = v_name(&v, t, tc, env) {
                    fired.insert(name);
                }
            }
        }
    }
    let all: BTreeSet<String> = models::controller().transitions.clone();
    if fired != all {
        return Err(format!("replay fired {fired:?}"));
    }
    Ok(s.total())
}

/// Name of SUT transition `t` in the observer composition of `tc`.
fn v_name(_v: &tptest_core::harness::Verdict, t: usize, tc: &tptest_core::TestCase, _env: &Net) -> Option<String> {
    let sys = tptest_core::compose_with(
        &models::controller(),
        &tc.observer,
        tptest_core::ComposeOptions { lenient: true, ..Default::default() },
    )
    .ok()?;
    let info = sys.transition(t);
    (info.side == tptest_core::Side::Sut).then(|| info.name.clone())
}

fn c4() -> Outcome_ {
    let total = coverage_total(&models::user(0))?;
    check(total == rat(28), format!("accumulated {total}, every transition fired on replay"))
}

fn c5() -> Outcome_ {
    let tp1 = single_sequence(&suite(&models::user(2), |sys| reach(sys, "BRIGHT"), Optimize::Fastest)?);
    let tp2 = single_sequence(&suite(&models::tp2_env(2), |sys| reach(sys, "OBJECTIF"), Optimize::Fastest)?);
    let tc2 = coverage_total(&models::user(2))?;
    let tcp = coverage_total(&models::pausing_user())?;
    check(
        tp1 == "0@touch! 0@dim? 2@touch! 2@bright?" && tp2.ends_with("4@off?") && tc2 == rat(32) && tcp == rat(34),
        format!("TP1 {tp1}; TP2 {tp2}; coverage react2 {tc2}; pausing {tcp}"),
    )
}

fn dieou_of(net: &Net) -> Result<DieouReport, String> {
    let sys = compose(net, &universal_environment(net)).map_err(|e| e.to_string())?;
    let g = build_sscg(&sys, Limits::default());
    check_dieou(&sys, &g).map_err(|e| e.to_string())
}

const VIOLATIONS: [(&str, &str); 4] = [
    (
        "deterministic",
        "pl p0 (1)\npl p1\npl p2\ntr t0 : a? [0,w[ p0 -> p1\ntr t1 : a? [0,w[ p0 -> p2\ntr t2 : a? [0,w[ p1 -> p1\ntr t3 : a? [0,w[ p2 -> p2\n",
    ),
    ("weak input enabled", "pl p0 (1)\npl p1\ntr t0 : a? [0,w[ p0 -> p1\ntr t1 : b! [1,1] p1 -> p0\n"),
    (
        "isolated outputs",
        "pl p0 (1)\npl p1\ntr t1 : b! [0,0] p0 -> p1\ntr t2 : c! [0,0] p0 -> p1\ntr t3 : a? [0,w[ p1 -> p0\n",
    ),
    (
        "output urgent",
        "pl p0 (1)\npl p1\ntr t0 : b! [0,2] p0 -> p1\ntr t1 : a? [0,w[ p0 -> p0\ntr t2 : a? [0,w[ p1 -> p1\n",
    ),
];

fn c6() -> Outcome_ {
    let sys = compose(&models::controller(), &models::user(0)).unwrap();
    let g = build_sscg(&sys, Limits::default());
    let reference = check_dieou(&sys, &g).map_err(|e| e.to_string())?;
    if !reference.passes() {
        return Err(format!("controller: {}", reference.render(&sys)));
    }
    let mut notes = Vec::new();
    for (target, text) in VIOLATIONS {
        let net = parse_net(text).map_err(|e| e.to_string())?;
        let r = dieou_of(&net)?;
        let failed: Vec<&str> = r.conditions().iter().filter(|(_, w)| w.is_some()).map(|(n, _)| *n).collect();
        if failed != [target] {
            return Err(format!("net for {target} fails {failed:?}"));
        }
        let w = r.conditions().iter().find_map(|(_, w)| (*w).clone()).unwrap();
        notes.push(format!("{target}@class{}", w.class));
    }
    Ok(format!("controller passes all four; violations: {}", notes.join(", ")))
}

fn c7() -> Outcome_ {
    let sys = compose(&models::controller(), &models::user(0)).unwrap();
    let id = |n: &str| sys.transition_id(n).unwrap();
    let e0 = initial_state(&sys);
    let e1 = elapse(&sys, &e0, ratio(9, 10)).map_err(|e| e.to_string())?;
    let e2 = fire(&sys, &e1, Move::Sync(id("t0"), id("s0"))).map_err(|e| e.to_string())?;
    let e3 = fire(&sys, &e2, Move::Sync(id("t1"), id("s2"))).map_err(|e| e.to_string())?;
    let d1 = FiringDomain::of_state(&e1);
    let d2 = FiringDomain::of_state(&e2);
    let d3 = FiringDomain::of_state(&e3);
    // lower bounds are stored as bounds on -x
    let at_least = |d: &FiringDomain, t: &str, v: Rat| d.interval(id(t)).is_some_and(|(lo, _)| lo == Bound::le(-v));
    let at_most = |d: &FiringDomain, t: &str, v: Rat| d.interval(id(t)).is_some_and(|(_, hi)| hi == Bound::le(v));
    let ok = at_least(&d1, "t8", rat(20) - ratio(9, 10))
        && at_least(&d2, "t1", rat(0))
        && at_most(&d2, "t1", rat(0))
        && at_least(&d3, "t2", rat(4));
    let again = FiringDomain { variables: d3.variables.clone(), bounds: { let mut b = d3.bounds.clone(); b.close(); b } };
    check(
        ok && again == d3,
        format!("D1 {:?}; D2 {:?}; D3 {:?}", d1.describe(&sys), d2.describe(&sys), d3.describe(&sys)),
    )
}

/// Minimum completion time of `support` by exhaustive search on a time grid.
fn oracle(sys: &tptest_core::ComposedSystem, support: &[Move], grid: Rat, horizon: Rat) -> Option<Rat> {
    let mut best: HashMap<(State, usize), Rat> = HashMap::new();
    let start = (initial_state(sys), 0usize);
    best.insert(start.clone(), Rat::zero());
    let mut queue = VecDeque::from([(start, Rat::zero())]);
    let mut answer: Option<Rat> = None;
    while let Some(((s, k), now)) = queue.pop_front() {
        if best.get(&(s.clone(), k)).is_some_and(|b| *b < now) {
            continue;
        }
        if k == support.len() {
            answer = Some(answer.map_or(now, |a: Rat| a.min(now)));
            continue;
        }
        let mut next = Vec::new();
        if let Ok(n) = fire(sys, &s, support[k]) {
            next.push(((n, k + 1), now));
        }
        if now + grid <= horizon && max_delay(&s).admits(&grid) {
            if let Ok(n) = tptest_core::semantics::apply(sys, &s, Step::Delay(grid)) {
                next.push(((n, k), now + grid));
            }
        }
        for (key, t) in next {
            if best.get(&key).is_none_or(|b| t < *b) {
                best.insert(key.clone(), t);
                queue.push_back((key, t));
            }
        }
    }
    answer
}

/// Supports that are feasible for the token game alone, up to `len` moves.
fn token_supports(sys: &tptest_core::ComposedSystem, len: usize) -> Vec<Vec<Move>> {
    let mut out = Vec::new();
    let mut frontier: Vec<(Vec<u32>, Vec<Move>)> = vec![(sys.initial_tokens().clone(), Vec::new())];
    for _ in 0..len {
        let mut next = Vec::new();
        for (tokens, prefix) in &frontier {
            for mv in candidate_moves(sys, tokens) {
                if mv.fired().iter().all(|&t| is_enabled(sys, tokens, t)) {
                    let (_, after) = successor_tokens(sys, tokens, &mv.fired());
                    let mut p = prefix.clone();
                    p.push(mv);
                    out.push(p.clone());
                    next.push((after, p));
                }
            }
        }
        frontier = next;
    }
    out
}

fn c8() -> Outcome_ {
    let start = Instant::now();
    let mut checked = 0;
    let mut feasible = 0;
    for env in [models::user(0), models::tp2_env(0), models::user(2), models::tp2_env(2)] {
        let sys = compose(&models::controller(), &env).unwrap();
        for support in token_supports(&sys, 4) {
            let o = oracle(&sys, &support, ratio(1, 2), rat(40));
            let s = fastest_schedule(&sys, &support).ok();
            checked += 1;
            let agree = match (&s, o) {
                (None, None) => true,
                (Some(f), Some(o)) => !f.unattained && f.infimum_accumulated() == o,
                _ => false,
            };
            if !agree {
                let names: Vec<String> = support.iter().map(|m| m.name(&sys)).collect();
                return Err(format!(
                    "support {} scheduler {:?} oracle {:?}",
                    names.join(" "),
                    s.map(|f| (f.infimum_accumulated(), f.unattained)),
                    o
                ));
            }
            feasible += usize::from(o.is_some());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 60.0, format!("{checked} supports ({feasible} feasible) agree; oracle time {secs:.1}s"))
}

fn c9() -> Outcome_ {
    // The property suites live in their own targets; here only the round-trip and
    // self-consistency checks that are cheap to repeat.
    for (name, text) in models::ALL {
        let net = parse_net(text).map_err(|e| format!("{name}: {e}"))?;
        if parse_net(&serialize_net(&net)).map_err(|e| e.to_string())? != net {
            return Err(format!("{name} does not round-trip"));
        }
    }
    for env in [models::user(0), models::user(2), models::pausing_user()] {
        let sys = compose(&models::controller(), &env).unwrap();
        let g = build_sscg(&sys, Limits::default());
        for criterion in [Criterion::Transitions, Criterion::Statements, Criterion::Places, Criterion::Markings] {
            let goal = goal_from_criterion(&sys, criterion, &g).map_err(|e| e.to_string())?;
            for optimize in [Optimize::Fastest, Optimize::ShortestThenFastest] {
                let options = GenerateOptions { optimize, ..Default::default() };
                let s = tptest_core::testgen::generate_with_graph(&sys, &goal, &options, &g).map_err(|e| e.to_string())?;
                for (id, v) in run_suite(&s, &models::controller()).map_err(|e| e.to_string())? {
                    if v.outcome != Outcome::Pass {
                        return Err(format!("{criterion} {optimize:?} {id}: {:?}", v.reason));
                    }
                }
            }
        }
    }
    Ok("bundled nets round-trip; generated suites pass on their own spec (property targets run separately)".into())
}

fn statement_suites() -> Vec<TestSuite> {
    let mut out = Vec::new();
    for env in [models::user(0), models::user(2), models::pausing_user()] {
        let sys = compose(&models::controller(), &env).unwrap();
        let g = build_sscg(&sys, Limits::default());
        let goal = goal_from_criterion(&sys, Criterion::Statements, &g).unwrap();
        for optimize in [Optimize::Fastest, Optimize::ShortestThenFastest] {
            let options = GenerateOptions { optimize, ..Default::default() };
            out.push(tptest_core::testgen::generate_with_graph(&sys, &goal, &options, &g).unwrap());
        }
    }
    out
}

fn c10() -> Outcome_ {
    let reference = models::controller();
    let suites = statement_suites();
    let mut notes = Vec::new();
    let mut survivors = Vec::new();
    for text in ["shift:t2:-1:0", "flip:t0:t8", "swap:t1:t7", "drop:t1:p4"] {
        let m: Mutation = text.parse().map_err(|e: tptest_core::harness::HarnessError| e.to_string())?;
        let mutant = mutate(&reference, &m).map_err(|e| e.to_string())?;
        let killed = suites.iter().flat_map(|s| &s.cases).any(|tc| {
            run_test(tc, &mutant).map(|v| v.outcome == Outcome::Fail).unwrap_or(false)
        });
        if killed {
            notes.push(format!("{text} killed"));
            continue;
        }
        match bounded_tioco_check(&reference, &mutant, rat(40), None, DEFAULT_TIOCO_LIMIT) {
            Ok(TiocoResult::Consistent) => notes.push(format!("{text} equivalent up to 40")),
            Ok(TiocoResult::Counterexample(trace)) => survivors.push(format!("{text} unkilled, differs: {trace}")),
            Err(e) => survivors.push(format!("{text} unkilled, check failed: {e}")),
        }
    }
    // Not part of the verdict: the opposite shift of the same window is caught.
    let wider = mutate(&reference, &"shift:t2:1:0".parse().unwrap()).map_err(|e| e.to_string())?;
    let wider_killed = suites
        .iter()
        .flat_map(|s| &s.cases)
        .any(|tc| run_test(tc, &wider).is_ok_and(|v| v.outcome == Outcome::Fail));
    notes.push(format!("(shift:t2:1:0 killed: {wider_killed})"));
    if survivors.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!("{}; {}", notes.join("; "), survivors.join("; ")))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome_); 10] = [
        ("1 TP1 shortest-then-fastest", c1),
        ("2 TP1 fastest", c2),
        ("3 TP2 fastest", c3),
        ("4 transition coverage react 0", c4),
        ("5 environment sensitivity", c5),
        ("6 DIEOU checker", c6),
        ("7 semantics replay domains", c7),
        ("8 scheduler vs grid oracle", c8),
        ("9 property checks", c9),
        ("10 mutation smoke test", c10),
    ];
    let mut failed = 0;
    let mut seen = HashSet::new();
    for (name, f) in criteria {
        assert!(seen.insert(name));
        let t = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
