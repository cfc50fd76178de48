//! Randomized invariants over the bundled controller and generated nets.

use std::collections::BTreeSet;

use proptest::prelude::*;
use tptest_core::analysis::{Goal, GoalAtom};
use tptest_core::dbm::{Constraint, Dbm};
use tptest_core::format::{parse_net, serialize_net};
use tptest_core::harness::{run_suite, Outcome};
use tptest_core::models;
use tptest_core::scheduler::{fastest_schedule, verify_schedule};
use tptest_core::semantics::{elapse, fire, fireable, initial_state, max_delay, newly_enabled, Move, Schedule, State};
use tptest_core::sscg::build_sscg;
use tptest_core::testgen::{generate, GenerateOptions, Optimize};
use tptest_core::time::Bound;
use tptest_core::{compose, rat, ratio, ActionLabel, ComposedSystem, Limits, Net, Rat, TimeInterval};

fn system(env: usize) -> ComposedSystem {
    let env = match env % 5 {
        0 => models::user(0),
        1 => models::user(2),
        2 => models::pausing_user(),
        3 => models::tp2_env(0),
        _ => models::tp2_env(2),
    };
    compose(&models::controller(), &env).unwrap()
}

fn delays() -> Vec<Rat> {
    vec![rat(0), ratio(1, 2), rat(1), ratio(3, 2), rat(2), ratio(7, 3), rat(4), rat(6), ratio(41, 2), rat(20)]
}

/// A random run: concrete states, per-transition clocks, and the schedule of fired moves.
struct Walk {
    states: Vec<State>,
    clocks: Vec<Vec<Rat>>,
    /// Move leading to each state after the first; `None` for delays.
    events: Vec<Option<Move>>,
    schedule: Schedule,
    time: Rat,
}

fn walk(sys: &ComposedSystem, choices: &[(u8, u8)]) -> Walk {
    let ds = delays();
    let mut state = initial_state(sys);
    let mut clocks = vec![rat(0); sys.transitions().len()];
    let mut now = rat(0);
    let mut out = Walk { states: vec![state.clone()], clocks: vec![clocks.clone()], events: Vec::new(), schedule: Schedule::default(), time: now };
    for &(pick, delay) in choices {
        let moves = fireable(sys, &state);
        if pick % 2 == 0 && !moves.is_empty() {
            let mv = moves[(pick as usize / 2) % moves.len()];
            let next = fire(sys, &state, mv).unwrap();
            for (t, c) in clocks.iter_mut().enumerate() {
                if next.intervals[t].is_some() && newly_enabled(sys, t, &state.tokens, &mv.fired()) {
                    *c = rat(0);
                }
            }
            state = next;
            out.schedule.steps.push((now, mv));
            out.events.push(Some(mv));
        } else {
            let mut d = ds[delay as usize % ds.len()];
            let cap = max_delay(&state);
            if !cap.admits(&d) {
                match cap {
                    Bound::Finite { value, strict: false } => d = value,
                    _ => continue,
                }
            }
            state = elapse(sys, &state, d).unwrap();
            for c in &mut clocks {
                *c += d;
            }
            now += d;
            out.events.push(None);
        }
        out.states.push(state.clone());
        out.clocks.push(clocks.clone());
    }
    out.time = now;
    out
}

fn steps(len: usize) -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((any::<u8>(), any::<u8>()), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // 48 walks of 15 steps: 768 states.
    #[test]
    fn tts_axioms(env in 0usize..5, choices in steps(15), a in 0usize..10, b in 0usize..10) {
        let sys = system(env);
        let (d1, d2) = (delays()[a], delays()[b]);
        for e in walk(&sys, &choices).states {
            prop_assert_eq!(elapse(&sys, &e, rat(0)).unwrap(), e.clone());
            let whole = elapse(&sys, &e, d1 + d2);
            prop_assert_eq!(whole.is_ok(), max_delay(&e).admits(&(d1 + d2)));
            if let Ok(whole) = whole {
                // continuity: every intermediate delay is admissible
                let first = elapse(&sys, &e, d1).unwrap();
                let split = elapse(&sys, &first, d2).unwrap();
                prop_assert_eq!(&split, &whole);
                prop_assert_eq!(elapse(&sys, &e, d1 + d2).unwrap(), whole);
            }
        }
    }

    #[test]
    fn sscg_covers_random_runs(env in 0usize..5, choices in steps(20)) {
        let sys = system(env);
        let g = build_sscg(&sys, Limits::default());
        prop_assert!(!g.truncated);
        let w = walk(&sys, &choices);
        let member = |c: usize, state: &State, clocks: &[Rat]| {
            let class = &g.classes[c];
            let point: Vec<Rat> = class.vars.iter().map(|&t| clocks[t]).collect();
            class.tokens == state.tokens
                && class.time_closure(&sys).contains_point(&point)
                && class.state_at(&sys, &point).as_ref() == Some(state)
        };
        let mut current: BTreeSet<usize> = BTreeSet::from([g.initial]);
        current.retain(|&c| member(c, &w.states[0], &w.clocks[0]));
        prop_assert!(!current.is_empty());
        for (k, event) in w.events.iter().enumerate() {
            let (state, clocks) = (&w.states[k + 1], &w.clocks[k + 1]);
            if let Some(mv) = event {
                current = current.iter().flat_map(|&c| g.successors(c)).filter(|e| e.mv == *mv).map(|e| e.to).collect();
            }
            current.retain(|&c| member(c, state, clocks));
            prop_assert!(!current.is_empty(), "no class contains {}", state.describe(&sys));
        }
    }

    #[test]
    fn fastest_schedule_beats_random_runs(env in 0usize..5, choices in steps(12)) {
        let sys = system(env);
        let w = walk(&sys, &choices);
        let support: Vec<Move> = w.schedule.support();
        prop_assert!(verify_schedule(&sys, &w.schedule));
        let f = fastest_schedule(&sys, &support).unwrap();
        prop_assert!(f.infimum_accumulated() <= w.schedule.accumulated());
        prop_assert!(verify_schedule(&sys, &f.schedule));
        prop_assert_eq!(f.schedule.support(), support);
    }

    #[test]
    fn closure_is_idempotent(vars in 1usize..5, cs in prop::collection::vec((0usize..5, 0usize..5, -8i64..8, any::<bool>()), 0..10)) {
        let mut raw = Dbm::nonnegative(vars);
        let mut inc = Dbm::nonnegative(vars);
        let mut alive = true;
        for (i, j, v, strict) in cs {
            let (i, j) = (i % (vars + 1), j % (vars + 1));
            if i == j {
                continue;
            }
            let c = Constraint::new(i, j, Bound::finite(ratio(v, 2), strict));
            raw.constrain(c);
            alive = inc.and(c) && alive;
        }
        let mut once = raw.clone();
        let nonempty = once.close();
        prop_assert_eq!(nonempty, alive);
        if nonempty {
            let mut twice = once.clone();
            twice.close();
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(&inc, &once);
        }
    }

    #[test]
    fn generated_tests_pass_on_their_spec(env in 0usize..5, target in 0usize..16, shortest in any::<bool>()) {
        let sys = system(env);
        let places: Vec<usize> = sys.sut_places().collect();
        let labels: Vec<ActionLabel> = sys.sut.alphabet().into_iter().collect();
        let goal = if target < places.len() {
            Goal::reach(GoalAtom::PlaceMarked(places[target]))
        } else {
            Goal::reach(GoalAtom::ActionExecuted(labels[target % labels.len()].clone()))
        };
        let optimize = if shortest { Optimize::ShortestThenFastest } else { Optimize::Fastest };
        let options = GenerateOptions { optimize, ..Default::default() };
        // initially marked places give an empty sequence
        if let Ok(suite) = generate(&sys, &goal, &options) {
            for (id, v) in run_suite(&suite, &models::controller()).unwrap() {
                prop_assert_eq!(v.outcome, Outcome::Pass, "{} {:?}", id, v.reason);
            }
        }
    }

    #[test]
    fn random_nets_round_trip(net in arb_net()) {
        let text = serialize_net(&net);
        let back = parse_net(&text).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(serialize_net(&back), text);
    }
}

fn arb_interval() -> impl Strategy<Value = TimeInterval> {
    (0i64..12, 1i64..3, any::<bool>(), prop::option::of(0i64..12), any::<bool>()).prop_filter_map(
        "valid interval",
        |(lo, den, ls, hi, us)| {
            let lower = ratio(lo, den);
            let upper = hi.map(|h| lower + ratio(h, den));
            TimeInterval::new(lower, ls, upper, us).ok()
        },
    )
}

fn arb_net() -> impl Strategy<Value = Net> {
    let labels = ["a?", "b?", "c!", "d!", "tau"];
    (1usize..5, prop::collection::vec((0usize..5, arb_interval(), 0usize..5, 0usize..5, 1u32..3), 1..6), prop::collection::vec(0u32..3, 5), any::<bool>())
        .prop_map(move |(np, ts, m0, prio)| {
            let mut net = Net::new("random");
            for p in 0..np {
                net.add_place(&format!("p{p}"), m0[p]);
            }
            for (k, (label, iv, pre, post, w)) in ts.iter().enumerate() {
                let pre = format!("p{}", pre % np);
                let post = format!("p{}", post % np);
                net.add_transition(&format!("t{k}"), ActionLabel::parse(labels[*label]).unwrap(), iv.clone(), &[(&pre, *w)], &[(&post, 1)]);
            }
            if prio && ts.len() > 1 {
                net.add_priority("t0", "t1");
            }
            net
        })
}
