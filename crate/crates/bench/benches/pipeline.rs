use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tptest_bench::systems;
use tptest_core::analysis::{goal_from_criterion, Criterion as Coverage};
use tptest_core::scheduler::{fastest_schedule, parse_support};
use tptest_core::sscg::build_sscg;
use tptest_core::testgen::{generate_with_graph, GenerateOptions, Optimize};
use tptest_core::Limits;

fn sscg(c: &mut Criterion) {
    for (name, sys) in systems() {
        c.bench_function(&format!("sscg/{name}"), |b| b.iter(|| build_sscg(black_box(&sys), Limits::default())));
    }
}

fn schedule(c: &mut Criterion) {
    let (_, sys) = systems().into_iter().find(|(n, _)| *n == "user0").unwrap();
    let support = parse_support(&sys, "t8+s0 t7+s3 t5+s1 t1+s2 t2+s1 t3+s4").unwrap();
    c.bench_function("fastest_schedule/six_steps", |b| b.iter(|| fastest_schedule(&sys, black_box(&support))));
}

fn generate(c: &mut Criterion) {
    for (name, sys) in systems() {
        let g = build_sscg(&sys, Limits::default());
        let goal = goal_from_criterion(&sys, Coverage::Transitions, &g).unwrap();
        for optimize in [Optimize::Fastest, Optimize::ShortestThenFastest] {
            let options = GenerateOptions { optimize, ..Default::default() };
            c.bench_function(&format!("generate/{name}/{optimize:?}"), |b| {
                b.iter(|| generate_with_graph(&sys, black_box(&goal), &options, &g))
            });
        }
    }
}

criterion_group!(benches, sscg, schedule, generate);
criterion_main!(benches);
