use std::fmt::Write as _;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uplan::dsl::{parse_domain, parse_evidence, DomainSpec};
use uplan::evidence::{generate_pstates_with, EvidenceSet};
use uplan::exec::Execution;
use uplan::model::{PState, Plan};
use uplan::pipeline::plan_worlds_independently;
use uplan::planner::{plan_for_pstate, PlannerConfig};
use uplan::reuse::reapply_plan;
use uplan::sensitivity::sensitivity_grid_with;

const DOMAIN: &str = include_str!("../fixtures/air_combat.domain");
const TWO_WORLD: &str = include_str!("../fixtures/two_world.evidence");

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

/// The two-world fixture plus `extra` binary frames that do not affect
/// planning, giving 2^(extra+1) worlds.
fn wide_evidence(extra: usize) -> EvidenceSet {
    let mut text = TWO_WORLD.to_string();
    for k in 0..extra {
        let _ = write!(
            text,
            "frame noise{k} {{on off}}\n  on => (noise{k}) @4\nmass noise{k} {{on}}=0.5 {{off}}=0.5\n"
        );
    }
    parse_evidence(&text).expect("bench evidence parses")
}

fn worlds(spec: &DomainSpec, extra: usize) -> Vec<PState> {
    generate_pstates_with(
        &wide_evidence(extra),
        &spec.compat,
        spec.n_levels,
        Execution::Sequential,
    )
    .expect("bench worlds")
}

fn world_generation(c: &mut Criterion) {
    let spec = parse_domain(DOMAIN).unwrap();
    let ev = wide_evidence(9);
    let mut g = c.benchmark_group("generate_pstates");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new(name, "1024 worlds"), |b| {
            b.iter(|| generate_pstates_with(black_box(&ev), &spec.compat, spec.n_levels, mode))
        });
    }
    g.finish();
}

fn sensitivity(c: &mut Criterion) {
    let mut g = c.benchmark_group("sensitivity_grid");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::new(name, "step 0.0005"), |b| {
            b.iter(|| sensitivity_grid_with((0.0, 0.5), (0.0, 0.5), black_box(0.0005), mode))
        });
    }
    g.finish();
}

fn reapplication(c: &mut Criterion) {
    let spec = parse_domain(DOMAIN).unwrap();
    let ws = worlds(&spec, 5);
    let library: Vec<Plan> = ws
        .iter()
        .map(|w| plan_for_pstate(w, &spec).unwrap())
        .collect();
    let target = &ws[ws.len() / 2];
    let mut g = c.benchmark_group("reapplication");
    for (name, mode) in MODES {
        g.bench_function(
            BenchmarkId::new(name, format!("{} donors", library.len())),
            |b| b.iter(|| mode.map(&library, |p| reapply_plan(p, black_box(target), &spec))),
        );
    }
    g.finish();
}

fn independent_planning(c: &mut Criterion) {
    let spec = parse_domain(DOMAIN).unwrap();
    let ws = worlds(&spec, 5);
    let config = PlannerConfig::for_spec(&spec);
    let mut g = c.benchmark_group("plan_worlds_independently");
    for (name, mode) in MODES {
        g.bench_function(
            BenchmarkId::new(name, format!("{} worlds", ws.len())),
            |b| b.iter(|| plan_worlds_independently(&spec, black_box(&ws), &config, mode)),
        );
    }
    g.finish();
}

criterion_group!(
    benches,
    world_generation,
    sensitivity,
    reapplication,
    independent_planning
);
criterion_main!(benches);
