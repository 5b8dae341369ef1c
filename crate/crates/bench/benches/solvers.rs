use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use h2market::coalition::{shapley_allocate, solve_planning, CoalitionStructure};
use h2market::milp::{brute_force_oracle, solve_milp, DEFAULT_GAP_TOL};
use h2market::oracle_suite::random_case;
use h2market::plant::{solve_schedule, ModelInputs};
use h2market::stackelberg::follower_best_response;
use h2market::{PriceSchedule, Scenario};

fn fixture(name: &str) -> Scenario {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    Scenario::load(path).unwrap()
}

fn milp(c: &mut Criterion) {
    let case = random_case(1, 1).unwrap();
    let mut g = c.benchmark_group("milp");
    g.bench_function("branch_and_bound_small", |b| {
        b.iter(|| solve_milp(black_box(&case.lp), DEFAULT_GAP_TOL, 100_000).unwrap())
    });
    g.sample_size(10);
    g.bench_function("lattice_oracle_small", |b| b.iter(|| brute_force_oracle(black_box(&case.lp)).unwrap()));
    g.finish();
}

fn schedules(c: &mut Criterion) {
    let tiny = fixture("tiny_case.json");
    let structure = CoalitionStructure::all_singletons(2);
    let prices = PriceSchedule::planning_default(&tiny);
    let plans = solve_planning(&structure, &tiny, &prices).unwrap().plans;
    c.bench_function("schedule_tiny", |b| {
        b.iter(|| solve_schedule(black_box(&plans), &tiny, &ModelInputs::new(prices.as_slice())).unwrap())
    });

    let paper = fixture("paper_case.json");
    let structure = CoalitionStructure::parse("{1,2*},{3}").unwrap();
    let prices = PriceSchedule::planning_default(&paper);
    let plans = solve_planning(&structure, &paper, &prices).unwrap().plans;
    let mut g = c.benchmark_group("paper_case");
    g.sample_size(10).measurement_time(Duration::from_secs(5));
    g.bench_function("follower_best_response", |b| {
        b.iter(|| follower_best_response(black_box(&prices), &plans, &paper).unwrap())
    });
    g.finish();
}

fn shapley(c: &mut Criterion) {
    let v = |s: &[usize]| s.iter().map(|&i| (i + 1) as f64).sum::<f64>().powi(2);
    c.bench_function("shapley_six_players", |b| {
        b.iter(|| shapley_allocate(black_box(&[0, 1, 2, 3, 4, 5]), v))
    });
}

criterion_group!(benches, milp, schedules, shapley);
criterion_main!(benches);
