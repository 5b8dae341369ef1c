//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Built with `harness = false` so the verdict lines always reach stdout.
//! The process exits non-zero if any criterion fails.

#[path = "../../core/tests/support/schedule_cases.rs"]
mod schedule_cases;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use h2market::coalition::{
    best_response_dynamics, random_profile, run_planning_study, shapley_allocate, solve_planning, stability_report,
    structure_imputations, Characteristic, CoalitionStructure, StructureValue,
};
use h2market::oracle_suite::{run_suite, AGREEMENT_TOL, MAX_CASE_LATTICE};
use h2market::stackelberg::{
    best_flat, fixed_price_sweep, optimize_prices, sensitivity_sweep, ArrivalConvention, SensitivityParam,
    SweepContext,
};
use h2market::{GAConfig, PlanDecision, PriceSchedule, Scenario};
use proptest::test_runner::{Config, TestCaseError, TestRunner};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn fixture(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    Scenario::load(path).expect("bundled fixture loads")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn shapley_arithmetic() -> Verdict {
    let start = Instant::now();
    let imp = shapley_allocate(&[0, 1], |s| match s {
        [] => 0.0,
        [0] => 54052.0,
        [1] => 81060.0,
        _ => 170589.0,
    });
    let elapsed = start.elapsed();
    let err = (imp.payoffs[0] - 71790.5).abs().max((imp.payoffs[1] - 98798.5).abs());
    verdict(
        err <= 1e-9 && elapsed < Duration::from_millis(1),
        format!("payoffs ({}, {}), max error {err:e}, {elapsed:?}", imp.payoffs[0], imp.payoffs[1]),
    )
}

fn stability_on_published_table() -> Verdict {
    let rows = [
        ("{1},{2},{3}", vec![54052.0, 81060.0, 236814.0]),
        ("{1,2*},{3}", vec![170589.0, 236814.0]),
        ("{1,3*},{2}", vec![286531.0, 107868.0]),
        ("{1},{2,3*}", vec![53562.0, 323154.0]),
        ("{1,2,3*}", vec![383925.0]),
    ];
    let start = Instant::now();
    let values: Vec<StructureValue> = rows
        .into_iter()
        .map(|(l, v)| StructureValue::from_values(CoalitionStructure::parse(l).unwrap(), v))
        .collect();
    let ch = Characteristic::from_structures(&values);
    let imps: Vec<_> = values.iter().map(|v| structure_imputations(v, &ch)).collect();
    let verdicts = match stability_report(&values, &imps) {
        Ok(v) => v,
        Err(e) => return verdict(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let stable: Vec<usize> = verdicts.iter().filter(|v| v.stable).map(|v| v.structure + 1).collect();
    let s3_cr = !verdicts[2].cr_violations.is_empty();
    let s4_dom = !verdicts[3].dominated_by.is_empty();
    let s5_dom = !verdicts[4].dominated_by.is_empty();
    verdict(
        s3_cr && s4_dom && s5_dom && stable == vec![2] && elapsed < Duration::from_millis(1),
        format!("S3 CR violation {s3_cr}, S4 dominated {s4_dom}, S5 dominated {s5_dom}, stable {stable:?}, {elapsed:?}"),
    )
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let outcomes = match run_suite(1, 50) {
        Ok(o) => o,
        Err(e) => return verdict(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let agree = outcomes.iter().filter(|o| o.agree).count();
    let worst = outcomes.iter().map(|o| o.relative_difference).fold(0.0, f64::max);
    let largest = outcomes.iter().map(|o| o.lattice).fold(0.0, f64::max);
    verdict(
        agree == 50 && worst <= AGREEMENT_TOL && largest <= MAX_CASE_LATTICE && elapsed < Duration::from_secs(60),
        format!("{agree}/50 agree, worst relative difference {worst:e}, largest lattice {largest}, {elapsed:.2?}"),
    )
}

fn potential_game() -> Verdict {
    let start = Instant::now();
    let s = fixture("tiny_case.json");
    let prices = PriceSchedule::planning_default(&s);
    let structure = CoalitionStructure::all_singletons(s.num_plants());
    let joint = match solve_planning(&structure, &s, &prices) {
        Ok(j) => j,
        Err(e) => return verdict(false, e.to_string()),
    };
    let mut worst = 0.0f64;
    let mut all_converged = true;
    for seed in 0..5 {
        let initial = random_profile(&structure, &s, seed);
        match best_response_dynamics(&structure, &s, &prices, initial, 50) {
            Ok(out) => {
                all_converged &= out.converged;
                worst = worst.max(rel(out.total, joint.total));
            }
            Err(e) => return verdict(false, format!("start {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    verdict(
        all_converged && worst <= 1e-6 && elapsed < Duration::from_secs(300),
        format!(
            "5 starts converged {all_converged}, joint optimum {}, worst relative gap {worst:e}, {elapsed:.2?}",
            joint.total
        ),
    )
}

/// Price-search budget used on the full case.
fn acceptance_ga(scenario: &Scenario) -> GAConfig {
    GAConfig {
        population: 40,
        generations: 60,
        seed: scenario.rng_seed,
        ..GAConfig::default()
    }
}

fn paper_plans(s: &Scenario) -> Result<(Vec<PlanDecision>, String, Duration), String> {
    let start = Instant::now();
    let study = run_planning_study(s, &PriceSchedule::planning_default(s)).map_err(|e| e.to_string())?;
    let chosen = &study.structures[study.selected()];
    Ok((chosen.plans.clone(), chosen.structure.label(), start.elapsed()))
}

fn tou_dominance(s: &Scenario, plans: &[PlanDecision], label: &str, planning: Duration) -> Verdict {
    let start = Instant::now();
    let conv = ArrivalConvention::Departure;
    let grid: Vec<f64> = (0..=80).map(|k| 5.0 + 0.1 * f64::from(k)).collect();
    let flat = match fixed_price_sweep(s, plans, &grid, conv) {
        Ok(points) => best_flat(&points).expect("non-empty grid"),
        Err(e) => return verdict(false, e.to_string()),
    };
    let rep = match optimize_prices(s, plans, &acceptance_ga(s), conv, &[]) {
        Ok(r) => r,
        Err(e) => return verdict(false, e.to_string()),
    };
    let elapsed = start.elapsed() + planning;
    let w = &s.tariff.electricity_price;
    let tou_tariff = w.iter().any(|x| (x - w[0]).abs() > 1e-12);
    let weak = rep.leader_profit >= flat.leader_profit - 1e-9 * flat.leader_profit.abs().max(1.0);
    let strict = rep.leader_profit > flat.leader_profit;
    verdict(
        weak && (!tou_tariff || strict) && elapsed < Duration::from_secs(600),
        format!(
            "plans {label}; TOU leader profit {:.2} vs best flat {:.2} at {:.1} $/kg ({:+.2}%), non-constant tariff {tou_tariff}, {elapsed:.2?}",
            rep.leader_profit,
            flat.leader_profit,
            flat.price,
            100.0 * (rep.leader_profit / flat.leader_profit - 1.0)
        ),
    )
}

fn injection_monotonicity(s: &Scenario, plans: &[PlanDecision]) -> Verdict {
    let start = Instant::now();
    let ga = acceptance_ga(s);
    let ctx = SweepContext {
        plans,
        ga: &ga,
        convention: ArrivalConvention::Departure,
        planning_prices: None,
    };
    let points = match sensitivity_sweep(s, SensitivityParam::Qtrans, &[6000.0, 9000.0, 12000.0], &ctx) {
        Ok(p) => p,
        Err(e) => return verdict(false, e.to_string()),
    };
    let elapsed = start.elapsed();
    let profits: Vec<f64> = points.iter().map(|p| p.leader_profit.unwrap_or(f64::NAN)).collect();
    let monotone = profits.windows(2).all(|w| w[1] >= w[0]);
    verdict(
        monotone && elapsed < Duration::from_secs(900),
        format!(
            "leader profit at 6000/9000/12000: {:.2} / {:.2} / {:.2}, {elapsed:.2?}",
            profits[0], profits[1], profits[2]
        ),
    )
}

fn schedule_properties() -> Verdict {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&schedule_cases::schedule_case(), |case| {
        let (scenario, sol) = case.solve().map_err(TestCaseError::fail)?;
        schedule_cases::check_invariants(&case, &scenario, &sol).map_err(TestCaseError::fail)
    });
    let elapsed = start.elapsed();
    match result {
        Ok(()) => verdict(elapsed < Duration::from_secs(30), format!("200 random schedules hold, {elapsed:.2?}")),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn cli_determinism() -> Verdict {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/tiny_case.json");
    let start = Instant::now();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let run = Command::new(env!("CARGO_BIN_EXE_h2market"))
            .arg("schedule")
            .arg(&scenario)
            .args(["--seed", "1", "--out"])
            .arg(dir.path())
            .env("RUST_LOG", "warn")
            .output()
            .expect("binary runs");
        if !run.status.success() {
            return verdict(false, format!("schedule exited with {}", run.status));
        }
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap() != "run_manifest.json")
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    let elapsed = start.elapsed();
    let same = outputs[0] == outputs[1];
    verdict(
        same && !outputs[0].is_empty(),
        format!("{} files compared, identical {same}, {elapsed:.2?}", outputs[0].len()),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<(usize, &str, Verdict)> = vec![
        (1, "Shapley arithmetic", shapley_arithmetic()),
        (2, "stability logic on published values", stability_on_published_table()),
        (3, "MILP oracle equivalence", oracle_equivalence()),
        (4, "best-response dynamics reach the joint optimum", potential_game()),
    ];
    let paper = fixture("paper_case.json");
    match paper_plans(&paper) {
        Ok((plans, label, planning)) => {
            results.push((5, "TOU price dominance", tou_dominance(&paper, &plans, &label, planning)));
            results.push((6, "injection-cap monotonicity", injection_monotonicity(&paper, &plans)));
        }
        Err(e) => {
            results.push((5, "TOU price dominance", verdict(false, e.clone())));
            results.push((6, "injection-cap monotonicity", verdict(false, e)));
        }
    }
    results.push((7, "schedule property suite", schedule_properties()));
    results.push((8, "CLI determinism", cli_determinism()));
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (n, name, v) in &results {
        println!("criterion {n}: {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
