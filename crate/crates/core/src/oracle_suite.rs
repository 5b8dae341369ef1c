//! Randomized equivalence suite: small follower models solved by branch and
//! bound and by exhaustive lattice enumeration must agree.
//!
//! Both the `oracle-check` CLI command and the test suite use this module, so
//! the generated cases are identical wherever they are run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::milp::{brute_force_oracle, lattice_size, solve_milp, LinearProgram, SolveStatus, DEFAULT_GAP_TOL};
use crate::plant::{build_schedule_model, Destination, FleetChoice, ModelInputs, PlanDecision, PlantError};
use crate::scenario::{Scenario, ScenarioError};

/// Relative tolerance on objective agreement.
pub const AGREEMENT_TOL: f64 = 1e-6;
/// Lattice size allowed for a generated case.
pub const MAX_CASE_LATTICE: f64 = 1e5;

const BASE: &str = include_str!("../fixtures/tiny_case.json");
const MAX_ATTEMPTS: usize = 200;
const NODE_LIMIT: usize = 200_000;

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Solver(#[from] crate::milp::LpError),
    #[error("case {0}: no model with a small enough lattice after {MAX_ATTEMPTS} draws")]
    NoSmallCase(usize),
}

/// One generated follower model.
#[derive(Debug, Clone)]
pub struct OracleCase {
    pub index: usize,
    pub label: String,
    pub periods: usize,
    pub plants: usize,
    pub lattice: f64,
    pub lp: LinearProgram,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleOutcome {
    pub index: usize,
    pub label: String,
    pub lattice: f64,
    pub milp_status: SolveStatus,
    pub oracle_status: SolveStatus,
    pub milp_objective: f64,
    pub oracle_objective: f64,
    pub relative_difference: f64,
    pub agree: bool,
}

fn draw_scenario(rng: &mut ChaCha8Rng) -> Result<Scenario, ScenarioError> {
    let base = Scenario::from_json(BASE)?;
    let t_len: usize = rng.random_range(2..=3);
    let n_plants: usize = rng.random_range(1..=2);
    let mut round = |lo: f64, hi: f64| (rng.random_range(lo..hi) * 10.0).round() / 10.0;
    let generation: Vec<Vec<f64>> = (0..n_plants)
        .map(|_| (0..t_len).map(|_| round(20.0, 260.0)).collect())
        .collect();
    let tariff: Vec<f64> = (0..t_len).map(|_| round(0.0, 6.0) / 10.0).collect();
    let travel: Vec<u32> = (0..n_plants).map(|_| u32::from(round(0.0, 1.0) >= 0.5)).collect();
    let max_injection = if round(0.0, 1.0) < 0.5 {
        round(80.0, 400.0)
    } else {
        100_000.0
    };
    base.modified(|d| {
        d.name = "oracle_case".into();
        d.horizon.periods = t_len;
        d.plants.truncate(n_plants);
        for (p, g) in d.plants.iter_mut().zip(generation) {
            p.generation = g;
        }
        d.transport.travel_periods = travel
            .iter()
            .map(|&t| {
                let mut row = vec![0; n_plants + 1];
                row[n_plants] = t;
                row
            })
            .collect();
        d.cavern.price_floor = vec![5.0; t_len];
        d.cavern.price_ceiling = vec![13.0; t_len];
        d.cavern.max_injection = max_injection;
        d.tariff.electricity_price = tariff;
    })
}

fn draw_plans(rng: &mut ChaCha8Rng, scenario: &Scenario) -> (Vec<PlanDecision>, FleetChoice) {
    let n = scenario.num_plants();
    let types = scenario.num_equipment_types();
    let mut fleet = || if rng.random::<f64>() < 0.1 { 0 } else { rng.random_range(1..=3) };
    let mut plans: Vec<PlanDecision> = (0..n)
        .map(|i| PlanDecision::new(i, 0, Destination::Cavern, fleet()))
        .collect();
    let pooled = n == 2 && rng.random::<f64>() < 0.35;
    let compressors = scenario.data().catalog.compressor_types;
    for (i, plan) in plans.iter_mut().enumerate() {
        plan.equipment = if pooled && i == 0 {
            rng.random_range(0..compressors)
        } else if pooled {
            rng.random_range(compressors..types)
        } else {
            rng.random_range(0..types)
        };
        if pooled && i == 0 {
            plan.route = Destination::Plant(1);
        }
    }
    let choice = if rng.random::<f64>() < 0.2 {
        FleetChoice::Optimize
    } else {
        FleetChoice::Fixed
    };
    (plans, choice)
}

fn describe(scenario: &Scenario, plans: &[PlanDecision], fleet: FleetChoice) -> String {
    let units: Vec<String> = plans
        .iter()
        .map(|p| {
            let to = match p.route {
                Destination::Cavern => "cavern".to_string(),
                Destination::Plant(j) => format!("plant{}", j + 1),
            };
            format!("plant{}:type{}:{}->{}:fleet{}", p.plant + 1, p.equipment, p.mode(scenario), to, p.fleet_size)
        })
        .collect();
    let fleet = match fleet {
        FleetChoice::Fixed => "fixed",
        FleetChoice::Optimize => "free",
    };
    format!("T={} {} fleet={}", scenario.periods(), units.join(" "), fleet)
}

/// Draws case `index` of the suite seeded by `seed`. Each case has its own
/// RNG stream, so a case does not depend on how many were drawn before it.
pub fn random_case(seed: u64, index: usize) -> Result<OracleCase, SuiteError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    for _ in 0..MAX_ATTEMPTS {
        let scenario = draw_scenario(&mut rng)?;
        let (plans, fleet) = draw_plans(&mut rng, &scenario);
        let prices: Vec<f64> = (0..scenario.periods())
            .map(|_| (rng.random_range(5.0..13.0) * 100.0f64).round() / 100.0)
            .collect();
        let inputs = ModelInputs {
            fleet,
            ..ModelInputs::new(&prices)
        };
        let model = build_schedule_model(&plans, &scenario, &inputs)?;
        let lattice = lattice_size(&model.lp)?;
        if lattice <= MAX_CASE_LATTICE {
            return Ok(OracleCase {
                index,
                label: describe(&scenario, &plans, fleet),
                periods: scenario.periods(),
                plants: scenario.num_plants(),
                lattice,
                lp: model.lp,
            });
        }
    }
    Err(SuiteError::NoSmallCase(index))
}

/// Solves one case both ways and compares the objectives.
pub fn check_case(case: &OracleCase) -> Result<OracleOutcome, SuiteError> {
    let milp = solve_milp(&case.lp, DEFAULT_GAP_TOL, NODE_LIMIT)?;
    let oracle = brute_force_oracle(&case.lp)?;
    let (a, b) = (milp.objective_value, oracle.objective_value);
    let relative_difference = if a.is_finite() && b.is_finite() {
        (a - b).abs() / b.abs().max(1.0)
    } else if milp.status == oracle.status {
        0.0
    } else {
        f64::INFINITY
    };
    let agree = milp.status == oracle.status && relative_difference <= AGREEMENT_TOL;
    Ok(OracleOutcome {
        index: case.index,
        label: case.label.clone(),
        lattice: case.lattice,
        milp_status: milp.status,
        oracle_status: oracle.status,
        milp_objective: a,
        oracle_objective: b,
        relative_difference,
        agree,
    })
}

/// Generates and checks `count` cases in order.
pub fn run_suite(seed: u64, count: usize) -> Result<Vec<OracleOutcome>, SuiteError> {
    (0..count)
        .map(|k| {
            let case = random_case(seed, k)?;
            let outcome = check_case(&case)?;
            log::debug!(
                "oracle case {k}: lattice {} milp {} oracle {} agree {}",
                case.lattice,
                outcome.milp_objective,
                outcome.oracle_objective,
                outcome.agree
            );
            Ok(outcome)
        })
        .collect()
}
