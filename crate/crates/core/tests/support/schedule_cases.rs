//! Random small scheduling instances and the physical invariants every
//! solved schedule must satisfy. Shared by the property tests and the
//! acceptance target (included with `#[path]`).

use h2market::plant::{solve_schedule, Destination, FleetChoice, ModelInputs, PlanDecision, ScheduleSolution};
use h2market::scenario::Mode;
use h2market::Scenario;
use proptest::prelude::*;

const BASE: &str = include_str!("../../fixtures/tiny_case.json");
const TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct PlantCase {
    pub generation: Vec<f64>,
    pub equipment: usize,
    pub travel: u32,
    pub fleet: u32,
}

#[derive(Debug, Clone)]
pub struct ScheduleCase {
    pub plants: Vec<PlantCase>,
    /// Plant 1 feeds plant 2 as a transit hub.
    pub pooled: bool,
    pub transit_retention: f64,
    pub max_injection: f64,
    pub prices: Vec<f64>,
    pub tariff: Vec<f64>,
    pub optimize_fleet: bool,
}

pub fn schedule_case() -> impl Strategy<Value = ScheduleCase> {
    (3usize..=7, 1usize..=3).prop_flat_map(|(t_len, n)| {
        let plant = (
            prop::collection::vec(0.0f64..300.0, t_len),
            0usize..4,
            prop::sample::select(vec![0u32, 1, 2, 4]),
            0u32..=4,
        )
            .prop_map(|(generation, equipment, travel, fleet)| PlantCase {
                generation,
                equipment,
                travel,
                fleet,
            });
        (
            prop::collection::vec(plant, n),
            any::<bool>(),
            prop::sample::select(vec![0.99, 0.995, 1.0]),
            prop_oneof![Just(1e5), 100.0f64..800.0],
            prop::collection::vec(5.0f64..13.0, t_len),
            prop::collection::vec(0.0f64..0.6, t_len),
            any::<bool>(),
        )
            .prop_map(
                |(plants, pooled, transit_retention, max_injection, prices, tariff, optimize_fleet)| {
                    let pooled = pooled && plants.len() >= 2;
                    ScheduleCase {
                        plants,
                        pooled,
                        transit_retention,
                        max_injection,
                        prices,
                        tariff,
                        optimize_fleet,
                    }
                },
            )
    })
}

impl ScheduleCase {
    pub fn scenario(&self) -> Scenario {
        let n = self.plants.len();
        Scenario::from_json(BASE)
            .unwrap()
            .modified(|d| {
                d.horizon.periods = self.prices.len();
                let template = d.plants[0].clone();
                d.plants = self
                    .plants
                    .iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let mut q = template.clone();
                        q.id = k + 1;
                        q.generation = p.generation.clone();
                        q
                    })
                    .collect();
                d.transport.travel_periods = self
                    .plants
                    .iter()
                    .map(|p| {
                        let mut row = vec![0; n + 1];
                        row[n] = p.travel;
                        row
                    })
                    .collect();
                d.transport.transit_retention_base = self.transit_retention;
                d.cavern.max_injection = self.max_injection;
                d.cavern.price_floor = vec![5.0; self.prices.len()];
                d.cavern.price_ceiling = vec![13.0; self.prices.len()];
                d.tariff.electricity_price = self.tariff.clone();
            })
            .unwrap()
    }

    pub fn plans(&self) -> Vec<PlanDecision> {
        self.plants
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (equipment, route) = match (self.pooled, i) {
                    (true, 0) => (p.equipment % 2, Destination::Plant(1)),
                    (true, 1) => (2 + p.equipment % 2, Destination::Cavern),
                    _ => (p.equipment, Destination::Cavern),
                };
                PlanDecision::new(i, equipment, route, p.fleet)
            })
            .collect()
    }

    pub fn fleet(&self) -> FleetChoice {
        if self.optimize_fleet {
            FleetChoice::Optimize
        } else {
            FleetChoice::Fixed
        }
    }

    pub fn solve(&self) -> Result<(Scenario, ScheduleSolution), String> {
        let scenario = self.scenario();
        let inputs = ModelInputs {
            fleet: self.fleet(),
            ..ModelInputs::new(&self.prices)
        };
        let sol = solve_schedule(&self.plans(), &scenario, &inputs).map_err(|e| e.to_string())?;
        Ok((scenario, sol))
    }
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= TOL * scale.max(1.0)
}

/// Checks mass balances, the fleet window, the arrival cap, boil-off
/// compounding and whole-vehicle shipping, recomputed from raw parameters.
pub fn check_invariants(case: &ScheduleCase, scenario: &Scenario, sol: &ScheduleSolution) -> Result<(), String> {
    let t_len = case.prices.len();
    let tr = &scenario.transport;
    let mut arrivals = vec![0.0; t_len];
    for s in &sol.schedules {
        let i = s.plan.plant;
        let p = &case.plants[i];
        // Feeders reach their hub within the period.
        let trip = if s.plan.route == Destination::Cavern { p.travel } else { 0 };
        let travel = trip as usize;
        let cap = scenario.catalog.capacities[s.plan.equipment];
        let (qv, beta_load, retention) = match s.mode {
            Mode::Compressed => (tr.tube_capacity, 1.0, 1.0),
            Mode::Liquefied => {
                let mut r = 1.0;
                for _ in 0..trip {
                    r *= case.transit_retention;
                }
                (tr.tanker_capacity, tr.loading_retention, r)
            }
        };
        let scale = p.generation.iter().sum::<f64>() + s.inbound.iter().sum::<f64>() + qv;

        // Whole vehicles leave, each carrying the retained fraction of a load.
        if !close(s.payload, qv * retention, qv) {
            return Err(format!("plant {i}: payload {} != {qv} x {retention}", s.payload));
        }
        for t in 0..t_len {
            let n = f64::from(s.departures[t]);
            if !close(s.shipped[t], n * qv * retention, scale) {
                return Err(format!("plant {i} t{t}: shipped {} for {n} vehicles", s.shipped[t]));
            }
            if s.mode == Mode::Compressed {
                let loads = s.shipped[t] / tr.tube_capacity;
                if (loads - loads.round()).abs() > 1e-9 {
                    return Err(format!("plant {i} t{t}: CH2 shipment {} is not whole tubes", s.shipped[t]));
                }
            }
        }

        // Tank and vehicle-buffer balances, with discard as the only outlet
        // besides processing.
        let mut tank_prev = 0.0;
        let mut store_prev = 0.0;
        let (mut gen_in, mut out) = (0.0, 0.0);
        for t in 0..t_len {
            let supply = s.generation[t] + s.inbound[t];
            if s.processed[t] > cap + TOL * cap || s.tank_buffer[t] > cap + TOL * cap {
                return Err(format!("plant {i} t{t}: capacity exceeded"));
            }
            if s.discarded[t] < -TOL || s.tank_buffer[t] < -TOL || s.vehicle_buffer[t] < -TOL {
                return Err(format!("plant {i} t{t}: negative stock"));
            }
            let lhs = s.tank_buffer[t] + s.processed[t] + s.discarded[t];
            if !close(lhs, tank_prev + supply, scale) {
                return Err(format!("plant {i} t{t}: tank balance {lhs} != {}", tank_prev + supply));
            }
            let store = beta_load * store_prev + s.processed[t] - qv * f64::from(s.departures[t]);
            if !close(store, s.vehicle_buffer[t], scale) || s.vehicle_buffer[t] > qv * (1.0 + TOL) {
                return Err(format!("plant {i} t{t}: vehicle buffer {} != {store}", s.vehicle_buffer[t]));
            }
            tank_prev = s.tank_buffer[t];
            store_prev = s.vehicle_buffer[t];
            gen_in += supply;
            out += s.processed[t] + s.discarded[t];
        }
        if !close(gen_in, out + tank_prev, scale) {
            return Err(format!("plant {i}: mass in {gen_in} != out {out} + stock {tank_prev}"));
        }

        // A vehicle is away for 2 x travel periods after it leaves.
        let window = 2 * travel;
        for t in 0..t_len {
            let used: u32 = s.departures[t.saturating_sub(window)..=t].iter().sum();
            if used > s.plan.fleet_size {
                return Err(format!("plant {i} t{t}: {used} vehicles out, fleet {}", s.plan.fleet_size));
            }
        }
        if !case.optimize_fleet && s.plan.fleet_size != p.fleet {
            return Err(format!("plant {i}: fixed fleet changed"));
        }

        if s.plan.route == Destination::Cavern {
            for t in 0..t_len {
                if t + travel < t_len {
                    arrivals[t + travel] += s.shipped[t];
                }
            }
        }
    }
    for (t, a) in arrivals.iter().enumerate() {
        if *a > case.max_injection * (1.0 + TOL) + TOL {
            return Err(format!("t{t}: arrivals {a} exceed cap {}", case.max_injection));
        }
    }
    Ok(())
}
