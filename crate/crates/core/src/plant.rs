//! Supplier-side physics and economics: turns fixed planning choices into a
//! scheduling MILP, reads schedules back out of solutions and prices them.
//!
//! Per plant and period the model carries processed mass `pr`, the vehicle
//! loading buffer `store`, the low-pressure tank `tank`, an explicit discard
//! slack and the integer number of full vehicles `n` leaving at period end.
//! A routing unit is a hub shipping to the cavern plus the feeders that ship
//! to it; several units can share one model, coupled by the cavern's
//! per-period injection cap.


use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{
    solve_lp, solve_milp, LinearProgram, LpError, Relation, SolveResult, SolveStatus, VarId,
    VarKind, DEFAULT_GAP_TOL,
};
use crate::scenario::{Mode, Scenario};

/// Node budget for a single schedule solve.
pub const SCHEDULE_NODE_LIMIT: usize = 500_000;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("plant {plant}: {message}")]
    InvalidPlan { plant: usize, message: String },
    #[error("inbound arrival for plant {plant} at period {period} lies outside the {periods}-period horizon")]
    InboundHorizon {
        plant: usize,
        period: usize,
        periods: usize,
    },
    #[error("price vector has {found} entries, horizon has {expected}")]
    PriceLength { expected: usize, found: usize },
    #[error("injection cap vector has {found} entries, horizon has {expected}")]
    CapLength { expected: usize, found: usize },
    #[error(transparent)]
    Solver(#[from] LpError),
    #[error("schedule solve ended with status {status:?} (gap {gap:.3e})")]
    NotOptimal { status: SolveStatus, gap: f64 },
}

/// Where a plant sends its processed hydrogen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Destination {
    Cavern,
    /// Another plant acting as transit hub (0-based index).
    Plant(usize),
}

/// Discrete planning choices of one plant. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanDecision {
    pub plant: usize,
    /// Index into the equipment catalog; exactly one type is bought.
    pub equipment: usize,
    pub route: Destination,
    pub fleet_size: u32,
}

impl PlanDecision {
    pub fn new(plant: usize, equipment: usize, route: Destination, fleet_size: u32) -> Self {
        Self {
            plant,
            equipment,
            route,
            fleet_size,
        }
    }

    pub fn mode(&self, scenario: &Scenario) -> Mode {
        scenario.mode_of(self.equipment)
    }

    pub fn is_cavern_bound(&self) -> bool {
        self.route == Destination::Cavern
    }

    /// One-hot equipment vector over the catalog.
    pub fn equipment_one_hot(&self, types: usize) -> Vec<u8> {
        (0..types).map(|n| u8::from(n == self.equipment)).collect()
    }

    /// Column of `travel_periods` for this plan's destination.
    pub fn destination_index(&self, scenario: &Scenario) -> usize {
        match self.route {
            Destination::Cavern => scenario.cavern_index(),
            Destination::Plant(j) => j,
        }
    }

    /// One-way travel time to the destination, in periods.
    pub fn travel_periods(&self, scenario: &Scenario) -> u32 {
        scenario.travel(self.plant, self.destination_index(scenario))
    }

    /// Mass delivered per departing vehicle.
    pub fn payload(&self, scenario: &Scenario) -> f64 {
        let mode = self.mode(scenario);
        scenario.vehicle_capacity(mode)
            * transit_retention(mode, self.travel_periods(scenario), scenario)
    }
}

/// Fraction of mass that survives a trip of `travel_periods` periods.
/// Compressed gas loses nothing; liquid boils off at a compounded per-period rate.
pub fn transit_retention(mode: Mode, travel_periods: u32, scenario: &Scenario) -> f64 {
    match mode {
        Mode::Compressed => 1.0,
        Mode::Liquefied => scenario.transport.transit_retention_base.powi(travel_periods as i32),
    }
}

/// Inclusive range for a fleet size: enough vehicles to carry a full day's
/// generation, plus one per period of a round trip.
pub fn fleet_size_bounds(daily_generation: f64, vehicle_capacity: f64, travel_periods: u32) -> (u32, u32) {
    let trips = (daily_generation / vehicle_capacity - 1e-9).ceil().max(0.0) as u32;
    (0, trips + 2 * travel_periods + 1)
}

/// Exogenous mass arriving at a plant's tank (0-based period).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub plant: usize,
    pub period: usize,
    pub mass: f64,
}

/// How the fleet size enters the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FleetChoice {
    /// Use `PlanDecision::fleet_size` as given.
    #[default]
    Fixed,
    /// Integer decision bounded by [`fleet_size_bounds`].
    Optimize,
}

/// Everything besides the plans that shapes a schedule model.
#[derive(Debug, Clone, Default)]
pub struct ModelInputs<'a> {
    /// Buying price per period ($/kg).
    pub prices: &'a [f64],
    pub inbound: &'a [Arrival],
    /// Per-period injection capacity left for these plants; `None` means
    /// the cavern's full `max_injection` every period.
    pub injection_cap: Option<&'a [f64]>,
    pub fleet: FleetChoice,
}

impl<'a> ModelInputs<'a> {
    pub fn new(prices: &'a [f64]) -> Self {
        Self {
            prices,
            ..Self::default()
        }
    }
}

/// Variable indices of one plant inside a [`ScheduleModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantVars {
    pub plan: PlanDecision,
    pub processed: Vec<usize>,
    pub store: Vec<usize>,
    pub tank: Vec<usize>,
    pub discard: Vec<usize>,
    pub departures: Vec<usize>,
    /// Departures summed from the first period through t.
    pub cumulative: Vec<usize>,
    pub fleet: usize,
    pub payload: f64,
    pub inbound: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ScheduleModel {
    pub lp: LinearProgram,
    pub plants: Vec<PlantVars>,
}

fn check_plans(plans: &[PlanDecision], scenario: &Scenario) -> Result<(), PlantError> {
    let bad = |plant: usize, message: String| PlantError::InvalidPlan { plant, message };
    for (k, p) in plans.iter().enumerate() {
        if p.plant >= scenario.num_plants() {
            return Err(bad(p.plant, "no such plant".into()));
        }
        if plans[..k].iter().any(|q| q.plant == p.plant) {
            return Err(bad(p.plant, "plant appears twice".into()));
        }
        if p.equipment >= scenario.num_equipment_types() {
            return Err(bad(p.plant, format!("unknown equipment type {}", p.equipment)));
        }
        if let Destination::Plant(j) = p.route {
            if j == p.plant {
                return Err(bad(p.plant, "cannot ship to itself".into()));
            }
            match plans.iter().find(|q| q.plant == j) {
                None => return Err(bad(p.plant, format!("hub {} is not part of the model", j + 1))),
                Some(hub) if !hub.is_cavern_bound() => {
                    return Err(bad(p.plant, format!("hub {} does not ship to the cavern", j + 1)))
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

/// Assembles the scheduling MILP for a set of plans (one or more routing
/// units). The objective is the summed daily profit of all plants, with
/// revenue only on cavern-bound shipments.
pub fn build_schedule_model(
    plans: &[PlanDecision],
    scenario: &Scenario,
    inputs: &ModelInputs<'_>,
) -> Result<ScheduleModel, PlantError> {
    let t_len = scenario.periods();
    if inputs.prices.len() != t_len {
        return Err(PlantError::PriceLength {
            expected: t_len,
            found: inputs.prices.len(),
        });
    }
    if let Some(cap) = inputs.injection_cap {
        if cap.len() != t_len {
            return Err(PlantError::CapLength {
                expected: t_len,
                found: cap.len(),
            });
        }
    }
    check_plans(plans, scenario)?;

    let mut exogenous = vec![vec![0.0; t_len]; scenario.num_plants()];
    for a in inputs.inbound {
        if a.plant >= scenario.num_plants() || a.period >= t_len {
            return Err(PlantError::InboundHorizon {
                plant: a.plant,
                period: a.period,
                periods: t_len,
            });
        }
        exogenous[a.plant][a.period] += a.mass;
    }

    let mut lp = LinearProgram::new();
    let mut vars = Vec::with_capacity(plans.len());
    for plan in plans {
        let i = plan.plant;
        let mode = plan.mode(scenario);
        let cap = scenario.capacity_per_period(plan.equipment);
        let qv = scenario.vehicle_capacity(mode);
        let t_ar = plan.travel_periods(scenario);
        let payload = plan.payload(scenario);
        let w_gamma = scenario.energy_per_kg(mode);
        let k3 = scenario.transport.op_cost_per_period * f64::from(t_ar);
        let tank_hi = match scenario.plants[i].tank_capacity_rule {
            crate::scenario::TankRule::EquipmentCapacity => cap,
            crate::scenario::TankRule::Unbounded => f64::INFINITY,
        };
        // Vehicle loading buffer; liquid decays while it waits.
        let beta = match mode {
            Mode::Compressed => 1.0,
            Mode::Liquefied => scenario.transport.loading_retention,
        };
        // A departure empties a full buffer, which holds at most one load
        // carried over (after decay) plus one period of processing.
        let n_hi = ((beta * qv + cap) / qv + 1e-9).floor();
        let (fleet_lo, fleet_hi) = match inputs.fleet {
            FleetChoice::Fixed => (f64::from(plan.fleet_size), f64::from(plan.fleet_size)),
            FleetChoice::Optimize => {
                let mut gen = scenario.daily_generation(i);
                for p in plans {
                    if p.route == Destination::Plant(i) {
                        gen += scenario.daily_generation(p.plant);
                    }
                }
                gen += exogenous[i].iter().sum::<f64>();
                let (lo, hi) = fleet_size_bounds(gen, qv, t_ar);
                (f64::from(lo), f64::from(hi))
            }
        };
        let mut pv = PlantVars {
            plan: plan.clone(),
            processed: Vec::with_capacity(t_len),
            store: Vec::with_capacity(t_len),
            tank: Vec::with_capacity(t_len),
            discard: Vec::with_capacity(t_len),
            departures: Vec::with_capacity(t_len),
            cumulative: Vec::with_capacity(t_len),
            fleet: 0,
            payload,
            inbound: exogenous[i].clone(),
        };
        let tag = i + 1;
        for t in 0..t_len {
            let price = scenario.tariff.electricity_price[t];
            pv.processed
                .push(lp.add_var(format!("pr_{tag}_{t}"), 0.0, cap, VarKind::Continuous, -price * w_gamma).0);
            pv.store
                .push(lp.add_var(format!("store_{tag}_{t}"), 0.0, qv, VarKind::Continuous, 0.0).0);
            pv.tank
                .push(lp.add_var(format!("tank_{tag}_{t}"), 0.0, tank_hi, VarKind::Continuous, 0.0).0);
            pv.discard
                .push(lp.add_var(format!("disc_{tag}_{t}"), 0.0, f64::INFINITY, VarKind::Continuous, 0.0).0);
            let revenue = if plan.is_cavern_bound() {
                inputs.prices[t] * payload
            } else {
                0.0
            };
            pv.departures.push(
                lp.add_var(
                    format!("n_{tag}_{t}"),
                    0.0,
                    n_hi.min(fleet_hi),
                    VarKind::Integer,
                    revenue - k3,
                )
                .0,
            );
        }
        pv.fleet = lp
            .add_var(
                format!("fleet_{tag}"),
                fleet_lo,
                fleet_hi,
                VarKind::Integer,
                -scenario.vehicle_invest(mode),
            )
            .0;
        lp.offset -= scenario.catalog.invest_daily[plan.equipment];

        for t in 0..t_len {
            let mut row = vec![
                (VarId(pv.store[t]), 1.0),
                (VarId(pv.processed[t]), -1.0),
                (VarId(pv.departures[t]), qv),
            ];
            if t > 0 {
                row.push((VarId(pv.store[t - 1]), -beta));
            }
            lp.add_constraint(row, Relation::Eq, 0.0);
        }

        // Round-trip fleet windows. A clipped window at the start of the day
        // is implied by the next one, so only the last clipped window stays.
        let span = 2 * t_ar as usize;
        for t in 0..t_len {
            if t < span && t + 1 < t_len {
                continue;
            }
            let start = t.saturating_sub(span);
            let mut row: Vec<(VarId, f64)> =
                (start..=t).map(|s| (VarId(pv.departures[s]), 1.0)).collect();
            row.push((VarId(pv.fleet), -1.0));
            lp.add_constraint(row, Relation::Le, 0.0);
        }
        vars.push(pv);
    }

    // Tank balance: stored + processed + discarded = carried + generated + arrivals.
    for k in 0..vars.len() {
        let i = vars[k].plan.plant;
        for t in 0..t_len {
            let pv = &vars[k];
            let mut row = vec![
                (VarId(pv.tank[t]), 1.0),
                (VarId(pv.processed[t]), 1.0),
                (VarId(pv.discard[t]), 1.0),
            ];
            if t > 0 {
                row.push((VarId(pv.tank[t - 1]), -1.0));
            }
            for f in &vars {
                if f.plan.route == Destination::Plant(i) {
                    let lag = f.plan.travel_periods(scenario) as usize;
                    if t >= lag {
                        row.push((VarId(f.departures[t - lag]), -f.payload));
                    }
                }
            }
            let rhs = scenario.plants[i].generation[t] + vars[k].inbound[t];
            lp.add_constraint(row, Relation::Eq, rhs);
        }
    }

    // Cumulative departures K_t = n_1 + ... + n_t as integer variables. Their
    // upper bound is the mass that could have been processed by period t in
    // whole loads (valid because buffers only lose mass). Branching on K_t
    // splits the search by "how many vehicles have left so far", which is
    // far more balanced than branching on single periods.
    let mut load_caps = Vec::with_capacity(vars.len());
    for pv in &vars {
        let i = pv.plan.plant;
        let cap = scenario.capacity_per_period(pv.plan.equipment);
        let qv = scenario.vehicle_capacity(pv.plan.mode(scenario));
        let mut supply = vec![0.0; t_len];
        let mut acc = 0.0;
        for t in 0..t_len {
            acc += scenario.plants[i].generation[t] + pv.inbound[t];
            supply[t] = acc;
        }
        for f in vars.iter().filter(|f| f.plan.route == Destination::Plant(i)) {
            let lag = f.plan.travel_periods(scenario) as usize;
            let mut acc = 0.0;
            for t in 0..t_len {
                if t >= lag {
                    acc += scenario.plants[f.plan.plant].generation[t - lag] + f.inbound[t - lag];
                }
                supply[t] += acc;
            }
        }
        let caps: Vec<f64> = (0..t_len)
            .map(|t| {
                let mut reach = cap * (t + 1) as f64;
                for k in 0..=t {
                    reach = reach.min(supply[k] + cap * (t - k) as f64);
                }
                (reach / qv + 1e-9).floor()
            })
            .collect();
        load_caps.push(caps);
    }
    for (pv, caps) in vars.iter_mut().zip(load_caps) {
        let tag = pv.plan.plant + 1;
        for t in 0..t_len {
            let k = lp.add_var(format!("cum_{tag}_{t}"), 0.0, caps[t], VarKind::Integer, 0.0);
            let mut row = vec![(k, 1.0), (VarId(pv.departures[t]), -1.0)];
            if t > 0 {
                row.push((VarId(pv.cumulative[t - 1]), -1.0));
            }
            lp.add_constraint(row, Relation::Eq, 0.0);
            pv.cumulative.push(k.0);
        }
    }

    // Cavern injection cap on arrivals inside the horizon.
    for t in 0..t_len {
        let cap = inputs
            .injection_cap
            .map_or(scenario.cavern.max_injection, |c| c[t]);
        let mut row = Vec::new();
        for pv in vars.iter().filter(|v| v.plan.is_cavern_bound()) {
            let lag = pv.plan.travel_periods(scenario) as usize;
            if t >= lag {
                row.push((VarId(pv.departures[t - lag]), pv.payload));
            }
        }
        if row.is_empty() {
            continue;
        }
        let cap = cap.max(0.0);
        // Rounding cuts: scaling by 1/p and flooring gives a valid row that
        // counts whole vehicles of payload p.
        let mut payloads: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
        payloads.sort_by(f64::total_cmp);
        payloads.dedup();
        for &p in &payloads {
            let rhs = (cap / p + 1e-9).floor();
            if cap / p - rhs > 1e-6 {
                let cut: Vec<(VarId, f64)> = row
                    .iter()
                    .map(|&(v, q)| (v, (q / p + 1e-9).floor()))
                    .filter(|&(_, a)| a > 0.0)
                    .collect();
                lp.add_constraint(cut, Relation::Le, rhs);
            }
        }
        lp.add_constraint(row, Relation::Le, cap);
    }

    Ok(ScheduleModel { lp, plants: vars })
}

/// Realized operation of one plant over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub plan: PlanDecision,
    pub mode: Mode,
    pub generation: Vec<f64>,
    /// Mass received from feeders or exogenous sources, per period.
    pub inbound: Vec<f64>,
    pub processed: Vec<f64>,
    /// Mass delivered at the destination, attributed to the departure period.
    pub shipped: Vec<f64>,
    pub vehicle_buffer: Vec<f64>,
    pub tank_buffer: Vec<f64>,
    pub discarded: Vec<f64>,
    pub departures: Vec<u32>,
    pub payload: f64,
}

impl Schedule {
    pub fn periods(&self) -> usize {
        self.processed.len()
    }

    pub fn total_shipped(&self) -> f64 {
        self.shipped.iter().sum()
    }

    /// Arrivals at the destination per period inside the horizon.
    pub fn arrivals(&self, scenario: &Scenario) -> Vec<f64> {
        let lag = self.plan.travel_periods(scenario) as usize;
        let mut out = vec![0.0; self.periods()];
        for (t, &q) in self.shipped.iter().enumerate() {
            if t + lag < out.len() {
                out[t + lag] += q;
            }
        }
        out
    }

    /// Writes one CSV row per period. Columns: period, generation, inbound,
    /// processed, discarded, tank_buffer, vehicle_buffer, departures, shipped.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "period",
            "generation",
            "inbound",
            "processed",
            "discarded",
            "tank_buffer",
            "vehicle_buffer",
            "departures",
            "shipped",
        ])?;
        for t in 0..self.periods() {
            w.write_record([
                (t + 1).to_string(),
                self.generation[t].to_string(),
                self.inbound[t].to_string(),
                self.processed[t].to_string(),
                self.discarded[t].to_string(),
                self.tank_buffer[t].to_string(),
                self.vehicle_buffer[t].to_string(),
                self.departures[t].to_string(),
                self.shipped[t].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl ScheduleModel {
    /// Reads schedules out of an assignment of this model. Departures are
    /// rounded, so shipped mass is an exact multiple of the payload.
    pub fn extract(&self, x: &[f64], scenario: &Scenario) -> Vec<Schedule> {
        let get = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&j| x[j].max(0.0)).collect() };
        self.plants
            .iter()
            .map(|pv| {
                let i = pv.plan.plant;
                let departures: Vec<u32> =
                    pv.departures.iter().map(|&j| x[j].round().max(0.0) as u32).collect();
                let mut inbound = pv.inbound.clone();
                for f in &self.plants {
                    if f.plan.route == Destination::Plant(i) {
                        let lag = f.plan.travel_periods(scenario) as usize;
                        for t in lag..inbound.len() {
                            inbound[t] += f64::from(x[f.departures[t - lag]].round() as u32) * f.payload;
                        }
                    }
                }
                let mut plan = pv.plan.clone();
                plan.fleet_size = x[pv.fleet].round().max(0.0) as u32;
                Schedule {
                    mode: plan.mode(scenario),
                    plan,
                    generation: scenario.plants[i].generation.clone(),
                    inbound,
                    processed: get(&pv.processed),
                    shipped: departures.iter().map(|&n| f64::from(n) * pv.payload).collect(),
                    vehicle_buffer: get(&pv.store),
                    tank_buffer: get(&pv.tank),
                    discarded: get(&pv.discard),
                    departures,
                    payload: pv.payload,
                }
            })
            .collect()
    }
}

/// Daily profit decomposition of one plant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub revenue: f64,
    pub processing_cost: f64,
    pub transport_cost: f64,
    pub equipment_invest: f64,
    pub fleet_invest: f64,
    pub profit: f64,
}

impl CostBreakdown {
    pub fn total<'a>(items: impl IntoIterator<Item = &'a CostBreakdown>) -> CostBreakdown {
        let mut sum = CostBreakdown::default();
        for c in items {
            sum.revenue += c.revenue;
            sum.processing_cost += c.processing_cost;
            sum.transport_cost += c.transport_cost;
            sum.equipment_invest += c.equipment_invest;
            sum.fleet_invest += c.fleet_invest;
            sum.profit += c.profit;
        }
        sum
    }
}

pub fn cost_breakdown(schedule: &Schedule, scenario: &Scenario, prices: &[f64]) -> CostBreakdown {
    let plan = &schedule.plan;
    let mode = plan.mode(scenario);
    let gamma = scenario.energy_per_kg(mode);
    let trip_cost = scenario.transport.op_cost_per_period * f64::from(plan.travel_periods(scenario));
    let mut c = CostBreakdown::default();
    for t in 0..schedule.periods() {
        if plan.is_cavern_bound() {
            c.revenue += prices[t] * schedule.shipped[t];
        }
        c.processing_cost += schedule.processed[t] * scenario.tariff.electricity_price[t] * gamma;
        c.transport_cost += f64::from(schedule.departures[t]) * trip_cost;
    }
    c.equipment_invest = scenario.catalog.invest_daily[plan.equipment];
    c.fleet_invest = f64::from(plan.fleet_size) * scenario.vehicle_invest(mode);
    c.profit = c.revenue - c.processing_cost - c.transport_cost - c.equipment_invest - c.fleet_invest;
    c
}

/// Solved schedules for a set of plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub schedules: Vec<Schedule>,
    pub costs: Vec<CostBreakdown>,
    /// Summed profit of all plants in the model.
    pub objective: f64,
    /// Relative optimality gap proven by the solver.
    pub gap: f64,
    pub nodes: usize,
}

impl ScheduleSolution {
    pub fn total_profit(&self) -> f64 {
        self.costs.iter().map(|c| c.profit).sum()
    }
}

/// Fixes the integers of a MILP solution and re-solves the LP, so that the
/// continuous part satisfies the balance rows against exactly integral
/// departures.
fn polish(lp: &LinearProgram, result: &SolveResult) -> Vec<f64> {
    let mut fixed = lp.relaxation();
    for j in lp.integer_vars() {
        let v = result.assignment[j].round();
        fixed.lower[j] = v;
        fixed.upper[j] = v;
    }
    match solve_lp(&fixed) {
        Ok(r) if r.is_optimal() => r.assignment,
        _ => result.assignment.clone(),
    }
}

/// Builds and solves a schedule model to proven optimality.
pub fn solve_schedule(
    plans: &[PlanDecision],
    scenario: &Scenario,
    inputs: &ModelInputs<'_>,
) -> Result<ScheduleSolution, PlantError> {
    let model = build_schedule_model(plans, scenario, inputs)?;
    let result = solve_milp(&model.lp, DEFAULT_GAP_TOL, SCHEDULE_NODE_LIMIT)?;
    if !result.is_optimal() {
        return Err(PlantError::NotOptimal {
            status: result.status,
            gap: result.relative_gap(),
        });
    }
    let x = polish(&model.lp, &result);
    let schedules = model.extract(&x, scenario);
    let costs: Vec<CostBreakdown> = schedules
        .iter()
        .map(|s| cost_breakdown(s, scenario, inputs.prices))
        .collect();
    Ok(ScheduleSolution {
        objective: costs.iter().map(|c| c.profit).sum(),
        schedules,
        costs,
        gap: result.relative_gap(),
        nodes: result.stats.nodes,
    })
}

/// Writes several schedules into one long-format CSV (plant column first).
pub fn write_schedules_csv<W: std::io::Write>(schedules: &[Schedule], mut out: W) -> std::io::Result<()> {
    writeln!(out, "plant,period,generation,inbound,processed,discarded,tank_buffer,vehicle_buffer,departures,shipped")?;
    for s in schedules {
        let mut buf = Vec::new();
        s.write_csv(&mut buf).map_err(std::io::Error::other)?;
        let text = String::from_utf8(buf).expect("csv output is utf-8");
        for line in text.lines().skip(1) {
            writeln!(out, "{},{}", s.plan.plant + 1, line)?;
        }
    }
    Ok(())
}
