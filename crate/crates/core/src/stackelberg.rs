//! Scheduling-stage leader-follower game. The salt cavern (leader) posts a
//! per-period buying price; the plants (followers) answer with their jointly
//! optimal schedule under fixed plans. A real-coded genetic algorithm searches
//! the price band, scoring each price vector by the leader's daily profit at
//! the followers' exact best response.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coalition::{run_planning_study, CoalitionError};
use crate::plant::{
    solve_schedule, CostBreakdown, Destination, ModelInputs, PlanDecision, PlantError, Schedule,
    ScheduleSolution,
};
use crate::scenario::{Scenario, ScenarioError};

const BAND_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StackelbergError {
    #[error("price vector has {found} periods, scenario has {expected}")]
    Length { expected: usize, found: usize },
    #[error("price {price} in period {period} lies outside the band [{lo}, {hi}]")]
    OutOfBand { period: usize, price: f64, lo: f64, hi: f64 },
    #[error("flat price {price} lies outside the common band [{lo}, {hi}]")]
    FlatOutOfBand { price: f64, lo: f64, hi: f64 },
    #[error("invalid GA configuration: {0}")]
    Config(String),
    #[error("no price vector in the search produced a solvable follower problem")]
    NoFeasibleResponse,
    #[error("sensitivity value {value} is invalid for {param}: {source}")]
    SweepValue {
        param: SensitivityParam,
        value: f64,
        source: ScenarioError,
    },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Coalition(#[from] CoalitionError),
}

/// The cavern's buying price in every period ($/kg), inside the price band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceSchedule {
    prices: Vec<f64>,
}

impl PriceSchedule {
    pub fn new(prices: Vec<f64>, scenario: &Scenario) -> Result<Self, StackelbergError> {
        let (lo, hi) = (&scenario.cavern.price_floor, &scenario.cavern.price_ceiling);
        if prices.len() != lo.len() {
            return Err(StackelbergError::Length {
                expected: lo.len(),
                found: prices.len(),
            });
        }
        for (t, &p) in prices.iter().enumerate() {
            if !(p.is_finite() && p >= lo[t] - BAND_TOL && p <= hi[t] + BAND_TOL) {
                return Err(StackelbergError::OutOfBand {
                    period: t,
                    price: p,
                    lo: lo[t],
                    hi: hi[t],
                });
            }
        }
        Ok(PriceSchedule { prices })
    }

    /// The same price in every period.
    pub fn flat(price: f64, scenario: &Scenario) -> Result<Self, StackelbergError> {
        let (lo, hi) = common_band(scenario);
        if !(price >= lo - BAND_TOL && price <= hi + BAND_TOL) {
            return Err(StackelbergError::FlatOutOfBand { price, lo, hi });
        }
        Ok(PriceSchedule {
            prices: vec![price; scenario.periods()],
        })
    }

    /// Band midpoint in every period: the price assumed while planning, when
    /// the real tariff is not known yet.
    pub fn planning_default(scenario: &Scenario) -> Self {
        PriceSchedule {
            prices: scenario.midpoint_prices(),
        }
    }

    pub fn floor(scenario: &Scenario) -> Self {
        PriceSchedule {
            prices: scenario.cavern.price_floor.clone(),
        }
    }

    pub fn ceiling(scenario: &Scenario) -> Self {
        PriceSchedule {
            prices: scenario.cavern.price_ceiling.clone(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.prices
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.prices
    }
}

/// Flat prices admissible in every period: [max floor, min ceiling].
pub fn common_band(scenario: &Scenario) -> (f64, f64) {
    let lo = scenario.cavern.price_floor.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = scenario.cavern.price_ceiling.iter().copied().fold(f64::INFINITY, f64::min);
    (lo, hi)
}

/// When delivered hydrogen counts as resold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalConvention {
    /// Every cavern-bound shipment is resold, including loads that arrive
    /// after the last period.
    #[default]
    Departure,
    /// Only loads arriving within the horizon are resold.
    Strict,
}

impl fmt::Display for ArrivalConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArrivalConvention::Departure => "departure",
            ArrivalConvention::Strict => "strict",
        })
    }
}

impl FromStr for ArrivalConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "departure" => Ok(ArrivalConvention::Departure),
            "strict" => Ok(ArrivalConvention::Strict),
            _ => Err(format!("unknown arrival convention `{s}` (expected departure or strict)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GAConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Standard deviation of a price mutation ($/kg).
    pub mutation_scale: f64,
    pub elitism: usize,
    pub seed: u64,
    /// Flat prices seeded into the first generation, evenly spaced over the
    /// common band.
    pub flat_seeds: usize,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            population: 60,
            generations: 150,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_scale: 0.5,
            elitism: 2,
            seed: 0,
            flat_seeds: 9,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<(), StackelbergError> {
        let bad = |m: String| Err(StackelbergError::Config(m));
        if self.population < 2 {
            return bad(format!("population must be at least 2, got {}", self.population));
        }
        for (name, r) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        if !(self.mutation_scale.is_finite() && self.mutation_scale >= 0.0) {
            return bad(format!("mutation_scale must be >= 0, got {}", self.mutation_scale));
        }
        if self.elitism >= self.population {
            return bad(format!(
                "elitism ({}) must be below the population ({})",
                self.elitism, self.population
            ));
        }
        Ok(())
    }
}

/// Followers' joint best response to a price schedule with plans fixed.
pub fn follower_best_response(
    prices: &PriceSchedule,
    plans: &[PlanDecision],
    scenario: &Scenario,
) -> Result<ScheduleSolution, StackelbergError> {
    if prices.as_slice().len() != scenario.periods() {
        return Err(StackelbergError::Length {
            expected: scenario.periods(),
            found: prices.as_slice().len(),
        });
    }
    Ok(solve_schedule(plans, scenario, &ModelInputs::new(prices.as_slice()))?)
}

/// Leader revenue and purchase outlay for a set of follower schedules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LeaderAccount {
    /// Mass resold to end users under the chosen convention (kg).
    pub resold: f64,
    /// Mass bought from the plants (kg).
    pub bought: f64,
    pub revenue: f64,
    pub outlay: f64,
    pub profit: f64,
}

pub fn leader_account(
    schedules: &[Schedule],
    prices: &[f64],
    scenario: &Scenario,
    convention: ArrivalConvention,
) -> LeaderAccount {
    let mut acc = LeaderAccount::default();
    for s in schedules.iter().filter(|s| s.plan.is_cavern_bound()) {
        for (t, &q) in s.shipped.iter().enumerate() {
            acc.bought += q;
            acc.outlay += prices[t] * q;
        }
        acc.resold += match convention {
            ArrivalConvention::Departure => s.total_shipped(),
            ArrivalConvention::Strict => s.arrivals(scenario).iter().sum(),
        };
    }
    acc.revenue = scenario.cavern.retail_price * acc.resold;
    acc.profit = acc.revenue - acc.outlay;
    acc
}

/// Leader's daily profit at the followers' best response to `prices`.
pub fn leader_fitness(
    prices: &PriceSchedule,
    scenario: &Scenario,
    plans: &[PlanDecision],
    convention: ArrivalConvention,
) -> Result<f64, StackelbergError> {
    let sol = follower_best_response(prices, plans, scenario)?;
    Ok(leader_account(&sol.schedules, prices.as_slice(), scenario, convention).profit)
}

/// Profit of one routing unit: a cavern-bound plant and its feeders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitProfit {
    pub label: String,
    pub plants: Vec<usize>,
    pub profit: f64,
}

/// Groups plans into routing units, ordered by their cavern-bound member.
pub fn routing_units(plans: &[PlanDecision]) -> Vec<(usize, Vec<usize>)> {
    let mut units: Vec<(usize, Vec<usize>)> = Vec::new();
    for p in plans {
        let head = match p.route {
            Destination::Cavern => p.plant,
            Destination::Plant(h) => h,
        };
        match units.iter_mut().find(|(h, _)| *h == head) {
            Some((_, m)) => m.push(p.plant),
            None => units.push((head, vec![p.plant])),
        }
    }
    for (_, m) in &mut units {
        m.sort_unstable();
    }
    units.sort_by_key(|(h, _)| *h);
    units
}

fn unit_profits(sol: &ScheduleSolution) -> Vec<UnitProfit> {
    let plans: Vec<PlanDecision> = sol.schedules.iter().map(|s| s.plan.clone()).collect();
    routing_units(&plans)
        .into_iter()
        .map(|(head, members)| {
            let profit = sol
                .schedules
                .iter()
                .zip(&sol.costs)
                .filter(|(s, _)| members.contains(&s.plan.plant))
                .map(|(_, c)| c.profit)
                .sum();
            let label = if members.len() == 1 {
                format!("{{{}}}", head + 1)
            } else {
                let inner: Vec<String> = members
                    .iter()
                    .map(|&i| if i == head { format!("{}*", i + 1) } else { (i + 1).to_string() })
                    .collect();
                format!("{{{}}}", inner.join(","))
            };
            UnitProfit {
                label,
                plants: members,
                profit,
            }
        })
        .collect()
}

/// Leader outcome at one flat price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatPoint {
    pub price: f64,
    pub leader_profit: f64,
    /// Cavern-bound mass bought over the day (kg).
    pub total_volume: f64,
}

/// Equilibrium found by the price search, with full follower diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub best_prices: PriceSchedule,
    pub convention: ArrivalConvention,
    pub leader_profit: f64,
    pub leader: LeaderAccount,
    pub follower_profits: Vec<UnitProfit>,
    /// Delivered mass per plant and departure period.
    pub transaction_series: Vec<Vec<f64>>,
    pub processing_series: Vec<Vec<f64>>,
    pub discarded_series: Vec<Vec<f64>>,
    /// Mass reaching the cavern in each period of the horizon.
    pub injection_series: Vec<f64>,
    /// Best fitness found up to each generation (generation 0 first).
    pub fitness_history: Vec<f64>,
    /// Best of the flat-price individuals seeded into the first generation.
    pub seeded_flat_best: Option<FlatPoint>,
    pub follower_gap: f64,
    pub evaluations: usize,
    pub schedules: Vec<Schedule>,
    pub costs: Vec<CostBreakdown>,
}

impl EquilibriumReport {
    fn assemble(
        prices: PriceSchedule,
        sol: ScheduleSolution,
        scenario: &Scenario,
        convention: ArrivalConvention,
        fitness_history: Vec<f64>,
        seeded_flat_best: Option<FlatPoint>,
        evaluations: usize,
    ) -> Self {
        let leader = leader_account(&sol.schedules, prices.as_slice(), scenario, convention);
        let mut injection = vec![0.0; scenario.periods()];
        for s in sol.schedules.iter().filter(|s| s.plan.is_cavern_bound()) {
            for (slot, a) in injection.iter_mut().zip(s.arrivals(scenario)) {
                *slot += a;
            }
        }
        EquilibriumReport {
            best_prices: prices,
            convention,
            leader_profit: leader.profit,
            leader,
            follower_profits: unit_profits(&sol),
            transaction_series: sol.schedules.iter().map(|s| s.shipped.clone()).collect(),
            processing_series: sol.schedules.iter().map(|s| s.processed.clone()).collect(),
            discarded_series: sol.schedules.iter().map(|s| s.discarded.clone()).collect(),
            injection_series: injection,
            fitness_history,
            seeded_flat_best,
            follower_gap: sol.gap,
            evaluations,
            schedules: sol.schedules,
            costs: sol.costs,
        }
    }
}

fn price_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| x.to_bits()).collect()
}

/// Memoized fitness evaluation; misses are solved in parallel.
struct Evaluator<'a> {
    scenario: &'a Scenario,
    plans: &'a [PlanDecision],
    convention: ArrivalConvention,
    cache: HashMap<Vec<u64>, f64>,
}

impl Evaluator<'_> {
    fn evaluate(&mut self, pop: &[Vec<f64>]) -> Vec<f64> {
        let mut missing: Vec<&Vec<f64>> = Vec::new();
        for ind in pop {
            let k = price_key(ind);
            if !self.cache.contains_key(&k) && !missing.iter().any(|m| price_key(m) == k) {
                missing.push(ind);
            }
        }
        let scored: Vec<f64> = missing
            .par_iter()
            .map(|ind| {
                let prices = PriceSchedule { prices: ind.to_vec() };
                match leader_fitness(&prices, self.scenario, self.plans, self.convention) {
                    Ok(f) => f,
                    Err(e) => {
                        debug!("follower solve failed, fitness -inf: {e}");
                        f64::NEG_INFINITY
                    }
                }
            })
            .collect();
        for (ind, f) in missing.into_iter().zip(scored) {
            self.cache.insert(price_key(ind), f);
        }
        pop.iter().map(|ind| self.cache[&price_key(ind)]).collect()
    }
}

/// Random source for individual `k` of generation `g`; independent of how
/// fitness evaluations are scheduled across threads.
fn stream(seed: u64, g: usize, k: usize, population: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((g * population + k) as u64);
    rng
}

fn flat_grid(scenario: &Scenario, points: usize) -> Vec<f64> {
    let (lo, hi) = common_band(scenario);
    if lo > hi || points == 0 {
        return Vec::new();
    }
    if points == 1 || hi - lo < BAND_TOL {
        return vec![0.5 * (lo + hi)];
    }
    (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect()
}

/// Index of the best entry; ties go to the lowest index.
fn argmax(f: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in f.iter().enumerate() {
        if v > f[best] {
            best = k;
        }
    }
    best
}

fn tournament(rng: &mut ChaCha8Rng, fitness: &[f64]) -> usize {
    let a = rng.random_range(0..fitness.len());
    let b = rng.random_range(0..fitness.len());
    if fitness[b] > fitness[a] || (fitness[b] == fitness[a] && b < a) {
        b
    } else {
        a
    }
}

/// Genetic search over price schedules.
///
/// The first generation holds the all-floor and all-ceiling schedules, a
/// grid of flat prices, any `seeds`, then uniform random schedules. Each
/// later generation keeps the `elitism` best and breeds the rest by
/// tournament selection, uniform crossover and clipped Gaussian mutation.
pub fn optimize_prices(
    scenario: &Scenario,
    plans: &[PlanDecision],
    config: &GAConfig,
    convention: ArrivalConvention,
    seeds: &[PriceSchedule],
) -> Result<EquilibriumReport, StackelbergError> {
    config.validate()?;
    let lo = scenario.cavern.price_floor.clone();
    let hi = scenario.cavern.price_ceiling.clone();
    let t_len = scenario.periods();
    let pop_size = config.population;
    let mut eval = Evaluator {
        scenario,
        plans,
        convention,
        cache: HashMap::new(),
    };

    let finish = |best: Vec<f64>, history: Vec<f64>, flat: Option<FlatPoint>, evals: usize| {
        let prices = PriceSchedule { prices: best };
        let sol = follower_best_response(&prices, plans, scenario)?;
        Ok(EquilibriumReport::assemble(prices, sol, scenario, convention, history, flat, evals))
    };

    if lo.iter().zip(&hi).all(|(a, b)| b - a < BAND_TOL) {
        let f = eval.evaluate(std::slice::from_ref(&lo))[0];
        if f == f64::NEG_INFINITY {
            return Err(StackelbergError::NoFeasibleResponse);
        }
        return finish(lo, vec![f], None, 1);
    }

    let flats = flat_grid(scenario, config.flat_seeds);
    let mut pop: Vec<Vec<f64>> = vec![lo.clone(), hi.clone()];
    pop.extend(flats.iter().map(|&p| vec![p; t_len]));
    pop.extend(seeds.iter().map(|s| s.as_slice().to_vec()));
    pop.truncate(pop_size);
    for k in pop.len()..pop_size {
        let mut rng = stream(config.seed, 0, k, pop_size);
        pop.push((0..t_len).map(|t| rng.random_range(lo[t]..=hi[t])).collect());
    }

    let mut fitness = eval.evaluate(&pop);
    let seeded_flat_best = if flats.is_empty() {
        None
    } else {
        let start = 2;
        let end = (start + flats.len()).min(pop_size);
        (start..end)
            .max_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(b.cmp(&a)))
            .map(|k| {
                let sol = follower_best_response(&PriceSchedule { prices: pop[k].clone() }, plans, scenario);
                FlatPoint {
                    price: pop[k][0],
                    leader_profit: fitness[k],
                    total_volume: sol
                        .map(|s| {
                            leader_account(&s.schedules, &pop[k], scenario, convention).bought
                        })
                        .unwrap_or(0.0),
                }
            })
    };

    let mut best_k = argmax(&fitness);
    let mut best = (pop[best_k].clone(), fitness[best_k]);
    let mut history = vec![best.1];
    let normal = Normal::new(0.0, config.mutation_scale.max(f64::MIN_POSITIVE)).expect("valid scale");

    for g in 1..=config.generations {
        let mut order: Vec<usize> = (0..pop_size).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        let mut next: Vec<Vec<f64>> = order[..config.elitism].iter().map(|&k| pop[k].clone()).collect();
        for k in config.elitism..pop_size {
            let mut rng = stream(config.seed, g, k, pop_size);
            let a = tournament(&mut rng, &fitness);
            let b = tournament(&mut rng, &fitness);
            let mut child = pop[a].clone();
            if rng.random::<f64>() < config.crossover_rate {
                for (t, gene) in child.iter_mut().enumerate() {
                    if rng.random::<bool>() {
                        *gene = pop[b][t];
                    }
                }
            }
            for (t, gene) in child.iter_mut().enumerate() {
                if rng.random::<f64>() < config.mutation_rate {
                    *gene = (*gene + normal.sample(&mut rng)).clamp(lo[t], hi[t]);
                }
            }
            next.push(child);
        }
        pop = next;
        fitness = eval.evaluate(&pop);
        best_k = argmax(&fitness);
        if fitness[best_k] > best.1 {
            best = (pop[best_k].clone(), fitness[best_k]);
        }
        history.push(best.1);
        if g % 10 == 0 {
            debug!("generation {g}: best {:.4}, {} distinct evaluations", best.1, eval.cache.len());
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return Err(StackelbergError::NoFeasibleResponse);
    }
    info!("price search done: leader profit {:.2} after {} evaluations", best.1, eval.cache.len());
    let evals = eval.cache.len();
    finish(best.0, history, seeded_flat_best, evals)
}

/// Leader profit and traded volume at each flat price of `grid`.
pub fn fixed_price_sweep(
    scenario: &Scenario,
    plans: &[PlanDecision],
    grid: &[f64],
    convention: ArrivalConvention,
) -> Result<Vec<FlatPoint>, StackelbergError> {
    let schedules: Vec<PriceSchedule> = grid
        .iter()
        .map(|&p| PriceSchedule::flat(p, scenario))
        .collect::<Result<_, _>>()?;
    schedules
        .par_iter()
        .map(|prices| {
            let sol = follower_best_response(prices, plans, scenario)?;
            let acc = leader_account(&sol.schedules, prices.as_slice(), scenario, convention);
            Ok(FlatPoint {
                price: prices.as_slice()[0],
                leader_profit: acc.profit,
                total_volume: acc.bought,
            })
        })
        .collect()
}

/// The sweep point with the highest leader profit (lowest price on ties).
pub fn best_flat(points: &[FlatPoint]) -> Option<FlatPoint> {
    let profits: Vec<f64> = points.iter().map(|p| p.leader_profit).collect();
    (!points.is_empty()).then(|| points[argmax(&profits)])
}

/// Scenario parameters the sensitivity study can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensitivityParam {
    /// Operating cost of one vehicle for one period on the road.
    K3,
    /// Cavern injection cap per period.
    Qtrans,
}

impl fmt::Display for SensitivityParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SensitivityParam::K3 => "K3",
            SensitivityParam::Qtrans => "Qtrans",
        })
    }
}

impl FromStr for SensitivityParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "k3" => Ok(SensitivityParam::K3),
            "qtrans" => Ok(SensitivityParam::Qtrans),
            _ => Err(format!("unknown sensitivity parameter `{s}` (expected K3 or Qtrans)")),
        }
    }
}

impl SensitivityParam {
    pub fn apply(self, scenario: &Scenario, value: f64) -> Result<Scenario, StackelbergError> {
        scenario
            .modified(|d| match self {
                SensitivityParam::K3 => d.transport.op_cost_per_period = value,
                SensitivityParam::Qtrans => d.cavern.max_injection = value,
            })
            .map_err(|source| StackelbergError::SweepValue {
                param: self,
                value,
                source,
            })
    }
}

/// Planning outcome of one structure inside a sensitivity point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub label: String,
    pub total: f64,
    pub block_values: Vec<f64>,
    pub stable: bool,
}

/// One value of a sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub param: SensitivityParam,
    pub value: f64,
    /// Scheduling equilibrium (injection-cap sweeps).
    pub leader_profit: Option<f64>,
    pub follower_profits: Vec<UnitProfit>,
    pub best_prices: Option<Vec<f64>>,
    /// Planning outcome (vehicle-cost sweeps).
    pub structures: Vec<StructureSummary>,
    pub selected_structure: Option<String>,
}

/// Fixed inputs shared by every point of a sensitivity sweep.
#[derive(Debug, Clone)]
pub struct SweepContext<'a> {
    pub plans: &'a [PlanDecision],
    pub ga: &'a GAConfig,
    pub convention: ArrivalConvention,
    pub planning_prices: Option<&'a PriceSchedule>,
}

/// Re-solves the game for each value of one parameter.
///
/// Injection-cap values re-run the price search with the plans fixed; they
/// are processed in increasing order and each search is seeded with the
/// previous best prices. Vehicle-cost values re-run the whole planning study,
/// since the stable structure can change.
pub fn sensitivity_sweep(
    scenario: &Scenario,
    param: SensitivityParam,
    values: &[f64],
    ctx: &SweepContext<'_>,
) -> Result<Vec<SensitivityPoint>, StackelbergError> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out: Vec<Option<SensitivityPoint>> = vec![None; values.len()];
    let mut warm: Vec<PriceSchedule> = Vec::new();
    for k in order {
        let value = values[k];
        let s = param.apply(scenario, value)?;
        let point = match param {
            SensitivityParam::Qtrans => {
                let rep = optimize_prices(&s, ctx.plans, ctx.ga, ctx.convention, &warm)?;
                warm = vec![rep.best_prices.clone()];
                info!("{param} = {value}: leader profit {:.2}", rep.leader_profit);
                SensitivityPoint {
                    param,
                    value,
                    leader_profit: Some(rep.leader_profit),
                    follower_profits: rep.follower_profits,
                    best_prices: Some(rep.best_prices.into_vec()),
                    structures: Vec::new(),
                    selected_structure: None,
                }
            }
            SensitivityParam::K3 => {
                let prices = ctx
                    .planning_prices
                    .cloned()
                    .unwrap_or_else(|| PriceSchedule::planning_default(&s));
                let study = run_planning_study(&s, &prices)?;
                let structures = study
                    .structures
                    .iter()
                    .zip(&study.verdicts)
                    .map(|(v, verdict)| StructureSummary {
                        label: v.structure.label(),
                        total: v.total,
                        block_values: v.block_values.clone(),
                        stable: verdict.stable,
                    })
                    .collect();
                info!("{param} = {value}: selected {}", study.structures[study.selected()].structure);
                SensitivityPoint {
                    param,
                    value,
                    leader_profit: None,
                    follower_profits: Vec::new(),
                    best_prices: None,
                    structures,
                    selected_structure: Some(study.structures[study.selected()].structure.label()),
                }
            }
        };
        out[k] = Some(point);
    }
    Ok(out.into_iter().map(|p| p.expect("every value visited")).collect())
}

/// Surplus a group earns by cooperating (best hub) over its members
/// standing alone, each solved in isolation at the planning price.
pub fn coalition_surplus(
    scenario: &Scenario,
    members: &[usize],
    prices: &PriceSchedule,
) -> Result<f64, StackelbergError> {
    let ch = crate::coalition::characteristic_function(members, scenario, prices)?;
    let together = ch.get(members).expect("full group evaluated");
    let alone: f64 = members.iter().map(|&i| ch.get(&[i]).expect("singleton evaluated")).sum();
    Ok(together - alone)
}

/// Locates the vehicle operating cost at which a group's cooperation
/// surplus changes sign, by bisection on [lo, hi]. Returns `None` when the
/// surplus has the same sign at both ends.
pub fn surplus_threshold(
    scenario: &Scenario,
    members: &[usize],
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Option<f64>, StackelbergError> {
    let surplus = |k3: f64| -> Result<f64, StackelbergError> {
        let s = SensitivityParam::K3.apply(scenario, k3)?;
        coalition_surplus(&s, members, &PriceSchedule::planning_default(&s))
    };
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (surplus(a)?, surplus(b)?);
    if (fa > 0.0) == (fb > 0.0) {
        return Ok(None);
    }
    let a_positive = fa > 0.0;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if (surplus(mid)? > 0.0) == a_positive {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(Some(0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlanDecision;

    fn tiny() -> Scenario {
        Scenario::from_json(include_str!("../fixtures/tiny_case.json")).unwrap()
    }

    fn tiny_plans() -> Vec<PlanDecision> {
        vec![
            PlanDecision::new(0, 0, Destination::Cavern, 3),
            PlanDecision::new(1, 3, Destination::Cavern, 2),
        ]
    }

    fn small_ga(seed: u64) -> GAConfig {
        GAConfig {
            population: 12,
            generations: 15,
            seed,
            flat_seeds: 5,
            ..GAConfig::default()
        }
    }

    #[test]
    fn price_band_is_enforced() {
        let s = tiny();
        assert!(PriceSchedule::new(vec![5.0, 9.0, 13.0], &s).is_ok());
        assert!(matches!(
            PriceSchedule::new(vec![4.0, 9.0, 9.0], &s),
            Err(StackelbergError::OutOfBand { period: 0, .. })
        ));
        assert!(PriceSchedule::new(vec![9.0; 2], &s).is_err());
        assert!(PriceSchedule::flat(14.0, &s).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(GAConfig::default().validate().is_ok());
        assert!(GAConfig { population: 1, ..GAConfig::default() }.validate().is_err());
        assert!(GAConfig { elitism: 60, ..GAConfig::default() }.validate().is_err());
        assert!(GAConfig { mutation_rate: 1.5, ..GAConfig::default() }.validate().is_err());
    }

    #[test]
    fn conventions_parse() {
        assert_eq!("strict".parse::<ArrivalConvention>().unwrap(), ArrivalConvention::Strict);
        assert!("later".parse::<ArrivalConvention>().is_err());
        assert_eq!("qtrans".parse::<SensitivityParam>().unwrap(), SensitivityParam::Qtrans);
    }

    #[test]
    fn retail_price_leaves_no_margin() {
        let s = tiny()
            .modified(|d| d.cavern.price_ceiling = vec![d.cavern.retail_price; 3])
            .unwrap();
        let f = leader_fitness(&PriceSchedule::flat(15.0, &s).unwrap(), &s, &tiny_plans(), ArrivalConvention::Departure)
            .unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn unprofitable_prices_mean_no_trade() {
        // Processing alone costs at least 6 $/kg, above the 5 $/kg floor.
        let s = tiny()
            .modified(|d| {
                d.tariff.electricity_price = vec![6.0; 3];
            })
            .unwrap();
        let sol = follower_best_response(&PriceSchedule::floor(&s), &tiny_plans(), &s).unwrap();
        assert_eq!(sol.schedules.iter().map(|x| x.total_shipped()).sum::<f64>(), 0.0);
        let fixed: f64 = sol.costs.iter().map(|c| c.equipment_invest + c.fleet_invest).sum();
        assert!((sol.objective + fixed).abs() < 1e-9);
        assert_eq!(leader_fitness(&PriceSchedule::floor(&s), &s, &tiny_plans(), ArrivalConvention::Departure).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_band_returns_the_only_schedule() {
        let s = tiny()
            .modified(|d| {
                d.cavern.price_floor = vec![9.0; 3];
                d.cavern.price_ceiling = vec![9.0; 3];
            })
            .unwrap();
        let rep = optimize_prices(&s, &tiny_plans(), &small_ga(1), ArrivalConvention::Departure, &[]).unwrap();
        assert_eq!(rep.best_prices.as_slice(), &[9.0; 3]);
        assert_eq!(rep.fitness_history.len(), 1);
    }

    #[test]
    fn search_is_deterministic_and_monotone() {
        let s = tiny();
        let a = optimize_prices(&s, &tiny_plans(), &small_ga(3), ArrivalConvention::Departure, &[]).unwrap();
        let b = optimize_prices(&s, &tiny_plans(), &small_ga(3), ArrivalConvention::Departure, &[]).unwrap();
        assert_eq!(a, b);
        assert!(a.fitness_history.windows(2).all(|w| w[1] >= w[0]));
        assert!(a.follower_gap <= 1e-6);
        let flat = fixed_price_sweep(&s, &tiny_plans(), &flat_grid(&s, 5), ArrivalConvention::Departure).unwrap();
        assert!(a.leader_profit >= best_flat(&flat).unwrap().leader_profit - 1e-9);
    }

    #[test]
    fn leader_identity_holds() {
        let s = tiny();
        let rep = optimize_prices(&s, &tiny_plans(), &small_ga(5), ArrivalConvention::Strict, &[]).unwrap();
        let p = rep.best_prices.as_slice();
        let mut outlay = 0.0;
        for (sched, series) in rep.schedules.iter().zip(&rep.transaction_series) {
            if sched.plan.is_cavern_bound() {
                outlay += series.iter().zip(p).map(|(q, pt)| q * pt).sum::<f64>();
            }
        }
        let delivered: f64 = rep.injection_series.iter().sum();
        let expected = s.cavern.retail_price * delivered - outlay;
        assert!((rep.leader_profit - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        for (t, &q) in rep.injection_series.iter().enumerate() {
            assert!(q <= s.cavern.max_injection + 1e-6, "period {t}");
        }
    }

    #[test]
    fn flat_sweep_at_retail_price_earns_nothing() {
        let s = tiny()
            .modified(|d| d.cavern.price_ceiling = vec![d.cavern.retail_price; 3])
            .unwrap();
        let pts = fixed_price_sweep(&s, &tiny_plans(), &[15.0], ArrivalConvention::Departure).unwrap();
        assert_eq!(pts[0].leader_profit, 0.0);
        assert!(fixed_price_sweep(&s, &tiny_plans(), &[20.0], ArrivalConvention::Departure).is_err());
    }

    #[test]
    fn routing_units_group_feeders_with_their_hub() {
        let plans = vec![
            PlanDecision::new(0, 0, Destination::Plant(1), 1),
            PlanDecision::new(1, 2, Destination::Cavern, 1),
            PlanDecision::new(2, 3, Destination::Cavern, 1),
        ];
        assert_eq!(routing_units(&plans), vec![(1, vec![0, 1]), (2, vec![2])]);
    }
}
