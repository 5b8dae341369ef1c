//! Planning-stage cooperative game: coalition structures with transit hubs,
//! the joint planning problem per structure, Shapley allocation and the two
//! stability tests (collective rationality, preferred alternative).
//!
//! Plant indices are 0-based in the API; labels print them 1-based with the
//! hub starred, e.g. `{1,2*},{3}`.

use std::collections::BTreeMap;
use std::fmt;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{
    fleet_size_bounds, solve_schedule, CostBreakdown, Destination, FleetChoice, ModelInputs,
    PlanDecision, PlantError, Schedule, ScheduleSolution,
};
use crate::scenario::{Mode, Scenario};
use crate::stackelberg::PriceSchedule;

/// Largest plant count [`enumerate_structures`] accepts. Seven plants already
/// give 877 partitions before hub choices.
pub const MAX_ENUMERATED_PLANTS: usize = 6;

/// Relative slack used when comparing profits across structures.
const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CoalitionError {
    #[error("structure enumeration supports at most {MAX_ENUMERATED_PLANTS} plants, got {0}")]
    TooManyPlants(usize),
    #[error("invalid coalition structure: {0}")]
    InvalidStructure(String),
    #[error("price schedule has {found} periods, scenario has {expected}")]
    PriceLength { expected: usize, found: usize },
    #[error("no all-singleton structure among the inputs; collective rationality cannot be checked")]
    MissingBaseline,
    #[error("{0} imputation lists for {1} structures")]
    ImputationCount(usize, usize),
    #[error(transparent)]
    Plant(#[from] PlantError),
}

/// One cooperating group of plants. Members are sorted; a multi-plant block
/// names one member as its transit hub.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Block {
    pub members: Vec<usize>,
    pub hub: Option<usize>,
}

impl Block {
    pub fn singleton(plant: usize) -> Self {
        Block {
            members: vec![plant],
            hub: None,
        }
    }

    /// Builds a block; a single member never carries a hub.
    pub fn new(mut members: Vec<usize>, hub: Option<usize>) -> Result<Self, CoalitionError> {
        members.sort_unstable();
        if members.is_empty() {
            return Err(CoalitionError::InvalidStructure("empty block".into()));
        }
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(CoalitionError::InvalidStructure(format!("repeated member in {members:?}")));
        }
        match (members.len(), hub) {
            (1, None) => {}
            (1, Some(_)) => {
                return Err(CoalitionError::InvalidStructure(
                    "a singleton block routes straight to the cavern and has no hub".into(),
                ))
            }
            (_, None) => {
                return Err(CoalitionError::InvalidStructure(format!(
                    "block {} needs a transit hub",
                    fmt_members(&members, None)
                )))
            }
            (_, Some(h)) if !members.contains(&h) => {
                return Err(CoalitionError::InvalidStructure(format!(
                    "hub {} is not a member of {}",
                    h + 1,
                    fmt_members(&members, None)
                )))
            }
            _ => {}
        }
        Ok(Block { members, hub })
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    /// The member shipping to the cavern.
    pub fn cavern_member(&self) -> usize {
        self.hub.unwrap_or(self.members[0])
    }

    /// Equipment choices allowed for each member: the hub liquefies, feeders
    /// compress for the short hop, a singleton may use any type.
    fn equipment_options(&self, scenario: &Scenario) -> Vec<Vec<usize>> {
        self.members
            .iter()
            .map(|&i| match self.hub {
                None => (0..scenario.num_equipment_types()).collect(),
                Some(h) if h == i => scenario.equipment_of_mode(Mode::Liquefied),
                Some(_) => scenario.equipment_of_mode(Mode::Compressed),
            })
            .collect()
    }

    /// Every plan combination the block can choose, fleet size left at 0.
    pub fn candidate_plans(&self, scenario: &Scenario) -> Vec<Vec<PlanDecision>> {
        let options = self.equipment_options(scenario);
        let route = |i: usize| match self.hub {
            Some(h) if h != i => Destination::Plant(h),
            _ => Destination::Cavern,
        };
        let mut out = vec![Vec::new()];
        for (k, &i) in self.members.iter().enumerate() {
            out = out
                .into_iter()
                .flat_map(|prefix: Vec<PlanDecision>| {
                    options[k].iter().map(move |&e| {
                        let mut p = prefix.clone();
                        p.push(PlanDecision::new(i, e, route(i), 0));
                        p
                    })
                })
                .collect();
        }
        out
    }
}

fn fmt_members(members: &[usize], hub: Option<usize>) -> String {
    let inner: Vec<String> = members
        .iter()
        .map(|&i| if Some(i) == hub { format!("{}*", i + 1) } else { (i + 1).to_string() })
        .collect();
    format!("{{{}}}", inner.join(","))
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&fmt_members(&self.members, self.hub))
    }
}

/// Disjoint blocks, ordered by their smallest member. Usually a partition of
/// all plants; sub-coalition evaluations use structures over a subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoalitionStructure {
    pub blocks: Vec<Block>,
}

impl CoalitionStructure {
    pub fn new(mut blocks: Vec<Block>) -> Result<Self, CoalitionError> {
        if blocks.is_empty() {
            return Err(CoalitionError::InvalidStructure("no blocks".into()));
        }
        blocks.sort_by_key(|b| b.members[0]);
        let mut all: Vec<usize> = blocks.iter().flat_map(|b| b.members.iter().copied()).collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(CoalitionError::InvalidStructure("blocks overlap".into()));
        }
        Ok(CoalitionStructure { blocks })
    }

    pub fn all_singletons(plants: usize) -> Self {
        CoalitionStructure {
            blocks: (0..plants).map(Block::singleton).collect(),
        }
    }

    /// Parses labels such as `{1,2*},{3}` (1-based, hub starred).
    pub fn parse(label: &str) -> Result<Self, CoalitionError> {
        let bad = || CoalitionError::InvalidStructure(format!("cannot parse `{label}`"));
        let mut blocks = Vec::new();
        let mut rest = label.trim();
        while !rest.is_empty() {
            rest = rest.strip_prefix('{').ok_or_else(bad)?;
            let end = rest.find('}').ok_or_else(bad)?;
            let mut members = Vec::new();
            let mut hub = None;
            for tok in rest[..end].split(',') {
                let tok = tok.trim();
                let (num, starred) = match tok.strip_suffix('*') {
                    Some(n) => (n, true),
                    None => (tok, false),
                };
                let id: usize = num.parse().map_err(|_| bad())?;
                if id == 0 {
                    return Err(bad());
                }
                if starred {
                    if hub.is_some() {
                        return Err(CoalitionError::InvalidStructure(format!("two hubs in `{label}`")));
                    }
                    hub = Some(id - 1);
                }
                members.push(id - 1);
            }
            blocks.push(Block::new(members, hub)?);
            rest = rest[end + 1..].trim_start();
            rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
        }
        CoalitionStructure::new(blocks)
    }

    pub fn plants(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.blocks.iter().flat_map(|b| b.members.iter().copied()).collect();
        all.sort_unstable();
        all
    }

    pub fn is_partition_of(&self, plants: usize) -> bool {
        self.plants() == (0..plants).collect::<Vec<_>>()
    }

    pub fn is_all_singletons(&self) -> bool {
        self.blocks.iter().all(Block::is_singleton)
    }

    /// The underlying partition with hub choices dropped.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.members.clone()).collect()
    }

    pub fn block_of(&self, plant: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.members.contains(&plant))
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    fn check_against(&self, scenario: &Scenario) -> Result<(), CoalitionError> {
        if let Some(&i) = self.plants().iter().find(|&&i| i >= scenario.num_plants()) {
            return Err(CoalitionError::InvalidStructure(format!(
                "plant {} does not exist (scenario has {})",
                i + 1,
                scenario.num_plants()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for CoalitionStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.blocks.iter().map(Block::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// All set partitions of `0..n` as restricted growth strings.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    fn grow(i: usize, n: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b].push(i);
            grow(i + 1, n, cur, out);
            cur[b].pop();
        }
        cur.push(vec![i]);
        grow(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    grow(0, n, &mut Vec::new(), &mut out);
    out
}

/// Every partition of `0..plants`, each multi-plant block expanded over its
/// hub choices. Order: most blocks first, then by the sorted list of
/// multi-plant blocks, then hub choices in member order; the all-singleton
/// structure always comes first.
pub fn enumerate_structures(plants: usize) -> Result<Vec<CoalitionStructure>, CoalitionError> {
    if plants > MAX_ENUMERATED_PLANTS {
        return Err(CoalitionError::TooManyPlants(plants));
    }
    if plants == 0 {
        return Ok(Vec::new());
    }
    let mut parts = set_partitions(plants);
    let key = |p: &Vec<Vec<usize>>| {
        let mut multi: Vec<Vec<usize>> = p.iter().filter(|b| b.len() > 1).cloned().collect();
        multi.sort();
        (std::cmp::Reverse(p.len()), multi)
    };
    parts.sort_by_key(key);

    let mut out = Vec::new();
    for part in parts {
        let mut partial: Vec<Vec<Block>> = vec![Vec::new()];
        let mut sorted = part.clone();
        sorted.sort_by_key(|b| b[0]);
        for members in sorted {
            let hubs: Vec<Option<usize>> = if members.len() == 1 {
                vec![None]
            } else {
                members.iter().map(|&h| Some(h)).collect()
            };
            partial = partial
                .into_iter()
                .flat_map(|prefix| {
                    let members = members.clone();
                    hubs.iter().map(move |&h| {
                        let mut p = prefix.clone();
                        p.push(Block { members: members.clone(), hub: h });
                        p
                    })
                })
                .collect();
        }
        out.extend(partial.into_iter().map(|blocks| CoalitionStructure { blocks }));
    }
    Ok(out)
}

/// Value of one coalition structure at its best plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureValue {
    pub structure: CoalitionStructure,
    /// Daily profit of each block, in block order ($/day).
    pub block_values: Vec<f64>,
    pub total: f64,
    /// What each block would earn with the cavern to itself ($/day).
    pub isolated_values: Vec<f64>,
    /// Chosen plan per plant, fleet size filled in.
    pub plans: Vec<PlanDecision>,
    pub schedules: Vec<Schedule>,
    pub costs: Vec<CostBreakdown>,
    /// Joint MILPs solved to settle the structure.
    pub evaluations: usize,
    pub diagnostics: Vec<String>,
}

impl StructureValue {
    /// A value record without supporting plans, e.g. from published numbers.
    pub fn from_values(structure: CoalitionStructure, block_values: Vec<f64>) -> Self {
        assert_eq!(structure.blocks.len(), block_values.len(), "one value per block");
        StructureValue {
            total: block_values.iter().sum(),
            isolated_values: block_values.clone(),
            structure,
            block_values,
            plans: Vec::new(),
            schedules: Vec::new(),
            costs: Vec::new(),
            evaluations: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn block_value(&self, block: &Block) -> Option<f64> {
        self.structure
            .blocks
            .iter()
            .position(|b| b == block)
            .map(|k| self.block_values[k])
    }

    pub fn plan_of(&self, plant: usize) -> Option<&PlanDecision> {
        self.plans.iter().find(|p| p.plant == plant)
    }
}

/// One candidate of a block solved on its own.
struct Isolated {
    plans: Vec<PlanDecision>,
    value: f64,
    solution: ScheduleSolution,
}

fn solve_open_fleet(
    plans: &[PlanDecision],
    scenario: &Scenario,
    prices: &[f64],
) -> Result<ScheduleSolution, PlantError> {
    let inputs = ModelInputs {
        fleet: FleetChoice::Optimize,
        ..ModelInputs::new(prices)
    };
    solve_schedule(plans, scenario, &inputs)
}

fn block_profit(sol: &ScheduleSolution, block: &Block) -> f64 {
    sol.schedules
        .iter()
        .zip(&sol.costs)
        .filter(|(s, _)| block.members.contains(&s.plan.plant))
        .map(|(_, c)| c.profit)
        .sum()
}

/// Profit of a block that ships nothing: it still buys the cheapest
/// equipment allowed to each member.
fn idle_value(block: &Block, scenario: &Scenario) -> f64 {
    -block
        .equipment_options(scenario)
        .iter()
        .map(|opts| {
            opts.iter()
                .map(|&e| scenario.catalog.invest_daily[e])
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
}

/// Solves the planning problem of a structure: every block picks equipment
/// and fleet sizes, and all blocks are scheduled jointly under the shared
/// injection cap at the given planning price.
///
/// Each block's candidates are first solved alone. The sum of the isolated
/// optima bounds the joint value of a combination from above, so combinations
/// are visited in decreasing bound order and the search stops once the
/// incumbent reaches the next bound.
pub fn solve_planning(
    structure: &CoalitionStructure,
    scenario: &Scenario,
    prices: &PriceSchedule,
) -> Result<StructureValue, CoalitionError> {
    structure.check_against(scenario)?;
    let p = prices.as_slice();
    if p.len() != scenario.periods() {
        return Err(CoalitionError::PriceLength {
            expected: scenario.periods(),
            found: p.len(),
        });
    }
    let mut diagnostics = Vec::new();

    let jobs: Vec<(usize, Vec<PlanDecision>)> = structure
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(b, block)| block.candidate_plans(scenario).into_iter().map(move |c| (b, c)))
        .collect();
    let solved: Vec<Result<ScheduleSolution, PlantError>> = jobs
        .par_iter()
        .map(|(_, plans)| solve_open_fleet(plans, scenario, p))
        .collect();
    let mut options: Vec<Vec<Isolated>> = structure.blocks.iter().map(|_| Vec::new()).collect();
    let mut evaluations = jobs.len();
    for ((b, plans), res) in jobs.into_iter().zip(solved) {
        match res {
            Ok(sol) => options[b].push(Isolated {
                plans: sol.schedules.iter().map(|s| s.plan.clone()).collect(),
                value: sol.objective,
                solution: sol,
            }),
            Err(e) => diagnostics.push(format!(
                "block {}: candidate {:?} failed: {e}",
                structure.blocks[b],
                plans.iter().map(|q| q.equipment).collect::<Vec<_>>()
            )),
        }
    }

    // Blocks with no solvable candidate stay idle.
    let active: Vec<usize> = (0..options.len()).filter(|&b| !options[b].is_empty()).collect();
    for b in 0..options.len() {
        if options[b].is_empty() {
            diagnostics.push(format!(
                "block {} has no solvable plan; valued as idle",
                structure.blocks[b]
            ));
        }
    }

    // Combinations of one candidate per active block, best bound first.
    let mut combos: Vec<(f64, Vec<usize>)> = vec![(0.0, Vec::new())];
    for &b in &active {
        combos = combos
            .into_iter()
            .flat_map(|(ub, pick)| {
                options[b].iter().enumerate().map(move |(k, o)| {
                    let mut pick = pick.clone();
                    pick.push(k);
                    (ub + o.value, pick)
                })
            })
            .collect();
    }
    combos.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

    let isolated_values: Vec<f64> = options
        .iter()
        .zip(&structure.blocks)
        .map(|(o, block)| {
            o.iter()
                .map(|c| c.value)
                .fold(f64::NEG_INFINITY, f64::max)
                .max(idle_value(block, scenario))
        })
        .collect();

    let mut best: Option<ScheduleSolution> = None;
    if active.len() == 1 {
        // A lone block's isolated optimum is already the joint optimum.
        let b = active[0];
        let pick = combos[0].1[0];
        best = Some(options[b].swap_remove(pick).solution);
    } else if !active.is_empty() {
        for (ub, pick) in &combos {
            if let Some(inc) = &best {
                if inc.objective >= ub - VALUE_TOL * ub.abs().max(1.0) {
                    break;
                }
            }
            let plans: Vec<PlanDecision> = active
                .iter()
                .zip(pick)
                .flat_map(|(&b, &k)| options[b][k].plans.iter().cloned())
                .collect();
            // Fleets stay open: a binding cap can change the best fleet size.
            let res = solve_open_fleet(&plans, scenario, p);
            evaluations += 1;
            match res {
                Ok(sol) => {
                    if best.as_ref().is_none_or(|inc| sol.objective > inc.objective) {
                        best = Some(sol);
                    }
                }
                Err(e) => diagnostics.push(format!("joint solve for {structure} failed: {e}")),
            }
        }
    }

    let mut block_values = Vec::with_capacity(structure.blocks.len());
    for block in &structure.blocks {
        let solved_here = best
            .as_ref()
            .filter(|sol| sol.schedules.iter().any(|s| block.members.contains(&s.plan.plant)));
        block_values.push(match solved_here {
            Some(sol) => block_profit(sol, block),
            None => idle_value(block, scenario),
        });
    }
    let (plans, schedules, costs) = match best {
        Some(sol) => (
            sol.schedules.iter().map(|s| s.plan.clone()).collect(),
            sol.schedules,
            sol.costs,
        ),
        None => (Vec::new(), Vec::new(), Vec::new()),
    };
    debug!("{structure}: total {:.2} after {evaluations} solves", block_values.iter().sum::<f64>());
    Ok(StructureValue {
        total: block_values.iter().sum(),
        isolated_values,
        structure: structure.clone(),
        block_values,
        plans,
        schedules,
        costs,
        evaluations,
        diagnostics,
    })
}

/// Method used to split a block's value among its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMethod {
    Shapley,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub players: Vec<usize>,
    /// Payoff of each player, aligned with `players` ($/day).
    pub payoffs: Vec<f64>,
    pub method: AllocationMethod,
}

impl Imputation {
    pub fn payoff_of(&self, player: usize) -> Option<f64> {
        self.players.iter().position(|&p| p == player).map(|k| self.payoffs[k])
    }

    pub fn total(&self) -> f64 {
        self.payoffs.iter().sum()
    }
}

/// Shapley value over `players`. `value_of` receives sorted sub-coalitions
/// and is called once per nonempty subset; the empty set is worth 0.
pub fn shapley_allocate(players: &[usize], mut value_of: impl FnMut(&[usize]) -> f64) -> Imputation {
    let n = players.len();
    assert!(n < 24, "Shapley enumeration over {n} players is impractical");
    let mut sorted = players.to_vec();
    sorted.sort_unstable();
    let subset = |mask: usize| -> Vec<usize> { (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| sorted[k]).collect() };
    let mut v = vec![0.0; 1 << n];
    for (mask, slot) in v.iter_mut().enumerate().skip(1) {
        *slot = value_of(&subset(mask));
    }
    // weight[s] = s! (n - s - 1)! / n!
    let mut fact = vec![1.0f64; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    let weight: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect();
    let mut phi = vec![0.0; n];
    for (k, slot) in phi.iter_mut().enumerate() {
        let bit = 1 << k;
        for mask in 0..(1usize << n) {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                *slot += weight[s] * (v[mask | bit] - v[mask]);
            }
        }
    }
    // Report in the caller's player order.
    let payoffs = players
        .iter()
        .map(|p| phi[sorted.iter().position(|q| q == p).expect("player present")])
        .collect();
    Imputation {
        players: players.to_vec(),
        payoffs,
        method: AllocationMethod::Shapley,
    }
}

/// Standalone values of sub-coalitions, keyed by sorted member list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    values: BTreeMap<String, f64>,
}

fn key_of(members: &[usize]) -> String {
    let mut m = members.to_vec();
    m.sort_unstable();
    fmt_members(&m, None)
}

impl Characteristic {
    pub fn insert(&mut self, members: &[usize], value: f64) {
        self.values.insert(key_of(members), value);
    }

    pub fn get(&self, members: &[usize]) -> Option<f64> {
        if members.is_empty() {
            return Some(0.0);
        }
        self.values.get(&key_of(members)).copied()
    }

    /// Entries as (label, value), sorted by label.
    pub fn entries(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Reads sub-coalition values off already evaluated structures: single
    /// plants from the all-singleton structure, larger groups from their best
    /// hub variant.
    pub fn from_structures(values: &[StructureValue]) -> Self {
        let mut c = Characteristic::default();
        for sv in values {
            for (block, &v) in sv.structure.blocks.iter().zip(&sv.block_values) {
                if block.is_singleton() {
                    if sv.structure.is_all_singletons() {
                        c.insert(&block.members, v);
                    }
                } else {
                    let slot = c.values.entry(key_of(&block.members)).or_insert(f64::NEG_INFINITY);
                    *slot = slot.max(v);
                }
            }
        }
        c
    }

    /// Standalone values recorded while solving structures: every block's
    /// best isolated plan, maximized over hub choices. Covers every subset
    /// when `values` is a complete enumeration.
    pub fn from_isolated(values: &[StructureValue]) -> Self {
        let mut c = Characteristic::default();
        for sv in values {
            for (block, &v) in sv.structure.blocks.iter().zip(&sv.isolated_values) {
                let slot = c.values.entry(key_of(&block.members)).or_insert(f64::NEG_INFINITY);
                *slot = slot.max(v);
            }
        }
        c
    }
}

/// Values every nonempty subset of `plants` would earn on its own (no other
/// plant competing for injection capacity), best hub chosen for groups.
pub fn characteristic_function(
    plants: &[usize],
    scenario: &Scenario,
    prices: &PriceSchedule,
) -> Result<Characteristic, CoalitionError> {
    let n = plants.len();
    if n > MAX_ENUMERATED_PLANTS {
        return Err(CoalitionError::TooManyPlants(n));
    }
    let mut jobs = Vec::new();
    for mask in 1..(1usize << n) {
        let members: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| plants[k]).collect();
        if members.len() == 1 {
            jobs.push(CoalitionStructure::new(vec![Block::singleton(members[0])])?);
        } else {
            for &h in &members {
                jobs.push(CoalitionStructure::new(vec![Block::new(members.clone(), Some(h))?])?);
            }
        }
    }
    let mut c = Characteristic::default();
    for s in &jobs {
        let v = solve_planning(s, scenario, prices)?;
        let members = &s.blocks[0].members;
        let best = c.get(members).unwrap_or(f64::NEG_INFINITY).max(v.total);
        c.insert(members, best);
    }
    Ok(c)
}

/// Shapley split of every block of a structure. The block itself is worth
/// its in-structure value; proper sub-coalitions take `characteristic`.
pub fn structure_imputations(value: &StructureValue, characteristic: &Characteristic) -> Vec<Imputation> {
    value
        .structure
        .blocks
        .iter()
        .zip(&value.block_values)
        .map(|(block, &v_block)| {
            shapley_allocate(&block.members, |sub| {
                if sub == block.members.as_slice() {
                    v_block
                } else {
                    characteristic.get(sub).unwrap_or_else(|| {
                        panic!("no characteristic value for {}", fmt_members(sub, None))
                    })
                }
            })
        })
        .collect()
}

/// Outcome of the two stability tests for one structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub structure: usize,
    pub label: String,
    /// Blocks worth less than their members' standalone values.
    pub cr_violations: Vec<String>,
    /// Structures that are a preferred alternative to this one.
    pub dominated_by: Vec<usize>,
    pub stable: bool,
}

fn approx_ge(a: f64, b: f64) -> bool {
    a >= b - VALUE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn strictly_greater(a: f64, b: f64) -> bool {
    !approx_ge(b, a)
}

/// Applies the stability tests to a complete enumeration.
///
/// A block violates collective rationality when it is worth less than the
/// sum of its members' values in the all-singleton structure. Structure S is
/// dominated by S' when S' has a strictly larger total and every block of S'
/// that does not already appear in S is worth at least what its members are
/// paid in S. Stable structures pass both tests.
pub fn stability_report(
    values: &[StructureValue],
    imputations: &[Vec<Imputation>],
) -> Result<Vec<StabilityVerdict>, CoalitionError> {
    if values.len() != imputations.len() {
        return Err(CoalitionError::ImputationCount(imputations.len(), values.len()));
    }
    let baseline = values
        .iter()
        .find(|v| v.structure.is_all_singletons())
        .ok_or(CoalitionError::MissingBaseline)?;
    let standalone = |i: usize| -> f64 {
        baseline
            .structure
            .block_of(i)
            .map(|b| baseline.block_values[b])
            .unwrap_or(0.0)
    };
    let payoff = |s: usize, i: usize| -> f64 {
        imputations[s]
            .iter()
            .find_map(|imp| imp.payoff_of(i))
            .unwrap_or(0.0)
    };

    let mut out = Vec::with_capacity(values.len());
    for (s, sv) in values.iter().enumerate() {
        let cr_violations: Vec<String> = sv
            .structure
            .blocks
            .iter()
            .zip(&sv.block_values)
            .filter(|(b, &v)| !b.is_singleton() && !approx_ge(v, b.members.iter().map(|&i| standalone(i)).sum()))
            .map(|(b, _)| b.to_string())
            .collect();
        let dominated_by: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|&(t, alt)| {
                t != s
                    && strictly_greater(alt.total, sv.total)
                    && alt
                        .structure
                        .blocks
                        .iter()
                        .zip(&alt.block_values)
                        .filter(|(b, _)| !sv.structure.blocks.contains(b))
                        .all(|(b, &v)| approx_ge(v, b.members.iter().map(|&i| payoff(s, i)).sum()))
            })
            .map(|(t, _)| t)
            .collect();
        out.push(StabilityVerdict {
            structure: s,
            label: sv.structure.label(),
            stable: cr_violations.is_empty() && dominated_by.is_empty(),
            cr_violations,
            dominated_by,
        });
    }
    Ok(out)
}

/// Index of the best hub variant of every partition, in enumeration order.
pub fn best_per_partition(values: &[StructureValue]) -> Vec<usize> {
    let mut best: Vec<(Vec<Vec<usize>>, usize)> = Vec::new();
    for (k, v) in values.iter().enumerate() {
        let part = v.structure.partition();
        match best.iter_mut().find(|(p, _)| *p == part) {
            Some((_, idx)) => {
                if v.total > values[*idx].total {
                    *idx = k;
                }
            }
            None => best.push((part, k)),
        }
    }
    best.into_iter().map(|(_, k)| k).collect()
}

/// Full planning-stage study over every hub-annotated structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningStudy {
    pub planning_prices: Vec<f64>,
    pub structures: Vec<StructureValue>,
    pub characteristic: Characteristic,
    /// Per structure, one Shapley imputation per block.
    pub imputations: Vec<Vec<Imputation>>,
    pub verdicts: Vec<StabilityVerdict>,
    pub best_per_partition: Vec<usize>,
}

impl PlanningStudy {
    pub fn stable(&self) -> Vec<usize> {
        self.verdicts.iter().filter(|v| v.stable).map(|v| v.structure).collect()
    }

    /// The structure carried into scheduling: the first stable one, or the
    /// highest total when none is stable.
    pub fn selected(&self) -> usize {
        self.stable().first().copied().unwrap_or_else(|| {
            let mut best = 0;
            for (k, v) in self.structures.iter().enumerate() {
                if v.total > self.structures[best].total {
                    best = k;
                }
            }
            best
        })
    }
}

/// Enumerates, solves and assesses every structure of the scenario.
pub fn run_planning_study(scenario: &Scenario, prices: &PriceSchedule) -> Result<PlanningStudy, CoalitionError> {
    let structures = enumerate_structures(scenario.num_plants())?;
    let mut values = Vec::with_capacity(structures.len());
    for s in &structures {
        let v = solve_planning(s, scenario, prices)?;
        info!("planning {}: total {:.2}", v.structure, v.total);
        values.push(v);
    }
    let characteristic = Characteristic::from_isolated(&values);
    let imputations: Vec<Vec<Imputation>> = values
        .iter()
        .map(|v| structure_imputations(v, &characteristic))
        .collect();
    let verdicts = stability_report(&values, &imputations)?;
    Ok(PlanningStudy {
        planning_prices: prices.as_slice().to_vec(),
        best_per_partition: best_per_partition(&values),
        structures: values,
        characteristic,
        imputations,
        verdicts,
    })
}

/// Result of iterated best responses among the routing units of a structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseOutcome {
    /// Final plans of each block.
    pub profile: Vec<Vec<PlanDecision>>,
    pub unit_profits: Vec<f64>,
    pub total: f64,
    pub rounds: usize,
    pub converged: bool,
}

/// A random plan profile: one random candidate per block, fleet sizes drawn
/// from their admissible range.
pub fn random_profile(structure: &CoalitionStructure, scenario: &Scenario, seed: u64) -> Vec<Vec<PlanDecision>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    structure
        .blocks
        .iter()
        .map(|block| {
            let cands = block.candidate_plans(scenario);
            let mut plans = cands[rng.random_range(0..cands.len())].clone();
            let unit_mass: f64 = block.members.iter().map(|&i| scenario.daily_generation(i)).sum();
            for p in &mut plans {
                let mode = p.mode(scenario);
                let (lo, hi) = fleet_size_bounds(unit_mass, scenario.vehicle_capacity(mode), p.travel_periods(scenario));
                p.fleet_size = rng.random_range(lo..=hi);
            }
            plans
        })
        .collect()
}

fn residual_cap(scenario: &Scenario, others: &[&ScheduleSolution]) -> Vec<f64> {
    let mut cap = vec![scenario.cavern.max_injection; scenario.periods()];
    for sol in others {
        for s in sol.schedules.iter().filter(|s| s.plan.is_cavern_bound()) {
            for (c, a) in cap.iter_mut().zip(s.arrivals(scenario)) {
                *c = (*c - a).max(0.0);
            }
        }
    }
    cap
}

/// Round-robin best responses: each routing unit in turn re-plans (equipment,
/// fleet and schedule) against the injection capacity the others leave free,
/// switching only on a strict improvement. Stops after a full round without
/// a switch or after `max_rounds`.
pub fn best_response_dynamics(
    structure: &CoalitionStructure,
    scenario: &Scenario,
    prices: &PriceSchedule,
    initial: Vec<Vec<PlanDecision>>,
    max_rounds: usize,
) -> Result<BestResponseOutcome, CoalitionError> {
    structure.check_against(scenario)?;
    let p = prices.as_slice();
    let units = structure.blocks.len();
    assert_eq!(initial.len(), units, "one plan set per block");

    // Initial schedules: units enter one after another with their fixed plans.
    let mut current: Vec<ScheduleSolution> = Vec::with_capacity(units);
    for plans in &initial {
        let others: Vec<&ScheduleSolution> = current.iter().collect();
        let cap = residual_cap(scenario, &others);
        let inputs = ModelInputs {
            injection_cap: Some(&cap),
            ..ModelInputs::new(p)
        };
        current.push(solve_schedule(plans, scenario, &inputs)?);
    }

    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        rounds += 1;
        let mut switched = false;
        for k in 0..units {
            let others: Vec<&ScheduleSolution> =
                current.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, s)| s).collect();
            let cap = residual_cap(scenario, &others);
            let inputs = ModelInputs {
                injection_cap: Some(&cap),
                fleet: FleetChoice::Optimize,
                ..ModelInputs::new(p)
            };
            let candidates = structure.blocks[k].candidate_plans(scenario);
            let responses: Vec<Result<ScheduleSolution, PlantError>> = candidates
                .par_iter()
                .map(|plans| solve_schedule(plans, scenario, &inputs))
                .collect();
            let mut best: Option<ScheduleSolution> = None;
            for r in responses {
                let sol = r?;
                if best.as_ref().is_none_or(|b| sol.objective > b.objective) {
                    best = Some(sol);
                }
            }
            if let Some(b) = best {
                if strictly_greater(b.objective, current[k].objective) {
                    debug!("unit {} improves {:.4} -> {:.4}", structure.blocks[k], current[k].objective, b.objective);
                    current[k] = b;
                    switched = true;
                }
            }
        }
        if !switched {
            converged = true;
            break;
        }
    }
    let unit_profits: Vec<f64> = current.iter().map(|s| s.objective).collect();
    Ok(BestResponseOutcome {
        profile: current
            .iter()
            .map(|s| s.schedules.iter().map(|x| x.plan.clone()).collect())
            .collect(),
        total: unit_profits.iter().sum(),
        unit_profits,
        rounds,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scenario {
        Scenario::from_json(include_str!("../fixtures/tiny_case.json")).unwrap()
    }

    fn labels(v: &[CoalitionStructure]) -> Vec<String> {
        v.iter().map(|s| s.label()).collect()
    }

    #[test]
    fn three_plants_give_ten_structures_over_five_partitions() {
        let all = enumerate_structures(3).unwrap();
        assert_eq!(
            labels(&all),
            [
                "{1},{2},{3}",
                "{1*,2},{3}",
                "{1,2*},{3}",
                "{1*,3},{2}",
                "{1,3*},{2}",
                "{1},{2*,3}",
                "{1},{2,3*}",
                "{1*,2,3}",
                "{1,2*,3}",
                "{1,2,3*}",
            ]
        );
        let mut parts: Vec<_> = all.iter().map(|s| s.partition()).collect();
        parts.dedup();
        assert_eq!(parts.len(), 5);
    }

    #[test]
    fn small_enumerations() {
        assert_eq!(labels(&enumerate_structures(1).unwrap()), ["{1}"]);
        assert_eq!(labels(&enumerate_structures(2).unwrap()), ["{1},{2}", "{1*,2}", "{1,2*}"]);
        assert!(matches!(enumerate_structures(7), Err(CoalitionError::TooManyPlants(7))));
    }

    #[test]
    fn partition_counts_follow_bell_numbers() {
        for (n, bell) in [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (6, 203)] {
            assert_eq!(set_partitions(n).len(), bell);
            for s in enumerate_structures(n).unwrap() {
                assert!(s.is_partition_of(n));
                for b in &s.blocks {
                    assert_eq!(b.hub.is_some(), b.members.len() > 1);
                }
            }
        }
    }

    #[test]
    fn labels_parse_back() {
        for s in enumerate_structures(4).unwrap() {
            assert_eq!(CoalitionStructure::parse(&s.label()).unwrap(), s);
        }
        assert!(CoalitionStructure::parse("{1,2}").is_err());
        assert!(CoalitionStructure::parse("{1*}").is_err());
        assert!(CoalitionStructure::parse("{1,2*},{2}").is_err());
    }

    #[test]
    fn hub_liquefies_and_feeders_compress() {
        let s = tiny();
        let block = Block::new(vec![0, 1], Some(1)).unwrap();
        let cands = block.candidate_plans(&s);
        assert_eq!(cands.len(), 4);
        for c in &cands {
            assert_eq!(c[0].route, Destination::Plant(1));
            assert_eq!(s.mode_of(c[0].equipment), Mode::Compressed);
            assert_eq!(c[1].route, Destination::Cavern);
            assert_eq!(s.mode_of(c[1].equipment), Mode::Liquefied);
        }
        assert_eq!(Block::singleton(0).candidate_plans(&s).len(), 4);
    }

    #[test]
    fn shapley_matches_published_two_player_split() {
        let v = |s: &[usize]| match s {
            [0] => 54052.0,
            [1] => 81060.0,
            [0, 1] => 170589.0,
            _ => unreachable!(),
        };
        let imp = shapley_allocate(&[0, 1], v);
        assert!((imp.payoffs[0] - 71790.5).abs() <= 1e-9);
        assert!((imp.payoffs[1] - 98798.5).abs() <= 1e-9);
    }

    #[test]
    fn shapley_symmetry_and_dummy() {
        let imp = shapley_allocate(&[3, 5], |s| if s.len() == 2 { 10.0 } else { 4.0 });
        assert_eq!(imp.payoffs, vec![5.0, 5.0]);
        // Player 2 adds nothing to any coalition.
        let v = |s: &[usize]| {
            let base: f64 = s.iter().filter(|&&i| i != 2).map(|&i| (i + 1) as f64).sum();
            if s.contains(&0) && s.contains(&1) { base * 2.0 } else { base }
        };
        let imp = shapley_allocate(&[0, 1, 2], v);
        assert!(imp.payoffs[2].abs() < 1e-12);
        assert!((imp.total() - v(&[0, 1, 2])).abs() < 1e-12);
    }

    /// Ten published structure values in the order of the table.
    fn published() -> Vec<StructureValue> {
        let rows = [
            ("{1},{2},{3}", vec![54052.0, 81060.0, 236814.0]),
            ("{1,2*},{3}", vec![170589.0, 236814.0]),
            ("{1,3*},{2}", vec![286531.0, 107868.0]),
            ("{1},{2,3*}", vec![53562.0, 323154.0]),
            ("{1,2,3*}", vec![383925.0]),
        ];
        rows.into_iter()
            .map(|(l, v)| StructureValue::from_values(CoalitionStructure::parse(l).unwrap(), v))
            .collect()
    }

    #[test]
    fn published_table_has_one_stable_structure() {
        let values = published();
        let ch = Characteristic::from_structures(&values);
        let imps: Vec<_> = values.iter().map(|v| structure_imputations(v, &ch)).collect();
        let verdicts = stability_report(&values, &imps).unwrap();
        assert_eq!(verdicts[2].cr_violations, vec!["{1,3*}".to_string()]);
        assert!(!verdicts[3].dominated_by.is_empty());
        assert!(!verdicts[4].dominated_by.is_empty());
        let stable: Vec<_> = verdicts.iter().filter(|v| v.stable).map(|v| v.structure).collect();
        assert_eq!(stable, vec![1]);
    }

    #[test]
    fn identical_totals_are_all_stable() {
        let values = vec![
            StructureValue::from_values(CoalitionStructure::parse("{1},{2}").unwrap(), vec![5.0, 5.0]),
            StructureValue::from_values(CoalitionStructure::parse("{1,2*}").unwrap(), vec![10.0]),
        ];
        let ch = Characteristic::from_structures(&values);
        let imps: Vec<_> = values.iter().map(|v| structure_imputations(v, &ch)).collect();
        assert!(stability_report(&values, &imps).unwrap().iter().all(|v| v.stable));
    }

    #[test]
    fn superadditive_merge_dominates_singletons() {
        let values = vec![
            StructureValue::from_values(CoalitionStructure::parse("{1},{2}").unwrap(), vec![5.0, 5.0]),
            StructureValue::from_values(CoalitionStructure::parse("{1,2*}").unwrap(), vec![12.0]),
        ];
        let ch = Characteristic::from_structures(&values);
        let imps: Vec<_> = values.iter().map(|v| structure_imputations(v, &ch)).collect();
        let verdicts = stability_report(&values, &imps).unwrap();
        assert_eq!(verdicts[0].dominated_by, vec![1]);
        assert!(verdicts[1].stable);
    }

    #[test]
    fn separable_structure_sums_isolated_optima() {
        let s = tiny();
        let prices = PriceSchedule::planning_default(&s);
        let joint = solve_planning(&CoalitionStructure::all_singletons(2), &s, &prices).unwrap();
        let one = solve_planning(&CoalitionStructure::parse("{1}").unwrap(), &s, &prices).unwrap();
        let two = solve_planning(&CoalitionStructure::parse("{2}").unwrap(), &s, &prices).unwrap();
        assert!((joint.total - one.total - two.total).abs() <= 1e-6 * joint.total.abs().max(1.0));
        assert!((joint.total - joint.block_values.iter().sum::<f64>()).abs() <= 1e-6);
        assert_eq!(joint.plans.len(), 2);
    }

    #[test]
    fn best_structure_is_at_least_no_cooperation() {
        let s = tiny();
        let study = run_planning_study(&s, &PriceSchedule::planning_default(&s)).unwrap();
        let base = study.structures[0].total;
        let best = study.structures.iter().map(|v| v.total).fold(f64::NEG_INFINITY, f64::max);
        assert!(best >= base);
        for (v, imps) in study.structures.iter().zip(&study.imputations) {
            for (imp, &bv) in imps.iter().zip(&v.block_values) {
                assert!((imp.total() - bv).abs() <= 1e-9 * bv.abs().max(1.0));
            }
        }
        assert!(!study.stable().is_empty() || study.selected() < study.structures.len());
    }

    #[test]
    fn recorded_standalone_values_match_fresh_solves() {
        let s = tiny();
        let prices = PriceSchedule::planning_default(&s);
        let values: Vec<_> = enumerate_structures(2)
            .unwrap()
            .iter()
            .map(|st| solve_planning(st, &s, &prices).unwrap())
            .collect();
        let recorded = Characteristic::from_isolated(&values);
        let fresh = characteristic_function(&[0, 1], &s, &prices).unwrap();
        for (k, v) in fresh.entries() {
            let r = recorded.entries().find(|(l, _)| *l == k).unwrap().1;
            assert!((r - v).abs() <= 1e-9 * v.abs().max(1.0), "{k}: {r} vs {v}");
        }
    }

    #[test]
    fn best_response_reaches_joint_optimum_on_tiny_case() {
        let s = tiny();
        let prices = PriceSchedule::planning_default(&s);
        let structure = CoalitionStructure::all_singletons(2);
        let joint = solve_planning(&structure, &s, &prices).unwrap();
        let start = random_profile(&structure, &s, 11);
        let out = best_response_dynamics(&structure, &s, &prices, start, 20).unwrap();
        assert!(out.converged);
        assert!((out.total - joint.total).abs() <= 1e-6 * joint.total.abs().max(1.0));
    }
}
