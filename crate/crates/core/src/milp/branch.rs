//! Best-first branch-and-bound over the warm-started simplex.
//!
//! Children are evaluated eagerly when their parent is branched, so every
//! open node carries its own LP bound. The open list is ordered by bound,
//! then depth (deeper first), then floor branch first, then creation order.
//!
//! Branching uses pseudocosts (average bound loss per unit of rounding,
//! kept per variable and direction). A variable whose pseudocosts rest on
//! fewer than [`RELIABLE_AFTER`] observations is strong-branched first, i.e.
//! both children are actually solved. Candidates are compared with the
//! product of the two estimated losses.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use super::simplex::{Basis, Factorized, LpOutcome, Simplex};
use super::{
    LinearProgram, LpError, SolveResult, SolveStats, SolveStatus, DEFAULT_GAP_TOL, INTEGRALITY_TOL,
};

/// Caps the memory spent on cached basis inverses in the open list.
const FACTOR_CACHE_BYTES: usize = 256 << 20;
/// A rounding dive is started from every this many branched nodes.
const DIVE_EVERY: usize = 50;
/// Observations per direction before a pseudocost is trusted.
const RELIABLE_AFTER: u32 = 4;
/// Strong-branching budget per node, in candidates.
const MAX_STRONG: usize = 8;
/// Stop strong branching after this many candidates fail to beat the best.
const STRONG_LOOKAHEAD: usize = 4;
const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpOptions {
    pub gap_tol: f64,
    pub node_limit: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            gap_tol: DEFAULT_GAP_TOL,
            node_limit: 200_000,
        }
    }
}

/// Emitted after every branched node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeEvent {
    pub node: usize,
    pub depth: usize,
    /// Objective of the best integer solution so far (`-inf` if none).
    pub incumbent: f64,
    /// Best proven upper bound over the whole tree at this point.
    pub global_bound: f64,
}

pub fn solve_milp(
    lp: &LinearProgram,
    gap_tol: f64,
    node_limit: usize,
) -> Result<SolveResult, LpError> {
    solve_milp_observed(lp, MilpOptions { gap_tol, node_limit }, |_| {})
}

struct Node {
    bound: f64,
    depth: usize,
    floor_branch: bool,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    basis: Basis,
    factor: Option<Factorized>,
}

impl Node {
    fn key(&self) -> (f64, usize, bool, std::cmp::Reverse<usize>) {
        (self.bound, self.depth, self.floor_branch, std::cmp::Reverse(self.seq))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Pseudocost {
    sum: [f64; 2],
    count: [u32; 2],
}

impl Pseudocost {
    fn reliable(&self) -> bool {
        self.count[0] >= RELIABLE_AFTER && self.count[1] >= RELIABLE_AFTER
    }

    fn record(&mut self, dir: usize, per_unit: f64) {
        self.sum[dir] += per_unit;
        self.count[dir] += 1;
    }

    fn estimate(&self, dir: usize, fallback: f64) -> f64 {
        if self.count[dir] == 0 {
            fallback
        } else {
            self.sum[dir] / f64::from(self.count[dir])
        }
    }
}

enum Branch {
    On(usize),
    /// Both children of some candidate are infeasible.
    Infeasible,
}

struct Search<'a> {
    lp: &'a LinearProgram,
    integers: Vec<usize>,
    pseudo: Vec<Pseudocost>,
    opts: MilpOptions,
    incumbent: Option<(f64, Vec<f64>)>,
    pruned_bound: f64,
    seq: usize,
    cached_factors: usize,
    factor_bytes: usize,
}

impl Search<'_> {
    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(z, _)| *z)
    }

    fn prunable(&self, bound: f64) -> bool {
        let inc = self.incumbent_value();
        inc.is_finite() && bound <= inc + self.opts.gap_tol * inc.abs().max(1.0)
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut pick = None;
        let mut best = INTEGRALITY_TOL;
        for &j in &self.integers {
            let f = x[j] - x[j].floor();
            let score = f.min(1.0 - f);
            if score > best {
                best = score;
                pick = Some(j);
            }
        }
        pick
    }

    fn record_loss(&mut self, j: usize, floor_branch: bool, frac: f64, loss: f64) {
        let (dir, dist) = if floor_branch { (0, frac) } else { (1, 1.0 - frac) };
        if dist > INTEGRALITY_TOL && loss.is_finite() {
            self.pseudo[j].record(dir, loss.max(0.0) / dist);
        }
    }

    fn average_pseudocost(&self, dir: usize) -> f64 {
        let (mut sum, mut n) = (0.0, 0u32);
        for p in &self.pseudo {
            if p.count[dir] > 0 {
                sum += p.sum[dir] / f64::from(p.count[dir]);
                n += 1;
            }
        }
        if n == 0 {
            1.0
        } else {
            sum / f64::from(n)
        }
    }

    /// Picks the branching variable for a node whose optimal factorization
    /// is `saved` (the simplex is left in an arbitrary state).
    fn select_branch(
        &mut self,
        sx: &mut Simplex,
        saved: &Factorized,
        x: &[f64],
        bound: f64,
        lower: &[f64],
        upper: &[f64],
    ) -> Branch {
        let avg = [self.average_pseudocost(0), self.average_pseudocost(1)];
        let estimate = |s: &Self, j: usize, f: f64| {
            let p = &s.pseudo[j];
            let down = p.estimate(0, avg[0]) * f;
            let up = p.estimate(1, avg[1]) * (1.0 - f);
            down.max(SCORE_EPS) * up.max(SCORE_EPS)
        };
        let mut cands: Vec<(usize, f64, f64)> = self
            .integers
            .iter()
            .filter_map(|&j| {
                let f = x[j] - x[j].floor();
                (f > INTEGRALITY_TOL && f < 1.0 - INTEGRALITY_TOL).then(|| (j, f, estimate(self, j, f)))
            })
            .collect();
        cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

        let mut best: Option<(f64, usize)> = None;
        let (mut strong, mut stale) = (0usize, 0usize);
        for (j, f, guess) in cands {
            let score = if !self.pseudo[j].reliable() && strong < MAX_STRONG && stale < STRONG_LOOKAHEAD {
                strong += 1;
                let mut loss = [0.0; 2];
                let mut dead = [false; 2];
                for (dir, (lo, hi)) in [(lower[j], x[j].floor()), (x[j].ceil(), upper[j])].into_iter().enumerate() {
                    if lo > hi {
                        dead[dir] = true;
                        continue;
                    }
                    sx.restore_factorized(saved);
                    sx.set_var_bounds(j, lo, hi);
                    match sx.resolve() {
                        LpOutcome::Optimal => {
                            let z = self.lp.objective_value(&sx.solution());
                            loss[dir] = (bound - z).max(0.0);
                            dead[dir] = self.prunable(z);
                            if dead[dir] {
                                self.pruned_bound = self.pruned_bound.max(z);
                            }
                            self.record_loss(j, dir == 0, f, loss[dir]);
                        }
                        LpOutcome::Infeasible => dead[dir] = true,
                        LpOutcome::Unbounded | LpOutcome::IterationLimit => {}
                    }
                    sx.set_var_bounds(j, lower[j], upper[j]);
                }
                match dead {
                    [true, true] => return Branch::Infeasible,
                    // One child is gone: branching here costs a single node.
                    [true, false] | [false, true] => return Branch::On(j),
                    _ => loss[0].max(SCORE_EPS) * loss[1].max(SCORE_EPS),
                }
            } else {
                guess
            };
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, j));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        match best {
            Some((_, j)) => Branch::On(j),
            None => Branch::Infeasible,
        }
    }

    /// Rounding dive: repeatedly fixes the most fractional variable to its
    /// nearest integer (the other side if that is infeasible) and re-solves,
    /// until the LP point is integral or both sides fail.
    fn dive(&mut self, sx: &mut Simplex, x0: &[f64], lower: &[f64], upper: &[f64]) {
        let mut x = x0.to_vec();
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        for _ in 0..=self.integers.len() {
            let Some(j) = self.most_fractional(&x) else {
                self.offer_incumbent(&x);
                return;
            };
            let near = x[j].round();
            let far = if near > x[j] { x[j].floor() } else { x[j].ceil() };
            let mut moved = false;
            for v in [near, far] {
                sx.set_var_bounds(j, v, v);
                match sx.resolve() {
                    LpOutcome::Optimal => {
                        let z = self.lp.objective_value(&sx.solution());
                        if self.prunable(z) {
                            return;
                        }
                        lo[j] = v;
                        hi[j] = v;
                        moved = true;
                        break;
                    }
                    LpOutcome::Infeasible => {
                        sx.set_var_bounds(j, lo[j], hi[j]);
                    }
                    _ => return,
                }
            }
            if !moved {
                return;
            }
            x = sx.solution();
        }
    }

    fn offer_incumbent(&mut self, x: &[f64]) {
        let mut snapped = x.to_vec();
        for &j in &self.integers {
            snapped[j] = snapped[j].round();
        }
        let z = self.lp.objective_value(&snapped);
        if z > self.incumbent_value() {
            self.incumbent = Some((z, snapped));
        }
    }
}

pub fn solve_milp_observed(
    lp: &LinearProgram,
    opts: MilpOptions,
    mut observer: impl FnMut(NodeEvent),
) -> Result<SolveResult, LpError> {
    lp.validate()?;
    let start = Instant::now();
    let integers = lp.integer_vars();
    let mut sx = Simplex::new(lp);
    for &j in &integers {
        if sx.is_free(j) {
            return Err(LpError::UnboundedInteger { var: j });
        }
    }
    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    for &j in &integers {
        lower[j] = lower[j].ceil();
        upper[j] = upper[j].floor();
        if lower[j] > upper[j] {
            let mut r = SolveResult::without_solution(SolveStatus::Infeasible, lp.num_vars());
            r.stats.wall_time = start.elapsed();
            return Ok(r);
        }
        sx.set_var_bounds(j, lower[j], upper[j]);
    }

    let root = sx.solve();
    if root != LpOutcome::Optimal {
        let mut r = sx.result(lp, root);
        r.stats.wall_time = start.elapsed();
        return Ok(r);
    }

    let factor_size = 8 * lp.num_constraints() * lp.num_constraints();
    let mut search = Search {
        lp,
        pseudo: vec![Pseudocost::default(); lp.num_vars()],
        integers,
        opts,
        incumbent: None,
        pruned_bound: f64::NEG_INFINITY,
        seq: 0,
        cached_factors: 0,
        factor_bytes: factor_size.max(1),
    };
    let root_x = sx.solution();
    let root_bound = lp.objective_value(&root_x);
    let mut heap = BinaryHeap::new();
    if search.most_fractional(&root_x).is_none() {
        search.offer_incumbent(&root_x);
    } else {
        let saved = sx.factorized();
        search.dive(&mut sx, &root_x, &lower, &upper);
        sx.restore_factorized(&saved);
        for &k in &search.integers {
            sx.set_var_bounds(k, lower[k], upper[k]);
        }
        heap.push(Node {
            bound: root_bound,
            depth: 0,
            floor_branch: true,
            seq: 0,
            lower,
            upper,
            x: root_x,
            basis: sx.basis_snapshot(),
            factor: Some(sx.factorized()),
        });
        search.cached_factors = 1;
    }

    let mut branched = 0usize;
    let mut limit_hit = false;
    let mut abandoned = false;
    while let Some(node) = heap.pop() {
        if node.factor.is_some() {
            search.cached_factors -= 1;
        }
        if search.prunable(node.bound) {
            search.pruned_bound = search.pruned_bound.max(node.bound);
            continue;
        }
        if branched >= opts.node_limit {
            heap.push(node);
            limit_hit = true;
            break;
        }
        branched += 1;

        // Bring the simplex to the node's optimal basis.
        if let Some(f) = &node.factor {
            sx.restore_factorized(f);
        } else if !sx.has_basis(&node.basis) {
            sx.restore(&node.basis);
        }
        for &k in &search.integers {
            sx.set_var_bounds(k, node.lower[k], node.upper[k]);
        }
        let saved = sx.factorized();
        if branched.is_multiple_of(DIVE_EVERY) {
            search.dive(&mut sx, &node.x, &node.lower, &node.upper);
            sx.restore_factorized(&saved);
            for &k in &search.integers {
                sx.set_var_bounds(k, node.lower[k], node.upper[k]);
            }
        }
        let j = match search.select_branch(&mut sx, &saved, &node.x, node.bound, &node.lower, &node.upper) {
            Branch::On(j) => j,
            Branch::Infeasible => continue,
        };
        let v = node.x[j];
        let frac = v - v.floor();

        for floor_branch in [true, false] {
            sx.restore_factorized(&saved);
            let mut lo = node.lower.clone();
            let mut hi = node.upper.clone();
            if floor_branch {
                hi[j] = v.floor();
            } else {
                lo[j] = v.ceil();
            }
            if lo[j] > hi[j] {
                continue;
            }
            sx.set_var_bounds(j, lo[j], hi[j]);
            match sx.resolve() {
                LpOutcome::Optimal => {}
                LpOutcome::Infeasible => {
                    sx.set_var_bounds(j, node.lower[j], node.upper[j]);
                    continue;
                }
                LpOutcome::Unbounded | LpOutcome::IterationLimit => {
                    // Cannot certify this subtree; keep its parent's bound.
                    search.pruned_bound = search.pruned_bound.max(node.bound);
                    abandoned = true;
                    sx.set_var_bounds(j, node.lower[j], node.upper[j]);
                    continue;
                }
            }
            let x = sx.solution();
            let z = lp.objective_value(&x);
            search.record_loss(j, floor_branch, frac, node.bound - z);
            let bound = z.min(node.bound);
            sx.set_var_bounds(j, node.lower[j], node.upper[j]);
            if search.prunable(bound) {
                search.pruned_bound = search.pruned_bound.max(bound);
                continue;
            }
            if search.most_fractional(&x).is_none() {
                search.offer_incumbent(&x);
                continue;
            }
            search.seq += 1;
            let cache = (search.cached_factors + 1) * search.factor_bytes <= FACTOR_CACHE_BYTES;
            if cache {
                search.cached_factors += 1;
            }
            heap.push(Node {
                bound,
                depth: node.depth + 1,
                floor_branch,
                seq: search.seq,
                lower: lo,
                upper: hi,
                x,
                basis: sx.basis_snapshot(),
                factor: cache.then(|| sx.factorized()),
            });
        }

        let open_bound = heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound);
        observer(NodeEvent {
            node: branched,
            depth: node.depth,
            incumbent: search.incumbent_value(),
            global_bound: open_bound
                .max(search.pruned_bound)
                .max(search.incumbent_value()),
        });
    }

    let open_bound = heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound);
    let stats = SolveStats {
        nodes: branched,
        simplex_iterations: sx.iterations,
        wall_time: start.elapsed(),
    };
    let result = match search.incumbent {
        Some((z, x)) => {
            let bound = open_bound.max(search.pruned_bound).max(z);
            let proven = bound <= z + opts.gap_tol * z.abs().max(1.0);
            SolveResult {
                status: if limit_hit || (abandoned && !proven) {
                    SolveStatus::GapLimit
                } else {
                    SolveStatus::Optimal
                },
                objective_value: z,
                assignment: x,
                bound,
                stats,
            }
        }
        None => {
            let status = if limit_hit || abandoned {
                SolveStatus::GapLimit
            } else {
                SolveStatus::Infeasible
            };
            let mut r = SolveResult::without_solution(status, lp.num_vars());
            r.bound = open_bound.max(search.pruned_bound);
            r.stats = stats;
            r
        }
    };
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{Relation, VarKind};

    #[test]
    fn binary_knapsack() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 1.0, VarKind::Binary, 5.0);
        let y = lp.add_var("y", 0.0, 1.0, VarKind::Binary, 4.0);
        lp.add_constraint(vec![(x, 3.0), (y, 2.0)], Relation::Le, 4.0);
        let r = solve_milp(&lp, DEFAULT_GAP_TOL, 1000).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective_value - 5.0).abs() < 1e-9);
        assert_eq!(r.assignment, vec![1.0, 0.0]);
    }

    #[test]
    fn integral_relaxation_needs_no_branching() {
        // Interval matrix (consecutive ones) rows are totally unimodular.
        let mut lp = LinearProgram::new();
        let v: Vec<_> = (0..4)
            .map(|j| lp.add_var(format!("x{j}"), 0.0, 5.0, VarKind::Integer, 1.0 + j as f64))
            .collect();
        lp.add_constraint(vec![(v[0], 1.0), (v[1], 1.0)], Relation::Le, 3.0);
        lp.add_constraint(vec![(v[1], 1.0), (v[2], 1.0), (v[3], 1.0)], Relation::Le, 4.0);
        lp.add_constraint(vec![(v[2], 1.0), (v[3], 1.0)], Relation::Le, 2.0);
        let relaxed = crate::milp::solve_lp(&lp.relaxation()).unwrap();
        let r = solve_milp(&lp, DEFAULT_GAP_TOL, 1000).unwrap();
        assert_eq!(r.stats.nodes, 0);
        assert!((r.objective_value - relaxed.objective_value).abs() < 1e-9);
    }

    #[test]
    fn node_limit_reports_gap_limit() {
        let mut lp = LinearProgram::new();
        let vars: Vec<_> = (0..12)
            .map(|j| lp.add_var(format!("x{j}"), 0.0, 1.0, VarKind::Binary, 10.0 + j as f64))
            .collect();
        let terms = vars.iter().map(|&v| (v, 2.0)).collect();
        lp.add_constraint(terms, Relation::Le, 13.0);
        let r = solve_milp(&lp, 0.0, 1).unwrap();
        assert_eq!(r.status, SolveStatus::GapLimit);
        let full = solve_milp(&lp, 0.0, 100_000).unwrap();
        assert_eq!(full.status, SolveStatus::Optimal);
        // Six items of weight 2 fit; the six most valuable.
        assert!((full.objective_value - (16.0 + 17.0 + 18.0 + 19.0 + 20.0 + 21.0)).abs() < 1e-9);
    }

    #[test]
    fn infeasible_integer_model() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 3.0, VarKind::Integer, 1.0);
        lp.add_constraint(vec![(x, 2.0)], Relation::Eq, 3.0);
        let r = solve_milp(&lp, DEFAULT_GAP_TOL, 1000).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }
}
