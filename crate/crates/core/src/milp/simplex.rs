//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Every row gets a logical column (slack for inequalities, a column fixed at
//! zero for equalities). Rows whose logical cannot start feasibly get an
//! artificial column for phase one; afterwards the artificials are fixed at
//! zero and stay in the column set so a [`Simplex`] can be re-solved warm
//! after bound changes (dual simplex), which is what branch-and-bound does.

use std::time::Instant;

use super::{LinearProgram, LpError, Relation, SolveResult, SolveStats, SolveStatus, FEASIBILITY_TOL};

const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const DEGENERATE_BEFORE_BLAND: usize = 60;
const MAX_ITERATIONS: usize = 200_000;

/// Solves a continuous LP; integrality flags are ignored.
pub fn solve_lp(lp: &LinearProgram) -> Result<SolveResult, LpError> {
    lp.validate()?;
    let start = Instant::now();
    let mut sx = Simplex::new(lp);
    let outcome = sx.solve();
    let mut result = sx.result(lp, outcome);
    result.stats.wall_time = start.elapsed();
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

/// How an original variable maps onto internal nonnegative-lower columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Direct(usize),
    Negated(usize),
    Split(usize, usize),
}

/// Basis snapshot used to move between branch-and-bound nodes.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    basis: Vec<usize>,
    state: Vec<State>,
}

/// Full factorized state: basis plus its inverse and values.
#[derive(Debug, Clone)]
pub(crate) struct Factorized {
    basis: Basis,
    binv: Vec<f64>,
    x: Vec<f64>,
    since_refactor: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    phase_two_cost: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    b: Vec<f64>,
    map: Vec<VarMap>,
    basis: Vec<usize>,
    state: Vec<State>,
    x: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    pub(crate) iterations: usize,
    /// Iteration count when the current solve started.
    budget_start: usize,
    artificial_start: usize,
}

impl Simplex {
    pub(crate) fn new(lp: &LinearProgram) -> Self {
        let m = lp.num_constraints();
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut cost = Vec::new();
        let mut lo = Vec::new();
        let mut up = Vec::new();
        let mut map = Vec::with_capacity(lp.num_vars());

        let mut push_col = |c: f64, l: f64, u: f64| {
            cols.push(Vec::new());
            cost.push(c);
            lo.push(l);
            up.push(u);
            cols.len() - 1
        };
        for j in 0..lp.num_vars() {
            let (l, u, c) = (lp.lower[j], lp.upper[j], lp.objective[j]);
            let vm = if l.is_finite() {
                VarMap::Direct(push_col(c, l, u))
            } else if u.is_finite() {
                VarMap::Negated(push_col(-c, -u, f64::INFINITY))
            } else {
                let p = push_col(c, 0.0, f64::INFINITY);
                let q = push_col(-c, 0.0, f64::INFINITY);
                VarMap::Split(p, q)
            };
            map.push(vm);
        }
        for (i, row) in lp.constraints.iter().enumerate() {
            for &(j, a) in &row.terms {
                match map[j] {
                    VarMap::Direct(c) => cols[c].push((i, a)),
                    VarMap::Negated(c) => cols[c].push((i, -a)),
                    VarMap::Split(p, q) => {
                        cols[p].push((i, a));
                        cols[q].push((i, -a));
                    }
                }
            }
        }
        let b: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();
        for (i, row) in lp.constraints.iter().enumerate() {
            let (sign, u) = match row.relation {
                Relation::Le => (1.0, f64::INFINITY),
                Relation::Ge => (-1.0, f64::INFINITY),
                Relation::Eq => (1.0, 0.0),
            };
            cols.push(vec![(i, sign)]);
            cost.push(0.0);
            lo.push(0.0);
            up.push(u);
        }
        let artificial_start = cols.len();
        let n = cols.len();
        Simplex {
            m,
            phase_two_cost: cost.clone(),
            cols,
            cost,
            lo,
            up,
            b,
            map,
            basis: Vec::with_capacity(m),
            state: vec![State::Lower; n],
            x: vec![0.0; n],
            binv: Vec::new(),
            since_refactor: 0,
            iterations: 0,
            budget_start: 0,
            artificial_start,
        }
    }

    fn n(&self) -> usize {
        self.cols.len()
    }

    fn logical(&self, row: usize) -> usize {
        self.artificial_start - self.m + row
    }

    /// Cold solve: crash basis of logicals, phase one on artificials, phase two.
    pub(crate) fn solve(&mut self) -> LpOutcome {
        self.budget_start = self.iterations;
        let m = self.m;
        let n0 = self.artificial_start;
        // Nonbasic structurals start at their (finite) lower bound.
        for j in 0..n0 {
            self.state[j] = State::Lower;
            self.x[j] = self.lo[j];
        }
        let mut residual = self.b.clone();
        for j in 0..n0 - m {
            if self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    residual[i] -= a * self.x[j];
                }
            }
        }
        self.basis.clear();
        let mut needs_phase_one = false;
        for (i, &r) in residual.iter().enumerate() {
            let logical = self.logical(i);
            let sign = self.cols[logical][0].1;
            let value = r / sign;
            if value >= -FEASIBILITY_TOL && value <= self.up[logical] + FEASIBILITY_TOL {
                self.basis.push(logical);
                self.state[logical] = State::Basic;
                self.x[logical] = value.clamp(0.0, self.up[logical]);
            } else {
                let art = self.cols.len();
                self.cols.push(vec![(i, if r >= 0.0 { 1.0 } else { -1.0 })]);
                self.cost.push(-1.0);
                self.phase_two_cost.push(0.0);
                self.lo.push(0.0);
                self.up.push(f64::INFINITY);
                self.state.push(State::Basic);
                self.x.push(r.abs());
                self.basis.push(art);
                self.state[logical] = State::Lower;
                self.x[logical] = 0.0;
                needs_phase_one = true;
            }
        }
        self.refactor();

        if needs_phase_one {
            for j in 0..self.artificial_start {
                self.cost[j] = 0.0;
            }
            match self.primal() {
                LpOutcome::Optimal => {}
                LpOutcome::IterationLimit => return LpOutcome::IterationLimit,
                // Phase one is bounded above by zero.
                other => return other,
            }
            let infeasibility: f64 = (self.artificial_start..self.n()).map(|j| self.x[j]).sum();
            let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeasibility > FEASIBILITY_TOL * scale {
                return LpOutcome::Infeasible;
            }
            for j in self.artificial_start..self.n() {
                self.up[j] = 0.0;
                if self.state[j] != State::Basic {
                    self.state[j] = State::Lower;
                    self.x[j] = 0.0;
                }
            }
        }
        self.cost.clone_from(&self.phase_two_cost);
        let outcome = self.primal();
        self.finish(outcome)
    }

    /// Re-solve after bound changes, starting from the current basis.
    pub(crate) fn resolve(&mut self) -> LpOutcome {
        self.budget_start = self.iterations;
        self.reset_nonbasic();
        self.compute_basic_values();
        match self.dual() {
            LpOutcome::Optimal => {}
            other => return other,
        }
        let outcome = self.primal();
        self.finish(outcome)
    }

    /// Cleans up drift after an optimal primal pass: recompute the basic
    /// values and, if they slipped out of bounds, refactor and repair with
    /// dual + primal.
    fn finish(&mut self, outcome: LpOutcome) -> LpOutcome {
        if outcome != LpOutcome::Optimal {
            return outcome;
        }
        for _ in 0..3 {
            self.compute_basic_values();
            if self.max_primal_infeasibility() <= FEASIBILITY_TOL {
                return LpOutcome::Optimal;
            }
            self.refactor();
            if self.max_primal_infeasibility() <= FEASIBILITY_TOL {
                return LpOutcome::Optimal;
            }
            match self.dual() {
                LpOutcome::Optimal => {}
                other => return other,
            }
            match self.primal() {
                LpOutcome::Optimal => {}
                other => return other,
            }
        }
        LpOutcome::Optimal
    }

    fn reset_nonbasic(&mut self) {
        for j in 0..self.n() {
            match self.state[j] {
                State::Basic => {}
                State::Lower => self.x[j] = self.lo[j],
                State::Upper => {
                    if self.up[j].is_finite() {
                        self.x[j] = self.up[j];
                    } else {
                        self.state[j] = State::Lower;
                        self.x[j] = self.lo[j];
                    }
                }
            }
        }
    }

    /// Sets bounds on an original variable. Only valid for variables with a
    /// finite bound on at least one side (branching never touches others).
    pub(crate) fn set_var_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        match self.map[j] {
            VarMap::Direct(c) => {
                self.lo[c] = lower;
                self.up[c] = upper;
            }
            VarMap::Negated(c) => {
                self.lo[c] = -upper;
                self.up[c] = if lower.is_finite() { -lower } else { f64::INFINITY };
            }
            VarMap::Split(..) => unreachable!("free variables are never branched on"),
        }
    }

    pub(crate) fn is_free(&self, j: usize) -> bool {
        matches!(self.map[j], VarMap::Split(..))
    }

    pub(crate) fn basis_snapshot(&self) -> Basis {
        Basis {
            basis: self.basis.clone(),
            state: self.state.clone(),
        }
    }

    pub(crate) fn factorized(&self) -> Factorized {
        Factorized {
            basis: self.basis_snapshot(),
            binv: self.binv.clone(),
            x: self.x.clone(),
            since_refactor: self.since_refactor,
        }
    }

    pub(crate) fn has_basis(&self, basis: &Basis) -> bool {
        self.basis == basis.basis && self.state == basis.state
    }

    pub(crate) fn restore(&mut self, basis: &Basis) {
        self.basis.clone_from(&basis.basis);
        self.state.clone_from(&basis.state);
        self.refactor();
    }

    pub(crate) fn restore_factorized(&mut self, f: &Factorized) {
        self.basis.clone_from(&f.basis.basis);
        self.state.clone_from(&f.basis.state);
        self.binv.clone_from(&f.binv);
        self.x.clone_from(&f.x);
        self.since_refactor = f.since_refactor;
    }

    /// Values of the original variables.
    pub(crate) fn solution(&self) -> Vec<f64> {
        self.map
            .iter()
            .map(|vm| match *vm {
                VarMap::Direct(c) => self.x[c],
                VarMap::Negated(c) => -self.x[c],
                VarMap::Split(p, q) => self.x[p] - self.x[q],
            })
            .collect()
    }

    pub(crate) fn result(&self, lp: &LinearProgram, outcome: LpOutcome) -> SolveResult {
        let stats = SolveStats {
            nodes: 0,
            simplex_iterations: self.iterations,
            ..Default::default()
        };
        let status = match outcome {
            LpOutcome::Optimal => SolveStatus::Optimal,
            LpOutcome::Infeasible => SolveStatus::Infeasible,
            LpOutcome::Unbounded => SolveStatus::Unbounded,
            LpOutcome::IterationLimit => SolveStatus::IterationLimit,
        };
        if status != SolveStatus::Optimal {
            let mut r = SolveResult::without_solution(status, lp.num_vars());
            r.stats = stats;
            return r;
        }
        let x = self.solution();
        let z = lp.objective_value(&x);
        SolveResult {
            status,
            objective_value: z,
            assignment: x,
            bound: z,
            stats,
        }
    }

    // ---- linear algebra ----------------------------------------------------

    /// Rebuilds the basis inverse from scratch (Gauss-Jordan, partial pivoting)
    /// and recomputes the basic values. A dependent basis column is swapped
    /// for the logical of a row that has not been pivoted yet, which always
    /// restores full rank, so at most `m` restarts happen.
    fn refactor(&mut self) {
        while let Err(c) = self.try_refactor() {
            self.swap_in_logical(c.0, c.1);
        }
        self.since_refactor = 0;
        self.compute_basic_values();
    }

    /// On a singular basis returns the failing position and the original rows
    /// still unpivoted at that point.
    fn try_refactor(&mut self) -> Result<(), (usize, Vec<usize>)> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &col) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[col] {
                a[i * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        let mut perm: Vec<usize> = (0..m).collect();
        for c in 0..m {
            let mut p = c;
            let mut best = a[c * m + c].abs();
            for r in c + 1..m {
                let v = a[r * m + c].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < 1e-13 {
                return Err((c, perm[c..].to_vec()));
            }
            if p != c {
                for k in 0..m {
                    a.swap(c * m + k, p * m + k);
                    inv.swap(c * m + k, p * m + k);
                }
                perm.swap(c, p);
            }
            let piv = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= piv;
                inv[c * m + k] /= piv;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        // a = B with rows permuted into identity means inv = B^{-1} with the
        // row ordering matching basis positions.
        self.binv = inv;
        Ok(())
    }

    fn swap_in_logical(&mut self, position: usize, unpivoted: Vec<usize>) {
        let first_logical = self.artificial_start - self.m;
        let in_basis = |col: usize| self.basis.contains(&col);
        let row = unpivoted
            .iter()
            .copied()
            .find(|&r| !in_basis(first_logical + r))
            .expect("an unpivoted row always has a nonbasic logical");
        let old = self.basis[position];
        self.state[old] = State::Lower;
        self.x[old] = if self.lo[old].is_finite() { self.lo[old] } else { 0.0 };
        let logical = self.logical(row);
        self.basis[position] = logical;
        self.state[logical] = State::Basic;
    }

    fn compute_basic_values(&mut self) {
        let m = self.m;
        let mut r = self.b.clone();
        for j in 0..self.n() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * self.x[j];
                }
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&r).map(|(p, q)| p * q).sum();
            self.x[self.basis[k]] = v;
        }
    }

    fn ftran(&self, col: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, a) in &self.cols[col] {
            for (k, slot) in alpha.iter_mut().enumerate() {
                *slot += self.binv[k * m + i] * a;
            }
        }
        alpha
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for k in 0..m {
            let c = self.cost[self.basis[k]];
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += c * bi;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, y: &[f64], j: usize) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn pivot(&mut self, r: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        {
            let row = &mut self.binv[r * m..(r + 1) * m];
            row.iter_mut().for_each(|v| *v /= piv);
        }
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
        for k in 0..m {
            if k == r || alpha[k] == 0.0 {
                continue;
            }
            let f = alpha[k];
            let row = &mut self.binv[k * m..(k + 1) * m];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
        }
        self.basis[r] = entering;
        self.state[entering] = State::Basic;
        self.since_refactor += 1;
        self.iterations += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.basis
            .iter()
            .map(|&j| (self.lo[j] - self.x[j]).max(self.x[j] - self.up[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    // ---- primal simplex ----------------------------------------------------

    fn primal(&mut self) -> LpOutcome {
        let mut degenerate = 0usize;
        loop {
            if self.iterations - self.budget_start > MAX_ITERATIONS {
                return LpOutcome::IterationLimit;
            }
            let bland = degenerate > DEGENERATE_BEFORE_BLAND;
            let y = self.duals();
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..self.n() {
                let st = self.state[j];
                if st == State::Basic || self.up[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let d = self.reduced_cost(&y, j);
                let score = match st {
                    State::Lower if d > DUAL_TOL => d,
                    State::Upper if d < -DUAL_TOL => -d,
                    _ => continue,
                };
                if bland {
                    entering = Some(j);
                    break;
                }
                if score > best {
                    best = score;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return LpOutcome::Optimal;
            };
            let dir = if self.state[q] == State::Lower { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);
            let flip = self.up[q] - self.lo[q];

            // Harris two-pass ratio test.
            let mut relaxed = f64::INFINITY;
            for (k, &a) in alpha.iter().enumerate() {
                let a = dir * a;
                let j = self.basis[k];
                if a > PIVOT_TOL {
                    relaxed = relaxed.min((self.x[j] - self.lo[j] + FEASIBILITY_TOL) / a);
                } else if a < -PIVOT_TOL && self.up[j].is_finite() {
                    relaxed = relaxed.min((self.up[j] - self.x[j] + FEASIBILITY_TOL) / -a);
                }
            }
            let mut leave: Option<(usize, f64, bool)> = None;
            let mut leave_mag = 0.0;
            for (k, &a) in alpha.iter().enumerate() {
                let a = dir * a;
                let j = self.basis[k];
                let (ratio, to_upper) = if a > PIVOT_TOL {
                    ((self.x[j] - self.lo[j]) / a, false)
                } else if a < -PIVOT_TOL && self.up[j].is_finite() {
                    ((self.up[j] - self.x[j]) / -a, true)
                } else {
                    continue;
                };
                if ratio > relaxed {
                    continue;
                }
                let better = if bland {
                    match leave {
                        None => true,
                        Some((k0, r0, _)) => {
                            ratio < r0 - 1e-12 || (ratio <= r0 + 1e-12 && j < self.basis[k0])
                        }
                    }
                } else {
                    a.abs() > leave_mag
                };
                if better {
                    leave = Some((k, ratio.max(0.0), to_upper));
                    leave_mag = a.abs();
                }
            }

            let theta = match leave {
                Some((_, r, _)) => r,
                None => f64::INFINITY,
            };
            if flip <= theta {
                if !flip.is_finite() {
                    return LpOutcome::Unbounded;
                }
                // Bound flip, basis unchanged.
                for (k, &a) in alpha.iter().enumerate() {
                    let j = self.basis[k];
                    self.x[j] -= dir * a * flip;
                }
                if self.state[q] == State::Lower {
                    self.state[q] = State::Upper;
                    self.x[q] = self.up[q];
                } else {
                    self.state[q] = State::Lower;
                    self.x[q] = self.lo[q];
                }
                self.iterations += 1;
                degenerate = 0;
                continue;
            }
            let (r, theta, to_upper) = leave.expect("finite ratio implies a leaving row");
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for (k, &a) in alpha.iter().enumerate() {
                let j = self.basis[k];
                self.x[j] -= dir * a * theta;
            }
            self.x[q] += dir * theta;
            let leaving = self.basis[r];
            if to_upper {
                self.state[leaving] = State::Upper;
                self.x[leaving] = self.up[leaving];
            } else {
                self.state[leaving] = State::Lower;
                self.x[leaving] = self.lo[leaving];
            }
            self.pivot(r, q, &alpha);
        }
    }

    // ---- dual simplex ------------------------------------------------------

    /// Dual simplex from a dual-feasible basis. Returns `Optimal` once primal
    /// feasibility is restored (the caller finishes with a primal pass).
    fn dual(&mut self) -> LpOutcome {
        let m = self.m;
        let mut stalled = 0usize;
        loop {
            if self.iterations - self.budget_start > MAX_ITERATIONS {
                return LpOutcome::IterationLimit;
            }
            let mut r = None;
            let mut worst = FEASIBILITY_TOL;
            for k in 0..m {
                let j = self.basis[k];
                let inf = (self.lo[j] - self.x[j]).max(self.x[j] - self.up[j]);
                if inf > worst {
                    worst = inf;
                    r = Some(k);
                }
            }
            let Some(r) = r else {
                return LpOutcome::Optimal;
            };
            let leaving = self.basis[r];
            let to_lower = self.x[leaving] < self.lo[leaving];
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let y = self.duals();
            let bland = stalled > DEGENERATE_BEFORE_BLAND;

            let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
            let mut relaxed = f64::INFINITY;
            for j in 0..self.n() {
                let st = self.state[j];
                if st == State::Basic || self.up[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let arj: f64 = self.cols[j].iter().map(|&(i, a)| rho[i] * a).sum();
                let eligible = match (st, to_lower) {
                    (State::Lower, true) => arj < -PIVOT_TOL,
                    (State::Upper, true) => arj > PIVOT_TOL,
                    (State::Lower, false) => arj > PIVOT_TOL,
                    (State::Upper, false) => arj < -PIVOT_TOL,
                    _ => false,
                };
                if !eligible {
                    continue;
                }
                let d = self.reduced_cost(&y, j);
                let slack = match st {
                    State::Lower => (-d).max(0.0),
                    _ => d.max(0.0),
                };
                relaxed = relaxed.min((slack + DUAL_TOL) / arj.abs());
                candidates.push((j, slack / arj.abs(), arj.abs()));
            }
            if candidates.is_empty() {
                return LpOutcome::Infeasible;
            }
            let mut q = None;
            let mut best_mag = 0.0;
            let mut best_ratio = f64::INFINITY;
            for &(j, ratio, mag) in &candidates {
                if bland {
                    if ratio < best_ratio - 1e-12 {
                        best_ratio = ratio;
                        q = Some(j);
                    }
                } else if ratio <= relaxed && mag > best_mag {
                    best_mag = mag;
                    q = Some(j);
                }
            }
            let q = q.expect("at least one candidate within the relaxed ratio");
            let alpha = self.ftran(q);
            let target = if to_lower { self.lo[leaving] } else { self.up[leaving] };
            let delta = (self.x[leaving] - target) / alpha[r];
            if delta.abs() <= 1e-12 {
                stalled += 1;
            } else {
                stalled = 0;
            }
            for (k, &a) in alpha.iter().enumerate() {
                let j = self.basis[k];
                self.x[j] -= a * delta;
            }
            self.x[q] += delta;
            if to_lower {
                self.state[leaving] = State::Lower;
                self.x[leaving] = self.lo[leaving];
            } else {
                self.state[leaving] = State::Upper;
                self.x[leaving] = self.up[leaving];
            }
            self.pivot(r, q, &alpha);
        }
    }
}
