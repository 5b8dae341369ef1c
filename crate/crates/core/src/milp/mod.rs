//! Linear and mixed-integer programming.
//!
//! A small dense solver stack sized for the supply-chain models in this crate
//! (up to a few hundred variables): a bounded-variable revised simplex with an
//! explicit basis inverse, a best-first branch-and-bound on top of it, and an
//! exhaustive enumeration oracle used to cross-check both.

mod branch;
mod lp_format;
mod oracle;
mod simplex;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use branch::{solve_milp, solve_milp_observed, MilpOptions, NodeEvent};
pub use lp_format::write_lp;
pub use oracle::{brute_force_oracle, lattice_size, MAX_ORACLE_LATTICE};
pub use simplex::solve_lp;

/// Primal feasibility tolerance on constraint residuals and variable bounds.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Distance from the nearest integer below which a value counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Default relative optimality gap for branch-and-bound.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("variable {var}: lower bound {lower} exceeds upper bound {upper}")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("constraint {row} references variable {var}, model has {n} variables")]
    UnknownVariable { row: usize, var: usize, n: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("integer variable {var} needs finite bounds for enumeration")]
    UnboundedInteger { var: usize },
    #[error("integer lattice has {points} points, limit is {limit}")]
    LatticeTooLarge { points: f64, limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Integer,
    Binary,
}

/// Index of a variable inside a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// One linear row; `terms` holds the nonzero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Signed violation of the row at `x`; zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A maximization problem `max c'x + offset` over linear rows and variable bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// Constant added to the objective value; not a decision.
    pub offset: f64,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub kinds: Vec<VarKind>,
    pub names: Vec<String>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        kind: VarKind,
        objective: f64,
    ) -> VarId {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.objective.push(objective);
        self.lower.push(lower);
        self.upper.push(upper);
        self.kinds.push(kind);
        self.names.push(name.into());
        VarId(self.objective.len() - 1)
    }

    pub fn add_constraint(&mut self, terms: Vec<(VarId, f64)>, relation: Relation, rhs: f64) {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (v, a) in terms {
            match merged.iter_mut().find(|(j, _)| *j == v.0) {
                Some(slot) => slot.1 += a,
                None => merged.push((v.0, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            terms: merged,
            relation,
            rhs,
        });
    }

    /// Adds a row given as a dense coefficient vector over all variables.
    pub fn add_dense_constraint(&mut self, coeffs: &[f64], relation: Relation, rhs: f64) {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (VarId(j), a))
            .collect();
        self.add_constraint(terms, relation, rhs);
    }

    pub fn is_integer(&self, j: usize) -> bool {
        !matches!(self.kinds[j], VarKind::Continuous)
    }

    pub fn integer_vars(&self) -> Vec<usize> {
        (0..self.num_vars()).filter(|&j| self.is_integer(j)).collect()
    }

    pub fn has_integers(&self) -> bool {
        self.kinds.iter().any(|k| !matches!(k, VarKind::Continuous))
    }

    /// Copy with every variable treated as continuous.
    pub fn relaxation(&self) -> LinearProgram {
        let mut lp = self.clone();
        lp.kinds.iter_mut().for_each(|k| *k = VarKind::Continuous);
        lp
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Largest bound, row, or integrality violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_vars() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
            if self.is_integer(j) {
                worst = worst.max((x[j] - x[j].round()).abs());
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(x));
        }
        worst
    }

    /// Checks dimensions, bound ordering and finiteness.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.kinds.len() != n {
            return Err(LpError::NonFinite("dimension mismatch".into()));
        }
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(LpError::NonFinite(format!("objective[{j}]")));
            }
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(LpError::InvalidBounds {
                    var: j,
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        for (row, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("rhs of row {row}")));
            }
            for &(var, a) in &c.terms {
                if var >= n {
                    return Err(LpError::UnknownVariable { row, var, n });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("row {row}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node limit reached; `assignment` holds the incumbent if one was found.
    GapLimit,
    /// Simplex pivot budget exhausted (numerical trouble).
    IterationLimit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub simplex_iterations: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective_value: f64,
    pub assignment: Vec<f64>,
    /// Best proven upper bound on the optimum (maximization).
    pub bound: f64,
    pub stats: SolveStats,
}

impl SolveResult {
    pub(crate) fn without_solution(status: SolveStatus, n: usize) -> Self {
        let (objective_value, bound) = match status {
            SolveStatus::Unbounded => (f64::INFINITY, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        Self {
            status,
            objective_value,
            assignment: vec![0.0; n],
            bound,
            stats: SolveStats::default(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// True when the result carries a usable primal assignment.
    pub fn has_solution(&self) -> bool {
        self.objective_value.is_finite()
    }

    pub fn relative_gap(&self) -> f64 {
        if !self.has_solution() {
            return f64::INFINITY;
        }
        (self.bound - self.objective_value).max(0.0) / self.objective_value.abs().max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_constraint_merges_duplicate_terms() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 1.0, VarKind::Continuous, 1.0);
        lp.add_constraint(vec![(x, 1.0), (x, 2.0)], Relation::Le, 3.0);
        assert_eq!(lp.constraints[0].terms, vec![(0, 3.0)]);
    }

    #[test]
    fn binary_bounds_are_clamped() {
        let mut lp = LinearProgram::new();
        lp.add_var("b", -4.0, 7.0, VarKind::Binary, 0.0);
        assert_eq!((lp.lower[0], lp.upper[0]), (0.0, 1.0));
    }

    #[test]
    fn validate_rejects_crossed_bounds() {
        let mut lp = LinearProgram::new();
        lp.add_var("x", 2.0, 1.0, VarKind::Continuous, 0.0);
        assert!(matches!(lp.validate(), Err(LpError::InvalidBounds { var: 0, .. })));
    }
}
