use std::time::Instant;

use super::{solve_lp, LinearProgram, LpError, SolveResult, SolveStats, SolveStatus};

/// Largest integer lattice the enumeration oracle accepts.
pub const MAX_ORACLE_LATTICE: f64 = 1e6;

/// Number of integer lattice points the oracle would visit, or an error if
/// some integer variable has an infinite bound.
pub fn lattice_size(lp: &LinearProgram) -> Result<f64, LpError> {
    let mut points = 1.0f64;
    for j in lp.integer_vars() {
        let (lo, hi) = (lp.lower[j].ceil(), lp.upper[j].floor());
        if !lo.is_finite() || !hi.is_finite() {
            return Err(LpError::UnboundedInteger { var: j });
        }
        points *= (hi - lo + 1.0).max(0.0);
    }
    Ok(points)
}

/// Exhaustive MILP oracle: fixes every integer variable to each lattice point
/// in lexicographic order, solves the remaining LP cold, keeps the best.
///
/// Ties keep the first point found, so the result is fully deterministic.
pub fn brute_force_oracle(lp: &LinearProgram) -> Result<SolveResult, LpError> {
    lp.validate()?;
    let start = Instant::now();
    let integers = lp.integer_vars();
    let points = lattice_size(lp)?;
    let ranges: Vec<(i64, i64)> = integers
        .iter()
        .map(|&j| (lp.lower[j].ceil() as i64, lp.upper[j].floor() as i64))
        .collect();
    if points > MAX_ORACLE_LATTICE {
        return Err(LpError::LatticeTooLarge {
            points,
            limit: MAX_ORACLE_LATTICE,
        });
    }

    let mut fixed = lp.relaxation();
    let mut best: Option<SolveResult> = None;
    let mut saw_unbounded = false;
    let mut iterations = 0usize;
    let mut visited = 0usize;

    if points > 0.0 {
        let mut point: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'lattice: loop {
            for (k, &j) in integers.iter().enumerate() {
                fixed.lower[j] = point[k] as f64;
                fixed.upper[j] = point[k] as f64;
            }
            let r = solve_lp(&fixed)?;
            visited += 1;
            iterations += r.stats.simplex_iterations;
            match r.status {
                SolveStatus::Optimal => {
                    if best.as_ref().is_none_or(|b| r.objective_value > b.objective_value) {
                        best = Some(r);
                    }
                }
                SolveStatus::Unbounded => saw_unbounded = true,
                _ => {}
            }
            // Odometer increment, last integer variable fastest.
            let mut k = point.len();
            loop {
                if k == 0 {
                    break 'lattice;
                }
                k -= 1;
                if point[k] < ranges[k].1 {
                    point[k] += 1;
                    for (p, r) in point.iter_mut().zip(&ranges).skip(k + 1) {
                        *p = r.0;
                    }
                    break;
                }
            }
        }
    }

    let stats = SolveStats {
        nodes: visited,
        simplex_iterations: iterations,
        wall_time: start.elapsed(),
    };
    let mut result = if saw_unbounded {
        SolveResult::without_solution(SolveStatus::Unbounded, lp.num_vars())
    } else {
        match best {
            Some(mut r) => {
                for &j in &integers {
                    r.assignment[j] = r.assignment[j].round();
                }
                r.objective_value = lp.objective_value(&r.assignment);
                r.bound = r.objective_value;
                r
            }
            None => SolveResult::without_solution(SolveStatus::Infeasible, lp.num_vars()),
        }
    };
    result.stats = stats;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{Relation, VarKind};

    #[test]
    fn knapsack_enumeration() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 1.0, VarKind::Binary, 5.0);
        let y = lp.add_var("y", 0.0, 1.0, VarKind::Binary, 4.0);
        lp.add_constraint(vec![(x, 3.0), (y, 2.0)], Relation::Le, 4.0);
        let r = brute_force_oracle(&lp).unwrap();
        assert_eq!(r.assignment, vec![1.0, 0.0]);
        assert_eq!(r.objective_value, 5.0);
        assert_eq!(r.stats.nodes, 4);
    }

    #[test]
    fn continuous_model_matches_solve_lp() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 4.0, VarKind::Continuous, 2.0);
        let y = lp.add_var("y", 0.0, 4.0, VarKind::Continuous, 3.0);
        lp.add_constraint(vec![(x, 1.0), (y, 2.0)], Relation::Le, 5.0);
        let a = brute_force_oracle(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(a.objective_value, b.objective_value);
        assert_eq!(a.assignment, b.assignment);
    }

    #[test]
    fn infeasible_lattice() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, 3.0, VarKind::Integer, 1.0);
        lp.add_constraint(vec![(x, 2.0)], Relation::Eq, 3.0);
        assert_eq!(brute_force_oracle(&lp).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn refuses_huge_lattice() {
        let mut lp = LinearProgram::new();
        for j in 0..7 {
            lp.add_var(format!("x{j}"), 0.0, 9.0, VarKind::Integer, 1.0);
        }
        assert!(matches!(
            brute_force_oracle(&lp),
            Err(LpError::LatticeTooLarge { .. })
        ));
    }
}
