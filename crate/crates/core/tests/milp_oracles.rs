//! The solver against oracles that share no code with it: vertex
//! enumeration for LPs, plain lattice enumeration for pure integer programs.

#![allow(clippy::needless_range_loop)]

use h2market::milp::{solve_lp, solve_milp, LinearProgram, Relation, SolveStatus, VarKind, DEFAULT_GAP_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Row {
    a: Vec<f64>,
    b: f64,
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Row> {
    (0..m)
        .map(|_| Row {
            a: (0..n).map(|_| rng.random_range(-2.0..5.0f64).round()).collect(),
            b: rng.random_range(2.0..20.0f64).round(),
        })
        .collect()
}

/// Solves a square system by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best vertex of {x in box : rows <= b}: every choice of n tight
/// constraints among rows and bounds.
fn vertex_oracle(c: &[f64], rows: &[Row], hi: f64) -> Option<f64> {
    let n = c.len();
    let mut planes: Vec<(Vec<f64>, f64)> = rows.iter().map(|r| (r.a.clone(), r.b)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, hi));
    }
    let feasible = |x: &[f64]| {
        x.iter().all(|&v| v >= -1e-7 && v <= hi + 1e-7)
            && rows
                .iter()
                .all(|r| r.a.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() <= r.b + 1e-7)
    };
    let mut best: Option<f64> = None;
    let k = planes.len();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = pick.iter().map(|&i| planes[i].0.clone()).collect();
        let b = pick.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = c.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        // Next combination in lexicographic order.
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < k - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn build(c: &[f64], rows: &[Row], hi: f64, kind: VarKind) -> LinearProgram {
    let mut lp = LinearProgram::new();
    let vars: Vec<_> = c
        .iter()
        .enumerate()
        .map(|(j, &cj)| lp.add_var(format!("x{j}"), 0.0, hi, kind, cj))
        .collect();
    for r in rows {
        lp.add_constraint(vars.iter().copied().zip(r.a.iter().copied()).collect(), Relation::Le, r.b);
    }
    lp
}

#[test]
fn lp_optimum_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..20 {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=4);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..6.0f64).round()).collect();
        let rows = random_rows(&mut rng, n, m);
        let hi = rng.random_range(3.0..9.0f64).round();
        let expected = vertex_oracle(&c, &rows, hi).expect("origin is feasible");
        let got = solve_lp(&build(&c, &rows, hi, VarKind::Continuous)).unwrap();
        assert_eq!(got.status, SolveStatus::Optimal, "case {case}");
        assert!(
            (got.objective_value - expected).abs() <= 1e-7 * expected.abs().max(1.0),
            "case {case}: simplex {} vs vertices {expected}",
            got.objective_value
        );
    }
}

fn lattice_oracle(c: &[f64], rows: &[Row], hi: i64) -> Option<f64> {
    let n = c.len();
    let mut x = vec![0i64; n];
    let mut best: Option<f64> = None;
    loop {
        let ok = rows
            .iter()
            .all(|r| r.a.iter().zip(&x).map(|(a, &v)| a * v as f64).sum::<f64>() <= r.b + 1e-9);
        if ok {
            let v: f64 = c.iter().zip(&x).map(|(c, &v)| c * v as f64).sum();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if x[k] < hi {
                x[k] += 1;
                x[k + 1..].iter_mut().for_each(|v| *v = 0);
                break;
            }
        }
    }
}

#[test]
fn integer_programs_match_lattice_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for case in 0..50 {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(1..=4);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..7.0f64)).collect();
        let rows = random_rows(&mut rng, n, m);
        let hi = rng.random_range(2..=6);
        let expected = lattice_oracle(&c, &rows, hi).expect("origin is feasible");
        let got = solve_milp(&build(&c, &rows, hi as f64, VarKind::Integer), DEFAULT_GAP_TOL, 100_000).unwrap();
        assert_eq!(got.status, SolveStatus::Optimal, "case {case}");
        assert!(
            (got.objective_value - expected).abs() <= 1e-6 * expected.abs().max(1.0),
            "case {case}: branch and bound {} vs lattice {expected}",
            got.objective_value
        );
    }
}

#[test]
fn infeasible_integer_program_is_reported() {
    let mut lp = LinearProgram::new();
    let x = lp.add_var("x", 0.0, 10.0, VarKind::Integer, 1.0);
    let y = lp.add_var("y", 0.0, 10.0, VarKind::Integer, 1.0);
    lp.add_constraint(vec![(x, 2.0), (y, 2.0)], Relation::Eq, 3.0);
    assert_eq!(solve_milp(&lp, DEFAULT_GAP_TOL, 10_000).unwrap().status, SolveStatus::Infeasible);
}
