#![allow(dead_code)]

use mobistore::dispatch::{solve_dispatch, Model};
use mobistore::fixtures::Instance;
use mobistore::linalg::Matrix;
use mobistore::qp::{QuadraticProgram, Tolerances};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly convex QP with a known feasible point.
pub fn random_qp(seed: u64) -> QuadraticProgram<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=4);
    let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let meq = rng.gen_range(0..n.min(2) + 1).min(n - 1);
    let total = rng.gen_range(meq..=6);
    let min = total - meq;
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect() };
    let a_eq: Vec<Vec<f64>> = (0..meq).map(|_| row(&mut rng)).collect();
    let b_eq = a_eq.iter().map(|r| dot(r, &x0)).collect();
    let a_in: Vec<Vec<f64>> = (0..min).map(|_| row(&mut rng)).collect();
    let b_in = a_in.iter().map(|r| dot(r, &x0) + rng.gen_range(0.0..1.0)).collect();
    let qm = Matrix::from_rows(&(0..n).map(|i| (0..n).map(|j| q[(i, j)]).collect()).collect::<Vec<_>>());
    QuadraticProgram::new(qm, c, rows(a_eq, n), b_eq, rows(a_in, n), b_in).unwrap()
}

fn rows(r: Vec<Vec<f64>>, n: usize) -> Matrix<f64> {
    if r.is_empty() {
        Matrix::zeros(0, n)
    } else {
        Matrix::from_rows(&r)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves the equality-constrained KKT system for every subset of the
/// inequalities and keeps the best primal and dual feasible point.
pub fn active_set_oracle(qp: &QuadraticProgram<f64>) -> Option<(f64, Vec<f64>)> {
    let n = qp.c.len();
    let meq = qp.b_eq.len();
    let min = qp.b_in.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << min) {
        let active: Vec<usize> = (0..min).filter(|i| mask >> i & 1 == 1).collect();
        let k = meq + active.len();
        let dim = n + k;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = qp.q[(i, j)];
            }
            rhs[i] = -qp.c[i];
        }
        let con_rows: Vec<(&[f64], f64)> = (0..meq)
            .map(|r| (qp.a_eq.row(r), qp.b_eq[r]))
            .chain(active.iter().map(|&r| (qp.a_in.row(r), qp.b_in[r])))
            .collect();
        for (r, (a, b)) in con_rows.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
            rhs[n + r] = *b;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        let x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        let feasible = (0..min).all(|r| dot(qp.a_in.row(r), &x) <= qp.b_in[r] + 1e-9);
        let dual_ok = (0..active.len()).all(|r| sol[n + meq + r] >= -1e-9);
        if feasible && dual_ok {
            let v = qp.objective(&x);
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, x));
            }
        }
    }
    best
}

pub fn tol() -> Tolerances<f64> {
    Tolerances::default()
}

/// Optimal dispatch cost with every unit's capacity scaled.
pub fn dispatch_cost(inst: &Instance<f64>, k: usize, capacity: f64, model: Model) -> f64 {
    let mut fleet = inst.fleet.clone();
    fleet.units[k] = fleet.units[k].with_capacity(capacity);
    solve_dispatch(&inst.network, &fleet, &inst.trajectories, model, &tol())
        .unwrap()
        .objective
}

fn binding_signature(sol: &mobistore::dispatch::DispatchSolution<f64>, k: usize) -> (mobistore::marginal_value::BindingPattern, Vec<Vec<bool>>) {
    let limits: Vec<f64> = sol.operating_time[k].iter().map(|d| sol.power_ratings[k] * d).collect();
    let limits = match sol.model {
        Model::General => Some(limits),
        Model::Rapid => None,
    };
    let mut p = mobistore::marginal_value::pattern_from_schedule(&sol.u[k], sol.initial_soc[k], sol.capacities[k], limits.as_deref(), 1e-6);
    p.near_degenerate = false;
    let lines = sol
        .flows
        .iter()
        .map(|f| f.iter().zip(&sol.line_limits).map(|(v, l)| l - v <= 1e-6).collect())
        .collect();
    (p, lines)
}

/// Central difference `−(J(s̄+ε) − J(s̄−ε)) / 2ε` and the closed-form value,
/// or `None` when the instance is degenerate or its binding set moves.
pub fn envelope_pair(inst: &Instance<f64>, k: usize, model: Model) -> Option<(f64, f64)> {
    let base = solve_dispatch(&inst.network, &inst.fleet, &inst.trajectories, model, &tol()).ok()?;
    if base.degenerate {
        return None;
    }
    let s = inst.fleet.units[k].capacity;
    let eps = 1e-4 * s;
    let shifted = |c: f64| {
        let mut fleet = inst.fleet.clone();
        fleet.units[k] = fleet.units[k].with_capacity(c);
        solve_dispatch(&inst.network, &fleet, &inst.trajectories, model, &tol()).ok()
    };
    let up = shifted(s + eps)?;
    let down = shifted(s - eps)?;
    let sig = binding_signature(&base, k);
    if binding_signature(&up, k) != sig || binding_signature(&down, k) != sig {
        return None;
    }
    let fd = -(up.objective - down.objective) / (2.0 * eps);
    let mv = mobistore::marginal_value::mv_unit(&base, k, &tol()).ok()?;
    Some((fd, mv.value))
}
