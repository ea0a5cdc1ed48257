//! Multi-period economic dispatch with (mobile) storage.
//!
//! Variable layout: generator outputs `g_j(t)` for generator buses only
//! (period-major), then storage schedules `u_k(t)` (unit-major).
//!
//! Constraint order, which fixes the dual indexing:
//!
//! | block | rows | dual |
//! |-------|------|------|
//! | balance `−Σg(t) + Σu(t) = −Σd(t)` | `T` | `γ` |
//! | line limits `H(g − d − Eu) ≤ f̄` | `T × 2m` | `β` |
//! | SoC floor `−s₀ − Σ_{τ≤t} u ≤ 0` | `K × T` | `ν` |
//! | SoC ceiling `s₀ + Σ_{τ≤t} u ≤ s̄` | `K × T` | `μ` |
//! | discharge `−u ≤ ū Δ^S` (general only) | `K × T` | `ω` |
//! | charge `u ≤ ū Δ^S` (general only) | `K × T` | `φ` |
//! | generator bounds | as configured | – |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Matrix};
use crate::network::{build_shift_factors, PowerNetwork};
use crate::qp::{solve_qp, QuadraticProgram, Residuals, Status, Tolerances};
use crate::scalar::Scalar;
use crate::storage::{travel_split, validate_trajectory, Fleet, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Energy and power limits.
    #[default]
    General,
    /// Energy limits only.
    Rapid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution<S> {
    pub model: Model,
    pub bus_ids: Vec<usize>,
    /// `(from, to)` bus indices per line.
    pub lines: Vec<(usize, usize)>,
    /// `"<id>-><id>"` per directed row.
    pub directed_lines: Vec<String>,
    pub shift_factors: Matrix<S>,
    pub line_limits: Vec<S>,
    pub period: S,
    pub trajectories: Vec<Trajectory>,
    pub unit_names: Vec<String>,
    pub capacities: Vec<S>,
    pub initial_soc: Vec<S>,
    /// `ū'_k`
    pub rating_slopes: Vec<S>,
    /// `ū_k(s̄_k)`
    pub power_ratings: Vec<S>,
    /// `Δ^S_k(t)`
    pub operating_time: Vec<Vec<S>>,
    /// `g[t][i]`, zero at buses without a generator.
    pub g: Vec<Vec<S>>,
    /// `u[k][t]`, charging positive.
    pub u: Vec<Vec<S>>,
    pub soc: Vec<Vec<S>>,
    pub gamma: Vec<S>,
    /// `beta[t][e]` over directed rows.
    pub beta: Vec<Vec<S>>,
    pub nu: Vec<Vec<S>>,
    pub mu: Vec<Vec<S>>,
    pub omega: Option<Vec<Vec<S>>>,
    pub phi: Option<Vec<Vec<S>>>,
    /// `lmp[t][i]`
    pub lmp: Vec<Vec<S>>,
    /// Directed flows `H p(t)`.
    pub flows: Vec<Vec<S>>,
    pub objective: S,
    /// Binding-constraint Jacobian is rank deficient; duals may not be unique.
    pub degenerate: bool,
    pub residuals: Residuals<S>,
}

impl<S: Scalar> DispatchSolution<S> {
    pub fn num_periods(&self) -> usize {
        self.gamma.len()
    }

    pub fn num_buses(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn num_units(&self) -> usize {
        self.u.len()
    }

    /// LMP seen by unit `k` along its trajectory.
    pub fn path_prices(&self, k: usize) -> Vec<S> {
        self.trajectories[k]
            .iter()
            .enumerate()
            .map(|(t, &i)| self.lmp[t][i])
            .collect()
    }
}

/// `λ(t) = γ(t)·1 − Hᵀβ(t)`.
pub fn lmps<S: Scalar>(solution: &DispatchSolution<S>) -> Vec<Vec<S>> {
    assemble_lmps(&solution.shift_factors, &solution.gamma, &solution.beta)
}

fn assemble_lmps<S: Scalar>(h: &Matrix<S>, gamma: &[S], beta: &[Vec<S>]) -> Vec<Vec<S>> {
    gamma
        .iter()
        .zip(beta)
        .map(|(&g, b)| h.tr_mul_vec(b).into_iter().map(|v| g - v).collect())
        .collect()
}

/// General model with power limits.
pub fn solve_mped_s<S: Scalar>(
    net: &PowerNetwork<S>,
    fleet: &Fleet<S>,
    trajectories: &[Trajectory],
    tol: &Tolerances<S>,
) -> Result<DispatchSolution<S>> {
    solve_dispatch(net, fleet, trajectories, Model::General, tol)
}

/// Rapid model: power limits dropped.
pub fn solve_rapid_mped_s<S: Scalar>(
    net: &PowerNetwork<S>,
    fleet: &Fleet<S>,
    trajectories: &[Trajectory],
    tol: &Tolerances<S>,
) -> Result<DispatchSolution<S>> {
    solve_dispatch(net, fleet, trajectories, Model::Rapid, tol)
}

pub fn solve_dispatch<S: Scalar>(
    net: &PowerNetwork<S>,
    fleet: &Fleet<S>,
    trajectories: &[Trajectory],
    model: Model,
    tol: &Tolerances<S>,
) -> Result<DispatchSolution<S>> {
    let sf = build_shift_factors(net)?;
    let n = net.num_buses();
    let m2 = 2 * net.num_lines();
    let periods = net.num_periods();
    if periods == 0 {
        return Err(Error::Invalid("network has no load periods".into()));
    }
    fleet.validate(n)?;
    let k_units = fleet.units.len();
    if trajectories.len() != k_units {
        return Err(Error::Dimension(format!(
            "{} trajectories for {k_units} units",
            trajectories.len()
        )));
    }
    for (unit, traj) in fleet.units.iter().zip(trajectories) {
        validate_trajectory(unit, traj, &fleet.transport, periods)?;
    }

    let gens = net.generator_buses();
    let ng = gens.len();
    let nv = ng * periods + k_units * periods;
    let gv = |t: usize, j: usize| t * ng + j;
    let uv = |k: usize, t: usize| ng * periods + k * periods + t;

    let operating: Vec<Vec<S>> = trajectories
        .iter()
        .map(|tr| travel_split(tr, &fleet.transport).1)
        .collect();

    let mut q = Matrix::zeros(nv, nv);
    let mut c = vec![S::zero(); nv];
    for t in 0..periods {
        for (j, &bus) in gens.iter().enumerate() {
            q[(gv(t, j), gv(t, j))] = S::of(2.0) * net.buses[bus].cost_a;
            c[gv(t, j)] = net.buses[bus].cost_b;
        }
    }

    let mut labels_eq = Vec::new();
    let mut a_eq = Matrix::zeros(periods, nv);
    let mut b_eq = vec![S::zero(); periods];
    for t in 0..periods {
        for j in 0..ng {
            a_eq[(t, gv(t, j))] = -S::one();
        }
        for k in 0..k_units {
            a_eq[(t, uv(k, t))] = S::one();
        }
        b_eq[t] = -net.loads[t].iter().copied().fold(S::zero(), |a, b| a + b);
        labels_eq.push(format!("balance(t={})", t + 1));
    }

    let mut rows: Vec<Vec<S>> = Vec::new();
    let mut rhs: Vec<S> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for t in 0..periods {
        let hd = sf.h.mul_vec(&net.loads[t]);
        for e in 0..m2 {
            let mut row = vec![S::zero(); nv];
            for (j, &bus) in gens.iter().enumerate() {
                row[gv(t, j)] = sf.h[(e, bus)];
            }
            for (k, traj) in trajectories.iter().enumerate() {
                row[uv(k, t)] = -sf.h[(e, traj[t])];
            }
            rows.push(row);
            rhs.push(sf.limits[e] + hd[e]);
            labels.push(format!("line {} (t={})", net.directed_label(e), t + 1));
        }
    }
    let soc_floor_start = rows.len();
    for (k, unit) in fleet.units.iter().enumerate() {
        for t in 0..periods {
            let mut row = vec![S::zero(); nv];
            for tau in 0..=t {
                row[uv(k, tau)] = -S::one();
            }
            rows.push(row);
            rhs.push(unit.initial_soc);
            labels.push(format!("soc-floor {} (t={})", unit.name, t + 1));
        }
    }
    let soc_ceil_start = rows.len();
    for (k, unit) in fleet.units.iter().enumerate() {
        for t in 0..periods {
            let mut row = vec![S::zero(); nv];
            for tau in 0..=t {
                row[uv(k, tau)] = S::one();
            }
            rows.push(row);
            rhs.push(unit.capacity - unit.initial_soc);
            labels.push(format!("soc-ceiling {} (t={})", unit.name, t + 1));
        }
    }
    let power_start = rows.len();
    if model == Model::General {
        for sign in [-S::one(), S::one()] {
            for (k, unit) in fleet.units.iter().enumerate() {
                for t in 0..periods {
                    let mut row = vec![S::zero(); nv];
                    row[uv(k, t)] = sign;
                    rows.push(row);
                    rhs.push(unit.power() * operating[k][t]);
                    let kind = if sign < S::zero() { "discharge" } else { "charge" };
                    labels.push(format!("{kind}-limit {} (t={})", unit.name, t + 1));
                }
            }
        }
    }
    for t in 0..periods {
        for (j, &bus) in gens.iter().enumerate() {
            let b = &net.buses[bus];
            if let Some(hi) = b.gen_max {
                let mut row = vec![S::zero(); nv];
                row[gv(t, j)] = S::one();
                rows.push(row);
                rhs.push(hi);
                labels.push(format!("gen-max bus {} (t={})", b.id, t + 1));
            }
            if let Some(lo) = b.gen_min {
                let mut row = vec![S::zero(); nv];
                row[gv(t, j)] = -S::one();
                rows.push(row);
                rhs.push(-lo);
                labels.push(format!("gen-min bus {} (t={})", b.id, t + 1));
            }
        }
    }
    let a_in = if rows.is_empty() {
        Matrix::zeros(0, nv)
    } else {
        Matrix::from_rows(&rows)
    };
    let qp = QuadraticProgram::new(q, c, a_eq, b_eq, a_in, rhs)?;
    let sol = solve_qp(&qp, tol)?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            let cert = sol.certificate.as_ref();
            let mut weights: Vec<(S, String)> = Vec::new();
            if let Some(cert) = cert {
                for (v, l) in cert.y.iter().zip(&labels_eq) {
                    weights.push((v.abs(), l.clone()));
                }
                for (v, l) in cert.z.iter().zip(&labels) {
                    weights.push((*v, l.clone()));
                }
            }
            weights.retain(|(w, _)| *w > S::of(1e-6));
            weights.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
            return Err(Error::Infeasible {
                binding: weights.into_iter().take(6).map(|(_, l)| l).collect(),
            });
        }
        Status::Unbounded => return Err(Error::Unbounded),
        Status::MaxIterations => {
            return Err(Error::Solver(format!(
                "dispatch QP did not converge in {} iterations (residuals {:?})",
                sol.iterations, sol.residuals
            )))
        }
    }

    let x = &sol.x;
    let z = &sol.z;
    let mut g = vec![vec![S::zero(); n]; periods];
    for t in 0..periods {
        for (j, &bus) in gens.iter().enumerate() {
            g[t][bus] = x[gv(t, j)];
        }
    }
    let u: Vec<Vec<S>> = (0..k_units)
        .map(|k| (0..periods).map(|t| x[uv(k, t)]).collect())
        .collect();
    let soc: Vec<Vec<S>> = fleet
        .units
        .iter()
        .zip(&u)
        .map(|(unit, uk)| {
            let mut s = unit.initial_soc;
            uk.iter()
                .map(|v| {
                    s += *v;
                    s
                })
                .collect()
        })
        .collect();
    let gamma = sol.y.clone();
    let beta: Vec<Vec<S>> = (0..periods).map(|t| z[t * m2..(t + 1) * m2].to_vec()).collect();
    let block = |start: usize| -> Vec<Vec<S>> {
        (0..k_units)
            .map(|k| z[start + k * periods..start + (k + 1) * periods].to_vec())
            .collect()
    };
    let nu = block(soc_floor_start);
    let mu = block(soc_ceil_start);
    let (omega, phi) = if model == Model::General {
        (Some(block(power_start)), Some(block(power_start + k_units * periods)))
    } else {
        (None, None)
    };
    let lmp = assemble_lmps(&sf.h, &gamma, &beta);
    let flows: Vec<Vec<S>> = (0..periods)
        .map(|t| {
            let mut p: Vec<S> = (0..n).map(|i| g[t][i] - net.loads[t][i]).collect();
            for (k, traj) in trajectories.iter().enumerate() {
                p[traj[t]] -= u[k][t];
            }
            sf.flows(&p)
        })
        .collect();
    let degenerate = !qp.licq_holds(x, tol.binding);
    if degenerate {
        log::warn!("dispatch solution is degenerate: binding constraints are linearly dependent");
    }
    let scale = S::one() + norm_inf(x);
    debug_assert!(sol.residuals.primal <= tol.feasibility * scale);

    Ok(DispatchSolution {
        model,
        bus_ids: net.bus_ids(),
        lines: net.lines.iter().map(|l| (l.from, l.to)).collect(),
        directed_lines: (0..m2).map(|e| net.directed_label(e)).collect(),
        shift_factors: sf.h,
        line_limits: sf.limits,
        period: fleet.transport.period,
        trajectories: trajectories.to_vec(),
        unit_names: fleet.units.iter().map(|u| u.name.clone()).collect(),
        capacities: fleet.units.iter().map(|u| u.capacity).collect(),
        initial_soc: fleet.units.iter().map(|u| u.initial_soc).collect(),
        rating_slopes: fleet.units.iter().map(|u| u.rating.slope).collect(),
        power_ratings: fleet.units.iter().map(|u| u.power()).collect(),
        operating_time: operating,
        g,
        u,
        soc,
        gamma,
        beta,
        nu,
        mu,
        omega,
        phi,
        lmp,
        flows,
        objective: sol.objective,
        degenerate,
        residuals: sol.residuals,
    })
}
