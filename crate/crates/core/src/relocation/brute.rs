use rayon::prelude::*;

use super::{check_inputs, path_prices, soc_path, value_tol, Algorithm, Diagnostics, RelocationResult};
use crate::error::{Error, Result};
use crate::marginal_value::solve_price_arbitrage;
use crate::qp::Tolerances;
use crate::scalar::Scalar;
use crate::storage::{relocation_cost, travel_split, MobileStorageUnit, TransportModel};

/// Largest number of trajectories the exhaustive oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Storage value along a fixed path, before travel cost.
pub trait ValueEvaluator<S: Scalar>: Sync {
    /// Returns the value and, when available, the charge schedule.
    fn evaluate(&self, prices: &[S], operating_time: &[S], unit: &MobileStorageUnit<S>) -> Result<(S, Option<Vec<S>>)>;
}

/// Rapid storage: `s₀·λ(1) + s̄ Σ_t (λ(t+1) − λ(t))₊` with `λ(T+1) = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RapidIncrements;

impl<S: Scalar> ValueEvaluator<S> for RapidIncrements {
    fn evaluate(&self, prices: &[S], _: &[S], unit: &MobileStorageUnit<S>) -> Result<(S, Option<Vec<S>>)> {
        let mut v = unit.initial_soc * prices[0];
        for t in 0..prices.len() {
            let next = prices.get(t + 1).copied().unwrap_or_else(S::zero);
            v += unit.capacity * (next - prices[t]).pos();
        }
        Ok((v, None))
    }
}

/// The price-arbitrage LP along the path; with `power_limited` the charge
/// in each period is capped by `ū(s̄)·Δ^S(t)`.
#[derive(Debug, Clone, Copy)]
pub struct ArbitrageLp<S> {
    pub tol: Tolerances<S>,
    pub power_limited: bool,
}

impl<S: Scalar> ArbitrageLp<S> {
    pub fn new(tol: Tolerances<S>) -> Self {
        Self {
            tol,
            power_limited: true,
        }
    }

    pub fn unlimited(tol: Tolerances<S>) -> Self {
        Self {
            tol,
            power_limited: false,
        }
    }
}

impl<S: Scalar> ValueEvaluator<S> for ArbitrageLp<S> {
    fn evaluate(&self, prices: &[S], operating_time: &[S], unit: &MobileStorageUnit<S>) -> Result<(S, Option<Vec<S>>)> {
        let limits: Option<Vec<S>> = self
            .power_limited
            .then(|| operating_time.iter().map(|d| unit.power() * *d).collect());
        let a = solve_price_arbitrage(prices, unit.capacity, unit.initial_soc, limits.as_deref(), &self.tol)?;
        Ok((a.objective, Some(a.u)))
    }
}

fn enumerate_paths<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    transport: &TransportModel<S>,
    periods: usize,
) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![unit.initial_bus]];
    while let Some(p) = stack.pop() {
        if p.len() == periods {
            out.push(p);
            continue;
        }
        let last = *p.last().expect("non-empty");
        for &b in unit.admissible.iter().rev() {
            if transport.can_move(last, b) {
                let mut q = p.clone();
                q.push(b);
                stack.push(q);
            }
        }
    }
    out
}

fn finish<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    transport: &TransportModel<S>,
    trajectory: Vec<usize>,
    gross: S,
    schedule: Option<Vec<S>>,
    paths: usize,
) -> RelocationResult<S> {
    let (travel, _) = relocation_cost(&[trajectory.clone()], transport);
    RelocationResult {
        algorithm: Algorithm::Brute,
        unit: unit.name.clone(),
        soc: schedule.as_ref().map(|u| soc_path(unit.initial_soc, u)),
        schedule,
        objective: gross - travel,
        gross_value: gross,
        travel_cost: travel,
        trajectory,
        diagnostics: Diagnostics {
            paths_evaluated: paths,
            ..Diagnostics::default()
        },
    }
}

/// Evaluates every trajectory from the initial bus and returns the best;
/// ties go to the lexicographically smallest trajectory.
pub fn brute_force_relocation<S: Scalar, E: ValueEvaluator<S>>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    evaluator: &E,
) -> Result<RelocationResult<S>> {
    let (periods, _) = check_inputs(prices, unit, transport)?;
    let count = (unit.admissible.len() as f64).powi(periods as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::Guard(format!(
            "{} admissible buses over {periods} periods give {count:e} trajectories (limit {BRUTE_FORCE_LIMIT:e})",
            unit.admissible.len()
        )));
    }
    let paths = enumerate_paths(unit, transport, periods);
    let values: Vec<(S, Option<Vec<S>>)> = paths
        .par_iter()
        .map(|p| {
            let (_, operating) = travel_split(p, transport);
            let (v, u) = evaluator.evaluate(&path_prices(prices, p), &operating, unit)?;
            let (travel, _) = relocation_cost(&[p.clone()], transport);
            Ok((v - travel, u))
        })
        .collect::<Result<_>>()?;
    let best = values.iter().map(|v| v.0).fold(S::neg_infinity(), S::max);
    let k = values
        .iter()
        .position(|v| v.0 >= best - value_tol(best))
        .ok_or_else(|| Error::Invalid("no feasible trajectory from the initial bus".into()))?;
    let (net, schedule) = values[k].clone();
    let traj = paths[k].clone();
    let (travel, _) = relocation_cost(&[traj.clone()], transport);
    Ok(finish(unit, transport, traj, net + travel, schedule, paths.len()))
}
