//! Trajectory optimization for a single small storage unit against a fixed
//! price field: rapid shortest path, exact binding-pattern enumeration,
//! SoC-discretized dynamic programming and exhaustive oracles.
//!
//! `prices[t][i]` is the zero-capacity LMP of bus `i` in period `t`
//! (0-based). Buses are indices into the transport matrix.

mod approx;
mod brute;
mod continuous;
mod exact;
pub mod graph;
mod rapid;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use approx::{h_floor, relocate_approx, theorem4_bound, ApproxGrid};
pub use brute::{brute_force_relocation, ArbitrageLp, RapidIncrements, ValueEvaluator, BRUTE_FORCE_LIMIT};
pub use continuous::{continuous_dp_relocation, Pwl};
pub use exact::{relocate_exact, relocate_exact_or_approx, relocate_exact_with, solve_sp_e, solve_sp_p, ExactOptions};
pub use graph::{GraphPath, NodeKey, TimeExpandedGraph};
pub use rapid::relocate_rapid;

use crate::error::{Error, Result};
use crate::marginal_value::BindingPattern;
use crate::qp::Tolerances;
use crate::scalar::Scalar;
use crate::storage::{relocation_cost, travel_split, MobileStorageUnit, TransportModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Rapid,
    Exact,
    Approx,
    Brute,
    ContinuousDp,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rapid" => Ok(Self::Rapid),
            "exact" => Ok(Self::Exact),
            "approx" => Ok(Self::Approx),
            "brute" => Ok(Self::Brute),
            "continuous-dp" => Ok(Self::ContinuousDp),
            other => Err(Error::Invalid(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<S> {
    /// Discretization error bound of the approximate DP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<S>,
    /// SoC step actually used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<S>,
    /// Initial SoC after flooring to the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_soc_used: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<BindingPattern>,
    /// Weight of the optimal graph path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_weight: Option<S>,
    #[serde(default)]
    pub patterns_tried: usize,
    #[serde(default)]
    pub admissible_patterns: usize,
    #[serde(default)]
    pub paths_evaluated: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelocationResult<S> {
    pub algorithm: Algorithm,
    pub unit: String,
    /// Bus index per period.
    pub trajectory: Vec<usize>,
    /// Charge per period, MWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<S>>,
    /// SoC at the end of each period, MWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc: Option<Vec<S>>,
    /// Storage value net of travel cost, $.
    pub objective: S,
    /// Storage value before travel cost, $.
    pub gross_value: S,
    pub travel_cost: S,
    pub diagnostics: Diagnostics<S>,
}

impl<S: Scalar> RelocationResult<S> {
    /// `−Σ λ_{i(t)}(t) u(t) − J^R`, from the trajectory and schedule alone.
    pub fn recompute_objective(&self, prices: &[Vec<S>], transport: &TransportModel<S>) -> Option<S> {
        let u = self.schedule.as_ref()?;
        let gross: S = u
            .iter()
            .enumerate()
            .map(|(t, &ut)| -prices[t][self.trajectory[t]] * ut)
            .sum();
        let (travel, _) = relocation_cost(&[self.trajectory.clone()], transport);
        Some(gross - travel)
    }
}

/// Checks the price field, unit and transport model against each other.
pub(crate) fn check_inputs<S: Scalar>(
    prices: &[Vec<S>],
    unit: &MobileStorageUnit<S>,
    transport: &TransportModel<S>,
) -> Result<(usize, usize)> {
    let periods = prices.len();
    if periods == 0 {
        return Err(Error::Invalid("price field has no periods".into()));
    }
    let n = transport.num_buses();
    for (t, row) in prices.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension(format!(
                "period {t} has {} prices, transport model has {n} buses",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite price in period {t}")));
        }
    }
    transport.validate()?;
    unit.validate(n)?;
    if unit.admissible.is_empty() {
        return Err(Error::Invalid(format!("unit {} has no admissible buses", unit.name)));
    }
    if !unit.admissible.contains(&unit.initial_bus) {
        return Err(Error::Invalid(format!(
            "unit {} starts at bus index {} which is not admissible",
            unit.name, unit.initial_bus
        )));
    }
    Ok((periods, n))
}

/// Objective values closer than this are treated as equal.
pub(crate) fn value_tol<S: Scalar>(v: S) -> S {
    S::of(1e-9).max(S::epsilon() * S::of(100.0)) * (S::one() + v.abs())
}

/// Prices seen along a trajectory.
pub fn path_prices<S: Scalar>(prices: &[Vec<S>], trajectory: &[usize]) -> Vec<S> {
    trajectory.iter().enumerate().map(|(t, &i)| prices[t][i]).collect()
}

/// `ū(s̄)·Δ^S(t)` along a trajectory.
pub fn power_limits<S: Scalar>(unit: &MobileStorageUnit<S>, trajectory: &[usize], transport: &TransportModel<S>) -> Vec<S> {
    let (_, operating) = travel_split(trajectory, transport);
    operating.into_iter().map(|d| unit.power() * d).collect()
}

pub(crate) fn soc_path<S: Scalar>(initial: S, u: &[S]) -> Vec<S> {
    let mut s = initial;
    u.iter()
        .map(|v| {
            s += *v;
            s
        })
        .collect()
}

/// Runs one algorithm for every unit of a fleet independently.
pub fn relocate_fleet<S: Scalar>(
    units: &[MobileStorageUnit<S>],
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    algorithm: Algorithm,
    step: Option<S>,
    tol: &Tolerances<S>,
) -> Result<Vec<RelocationResult<S>>> {
    units
        .par_iter()
        .map(|unit| match algorithm {
            Algorithm::Rapid => relocate_rapid(unit, prices, transport),
            Algorithm::Exact => relocate_exact(unit, prices, transport, tol),
            Algorithm::Approx => {
                let h = step.ok_or_else(|| Error::Invalid("approximate relocation needs a SoC step".into()))?;
                relocate_approx(unit, prices, transport, h)
            }
            Algorithm::Brute => brute_force_relocation(unit, prices, transport, &ArbitrageLp::new(*tol)),
            Algorithm::ContinuousDp => continuous_dp_relocation(unit, prices, transport),
        })
        .collect()
}
