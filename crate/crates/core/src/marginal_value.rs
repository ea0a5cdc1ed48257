//! Marginal values of mobile storage, stationary storage and wires, and the
//! single-unit price arbitrage problem with binding-pattern extraction.
//!
//! Period indices are 0-based. The price after the horizon is taken as 0.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dispatch::{DispatchSolution, Model};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::hop_path;
use crate::qp::{solve_lp, QuadraticProgram, Status, Tolerances};
use crate::scalar::Scalar;
use crate::storage::PowerRating;

/// Agreement required between dual sums and LMP reconstructions.
pub const IDENTITY_TOL: f64 = 1e-5;

/// Partition of periods by the storage constraint that binds.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BindingPattern {
    /// Energy-bound periods (SoC empty or full), ascending.
    pub energy: Vec<usize>,
    /// Power-bound periods that are not energy-bound, ascending.
    pub power: Vec<usize>,
    /// Periods where no storage constraint binds.
    #[serde(default)]
    pub free: Vec<usize>,
    /// Periods where an energy and a power constraint both bind.
    #[serde(default)]
    pub ambiguous: Vec<usize>,
    /// Some slack lies within ten binding tolerances without binding.
    #[serde(default)]
    pub near_degenerate: bool,
}

impl BindingPattern {
    /// Every period binds exactly one kind of constraint and the last period
    /// is energy-bound.
    pub fn is_regular(&self, periods: usize) -> bool {
        self.free.is_empty()
            && self.ambiguous.is_empty()
            && periods > 0
            && self.energy.last() == Some(&(periods - 1))
    }

    /// `σ(t) = min{τ ∈ T^e : τ > t}`.
    pub fn sigma(&self, t: usize) -> Option<usize> {
        self.energy.iter().copied().find(|&e| e > t)
    }

    /// Same `(T^e, T^p)` partition.
    pub fn same_sets(&self, other: &Self) -> bool {
        self.energy == other.energy && self.power == other.power
    }

    /// Builds a pattern from an explicit list of energy-bound periods, all
    /// other periods power-bound.
    pub fn from_energy(energy: Vec<usize>, periods: usize) -> Self {
        let power = (0..periods).filter(|t| !energy.contains(t)).collect();
        Self {
            energy,
            power,
            ..Self::default()
        }
    }
}

/// Reads the binding pattern off a storage schedule.
pub fn pattern_from_schedule<S: Scalar>(
    u: &[S],
    initial_soc: S,
    capacity: S,
    power_limits: Option<&[S]>,
    binding_tol: S,
) -> BindingPattern {
    let mut p = BindingPattern::default();
    let mut soc = initial_soc;
    let near = binding_tol * S::of(10.0);
    for (t, &ut) in u.iter().enumerate() {
        soc += ut;
        let e_slack = soc.min(capacity - soc);
        let energy = e_slack <= binding_tol;
        let (power, p_slack) = match power_limits {
            Some(lim) => {
                let s = lim[t] - ut.abs();
                (s <= binding_tol, s)
            }
            None => (false, S::infinity()),
        };
        if (!energy && e_slack <= near) || (!power && p_slack <= near) {
            p.near_degenerate = true;
        }
        match (energy, power) {
            (true, true) => {
                p.ambiguous.push(t);
                p.energy.push(t);
            }
            (true, false) => p.energy.push(t),
            (false, true) => p.power.push(t),
            (false, false) => p.free.push(t),
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arbitrage<S> {
    pub u: Vec<S>,
    pub soc: Vec<S>,
    /// `max −Σ λ(t) u(t)`
    pub objective: S,
    pub unique: bool,
    pub pattern: BindingPattern,
}

/// Maximizes `−Σ λ(t) u(t)` subject to `0 ≤ s₀ + Σ_{τ≤t} u ≤ s̄` and, when
/// given, `|u(t)| ≤ limit(t)`.
pub fn solve_price_arbitrage<S: Scalar>(
    prices: &[S],
    capacity: S,
    initial_soc: S,
    power_limits: Option<&[S]>,
    tol: &Tolerances<S>,
) -> Result<Arbitrage<S>> {
    let periods = prices.len();
    if let Some(l) = power_limits {
        if l.len() != periods {
            return Err(Error::Dimension("power limits and prices differ in length".into()));
        }
    }
    if !(initial_soc >= S::zero() && initial_soc <= capacity) {
        return Err(Error::Invalid("initial SoC outside [0, capacity]".into()));
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for t in 0..periods {
        let mut row = vec![S::zero(); periods];
        for v in row.iter_mut().take(t + 1) {
            *v = -S::one();
        }
        rows.push(row);
        rhs.push(initial_soc);
    }
    for t in 0..periods {
        let mut row = vec![S::zero(); periods];
        for v in row.iter_mut().take(t + 1) {
            *v = S::one();
        }
        rows.push(row);
        rhs.push(capacity - initial_soc);
    }
    if let Some(lim) = power_limits {
        for sign in [-S::one(), S::one()] {
            for t in 0..periods {
                let mut row = vec![S::zero(); periods];
                row[t] = sign;
                rows.push(row);
                rhs.push(lim[t]);
            }
        }
    }
    let lp = QuadraticProgram::linear(
        prices.to_vec(),
        Matrix::zeros(0, periods),
        vec![],
        Matrix::from_rows(&rows),
        rhs,
    )?;
    let sol = solve_lp(&lp, tol)?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("arbitrage LP ended with status {:?}", sol.status)));
    }
    let mut soc = Vec::with_capacity(periods);
    let mut s = initial_soc;
    for v in &sol.x {
        s += *v;
        soc.push(s);
    }
    let pattern = pattern_from_schedule(&sol.x, initial_soc, capacity, power_limits, tol.binding);
    Ok(Arbitrage {
        objective: -sol.objective,
        u: sol.x,
        soc,
        unique: sol.unique.unwrap_or(false),
        pattern,
    })
}

fn next_price<S: Scalar>(prices: &[S], t: usize) -> S {
    prices.get(t + 1).copied().unwrap_or_else(S::zero)
}

/// `Σ_t (λ(t+1) − λ(t))₊` with `λ(T+1) = 0`, and its per-period terms.
pub fn increment_sum<S: Scalar>(prices: &[S]) -> (S, Vec<S>) {
    let terms: Vec<S> = (0..prices.len())
        .map(|t| (next_price(prices, t) - prices[t]).pos())
        .collect();
    (terms.iter().copied().sum(), terms)
}

/// Energy-dual and power-dual values rebuilt from prices and a regular pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction<S> {
    pub mu: Vec<S>,
    pub omega_plus_phi: Vec<S>,
    pub value: S,
}

/// Rebuilds `μ` and `ω + φ` along a path from prices, for a regular pattern.
pub fn reconstruct_from_prices<S: Scalar>(
    prices: &[S],
    pattern: &BindingPattern,
    slope: S,
    operating_time: &[S],
) -> Option<Reconstruction<S>> {
    let periods = prices.len();
    if !pattern.is_regular(periods) {
        return None;
    }
    let price_at = |t: usize| if t < periods { prices[t] } else { S::zero() };
    let mut mu = vec![S::zero(); periods];
    let mut wp = vec![S::zero(); periods];
    for (r, &te) in pattern.energy.iter().enumerate() {
        let next = pattern.energy.get(r + 1).copied().unwrap_or(periods);
        mu[te] = (price_at(next) - price_at(te)).pos();
    }
    for &tp in &pattern.power {
        let s = pattern.sigma(tp)?;
        wp[tp] = (price_at(s) - price_at(tp)).abs();
    }
    let value = mu.iter().copied().sum::<S>()
        + slope
            * wp.iter()
                .zip(operating_time)
                .map(|(a, b)| *a * *b)
                .sum::<S>();
    Some(Reconstruction {
        mu,
        omega_plus_phi: wp,
        value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitValue<S> {
    pub unit: usize,
    pub name: String,
    /// Marginal value from the duals.
    pub value: S,
    /// `1ᵀμ`
    pub energy_term: S,
    /// `ū' (Δ^S)ᵀ(ω + φ)`
    pub power_term: S,
    /// Per-period contributions from the duals.
    pub per_period: Vec<S>,
    /// Marginal value rebuilt from LMPs, when applicable.
    pub from_prices: Option<S>,
    pub pattern: Option<BindingPattern>,
    pub consistent: Option<bool>,
    pub warnings: Vec<String>,
}

/// Rapid-model marginal value: `1ᵀμ_k` and the LMP-increment sum.
pub fn mv_rapid<S: Scalar>(sol: &DispatchSolution<S>, k: usize) -> Result<UnitValue<S>> {
    check_unit(sol, k)?;
    let prices = sol.path_prices(k);
    let (lmp_value, _) = increment_sum(&prices);
    let mu = &sol.mu[k];
    let dual: S = mu.iter().copied().sum();
    let mut warnings = Vec::new();
    if sol.model != Model::Rapid {
        warnings.push("solution includes power limits; the rapid formula ignores them".into());
    }
    if sol.degenerate {
        warnings.push("dispatch solution is degenerate; duals may not be unique".into());
    }
    let consistent = (dual - lmp_value).abs() <= S::of(IDENTITY_TOL) * (S::one() + lmp_value.abs());
    if !consistent {
        warnings.push(format!(
            "dual sum {dual} differs from LMP increments {lmp_value}; duals are likely non-unique"
        ));
    }
    Ok(UnitValue {
        unit: k,
        name: sol.unit_names[k].clone(),
        value: dual,
        energy_term: dual,
        power_term: S::zero(),
        per_period: mu.clone(),
        from_prices: Some(lmp_value),
        pattern: None,
        consistent: Some(consistent),
        warnings,
    })
}

/// General marginal value `1ᵀμ + ū'(Δ^S)ᵀ(ω + φ)`, cross-checked against
/// the price reconstruction on the arbitrage binding pattern.
pub fn mv_general<S: Scalar>(sol: &DispatchSolution<S>, k: usize, tol: &Tolerances<S>) -> Result<UnitValue<S>> {
    check_unit(sol, k)?;
    let periods = sol.num_periods();
    let slope = sol.rating_slopes[k];
    let ds = &sol.operating_time[k];
    let mu = &sol.mu[k];
    let wp: Vec<S> = match (&sol.omega, &sol.phi) {
        (Some(w), Some(p)) => (0..periods).map(|t| w[k][t] + p[k][t]).collect(),
        _ => vec![S::zero(); periods],
    };
    let per_period: Vec<S> = (0..periods).map(|t| mu[t] + slope * ds[t] * wp[t]).collect();
    let energy_term: S = mu.iter().copied().sum();
    let power_term: S = slope * (0..periods).map(|t| ds[t] * wp[t]).sum::<S>();
    let value = energy_term + power_term;

    let mut warnings = Vec::new();
    if sol.degenerate {
        warnings.push("dispatch solution is degenerate; duals may not be unique".into());
    }
    let prices = sol.path_prices(k);
    let limits: Option<Vec<S>> = match sol.model {
        Model::General => Some(ds.iter().map(|d| sol.power_ratings[k] * *d).collect()),
        Model::Rapid => None,
    };
    let arb = solve_price_arbitrage(&prices, sol.capacities[k], sol.initial_soc[k], limits.as_deref(), tol)?;
    let mut from_prices = None;
    let mut consistent = None;
    if !arb.unique {
        warnings.push("arbitrage optimum is not unique; binding pattern unreliable".into());
    } else if !arb.pattern.is_regular(periods) {
        if arb.pattern.energy.last() != Some(&(periods - 1)) {
            warnings.push("last period is not energy-bound; price reconstruction skipped".into());
        } else {
            warnings.push("binding pattern is not a partition of the periods; price reconstruction skipped".into());
        }
    } else if !sol.degenerate {
        if let Some(rec) = reconstruct_from_prices(&prices, &arb.pattern, slope, ds) {
            let ok = (rec.value - value).abs() <= S::of(IDENTITY_TOL) * (S::one() + value.abs());
            if !ok {
                warnings.push(format!(
                    "dual value {value} differs from price reconstruction {}",
                    rec.value
                ));
            }
            from_prices = Some(rec.value);
            consistent = Some(ok);
        }
    }
    Ok(UnitValue {
        unit: k,
        name: sol.unit_names[k].clone(),
        value,
        energy_term,
        power_term,
        per_period,
        from_prices,
        pattern: Some(arb.pattern),
        consistent,
        warnings,
    })
}

/// Dispatches to the rapid or general formula according to the model solved.
pub fn mv_unit<S: Scalar>(sol: &DispatchSolution<S>, k: usize, tol: &Tolerances<S>) -> Result<UnitValue<S>> {
    match sol.model {
        Model::Rapid => mv_rapid(sol, k),
        Model::General => mv_general(sol, k, tol),
    }
}

fn check_unit<S: Scalar>(sol: &DispatchSolution<S>, k: usize) -> Result<()> {
    if k >= sol.num_units() {
        return Err(Error::Invalid(format!("unit index {k} out of range")));
    }
    Ok(())
}

/// `MV^w_e = Σ_t β_e(t)` per directed row, and the per-period values.
pub fn mv_wire<S: Scalar>(sol: &DispatchSolution<S>) -> (Vec<S>, Vec<Vec<S>>) {
    let m2 = sol.directed_lines.len();
    let mut total = vec![S::zero(); m2];
    for b in &sol.beta {
        for (acc, v) in total.iter_mut().zip(b) {
            *acc += *v;
        }
    }
    (total, sol.beta.clone())
}

/// A stationary unit used to evaluate the power-limited stationary value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarySpec<S> {
    pub capacity: S,
    pub rating: PowerRating<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryValue<S> {
    pub bus: usize,
    pub value: S,
    pub per_period: Vec<S>,
    pub pattern: Option<BindingPattern>,
    pub warnings: Vec<String>,
}

/// Stationary storage value at `bus` from its own LMP series. Without a
/// spec this is the increment sum; with one, the power-limited form on the
/// pattern of the arbitrage problem at that bus.
pub fn mv_stationary<S: Scalar>(
    sol: &DispatchSolution<S>,
    bus: usize,
    spec: Option<StationarySpec<S>>,
    tol: &Tolerances<S>,
) -> Result<StationaryValue<S>> {
    if bus >= sol.num_buses() {
        return Err(Error::Invalid(format!("bus index {bus} out of range")));
    }
    let prices: Vec<S> = sol.lmp.iter().map(|row| row[bus]).collect();
    stationary_value(&prices, bus, sol.period, spec, tol)
}

/// [`mv_stationary`] on an explicit price series.
pub fn stationary_value<S: Scalar>(
    prices: &[S],
    bus: usize,
    period: S,
    spec: Option<StationarySpec<S>>,
    tol: &Tolerances<S>,
) -> Result<StationaryValue<S>> {
    let periods = prices.len();
    let Some(spec) = spec else {
        let (value, per_period) = increment_sum(prices);
        return Ok(StationaryValue {
            bus,
            value,
            per_period,
            pattern: None,
            warnings: vec![],
        });
    };
    let limit = spec.rating.at(spec.capacity) * period;
    let limits = vec![limit; periods];
    let arb = solve_price_arbitrage(prices, spec.capacity, S::zero(), Some(&limits), tol)?;
    let ds = vec![period; periods];
    let mut warnings = vec![];
    let rec = if arb.unique {
        reconstruct_from_prices(prices, &arb.pattern, spec.rating.slope, &ds)
    } else {
        None
    };
    let (value, per_period) = match rec {
        Some(r) => {
            let per: Vec<S> = (0..periods)
                .map(|t| r.mu[t] + spec.rating.slope * period * r.omega_plus_phi[t])
                .collect();
            (r.value, per)
        }
        None => {
            warnings.push("binding pattern irregular or non-unique; fell back to the increment sum".into());
            increment_sum(prices)
        }
    };
    Ok(StationaryValue {
        bus,
        value,
        per_period,
        pattern: Some(arb.pattern),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Greater,
    Equal,
    Less,
}

/// Mobile value of one move versus wires on the path plus storage at the
/// destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialCheck<S> {
    pub period: usize,
    pub from: usize,
    pub to: usize,
    pub mobile: S,
    pub wires: S,
    pub stationary: S,
    /// Directed rows on the fewest-hop path.
    pub path: Vec<usize>,
    /// `mobile` compared with `wires + stationary`.
    pub relation: Relation,
    /// Tree network and flows directed along the move.
    pub hypotheses_hold: bool,
    pub reason: Option<String>,
}

/// Compares the per-period mobile value of unit `k` moving at period `t`
/// with the wire values along the path plus the stationary value at the
/// destination.
pub fn radial_decomposition_check<S: Scalar>(sol: &DispatchSolution<S>, k: usize, t: usize) -> Result<RadialCheck<S>> {
    check_unit(sol, k)?;
    let periods = sol.num_periods();
    if t >= periods {
        return Err(Error::Invalid(format!("period {t} out of range")));
    }
    let traj = &sol.trajectories[k];
    let i = traj[t];
    let j = traj.get(t + 1).copied().unwrap_or(i);
    let n = sol.num_buses();
    let path = hop_path(n, &sol.lines, i, j)
        .ok_or_else(|| Error::Invalid("no path between the move endpoints".into()))?;
    let next = |b: usize| if t + 1 < periods { sol.lmp[t + 1][b] } else { S::zero() };
    let mobile = (next(j) - sol.lmp[t][i]).pos();
    let wires: S = path.iter().map(|&e| sol.beta[t][e]).sum();
    let stationary = (next(j) - sol.lmp[t][j]).pos();
    let eq_tol = S::of(IDENTITY_TOL) * (S::one() + mobile.abs());
    let diff = mobile - (wires + stationary);
    let relation = if diff.abs() <= eq_tol {
        Relation::Equal
    } else if diff > S::zero() {
        Relation::Greater
    } else {
        Relation::Less
    };
    let tree = sol.lines.len() + 1 == n;
    let aligned = path.iter().all(|&e| sol.flows[t][e] >= -S::of(1e-7));
    let reason = if !tree {
        Some("network is not radial".to_string())
    } else if !aligned {
        Some("line flows oppose the direction of the move".to_string())
    } else {
        None
    };
    Ok(RadialCheck {
        period: t,
        from: i,
        to: j,
        mobile,
        wires,
        stationary,
        path,
        relation,
        hypotheses_hold: reason.is_none(),
        reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalValueReport<S> {
    pub units: Vec<UnitValue<S>>,
    /// Increment-sum stationary value per bus.
    pub stationary: Vec<StationaryValue<S>>,
    /// Total wire value per directed row.
    pub wires: Vec<S>,
    pub wire_labels: Vec<String>,
    /// `wires_per_period[t][e]`
    pub wires_per_period: Vec<Vec<S>>,
    pub warnings: Vec<String>,
}

pub fn marginal_value_report<S: Scalar>(sol: &DispatchSolution<S>, tol: &Tolerances<S>) -> Result<MarginalValueReport<S>> {
    let mut units = Vec::new();
    let mut warnings = Vec::new();
    for k in 0..sol.num_units() {
        let v = mv_unit(sol, k, tol)?;
        for w in &v.warnings {
            warnings.push(format!("{}: {w}", v.name));
        }
        units.push(v);
    }
    let stationary = (0..sol.num_buses())
        .map(|b| mv_stationary(sol, b, None, tol))
        .collect::<Result<Vec<_>>>()?;
    let (wires, per) = mv_wire(sol);
    let floor = -S::of(1e-8);
    let negative = units.iter().any(|u| u.value < floor)
        || stationary.iter().any(|s| s.value < floor)
        || wires.iter().any(|w| *w < floor);
    if negative {
        warnings.push("a marginal value is negative beyond tolerance".into());
    }
    Ok(MarginalValueReport {
        units,
        stationary,
        wires,
        wire_labels: sol.directed_lines.clone(),
        wires_per_period: per,
        warnings,
    })
}

/// Orders two values with an absolute tolerance.
pub fn compare<S: Scalar>(a: S, b: S, tol: S) -> Ordering {
    if (a - b).abs() <= tol {
        Ordering::Equal
    } else if a > b {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arbitrage_two_periods() {
        let tol = Tolerances::default();
        let a = solve_price_arbitrage(&[2.0f64, 16.0], 0.5, 0.0, None, &tol).unwrap();
        assert!((a.objective - 7.0).abs() < 1e-9);
        assert!((a.u[0] - 0.5).abs() < 1e-9 && (a.u[1] + 0.5).abs() < 1e-9);
        assert!(a.unique);
        assert_eq!(a.pattern.energy, vec![0, 1]);
    }

    #[test]
    fn flat_prices_not_unique() {
        let tol = Tolerances::default();
        let a = solve_price_arbitrage(&[3.0f64, 3.0, 3.0], 1.0, 0.0, None, &tol).unwrap();
        assert!(a.objective.abs() < 1e-7);
        assert!(!a.unique);
    }

    #[test]
    fn decreasing_prices_idle() {
        let tol = Tolerances::default();
        let a = solve_price_arbitrage(&[5.0f64, 3.0, 1.0], 1.0, 0.0, None, &tol).unwrap();
        assert!(a.u.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn single_period_positive_price() {
        let tol = Tolerances::default();
        let a = solve_price_arbitrage(&[5.0f64], 1.0, 0.0, Some(&[1.0]), &tol).unwrap();
        assert!(a.u[0].abs() < 1e-8 && a.objective.abs() < 1e-8);
    }

    #[test]
    fn sigma_maps_to_next_energy_period() {
        let p = BindingPattern::from_energy(vec![1, 4], 5);
        assert_eq!(p.power, vec![0, 2, 3]);
        assert_eq!(p.sigma(0), Some(1));
        assert_eq!(p.sigma(2), Some(4));
        assert!(p.is_regular(5));
    }

    #[test]
    fn reconstruction_power_periods() {
        // charge at full rate for two periods, then discharge
        let prices = [1.0f64, 2.0, 10.0];
        let p = BindingPattern::from_energy(vec![1, 2], 3);
        let r = reconstruct_from_prices(&prices, &p, 0.5, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.mu, vec![0.0, 8.0, 0.0]);
        assert_eq!(r.omega_plus_phi, vec![1.0, 0.0, 0.0]);
        assert!((r.value - 8.5).abs() < 1e-12);
    }
}
