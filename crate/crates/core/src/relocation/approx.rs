use super::graph::tie_tol;
use super::{check_inputs, soc_path, Algorithm, Diagnostics, RelocationResult};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::storage::{relocation_cost, MobileStorageUnit, TransportModel};

fn near_integer<S: Scalar>(x: S) -> Option<S> {
    let r = x.round();
    if (x - r).abs() <= S::of(1e-9) * (S::one() + x.abs()) {
        Some(r)
    } else {
        None
    }
}

/// `⌊s⌋_h / h`: the grid level at or below `s`.
pub fn h_floor<S: Scalar>(s: S, h: S) -> usize {
    let x = s / h;
    let m = near_integer(x).unwrap_or_else(|| x.floor());
    m.max(S::zero()).to_usize().unwrap_or(0)
}

/// SoC grid `{0, h, …, z·h}` with `z·h = s̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxGrid<S> {
    pub step: S,
    pub levels: usize,
    pub initial_level: usize,
}

impl<S: Scalar> ApproxGrid<S> {
    /// Shrinks `h` to the nearest divisor of the capacity and floors the
    /// initial SoC onto the grid. Values in `[s̄, s̄ + h)` floor to `s̄`.
    pub fn new(capacity: S, h: S, initial_soc: S) -> Result<Self> {
        if !(h > S::zero()) || !h.is_finite() {
            return Err(Error::Invalid(format!("SoC step must be positive, got {h}")));
        }
        if h > capacity * (S::one() + S::of(1e-9)) {
            return Err(Error::Invalid(format!("SoC step {h} exceeds the capacity {capacity}")));
        }
        let x = capacity / h;
        let z = near_integer(x).unwrap_or_else(|| x.ceil());
        let levels = z.to_usize().unwrap_or(1).max(1);
        let step = capacity / S::of(levels as f64);
        let initial_level = h_floor(initial_soc, step).min(levels);
        Ok(Self {
            step,
            levels,
            initial_level,
        })
    }
}

/// `h·(|λ_{i(1)}(1)| + Σ_{τ≥2} max_i |λ_i(τ)|)`, the maximum taken over
/// every bus.
pub fn theorem4_bound<S: Scalar>(prices: &[Vec<S>], start_bus: usize, h: S) -> S {
    let Some(first) = prices.first() else {
        return S::zero();
    };
    let rest: S = prices[1..]
        .iter()
        .map(|row| row.iter().fold(S::zero(), |m, v| m.max(v.abs())))
        .sum();
    h * (first[start_bus].abs() + rest)
}

/// Longest path over `(SoC level, bus)` nodes. A move from `i` to `j` in
/// period `t` may change the SoC by at most `ū(s̄)·(Δ − D_ij)`.
pub fn relocate_approx<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    h: S,
) -> Result<RelocationResult<S>> {
    let (periods, _) = check_inputs(prices, unit, transport)?;
    let grid = ApproxGrid::new(unit.capacity, h, unit.initial_soc)?;
    let (step, z) = (grid.step, grid.levels);
    let buses = &unit.admissible;
    let na = buses.len();
    let power = unit.power();
    let reach: Vec<Vec<Option<usize>>> = buses
        .iter()
        .map(|&i| {
            buses
                .iter()
                .map(|&j| {
                    transport
                        .can_move(i, j)
                        .then(|| h_floor(power * transport.operating_time(i, j), step).min(z))
                })
                .collect()
        })
        .collect();
    let kmax = reach.iter().flatten().flatten().copied().max().unwrap_or(0);
    let states = (z + 1) * na;
    let idx = |m: usize, a: usize| m * na + a;
    let lvl = |m: usize| S::of(m as f64) * step;

    let mut value: Vec<Vec<S>> = vec![vec![S::zero(); states]; periods];
    let mut choice: Vec<Vec<(u32, u32)>> = vec![vec![(0, 0); states]; periods];
    let mut cands: Vec<(usize, usize, S)> = Vec::new();
    for t in (0..periods).rev() {
        for m in 0..=z {
            for a in 0..na {
                let price = prices[t][buses[a]];
                cands.clear();
                let lo = m.saturating_sub(kmax);
                let hi = (m + kmax).min(z);
                for m2 in lo..=hi {
                    let du = lvl(m2) - lvl(m);
                    if t + 1 == periods {
                        match reach[a][a] {
                            Some(k) if m.abs_diff(m2) <= k => cands.push((m2, a, -price * du)),
                            _ => {}
                        }
                        continue;
                    }
                    for b in 0..na {
                        if let Some(k) = reach[a][b] {
                            if m.abs_diff(m2) <= k {
                                let v = -price * du - transport.move_cost(buses[a], buses[b])
                                    + value[t + 1][idx(m2, b)];
                                cands.push((m2, b, v));
                            }
                        }
                    }
                }
                let best = cands.iter().map(|c| c.2).fold(S::neg_infinity(), S::max);
                let tol = tie_tol(best);
                let &(m2, b, v) = cands
                    .iter()
                    .find(|c| c.2 >= best - tol)
                    .expect("staying idle is always feasible");
                value[t][idx(m, a)] = v;
                choice[t][idx(m, a)] = (m2 as u32, b as u32);
            }
        }
    }

    let a0 = buses.binary_search(&unit.initial_bus).expect("initial bus admissible");
    let (mut m, mut a) = (grid.initial_level, a0);
    let objective = value[0][idx(m, a)];
    let mut trajectory = Vec::with_capacity(periods);
    let mut u = Vec::with_capacity(periods);
    for row in choice.iter() {
        trajectory.push(buses[a]);
        let (m2, b) = row[idx(m, a)];
        u.push(lvl(m2 as usize) - lvl(m));
        m = m2 as usize;
        a = b as usize;
    }
    let (travel, _) = relocation_cost(&[trajectory.clone()], transport);
    let start_soc = lvl(grid.initial_level);
    let mut warnings = Vec::new();
    if (start_soc - unit.initial_soc).abs() > tie_tol(unit.capacity) {
        warnings.push(format!("initial SoC {} floored to {start_soc}", unit.initial_soc));
    }
    Ok(RelocationResult {
        algorithm: Algorithm::Approx,
        unit: unit.name.clone(),
        soc: Some(soc_path(start_soc, &u)),
        schedule: Some(u),
        objective,
        gross_value: objective + travel,
        travel_cost: travel,
        diagnostics: Diagnostics {
            bound: Some(theorem4_bound(prices, unit.initial_bus, step)),
            step: Some(step),
            initial_soc_used: Some(start_soc),
            warnings,
            ..Diagnostics::default()
        },
        trajectory,
    })
}
