use std::collections::HashMap;

use log::warn;
use rayon::prelude::*;

use super::graph::{NodeKey, TimeExpandedGraph};
use super::{check_inputs, power_limits, relocate_approx, value_tol, Algorithm, Diagnostics, RelocationResult};
use crate::error::{Error, Result};
use crate::marginal_value::{pattern_from_schedule, solve_price_arbitrage, Arbitrage, BindingPattern};
use crate::qp::Tolerances;
use crate::scalar::Scalar;
use crate::storage::{relocation_cost, MobileStorageUnit, TransportModel};

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions<S> {
    /// Largest horizon accepted; enumeration visits `2^(T−1)` patterns.
    pub max_periods: usize,
    pub tol: Tolerances<S>,
}

impl<S: Scalar> Default for ExactOptions<S> {
    fn default() -> Self {
        Self {
            max_periods: 16,
            tol: Tolerances::default(),
        }
    }
}

/// Cheapest way from `start` in period `from` to `end` in period `to`,
/// through intermediate power-bound periods. When `start_is_power` the
/// starting period earns its power term too.
#[allow(clippy::too_many_arguments)]
fn segment<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    start: usize,
    from: usize,
    start_is_power: bool,
    end: usize,
    to: usize,
) -> Result<Option<(S, Vec<usize>)>> {
    let coef = unit.capacity * unit.rating.slope;
    let all: Vec<NodeKey> = unit.admissible.iter().map(|&b| NodeKey::bus(b)).collect();
    let mut layers = vec![vec![NodeKey::bus(start)]];
    for _ in from + 1..to {
        layers.push(all.clone());
    }
    layers.push(vec![NodeKey::bus(end)]);
    let mut g = TimeExpandedGraph::new((from..=to).collect(), layers)?;
    g.set_source(NodeKey::bus(start), S::zero())?;
    g.set_sink(NodeKey::bus(end), S::zero())?;
    let target = prices[to][end];
    for (l, t) in (from..to).enumerate() {
        let power = t > from || start_is_power;
        for a in g.layer(l).to_vec() {
            for b in g.layer(l + 1).to_vec() {
                if !transport.can_move(a.bus, b.bus) {
                    continue;
                }
                let mut w = transport.move_cost(a.bus, b.bus);
                if power {
                    w -= coef * transport.operating_time(a.bus, b.bus) * (target - prices[t][a.bus]).abs();
                }
                g.add_edge(l, a, b, w)?;
            }
        }
    }
    Ok(g.shortest_path().map(|p| {
        let inner = p.nodes[1..p.nodes.len() - 1].iter().map(|k| k.bus).collect();
        (p.cost, inner)
    }))
}

/// `J^SP-P_ij` between energy-bound periods `from` (at bus `i`) and `to`
/// (at bus `j`), with the buses visited in between.
pub fn solve_sp_p<S: Scalar>(
    i: usize,
    j: usize,
    from: usize,
    to: usize,
    prices: &[Vec<S>],
    unit: &MobileStorageUnit<S>,
    transport: &TransportModel<S>,
) -> Result<(S, Vec<usize>)> {
    check_inputs(prices, unit, transport)?;
    if to <= from + 1 || to >= prices.len() {
        return Err(Error::Invalid(format!(
            "power-bound segment needs from + 1 < to < T, got {from} and {to}"
        )));
    }
    segment(unit, prices, transport, i, from, false, j, to)?
        .ok_or_else(|| Error::Invalid(format!("bus index {j} unreachable from {i} between periods {from} and {to}")))
}

/// Shortest path over the energy-bound layers of `pattern`, assuming the
/// unit starts empty. The objective is the pattern's value estimate
/// `−(path weight)`; no schedule is produced.
pub fn solve_sp_e<S: Scalar>(
    pattern: &BindingPattern,
    prices: &[Vec<S>],
    unit: &MobileStorageUnit<S>,
    transport: &TransportModel<S>,
) -> Result<RelocationResult<S>> {
    let (periods, _) = check_inputs(prices, unit, transport)?;
    let energy = &pattern.energy;
    if energy.last() != Some(&(periods - 1)) || energy.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(
            "energy-bound periods must be strictly increasing and end at the last period".into(),
        ));
    }
    let cap = unit.capacity;
    let all: Vec<NodeKey> = unit.admissible.iter().map(|&b| NodeKey::bus(b)).collect();
    let mut layers = vec![all.clone(); energy.len()];
    let i0 = unit.initial_bus;
    if energy[0] == 0 {
        layers[0] = vec![NodeKey::bus(i0)];
    }
    let mut g = TimeExpandedGraph::new(energy.clone(), layers)?;
    let mut inner: HashMap<(usize, usize, usize), Vec<usize>> = HashMap::new();

    if energy[0] == 0 {
        g.set_source(NodeKey::bus(i0), S::zero())?;
    } else {
        for &j in &unit.admissible {
            if let Some((c, mid)) = segment(unit, prices, transport, i0, 0, true, j, energy[0])? {
                g.set_source(NodeKey::bus(j), c)?;
                let mut path = vec![i0];
                path.extend(mid);
                inner.insert((usize::MAX, i0, j), path);
            }
        }
    }
    for r in 0..energy.len() - 1 {
        let (from, to) = (energy[r], energy[r + 1]);
        for a in g.layer(r).to_vec() {
            for b in g.layer(r + 1).to_vec() {
                let (i, j) = (a.bus, b.bus);
                let gain = cap * (prices[to][j] - prices[from][i]).pos();
                if to == from + 1 {
                    if transport.can_move(i, j) {
                        g.add_edge(r, a, b, transport.move_cost(i, j) - gain)?;
                    }
                } else if let Some((c, mid)) = segment(unit, prices, transport, i, from, false, j, to)? {
                    g.add_edge(r, a, b, c - gain)?;
                    inner.insert((r, i, j), mid);
                }
            }
        }
    }
    for a in g.layer(energy.len() - 1).to_vec() {
        g.set_sink(a, -cap * (-prices[periods - 1][a.bus]).pos())?;
    }
    let path = g
        .shortest_path()
        .ok_or_else(|| Error::Invalid("no trajectory consistent with the pattern".into()))?;

    let mut trajectory = Vec::with_capacity(periods);
    if energy[0] != 0 {
        trajectory.extend(&inner[&(usize::MAX, i0, path.nodes[0].bus)]);
    }
    for (r, node) in path.nodes.iter().enumerate() {
        trajectory.push(node.bus);
        if let Some(next) = path.nodes.get(r + 1) {
            if let Some(mid) = inner.get(&(r, node.bus, next.bus)) {
                trajectory.extend(mid);
            }
        }
    }
    debug_assert_eq!(trajectory.len(), periods);
    let (travel, _) = relocation_cost(&[trajectory.clone()], transport);
    Ok(RelocationResult {
        algorithm: Algorithm::Exact,
        unit: unit.name.clone(),
        trajectory,
        schedule: None,
        soc: None,
        objective: -path.cost,
        gross_value: -path.cost + travel,
        travel_cost: travel,
        diagnostics: Diagnostics {
            pattern: Some(pattern.clone()),
            path_weight: Some(path.cost),
            ..Diagnostics::default()
        },
    })
}

struct Candidate<S> {
    sp_e: RelocationResult<S>,
    arbitrage: Arbitrage<S>,
    admissible: bool,
    degenerate: bool,
    warning: Option<String>,
}

fn evaluate_pattern<S: Scalar>(
    pattern: BindingPattern,
    prices: &[Vec<S>],
    unit: &MobileStorageUnit<S>,
    transport: &TransportModel<S>,
    tol: &Tolerances<S>,
) -> Result<Candidate<S>> {
    let sp_e = solve_sp_e(&pattern, prices, unit, transport)?;
    let limits = power_limits(unit, &sp_e.trajectory, transport);
    let p = super::path_prices(prices, &sp_e.trajectory);
    let arbitrage = solve_price_arbitrage(&p, unit.capacity, unit.initial_soc, Some(&limits), tol)?;
    let degenerate = !arbitrage.unique;
    let mut warning = None;
    let mut admissible = false;
    let periods = prices.len();
    let matches = |actual: &BindingPattern| actual.is_regular(periods) && actual.same_sets(&pattern);
    if !degenerate {
        if matches(&arbitrage.pattern) {
            admissible = true;
        } else {
            let loose = pattern_from_schedule(
                &arbitrage.u,
                unit.initial_soc,
                unit.capacity,
                Some(&limits),
                tol.binding * S::of(10.0),
            );
            if matches(&loose) {
                admissible = true;
                warning = Some(format!(
                    "pattern with energy-bound periods {:?} accepted within ten binding tolerances",
                    pattern.energy
                ));
            }
        }
    }
    Ok(Candidate {
        sp_e,
        arbitrage,
        admissible,
        degenerate,
        warning,
    })
}

/// Enumerates binding patterns, solves the energy-layer shortest path for
/// each and keeps the best trajectory whose actual arbitrage schedule
/// reproduces the assumed pattern.
pub fn relocate_exact_with<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    options: &ExactOptions<S>,
) -> Result<RelocationResult<S>> {
    let (periods, _) = check_inputs(prices, unit, transport)?;
    if periods > options.max_periods {
        return Err(Error::Guard(format!(
            "{periods} periods exceed the pattern enumeration limit of {}",
            options.max_periods
        )));
    }
    let masks: Vec<u64> = (0..1u64 << (periods - 1)).collect();
    let candidates: Vec<Candidate<S>> = masks
        .par_iter()
        .map(|&mask| {
            let energy: Vec<usize> = (0..periods)
                .filter(|&t| t == periods - 1 || mask >> t & 1 == 1)
                .collect();
            let pattern = BindingPattern::from_energy(energy, periods);
            evaluate_pattern(pattern, prices, unit, transport, &options.tol)
        })
        .collect::<Result<_>>()?;

    let value = |c: &Candidate<S>| c.arbitrage.objective - c.sp_e.travel_cost;
    let admissible: Vec<&Candidate<S>> = candidates.iter().filter(|c| c.admissible).collect();
    let degenerate = candidates.iter().filter(|c| c.degenerate).count();
    let Some(best_value) = admissible.iter().map(|c| value(c)).reduce(S::max) else {
        return Err(Error::NoAdmissiblePattern {
            candidates: candidates.len(),
            degenerate,
        });
    };
    let best = admissible
        .iter()
        .find(|c| value(c) >= best_value - value_tol(best_value))
        .expect("maximum is attained");

    let mut warnings: Vec<String> = admissible.iter().filter_map(|c| c.warning.clone()).collect();
    if unit.initial_soc != S::zero() {
        warnings.push("pattern weights assume an empty start; the initial SoC only enters the final evaluation".into());
    }
    if unit.rating.intercept != S::zero() {
        warnings.push("power rating has an intercept; pattern weights use its slope only".into());
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(RelocationResult {
        algorithm: Algorithm::Exact,
        unit: unit.name.clone(),
        trajectory: best.sp_e.trajectory.clone(),
        schedule: Some(best.arbitrage.u.clone()),
        soc: Some(best.arbitrage.soc.clone()),
        objective: value(best),
        gross_value: best.arbitrage.objective,
        travel_cost: best.sp_e.travel_cost,
        diagnostics: Diagnostics {
            pattern: Some(best.arbitrage.pattern.clone()),
            path_weight: best.sp_e.diagnostics.path_weight,
            patterns_tried: candidates.len(),
            admissible_patterns: admissible.len(),
            warnings,
            ..Diagnostics::default()
        },
    })
}

pub fn relocate_exact<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    tol: &Tolerances<S>,
) -> Result<RelocationResult<S>> {
    relocate_exact_with(
        unit,
        prices,
        transport,
        &ExactOptions {
            tol: *tol,
            ..ExactOptions::default()
        },
    )
}

/// [`relocate_exact`], switching to [`relocate_approx`] with step `h` when
/// no admissible pattern exists.
pub fn relocate_exact_or_approx<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
    tol: &Tolerances<S>,
    h: S,
) -> Result<RelocationResult<S>> {
    match relocate_exact(unit, prices, transport, tol) {
        Err(Error::NoAdmissiblePattern { candidates, degenerate }) => {
            let msg = format!(
                "no admissible binding pattern ({candidates} candidates, {degenerate} degenerate); used the approximate DP"
            );
            warn!("{msg}");
            let mut r = relocate_approx(unit, prices, transport, h)?;
            r.diagnostics.warnings.push(msg);
            Ok(r)
        }
        other => other,
    }
}
