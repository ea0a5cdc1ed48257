use super::graph::{NodeKey, TimeExpandedGraph};
use super::{check_inputs, path_prices, soc_path, Algorithm, Diagnostics, RelocationResult};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::storage::{relocation_cost, MobileStorageUnit, TransportModel};

/// Shortest path for rapid storage with weights
/// `κD_ij − s̄(λ_j(t+1) − λ_i(t))₊` and sink weights `−s̄(−λ_i(T))₊`.
pub fn relocate_rapid<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    prices: &[Vec<S>],
    transport: &TransportModel<S>,
) -> Result<RelocationResult<S>> {
    let (periods, _) = check_inputs(prices, unit, transport)?;
    let cap = unit.capacity;
    let layer: Vec<NodeKey> = unit.admissible.iter().map(|&b| NodeKey::bus(b)).collect();
    let mut g = TimeExpandedGraph::new((0..periods).collect(), vec![layer.clone(); periods])?;
    g.set_source(NodeKey::bus(unit.initial_bus), S::zero())?;
    for t in 0..periods.saturating_sub(1) {
        for &i in &unit.admissible {
            for &j in &unit.admissible {
                if transport.can_move(i, j) {
                    let w = transport.move_cost(i, j) - cap * (prices[t + 1][j] - prices[t][i]).pos();
                    g.add_edge(t, NodeKey::bus(i), NodeKey::bus(j), w)?;
                }
            }
        }
    }
    for &i in &unit.admissible {
        g.set_sink(NodeKey::bus(i), -cap * (-prices[periods - 1][i]).pos())?;
    }
    let path = g
        .shortest_path()
        .ok_or_else(|| Error::Invalid("no feasible trajectory from the initial bus".into()))?;
    let trajectory: Vec<usize> = path.nodes.iter().map(|k| k.bus).collect();

    // hold s̄ whenever the next price along the path is higher
    let p = path_prices(prices, &trajectory);
    let mut u = Vec::with_capacity(periods);
    let mut prev = unit.initial_soc;
    for t in 0..periods {
        let next = p.get(t + 1).copied().unwrap_or_else(S::zero);
        let target = if next > p[t] { cap } else { S::zero() };
        u.push(target - prev);
        prev = target;
    }
    let (travel, _) = relocation_cost(&[trajectory.clone()], transport);
    let objective = -path.cost + unit.initial_soc * p[0];
    Ok(RelocationResult {
        algorithm: Algorithm::Rapid,
        unit: unit.name.clone(),
        soc: Some(soc_path(unit.initial_soc, &u)),
        schedule: Some(u),
        objective,
        gross_value: objective + travel,
        travel_cost: travel,
        trajectory,
        diagnostics: Diagnostics {
            path_weight: Some(path.cost),
            ..Diagnostics::default()
        },
    })
}
