//! Layered time-expanded graphs and shortest paths over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Node within a layer. Ordering is SoC level first, then bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub level: usize,
    pub bus: usize,
}

impl NodeKey {
    pub fn bus(bus: usize) -> Self {
        Self { level: 0, bus }
    }
}

/// A DAG with one layer per period plus an implicit source and sink.
///
/// Edges run from layer `l` to layer `l + 1` only. The source connects to
/// layer 0 and the last layer connects to the sink.
#[derive(Debug, Clone)]
pub struct TimeExpandedGraph<S> {
    periods: Vec<usize>,
    layers: Vec<Vec<NodeKey>>,
    edges: Vec<Vec<Vec<(usize, S)>>>,
    source: Vec<Option<S>>,
    sink: Vec<Option<S>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath<S> {
    pub cost: S,
    /// One node per layer.
    pub nodes: Vec<NodeKey>,
}

/// Values closer than this are treated as ties.
pub(crate) fn tie_tol<S: Scalar>(v: S) -> S {
    S::of(1e3) * S::epsilon() * (S::one() + v.abs())
}

impl<S: Scalar> TimeExpandedGraph<S> {
    /// `layers[l]` is sorted and deduplicated; `periods[l]` labels the layer.
    pub fn new(periods: Vec<usize>, mut layers: Vec<Vec<NodeKey>>) -> Result<Self> {
        if periods.len() != layers.len() {
            return Err(Error::Dimension("one period label per layer required".into()));
        }
        if layers.is_empty() {
            return Err(Error::Invalid("graph needs at least one layer".into()));
        }
        for layer in &mut layers {
            layer.sort();
            layer.dedup();
        }
        let edges = layers.iter().map(|l| vec![Vec::new(); l.len()]).collect();
        let source = vec![None; layers[0].len()];
        let sink = vec![None; layers.last().map_or(0, Vec::len)];
        Ok(Self {
            periods,
            layers,
            edges,
            source,
            sink,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &[NodeKey] {
        &self.layers[l]
    }

    pub fn period(&self, l: usize) -> usize {
        self.periods[l]
    }

    pub fn index_of(&self, l: usize, key: NodeKey) -> Option<usize> {
        self.layers[l].binary_search(&key).ok()
    }

    pub fn num_edges(&self) -> usize {
        let inner: usize = self.edges.iter().flatten().map(Vec::len).sum();
        inner + self.source.iter().flatten().count() + self.sink.iter().flatten().count()
    }

    fn check_weight(w: S) -> Result<()> {
        if w.is_finite() {
            Ok(())
        } else {
            Err(Error::Invalid("edge weight must be finite".into()))
        }
    }

    pub fn add_edge(&mut self, l: usize, from: NodeKey, to: NodeKey, weight: S) -> Result<()> {
        Self::check_weight(weight)?;
        if l + 1 >= self.layers.len() {
            return Err(Error::Invalid(format!("no layer after {l}")));
        }
        let a = self
            .index_of(l, from)
            .ok_or_else(|| Error::Invalid(format!("{from:?} not in layer {l}")))?;
        let b = self
            .index_of(l + 1, to)
            .ok_or_else(|| Error::Invalid(format!("{to:?} not in layer {}", l + 1)))?;
        let list = &mut self.edges[l][a];
        match list.iter_mut().find(|(t, _)| *t == b) {
            Some(e) => e.1 = e.1.min(weight),
            None => list.push((b, weight)),
        }
        Ok(())
    }

    pub fn set_source(&mut self, to: NodeKey, weight: S) -> Result<()> {
        Self::check_weight(weight)?;
        let a = self
            .index_of(0, to)
            .ok_or_else(|| Error::Invalid(format!("{to:?} not in first layer")))?;
        self.source[a] = Some(weight);
        Ok(())
    }

    pub fn set_sink(&mut self, from: NodeKey, weight: S) -> Result<()> {
        Self::check_weight(weight)?;
        let l = self.layers.len() - 1;
        let a = self
            .index_of(l, from)
            .ok_or_else(|| Error::Invalid(format!("{from:?} not in last layer")))?;
        self.sink[a] = Some(weight);
        Ok(())
    }

    /// Minimum-weight source-to-sink path by backward relaxation over the
    /// layers. Among optimal paths the lexicographically smallest node
    /// sequence is returned. `None` when the sink is unreachable.
    pub fn shortest_path(&self) -> Option<GraphPath<S>> {
        let last = self.layers.len() - 1;
        let mut to_go: Vec<Vec<Option<S>>> = vec![Vec::new(); self.layers.len()];
        let mut next: Vec<Vec<Option<usize>>> = vec![Vec::new(); self.layers.len()];
        to_go[last] = self.sink.clone();
        next[last] = vec![None; self.sink.len()];
        for l in (0..last).rev() {
            let mut vals = Vec::with_capacity(self.layers[l].len());
            let mut choice = Vec::with_capacity(self.layers[l].len());
            for out in &self.edges[l] {
                let cands: Vec<(usize, S)> = out
                    .iter()
                    .filter_map(|&(b, w)| to_go[l + 1][b].map(|v| (b, w + v)))
                    .collect();
                let (v, c) = pick_min(&cands);
                vals.push(v);
                choice.push(c);
            }
            to_go[l] = vals;
            next[l] = choice;
        }
        let cands: Vec<(usize, S)> = self
            .source
            .iter()
            .enumerate()
            .filter_map(|(a, w)| match (w, to_go[0][a]) {
                (Some(w), Some(v)) => Some((a, *w + v)),
                _ => None,
            })
            .collect();
        let (cost, first) = pick_min(&cands);
        let cost = cost?;
        let mut a = first?;
        let mut nodes = vec![self.layers[0][a]];
        for l in 0..last {
            a = next[l][a]?;
            nodes.push(self.layers[l + 1][a]);
        }
        Some(GraphPath { cost, nodes })
    }

    /// Shortest source-to-sink distance by Bellman-Ford relaxation over the
    /// flattened edge list, ignoring the layer structure.
    pub fn bellman_ford(&self) -> Option<S> {
        let mut offset = Vec::with_capacity(self.layers.len());
        let mut count = 1;
        for layer in &self.layers {
            offset.push(count);
            count += layer.len();
        }
        let sink = count;
        let mut edges = Vec::new();
        for (a, w) in self.source.iter().enumerate() {
            if let Some(w) = w {
                edges.push((0, offset[0] + a, *w));
            }
        }
        for (l, layer) in self.edges.iter().enumerate() {
            for (a, out) in layer.iter().enumerate() {
                for &(b, w) in out {
                    edges.push((offset[l] + a, offset[l + 1] + b, w));
                }
            }
        }
        let last = self.layers.len() - 1;
        for (a, w) in self.sink.iter().enumerate() {
            if let Some(w) = w {
                edges.push((offset[last] + a, sink, *w));
            }
        }
        let mut dist: Vec<Option<S>> = vec![None; sink + 1];
        dist[0] = Some(S::zero());
        for _ in 0..=sink {
            let mut changed = false;
            for &(a, b, w) in &edges {
                if let Some(da) = dist[a] {
                    let cand = da + w;
                    if dist[b].map_or(true, |db| cand < db) {
                        dist[b] = Some(cand);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        dist[sink]
    }
}

/// Smallest value; among values within the tie tolerance the first
/// candidate (candidates arrive in ascending key order) wins.
fn pick_min<S: Scalar>(cands: &[(usize, S)]) -> (Option<S>, Option<usize>) {
    let Some(best) = cands.iter().map(|c| c.1).reduce(S::min) else {
        return (None, None);
    };
    let tol = tie_tol(best);
    let mut chosen: Vec<&(usize, S)> = cands.iter().filter(|c| c.1 <= best + tol).collect();
    chosen.sort_by_key(|c| c.0);
    let c = chosen[0];
    (Some(c.1), Some(c.0))
}
