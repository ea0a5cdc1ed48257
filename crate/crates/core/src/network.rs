//! Buses, lines, generator costs, loads and DC shift factors.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus<S> {
    pub id: usize,
    /// Quadratic coefficient of `C(g) = a g² + b g`.
    pub cost_a: S,
    pub cost_b: S,
    /// `Some(0)` marks a bus without a generator; `None` is unbounded above.
    pub gen_max: Option<S>,
    pub gen_min: Option<S>,
}

impl<S: Scalar> Bus<S> {
    pub fn has_generator(&self) -> bool {
        self.gen_max.map_or(true, |g| g > S::zero())
    }
}

/// Line endpoints are bus indices (0-based), not ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line<S> {
    pub from: usize,
    pub to: usize,
    pub susceptance: S,
    pub limit: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerNetwork<S> {
    pub buses: Vec<Bus<S>>,
    pub lines: Vec<Line<S>>,
    /// `loads[t][i]`, MW; negative entries model fixed injections.
    pub loads: Vec<Vec<S>>,
    /// Slack bus index.
    pub slack: usize,
}

/// Invariant violations reported by [`PowerNetwork::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "PascalCase")]
pub enum Violation {
    NonStrictlyConvexCost { bus: usize },
    BadSusceptance { line: usize },
    BadLimit { line: usize },
    SelfLoop { line: usize },
    UnknownBus { line: usize },
    BadGeneratorBounds { bus: usize },
    DuplicateBusId { id: usize },
    BadSlack { slack: usize },
    LoadShape { period: usize },
    NonFiniteData,
    NoBuses,
    Disconnected { components: Vec<Vec<usize>> },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonStrictlyConvexCost { bus } => write!(f, "NonStrictlyConvexCost(bus {bus})"),
            Violation::BadSusceptance { line } => write!(f, "BadSusceptance(line {line})"),
            Violation::BadLimit { line } => write!(f, "BadLimit(line {line})"),
            Violation::SelfLoop { line } => write!(f, "SelfLoop(line {line})"),
            Violation::UnknownBus { line } => write!(f, "UnknownBus(line {line})"),
            Violation::BadGeneratorBounds { bus } => write!(f, "BadGeneratorBounds(bus {bus})"),
            Violation::DuplicateBusId { id } => write!(f, "DuplicateBusId({id})"),
            Violation::BadSlack { slack } => write!(f, "BadSlack({slack})"),
            Violation::LoadShape { period } => write!(f, "LoadShape(period {period})"),
            Violation::NonFiniteData => write!(f, "NonFiniteData"),
            Violation::NoBuses => write!(f, "NoBuses"),
            Violation::Disconnected { components } => write!(f, "Disconnected({components:?})"),
        }
    }
}

impl<S: Scalar> PowerNetwork<S> {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn num_periods(&self) -> usize {
        self.loads.len()
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_ids(&self) -> Vec<usize> {
        self.buses.iter().map(|b| b.id).collect()
    }

    /// Indices of buses carrying a generator variable.
    pub fn generator_buses(&self) -> Vec<usize> {
        (0..self.buses.len()).filter(|&i| self.buses[i].has_generator()).collect()
    }

    /// Empty iff every invariant holds. Bus and line references in the
    /// reported codes are 0-based indices.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.buses.len();
        if n == 0 {
            out.push(Violation::NoBuses);
            return out;
        }
        let mut seen = BTreeMap::new();
        for b in &self.buses {
            if seen.insert(b.id, ()).is_some() {
                out.push(Violation::DuplicateBusId { id: b.id });
            }
        }
        let mut finite = true;
        for (i, b) in self.buses.iter().enumerate() {
            finite &= b.cost_a.is_finite() && b.cost_b.is_finite();
            if b.has_generator() && !(b.cost_a > S::zero()) {
                out.push(Violation::NonStrictlyConvexCost { bus: i });
            }
            let lo = b.gen_min.unwrap_or(S::neg_infinity());
            let hi = b.gen_max.unwrap_or(S::infinity());
            if b.gen_max.is_some_and(|g| g < S::zero()) || lo > hi || b.gen_min.is_some_and(|g| !g.is_finite()) {
                out.push(Violation::BadGeneratorBounds { bus: i });
            }
        }
        for (l, line) in self.lines.iter().enumerate() {
            finite &= line.susceptance.is_finite() && line.limit.is_finite();
            if line.from >= n || line.to >= n {
                out.push(Violation::UnknownBus { line: l });
                continue;
            }
            if line.from == line.to {
                out.push(Violation::SelfLoop { line: l });
            }
            if !(line.susceptance > S::zero()) {
                out.push(Violation::BadSusceptance { line: l });
            }
            if !(line.limit > S::zero()) {
                out.push(Violation::BadLimit { line: l });
            }
        }
        for (t, row) in self.loads.iter().enumerate() {
            if row.len() != n {
                out.push(Violation::LoadShape { period: t });
            }
            finite &= row.iter().all(|v| v.is_finite());
        }
        if !finite {
            out.push(Violation::NonFiniteData);
        }
        if self.slack >= n {
            out.push(Violation::BadSlack { slack: self.slack });
        }
        let comps = self.components();
        if comps.len() > 1 {
            out.push(Violation::Disconnected { components: comps });
        }
        out
    }

    /// Connected components as sorted lists of bus ids.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.buses.len();
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![];
            let mut queue = VecDeque::from([start]);
            comp[start] = id;
            while let Some(v) = queue.pop_front() {
                members.push(self.buses[v].id);
                for &(w, _) in &adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        queue.push_back(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// `adj[i]` lists `(neighbour, line index)`, sorted by neighbour.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for (l, line) in self.lines.iter().enumerate() {
            if line.from < n && line.to < n {
                adj[line.from].push((line.to, l));
                adj[line.to].push((line.from, l));
            }
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    pub fn is_tree(&self) -> bool {
        self.lines.len() + 1 == self.buses.len() && self.components().len() == 1
    }

    /// Fewest-hop bus path from `i` to `j` (smallest neighbour first on ties),
    /// returned as directed row indices into the shift-factor matrix.
    pub fn hop_path(&self, i: usize, j: usize) -> Option<Vec<usize>> {
        let ends: Vec<(usize, usize)> = self.lines.iter().map(|l| (l.from, l.to)).collect();
        hop_path(self.buses.len(), &ends, i, j)
    }

    /// Directed row of line `l` when power leaves bus `from`.
    pub fn directed_row(&self, l: usize, from: usize) -> usize {
        if self.lines[l].from == from {
            2 * l
        } else {
            2 * l + 1
        }
    }

    /// Human-readable label `"<id>-><id>"` for a directed row.
    pub fn directed_label(&self, row: usize) -> String {
        let line = &self.lines[row / 2];
        let (a, b) = if row % 2 == 0 {
            (line.from, line.to)
        } else {
            (line.to, line.from)
        };
        format!("{}->{}", self.buses[a].id, self.buses[b].id)
    }

    /// Checks invariants, returning the first violation as an error.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        match v.into_iter().next() {
            None => Ok(()),
            Some(Violation::Disconnected { components }) => Err(Error::Disconnected { components }),
            Some(other) => Err(Error::Invalid(other.to_string())),
        }
    }
}

/// Fewest-hop path over lines given as `(from, to)` index pairs, as directed
/// rows (`2l` leaves `from`, `2l + 1` leaves `to`).
pub fn hop_path(n: usize, lines: &[(usize, usize)], i: usize, j: usize) -> Option<Vec<usize>> {
    if i >= n || j >= n {
        return None;
    }
    let mut adj = vec![Vec::new(); n];
    for (l, &(a, b)) in lines.iter().enumerate() {
        if a < n && b < n {
            adj[a].push((b, l));
            adj[b].push((a, l));
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[i] = true;
    let mut queue = VecDeque::from([i]);
    while let Some(v) = queue.pop_front() {
        if v == j {
            break;
        }
        for &(w, l) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some((v, l));
                queue.push_back(w);
            }
        }
    }
    if !seen[j] {
        return None;
    }
    let mut rows = Vec::new();
    let mut v = j;
    while v != i {
        let (u, l) = prev[v]?;
        rows.push(if lines[l].0 == u { 2 * l } else { 2 * l + 1 });
        v = u;
    }
    rows.reverse();
    Some(rows)
}

/// Directed shift factors and matching limits; rows `2l` (forward) and
/// `2l + 1` (reverse) belong to line `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftFactorMatrix<S> {
    pub h: Matrix<S>,
    pub limits: Vec<S>,
}

impl<S: Scalar> ShiftFactorMatrix<S> {
    /// Directed flows `H p`.
    pub fn flows(&self, injection: &[S]) -> Vec<S> {
        self.h.mul_vec(injection)
    }
}

/// DC power transfer distribution factors referenced to the slack bus.
pub fn build_shift_factors<S: Scalar>(net: &PowerNetwork<S>) -> Result<ShiftFactorMatrix<S>> {
    net.check()?;
    let n = net.num_buses();
    let m = net.num_lines();
    let slack = net.slack;
    let mut h = Matrix::zeros(2 * m, n);
    let mut limits = Vec::with_capacity(2 * m);
    for line in &net.lines {
        limits.push(line.limit);
        limits.push(line.limit);
    }
    if n == 1 {
        return Ok(ShiftFactorMatrix { h, limits });
    }
    // reduced susceptance Laplacian without the slack row/column
    let idx: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let pos = |i: usize| if i < slack { i } else { i - 1 };
    let mut b = Matrix::zeros(n - 1, n - 1);
    for line in &net.lines {
        let (f, t, y) = (line.from, line.to, line.susceptance);
        if f != slack {
            b[(pos(f), pos(f))] += y;
        }
        if t != slack {
            b[(pos(t), pos(t))] += y;
        }
        if f != slack && t != slack {
            b[(pos(f), pos(t))] -= y;
            b[(pos(t), pos(f))] -= y;
        }
    }
    let lu = Lu::factor(&b, S::epsilon() * S::of(16.0))
        .ok_or_else(|| Error::Invalid("singular susceptance matrix".into()))?;
    // X = B_red⁻¹ expanded with a zero slack row/column
    let mut x = Matrix::zeros(n, n);
    for (col, &j) in idx.iter().enumerate() {
        let mut e = vec![S::zero(); n - 1];
        e[col] = S::one();
        let sol = lu.solve(&e);
        for (r, &i) in idx.iter().enumerate() {
            x[(i, j)] = sol[r];
        }
    }
    for (l, line) in net.lines.iter().enumerate() {
        for j in 0..n {
            let v = line.susceptance * (x[(line.from, j)] - x[(line.to, j)]);
            h[(2 * l, j)] = v;
            h[(2 * l + 1, j)] = -v;
        }
    }
    Ok(ShiftFactorMatrix { h, limits })
}
