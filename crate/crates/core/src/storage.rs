//! Mobile storage units, the transport model and trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Affine power rating `ū(s̄) = slope·s̄ + intercept`, in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerRating<S> {
    pub slope: S,
    pub intercept: S,
}

impl<S: Scalar> PowerRating<S> {
    pub fn at(&self, capacity: S) -> S {
        self.slope * capacity + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobileStorageUnit<S> {
    pub name: String,
    /// MWh.
    pub capacity: S,
    pub rating: PowerRating<S>,
    /// Bus indices, sorted and deduplicated.
    pub admissible: Vec<usize>,
    pub initial_bus: usize,
    /// MWh.
    pub initial_soc: S,
}

impl<S: Scalar> MobileStorageUnit<S> {
    pub fn power(&self) -> S {
        self.rating.at(self.capacity)
    }

    pub fn is_stationary(&self) -> bool {
        self.admissible.len() == 1
    }

    pub fn with_capacity(&self, capacity: S) -> Self {
        Self {
            capacity,
            ..self.clone()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let name = &self.name;
        if !(self.capacity >= S::zero()) || !self.capacity.is_finite() {
            return Err(Error::Invalid(format!("unit {name}: capacity must be finite and >= 0")));
        }
        if !(self.initial_soc >= S::zero() && self.initial_soc <= self.capacity) {
            return Err(Error::Invalid(format!(
                "unit {name}: initial SoC {} outside [0, {}]",
                self.initial_soc, self.capacity
            )));
        }
        if self.capacity > S::zero() && !(self.power() > S::zero()) {
            return Err(Error::Invalid(format!("unit {name}: power rating must be positive")));
        }
        if self.admissible.is_empty() {
            return Err(Error::Invalid(format!("unit {name}: empty admissible bus set")));
        }
        if let Some(b) = self.admissible.iter().find(|&&b| b >= n) {
            return Err(Error::Invalid(format!("unit {name}: admissible bus index {b} out of range")));
        }
        if !self.admissible.contains(&self.initial_bus) {
            return Err(Error::Invalid(format!("unit {name}: initial bus not admissible")));
        }
        Ok(())
    }
}

/// Travel times `D` (hours), period length `Δ` and cost `κ` per hour of travel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportModel<S> {
    pub travel: Matrix<S>,
    pub period: S,
    pub kappa: S,
    /// Pairs with `D_ij > Δ`, excluded from moves.
    #[serde(default)]
    pub blocked: Vec<(usize, usize)>,
}

impl<S: Scalar> TransportModel<S> {
    /// Requires `D_ij ≤ Δ` everywhere.
    pub fn new(travel: Matrix<S>, period: S, kappa: S) -> Result<Self> {
        let t = Self {
            travel,
            period,
            kappa,
            blocked: vec![],
        };
        t.validate()?;
        Ok(t)
    }

    /// Like [`TransportModel::new`] but pairs with `D_ij > Δ` become unreachable.
    pub fn with_unreachable(travel: Matrix<S>, period: S, kappa: S) -> Result<Self> {
        let n = travel.rows();
        let mut blocked = vec![];
        for i in 0..n {
            for j in 0..travel.cols() {
                if travel[(i, j)] > period {
                    blocked.push((i, j));
                }
            }
        }
        let t = Self {
            travel,
            period,
            kappa,
            blocked,
        };
        t.validate()?;
        Ok(t)
    }

    /// Stationary-friendly model: zero travel times.
    pub fn instant(n: usize, period: S, kappa: S) -> Self {
        Self {
            travel: Matrix::zeros(n, n),
            period,
            kappa,
            blocked: vec![],
        }
    }

    pub fn num_buses(&self) -> usize {
        self.travel.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.travel.rows();
        if self.travel.cols() != n {
            return Err(Error::Dimension("travel-time matrix must be square".into()));
        }
        if !(self.period > S::zero()) || !self.period.is_finite() {
            return Err(Error::Invalid("period length must be positive".into()));
        }
        if !(self.kappa >= S::zero()) || !self.kappa.is_finite() {
            return Err(Error::Invalid("kappa must be finite and >= 0".into()));
        }
        for i in 0..n {
            if self.travel[(i, i)] != S::zero() {
                return Err(Error::Invalid(format!("travel time D[{i}][{i}] must be zero")));
            }
            for j in 0..n {
                let d = self.travel[(i, j)];
                if !(d >= S::zero()) || !d.is_finite() {
                    return Err(Error::Invalid(format!("travel time D[{i}][{j}] must be finite and >= 0")));
                }
                if d > self.period && !self.blocked.contains(&(i, j)) {
                    return Err(Error::Invalid(format!(
                        "travel time D[{i}][{j}] = {d} exceeds the period length"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn can_move(&self, i: usize, j: usize) -> bool {
        self.travel[(i, j)] <= self.period && !self.blocked.contains(&(i, j))
    }

    /// `Δ − D_ij`
    pub fn operating_time(&self, i: usize, j: usize) -> S {
        (self.period - self.travel[(i, j)]).max(S::zero())
    }

    pub fn move_cost(&self, i: usize, j: usize) -> S {
        self.kappa * self.travel[(i, j)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fleet<S> {
    pub units: Vec<MobileStorageUnit<S>>,
    pub transport: TransportModel<S>,
}

impl<S: Scalar> Fleet<S> {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.transport.num_buses() != n {
            return Err(Error::Dimension(format!(
                "travel-time matrix is {}x{0}, network has {n} buses",
                self.transport.num_buses()
            )));
        }
        self.transport.validate()?;
        for u in &self.units {
            u.validate(n)?;
        }
        Ok(())
    }
}

/// Bus index per period, `i_k(t)` for `t = 0..T`.
pub type Trajectory = Vec<usize>;

pub fn validate_trajectory<S: Scalar>(
    unit: &MobileStorageUnit<S>,
    trajectory: &[usize],
    transport: &TransportModel<S>,
    periods: usize,
) -> Result<()> {
    if trajectory.len() != periods {
        return Err(Error::Dimension(format!(
            "trajectory of unit {} has {} periods, expected {periods}",
            unit.name,
            trajectory.len()
        )));
    }
    if trajectory.first() != Some(&unit.initial_bus) {
        return Err(Error::Invalid(format!("trajectory of unit {} must start at its initial bus", unit.name)));
    }
    for (t, &b) in trajectory.iter().enumerate() {
        if !unit.admissible.contains(&b) {
            return Err(Error::Invalid(format!(
                "unit {} visits non-admissible bus index {b} in period {t}",
                unit.name
            )));
        }
    }
    for w in trajectory.windows(2) {
        if !transport.can_move(w[0], w[1]) {
            return Err(Error::Invalid(format!(
                "unit {} cannot move from bus index {} to {} within one period",
                unit.name, w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// `E(t)`: column `k` is the indicator of unit `k`'s bus in period `t`.
pub fn snapshot_matrices<S: Scalar>(trajectories: &[Trajectory], n: usize) -> Result<Vec<Matrix<S>>> {
    let k = trajectories.len();
    let periods = trajectories.first().map_or(0, Vec::len);
    if trajectories.iter().any(|t| t.len() != periods) {
        return Err(Error::Dimension("trajectories have different lengths".into()));
    }
    let mut out = Vec::with_capacity(periods);
    for t in 0..periods {
        let mut e = Matrix::zeros(n, k);
        for (col, traj) in trajectories.iter().enumerate() {
            let b = traj[t];
            if b >= n {
                return Err(Error::Invalid(format!("bus index {b} out of range (n = {n})")));
            }
            e[(b, col)] = S::one();
        }
        out.push(e);
    }
    Ok(out)
}

/// Inverse of [`snapshot_matrices`].
pub fn trajectories_from_snapshots<S: Scalar>(snapshots: &[Matrix<S>]) -> Result<Vec<Trajectory>> {
    let k = snapshots.first().map_or(0, Matrix::cols);
    let mut out = vec![Vec::with_capacity(snapshots.len()); k];
    for (t, e) in snapshots.iter().enumerate() {
        for (col, traj) in out.iter_mut().enumerate() {
            let buses: Vec<usize> = (0..e.rows()).filter(|&i| e[(i, col)] == S::one()).collect();
            let nonzero = (0..e.rows()).filter(|&i| e[(i, col)] != S::zero()).count();
            if buses.len() != 1 || nonzero != 1 {
                return Err(Error::Invalid(format!("E({t}) column {col} is not an elementary vector")));
            }
            traj.push(buses[0]);
        }
    }
    Ok(out)
}

/// `(Δ^M(t), Δ^S(t))` per period with `i(T+1) := i(T)`.
pub fn travel_split<S: Scalar>(trajectory: &[usize], transport: &TransportModel<S>) -> (Vec<S>, Vec<S>) {
    let periods = trajectory.len();
    let mut moving = Vec::with_capacity(periods);
    let mut operating = Vec::with_capacity(periods);
    for t in 0..periods {
        let i = trajectory[t];
        let j = trajectory.get(t + 1).copied().unwrap_or(i);
        let dm = transport.travel[(i, j)];
        moving.push(dm);
        operating.push(transport.period - dm);
    }
    (moving, operating)
}

/// `J^R_k = κ Σ_t D_{i(t), i(t+1)}` per unit, and their total.
pub fn relocation_cost<S: Scalar>(trajectories: &[Trajectory], transport: &TransportModel<S>) -> (S, Vec<S>) {
    let per_unit: Vec<S> = trajectories
        .iter()
        .map(|traj| {
            traj.windows(2)
                .map(|w| transport.move_cost(w[0], w[1]))
                .fold(S::zero(), |a, b| a + b)
        })
        .collect();
    let total = per_unit.iter().copied().fold(S::zero(), |a, b| a + b);
    (total, per_unit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transport() -> TransportModel<f64> {
        TransportModel::new(
            Matrix::from_rows(&[vec![0.0, 0.4, 0.5], vec![0.4, 0.0, 1.0], vec![0.5, 1.0, 0.0]]),
            1.0,
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn snapshots_round_trip() {
        let trajs = vec![vec![0, 0], vec![2, 1]];
        let e = snapshot_matrices::<f64>(&trajs, 3).unwrap();
        assert_eq!(e[0][(0, 0)], 1.0);
        assert_eq!(e[0][(2, 1)], 1.0);
        assert_eq!(e[1][(1, 1)], 1.0);
        assert_eq!(trajectories_from_snapshots(&e).unwrap(), trajs);
        assert!(snapshot_matrices::<f64>(&[vec![3]], 3).is_err());
    }

    #[test]
    fn split_and_cost() {
        let tr = transport();
        let (dm, ds) = travel_split(&[0, 1, 1], &tr);
        assert_eq!(dm, vec![0.4, 0.0, 0.0]);
        assert!((ds[0] - 0.6).abs() < 1e-15 && ds[2] == 1.0);
        let (_, ds) = travel_split(&[1, 2], &tr);
        assert_eq!(ds[0], 0.0);
        let (total, per) = relocation_cost(&[vec![0, 2], vec![1, 1]], &tr);
        assert_eq!(total, 1.0);
        assert_eq!(per, vec![1.0, 0.0]);
    }

    #[test]
    fn travel_longer_than_period_rejected() {
        let d = Matrix::from_rows(&[vec![0.0, 1.5], vec![1.5, 0.0]]);
        assert!(TransportModel::new(d.clone(), 1.0, 0.0).is_err());
        let t = TransportModel::with_unreachable(d, 1.0, 0.0).unwrap();
        assert!(!t.can_move(0, 1) && t.can_move(1, 1));
    }
}
