//! Reference instances and seeded random instance generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::network::{Bus, Line, PowerNetwork};
use crate::scalar::Scalar;
use crate::storage::{Fleet, MobileStorageUnit, PowerRating, TransportModel, Trajectory};

/// Network, fleet and fixed trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance<S> {
    pub network: PowerNetwork<S>,
    pub fleet: Fleet<S>,
    pub trajectories: Vec<Trajectory>,
}

/// Price field plus a single unit, for relocation problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceInstance<S> {
    /// `prices[t][i]`
    pub prices: Vec<Vec<S>>,
    pub unit: MobileStorageUnit<S>,
    pub transport: TransportModel<S>,
}

fn quad_bus<S: Scalar>(id: usize) -> Bus<S> {
    Bus {
        id,
        cost_a: S::one(),
        cost_b: S::zero(),
        gen_max: None,
        gen_min: None,
    }
}

fn line<S: Scalar>(from: usize, to: usize, limit: f64) -> Line<S> {
    Line {
        from,
        to,
        susceptance: S::one(),
        limit: S::of(limit),
    }
}

fn unit<S: Scalar>(name: &str, capacity: f64, admissible: Vec<usize>, initial_bus: usize) -> MobileStorageUnit<S> {
    MobileStorageUnit {
        name: name.into(),
        capacity: S::of(capacity),
        // large enough never to bind in the reference instances
        rating: PowerRating {
            slope: S::zero(),
            intercept: S::of(100.0),
        },
        admissible,
        initial_bus,
        initial_soc: S::zero(),
    }
}

/// Two buses with one congested line; a small mobile unit moves from bus 1
/// to bus 2, giving `λ₂(2) > λ₂(1) > λ₁(1)`.
pub fn example1<S: Scalar>() -> Instance<S> {
    let network = PowerNetwork {
        buses: vec![quad_bus(1), quad_bus(2)],
        lines: vec![line(0, 1, 1.0)],
        loads: vec![vec![S::zero(), S::of(4.0)], vec![S::zero(), S::of(8.0)]],
        slack: 0,
    };
    Instance {
        network,
        fleet: Fleet {
            units: vec![unit("mobile", 0.1, vec![0, 1], 0)],
            transport: TransportModel::instant(2, S::one(), S::zero()),
        },
        trajectories: vec![vec![0, 1]],
    }
}

fn triangle<S: Scalar>(loads: Vec<Vec<f64>>) -> Instance<S> {
    let network = PowerNetwork {
        buses: vec![quad_bus(1), quad_bus(2), quad_bus(3)],
        lines: vec![line(0, 1, 0.5), line(0, 2, 0.5), line(1, 2, 0.5)],
        loads: loads
            .into_iter()
            .map(|r| r.into_iter().map(S::of).collect())
            .collect(),
        slack: 0,
    };
    Instance {
        network,
        fleet: Fleet {
            units: vec![
                unit("stationary", 0.5, vec![0], 0),
                unit("mobile", 0.5, vec![0, 1, 2], 2),
            ],
            transport: TransportModel::instant(3, S::one(), S::zero()),
        },
        trajectories: vec![vec![0, 0], vec![2, 0]],
    }
}

/// Meshed triangle where the mobile unit is worth more than wire plus storage.
pub fn example2<S: Scalar>() -> Instance<S> {
    triangle(vec![vec![5.0, 0.0, 0.0], vec![10.0, 0.0, 0.0]])
}

/// Same triangle with load split over buses 1 and 2 in the first period.
pub fn example3<S: Scalar>() -> Instance<S> {
    triangle(vec![vec![5.0, 5.0, 0.0], vec![10.0, 0.0, 0.0]])
}

fn random_lines<S: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<Line<S>> {
    let mut lines = Vec::new();
    for j in 1..n {
        let i = rng.gen_range(0..j);
        lines.push(Line {
            from: i,
            to: j,
            susceptance: S::of(rng.gen_range(0.5..2.0)),
            limit: S::of(rng.gen_range(0.5..3.0)),
        });
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let exists = lines.iter().any(|l| (l.from, l.to) == (i, j));
            if !exists && rng.gen_bool(0.3) {
                lines.push(Line {
                    from: i,
                    to: j,
                    susceptance: S::of(rng.gen_range(0.5..2.0)),
                    limit: S::of(rng.gen_range(0.5..3.0)),
                });
            }
        }
    }
    lines
}

fn random_transport<S: Scalar>(rng: &mut ChaCha8Rng, n: usize, kappa: f64) -> TransportModel<S> {
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = S::of((rng.gen_range(0.0..0.6f64) * 20.0).round() / 20.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    TransportModel {
        travel: d,
        period: S::one(),
        kappa: S::of(kappa),
        blocked: vec![],
    }
}

/// Random connected network with `n` buses and `periods` periods and one
/// small mobile unit on a random trajectory.
pub fn random_dispatch<S: Scalar>(seed: u64, n: usize, periods: usize) -> Instance<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses = (0..n)
        .map(|i| Bus {
            id: i + 1,
            cost_a: S::of(rng.gen_range(0.5..2.0)),
            cost_b: S::of(rng.gen_range(0.0..10.0)),
            gen_max: None,
            gen_min: None,
        })
        .collect();
    let lines = random_lines(&mut rng, n);
    let loads = (0..periods)
        .map(|_| (0..n).map(|_| S::of(rng.gen_range(0.0..6.0))).collect())
        .collect();
    let network = PowerNetwork {
        buses,
        lines,
        loads,
        slack: 0,
    };
    let kappa = rng.gen_range(0.0..2.0);
    let transport = random_transport(&mut rng, n, kappa);
    let start = rng.gen_range(0..n);
    let mut traj = vec![start];
    for _ in 1..periods {
        traj.push(rng.gen_range(0..n));
    }
    let capacity = rng.gen_range(0.2..1.0);
    let unit = MobileStorageUnit {
        name: "unit".into(),
        capacity: S::of(capacity),
        rating: PowerRating {
            slope: S::of(rng.gen_range(0.2..0.8)),
            intercept: S::of(rng.gen_range(0.0..0.2)),
        },
        admissible: (0..n).collect(),
        initial_bus: start,
        initial_soc: S::zero(),
    };
    Instance {
        network,
        fleet: Fleet {
            units: vec![unit],
            transport,
        },
        trajectories: vec![traj],
    }
}

/// Random price field in `[−50, 50]` (or `[0, 50]` when `nonnegative`) with
/// one unit whose power rating is proportional to capacity.
pub fn random_prices<S: Scalar>(seed: u64, n: usize, periods: usize, nonnegative: bool) -> PriceInstance<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = if nonnegative { 0.0 } else { -50.0 };
    let prices = (0..periods)
        .map(|_| (0..n).map(|_| S::of((rng.gen_range(lo..50.0f64) * 100.0).round() / 100.0)).collect())
        .collect();
    let kappa = rng.gen_range(0.0..5.0);
    let transport = random_transport(&mut rng, n, kappa);
    let start = rng.gen_range(0..n);
    let unit = MobileStorageUnit {
        name: "unit".into(),
        capacity: S::one(),
        rating: PowerRating {
            slope: S::of(rng.gen_range(0.3..1.2)),
            intercept: S::zero(),
        },
        admissible: (0..n).collect(),
        initial_bus: start,
        initial_soc: S::zero(),
    };
    PriceInstance {
        prices,
        unit,
        transport,
    }
}
