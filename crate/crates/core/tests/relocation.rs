use mobistore::fixtures::{random_prices, PriceInstance};
use mobistore::linalg::Matrix;
use mobistore::qp::Tolerances;
use mobistore::relocation::*;
use mobistore::storage::{MobileStorageUnit, PowerRating, TransportModel};
use mobistore::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances<f64> {
    Tolerances::default()
}

fn oracle(inst: &PriceInstance<f64>) -> RelocationResult<f64> {
    brute_force_relocation(&inst.unit, &inst.prices, &inst.transport, &ArbitrageLp::new(tol())).unwrap()
}

fn check_recompute(r: &RelocationResult<f64>, inst: &PriceInstance<f64>) {
    let v = r.recompute_objective(&inst.prices, &inst.transport).unwrap();
    assert!((v - r.objective).abs() <= 1e-6, "{:?}: {v} vs {}", r.algorithm, r.objective);
}

fn unit(capacity: f64, slope: f64, intercept: f64, n: usize, start: usize) -> MobileStorageUnit<f64> {
    MobileStorageUnit {
        name: "u".into(),
        capacity,
        rating: PowerRating { slope, intercept },
        admissible: (0..n).collect(),
        initial_bus: start,
        initial_soc: 0.0,
    }
}

fn uniform_travel(n: usize, d: f64, kappa: f64) -> TransportModel<f64> {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[(i, j)] = d;
            }
        }
    }
    TransportModel::new(m, 1.0, kappa).unwrap()
}

#[derive(Debug, Clone)]
struct LayeredGraph {
    sizes: Vec<usize>,
    edges: Vec<Vec<(usize, usize, f64)>>,
    source: Vec<(usize, f64)>,
    sink: Vec<(usize, f64)>,
}

fn layered_graph() -> impl Strategy<Value = LayeredGraph> {
    (prop::collection::vec(1usize..4, 1..6), any::<u64>()).prop_map(|(sizes, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = |rng: &mut ChaCha8Rng| (rng.gen_range(-5.0..5.0f64) * 4.0).round() / 4.0;
        let mut edges = Vec::new();
        for l in 0..sizes.len() - 1 {
            let mut layer = Vec::new();
            for a in 0..sizes[l] {
                for b in 0..sizes[l + 1] {
                    if rng.gen_bool(0.7) {
                        layer.push((a, b, w(&mut rng)));
                    }
                }
            }
            edges.push(layer);
        }
        let pick = |count: usize, rng: &mut ChaCha8Rng| {
            let mut out = Vec::new();
            for a in 0..count {
                if rng.gen_bool(0.8) {
                    out.push((a, w(rng)));
                }
            }
            out
        };
        let source = pick(sizes[0], &mut rng);
        let sink = pick(*sizes.last().unwrap(), &mut rng);
        LayeredGraph {
            sizes,
            edges,
            source,
            sink,
        }
    })
}

fn build(g: &LayeredGraph) -> TimeExpandedGraph<f64> {
    let layers = g
        .sizes
        .iter()
        .map(|&s| (0..s).map(NodeKey::bus).collect())
        .collect();
    let mut out = TimeExpandedGraph::new((0..g.sizes.len()).collect(), layers).unwrap();
    for (l, layer) in g.edges.iter().enumerate() {
        for &(a, b, w) in layer {
            out.add_edge(l, NodeKey::bus(a), NodeKey::bus(b), w).unwrap();
        }
    }
    for &(a, w) in &g.source {
        out.set_source(NodeKey::bus(a), w).unwrap();
    }
    for &(a, w) in &g.sink {
        out.set_sink(NodeKey::bus(a), w).unwrap();
    }
    out
}

proptest! {
    #[test]
    fn layered_relaxation_agrees_with_bellman_ford(g in layered_graph()) {
        let graph = build(&g);
        let dag = graph.shortest_path();
        let bf = graph.bellman_ford();
        match (dag, bf) {
            (None, None) => {}
            (Some(p), Some(c)) => {
                prop_assert!((p.cost - c).abs() <= 1e-9);
                prop_assert_eq!(p.nodes.len(), g.sizes.len());
            }
            (a, b) => prop_assert!(false, "dag {:?} vs bellman-ford {:?}", a, b),
        }
    }

    #[test]
    fn flooring_initial_soc_does_not_change_the_grid_optimum(seed in 0u64..200, s0 in 0.0f64..1.0, z in 2usize..9) {
        let mut inst = random_prices::<f64>(seed, 3, 4, false);
        let h = 1.0 / z as f64;
        inst.unit.initial_soc = s0;
        let a = relocate_approx(&inst.unit, &inst.prices, &inst.transport, h).unwrap();
        inst.unit.initial_soc = h_floor(s0, h) as f64 * h;
        let b = relocate_approx(&inst.unit, &inst.prices, &inst.transport, h).unwrap();
        prop_assert_eq!(&a.trajectory, &b.trajectory);
        prop_assert_eq!(&a.schedule, &b.schedule);
        prop_assert!((a.objective - b.objective).abs() <= 1e-12);
    }
}

#[test]
fn rapid_matches_path_enumeration() {
    for seed in 0..50 {
        for nonneg in [true, false] {
            let inst = random_prices::<f64>(seed, 3, 4, nonneg);
            let r = relocate_rapid(&inst.unit, &inst.prices, &inst.transport).unwrap();
            let b = brute_force_relocation(&inst.unit, &inst.prices, &inst.transport, &RapidIncrements).unwrap();
            assert!((r.objective - b.objective).abs() <= 1e-8, "seed {seed}");
            assert_eq!(r.trajectory, b.trajectory, "seed {seed}");
            let lp = brute_force_relocation(&inst.unit, &inst.prices, &inst.transport, &ArbitrageLp::unlimited(tol()))
                .unwrap();
            assert!((r.objective - lp.objective).abs() <= 1e-6, "seed {seed}");
            check_recompute(&r, &inst);
        }
    }
}

#[test]
fn rapid_on_example_two_prices_moves_to_the_expensive_bus() {
    let prices = vec![vec![9.0, 1.0, 2.0], vec![16.0, 1.0, 1.0]];
    let transport = uniform_travel(3, 0.25, 0.4);
    let u = unit(0.5, 0.0, 100.0, 3, 2);
    let r = relocate_rapid(&u, &prices, &transport).unwrap();
    assert_eq!(r.trajectory, vec![2, 0]);
    assert!((r.objective - (0.5 * 14.0 - 0.4 * 0.25)).abs() < 1e-12);
    assert_eq!(r.schedule.unwrap(), vec![0.5, -0.5]);
}

#[test]
fn rapid_stays_put_when_travel_is_expensive() {
    for seed in 0..20 {
        let mut inst = random_prices::<f64>(seed, 3, 4, true);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    inst.transport.travel[(i, j)] = 0.5;
                }
            }
        }
        inst.transport.kappa = 1e4;
        let r = relocate_rapid(&inst.unit, &inst.prices, &inst.transport).unwrap();
        assert!(r.trajectory.iter().all(|&b| b == inst.unit.initial_bus));
        assert_eq!(r.travel_cost, 0.0);
    }
}

#[test]
fn rapid_rejects_empty_admissible_set() {
    let inst = random_prices::<f64>(1, 3, 4, true);
    let mut u = inst.unit.clone();
    u.admissible.clear();
    assert!(relocate_rapid(&u, &inst.prices, &inst.transport).is_err());
}

#[test]
fn sp_p_single_period_without_value_term_is_cheapest_detour() {
    let prices = vec![vec![3.0, 7.0, 1.0], vec![2.0, 9.0, 4.0], vec![5.0, 5.0, 6.0]];
    let mut d = Matrix::zeros(3, 3);
    let raw = [[0.0, 0.2, 0.9], [0.2, 0.0, 0.3], [0.9, 0.3, 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = raw[i][j];
        }
    }
    let transport = TransportModel::new(d, 1.0, 2.0).unwrap();
    let u = unit(1.0, 0.0, 0.5, 3, 0);
    for i in 0..3 {
        for j in 0..3 {
            let (cost, path) = solve_sp_p(i, j, 0, 2, &prices, &u, &transport).unwrap();
            let best = (0..3)
                .map(|m| 2.0 * (raw[i][m] + raw[m][j]))
                .fold(f64::INFINITY, f64::min);
            assert!((cost - best).abs() < 1e-12, "{i}->{j}");
            assert_eq!(path.len(), 1);
        }
    }
}

#[test]
fn sp_p_single_period_without_travel_maximizes_price_gap() {
    let prices = vec![vec![3.0, 7.0, 1.0], vec![2.0, 9.0, 4.0], vec![5.0, 5.0, 6.0]];
    let transport = TransportModel::instant(3, 1.0, 0.0);
    let u = unit(1.0, 0.5, 0.0, 3, 0);
    for j in 0..3 {
        let (cost, path) = solve_sp_p(0, j, 0, 2, &prices, &u, &transport).unwrap();
        let gaps: Vec<f64> = (0..3).map(|m| (prices[2][j] - prices[1][m]).abs()).collect();
        let best = gaps.iter().cloned().fold(f64::MIN, f64::max);
        assert!((cost + 0.5 * best).abs() < 1e-12);
        assert_eq!(gaps[path[0]], best);
    }
}

#[test]
fn sp_p_two_periods_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let prices: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.gen_range(-20.0..40.0)).collect())
            .collect();
        let mut d = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in i + 1..3 {
                let v = rng.gen_range(0.0..0.8);
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        let kappa = rng.gen_range(0.0..3.0);
        let transport = TransportModel::new(d.clone(), 1.0, kappa).unwrap();
        let slope = rng.gen_range(0.2..1.0);
        let u = unit(1.0, slope, 0.0, 3, 0);
        for i in 0..3 {
            for j in 0..3 {
                let (cost, path) = solve_sp_p(i, j, 0, 3, &prices, &u, &transport).unwrap();
                let mut best = f64::INFINITY;
                for a in 0..3 {
                    for b in 0..3 {
                        let term = |from: usize, to: usize, t: usize| {
                            kappa * d[(from, to)] - slope * (1.0 - d[(from, to)]) * (prices[3][j] - prices[t][from]).abs()
                        };
                        let c = kappa * d[(i, a)] + term(a, b, 1) + term(b, j, 2);
                        best = best.min(c);
                    }
                }
                assert!((cost - best).abs() < 1e-9, "{i}->{j}: {cost} vs {best}");
                assert_eq!(path.len(), 2);
            }
        }
    }
}

#[test]
fn sp_e_with_every_period_energy_bound_is_rapid() {
    for seed in 0..30 {
        let inst = random_prices::<f64>(seed, 3, 4, true);
        let pattern = mobistore::marginal_value::BindingPattern::from_energy((0..4).collect(), 4);
        let e = solve_sp_e(&pattern, &inst.prices, &inst.unit, &inst.transport).unwrap();
        let r = relocate_rapid(&inst.unit, &inst.prices, &inst.transport).unwrap();
        assert_eq!(e.trajectory, r.trajectory, "seed {seed}");
        assert!((e.objective - r.objective).abs() < 1e-9, "seed {seed}");
    }
}

#[test]
fn sp_e_with_only_the_last_period_energy_bound_is_one_segment() {
    let inst = random_prices::<f64>(3, 3, 4, true);
    let pattern = mobistore::marginal_value::BindingPattern::from_energy(vec![3], 4);
    let e = solve_sp_e(&pattern, &inst.prices, &inst.unit, &inst.transport).unwrap();
    assert_eq!(e.trajectory.len(), 4);
    assert_eq!(e.trajectory[0], inst.unit.initial_bus);
}

fn admissible_seeds(count: usize) -> Vec<(u64, PriceInstance<f64>, RelocationResult<f64>)> {
    let mut out = Vec::new();
    for seed in 0..2000 {
        let inst = random_prices::<f64>(seed, 3, 4, true);
        if let Ok(r) = relocate_exact(&inst.unit, &inst.prices, &inst.transport, &tol()) {
            out.push((seed, inst, r));
            if out.len() == count {
                break;
            }
        }
    }
    out
}

#[test]
fn exact_matches_joint_enumeration() {
    let found = admissible_seeds(25);
    assert_eq!(found.len(), 25);
    for (seed, inst, r) in found {
        let b = oracle(&inst);
        assert!((r.objective - b.objective).abs() <= 1e-6, "seed {seed}: {} vs {}", r.objective, b.objective);
        check_recompute(&r, &inst);
        let pattern = r.diagnostics.pattern.as_ref().unwrap();
        assert!(pattern.is_regular(4));
    }
}

#[test]
fn exact_agrees_with_rapid_when_power_never_binds() {
    let mut agreed = 0;
    for seed in 0..60 {
        let mut inst = random_prices::<f64>(seed, 3, 4, true);
        inst.unit.rating.slope = 100.0;
        if let Ok(e) = relocate_exact(&inst.unit, &inst.prices, &inst.transport, &tol()) {
            let r = relocate_rapid(&inst.unit, &inst.prices, &inst.transport).unwrap();
            assert!((e.objective - r.objective).abs() <= 1e-6, "seed {seed}");
            agreed += 1;
        }
    }
    assert!(agreed >= 10, "only {agreed} instances had an admissible pattern");
}

#[test]
fn exact_finds_power_bound_first_period() {
    let prices = vec![vec![9.0, 9.0, 2.0], vec![16.0, 4.0, 4.0]];
    let transport = uniform_travel(3, 0.5, 1.0);
    let u = unit(1.0, 0.6, 0.0, 3, 2);
    let r = relocate_exact(&u, &prices, &transport, &tol()).unwrap();
    assert_eq!(r.trajectory, vec![2, 0]);
    let p = r.diagnostics.pattern.clone().unwrap();
    assert_eq!(p.power, vec![0]);
    assert_eq!(p.energy, vec![1]);
    assert!((r.objective - (0.3 * 14.0 - 0.5)).abs() < 1e-6);
}

#[test]
fn exact_reports_missing_pattern_and_falls_back() {
    // a negative final price makes the last period power-bound
    let prices = vec![vec![5.0, 6.0], vec![-10.0, -12.0]];
    let transport = uniform_travel(2, 0.5, 0.1);
    let u = unit(1.0, 0.5, 0.0, 2, 0);
    match relocate_exact(&u, &prices, &transport, &tol()) {
        Err(Error::NoAdmissiblePattern { candidates, .. }) => assert_eq!(candidates, 2),
        other => panic!("expected no admissible pattern, got {other:?}"),
    }
    let r = relocate_exact_or_approx(&u, &prices, &transport, &tol(), 0.125).unwrap();
    assert_eq!(r.algorithm, Algorithm::Approx);
    assert!(!r.diagnostics.warnings.is_empty());
}

#[test]
fn exact_guards_long_horizons() {
    let inst = random_prices::<f64>(0, 2, 20, true);
    assert!(matches!(
        relocate_exact(&inst.unit, &inst.prices, &inst.transport, &tol()),
        Err(Error::Guard(_))
    ));
}

#[test]
fn approx_dominance_and_discretization_bound() {
    for seed in 0..25 {
        for (n, periods) in [(3, 4), (4, 5)] {
            let inst = random_prices::<f64>(seed, n, periods, false);
            let best = oracle(&inst).objective;
            let mut prev_gap = f64::INFINITY;
            let mut prev_value = f64::NEG_INFINITY;
            for z in [4usize, 8, 16, 32, 64] {
                let h = inst.unit.capacity / z as f64;
                let a = relocate_approx(&inst.unit, &inst.prices, &inst.transport, h).unwrap();
                check_recompute(&a, &inst);
                let bound = theorem4_bound(&inst.prices, inst.unit.initial_bus, h);
                assert_eq!(a.diagnostics.bound, Some(bound));
                let gap = best - a.objective;
                assert!(gap >= -1e-8, "seed {seed}: grid beats the optimum by {}", -gap);
                assert!(gap <= bound + 1e-9, "seed {seed} z {z}: gap {gap} exceeds {bound}");
                assert!(a.objective >= prev_value - 1e-8, "seed {seed}: refining the grid lost value");
                assert!(gap <= prev_gap + 1e-8);
                prev_gap = gap;
                prev_value = a.objective;
            }
        }
    }
}

#[test]
fn approx_with_one_level_is_bang_bang() {
    for seed in 0..10 {
        let mut inst = random_prices::<f64>(seed, 3, 4, true);
        inst.unit.rating.slope = 5.0;
        let a = relocate_approx(&inst.unit, &inst.prices, &inst.transport, inst.unit.capacity).unwrap();
        for v in a.schedule.unwrap() {
            assert!(v == 0.0 || v.abs() == inst.unit.capacity);
        }
        assert!(a.objective <= oracle(&inst).objective + 1e-8);
    }
}

#[test]
fn approx_rejects_bad_steps() {
    let inst = random_prices::<f64>(0, 3, 4, true);
    for h in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(relocate_approx(&inst.unit, &inst.prices, &inst.transport, h).is_err(), "h = {h}");
    }
}

#[test]
fn continuous_dp_matches_joint_enumeration() {
    for seed in 0..60 {
        for nonneg in [true, false] {
            let mut inst = random_prices::<f64>(seed, 3, 4, nonneg);
            inst.unit.initial_soc = (seed % 4) as f64 * 0.3;
            inst.unit.rating.intercept = (seed % 3) as f64 * 0.1;
            let c = continuous_dp_relocation(&inst.unit, &inst.prices, &inst.transport).unwrap();
            let b = oracle(&inst);
            assert!((c.objective - b.objective).abs() <= 1e-8, "seed {seed}");
            check_recompute(&c, &inst);
        }
    }
}

#[test]
fn brute_force_flat_prices_stays() {
    let prices = vec![vec![7.0, 7.0], vec![7.0, 7.0]];
    let transport = uniform_travel(2, 0.3, 1.0);
    let u = unit(1.0, 1.0, 0.0, 2, 1);
    let r = brute_force_relocation(&u, &prices, &transport, &ArbitrageLp::new(tol())).unwrap();
    assert_eq!(r.trajectory, vec![1, 1]);
    assert!(r.objective.abs() < 1e-6, "{r:?}");
}

#[test]
fn brute_force_guard() {
    let inst = random_prices::<f64>(0, 4, 11, true);
    assert!(matches!(
        brute_force_relocation(&inst.unit, &inst.prices, &inst.transport, &RapidIncrements),
        Err(Error::Guard(_))
    ));
}

#[test]
fn fleet_units_are_solved_independently() {
    let inst = random_prices::<f64>(11, 3, 4, true);
    let a = inst.unit.clone();
    let mut b = inst.unit.clone();
    b.name = "other".into();
    b.initial_bus = (a.initial_bus + 1) % 3;
    b.rating.slope = 0.1;
    for algo in [Algorithm::Rapid, Algorithm::Approx, Algorithm::Brute, Algorithm::ContinuousDp] {
        let alone = relocate_fleet(&[a.clone()], &inst.prices, &inst.transport, algo, Some(0.125), &tol()).unwrap();
        let both = relocate_fleet(&[a.clone(), b.clone()], &inst.prices, &inst.transport, algo, Some(0.125), &tol())
            .unwrap();
        b.capacity = 3.0;
        let changed = relocate_fleet(&[a.clone(), b.clone()], &inst.prices, &inst.transport, algo, Some(0.125), &tol())
            .unwrap();
        assert_eq!(alone[0], both[0]);
        assert_eq!(alone[0], changed[0]);
        assert_eq!(both.len(), 2);
    }
}

#[test]
fn results_are_deterministic() {
    let inst = random_prices::<f64>(5, 3, 4, false);
    let run = || {
        (
            relocate_approx(&inst.unit, &inst.prices, &inst.transport, 1.0 / 16.0).unwrap(),
            brute_force_relocation(&inst.unit, &inst.prices, &inst.transport, &ArbitrageLp::new(tol())).unwrap(),
        )
    };
    assert_eq!(run(), run());
}
