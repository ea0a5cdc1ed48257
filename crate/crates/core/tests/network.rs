use mobistore::network::{build_shift_factors, Bus, Line, PowerNetwork, Violation};
use mobistore::Error;
use proptest::prelude::*;

fn bus(id: usize) -> Bus<f64> {
    Bus {
        id,
        cost_a: 1.0,
        cost_b: 0.0,
        gen_max: None,
        gen_min: None,
    }
}

fn net(n: usize, lines: Vec<(usize, usize, f64)>) -> PowerNetwork<f64> {
    PowerNetwork {
        buses: (1..=n).map(bus).collect(),
        lines: lines
            .into_iter()
            .map(|(from, to, susceptance)| Line {
                from,
                to,
                susceptance,
                limit: 1.0,
            })
            .collect(),
        loads: vec![vec![0.0; n]],
        slack: 0,
    }
}

/// Flow `from → to` on a tree edge is the net injection on the `from` side.
fn tree_flows(n: usize, lines: &[(usize, usize, f64)], p: &[f64]) -> Vec<f64> {
    lines
        .iter()
        .enumerate()
        .map(|(skip, &(from, _, _))| {
            let mut seen = vec![false; n];
            let mut stack = vec![from];
            seen[from] = true;
            let mut total = 0.0;
            while let Some(v) = stack.pop() {
                total += p[v];
                for (l, &(a, b, _)) in lines.iter().enumerate() {
                    if l == skip {
                        continue;
                    }
                    let w = if a == v { b } else if b == v { a } else { continue };
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            total
        })
        .collect()
}

fn tree() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>, Vec<f64>, usize)> {
    (2usize..=6).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|j| (0..j, 0.2f64..5.0, any::<bool>())).collect();
        (Just(n), parents, prop::collection::vec(-3.0f64..3.0, n), 0..n)
    })
    .prop_map(|(n, parents, mut p, slack)| {
        let lines = parents
            .into_iter()
            .enumerate()
            .map(|(k, (i, b, flip))| if flip { (k + 1, i, b) } else { (i, k + 1, b) })
            .collect();
        let mean = p.iter().sum::<f64>() / n as f64;
        p.iter_mut().for_each(|v| *v -= mean);
        (n, lines, p, slack)
    })
}

proptest! {
    #[test]
    fn tree_flows_follow_conservation((n, lines, p, slack) in tree()) {
        let mut network = net(n, lines.clone());
        network.slack = slack;
        let sf = build_shift_factors(&network).unwrap();
        let flows = sf.flows(&p);
        let expected = tree_flows(n, &lines, &p);
        for (l, e) in expected.iter().enumerate() {
            prop_assert!((flows[2 * l] - e).abs() <= 1e-9, "line {}: {} vs {}", l, flows[2 * l], e);
            prop_assert!((flows[2 * l + 1] + e).abs() <= 1e-9);
        }
    }

    #[test]
    fn shift_factor_invariants(n in 2usize..6, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut lines: Vec<(usize, usize, f64)> = (1..n).map(|j| (rng.gen_range(0..j), j, rng.gen_range(0.2..5.0))).collect();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.4) {
                    lines.push((i, j, rng.gen_range(0.2..5.0)));
                }
            }
        }
        let mut network = net(n, lines.clone());
        network.slack = n - 1;
        let sf = build_shift_factors(&network).unwrap();
        for e in 0..2 * lines.len() {
            prop_assert!(sf.h[(e, n - 1)].abs() <= 1e-12);
        }
        for l in 0..lines.len() {
            for i in 0..n {
                prop_assert!((sf.h[(2 * l, i)] + sf.h[(2 * l + 1, i)]).abs() <= 1e-10);
            }
        }
        prop_assert_eq!(sf.limits.len(), 2 * lines.len());
    }
}

#[test]
fn two_bus_forward_row() {
    let sf = build_shift_factors(&net(2, vec![(0, 1, 1.0)])).unwrap();
    assert!(sf.h[(0, 0)].abs() < 1e-12);
    assert!((sf.h[(0, 1)] + 1.0).abs() < 1e-12);
    assert!((sf.h[(1, 1)] - 1.0).abs() < 1e-12);
}

#[test]
fn triangle_current_divider() {
    let sf = build_shift_factors(&net(3, vec![(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])).unwrap();
    let f = sf.flows(&[1.0, -1.0, 0.0]);
    assert!((f[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((f[2] - 1.0 / 3.0).abs() < 1e-12);
    assert!((f[4] + 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn slack_choice_only_shifts_columns() {
    let lines = vec![(0, 1, 1.0), (0, 2, 2.0), (1, 2, 0.5), (2, 3, 1.5)];
    let a = build_shift_factors(&net(4, lines.clone())).unwrap();
    let mut other = net(4, lines);
    other.slack = 3;
    let b = build_shift_factors(&other).unwrap();
    let p = [0.7, -1.2, 0.1, 0.4];
    for (x, y) in a.flows(&p).iter().zip(b.flows(&p)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn validate_codes() {
    let good = net(3, vec![(0, 1, 1.0), (1, 2, 1.0)]);
    assert!(good.validate().is_empty());

    let mut flat = good.clone();
    flat.buses[1].cost_a = 0.0;
    assert_eq!(flat.validate(), vec![Violation::NonStrictlyConvexCost { bus: 1 }]);

    let mut no_gen = good.clone();
    no_gen.buses[1].cost_a = 0.0;
    no_gen.buses[1].gen_max = Some(0.0);
    assert!(no_gen.validate().is_empty());

    let mut neg = good.clone();
    neg.lines[0].susceptance = -1.0;
    assert_eq!(neg.validate(), vec![Violation::BadSusceptance { line: 0 }]);

    let mut lim = good.clone();
    lim.lines[1].limit = 0.0;
    assert_eq!(lim.validate(), vec![Violation::BadLimit { line: 1 }]);

    let mut shape = good.clone();
    shape.loads.push(vec![1.0]);
    assert_eq!(shape.validate(), vec![Violation::LoadShape { period: 1 }]);

    let split = net(4, vec![(0, 1, 1.0), (2, 3, 1.0)]);
    assert!(split
        .validate()
        .iter()
        .any(|v| matches!(v, Violation::Disconnected { components } if components.len() == 2)));
}

#[test]
fn disconnected_network_is_an_error() {
    let split = net(4, vec![(0, 1, 1.0), (2, 3, 1.0)]);
    match build_shift_factors(&split) {
        Err(Error::Disconnected { components }) => assert_eq!(components, vec![vec![1, 2], vec![3, 4]]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn loader_rejects_unknown_keys() {
    let text = r#"{"buses":[{"id":1,"cost_a":1,"cost_b":0,"gen_max":null,"gen_min":null,"colour":"red"}],
        "lines":[],"loads":[[0]],"slack":0}"#;
    assert!(serde_json::from_str::<PowerNetwork<f64>>(text).is_err());
    let ok = text.replace(r#","colour":"red""#, "");
    let parsed: PowerNetwork<f64> = serde_json::from_str(&ok).unwrap();
    assert!(parsed.validate().is_empty());
}

#[test]
fn negative_loads_are_allowed() {
    let mut n = net(2, vec![(0, 1, 1.0)]);
    n.loads = vec![vec![-2.0, 3.0]];
    assert!(n.validate().is_empty());
}
