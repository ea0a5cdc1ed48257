use mobistore::linalg::Matrix;
use mobistore::storage::*;
use proptest::prelude::*;

fn travel3() -> TransportModel<f64> {
    TransportModel::new(
        Matrix::from_rows(&[vec![0.0, 0.4, 0.5], vec![0.4, 0.0, 1.0], vec![0.5, 1.0, 0.0]]),
        1.0,
        2.0,
    )
    .unwrap()
}

#[test]
fn snapshots_single_unit() {
    let e = snapshot_matrices::<f64>(&[vec![1, 1, 1]], 3).unwrap();
    for m in &e {
        assert_eq!(m.to_rows(), vec![vec![0.0], vec![1.0], vec![0.0]]);
    }
}

#[test]
fn snapshots_two_units() {
    let e = snapshot_matrices::<f64>(&[vec![0, 0], vec![2, 1]], 3).unwrap();
    assert_eq!(e[0].to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(e[1].to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
}

#[test]
fn snapshots_reject_out_of_range() {
    assert!(snapshot_matrices::<f64>(&[vec![0, 3]], 3).is_err());
    assert!(snapshot_matrices::<f64>(&[vec![0, 1], vec![0]], 3).is_err());
}

proptest! {
    #[test]
    fn snapshots_round_trip(trajs in (1usize..4, 1usize..6).prop_flat_map(|(k, t)| {
        prop::collection::vec(prop::collection::vec(0usize..5, t), k)
    })) {
        let e = snapshot_matrices::<f64>(&trajs, 5).unwrap();
        prop_assert_eq!(trajectories_from_snapshots(&e).unwrap(), trajs);
    }

    #[test]
    fn travel_split_sums_to_period(traj in prop::collection::vec(0usize..3, 1..8)) {
        let (m, s) = travel_split(&traj, &travel3());
        for (a, b) in m.iter().zip(&s) {
            prop_assert_eq!(a + b, 1.0);
            prop_assert!(*b >= 0.0 && *b <= 1.0);
        }
        prop_assert_eq!(*m.last().unwrap(), 0.0);
    }

    #[test]
    fn relocation_cost_additive_and_symmetric(a in prop::collection::vec(0usize..3, 4), b in prop::collection::vec(0usize..3, 4)) {
        let t = travel3();
        let (ab, per) = relocation_cost(&[a.clone(), b.clone()], &t);
        let (ba, _) = relocation_cost(&[b.clone(), a.clone()], &t);
        let (sa, _) = relocation_cost(&[a], &t);
        let (sb, _) = relocation_cost(&[b], &t);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((ab - sa - sb).abs() < 1e-12);
        prop_assert_eq!(per, vec![sa, sb]);
    }
}

#[test]
fn travel_split_examples() {
    let t = travel3();
    let (m, s) = travel_split(&[2, 2, 2], &t);
    assert_eq!(m, vec![0.0; 3]);
    assert_eq!(s, vec![1.0; 3]);
    let (m, s) = travel_split(&[0, 1], &t);
    assert_eq!(m, vec![0.4, 0.0]);
    assert!((s[0] - 0.6).abs() < 1e-15);
    let (_, s) = travel_split(&[1, 2], &t);
    assert_eq!(s[0], 0.0);
}

#[test]
fn relocation_cost_examples() {
    let t = travel3();
    assert_eq!(relocation_cost(&[vec![1, 1, 1], vec![2, 2, 2]], &t).0, 0.0);
    assert!((relocation_cost(&[vec![0, 2]], &t).0 - 1.0).abs() < 1e-12);

    let miles: f64 = 10.0;
    let speed = 50.0;
    let kappa = 0.04 * speed;
    let d = miles / speed;
    let car = TransportModel::new(Matrix::from_rows(&[vec![0.0, d], vec![d, 0.0]]), 1.0, kappa).unwrap();
    assert!((relocation_cost(&[vec![0, 1]], &car).0 - 0.40).abs() < 1e-12);
}

#[test]
fn transport_invariants() {
    let bad = |rows: Vec<Vec<f64>>| TransportModel::new(Matrix::from_rows(&rows), 1.0, 1.0).is_err();
    assert!(bad(vec![vec![0.0, -0.1], vec![0.1, 0.0]]));
    assert!(bad(vec![vec![0.2, 0.1], vec![0.1, 0.0]]));
    assert!(bad(vec![vec![0.0, 1.5], vec![1.5, 0.0]]));
    assert!(TransportModel::new(Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]), 1.0, 1.0).is_ok());
    assert!(TransportModel::new(Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]), 1.0, -1.0).is_err());
}

#[test]
fn unit_invariants() {
    let unit = MobileStorageUnit {
        name: "u".into(),
        capacity: 1.0,
        rating: PowerRating {
            slope: 0.5,
            intercept: 0.0,
        },
        admissible: vec![0, 2],
        initial_bus: 0,
        initial_soc: 0.4,
    };
    assert!(unit.validate(3).is_ok());
    assert_eq!(unit.power(), 0.5);
    assert!(!unit.is_stationary());
    let mut over = unit.clone();
    over.initial_soc = 1.5;
    assert!(over.validate(3).is_err());
    let mut stranded = unit.clone();
    stranded.initial_bus = 1;
    assert!(stranded.validate(3).is_err());
    let mut weak = unit.clone();
    weak.rating.slope = 0.0;
    assert!(weak.validate(3).is_err());
    assert!(unit.validate(2).is_err());
}

#[test]
fn trajectory_checks() {
    let unit = MobileStorageUnit {
        name: "u".into(),
        capacity: 1.0,
        rating: PowerRating {
            slope: 0.0,
            intercept: 1.0,
        },
        admissible: vec![0, 1],
        initial_bus: 0,
        initial_soc: 0.0,
    };
    let t = travel3();
    assert!(validate_trajectory(&unit, &[0, 1, 1], &t, 3).is_ok());
    assert!(validate_trajectory(&unit, &[1, 1, 1], &t, 3).is_err());
    assert!(validate_trajectory(&unit, &[0, 2, 1], &t, 3).is_err());
    assert!(validate_trajectory(&unit, &[0, 1], &t, 3).is_err());
}

#[test]
fn fleet_loader_rejects_unknown_keys() {
    let t = travel3();
    let json = serde_json::to_value(&t).unwrap();
    let mut obj = json.as_object().unwrap().clone();
    obj.insert("speed".into(), 3.into());
    assert!(serde_json::from_value::<TransportModel<f64>>(obj.into()).is_err());
}
