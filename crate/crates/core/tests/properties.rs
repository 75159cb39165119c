use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;

use chsh_kcbs::dataset::{bundled_dataset, dataset_to_json, parse_dataset};
use chsh_kcbs::inequalities::{
    alpha_chsh, beta_kcbs, correlators_from_behavior, direct_correlators, evaluate_model,
    Functional,
};
use chsh_kcbs::quantum::{quantum_behavior, QuantumModel};
use chsh_kcbs::scenario::{
    check_no_disturbance, check_no_signalling, marginalize_bob, Behavior, Scenario, ANALYTIC_TOL,
};

fn angle() -> impl Strategy<Value = f64> {
    0.0..PI
}

/// Arbitrary (not necessarily no-signalling) behavior on the standard scenario.
fn any_behavior() -> impl Strategy<Value = Behavior> {
    let contexts = Scenario::chsh_kcbs().joint_contexts().to_vec();
    let shapes: Vec<_> = contexts
        .iter()
        .map(|jc| prop::collection::vec(0.0f64..1.0, jc.cells()))
        .collect();
    shapes.prop_map(move |weights| {
        let tables: BTreeMap<_, _> = contexts
            .iter()
            .cloned()
            .zip(weights)
            .map(|(jc, w)| {
                let w: Vec<f64> = w.iter().map(|x| x + 1e-3).collect();
                let total: f64 = w.iter().sum();
                (jc, w.iter().map(|x| x / total).collect())
            })
            .collect();
        Behavior::new(tables).unwrap()
    })
}

/// Swaps Alice's outcome in every table with setting `x`.
fn flip_alice(b: &Behavior, x: usize) -> Behavior {
    let tables = b
        .tables()
        .iter()
        .map(|(jc, t)| {
            let t = if jc.x == x {
                let half = t.len() / 2;
                (0..t.len()).map(|i| t[i ^ half]).collect()
            } else {
                t.clone()
            };
            (jc.clone(), t)
        })
        .collect();
    Behavior::new(tables).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantum_behaviors_are_consistent(phi in angle(), tu in angle(), tv in angle()) {
        let b = quantum_behavior(&QuantumModel::new(phi, tu, tv), &Scenario::chsh_kcbs()).unwrap();
        prop_assert!(b.normalization_error() < 1e-12);
        prop_assert!(b.tables().values().flatten().all(|&p| p >= 0.0));
        prop_assert!(check_no_signalling(&b, ANALYTIC_TOL).is_empty());
        let m = marginalize_bob(&b).unwrap();
        prop_assert!(check_no_disturbance(&m, ANALYTIC_TOL).is_empty());
    }

    #[test]
    fn table_and_operator_routes_agree(phi in angle(), tu in angle(), tv in angle()) {
        let model = QuantumModel::new(phi, tu, tv);
        let b = quantum_behavior(&model, &Scenario::chsh_kcbs()).unwrap();
        let tables = correlators_from_behavior(&b, &marginalize_bob(&b).unwrap()).unwrap();
        let direct = direct_correlators(&model).unwrap();
        prop_assert!((alpha_chsh(&tables).unwrap() - alpha_chsh(&direct).unwrap()).abs() < 1e-12);
        prop_assert!((beta_kcbs(&tables).unwrap() - beta_kcbs(&direct).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn functionals_are_bounded(b in any_behavior()) {
        let c = correlators_from_behavior(&b, &marginalize_bob(&b).unwrap()).unwrap();
        prop_assert!(alpha_chsh(&c).unwrap().abs() <= 4.0 + 1e-12);
        prop_assert!(beta_kcbs(&c).unwrap().abs() <= 5.0 + 1e-12);
    }

    #[test]
    fn alice_one_relabeling(b in any_behavior()) {
        let c = correlators_from_behavior(&b, &marginalize_bob(&b).unwrap()).unwrap();
        let flipped = flip_alice(&b, 1);
        let cf = correlators_from_behavior(&flipped, &marginalize_bob(&flipped).unwrap()).unwrap();
        let expected = Functional::chsh().flip_alice(1).evaluate(&c).unwrap();
        prop_assert!((alpha_chsh(&cf).unwrap() - expected).abs() < 1e-12);
        prop_assert!((beta_kcbs(&cf).unwrap() - beta_kcbs(&c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn beta_invariant_under_cyclic_relabeling(phi in angle(), tu in angle(), tv in angle(), k in 1usize..5) {
        let model = QuantumModel::new(phi, tu, tv);
        let beta = evaluate_model(&model).unwrap().beta;
        let shifted = evaluate_model(&model.with_bob_shift(k)).unwrap().beta;
        prop_assert!((beta - shifted).abs() < 1e-12, "{} vs {}", beta, shifted);
    }

    #[test]
    fn behavior_json_round_trip(b in any_behavior()) {
        let back = Behavior::from_json(&b.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, b);
    }

    #[test]
    fn dataset_round_trip(
        state in 0usize..11,
        corr in 0usize..9,
        value in -1.0f64..1.0,
        sigma in 0.0f64..0.1,
        note in proptest::option::of("[a-z ]{0,20}"),
    ) {
        let mut d = bundled_dataset();
        d[state].correlators[corr].value = value;
        d[state].correlators[corr].sigma = sigma;
        d[state].notes = note;
        let once = parse_dataset(&dataset_to_json(&d).unwrap()).unwrap();
        prop_assert_eq!(&once, &d);
        let twice = parse_dataset(&dataset_to_json(&once).unwrap()).unwrap();
        prop_assert_eq!(twice, once);
    }
}
