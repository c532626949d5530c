use std::collections::BTreeMap;

use ibnet_core::classify::roc_auc;
use ibnet_core::embeddings::{fit, transform};
use ibnet_core::evaluation::correlated_bayes_ttest;
use ibnet_core::graph::GraphMeta;
use ibnet_core::model_selection::{expected_improvement, plan_nested_cv};
use ibnet_core::tracking::{canonical_json, config_hash};
use ibnet_core::{BipartiteInterbrainGraph, Chromophore, EncoderKind, ThetaE};
use proptest::prelude::*;
use serde_json::{Map, Value};

fn meta(i: usize) -> GraphMeta {
    GraphMeta {
        dyad_id: format!("D{i}"),
        condition_id: "C1".into(),
        chromophore: Chromophore::Hbo,
        label: (i % 2) as u8,
    }
}

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..40).prop_flat_map(|n| {
        (prop::collection::vec(-5i32..5, n), prop::collection::vec(0u8..2, n))
            .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
            .prop_map(|(s, y)| (s.into_iter().map(f64::from).collect(), y))
    })
}

/// Weight matrix of a 4x5 graph; zero entries are absent edges.
fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..1.0], 20)
}

fn graph(w: &[f64], perm1: &[usize], perm2: &[usize], idx: usize) -> BipartiteInterbrainGraph {
    let mut edges = Vec::new();
    for u in 0..4 {
        for v in 0..5 {
            edges.push((perm1[u], perm2[v], w[u * 5 + v]));
        }
    }
    BipartiteInterbrainGraph::new(4, 5, edges, meta(idx)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_of_negated_scores_is_complement((s, y) in scores_and_labels()) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = roc_auc(&s, &y).unwrap();
        prop_assert!((a + roc_auc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn auc_ignores_increasing_transforms((s, y) in scores_and_labels(), scale in 0.1f64..10.0, shift in -3.0f64..3.0) {
        let t: Vec<f64> = s.iter().map(|v| (scale * v + shift).exp()).collect();
        prop_assert_eq!(roc_auc(&s, &y).unwrap(), roc_auc(&t, &y).unwrap());
    }

    #[test]
    fn swapped_comparison_mirrors_posterior(diffs in prop::collection::vec(-0.5f64..0.5, 2..12), rho in 0.0f64..0.9) {
        let a = correlated_bayes_ttest(&diffs, rho).unwrap();
        let neg: Vec<f64> = diffs.iter().map(|d| -d).collect();
        let b = correlated_bayes_ttest(&neg, rho).unwrap();
        prop_assert!((a.location + b.location).abs() < 1e-12);
        prop_assert!((a.scale - b.scale).abs() < 1e-12);
        prop_assert!((a.hdi95[0] + b.hdi95[1]).abs() < 1e-9);
        if !a.degenerate {
            prop_assert!((a.p_greater_zero + b.p_greater_zero - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn expected_improvement_is_nonnegative(mean in -2.0f64..2.0, var in 0.0f64..4.0, best in -2.0f64..2.0) {
        let ei = expected_improvement(mean, var, best);
        prop_assert!(ei.is_finite() && ei >= 0.0);
        prop_assert!(ei >= (mean - best).max(0.0) - 1e-12);
    }

    #[test]
    fn fold_plans_are_stratified_and_disjoint(n0 in 8usize..16, n1 in 8usize..16, seed in any::<u64>()) {
        let dyads: Vec<(String, u8)> = (0..n0 + n1).map(|i| (format!("D{i:02}"), u8::from(i >= n0))).collect();
        let plan = plan_nested_cv(&dyads, 5, 3, seed).unwrap();
        plan.validate().unwrap();
        prop_assert!(plan.is_stratified());
        let mut seen = 0;
        for f in 0..5 {
            let test = plan.outer_test(f);
            prop_assert!(test.is_disjoint(&plan.outer_train(f)));
            seen += test.len();
        }
        prop_assert_eq!(seen, n0 + n1);
        prop_assert_eq!(plan.plan_hash(), plan_nested_cv(&dyads, 5, 3, seed).unwrap().plan_hash());
    }

    #[test]
    fn canonical_json_ignores_key_order(entries in prop::collection::btree_map("[a-z]{1,6}", -1000i64..1000, 1..10)) {
        let forward: Map<String, Value> = entries.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        let mut reversed = Map::new();
        for (k, v) in entries.iter().rev() {
            reversed.insert(k.clone(), Value::from(*v));
        }
        let (a, b) = (Value::Object(forward), Value::Object(reversed));
        prop_assert_eq!(canonical_json(&a).unwrap(), canonical_json(&b).unwrap());
        prop_assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        let nested: BTreeMap<&str, &Value> = BTreeMap::from([("z", &a), ("a", &b)]);
        prop_assert!(!canonical_json(&nested).unwrap().contains(' '));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn label_free_encoders_are_finite_and_node_order_invariant(
        ws in prop::collection::vec(weights(), 6),
        perm1 in Just((0..4).collect::<Vec<usize>>()).prop_shuffle(),
        perm2 in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let id1: Vec<usize> = (0..4).collect();
        let id2: Vec<usize> = (0..5).collect();
        let graphs: Vec<_> = ws.iter().enumerate().map(|(i, w)| graph(w, &id1, &id2, i)).collect();
        let permuted: Vec<_> = ws.iter().enumerate().map(|(i, w)| graph(w, &perm1, &perm2, i)).collect();
        for kind in [EncoderKind::Ldp, EncoderKind::Dwc, EncoderKind::Scattering, EncoderKind::Feather] {
            let state = fit(kind, &graphs, &ThetaE::default_for(kind), 1).unwrap();
            let a = transform(&state, &graphs).unwrap();
            let b = transform(&state, &permuted).unwrap();
            for (ra, rb) in a.rows.iter().zip(&b.rows) {
                prop_assert!(ra.iter().all(|v| v.is_finite()), "{kind}: non-finite embedding");
                for (x, y) in ra.iter().zip(rb) {
                    prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{kind}: {x} vs {y}");
                }
            }
        }
        let fc = fit(EncoderKind::Fc, &graphs, &ThetaE::default_for(EncoderKind::Fc), 1).unwrap();
        let rows = transform(&fc, &graphs).unwrap().rows;
        prop_assert!(rows.iter().all(|r| r.len() == 20 && r.iter().all(|v| v.is_finite())));
    }
}
