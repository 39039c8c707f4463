mod support;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use readiness_core::{
    load_catalog, predicate_of, priority_of, rollup, Assessment, LeafScore, Mode, NodeKind,
};
use support::{ancestors, depth, generate, oracle_all};

fn four() -> BigRational {
    BigRational::from_integer(BigInt::from(4))
}

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn rollup_matches_oracle(seed in any::<u64>()) {
        let g = generate(seed, 6, 8);
        prop_assert!(depth(g.catalog.root()) <= 6);
        let report = rollup(&g.catalog, &g.assessment, Mode::Strict).unwrap();
        let mut expected = BTreeMap::new();
        oracle_all(g.catalog.root(), &g.assessment.scores, &mut expected);
        for (id, value) in expected {
            prop_assert_eq!(report.achievement(&id), value.as_ref(), "node {}", id);
        }
    }

    #[test]
    fn partial_rollup_matches_oracle(seed in any::<u64>(), keep in 0.0f64..1.0) {
        let g = generate(seed, 5, 6);
        let mut scores = g.assessment.scores.clone();
        let ids: Vec<_> = scores.keys().cloned().collect();
        for (i, id) in ids.iter().enumerate() {
            if (i as f64 / ids.len() as f64) >= keep {
                scores.remove(id);
            }
        }
        let partial = Assessment { catalog: g.catalog.catalog_ref(), scores };
        let report = rollup(&g.catalog, &partial, Mode::Partial).unwrap();
        let mut expected = BTreeMap::new();
        oracle_all(g.catalog.root(), &partial.scores, &mut expected);
        for (id, value) in expected {
            prop_assert_eq!(report.achievement(&id), value.as_ref(), "node {}", id);
        }
        prop_assert_eq!(report.complete, partial.scores.len() == g.catalog.leaves().len());
    }

    #[test]
    fn constant_leaves_give_constant_tree(seed in any::<u64>(), c in 0i64..=4) {
        let g = generate(seed, 6, 8);
        let scores = g.catalog.leaves().iter().map(|l| (l.id.clone(), LeafScore::new(c).unwrap())).collect();
        let a = Assessment { catalog: g.catalog.catalog_ref(), scores };
        let report = rollup(&g.catalog, &a, Mode::Strict).unwrap();
        let expected = BigRational::from_integer(BigInt::from(c));
        for node in report.per_node.values() {
            prop_assert_eq!(node.achievement.as_ref(), Some(&expected));
        }
    }

    #[test]
    fn achievement_plus_priority_is_four(seed in any::<u64>()) {
        let g = generate(seed, 6, 8);
        let report = rollup(&g.catalog, &g.assessment, Mode::Strict).unwrap();
        for node in report.per_node.values() {
            let a = node.achievement.clone().unwrap();
            prop_assert_eq!(&a + node.priority().unwrap(), four());
            prop_assert_eq!(&a + priority_of(&a).unwrap(), four());
        }
    }

    #[test]
    fn achievements_bounded_by_leaf_extremes(seed in any::<u64>()) {
        let g = generate(seed, 6, 8);
        let report = rollup(&g.catalog, &g.assessment, Mode::Strict).unwrap();
        let lo = g.assessment.scores.values().min().unwrap().as_rational();
        let hi = g.assessment.scores.values().max().unwrap().as_rational();
        for node in report.per_node.values() {
            let a = node.achievement.as_ref().unwrap();
            prop_assert!(&lo <= a && a <= &hi);
        }
    }

    #[test]
    fn raising_a_leaf_raises_exactly_its_ancestors(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let g = generate(seed, 6, 8);
        let below_max: Vec<_> = g.assessment.scores.iter().filter(|(_, s)| s.value() < 4).map(|(k, _)| k.clone()).collect();
        prop_assume!(!below_max.is_empty());
        let leaf = pick.get(&below_max).clone();
        let mut raised = g.assessment.clone();
        let old = raised.scores[&leaf].value();
        raised.scores.insert(leaf.clone(), LeafScore::new(i64::from(old) + 1).unwrap());

        let before = rollup(&g.catalog, &g.assessment, Mode::Strict).unwrap();
        let after = rollup(&g.catalog, &raised, Mode::Strict).unwrap();
        let mut path = ancestors(g.catalog.root(), &leaf).unwrap();
        path.push(leaf.clone());
        for (id, b) in &before.per_node {
            let (b, a) = (b.achievement.as_ref().unwrap(), after.achievement(id).unwrap());
            if path.contains(id) {
                prop_assert!(a > b, "node {} did not increase", id);
            } else {
                prop_assert_eq!(a, b, "node {} changed", id);
            }
        }
    }

    #[test]
    fn predicate_is_monotone(a in 0u32..=4000, b in 0u32..=4000) {
        let (lo, hi) = (a.min(b), a.max(b));
        let r = |v: u32| BigRational::new(BigInt::from(v), BigInt::from(1000));
        prop_assert!(predicate_of(&r(lo)).unwrap() <= predicate_of(&r(hi)).unwrap());
    }

    #[test]
    fn strict_and_partial_agree_when_complete(seed in any::<u64>()) {
        let g = generate(seed, 6, 8);
        let strict = rollup(&g.catalog, &g.assessment, Mode::Strict).unwrap();
        let partial = rollup(&g.catalog, &g.assessment, Mode::Partial).unwrap();
        prop_assert_eq!(&strict.per_node, &partial.per_node);
        prop_assert_eq!(strict.overall, partial.overall);
        prop_assert!(partial.complete);
    }

    #[test]
    fn catalog_round_trip_and_leaf_set(seed in any::<u64>()) {
        let g = generate(seed, 6, 8);
        let again = load_catalog(&g.catalog.to_json_pretty()).unwrap();
        prop_assert_eq!(&again, &g.catalog);
        let leaves: Vec<_> = g.catalog.leaves().iter().map(|n| n.id.clone()).collect();
        let empty: Vec<_> = g.catalog.iter().filter(|n| n.children.is_empty()).map(|n| n.id.clone()).collect();
        prop_assert_eq!(&leaves, &empty);
        prop_assert!(g.catalog.leaves().iter().all(|n| n.kind == NodeKind::Issue));
    }

    #[test]
    fn report_serialization_round_trips(seed in any::<u64>()) {
        let g = generate(seed, 4, 5);
        let report = rollup(&g.catalog, &g.assessment, Mode::Strict).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: readiness_core::ScoreReport = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, report);
    }
}
