use ceilguard_core::aggregator::{
    aggregator_features, ceiling_price, derive_target, optimal_anchor, train_aggregator, uniform_weights,
    weights_from_probabilities, AggregatorConfig, Weighting,
};
use ceilguard_core::model::AnchorVector;
use ceilguard_core::tree::{argmax, ForestConfig};
use ceilguard_core::{FeatureExtractor, PriceEvent, StandardizationParams};
use chrono::DateTime;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn anchors_strategy() -> impl Strategy<Value = AnchorVector> {
    prop::collection::vec(prop::option::weighted(0.7, 1u32..40), 5)
        .prop_filter("one anchor", |v| v.iter().any(Option::is_some))
        .prop_map(|v| AnchorVector::new(std::array::from_fn(|i| v[i].map(f64::from))).unwrap())
}

proptest! {
    #[test]
    fn target_is_a_brute_force_argmin(anchors in anchors_strategy(), aur in 1u32..40, seed in any::<u64>()) {
        let aur = f64::from(aur) + 0.5 * f64::from(seed as u32 % 2);
        let t = derive_target(&anchors, aur, seed).unwrap();
        let best = anchors.present().map(|(_, v)| (v - aur).abs()).fold(f64::INFINITY, f64::min);
        prop_assert_eq!((anchors.get(t).unwrap() - aur).abs(), best);
        prop_assert_eq!(derive_target(&anchors, aur, seed).unwrap(), t);
    }

    #[test]
    fn weights_form_a_simplex_and_mix_convexly(
        anchors in anchors_strategy(),
        probs in prop::array::uniform5(0.0f64..1.0),
        flags in prop::array::uniform5(any::<bool>()),
    ) {
        match weights_from_probabilities(&probs, &anchors, &flags) {
            Weighting::NoReliableAnchor => {
                prop_assert!(anchors.present().all(|(s, _)| flags[s]));
            }
            Weighting::Weighted(w) => {
                prop_assert!(w.iter().all(|x| x.weight >= 0.0 && !flags[x.slot] && anchors.is_present(x.slot)));
                prop_assert!((w.iter().map(|x| x.weight).sum::<f64>() - 1.0).abs() < 1e-12);
                let usable: Vec<f64> = anchors.present().filter(|(s, _)| !flags[*s]).map(|(_, v)| v).collect();
                prop_assert_eq!(w.len(), usable.len());
                let opt = optimal_anchor(&w).unwrap();
                let lo = usable.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = usable.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(opt >= lo - 1e-9 && opt <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn flagging_only_removes_and_rescales(
        anchors in anchors_strategy(),
        probs in prop::array::uniform5(0.01f64..1.0),
        slot in 0usize..5,
    ) {
        let none = [false; 5];
        let mut one = none;
        one[slot] = true;
        let (Weighting::Weighted(before), after) =
            (weights_from_probabilities(&probs, &anchors, &none), weights_from_probabilities(&probs, &anchors, &one))
        else {
            unreachable!()
        };
        match after {
            Weighting::NoReliableAnchor => prop_assert!(before.len() == 1 && before[0].slot == slot),
            Weighting::Weighted(after) => {
                prop_assert!(after.iter().all(|w| w.slot != slot));
                let removed = before.iter().find(|w| w.slot == slot).map_or(0.0, |w| w.weight);
                for w in &after {
                    let b = before.iter().find(|x| x.slot == w.slot).unwrap();
                    prop_assert!((w.weight * (1.0 - removed) - b.weight).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ceiling_is_monotone(opt in 0.01f64..1e4, m1 in 1.0f64..5.0, dm in 0.0f64..5.0, dopt in 0.0f64..100.0) {
        let a = ceiling_price(opt, m1).unwrap();
        prop_assert!(ceiling_price(opt, m1 + dm).unwrap() >= a);
        prop_assert!(ceiling_price(opt + dopt, m1).unwrap() >= a);
        prop_assert!(a >= opt);
    }
}

#[test]
fn ceiling_rejects_discounting_multipliers() {
    assert!(ceiling_price(10.0, 0.99).is_err());
    assert!(ceiling_price(10.0, f64::NAN).is_err());
}

#[test]
fn uniform_weights_give_the_arithmetic_mean() {
    let a = AnchorVector::new([Some(10.0), None, Some(20.0), Some(60.0), None]).unwrap();
    let Weighting::Weighted(w) = uniform_weights(&a, &[false; 5]) else { unreachable!() };
    assert!((optimal_anchor(&w).unwrap() - 30.0).abs() < 1e-12);
}

#[test]
fn exact_ties_are_broken_uniformly() {
    let anchors = AnchorVector::new([Some(9.0), Some(11.0), None, Some(11.0), Some(30.0)]).unwrap();
    let n = 30_000;
    let mut counts = [0usize; 5];
    for seed in 0..n {
        counts[derive_target(&anchors, 10.0, seed as u64).unwrap()] += 1;
    }
    assert_eq!(counts[2] + counts[4], 0);
    let expected = n as f64 / 3.0;
    let chi2: f64 = [0, 1, 3].iter().map(|s| (counts[*s] as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(2.0).unwrap().inverse_cdf(0.99);
    assert!(chi2 < critical, "chi2 {chi2} >= {critical}, counts {counts:?}");
}

/// Category k has its accurate anchor in slot k % 5; everything else is
/// noisy.
fn planted_events(n: usize, seed: u64) -> Vec<PriceEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let cat = rng.random_range(0..10usize);
            let price: f64 = rng.random_range(10.0..200.0);
            let good = cat % 5;
            let anchors: [Option<f64>; 5] = std::array::from_fn(|s| {
                let noise = if s == good { rng.random_range(-0.01..0.01) } else { rng.random_range(0.1..0.4) };
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                Some(price * (1.0 + sign * noise))
            });
            PriceEvent {
                item_id: format!("p{i}"),
                timestamp: DateTime::UNIX_EPOCH,
                anchors: AnchorVector::new(anchors).unwrap(),
                offers: vec![price, price * 1.05],
                history: Default::default(),
                aur: Some(price),
                category_id: format!("category-{cat}"),
                offer_price: None,
            }
        })
        .collect()
}

fn small_cfg() -> AggregatorConfig {
    AggregatorConfig { forest: ForestConfig { n_trees: 30, ..ForestConfig::default() }, min_rows: 500 }
}

#[test]
fn planted_category_signal_is_learned() {
    let train = planted_events(5_000, 1);
    let test = planted_events(2_000, 2);
    let model = train_aggregator(&train, &small_cfg(), 3).unwrap();
    let ex = FeatureExtractor::new(StandardizationParams::identity(), 1.0, 0.5).unwrap();
    let correct = test
        .iter()
        .filter(|e| {
            let fb = ex.extract(e).unwrap();
            let p = model.slot_probabilities(&aggregator_features(e, &fb)).unwrap();
            let cat: usize = e.category_id.trim_start_matches("category-").parse().unwrap();
            argmax(&p) == cat % 5
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.70, "accuracy {acc}");
}

#[test]
fn aggregator_training_is_deterministic() {
    let train = planted_events(2_000, 4);
    let a = train_aggregator(&train, &small_cfg(), 5).unwrap();
    let b = train_aggregator(&train, &small_cfg(), 5).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    let back = ceilguard_core::aggregator::AggregatorModel::from_bytes(&a.to_bytes()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn too_few_rows_is_an_error() {
    let train = planted_events(100, 6);
    assert!(train_aggregator(&train, &small_cfg(), 1).is_err());
}
