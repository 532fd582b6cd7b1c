use ceilguard_core::features::StandardizationParams;
use ceilguard_core::labeling::{
    build_training_set, mask_anchors, observed_presence, resolve_labels, LabelSource, LabeledRow, LfOutput, Resolution,
    RowLabel, SparsityProfile, Verdict,
};
use ceilguard_core::model::AnchorVector;
use ceilguard_core::pipeline::{labeling_functions, tune_aur_distance, PipelineConfig};
use ceilguard_core::{generate, FeatureExtractor, GeneratorConfig, PriceEvent};
use chrono::DateTime;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn extractor() -> FeatureExtractor {
    FeatureExtractor::new(StandardizationParams::identity(), 1.0, 0.5).unwrap()
}

fn event(i: usize, anchors: AnchorVector, rng: &mut ChaCha8Rng) -> PriceEvent {
    PriceEvent {
        item_id: format!("row-{i}"),
        timestamp: DateTime::UNIX_EPOCH,
        anchors,
        offers: (0..rng.random_range(0..3)).map(|_| rng.random_range(5.0..50.0)).collect(),
        history: Default::default(),
        aur: None,
        category_id: "c".into(),
        offer_price: None,
    }
}

fn rows(n: usize, presence: f64, target: Option<usize>, seed: u64) -> (Vec<PriceEvent>, Vec<LabeledRow>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ex = extractor();
    let mut events = Vec::new();
    let mut out = Vec::new();
    for i in 0..n {
        let anchors = loop {
            let v: [Option<f64>; 5] = std::array::from_fn(|s| {
                (Some(s) == target || rng.random_bool(presence)).then(|| rng.random_range(5.0..50.0))
            });
            if v.iter().any(Option::is_some) {
                break AnchorVector::new(v).unwrap();
            }
        };
        let e = event(i, anchors, &mut rng);
        out.push(LabeledRow {
            item_id: e.item_id.clone(),
            anchors,
            features: ex.extract(&e).unwrap(),
            label: RowLabel::Normal,
            label_source: LabelSource::Manual,
            target_slot: target,
        });
        events.push(e);
    }
    (events, out)
}

fn profile(rates: [f64; 5]) -> SparsityProfile {
    SparsityProfile { presence_rate: rates, joint_count_dist: None }
}

#[test]
fn masking_hits_target_presence() {
    let (_, rows) = rows(10_000, 1.0, None, 1);
    let target = [0.7, 0.8, 0.45, 0.55, 0.65];
    let masked = mask_anchors(&rows, &profile(target), 7, &extractor()).unwrap();
    let realized = observed_presence(masked.iter().map(|r| &r.anchors));
    for s in 0..5 {
        assert!((realized[s] - target[s]).abs() <= 0.01, "slot {s}: {} vs {}", realized[s], target[s]);
    }
}

#[test]
fn masking_from_partial_presence() {
    let (_, rows) = rows(10_000, 0.8, None, 2);
    let observed = observed_presence(rows.iter().map(|r| &r.anchors));
    let target = [0.5, 0.6, 0.3, 0.79, 0.4];
    let masked = mask_anchors(&rows, &profile(target), 8, &extractor()).unwrap();
    let realized = observed_presence(masked.iter().map(|r| &r.anchors));
    for s in 0..5 {
        let expect = target[s].min(observed[s]);
        assert!((realized[s] - expect).abs() <= 0.01, "slot {s}: {} vs {expect}", realized[s]);
    }
}

#[test]
fn masked_rows_are_subsets_with_fresh_features() {
    let (events, rows) = rows(2_000, 0.7, Some(3), 3);
    let ex = extractor();
    let masked = mask_anchors(&rows, &profile([0.2; 5]), 9, &ex).unwrap();
    for ((orig, m), e) in rows.iter().zip(&masked).zip(&events) {
        assert!(m.anchors.count() >= 1);
        assert!(m.anchors.is_present(3));
        for (s, v) in m.anchors.present() {
            assert_eq!(orig.anchors.get(s), Some(v));
        }
        let fresh = ex.extract(&PriceEvent { anchors: m.anchors, ..e.clone() }).unwrap();
        assert_eq!(m.features, fresh);
        assert_eq!(m.label, orig.label);
    }
}

#[test]
fn masking_is_deterministic_and_seed_sensitive() {
    let (_, rows) = rows(1_000, 0.9, None, 4);
    let p = profile([0.5; 5]);
    let a = mask_anchors(&rows, &p, 1, &extractor()).unwrap();
    let b = mask_anchors(&rows, &p, 1, &extractor()).unwrap();
    let c = mask_anchors(&rows, &p, 2, &extractor()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn unreachable_profile_is_an_error() {
    let (_, rows) = rows(500, 0.3, None, 5);
    assert!(mask_anchors(&rows, &profile([0.95; 5]), 1, &extractor()).is_err());
}

#[test]
fn joint_count_mode_matches_count_histogram() {
    let (_, rows) = rows(10_000, 1.0, None, 6);
    let dist = [0.3, 0.3, 0.2, 0.1, 0.1];
    let p = SparsityProfile { presence_rate: [0.5; 5], joint_count_dist: Some(dist) };
    let masked = mask_anchors(&rows, &p, 3, &extractor()).unwrap();
    let mut hist = [0.0; 5];
    for r in &masked {
        hist[r.anchors.count() - 1] += 1.0 / masked.len() as f64;
    }
    for k in 0..5 {
        assert!((hist[k] - dist[k]).abs() <= 0.015, "{hist:?}");
    }
}

#[test]
fn generated_corpus_label_rate_is_realistic() {
    let cfg = GeneratorConfig { n_items: 40_000, ..GeneratorConfig::default() };
    let (events, truth) = generate(&cfg).unwrap();
    let pcfg = PipelineConfig::default();
    let aur = tune_aur_distance(&events, Some(&truth), pcfg.aur_distance_quantile).unwrap();
    let observed = observed_presence(events.iter().map(|e| &e.anchors));
    for slot in [0, 3, 4] {
        let lfs = labeling_functions(slot, &pcfg, aur);
        let set = build_training_set(&events, slot, &lfs, &profile(observed), 1, &extractor()).unwrap();
        let rate = set.report.n_anomalous as f64 / set.report.n_labeled as f64;
        assert!((0.005..=0.02).contains(&rate), "slot {slot}: anomalous rate {rate}");
        let n_anom = set.rows.iter().filter(|r| r.label == RowLabel::Anomalous).count();
        assert_eq!(n_anom, set.report.n_anomalous);
    }
}

fn verdict() -> impl Strategy<Value = Verdict> {
    prop_oneof![Just(Verdict::Anomalous), Just(Verdict::Normal), Just(Verdict::Abstain)]
}

proptest! {
    #[test]
    fn resolution_is_or_over_anomalous(votes in prop::collection::vec(verdict(), 0..6)) {
        let outputs: Vec<LfOutput> =
            votes.iter().enumerate().map(|(i, v)| LfOutput { verdict: *v, lf_name: format!("lf{i}") }).collect();
        let expect = if votes.contains(&Verdict::Anomalous) {
            Resolution::Anomalous
        } else if votes.contains(&Verdict::Normal) {
            Resolution::Normal
        } else {
            Resolution::Unlabeled
        };
        prop_assert_eq!(resolve_labels(&outputs), expect);
        let mut rev = outputs.clone();
        rev.reverse();
        prop_assert_eq!(resolve_labels(&rev), expect);
    }
}
