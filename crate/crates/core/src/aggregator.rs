//! Multiclass reliability model over anchor slots. Its class
//! probabilities, restricted to usable anchors, weight the optimal anchor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{offer_stats, FeatureBundle, OfferStats};
use crate::model::{slot_name, AnchorVector, PriceEvent, ANCHOR_ARITY, ANCHOR_NAMES};
use crate::stats::{fnv1a, mix_seed};
use crate::tree::{train_random_forest, Classifier, FeatureRow, ForestConfig};

pub const CATEGORY_BUCKETS: u64 = 256;
pub const AGGREGATOR_ARITY: usize = 13;
pub const DEFAULT_CEILING_MULTIPLIER: f64 = 1.5;

pub fn category_bucket(category_id: &str) -> u64 {
    fnv1a(category_id.as_bytes()) % CATEGORY_BUCKETS
}

pub fn aggregator_feature_names() -> Vec<String> {
    let mut names: Vec<String> =
        ["category_bucket", "offer_min", "offer_max", "offer_mean", "offer_range", "offer_cv", "offer_count"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    names.extend(ANCHOR_NAMES.iter().map(|n| format!("present:{n}")));
    names.push("anchor_count".into());
    names
}

fn features_from(event: &PriceEvent, o: &OfferStats) -> FeatureRow {
    let mut row = vec![
        Some(category_bucket(&event.category_id) as f64),
        o.min,
        o.max,
        o.mean,
        o.range,
        o.cv,
        Some(o.count as f64),
    ];
    row.extend(event.anchors.presence_mask().iter().map(|p| Some(if *p { 1.0 } else { 0.0 })));
    row.push(Some(event.anchors.count() as f64));
    row
}

/// Contextual features: category bucket, offer statistics and anchor
/// availability. Anchor values themselves are deliberately excluded.
pub fn aggregator_features(event: &PriceEvent, bundle: &FeatureBundle) -> FeatureRow {
    features_from(event, &bundle.offers)
}

/// Slot whose anchor is closest to AUR; exact ties are broken by a draw
/// seeded with `seed`.
pub fn derive_target(anchors: &AnchorVector, aur: f64, seed: u64) -> Result<usize> {
    if !(aur.is_finite() && aur > 0.0) {
        return Err(Error::Target(format!("AUR must be positive, got {aur}")));
    }
    let mut best = f64::INFINITY;
    let mut tied: Vec<usize> = Vec::new();
    for (slot, v) in anchors.present() {
        let d = (v - aur).abs();
        if d < best {
            best = d;
            tied.clear();
            tied.push(slot);
        } else if d == best {
            tied.push(slot);
        }
    }
    match tied.len() {
        0 => Err(Error::Target("no anchors present".into())),
        1 => Ok(tied[0]),
        n => Ok(tied[ChaCha8Rng::seed_from_u64(seed).random_range(0..n)]),
    }
}

/// Per-item tie-break seed, so scoring order never matters.
pub fn item_seed(seed: u64, item_id: &str) -> u64 {
    mix_seed(seed, fnv1a(item_id.as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub forest: ForestConfig,
    pub min_rows: usize,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self { forest: ForestConfig::default(), min_rows: 500 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorModel {
    pub forest: Classifier,
    pub feature_schema: Vec<String>,
    /// Class index to anchor slot; the identity for models trained here.
    pub class_to_slot: [usize; ANCHOR_ARITY],
}

#[derive(Serialize, Deserialize)]
struct AggregatorDoc {
    feature_schema: Vec<String>,
    class_to_slot: Vec<String>,
    model: crate::tree::ModelDoc,
}

impl AggregatorModel {
    pub fn check_schema(&self) -> Result<()> {
        if self.feature_schema != aggregator_feature_names()
            || self.forest.feature_names() != self.feature_schema.as_slice()
        {
            return Err(Error::Schema("aggregator was trained on a different feature schema".into()));
        }
        if self.forest.n_classes() != ANCHOR_ARITY {
            return Err(Error::Schema(format!(
                "aggregator has {} classes, expected {ANCHOR_ARITY}",
                self.forest.n_classes()
            )));
        }
        let mut seen = [false; ANCHOR_ARITY];
        for s in self.class_to_slot {
            if s >= ANCHOR_ARITY || std::mem::replace(&mut seen[s], true) {
                return Err(Error::Schema("aggregator class mapping is not a bijection".into()));
            }
        }
        Ok(())
    }

    /// Class probabilities re-indexed by anchor slot.
    pub fn slot_probabilities(&self, features: &[Option<f64>]) -> Result<[f64; ANCHOR_ARITY]> {
        let p = self.forest.predict_proba(features)?;
        let mut out = [0.0; ANCHOR_ARITY];
        for (class, slot) in self.class_to_slot.iter().enumerate() {
            out[*slot] = p[class];
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let doc = AggregatorDoc {
            feature_schema: self.feature_schema.clone(),
            class_to_slot: self.class_to_slot.iter().map(|s| slot_name(*s).to_string()).collect(),
            model: self.forest.to_doc(),
        };
        serde_json::to_vec(&doc).expect("aggregator serialization is infallible")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: AggregatorDoc = serde_json::from_slice(bytes)
            .map_err(|e| Error::ModelBundle(format!("malformed aggregator document: {e}")))?;
        if doc.class_to_slot.len() != ANCHOR_ARITY {
            return Err(Error::ModelBundle("aggregator class mapping has the wrong arity".into()));
        }
        let mut class_to_slot = [0; ANCHOR_ARITY];
        for (i, name) in doc.class_to_slot.iter().enumerate() {
            class_to_slot[i] = crate::model::slot_of(name)
                .ok_or_else(|| Error::ModelBundle(format!("unknown anchor `{name}` in aggregator classes")))?;
        }
        let model = AggregatorModel {
            forest: Classifier::from_doc(doc.model)?,
            feature_schema: doc.feature_schema,
            class_to_slot,
        };
        model.check_schema().map_err(|e| Error::ModelBundle(e.to_string()))?;
        Ok(model)
    }
}

/// Feature rows and targets for every AUR-covered event with an anchor.
pub fn aggregator_training_rows(events: &[PriceEvent], seed: u64) -> Result<(Vec<FeatureRow>, Vec<usize>)> {
    let pairs: Vec<(FeatureRow, usize)> = events
        .par_iter()
        .filter(|e| e.anchors.count() > 0)
        .filter_map(|e| e.aur.map(|aur| (e, aur)))
        .map(|(e, aur)| {
            let target = derive_target(&e.anchors, aur, item_seed(seed, &e.item_id))?;
            Ok((features_from(e, &offer_stats(&e.offers)), target))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

pub fn train_aggregator(events: &[PriceEvent], cfg: &AggregatorConfig, seed: u64) -> Result<AggregatorModel> {
    let (rows, targets) = aggregator_training_rows(events, seed)?;
    if rows.len() < cfg.min_rows {
        return Err(Error::Train(format!(
            "aggregator needs at least {} AUR-covered rows, got {}",
            cfg.min_rows,
            rows.len()
        )));
    }
    let mut realized = [false; ANCHOR_ARITY];
    for t in &targets {
        realized[*t] = true;
    }
    if realized.iter().filter(|r| **r).count() < 2 {
        return Err(Error::Train("aggregator targets collapse to a single class".into()));
    }
    let names = aggregator_feature_names();
    let fc = ForestConfig { n_classes: Some(ANCHOR_ARITY), ..cfg.forest.clone() };
    let forest = train_random_forest(&rows, &targets, &names, &fc, seed)?;
    Ok(AggregatorModel {
        forest: Classifier::Forest(forest),
        feature_schema: names,
        class_to_slot: std::array::from_fn(|i| i),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedAnchor {
    pub slot: usize,
    pub anchor_value: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Weighting {
    Weighted(Vec<WeightedAnchor>),
    NoReliableAnchor,
}

/// Renormalizes slot probabilities over anchors that are present and
/// unflagged.
pub fn weights_from_probabilities(
    probs: &[f64; ANCHOR_ARITY],
    anchors: &AnchorVector,
    flags: &[bool; ANCHOR_ARITY],
) -> Weighting {
    let usable: Vec<(usize, f64)> = anchors.present().filter(|(s, _)| !flags[*s]).collect();
    if usable.is_empty() {
        return Weighting::NoReliableAnchor;
    }
    let total: f64 = usable.iter().map(|(s, _)| probs[*s]).sum();
    let weights = usable
        .iter()
        .map(|(s, v)| WeightedAnchor {
            slot: *s,
            anchor_value: *v,
            weight: if total > 0.0 { probs[*s] / total } else { 1.0 / usable.len() as f64 },
        })
        .collect();
    Weighting::Weighted(weights)
}

pub fn weight_anchors(
    model: &AggregatorModel,
    features: &[Option<f64>],
    anchors: &AnchorVector,
    flags: &[bool; ANCHOR_ARITY],
) -> Result<Weighting> {
    let probs = model.slot_probabilities(features)?;
    Ok(weights_from_probabilities(&probs, anchors, flags))
}

/// Equal weights over the usable anchors.
pub fn uniform_weights(anchors: &AnchorVector, flags: &[bool; ANCHOR_ARITY]) -> Weighting {
    weights_from_probabilities(&[1.0; ANCHOR_ARITY], anchors, flags)
}

pub fn optimal_anchor(weighted: &[WeightedAnchor]) -> Result<f64> {
    if weighted.is_empty() {
        return Err(Error::Aggregation("no weighted anchors".into()));
    }
    Ok(weighted.iter().map(|w| w.weight * w.anchor_value).sum())
}

pub fn ceiling_price(optimal: f64, multiplier: f64) -> Result<f64> {
    if !(multiplier.is_finite() && multiplier >= 1.0) {
        return Err(Error::Config(format!("ceiling multiplier must be >= 1, got {multiplier}")));
    }
    Ok(optimal * multiplier)
}
