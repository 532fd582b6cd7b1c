//! Per-anchor binary anomaly detectors and the registry that applies them.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureBundle;
use crate::labeling::{LabeledRow, RowLabel};
use crate::model::{slot_name, slot_of, ANCHOR_ARITY};
use crate::stats::mix_seed;
use crate::tree::{
    train_decision_tree, train_random_forest, Classifier, FeatureRow, ForestConfig, ModelDoc, TreeConfig,
};

/// Slots that carry a detector: competitor, first-party and marketplace median.
pub const MONITORED_SLOTS: [usize; 3] = [0, 3, 4];

pub const DETECTOR_ARITY: usize = 12;

/// Ordered feature names for the detector of `slot`.
pub fn detector_feature_names(slot: usize) -> Vec<String> {
    let s = slot_name(slot);
    vec![
        format!("markup:{s}"),
        format!("density:{s}"),
        "anchor_count".into(),
        format!("history_min:{s}"),
        format!("history_median:{s}"),
        format!("history_max:{s}"),
        format!("history_std:{s}"),
        format!("history_low_confidence:{s}"),
        "offer_mean".into(),
        "offer_cv".into(),
        "offer_range".into(),
        "offer_count".into(),
    ]
}

pub fn detector_features(bundle: &FeatureBundle, slot: usize) -> Result<FeatureRow> {
    let m = bundle
        .markup
        .m
        .get(slot)
        .copied()
        .flatten()
        .ok_or_else(|| Error::Feature(format!("detector features need a present {} anchor", slot_name(slot))))?;
    let h = &bundle.history[slot];
    let o = &bundle.offers;
    Ok(vec![
        Some(m),
        bundle.density.density[slot],
        Some(bundle.density.anchor_count as f64),
        h.cleansed_min,
        h.cleansed_median,
        h.cleansed_max,
        h.cleansed_std,
        Some(if h.low_confidence { 1.0 } else { 0.0 }),
        o.mean,
        o.cv,
        o.range,
        Some(o.count as f64),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorLearner {
    Tree(TreeConfig),
    Forest(ForestConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub learner: DetectorLearner,
    pub validation_fraction: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { learner: DetectorLearner::Tree(TreeConfig::default()), validation_fraction: 0.2 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelStats {
    pub n_normal: usize,
    pub n_anomalous: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    pub anchor_slot: usize,
    pub model: Classifier,
    pub threshold: f64,
    pub feature_schema: Vec<String>,
    pub trained_at: DateTime<Utc>,
    pub label_stats: LabelStats,
}

impl DetectorModel {
    /// Probability that the anchor at this detector's slot is anomalous.
    pub fn probability(&self, bundle: &FeatureBundle) -> Result<f64> {
        let row = detector_features(bundle, self.anchor_slot)?;
        Ok(self.model.predict_proba(&row)?[1])
    }

    pub fn check_schema(&self) -> Result<()> {
        if self.feature_schema != detector_feature_names(self.anchor_slot)
            || self.model.feature_names() != self.feature_schema.as_slice()
        {
            return Err(Error::Schema(format!(
                "detector for {} was trained on a different feature schema",
                slot_name(self.anchor_slot)
            )));
        }
        if self.model.n_classes() != 2 {
            return Err(Error::Schema(format!("detector for {} is not binary", slot_name(self.anchor_slot))));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Schema(format!("detector threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let doc = DetectorDoc {
            anchor: slot_name(self.anchor_slot).to_string(),
            threshold: self.threshold,
            feature_schema: self.feature_schema.clone(),
            trained_at: self.trained_at,
            label_stats: self.label_stats,
            model: self.model.to_doc(),
        };
        serde_json::to_vec(&doc).expect("detector serialization is infallible")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let doc: DetectorDoc = serde_json::from_slice(bytes)
            .map_err(|e| Error::ModelBundle(format!("malformed detector document: {e}")))?;
        let anchor_slot = slot_of(&doc.anchor)
            .ok_or_else(|| Error::ModelBundle(format!("unknown detector anchor `{}`", doc.anchor)))?;
        let model = DetectorModel {
            anchor_slot,
            model: Classifier::from_doc(doc.model)?,
            threshold: doc.threshold,
            feature_schema: doc.feature_schema,
            trained_at: doc.trained_at,
            label_stats: doc.label_stats,
        };
        model.check_schema().map_err(|e| Error::ModelBundle(e.to_string()))?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct DetectorDoc {
    anchor: String,
    threshold: f64,
    feature_schema: Vec<String>,
    trained_at: DateTime<Utc>,
    label_stats: LabelStats,
    model: ModelDoc,
}

/// Validation metrics for one trained detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub anchor: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub label_stats: LabelStats,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pr_auc: f64,
    /// The score ordering is no better than chance on validation data, so
    /// the chosen threshold is a formality.
    pub degenerate: bool,
}

fn exact_f1_cmp(a: (u64, u64), b: (u64, u64)) -> std::cmp::Ordering {
    // F1 = 2tp / (flagged + positives) kept as a fraction.
    let (an, ad) = a;
    let (bn, bd) = b;
    (an as u128 * bd as u128).cmp(&(bn as u128 * ad as u128))
}

/// F1-optimal threshold over the midpoints of sorted distinct
/// probabilities, flagging `p >= threshold`. Ties go to the lower
/// threshold. Returns the threshold and its F1.
pub fn select_threshold_with_f1(probs: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if probs.len() != labels.len() {
        return Err(Error::Train("probabilities and labels differ in length".into()));
    }
    let positives = labels.iter().filter(|l| **l).count() as u64;
    if positives == 0 || positives == labels.len() as u64 {
        return Err(Error::Train("threshold selection needs both classes".into()));
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::Train("non-finite probability".into()));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|a, b| probs[*a].total_cmp(&probs[*b]));
    // Distinct values ascending with their positive and total counts.
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for i in order {
        let pos = u64::from(labels[i]);
        match groups.last_mut() {
            Some(g) if g.0 == probs[i] => {
                g.1 += pos;
                g.2 += 1;
            }
            _ => groups.push((probs[i], pos, 1)),
        }
    }
    if groups.len() == 1 {
        let p = groups[0].0;
        let f1 = 2.0 * positives as f64 / (positives as f64 + labels.len() as f64);
        return Ok((p, f1));
    }
    // Threshold between groups k and k+1 flags every group above k.
    let mut above_tp = vec![0u64; groups.len() + 1];
    let mut above_n = vec![0u64; groups.len() + 1];
    for k in (0..groups.len()).rev() {
        above_tp[k] = above_tp[k + 1] + groups[k].1;
        above_n[k] = above_n[k + 1] + groups[k].2;
    }
    let mut best: Option<(usize, (u64, u64))> = None;
    for k in 0..groups.len() - 1 {
        let tp = above_tp[k + 1];
        let flagged = above_n[k + 1];
        let f = (2 * tp, flagged + positives);
        if best.is_none_or(|(_, b)| exact_f1_cmp(f, b).is_gt()) {
            best = Some((k, f));
        }
    }
    let (k, (num, den)) = best.expect("at least two groups");
    Ok(((groups[k].0 + groups[k + 1].0) / 2.0, num as f64 / den as f64))
}

pub fn select_threshold(probs: &[f64], labels: &[bool]) -> Result<f64> {
    select_threshold_with_f1(probs, labels).map(|(t, _)| t)
}

/// Area under the precision-recall curve by the trapezoidal rule, with
/// one operating point per distinct score.
pub fn pr_auc(probs: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 || probs.len() != labels.len() {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|a, b| probs[*b].total_cmp(&probs[*a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, idx) in order.iter().enumerate() {
        if labels[*idx] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(i + 1).is_none_or(|n| probs[*n] != probs[*idx]);
        if last_of_group {
            points.push((tp as f64 / positives as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    let mut area = 0.0;
    let mut prev = (0.0, points[0].1);
    for p in points {
        area += (p.0 - prev.0) * (p.1 + prev.1) / 2.0;
        prev = p;
    }
    area
}

pub(crate) fn confusion(flags: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let tp = flags.iter().zip(truth).filter(|(f, t)| **f && **t).count() as f64;
    let fp = flags.iter().zip(truth).filter(|(f, t)| **f && !**t).count() as f64;
    let fneg = flags.iter().zip(truth).filter(|(f, t)| !**f && **t).count() as f64;
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

/// Stratified split: roughly `fraction` of each class goes to validation,
/// but every class with at least two rows keeps one row on each side.
fn stratified_split(labels: &[bool], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5917));
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|i| labels[*i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut n_val = (fraction * n as f64).round() as usize;
        if n >= 2 {
            n_val = n_val.clamp(1, n - 1);
        } else {
            n_val = 0;
        }
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains one detector on labeled, masked rows for a single slot and picks
/// its F1-optimal threshold on a held-out stratified split.
pub fn train_detector(rows: &[LabeledRow], cfg: &DetectorConfig, seed: u64) -> Result<(DetectorModel, DetectorReport)> {
    let slot = rows
        .first()
        .and_then(|r| r.target_slot)
        .ok_or_else(|| Error::Train("detector training needs rows labeled for a slot".into()))?;
    if rows.iter().any(|r| r.target_slot != Some(slot)) {
        return Err(Error::Train("rows are labeled for more than one slot".into()));
    }
    if !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
        return Err(Error::Config("validation fraction must lie in (0, 1)".into()));
    }
    let mut features = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for r in rows {
        features.push(detector_features(&r.features, slot)?);
        labels.push(match r.label {
            RowLabel::Anomalous => true,
            RowLabel::Normal => false,
            RowLabel::Class(_) => return Err(Error::Train("detector rows must carry binary labels".into())),
        });
    }
    let label_stats = LabelStats {
        n_normal: labels.iter().filter(|l| !**l).count(),
        n_anomalous: labels.iter().filter(|l| **l).count(),
    };
    if label_stats.n_normal == 0 || label_stats.n_anomalous == 0 {
        return Err(Error::Train(format!(
            "detector for {} needs both classes, got {} normal / {} anomalous",
            slot_name(slot),
            label_stats.n_normal,
            label_stats.n_anomalous
        )));
    }
    let (train, val) = stratified_split(&labels, cfg.validation_fraction, seed);
    if val.is_empty() {
        return Err(Error::Train("validation split is empty".into()));
    }
    let names = detector_feature_names(slot);
    let x: Vec<FeatureRow> = train.iter().map(|i| features[*i].clone()).collect();
    let y: Vec<usize> = train.iter().map(|i| usize::from(labels[*i])).collect();
    let model = match &cfg.learner {
        DetectorLearner::Tree(tc) => {
            let tc = TreeConfig { n_classes: Some(2), ..tc.clone() };
            Classifier::Tree(train_decision_tree(&x, &y, &names, &tc, seed)?)
        }
        DetectorLearner::Forest(fc) => {
            let fc = ForestConfig { n_classes: Some(2), ..fc.clone() };
            Classifier::Forest(train_random_forest(&x, &y, &names, &fc, seed)?)
        }
    };
    let val_probs =
        val.iter().map(|i| model.predict_proba(&features[*i]).map(|p| p[1])).collect::<Result<Vec<f64>>>()?;
    let val_labels: Vec<bool> = val.iter().map(|i| labels[*i]).collect();
    let (threshold, _) = select_threshold_with_f1(&val_probs, &val_labels)?;
    let flags: Vec<bool> = val_probs.iter().map(|p| *p >= threshold).collect();
    let (precision, recall, f1) = confusion(&flags, &val_labels);
    let auc = pr_auc(&val_probs, &val_labels);
    let prevalence = val_labels.iter().filter(|l| **l).count() as f64 / val_labels.len() as f64;
    let distinct = val_probs.iter().any(|p| *p != val_probs[0]);
    let report = DetectorReport {
        anchor: slot_name(slot).to_string(),
        n_train: train.len(),
        n_validation: val.len(),
        label_stats,
        threshold,
        precision,
        recall,
        f1,
        pr_auc: auc,
        degenerate: !distinct || auc < prevalence,
    };
    let detector = DetectorModel {
        anchor_slot: slot,
        model,
        threshold,
        feature_schema: names,
        trained_at: DateTime::UNIX_EPOCH,
        label_stats,
    };
    Ok((detector, report))
}

/// Detectors keyed by anchor slot. Slots without a detector are never
/// flagged.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectorRegistry {
    detectors: BTreeMap<usize, DetectorModel>,
}

impl DetectorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, detector: DetectorModel) -> Result<Option<DetectorModel>> {
        detector.check_schema()?;
        Ok(self.detectors.insert(detector.anchor_slot, detector))
    }

    pub fn remove(&mut self, slot: usize) -> Option<DetectorModel> {
        self.detectors.remove(&slot)
    }

    pub fn get(&self, slot: usize) -> Option<&DetectorModel> {
        self.detectors.get(&slot)
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.detectors.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DetectorModel> {
        self.detectors.values()
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }
}

/// Anomaly flag per anchor slot; absent anchors and slots without a
/// detector are never flagged.
pub fn detect(registry: &DetectorRegistry, bundle: &FeatureBundle) -> Result<[bool; ANCHOR_ARITY]> {
    let mut flags = [false; ANCHOR_ARITY];
    for d in registry.iter() {
        if bundle.markup.m[d.anchor_slot].is_some() {
            flags[d.anchor_slot] = d.probability(bundle)? >= d.threshold;
        }
    }
    Ok(flags)
}
