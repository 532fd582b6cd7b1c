//! End-to-end training: standardization, weak labels, masked detector
//! training and the aggregator, assembled into a bundle.

use serde::{Deserialize, Serialize};

use crate::aggregator::{aggregator_training_rows, train_aggregator, AggregatorConfig, DEFAULT_CEILING_MULTIPLIER};
use crate::bundle::{ModelBundle, DEFAULT_PAC_THRESHOLD};
use crate::detector::{train_detector, DetectorConfig, DetectorRegistry, DetectorReport, MONITORED_SLOTS};
use crate::error::{Error, Result};
use crate::features::{event_ratios, fit_standardization, FeatureExtractor, DEFAULT_BANDWIDTH, DEFAULT_RATIO_OFFSET};
use crate::labeling::{
    build_training_set, default_lfs, observed_presence, LabelingFunction, LfReport, SparsityProfile, TrainingSet,
};
use crate::model::{PriceEvent, ANCHOR_ARITY};
use crate::stats::{mix_seed, quantile_sorted, sorted};
use crate::synth::GroundTruth;
use crate::tree::Classifier;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub ratio_offset: f64,
    pub bandwidth: f64,
    pub monitored_slots: Vec<usize>,
    pub detector: DetectorConfig,
    pub aggregator: AggregatorConfig,
    pub ceiling_multiplier: f64,
    pub pac_threshold: f64,
    /// Target sparsity for masking; the corpus-wide presence rates when
    /// absent.
    pub sparsity_profile: Option<SparsityProfile>,
    /// Fixed threshold for the competitor AUR-distance labeling function;
    /// tuned from the corpus when absent.
    pub aur_distance_threshold: Option<f64>,
    pub aur_distance_quantile: f64,
    pub rel_thresh: f64,
    pub band_mult: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ratio_offset: DEFAULT_RATIO_OFFSET,
            bandwidth: DEFAULT_BANDWIDTH,
            monitored_slots: MONITORED_SLOTS.to_vec(),
            detector: DetectorConfig::default(),
            aggregator: AggregatorConfig::default(),
            ceiling_multiplier: DEFAULT_CEILING_MULTIPLIER,
            pac_threshold: DEFAULT_PAC_THRESHOLD,
            sparsity_profile: None,
            aur_distance_threshold: None,
            aur_distance_quantile: 0.995,
            rel_thresh: 2.0,
            band_mult: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatorReport {
    pub n_rows: usize,
    pub class_counts: [usize; ANCHOR_ARITY],
    pub oob_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_events: usize,
    pub aur_distance_threshold: f64,
    pub sparsity_profile: SparsityProfile,
    pub labeling: Vec<LfReport>,
    pub detectors: Vec<DetectorReport>,
    pub aggregator: AggregatorReport,
    pub bundle_version: String,
}

/// Quantile of |competitor − AUR| over AUR-covered rows whose competitor
/// price is known to be normal (all covered rows without ground truth).
pub fn tune_aur_distance(events: &[PriceEvent], truth: Option<&[GroundTruth]>, q: f64) -> Result<f64> {
    let mut distances = Vec::new();
    for (i, e) in events.iter().enumerate() {
        if truth.is_some_and(|t| t[i].is_anomalous(0)) {
            continue;
        }
        if let (Some(c), Some(a)) = (e.anchors.get(0), e.aur) {
            distances.push((c - a).abs());
        }
    }
    let d = sorted(&distances);
    match quantile_sorted(&d, q) {
        Some(v) if v > 0.0 => Ok(v),
        _ => Err(Error::Pipeline("not enough AUR-covered competitor prices to tune the AUR-distance threshold".into())),
    }
}

pub fn labeling_functions(slot: usize, cfg: &PipelineConfig, aur_thresh: f64) -> Vec<LabelingFunction> {
    default_lfs(slot, aur_thresh)
        .into_iter()
        .map(|lf| match lf {
            LabelingFunction::RelativeDistance { slot, .. } => {
                LabelingFunction::RelativeDistance { slot, rel_thresh: cfg.rel_thresh }
            }
            LabelingFunction::HistoryBand { slot, .. } => {
                LabelingFunction::HistoryBand { slot, band_mult: cfg.band_mult }
            }
            other => other,
        })
        .collect()
}

/// Corpus-level state shared by every detector's labeling run.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub extractor: FeatureExtractor,
    pub aur_distance_threshold: f64,
    pub sparsity_profile: SparsityProfile,
}

pub fn prepare(events: &[PriceEvent], truth: Option<&[GroundTruth]>, cfg: &PipelineConfig) -> Result<Prepared> {
    if events.is_empty() {
        return Err(Error::Pipeline("no training events".into()));
    }
    if truth.is_some_and(|t| t.len() != events.len()) {
        return Err(Error::Pipeline("ground truth does not match the events".into()));
    }
    let ratios = events.iter().filter_map(|e| event_ratios(e, cfg.ratio_offset));
    let params = fit_standardization(ratios, &format!("{} events", events.len()))?;
    let extractor = FeatureExtractor::new(params, cfg.ratio_offset, cfg.bandwidth)?;
    let aur_distance_threshold = match cfg.aur_distance_threshold {
        Some(t) => t,
        None => tune_aur_distance(events, truth, cfg.aur_distance_quantile)?,
    };
    let sparsity_profile = cfg.sparsity_profile.clone().unwrap_or_else(|| SparsityProfile {
        presence_rate: observed_presence(events.iter().map(|e| &e.anchors)),
        joint_count_dist: None,
    });
    Ok(Prepared { extractor, aur_distance_threshold, sparsity_profile })
}

/// Weakly labeled, masked training rows for one detector.
pub fn label_slot(
    events: &[PriceEvent],
    slot: usize,
    prep: &Prepared,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<TrainingSet> {
    let lfs = labeling_functions(slot, cfg, prep.aur_distance_threshold);
    build_training_set(
        events,
        slot,
        &lfs,
        &prep.sparsity_profile,
        mix_seed(seed, 0x1abe1 + slot as u64),
        &prep.extractor,
    )
}

pub fn train_bundle(
    events: &[PriceEvent],
    truth: Option<&[GroundTruth]>,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(ModelBundle, TrainingReport)> {
    let prep = prepare(events, truth, cfg)?;
    let trained_at = events.iter().map(|e| e.timestamp).max().expect("nonempty");

    let mut registry = DetectorRegistry::new();
    let mut labeling = Vec::new();
    let mut reports = Vec::new();
    for &slot in &cfg.monitored_slots {
        let set = label_slot(events, slot, &prep, cfg, seed)?;
        let (mut detector, report) = train_detector(&set.rows, &cfg.detector, mix_seed(seed, 0xde7 + slot as u64))?;
        detector.trained_at = trained_at;
        registry.insert(detector)?;
        labeling.push(set.report);
        reports.push(report);
    }

    let aggregator = train_aggregator(events, &cfg.aggregator, seed)?;
    let (_, targets) = aggregator_training_rows(events, seed)?;
    let mut class_counts = [0; ANCHOR_ARITY];
    for t in &targets {
        class_counts[*t] += 1;
    }
    let oob_accuracy = match &aggregator.forest {
        Classifier::Forest(f) => f.oob_estimate(),
        Classifier::Tree(_) => None,
    };
    let bundle =
        ModelBundle::new(prep.extractor, registry, aggregator, cfg.pac_threshold, cfg.ceiling_multiplier, seed)?;
    let report = TrainingReport {
        n_events: events.len(),
        aur_distance_threshold: prep.aur_distance_threshold,
        sparsity_profile: prep.sparsity_profile,
        labeling,
        detectors: reports,
        aggregator: AggregatorReport { n_rows: targets.len(), class_counts, oob_accuracy },
        bundle_version: bundle.version().to_string(),
    };
    Ok((bundle, report))
}
