//! Model bundle: the persisted set of standardization parameters,
//! detectors, aggregator and scoring constants, plus the scoring entry
//! point that orchestrates the three layers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregator::{
    aggregator_features, ceiling_price, optimal_anchor, uniform_weights, weight_anchors, AggregatorModel, Weighting,
};
use crate::detector::{detect, DetectorModel, DetectorRegistry};
use crate::error::{Error, Result};
use crate::features::{FeatureBundle, FeatureExtractor, StandardizationParams};
use crate::model::{slot_name, PriceEvent, ScoreResult, ScoreStatus, ANCHOR_ARITY, ANCHOR_NAMES};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const AGGREGATOR_FILE: &str = "aggregator.json";
pub const KERNEL: &str = "gaussian";
pub const DEFAULT_PAC_THRESHOLD: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub engine_version: String,
    pub anchor_names: Vec<String>,
    pub standardization: StandardizationParams,
    pub kernel: String,
    pub bandwidth: f64,
    pub ratio_offset: f64,
    pub pac_threshold: f64,
    pub ceiling_multiplier: f64,
    /// Detector threshold per monitored anchor name.
    pub thresholds: BTreeMap<String, f64>,
    pub seed: u64,
    /// SHA-256 of every model file, keyed by path relative to the bundle.
    pub checksums: BTreeMap<String, String>,
}

/// Everything `score` needs, loaded and verified.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub extractor: FeatureExtractor,
    pub detectors: DetectorRegistry,
    pub aggregator: AggregatorModel,
    pub pac_threshold: f64,
    pub ceiling_multiplier: f64,
    pub seed: u64,
    version: String,
}

pub fn detector_file(slot: usize) -> String {
    format!("detectors/{}.json", slot_name(slot))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// How the layers are combined; the full system uses both.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layers {
    pub detectors: bool,
    pub aggregator: bool,
}

impl Layers {
    pub const FULL: Layers = Layers { detectors: true, aggregator: true };
}

impl ModelBundle {
    pub fn new(
        extractor: FeatureExtractor,
        detectors: DetectorRegistry,
        aggregator: AggregatorModel,
        pac_threshold: f64,
        ceiling_multiplier: f64,
        seed: u64,
    ) -> Result<Self> {
        ceiling_price(1.0, ceiling_multiplier)?;
        if !(pac_threshold > 0.0 && pac_threshold.is_finite()) {
            return Err(Error::Config(format!("PAC threshold must be positive, got {pac_threshold}")));
        }
        aggregator.check_schema()?;
        let mut bundle =
            Self { extractor, detectors, aggregator, pac_threshold, ceiling_multiplier, seed, version: String::new() };
        bundle.version = bundle.manifest().1;
        Ok(bundle)
    }

    /// Content hash identifying this bundle.
    pub fn version(&self) -> &str {
        &self.version
    }

    fn files(&self) -> BTreeMap<String, Vec<u8>> {
        let mut files = BTreeMap::new();
        for d in self.detectors.iter() {
            files.insert(detector_file(d.anchor_slot), d.to_bytes());
        }
        files.insert(AGGREGATOR_FILE.to_string(), self.aggregator.to_bytes());
        files
    }

    fn manifest_for(&self, files: &BTreeMap<String, Vec<u8>>) -> Manifest {
        Manifest {
            schema_version: BUNDLE_SCHEMA_VERSION,
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            anchor_names: ANCHOR_NAMES.iter().map(|s| s.to_string()).collect(),
            standardization: self.extractor.params.clone(),
            kernel: KERNEL.to_string(),
            bandwidth: self.extractor.bandwidth,
            ratio_offset: self.extractor.ratio_offset,
            pac_threshold: self.pac_threshold,
            ceiling_multiplier: self.ceiling_multiplier,
            thresholds: self.detectors.iter().map(|d| (slot_name(d.anchor_slot).to_string(), d.threshold)).collect(),
            seed: self.seed,
            checksums: files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        }
    }

    /// The manifest and the bundle version derived from its bytes.
    pub fn manifest(&self) -> (Manifest, String) {
        let manifest = self.manifest_for(&self.files());
        let bytes = serde_json::to_vec(&manifest).expect("manifest serialization is infallible");
        let version = sha256_hex(&bytes)[..16].to_string();
        (manifest, version)
    }

    /// Runs the layers selected by `layers` and returns the result with
    /// the feature bundle it was computed from.
    pub fn score_with_layers(
        &self,
        event: &PriceEvent,
        layers: Layers,
    ) -> Result<(ScoreResult, Option<FeatureBundle>)> {
        if event.anchors.count() == 0 {
            return Ok((ScoreResult::no_anchors(), None));
        }
        let features = self.extractor.extract(event)?;
        let flags = if layers.detectors {
            detect(&self.detectors, &features).map_err(|e| attribute("detector", e))?
        } else {
            [false; ANCHOR_ARITY]
        };
        let weighting = if layers.aggregator {
            let row = aggregator_features(event, &features);
            weight_anchors(&self.aggregator, &row, &event.anchors, &flags).map_err(|e| attribute("aggregator", e))?
        } else {
            uniform_weights(&event.anchors, &flags)
        };
        let anomaly_flags = (0..ANCHOR_ARITY).map(|s| (slot_name(s).to_string(), flags[s])).collect();
        let mut weights: BTreeMap<String, f64> = ANCHOR_NAMES.iter().map(|n| (n.to_string(), 0.0)).collect();
        let result = match weighting {
            Weighting::NoReliableAnchor => ScoreResult {
                optimal_anchor: None,
                weights,
                anomaly_flags,
                ceiling_price: None,
                status: ScoreStatus::NoReliableAnchor,
            },
            Weighting::Weighted(w) => {
                for wa in &w {
                    weights.insert(slot_name(wa.slot).to_string(), wa.weight);
                }
                let optimal = optimal_anchor(&w)?;
                ScoreResult {
                    optimal_anchor: Some(optimal),
                    weights,
                    anomaly_flags,
                    ceiling_price: Some(ceiling_price(optimal, self.ceiling_multiplier)?),
                    status: ScoreStatus::Ok,
                }
            }
        };
        Ok((result, Some(features)))
    }

    pub fn score(&self, event: &PriceEvent) -> Result<ScoreResult> {
        self.score_with_layers(event, Layers::FULL).map(|(r, _)| r)
    }
}

fn attribute(layer: &str, e: Error) -> Error {
    match e {
        Error::Schema(m) => Error::Schema(format!("{layer} layer: {m}")),
        other => other,
    }
}

/// Orchestrates feature, detector and aggregator layers for one event.
pub fn score(event: &PriceEvent, bundle: &ModelBundle) -> Result<ScoreResult> {
    bundle.score(event)
}

/// Writes the bundle: model files first, the manifest last.
pub fn save_bundle(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("detectors"))?;
    let files = bundle.files();
    for (rel, bytes) in &files {
        fs::write(dir.join(rel), bytes)?;
    }
    let manifest = bundle.manifest_for(&files);
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serialization is infallible");
    fs::write(dir.join(MANIFEST_FILE), bytes)?;
    Ok(())
}

fn read_verified(dir: &Path, rel: &str, manifest: &Manifest) -> Result<Vec<u8>> {
    let expected =
        manifest.checksums.get(rel).ok_or_else(|| Error::ModelBundle(format!("{rel}: not listed in the manifest")))?;
    let bytes = fs::read(dir.join(rel)).map_err(|e| Error::ModelBundle(format!("{rel}: {e}")))?;
    if &sha256_hex(&bytes) != expected {
        return Err(Error::ModelBundle(format!("{rel}: checksum mismatch")));
    }
    Ok(bytes)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let bytes = fs::read(dir.join(MANIFEST_FILE)).map_err(|e| Error::ModelBundle(format!("{MANIFEST_FILE}: {e}")))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::ModelBundle(format!("{MANIFEST_FILE}: {e}")))
}

/// Loads and verifies a bundle; partial or tampered bundles are rejected.
pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let manifest = read_manifest(dir)?;
    if manifest.schema_version > BUNDLE_SCHEMA_VERSION {
        return Err(Error::ModelBundle(format!(
            "bundle schema version {} is ahead of this engine ({BUNDLE_SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    if manifest.schema_version == 0 {
        return Err(Error::ModelBundle("bundle schema version 0 is not supported".into()));
    }
    if manifest.anchor_names != ANCHOR_NAMES {
        return Err(Error::ModelBundle("bundle anchor names do not match this engine".into()));
    }
    if manifest.kernel != KERNEL {
        return Err(Error::ModelBundle(format!("unsupported kernel `{}`", manifest.kernel)));
    }
    let extractor = FeatureExtractor::new(manifest.standardization.clone(), manifest.ratio_offset, manifest.bandwidth)
        .map_err(|e| Error::ModelBundle(e.to_string()))?;
    let mut detectors = DetectorRegistry::new();
    for (name, threshold) in &manifest.thresholds {
        let slot = crate::model::slot_of(name)
            .ok_or_else(|| Error::ModelBundle(format!("unknown detector anchor `{name}`")))?;
        let rel = detector_file(slot);
        let d = DetectorModel::from_bytes(&read_verified(dir, &rel, &manifest)?)
            .map_err(|e| Error::ModelBundle(format!("{rel}: {e}")))?;
        if d.anchor_slot != slot || d.threshold != *threshold {
            return Err(Error::ModelBundle(format!("{rel}: does not match the manifest")));
        }
        detectors.insert(d).map_err(|e| Error::ModelBundle(format!("{rel}: {e}")))?;
    }
    let aggregator = AggregatorModel::from_bytes(&read_verified(dir, AGGREGATOR_FILE, &manifest)?)
        .map_err(|e| Error::ModelBundle(format!("{AGGREGATOR_FILE}: {e}")))?;
    let expected_files = detectors.len() + 1;
    if manifest.checksums.len() != expected_files {
        return Err(Error::ModelBundle("manifest lists files that are not part of the bundle".into()));
    }
    let bundle = ModelBundle::new(
        extractor,
        detectors,
        aggregator,
        manifest.pac_threshold,
        manifest.ceiling_multiplier,
        manifest.seed,
    )
    .map_err(|e| Error::ModelBundle(e.to_string()))?;
    Ok(bundle)
}
