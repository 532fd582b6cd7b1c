//! Real-time price-anomaly guardrail engine.
//!
//! Anchor prices for an item are turned into standardized markups and
//! per-item kernel density scores, screened by one decision-tree detector
//! per monitored anchor, and the surviving anchors are combined by
//! classifier-probability weights into an optimal anchor and a ceiling
//! price.

// NaN must fail every range check, which `!(x > 0.0)` expresses directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregator;
pub mod audit;
pub mod bundle;
pub mod detector;
pub mod error;
pub mod eval;
pub mod features;
pub mod labeling;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod tree;

pub use bundle::{load_bundle, save_bundle, score, ModelBundle};
pub use error::{Error, Result};
pub use features::{FeatureBundle, FeatureExtractor, StandardizationParams};
pub use model::{
    parse_event, serialize_event, validate_scoreable, AnchorVector, PriceEvent, ScoreResult, ScoreStatus, ANCHOR_ARITY,
    ANCHOR_NAMES,
};
pub use pipeline::{train_bundle, PipelineConfig, TrainingReport};
pub use synth::{generate, GeneratorConfig, GroundTruth};
