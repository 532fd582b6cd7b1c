//! Shared fixtures for the benchmarks.

use ceilguard_core::tree::FeatureRow;
use ceilguard_core::{generate, train_bundle, GeneratorConfig, ModelBundle, PipelineConfig, PriceEvent};

/// A bundle trained on `n` synthetic items plus a fresh event set.
pub fn trained(n: usize, seed: u64) -> (ModelBundle, Vec<PriceEvent>) {
    let (train, truth) = generate(&GeneratorConfig { n_items: n, seed, ..Default::default() }).expect("corpus");
    let (bundle, _) = train_bundle(&train, Some(&truth), &PipelineConfig::default(), seed).expect("training");
    let (events, _) =
        generate(&GeneratorConfig { n_items: 2_000, seed: seed + 1, ..Default::default() }).expect("events");
    (bundle, events)
}

/// Three noisy clusters in `d` dimensions, deterministic in `n`.
pub fn clusters(n: usize, d: usize) -> (Vec<FeatureRow>, Vec<usize>) {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let rows =
        (0..n).map(|i| (0..d).map(|j| Some((i % 3) as f64 * 1.5 + j as f64 * 0.1 + next() * 2.0)).collect()).collect();
    let labels = (0..n).map(|i| i % 3).collect();
    (rows, labels)
}
