//! Seeded synthetic marketplace: catalog, anchors with slot-specific bias
//! and noise, offers, sparse AUR, price histories and injected anomalies.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::SparsityProfile;
use crate::model::{serialize_event, AnchorVector, HistoryPoint, PriceEvent, ANCHOR_ARITY};
use crate::stats::mix_seed;

const AUR_SIGMA: f64 = 0.03;
const HISTORY_DAYS: i64 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    DigitShift10x,
    DigitShift100x,
    UniformFactor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyKindWeights {
    pub digit_shift_10x: f64,
    pub digit_shift_100x: f64,
    pub uniform_factor: f64,
}

impl Default for AnomalyKindWeights {
    fn default() -> Self {
        Self { digit_shift_10x: 0.5, digit_shift_100x: 0.2, uniform_factor: 0.3 }
    }
}

impl AnomalyKindWeights {
    fn draw(&self, rng: &mut ChaCha8Rng) -> AnomalyKind {
        let total = self.digit_shift_10x + self.digit_shift_100x + self.uniform_factor;
        let u = rng.random::<f64>() * total;
        if u < self.digit_shift_10x {
            AnomalyKind::DigitShift10x
        } else if u < self.digit_shift_10x + self.digit_shift_100x {
            AnomalyKind::DigitShift100x
        } else {
            AnomalyKind::UniformFactor
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_items: usize,
    pub n_categories: usize,
    /// Log-normal (mu, sigma) of the true price per category; generated
    /// from the seed when empty.
    pub true_price_lognormal: Vec<(f64, f64)>,
    pub anchor_bias: [f64; ANCHOR_ARITY],
    pub anchor_noise_sigma: [f64; ANCHOR_ARITY],
    pub presence_profile: SparsityProfile,
    pub anomaly_rate: [f64; ANCHOR_ARITY],
    pub anomaly_kinds: AnomalyKindWeights,
    pub aur_coverage: f64,
    /// Most reliable anchor slot per category index (cycled when shorter
    /// than the category count). That slot's noise is scaled by
    /// `reliable_noise_factor`.
    pub category_reliability_rule: Vec<usize>,
    pub reliable_noise_factor: f64,
    /// Probability that an item has any competing offers.
    pub offer_presence: f64,
    pub max_offers: usize,
    pub offer_noise_sigma: f64,
    pub max_history: usize,
    pub history_noise_sigma: f64,
    /// Daily drift scale of the history series.
    pub history_drift_sigma: f64,
    /// Probability that a single history point is corrupted upward.
    pub history_contamination_rate: f64,
    /// Probability that the incoming offer of an event is egregiously high.
    pub offer_anomaly_rate: f64,
    pub start_time: DateTime<Utc>,
    /// Virtual duration the event stream spans.
    pub span_seconds: i64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_items: 100_000,
            n_categories: 20,
            true_price_lognormal: Vec::new(),
            anchor_bias: [1.0, 1.3, 1.03, 1.0, 1.0],
            anchor_noise_sigma: [0.08, 0.06, 0.1, 0.06, 0.09],
            presence_profile: SparsityProfile { presence_rate: [0.7, 0.8, 0.45, 0.55, 0.65], joint_count_dist: None },
            anomaly_rate: [0.01, 0.0, 0.0, 0.01, 0.01],
            anomaly_kinds: AnomalyKindWeights::default(),
            aur_coverage: 0.08,
            category_reliability_rule: vec![0, 2, 3, 4],
            reliable_noise_factor: 0.25,
            offer_presence: 0.9,
            max_offers: 8,
            offer_noise_sigma: 0.1,
            max_history: 12,
            history_noise_sigma: 0.02,
            history_drift_sigma: 0.005,
            history_contamination_rate: 0.02,
            offer_anomaly_rate: 0.01,
            start_time: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            span_seconds: 86_400,
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_items == 0 || self.n_categories == 0 {
            return bad("n_items and n_categories must be positive");
        }
        if !self.true_price_lognormal.is_empty() && self.true_price_lognormal.len() != self.n_categories {
            return bad("true_price_lognormal needs one entry per category");
        }
        if self.true_price_lognormal.iter().any(|(m, s)| !m.is_finite() || !(*s >= 0.0)) {
            return bad("invalid log-normal parameters");
        }
        if self.anchor_bias.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return bad("anchor biases must be positive");
        }
        if self.anchor_noise_sigma.iter().any(|s| !(*s >= 0.0)) {
            return bad("anchor noise must be nonnegative");
        }
        self.presence_profile.validate()?;
        let unit = |r: &f64| (0.0..=1.0).contains(r);
        if !self.anomaly_rate.iter().all(unit)
            || !unit(&self.offer_presence)
            || !unit(&self.history_contamination_rate)
            || !unit(&self.offer_anomaly_rate)
        {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.aur_coverage > 0.0 && self.aur_coverage <= 0.1) {
            return bad("aur_coverage must lie in (0, 0.1]");
        }
        let k = &self.anomaly_kinds;
        if [k.digit_shift_10x, k.digit_shift_100x, k.uniform_factor].iter().any(|w| !(*w >= 0.0))
            || k.digit_shift_10x + k.digit_shift_100x + k.uniform_factor <= 0.0
        {
            return bad("anomaly kind weights must be nonnegative and not all zero");
        }
        if self.category_reliability_rule.iter().any(|s| *s >= ANCHOR_ARITY) {
            return bad("category reliability rule names an unknown slot");
        }
        if !(self.reliable_noise_factor >= 0.0) || self.max_offers == 0 || self.span_seconds <= 0 {
            return bad("invalid offer, noise or span settings");
        }
        if !(self.offer_noise_sigma >= 0.0 && self.history_noise_sigma >= 0.0 && self.history_drift_sigma >= 0.0) {
            return bad("noise scales must be nonnegative");
        }
        Ok(())
    }

    pub fn reliable_slot(&self, category: usize) -> Option<usize> {
        if self.category_reliability_rule.is_empty() {
            None
        } else {
            Some(self.category_reliability_rule[category % self.category_reliability_rule.len()])
        }
    }

    fn category_params(&self) -> Vec<(f64, f64)> {
        if !self.true_price_lognormal.is_empty() {
            return self.true_price_lognormal.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, 0xca7));
        (0..self.n_categories).map(|_| (rng.random_range(2.0..5.5), rng.random_range(0.3..0.7))).collect()
    }
}

/// Generator bookkeeping for one item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub item_id: String,
    pub true_price: f64,
    pub injected_anomalies: BTreeSet<(usize, AnomalyKind)>,
    pub aur_available: bool,
    pub reliable_slot: Option<usize>,
    /// The event's incoming offer was injected as egregiously high.
    pub offer_anomalous: bool,
}

impl GroundTruth {
    pub fn has_anomalous_anchor(&self) -> bool {
        !self.injected_anomalies.is_empty()
    }

    pub fn is_anomalous(&self, slot: usize) -> bool {
        self.injected_anomalies.iter().any(|(s, _)| *s == slot)
    }
}

fn cents(x: f64) -> f64 {
    ((x * 100.0).round() / 100.0).max(0.01)
}

fn cents_up(x: f64) -> f64 {
    ((x * 100.0).ceil() / 100.0).max(0.01)
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated nonnegative")
}

fn history_series(rng: &mut ChaCha8Rng, cfg: &GeneratorConfig, level: f64, ts: DateTime<Utc>) -> Vec<HistoryPoint> {
    let n = rng.random_range(0..=cfg.max_history);
    let window_ms = HISTORY_DAYS * 86_400_000;
    let mut offsets: Vec<i64> = (0..n).map(|_| rng.random_range(1..=window_ms)).collect();
    offsets.sort_unstable_by(|a, b| b.cmp(a));
    let drift = normal(cfg.history_drift_sigma);
    let noise = normal(cfg.history_noise_sigma);
    // A random walk ending at today's level, sampled at the chosen times.
    let slope = drift.sample(rng);
    offsets
        .into_iter()
        .map(|off| {
            let days = off as f64 / 86_400_000.0;
            let mut price = level * (slope * days + noise.sample(rng)).exp();
            if rng.random::<f64>() < cfg.history_contamination_rate {
                price *= rng.random_range(5.0..20.0);
            }
            HistoryPoint { ts: ts - Duration::milliseconds(off), price: cents(price) }
        })
        .collect()
}

/// Clean corpus and its ground truth; no anomalies are injected yet.
pub fn generate_catalog(cfg: &GeneratorConfig) -> Result<(Vec<PriceEvent>, Vec<GroundTruth>)> {
    cfg.validate()?;
    let params = cfg.category_params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let aur_items: BTreeSet<usize> = {
        let k = (cfg.aur_coverage * cfg.n_items as f64).floor() as usize;
        let mut r = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xa0a));
        sample(&mut r, cfg.n_items, k).into_iter().collect()
    };
    let step_ms = cfg.span_seconds as f64 * 1000.0 / cfg.n_items as f64;
    let width = cfg.n_items.to_string().len().max(6);
    let mut events = Vec::with_capacity(cfg.n_items);
    let mut truth = Vec::with_capacity(cfg.n_items);
    for i in 0..cfg.n_items {
        let category = rng.random_range(0..cfg.n_categories);
        let (mu, sigma) = params[category];
        let true_price = LogNormal::new(mu, sigma).expect("validated").sample(&mut rng);
        let reliable = cfg.reliable_slot(category);
        let ts = cfg.start_time + Duration::milliseconds((i as f64 * step_ms) as i64);

        let mut values = [None; ANCHOR_ARITY];
        let mut history: [Vec<HistoryPoint>; ANCHOR_ARITY] = Default::default();
        for slot in 0..ANCHOR_ARITY {
            let present = rng.random::<f64>() < cfg.presence_profile.presence_rate[slot];
            let mut sigma = cfg.anchor_noise_sigma[slot];
            if reliable == Some(slot) {
                sigma *= cfg.reliable_noise_factor;
            }
            let level = true_price * cfg.anchor_bias[slot] * normal(sigma).sample(&mut rng).exp();
            if present {
                values[slot] = Some(cents(level));
                history[slot] = history_series(&mut rng, cfg, level, ts);
            }
        }
        let offers = if rng.random::<f64>() < cfg.offer_presence {
            let n = rng.random_range(1..=cfg.max_offers);
            let noise = normal(cfg.offer_noise_sigma);
            (0..n).map(|_| cents(true_price * noise.sample(&mut rng).exp())).collect()
        } else {
            Vec::new()
        };
        let aur_noise = normal(AUR_SIGMA).sample(&mut rng);
        let aur_available = aur_items.contains(&i);
        let offer_price = cents(true_price * normal(cfg.offer_noise_sigma).sample(&mut rng).exp());
        let item_id = format!("item-{i:0width$}");
        events.push(PriceEvent {
            item_id: item_id.clone(),
            timestamp: ts,
            anchors: AnchorVector::new(values)?,
            offers,
            history,
            aur: aur_available.then(|| cents(true_price * aur_noise.exp())),
            category_id: format!("cat-{category:02}"),
            offer_price: Some(offer_price),
        });
        truth.push(GroundTruth {
            item_id,
            true_price,
            injected_anomalies: BTreeSet::new(),
            aur_available,
            reliable_slot: reliable,
            offer_anomalous: false,
        });
    }
    Ok((events, truth))
}

/// Multiplies present anchors by high-side error factors and marks some
/// incoming offers as egregious. Uses its own random stream, so zero rates
/// leave the corpus untouched.
pub fn inject_anomalies(events: &mut [PriceEvent], truth: &mut [GroundTruth], cfg: &GeneratorConfig) -> Result<()> {
    if events.len() != truth.len() {
        return Err(Error::Config("events and ground truth differ in length".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x1e3c7));
    for (event, gt) in events.iter_mut().zip(truth.iter_mut()) {
        for slot in 0..ANCHOR_ARITY {
            let u = rng.random::<f64>();
            let (kind, uniform) = (cfg.anomaly_kinds.draw(&mut rng), rng.random_range(5.0..=100.0));
            let Some(v) = event.anchors.get(slot) else { continue };
            if u >= cfg.anomaly_rate[slot] {
                continue;
            }
            let factor = match kind {
                AnomalyKind::DigitShift10x => 10.0,
                AnomalyKind::DigitShift100x => 100.0,
                AnomalyKind::UniformFactor => uniform,
            };
            event.anchors.set(slot, Some(cents_up(v * factor)))?;
            gt.injected_anomalies.insert((slot, kind));
        }
        let u = rng.random::<f64>();
        let factor = rng.random_range(2.0..10.0);
        if u < cfg.offer_anomaly_rate {
            if let Some(p) = event.offer_price {
                event.offer_price = Some(cents_up(p * factor));
                gt.offer_anomalous = true;
            }
        }
    }
    Ok(())
}

/// Catalog with anomalies injected.
pub fn generate(cfg: &GeneratorConfig) -> Result<(Vec<PriceEvent>, Vec<GroundTruth>)> {
    let (mut events, mut truth) = generate_catalog(cfg)?;
    inject_anomalies(&mut events, &mut truth, cfg)?;
    Ok((events, truth))
}

/// Writes events as JSON lines, paced at `rate` events per second when
/// `paced`, otherwise as fast as the sink accepts them. Returns the number
/// of lines written.
pub fn emit_event_stream<W: Write>(events: &[PriceEvent], rate: f64, paced: bool, out: &mut W) -> Result<usize> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Config(format!("stream rate must be positive, got {rate}")));
    }
    let start = Instant::now();
    for (i, e) in events.iter().enumerate() {
        if paced {
            let due = start + StdDuration::from_secs_f64(i as f64 / rate);
            let now = Instant::now();
            if due > now {
                out.flush()?;
                std::thread::sleep(due - now);
            }
        }
        out.write_all(serialize_event(e).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(events.len())
}

pub fn truth_to_line(t: &GroundTruth) -> String {
    serde_json::to_string(t).expect("ground truth serialization is infallible")
}

pub fn truth_from_line(line: &str) -> Result<GroundTruth> {
    serde_json::from_str(line).map_err(|e| Error::Parse(format!("malformed ground truth line: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GeneratorConfig {
        GeneratorConfig { n_items: 2000, ..Default::default() }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_config_gives_true_prices() {
        let cfg =
            GeneratorConfig { anchor_bias: [1.0; 5], anchor_noise_sigma: [0.0; 5], anomaly_rate: [0.0; 5], ..small() };
        let (events, truth) = generate(&cfg).unwrap();
        for (e, t) in events.iter().zip(&truth) {
            for (_, v) in e.anchors.present() {
                assert_eq!(v, cents(t.true_price));
            }
        }
    }

    #[test]
    fn zero_rate_injection_is_identity() {
        let cfg = GeneratorConfig { anomaly_rate: [0.0; 5], offer_anomaly_rate: 0.0, ..small() };
        let (events, truth) = generate_catalog(&cfg).unwrap();
        let (mut e2, mut t2) = (events.clone(), truth.clone());
        inject_anomalies(&mut e2, &mut t2, &cfg).unwrap();
        let bytes = |ev: &[PriceEvent]| ev.iter().map(serialize_event).collect::<Vec<_>>();
        assert_eq!(bytes(&events), bytes(&e2));
        assert_eq!(truth, t2);
    }

    #[test]
    fn aur_coverage_bounded() {
        let (events, _) = generate(&small()).unwrap();
        let covered = events.iter().filter(|e| e.aur.is_some()).count();
        assert_eq!(covered, 160);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = GeneratorConfig { aur_coverage: 0.2, ..small() };
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn batch_stream_line_count() {
        let (events, _) = generate(&GeneratorConfig { n_items: 50, ..Default::default() }).unwrap();
        let mut buf = Vec::new();
        assert_eq!(emit_event_stream(&events, 1.0, false, &mut buf).unwrap(), 50);
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 50);
    }
}
