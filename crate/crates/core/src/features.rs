//! Feature layer: markup ratios, their standardization, the per-item
//! Gaussian KDE density features, cleansed history statistics and
//! competing-offer statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{slot_name, AnchorVector, HistoryPoint, PriceEvent, ANCHOR_ARITY};
use crate::stats;

/// Kernel bandwidth for the density layer.
pub const DEFAULT_BANDWIDTH: f64 = 0.5;
/// Additive stabilizer inside the log-ratio.
pub const DEFAULT_RATIO_OFFSET: f64 = 1.0;
/// History series shorter than this are not IQR-trimmed.
pub const MIN_SERIES_FOR_IQR: usize = 8;
/// Fewer surviving history points than this marks the stats low-confidence.
pub const MIN_CONFIDENT_HISTORY: usize = 4;
/// Observations required per slot when fitting standardization.
pub const MIN_FIT_OBSERVATIONS: usize = 100;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub type SlotValues = [Option<f64>; ANCHOR_ARITY];

/// Log-ratio of every present anchor against the base price:
/// `ln((x_i + c) / (x_0 + c))`.
pub fn markup_ratios(anchors: &AnchorVector, base: f64, c: f64) -> SlotValues {
    let denom = base + c;
    anchors.values().map(|v| v.map(|x| ((x + c) / denom).ln()))
}

/// Base price: median of the competing offers, falling back to the median
/// of the present anchors when there are none. The flag reports the
/// fallback.
pub fn base_price(offers: &[f64], anchors: &AnchorVector) -> Option<(f64, bool)> {
    if let Some(m) = stats::median(offers) {
        return Some((m, false));
    }
    let present: Vec<f64> = anchors.present().map(|(_, v)| v).collect();
    stats::median(&present).map(|m| (m, true))
}

/// Per-slot location and scale of the log-ratios, learned on a training
/// corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: [f64; ANCHOR_ARITY],
    pub stds: [f64; ANCHOR_ARITY],
    pub fitted_on: String,
}

impl StandardizationParams {
    pub fn validate(&self) -> Result<()> {
        for (slot, s) in self.stds.iter().enumerate() {
            if !(s.is_finite() && *s > 0.0) {
                return Err(Error::ModelBundle(format!(
                    "standardization std for {} must be positive, got {s}",
                    slot_name(slot)
                )));
            }
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::ModelBundle("standardization means must be finite".into()));
        }
        Ok(())
    }

    /// Identity transform; handy in tests.
    pub fn identity() -> Self {
        Self { means: [0.0; ANCHOR_ARITY], stds: [1.0; ANCHOR_ARITY], fitted_on: "identity".into() }
    }
}

pub fn standardize(r: &SlotValues, params: &StandardizationParams) -> SlotValues {
    let mut out = [None; ANCHOR_ARITY];
    for i in 0..ANCHOR_ARITY {
        out[i] = r[i].map(|v| (v - params.means[i]) / params.stds[i]);
    }
    out
}

/// Sample mean and sample standard deviation per slot over present values.
pub fn fit_standardization<I>(corpus: I, fitted_on: &str) -> Result<StandardizationParams>
where
    I: IntoIterator<Item = SlotValues>,
{
    let mut columns: [Vec<f64>; ANCHOR_ARITY] = Default::default();
    for row in corpus {
        for (slot, v) in row.iter().enumerate() {
            if let Some(v) = v {
                columns[slot].push(*v);
            }
        }
    }
    let mut means = [0.0; ANCHOR_ARITY];
    let mut stds = [0.0; ANCHOR_ARITY];
    for (slot, col) in columns.iter().enumerate() {
        if col.len() < MIN_FIT_OBSERVATIONS {
            return Err(Error::Fit(format!(
                "slot {} has {} observations, need at least {MIN_FIT_OBSERVATIONS}",
                slot_name(slot),
                col.len()
            )));
        }
        let (m, s) = slot_moments(col).map_err(|e| Error::Fit(format!("slot {}: {e}", slot_name(slot))))?;
        means[slot] = m;
        stds[slot] = s;
    }
    Ok(StandardizationParams { means, stds, fitted_on: fitted_on.to_string() })
}

/// Sample mean and sample (n - 1) standard deviation of one slot's values.
/// Fails on fewer than two values or zero spread.
pub fn slot_moments(values: &[f64]) -> Result<(f64, f64)> {
    let s = stats::sample_std(values).ok_or_else(|| Error::Fit("need at least two observations".into()))?;
    if !(s > 0.0) {
        return Err(Error::Fit("degenerate (zero) variance".into()));
    }
    Ok((stats::mean(values).expect("nonempty"), s))
}

/// Gaussian kernel density estimate at `query`:
/// `(1 / (k h)) * sum_i phi((query - x_i) / h)`.
pub fn kde_density(samples: &[f64], query: f64, h: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Config(format!("kernel bandwidth must be positive, got {h}")));
    }
    if samples.is_empty() {
        return Err(Error::Feature("kernel density needs at least one sample".into()));
    }
    let sum: f64 = samples
        .iter()
        .map(|x| {
            let u = (query - x) / h;
            (-0.5 * u * u).exp()
        })
        .sum();
    Ok(FRAC_1_SQRT_2PI * sum / (samples.len() as f64 * h))
}

/// Standardized markups with the raw log-ratios they came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkupVector {
    pub r: SlotValues,
    pub m: SlotValues,
}

/// Density of each present markup within the item's own markup sample,
/// always paired with the anchor count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityFeatures {
    pub density: SlotValues,
    pub anchor_count: usize,
}

/// Self-inclusive KDE score for every present markup.
pub fn density_features(m: &SlotValues, h: f64) -> Result<DensityFeatures> {
    let samples: Vec<f64> = m.iter().flatten().copied().collect();
    if samples.is_empty() {
        return Err(Error::Feature("no present anchors to build density features".into()));
    }
    let mut density = [None; ANCHOR_ARITY];
    for (slot, v) in m.iter().enumerate() {
        if let Some(v) = v {
            density[slot] = Some(kde_density(&samples, *v, h)?);
        }
    }
    Ok(DensityFeatures { density, anchor_count: samples.len() })
}

/// Outlier-cleansed statistics of one anchor's price history.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotHistory {
    pub cleansed_min: Option<f64>,
    pub cleansed_median: Option<f64>,
    pub cleansed_max: Option<f64>,
    pub cleansed_std: Option<f64>,
    pub n_used: usize,
    pub n_dropped: usize,
    pub low_confidence: bool,
}

/// Surviving prices after the cleansing rules, in input order.
pub fn cleanse_history(prices: &[f64]) -> Vec<f64> {
    let positive: Vec<f64> = prices.iter().copied().filter(|p| p.is_finite() && *p > 0.0).collect();
    if positive.len() < MIN_SERIES_FOR_IQR {
        return positive;
    }
    let sorted = stats::sorted(&positive);
    let q1 = stats::quantile_sorted(&sorted, 0.25).expect("nonempty");
    let q3 = stats::quantile_sorted(&sorted, 0.75).expect("nonempty");
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    positive.into_iter().filter(|p| *p >= lo && *p <= hi).collect()
}

pub fn history_stats(series: &[HistoryPoint]) -> SlotHistory {
    let prices: Vec<f64> = series.iter().map(|p| p.price).collect();
    history_stats_from_prices(&prices)
}

pub fn history_stats_from_prices(prices: &[f64]) -> SlotHistory {
    let kept = cleanse_history(prices);
    let sorted = stats::sorted(&kept);
    SlotHistory {
        cleansed_min: sorted.first().copied(),
        cleansed_median: stats::median(&kept),
        cleansed_max: sorted.last().copied(),
        cleansed_std: stats::population_std(&kept),
        n_used: kept.len(),
        n_dropped: prices.len() - kept.len(),
        low_confidence: kept.len() < MIN_CONFIDENT_HISTORY,
    }
}

/// Statistics over the competing-offer array. Everything but the count is
/// absent when there are no offers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OfferStats {
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub range: Option<f64>,
    pub cv: Option<f64>,
    pub count: usize,
}

pub fn offer_stats(offers: &[f64]) -> OfferStats {
    if offers.is_empty() {
        return OfferStats::default();
    }
    let mean = stats::mean(offers).expect("nonempty");
    let std = stats::population_std(offers).expect("nonempty");
    let min = offers.iter().copied().fold(f64::INFINITY, f64::min);
    let max = offers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    OfferStats {
        mean: Some(mean),
        min: Some(min),
        max: Some(max),
        range: Some(max - min),
        cv: Some(std / mean),
        count: offers.len(),
    }
}

/// All derived features for one event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub base_price: f64,
    pub base_fallback: bool,
    pub markup: MarkupVector,
    pub density: DensityFeatures,
    pub history: [SlotHistory; ANCHOR_ARITY],
    pub offers: OfferStats,
}

/// Feature computation with its fitted parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub params: StandardizationParams,
    pub ratio_offset: f64,
    pub bandwidth: f64,
}

impl FeatureExtractor {
    pub fn new(params: StandardizationParams, ratio_offset: f64, bandwidth: f64) -> Result<Self> {
        params.validate()?;
        if !(ratio_offset.is_finite() && ratio_offset >= 0.0) {
            return Err(Error::Config(format!("ratio offset must be >= 0, got {ratio_offset}")));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {bandwidth}")));
        }
        Ok(Self { params, ratio_offset, bandwidth })
    }

    pub fn extract(&self, event: &PriceEvent) -> Result<FeatureBundle> {
        let history = std::array::from_fn(|slot| history_stats(&event.history[slot]));
        let (base, fallback) = base_price(&event.offers, &event.anchors)
            .ok_or_else(|| Error::Feature(format!("item {} has no anchors", event.item_id)))?;
        self.assemble(&event.anchors, base, fallback, history, offer_stats(&event.offers))
    }

    /// Recomputes the anchor-dependent features (markups, densities and a
    /// fallback base) for a modified anchor vector, keeping the history and
    /// offer statistics of `bundle`.
    pub fn rebuild(&self, bundle: &FeatureBundle, anchors: &AnchorVector) -> Result<FeatureBundle> {
        let (base, fallback) = if bundle.base_fallback {
            base_price(&[], anchors).ok_or_else(|| Error::Feature("masked row has no anchors".into()))?
        } else {
            (bundle.base_price, false)
        };
        self.assemble(anchors, base, fallback, bundle.history.clone(), bundle.offers.clone())
    }

    fn assemble(
        &self,
        anchors: &AnchorVector,
        base: f64,
        base_fallback: bool,
        history: [SlotHistory; ANCHOR_ARITY],
        offers: OfferStats,
    ) -> Result<FeatureBundle> {
        let r = markup_ratios(anchors, base, self.ratio_offset);
        let m = standardize(&r, &self.params);
        let density = density_features(&m, self.bandwidth)?;
        Ok(FeatureBundle { base_price: base, base_fallback, markup: MarkupVector { r, m }, density, history, offers })
    }
}

/// Raw log-ratios for an event, used to fit the standardization.
pub fn event_ratios(event: &PriceEvent, ratio_offset: f64) -> Option<SlotValues> {
    let (base, _) = base_price(&event.offers, &event.anchors)?;
    Some(markup_ratios(&event.anchors, base, ratio_offset))
}
