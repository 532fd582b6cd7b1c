//! Weak supervision for the detectors: heuristic labeling functions, an
//! OR-over-anomalous resolution policy, and random anchor masking that
//! brings training sparsity in line with production.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{history_stats, FeatureBundle, FeatureExtractor};
use crate::model::{slot_name, AnchorVector, PriceEvent, ANCHOR_ARITY};

/// Redraws allowed before the one-anchor floor falls back to a fixed pick.
pub const MASK_RETRIES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Anomalous,
    Normal,
    Abstain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfOutput {
    pub verdict: Verdict,
    pub lf_name: String,
}

/// Competitor price too far (absolute distance) from AUR.
pub fn lf_high_distance_from_aur(row: &PriceEvent, thresh: f64) -> Verdict {
    match (row.anchors.get(0), row.aur) {
        (Some(cmp), Some(aur)) if (cmp - aur).abs() > thresh => Verdict::Anomalous,
        (Some(_), Some(_)) => Verdict::Normal,
        _ => Verdict::Abstain,
    }
}

/// Anchor too far from AUR relative to AUR.
pub fn lf_relative_distance(row: &PriceEvent, slot: usize, rel_thresh: f64) -> Verdict {
    match (row.anchors.get(slot), row.aur) {
        (Some(x), Some(aur)) if (x - aur).abs() / aur > rel_thresh => Verdict::Anomalous,
        (Some(_), Some(_)) => Verdict::Normal,
        _ => Verdict::Abstain,
    }
}

/// Anchor above `band_mult` times its own cleansed historical maximum.
pub fn lf_history_band(row: &PriceEvent, slot: usize, band_mult: f64) -> Verdict {
    let Some(x) = row.anchors.get(slot) else {
        return Verdict::Abstain;
    };
    let h = history_stats(&row.history[slot]);
    match h.cleansed_max {
        Some(max) if !h.low_confidence => {
            if x > band_mult * max {
                Verdict::Anomalous
            } else {
                Verdict::Normal
            }
        }
        _ => Verdict::Abstain,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelingFunction {
    HighDistanceFromAur { thresh: f64 },
    RelativeDistance { slot: usize, rel_thresh: f64 },
    HistoryBand { slot: usize, band_mult: f64 },
}

impl LabelingFunction {
    pub fn name(&self) -> String {
        match self {
            LabelingFunction::HighDistanceFromAur { .. } => "high_distance_from_aur".into(),
            LabelingFunction::RelativeDistance { slot, .. } => format!("relative_distance:{}", slot_name(*slot)),
            LabelingFunction::HistoryBand { slot, .. } => format!("history_band:{}", slot_name(*slot)),
        }
    }

    /// Anchor slot whose label this function votes on.
    pub fn target_slot(&self) -> usize {
        match self {
            LabelingFunction::HighDistanceFromAur { .. } => 0,
            LabelingFunction::RelativeDistance { slot, .. } | LabelingFunction::HistoryBand { slot, .. } => *slot,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LabelingFunction::HighDistanceFromAur { thresh } => *thresh > 0.0,
            LabelingFunction::RelativeDistance { slot, rel_thresh } => *slot < ANCHOR_ARITY && *rel_thresh > 0.0,
            LabelingFunction::HistoryBand { slot, band_mult } => *slot < ANCHOR_ARITY && *band_mult > 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid labeling function parameters: {self:?}")))
        }
    }

    pub fn apply(&self, row: &PriceEvent) -> LfOutput {
        let verdict = match self {
            LabelingFunction::HighDistanceFromAur { thresh } => lf_high_distance_from_aur(row, *thresh),
            LabelingFunction::RelativeDistance { slot, rel_thresh } => lf_relative_distance(row, *slot, *rel_thresh),
            LabelingFunction::HistoryBand { slot, band_mult } => lf_history_band(row, *slot, *band_mult),
        };
        LfOutput { verdict, lf_name: self.name() }
    }
}

/// Default labeling functions for one monitored slot.
pub fn default_lfs(slot: usize, aur_thresh: f64) -> Vec<LabelingFunction> {
    let mut lfs = Vec::new();
    if slot == 0 {
        lfs.push(LabelingFunction::HighDistanceFromAur { thresh: aur_thresh });
    }
    lfs.push(LabelingFunction::RelativeDistance { slot, rel_thresh: 2.0 });
    lfs.push(LabelingFunction::HistoryBand { slot, band_mult: 3.0 });
    lfs
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Anomalous,
    Normal,
    Unlabeled,
}

/// Any anomalous vote wins; otherwise any normal vote; otherwise unlabeled.
pub fn resolve_labels(outputs: &[LfOutput]) -> Resolution {
    if outputs.iter().any(|o| o.verdict == Verdict::Anomalous) {
        Resolution::Anomalous
    } else if outputs.iter().any(|o| o.verdict == Verdict::Normal) {
        Resolution::Normal
    } else {
        Resolution::Unlabeled
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowLabel {
    Normal,
    Anomalous,
    /// Aggregator target: index of the anchor slot closest to AUR.
    Class(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    LabelingFunction,
    Derived,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub item_id: String,
    /// Anchors after masking; `features` is always consistent with them.
    pub anchors: AnchorVector,
    pub features: FeatureBundle,
    pub label: RowLabel,
    pub label_source: LabelSource,
    /// Detector slot the row was labeled for; never masked.
    pub target_slot: Option<usize>,
}

/// Target anchor presence for training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    pub presence_rate: [f64; ANCHOR_ARITY],
    /// Optional target distribution of anchor counts 1..=5; when set,
    /// masking matches it per row instead of only the marginals.
    #[serde(default)]
    pub joint_count_dist: Option<[f64; ANCHOR_ARITY]>,
}

impl SparsityProfile {
    pub fn validate(&self) -> Result<()> {
        if self.presence_rate.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("presence rates must lie in [0, 1]".into()));
        }
        if let Some(dist) = &self.joint_count_dist {
            let sum: f64 = dist.iter().sum();
            if dist.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config("anchor-count distribution must be nonnegative and sum to 1".into()));
            }
        }
        Ok(())
    }
}

/// Fraction of rows with each anchor present.
pub fn observed_presence<'a, I>(anchors: I) -> [f64; ANCHOR_ARITY]
where
    I: IntoIterator<Item = &'a AnchorVector>,
{
    let mut counts = [0usize; ANCHOR_ARITY];
    let mut n = 0usize;
    for a in anchors {
        n += 1;
        for (slot, present) in a.presence_mask().iter().enumerate() {
            counts[slot] += usize::from(*present);
        }
    }
    if n == 0 {
        return [0.0; ANCHOR_ARITY];
    }
    counts.map(|c| c as f64 / n as f64)
}

fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

fn mask_one(
    anchors: &AnchorVector,
    target: Option<usize>,
    retain: &[f64; ANCHOR_ARITY],
    joint: Option<&[f64; ANCHOR_ARITY]>,
    rng: &mut ChaCha8Rng,
) -> AnchorVector {
    let present: Vec<usize> = anchors.present().map(|(s, _)| s).collect();
    if present.len() <= 1 {
        return *anchors;
    }
    let keep = match joint {
        None => {
            let mut keep = None;
            for _ in 0..MASK_RETRIES {
                let draw: Vec<usize> = present
                    .iter()
                    .copied()
                    .filter(|s| Some(*s) == target || rng.random::<f64>() < retain[*s])
                    .collect();
                if !draw.is_empty() {
                    keep = Some(draw);
                    break;
                }
            }
            keep.unwrap_or_else(|| {
                let best = present.iter().copied().fold(present[0], |b, s| if retain[s] > retain[b] { s } else { b });
                vec![best]
            })
        }
        Some(dist) => {
            // Draw a count among those reachable for this row, then keep
            // that many anchors sampled by retention weight (target first).
            let max_k = present.len();
            let weights: Vec<f64> = (1..=max_k).map(|k| dist[k - 1]).collect();
            let total: f64 = weights.iter().sum();
            let k = if total <= 0.0 {
                max_k
            } else {
                let mut u = rng.random::<f64>() * total;
                let mut chosen = max_k;
                for (i, w) in weights.iter().enumerate() {
                    if u < *w {
                        chosen = i + 1;
                        break;
                    }
                    u -= w;
                }
                chosen
            };
            let mut keep: Vec<usize> = target.filter(|t| present.contains(t)).into_iter().collect();
            let mut pool: Vec<usize> = present.iter().copied().filter(|s| Some(*s) != target).collect();
            while keep.len() < k && !pool.is_empty() {
                let total: f64 = pool.iter().map(|s| retain[*s].max(1e-9)).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = pool.len() - 1;
                for (i, s) in pool.iter().enumerate() {
                    let w = retain[*s].max(1e-9);
                    if u < w {
                        pick = i;
                        break;
                    }
                    u -= w;
                }
                keep.push(pool.remove(pick));
            }
            keep
        }
    };
    let mut out = AnchorVector::empty();
    for s in keep {
        out.set(s, anchors.get(s)).expect("values were validated on construction");
    }
    out
}

/// Per-slot retention probabilities. Starts from `target / observed` and
/// rescales until the expected presence, accounting for the redraw of
/// rows that would lose every anchor, matches the target.
fn calibrated_retention(
    rows: &[LabeledRow],
    target: &[f64; ANCHOR_ARITY],
    observed: &[f64; ANCHOR_ARITY],
) -> [f64; ANCHOR_ARITY] {
    let mut retain: [f64; ANCHOR_ARITY] =
        std::array::from_fn(|s| if observed[s] <= 0.0 { 1.0 } else { (target[s] / observed[s]).min(1.0) });
    // Rows only matter through their presence pattern and target slot.
    let mut patterns: BTreeMap<([bool; ANCHOR_ARITY], Option<usize>), usize> = BTreeMap::new();
    for r in rows {
        *patterns.entry((r.anchors.presence_mask(), r.target_slot)).or_default() += 1;
    }
    if rows.is_empty() {
        return retain;
    }
    for _ in 0..50 {
        let mut expected = [0.0; ANCHOR_ARITY];
        for ((mask, tgt), n) in &patterns {
            let present: Vec<usize> = (0..ANCHOR_ARITY).filter(|s| mask[*s]).collect();
            let p = |s: usize| if Some(s) == *tgt { 1.0 } else { retain[s] };
            let none: f64 = if present.len() <= 1 { 0.0 } else { present.iter().map(|s| 1.0 - p(*s)).product() };
            for &s in &present {
                let kept = if present.len() <= 1 { 1.0 } else { p(s) / (1.0 - none).max(1e-12) };
                expected[s] += kept.min(1.0) * *n as f64;
            }
        }
        let mut moved = false;
        for s in 0..ANCHOR_ARITY {
            let e = expected[s] / rows.len() as f64;
            if observed[s] <= 0.0 || e <= 0.0 || target[s] >= observed[s] {
                continue;
            }
            let next = (retain[s] * target[s] / e).min(1.0);
            moved |= (next - retain[s]).abs() > 1e-9;
            retain[s] = next;
        }
        if !moved {
            break;
        }
    }
    retain
}

/// Randomly nullifies anchors so each slot's presence rate moves toward
/// the profile, then recomputes the anchor-dependent features.
pub fn mask_anchors(
    rows: &[LabeledRow],
    profile: &SparsityProfile,
    seed: u64,
    extractor: &FeatureExtractor,
) -> Result<Vec<LabeledRow>> {
    profile.validate()?;
    let observed = observed_presence(rows.iter().map(|r| &r.anchors));
    let reachable = (0..ANCHOR_ARITY).any(|s| observed[s] > 0.0 && profile.presence_rate[s] <= observed[s]);
    if !rows.is_empty() && !reachable {
        return Err(Error::Masking(format!(
            "profile {:?} asks for more presence than observed {:?} on every slot",
            profile.presence_rate, observed
        )));
    }
    let retain = calibrated_retention(rows, &profile.presence_rate, &observed);
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut rng = row_rng(seed, i);
            let masked = mask_one(&row.anchors, row.target_slot, &retain, profile.joint_count_dist.as_ref(), &mut rng);
            if masked == row.anchors {
                return Ok(row.clone());
            }
            Ok(LabeledRow { anchors: masked, features: extractor.rebuild(&row.features, &masked)?, ..row.clone() })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LfStats {
    pub name: String,
    /// Share of considered rows where the function did not abstain.
    pub coverage: f64,
    /// Share of considered rows voted anomalous.
    pub positive_rate: f64,
    /// Share of rows where both functions voted.
    pub overlap: BTreeMap<String, f64>,
    /// Share of rows where both voted and disagreed.
    pub conflict: BTreeMap<String, f64>,
}

/// Coverage and agreement statistics for one detector's labeling functions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LfReport {
    pub slot: String,
    pub n_considered: usize,
    pub n_labeled: usize,
    pub n_anomalous: usize,
    pub lfs: Vec<LfStats>,
}

fn lf_report(
    slot: usize,
    lfs: &[LabelingFunction],
    votes: &[Vec<Verdict>],
    n_labeled: usize,
    n_anomalous: usize,
) -> LfReport {
    let n = votes.len().max(1) as f64;
    let names: Vec<String> = lfs.iter().map(LabelingFunction::name).collect();
    let stats = (0..lfs.len())
        .map(|a| {
            let voted = |v: &Vec<Verdict>, i: usize| v[i] != Verdict::Abstain;
            let coverage = votes.iter().filter(|v| voted(v, a)).count() as f64 / n;
            let positive_rate = votes.iter().filter(|v| v[a] == Verdict::Anomalous).count() as f64 / n;
            let mut overlap = BTreeMap::new();
            let mut conflict = BTreeMap::new();
            for b in (0..lfs.len()).filter(|b| *b != a) {
                let both = votes.iter().filter(|v| voted(v, a) && voted(v, b));
                let (mut o, mut c) = (0usize, 0usize);
                for v in both {
                    o += 1;
                    c += usize::from(v[a] != v[b]);
                }
                overlap.insert(names[b].clone(), o as f64 / n);
                conflict.insert(names[b].clone(), c as f64 / n);
            }
            LfStats { name: names[a].clone(), coverage, positive_rate, overlap, conflict }
        })
        .collect();
    LfReport { slot: slot_name(slot).to_string(), n_considered: votes.len(), n_labeled, n_anomalous, lfs: stats }
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub slot: usize,
    pub rows: Vec<LabeledRow>,
    pub report: LfReport,
}

/// Label, then mask, then recompute features for one detector slot.
pub fn build_training_set(
    events: &[PriceEvent],
    slot: usize,
    lfs: &[LabelingFunction],
    profile: &SparsityProfile,
    seed: u64,
    extractor: &FeatureExtractor,
) -> Result<TrainingSet> {
    if events.is_empty() {
        return Err(Error::Pipeline("no events to label".into()));
    }
    if lfs.is_empty() {
        return Err(Error::Pipeline("no labeling functions configured".into()));
    }
    for lf in lfs {
        lf.validate()?;
    }
    let considered: Vec<&PriceEvent> = events.iter().filter(|e| e.anchors.is_present(slot)).collect();
    let labeled: Vec<(Vec<Verdict>, Option<Result<LabeledRow>>)> = considered
        .par_iter()
        .map(|event| {
            let outputs: Vec<LfOutput> = lfs.iter().map(|lf| lf.apply(event)).collect();
            let verdicts = outputs.iter().map(|o| o.verdict).collect();
            let row = match resolve_labels(&outputs) {
                Resolution::Unlabeled => None,
                r => Some(extractor.extract(event).map(|features| LabeledRow {
                    item_id: event.item_id.clone(),
                    anchors: event.anchors,
                    features,
                    label: if r == Resolution::Anomalous { RowLabel::Anomalous } else { RowLabel::Normal },
                    label_source: LabelSource::LabelingFunction,
                    target_slot: Some(slot),
                })),
            };
            (verdicts, row)
        })
        .collect();
    let mut votes = Vec::with_capacity(labeled.len());
    let mut rows = Vec::new();
    for (v, row) in labeled {
        votes.push(v);
        if let Some(row) = row {
            rows.push(row?);
        }
    }
    if rows.is_empty() {
        return Err(Error::Pipeline(format!("no labeled rows for {}", slot_name(slot))));
    }
    let n_anomalous = rows.iter().filter(|r| r.label == RowLabel::Anomalous).count();
    let report = lf_report(slot, lfs, &votes, rows.len(), n_anomalous);
    let rows = mask_anchors(&rows, profile, seed, extractor)?;
    Ok(TrainingSet { slot, rows, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::StandardizationParams;
    use crate::model::HistoryPoint;
    use chrono::{DateTime, Duration};

    fn event(anchors: [Option<f64>; 5], aur: Option<f64>) -> PriceEvent {
        PriceEvent {
            item_id: "i".into(),
            timestamp: DateTime::UNIX_EPOCH,
            anchors: AnchorVector::new(anchors).unwrap(),
            offers: vec![10.0, 11.0],
            history: Default::default(),
            aur,
            category_id: "c".into(),
            offer_price: None,
        }
    }

    fn with_history(mut e: PriceEvent, slot: usize, prices: &[f64]) -> PriceEvent {
        e.history[slot] = prices
            .iter()
            .enumerate()
            .map(|(i, p)| HistoryPoint { ts: DateTime::UNIX_EPOCH + Duration::days(i as i64), price: *p })
            .collect();
        e
    }

    #[test]
    fn aur_distance_lf() {
        let e = event([Some(100.0), None, None, None, None], Some(20.0));
        assert_eq!(lf_high_distance_from_aur(&e, 50.0), Verdict::Anomalous);
        let e = event([Some(20.0), None, None, None, None], Some(20.0));
        assert_eq!(lf_high_distance_from_aur(&e, 50.0), Verdict::Normal);
        let e = event([Some(20.0), None, None, None, None], None);
        assert_eq!(lf_high_distance_from_aur(&e, 50.0), Verdict::Abstain);
    }

    #[test]
    fn relative_distance_lf() {
        let e = event([None, None, Some(50.0), None, None], Some(10.0));
        assert_eq!(lf_relative_distance(&e, 2, 2.0), Verdict::Anomalous);
        let e = event([None, None, Some(11.0), None, None], Some(10.0));
        assert_eq!(lf_relative_distance(&e, 2, 2.0), Verdict::Normal);
        assert_eq!(lf_relative_distance(&e, 3, 2.0), Verdict::Abstain);
    }

    #[test]
    fn history_band_lf() {
        let base = event([None, None, None, Some(100.0), None], None);
        let e = with_history(base.clone(), 3, &[18.0, 19.0, 20.0, 20.0]);
        assert_eq!(lf_history_band(&e, 3, 3.0), Verdict::Anomalous);
        let mut at_max = e.clone();
        at_max.anchors = AnchorVector::new([None, None, None, Some(20.0), None]).unwrap();
        assert_eq!(lf_history_band(&at_max, 3, 3.0), Verdict::Normal);
        let short = with_history(base, 3, &[20.0, 20.0]);
        assert_eq!(lf_history_band(&short, 3, 3.0), Verdict::Abstain);
    }

    fn out(v: Verdict) -> LfOutput {
        LfOutput { verdict: v, lf_name: "x".into() }
    }

    #[test]
    fn resolution_policy() {
        assert_eq!(resolve_labels(&[out(Verdict::Anomalous), out(Verdict::Abstain)]), Resolution::Anomalous);
        assert_eq!(resolve_labels(&[out(Verdict::Normal), out(Verdict::Normal)]), Resolution::Normal);
        assert_eq!(resolve_labels(&[out(Verdict::Abstain), out(Verdict::Abstain)]), Resolution::Unlabeled);
        assert_eq!(resolve_labels(&[]), Resolution::Unlabeled);
    }

    fn extractor() -> FeatureExtractor {
        FeatureExtractor::new(StandardizationParams::identity(), 1.0, 0.5).unwrap()
    }

    fn rows_from(anchor_sets: &[[Option<f64>; 5]], target: Option<usize>) -> Vec<LabeledRow> {
        let ex = extractor();
        anchor_sets
            .iter()
            .map(|a| {
                let e = event(*a, None);
                LabeledRow {
                    item_id: "i".into(),
                    anchors: e.anchors,
                    features: ex.extract(&e).unwrap(),
                    label: RowLabel::Normal,
                    label_source: LabelSource::LabelingFunction,
                    target_slot: target,
                }
            })
            .collect()
    }

    #[test]
    fn single_anchor_rows_unchanged() {
        let rows = rows_from(&[[None, Some(5.0), None, None, None]; 50], None);
        let profile = SparsityProfile { presence_rate: [0.0, 0.1, 0.0, 0.0, 0.0], joint_count_dist: None };
        let masked = mask_anchors(&rows, &profile, 1, &extractor()).unwrap();
        assert_eq!(masked, rows);
    }

    #[test]
    fn target_slot_never_masked() {
        let rows = rows_from(&[[Some(1.0); 5]; 500], Some(4));
        let profile = SparsityProfile { presence_rate: [0.1; 5], joint_count_dist: None };
        let masked = mask_anchors(&rows, &profile, 5, &extractor()).unwrap();
        assert!(masked.iter().all(|r| r.anchors.is_present(4)));
        assert!(masked.iter().all(|r| r.features.density.anchor_count == r.anchors.count()));
    }

    #[test]
    fn unreachable_profile_errors() {
        let rows = rows_from(&[[Some(1.0), Some(2.0), None, None, None]; 10], None);
        let profile = SparsityProfile { presence_rate: [1.0; 5], joint_count_dist: None };
        // Slots 0 and 1 are fully observed, so the profile is reachable there.
        assert!(mask_anchors(&rows, &profile, 0, &extractor()).is_ok());
        let rows = rows_from(&[[Some(1.0), None, None, None, None], [None, Some(2.0), None, None, None]], None);
        let profile = SparsityProfile { presence_rate: [0.9, 0.9, 0.5, 0.5, 0.5], joint_count_dist: None };
        assert!(matches!(mask_anchors(&rows, &profile, 0, &extractor()), Err(Error::Masking(_))));
    }

    #[test]
    fn joint_mode_matches_counts() {
        let rows = rows_from(&[[Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0)]; 4000], None);
        let profile = SparsityProfile { presence_rate: [0.5; 5], joint_count_dist: Some([0.4, 0.3, 0.2, 0.1, 0.0]) };
        let masked = mask_anchors(&rows, &profile, 3, &extractor()).unwrap();
        let mut hist = [0usize; 5];
        for r in &masked {
            hist[r.anchors.count() - 1] += 1;
        }
        let expect = [0.4, 0.3, 0.2, 0.1, 0.0];
        for k in 0..5 {
            let got = hist[k] as f64 / masked.len() as f64;
            assert!((got - expect[k]).abs() < 0.03, "k={} got {got}", k + 1);
        }
    }

    #[test]
    fn build_requires_lfs() {
        let events = vec![event([Some(1.0), None, None, None, None], Some(1.0))];
        let profile = SparsityProfile { presence_rate: [1.0; 5], joint_count_dist: None };
        let err = build_training_set(&events, 0, &[], &profile, 0, &extractor()).unwrap_err();
        assert!(matches!(err, Error::Pipeline(_)));
    }

    #[test]
    fn report_counts_conflicts() {
        let lfs = vec![
            LabelingFunction::RelativeDistance { slot: 0, rel_thresh: 2.0 },
            LabelingFunction::HighDistanceFromAur { thresh: 100.0 },
        ];
        // 50 vs aur 10: relative says anomalous, absolute (40 < 100) says normal.
        let events = vec![
            event([Some(50.0), Some(1.0), None, None, None], Some(10.0)),
            event([Some(10.0), Some(1.0), None, None, None], Some(10.0)),
            event([Some(10.0), Some(1.0), None, None, None], None),
        ];
        let profile = SparsityProfile { presence_rate: [1.0; 5], joint_count_dist: None };
        let ts = build_training_set(&events, 0, &lfs, &profile, 0, &extractor()).unwrap();
        assert_eq!(ts.report.n_considered, 3);
        assert_eq!(ts.report.n_labeled, 2);
        assert_eq!(ts.report.n_anomalous, 1);
        let rel = &ts.report.lfs[0];
        assert!((rel.coverage - 2.0 / 3.0).abs() < 1e-12);
        assert!((rel.conflict["high_distance_from_aur"] - 1.0 / 3.0).abs() < 1e-12);
        assert!((rel.overlap["high_distance_from_aur"] - 2.0 / 3.0).abs() < 1e-12);
    }
}
