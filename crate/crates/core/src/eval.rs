//! Error metrics and the configuration comparison harness.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{aggregator_features, optimal_anchor, uniform_weights, weights_from_probabilities, Weighting};
use crate::bundle::{ModelBundle, DEFAULT_PAC_THRESHOLD};
use crate::detector::{confusion, detect};
use crate::error::{Error, Result};
use crate::model::{slot_name, AnchorVector, PriceEvent, ANCHOR_ARITY};
use crate::stats;
use crate::synth::GroundTruth;

/// Absolute percentage error; a missing prediction is infinitely wrong.
pub fn ape(pred: Option<f64>, aur: f64) -> f64 {
    match pred {
        Some(p) => (p - aur).abs() / aur,
        None => f64::INFINITY,
    }
}

fn check_pairs(preds: &[f64], aurs: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::Metric("no predictions".into()));
    }
    if preds.len() != aurs.len() {
        return Err(Error::Metric("predictions and AURs differ in length".into()));
    }
    if aurs.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Metric("AUR values must be positive".into()));
    }
    Ok(())
}

/// Median absolute percentage error.
pub fn meape(preds: &[f64], aurs: &[f64]) -> Result<f64> {
    check_pairs(preds, aurs)?;
    let errors: Vec<f64> = preds.iter().zip(aurs).map(|(p, a)| (p - a).abs() / a).collect();
    Ok(stats::median(&errors).expect("nonempty"))
}

/// Share of predictions whose absolute percentage error is below `t`.
pub fn pac(preds: &[f64], aurs: &[f64], t: f64) -> Result<f64> {
    check_pairs(preds, aurs)?;
    if !(t > 0.0) {
        return Err(Error::Metric(format!("PAC threshold must be positive, got {t}")));
    }
    let precise = preds.iter().zip(aurs).filter(|(p, a)| (*p - *a).abs() / *a < t).count();
    Ok(precise as f64 / preds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing was predicted positive, so precision is reported as 0.
    pub degenerate: bool,
}

pub fn precision_recall_f1(flags: &[bool], truth: &[bool]) -> Result<Classification> {
    if flags.is_empty() {
        return Err(Error::Metric("no predictions".into()));
    }
    if flags.len() != truth.len() {
        return Err(Error::Metric("predictions and truth differ in length".into()));
    }
    let (precision, recall, f1) = confusion(flags, truth);
    Ok(Classification { precision, recall, f1, degenerate: !flags.iter().any(|f| *f) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigurationId {
    RuleBasedBaseline,
    ArithMeanNoDetector,
    AggregatorNoDetector,
    ArithMeanWithDetector,
    FullSystem,
}

impl ConfigurationId {
    pub const ALL: [ConfigurationId; 5] = [
        ConfigurationId::RuleBasedBaseline,
        ConfigurationId::ArithMeanNoDetector,
        ConfigurationId::AggregatorNoDetector,
        ConfigurationId::ArithMeanWithDetector,
        ConfigurationId::FullSystem,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConfigurationId::RuleBasedBaseline => "Rule-based baseline",
            ConfigurationId::ArithMeanNoDetector => "Arithmetic mean without detector",
            ConfigurationId::AggregatorNoDetector => "Aggregator without detector",
            ConfigurationId::ArithMeanWithDetector => "Arithmetic mean with detector",
            ConfigurationId::FullSystem => "Aggregator with detector",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub pac_threshold: f64,
    /// Overrides the bundle's multiplier when set.
    pub ceiling_multiplier: Option<f64>,
    /// Slot order of the rule-based baseline: it uses the first present one.
    pub rule_priority: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            pac_threshold: DEFAULT_PAC_THRESHOLD,
            ceiling_multiplier: None,
            rule_priority: (0..ANCHOR_ARITY).collect(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pac_threshold > 0.0) {
            return Err(Error::Config("PAC threshold must be positive".into()));
        }
        if self.ceiling_multiplier.is_some_and(|m| !(m >= 1.0)) {
            return Err(Error::Config("ceiling multiplier must be >= 1".into()));
        }
        let mut seen = [false; ANCHOR_ARITY];
        for s in &self.rule_priority {
            if *s >= ANCHOR_ARITY || std::mem::replace(&mut seen[*s], true) {
                return Err(Error::Config("rule priority must list distinct anchor slots".into()));
            }
        }
        if self.rule_priority.is_empty() {
            return Err(Error::Config("rule priority is empty".into()));
        }
        Ok(())
    }
}

/// First present anchor in priority order.
pub fn rule_based_anchor(anchors: &AnchorVector, priority: &[usize]) -> Option<f64> {
    priority.iter().find_map(|s| anchors.get(*s))
}

/// Per-event predictions of every configuration plus the bookkeeping the
/// subsets need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub item_id: String,
    pub aur: Option<f64>,
    pub anchor_count: usize,
    pub offer_price: Option<f64>,
    pub offer_anomalous: bool,
    pub truth_anomalous_anchor: bool,
    pub flags: [bool; ANCHOR_ARITY],
    pub predictions: [Option<f64>; 5],
}

impl EventOutcome {
    pub fn detector_flagged(&self) -> bool {
        self.flags.iter().any(|f| *f)
    }

    pub fn prediction(&self, c: ConfigurationId) -> Option<f64> {
        self.predictions[c.index()]
    }
}

fn weighted_mean(w: Weighting) -> Result<Option<f64>> {
    match w {
        Weighting::Weighted(w) => optimal_anchor(&w).map(Some),
        Weighting::NoReliableAnchor => Ok(None),
    }
}

pub fn evaluate_event(
    bundle: &ModelBundle,
    event: &PriceEvent,
    truth: &GroundTruth,
    rule_priority: &[usize],
) -> Result<EventOutcome> {
    if truth.item_id != event.item_id {
        return Err(Error::Metric(format!("ground truth {} does not match event {}", truth.item_id, event.item_id)));
    }
    let mut outcome = EventOutcome {
        item_id: event.item_id.clone(),
        aur: event.aur,
        anchor_count: event.anchors.count(),
        offer_price: event.offer_price,
        offer_anomalous: truth.offer_anomalous,
        truth_anomalous_anchor: truth.has_anomalous_anchor(),
        flags: [false; ANCHOR_ARITY],
        predictions: [None; 5],
    };
    if outcome.anchor_count == 0 {
        return Ok(outcome);
    }
    let features = bundle.extractor.extract(event)?;
    let flags = detect(&bundle.detectors, &features)?;
    let probs = bundle.aggregator.slot_probabilities(&aggregator_features(event, &features))?;
    let none = [false; ANCHOR_ARITY];
    let a = &event.anchors;
    outcome.flags = flags;
    outcome.predictions = [
        rule_based_anchor(a, rule_priority),
        weighted_mean(uniform_weights(a, &none))?,
        weighted_mean(weights_from_probabilities(&probs, a, &none))?,
        weighted_mean(uniform_weights(a, &flags))?,
        weighted_mean(weights_from_probabilities(&probs, a, &flags))?,
    ];
    Ok(outcome)
}

pub fn evaluate_events(
    events: &[PriceEvent],
    truth: &[GroundTruth],
    bundle: &ModelBundle,
    cfg: &EvalConfig,
) -> Result<Vec<EventOutcome>> {
    cfg.validate()?;
    if events.len() != truth.len() {
        return Err(Error::Metric("events and ground truth differ in length".into()));
    }
    events.par_iter().zip(truth.par_iter()).map(|(e, t)| evaluate_event(bundle, e, t, &cfg.rule_priority)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub subset_name: String,
    pub configuration: ConfigurationId,
    /// AUR-covered events with at least one anchor; basis of MeAPE and PAC.
    pub n: usize,
    /// Events with an incoming offer; basis of precision and recall.
    pub n_events: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub meape: Option<f64>,
    pub pac: Option<f64>,
    pub pac_threshold: f64,
}

/// Metrics of one configuration over the given outcomes.
pub fn configuration_report(
    outcomes: &[&EventOutcome],
    configuration: ConfigurationId,
    subset_name: &str,
    t: f64,
    multiplier: f64,
) -> MetricReport {
    let scored: Vec<(f64, f64)> = outcomes
        .iter()
        .filter(|o| o.anchor_count > 0)
        .filter_map(|o| o.aur.map(|a| (ape(o.prediction(configuration), a), a)))
        .collect();
    let errors: Vec<f64> = scored.iter().map(|(e, _)| *e).collect();
    let (meape, pac) = if errors.is_empty() {
        (None, None)
    } else {
        let precise = errors.iter().filter(|e| **e < t).count();
        (stats::median(&errors), Some(precise as f64 / errors.len() as f64))
    };
    let (flags, truth): (Vec<bool>, Vec<bool>) = outcomes
        .iter()
        .filter_map(|o| {
            let price = o.offer_price?;
            let flagged = o.prediction(configuration).is_some_and(|p| price > p * multiplier);
            Some((flagged, o.offer_anomalous))
        })
        .unzip();
    let cls = precision_recall_f1(&flags, &truth).unwrap_or(Classification {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        degenerate: true,
    });
    MetricReport {
        subset_name: subset_name.to_string(),
        configuration,
        n: errors.len(),
        n_events: flags.len(),
        precision: cls.precision,
        recall: cls.recall,
        f1: cls.f1,
        degenerate: cls.degenerate,
        meape,
        pac,
        pac_threshold: t,
    }
}

/// All five configurations over the whole corpus.
pub fn run_configurations(
    outcomes: &[EventOutcome],
    t: f64,
    multiplier: f64,
) -> Result<BTreeMap<ConfigurationId, MetricReport>> {
    let all: Vec<&EventOutcome> = outcomes.iter().collect();
    if !all.iter().any(|o| o.aur.is_some() && o.anchor_count > 0) {
        return Err(Error::Metric("no AUR-covered events to evaluate".into()));
    }
    Ok(ConfigurationId::ALL.iter().map(|c| (*c, configuration_report(&all, *c, SUBSET_ALL, t, multiplier))).collect())
}

pub const SUBSET_ALL: &str = "all_items";
pub const SUBSET_FLAGGED: &str = "detector_flagged";
pub const SUBSET_ANOMALOUS: &str = "anomalous_anchor";
pub const SUBSET_NON_PRECISE: &str = "existing_non_precise";
pub const SUBSETS: [&str; 4] = [SUBSET_ALL, SUBSET_FLAGGED, SUBSET_ANOMALOUS, SUBSET_NON_PRECISE];

pub fn subset_label(name: &str) -> &'static str {
    match name {
        SUBSET_ALL => "All items",
        SUBSET_FLAGGED => "Items where detectors flagged an anomaly",
        SUBSET_ANOMALOUS => "Items with at least one anomalous anchor",
        SUBSET_NON_PRECISE => "Items where the existing anchor is non-precise",
        _ => "Unknown subset",
    }
}

pub fn in_subset(o: &EventOutcome, name: &str, t: f64) -> bool {
    match name {
        SUBSET_ALL => true,
        SUBSET_FLAGGED => o.detector_flagged(),
        SUBSET_ANOMALOUS => o.truth_anomalous_anchor,
        SUBSET_NON_PRECISE => {
            o.anchor_count > 0 && o.aur.is_some_and(|a| ape(o.prediction(ConfigurationId::RuleBasedBaseline), a) >= t)
        }
        _ => false,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub subset_name: String,
    pub empty: bool,
    pub reports: BTreeMap<ConfigurationId, MetricReport>,
}

/// The four item subsets, each with every configuration.
pub fn subset_report(outcomes: &[EventOutcome], t: f64, multiplier: f64) -> BTreeMap<String, SubsetReport> {
    SUBSETS
        .iter()
        .map(|name| {
            let members: Vec<&EventOutcome> = outcomes.iter().filter(|o| in_subset(o, name, t)).collect();
            let reports = ConfigurationId::ALL
                .iter()
                .map(|c| (*c, configuration_report(&members, *c, name, t, multiplier)))
                .collect();
            let empty = !members.iter().any(|o| o.aur.is_some() && o.anchor_count > 0);
            (name.to_string(), SubsetReport { subset_name: name.to_string(), empty, reports })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub pac_threshold: f64,
    pub ceiling_multiplier: f64,
    pub rule_priority: Vec<String>,
    pub bundle_version: String,
    pub n_events: usize,
    pub subsets: BTreeMap<String, SubsetReport>,
}

impl EvaluationReport {
    pub fn get(&self, subset: &str, c: ConfigurationId) -> Option<&MetricReport> {
        self.subsets.get(subset).and_then(|s| s.reports.get(&c))
    }

    /// Aligned text: the configuration table on the flagged subset, then
    /// existing/baseline/full columns for every subset.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut s = String::new();
        let _ = writeln!(s, "Configurations on {} (t = {})", subset_label(SUBSET_FLAGGED), self.pac_threshold);
        let _ = writeln!(
            s,
            "{:<34} {:>9} {:>9} {:>9} {:>9} {:>9} {:>7}",
            "Configuration", "Precision", "Recall", "F1", "MeAPE", "PAC", "n"
        );
        if let Some(sub) = self.subsets.get(SUBSET_FLAGGED) {
            for r in sub.reports.values() {
                let _ = writeln!(
                    s,
                    "{:<34} {:>9.4} {:>9.4} {:>9.4} {:>9} {:>9} {:>7}",
                    r.configuration.label(),
                    r.precision,
                    r.recall,
                    r.f1,
                    fmt(r.meape),
                    fmt(r.pac),
                    r.n
                );
            }
        }
        let _ = writeln!(s);
        let cols =
            [ConfigurationId::RuleBasedBaseline, ConfigurationId::ArithMeanNoDetector, ConfigurationId::FullSystem];
        let _ = writeln!(s, "Subsets (E = rule-based, B = arithmetic mean, M = aggregator with detector)");
        let _ = writeln!(
            s,
            "{:<48} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "Subset", "F1 E", "F1 B", "F1 M", "MeAPE E", "MeAPE B", "MeAPE M", "PAC E", "PAC B", "PAC M", "n"
        );
        for name in SUBSETS {
            let Some(sub) = self.subsets.get(name) else { continue };
            let r = |c: &ConfigurationId| &sub.reports[c];
            let mut line = format!("{:<48}", subset_label(name));
            for c in &cols {
                let _ = write!(line, " {:>7.4}", r(c).f1);
            }
            for c in &cols {
                let _ = write!(line, " {:>7}", fmt(r(c).meape));
            }
            for c in &cols {
                let _ = write!(line, " {:>7}", fmt(r(c).pac));
            }
            let _ = write!(line, " {:>7}", r(&cols[0]).n);
            let _ = writeln!(s, "{line}");
        }
        s
    }
}

pub fn evaluate(
    events: &[PriceEvent],
    truth: &[GroundTruth],
    bundle: &ModelBundle,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    let outcomes = evaluate_events(events, truth, bundle, cfg)?;
    let multiplier = cfg.ceiling_multiplier.unwrap_or(bundle.ceiling_multiplier);
    run_configurations(&outcomes, cfg.pac_threshold, multiplier)?;
    Ok(EvaluationReport {
        pac_threshold: cfg.pac_threshold,
        ceiling_multiplier: multiplier,
        rule_priority: cfg.rule_priority.iter().map(|s| slot_name(*s).to_string()).collect(),
        bundle_version: bundle.version().to_string(),
        n_events: events.len(),
        subsets: subset_report(&outcomes, cfg.pac_threshold, multiplier),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meape_examples() {
        assert_eq!(meape(&[10.0, 20.0], &[10.0, 20.0]).unwrap(), 0.0);
        assert!((meape(&[11.0, 30.0], &[10.0, 20.0]).unwrap() - 0.3).abs() < 1e-12);
        assert!((meape(&[1.1, 1.3, 1.2], &[1.0, 1.0, 1.0]).unwrap() - 0.2).abs() < 1e-12);
        assert!(matches!(meape(&[], &[]), Err(Error::Metric(_))));
    }

    #[test]
    fn pac_examples() {
        assert_eq!(pac(&[11.0, 13.0], &[10.0, 10.0], 0.2).unwrap(), 0.5);
        assert_eq!(pac(&[12.0], &[10.0], 0.25).unwrap(), 1.0);
        // e = 0.5 exactly at t = 0.5 is not precise.
        assert_eq!(pac(&[15.0], &[10.0], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn classification_examples() {
        let mut flags = vec![true; 10];
        flags.extend(vec![false; 6]);
        let mut truth = vec![true; 9];
        truth.push(false);
        truth.extend(vec![true; 6]);
        let c = precision_recall_f1(&flags, &truth).unwrap();
        assert!((c.precision - 0.9).abs() < 1e-12);
        assert!((c.recall - 0.6).abs() < 1e-12);
        assert!((c.f1 - 0.72).abs() < 1e-12);
        let c = precision_recall_f1(&[false, false], &[true, false]).unwrap();
        assert_eq!((c.precision, c.recall, c.f1, c.degenerate), (0.0, 0.0, 0.0, true));
        let c = precision_recall_f1(&[true, false], &[true, false]).unwrap();
        assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn rule_priority_pick() {
        let a = AnchorVector::new([None, Some(2.0), Some(3.0), None, None]).unwrap();
        assert_eq!(rule_based_anchor(&a, &[0, 2, 1]), Some(3.0));
        assert_eq!(rule_based_anchor(&a, &[0, 3]), None);
    }
}
