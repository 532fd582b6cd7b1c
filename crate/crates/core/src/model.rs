//! Domain types shared by every layer and the JSON-lines event codec.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of anchor slots. Adding an anchor is a schema-version bump.
pub const ANCHOR_ARITY: usize = 5;

/// Anchor slot names, in slot order.
pub const ANCHOR_NAMES: [&str; ANCHOR_ARITY] =
    ["competitor_price", "msrp", "store_price", "first_party_price", "mp_median_price"];

/// Slot index for an anchor name.
pub fn slot_of(name: &str) -> Option<usize> {
    ANCHOR_NAMES.iter().position(|n| *n == name)
}

pub fn slot_name(slot: usize) -> &'static str {
    ANCHOR_NAMES[slot]
}

/// Rejects anything that is not a finite, strictly positive price.
pub fn check_price(what: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::Validation(format!("{what} must be a positive price, got {value}")))
    }
}

/// Up to five optional anchor prices for one item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorVector {
    values: [Option<f64>; ANCHOR_ARITY],
}

impl AnchorVector {
    pub fn new(values: [Option<f64>; ANCHOR_ARITY]) -> Result<Self> {
        for (slot, v) in values.iter().enumerate() {
            if let Some(v) = v {
                check_price(slot_name(slot), *v)?;
            }
        }
        Ok(Self { values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, slot: usize) -> Option<f64> {
        self.values[slot]
    }

    pub fn values(&self) -> &[Option<f64>; ANCHOR_ARITY] {
        &self.values
    }

    pub fn is_present(&self, slot: usize) -> bool {
        self.values[slot].is_some()
    }

    pub fn presence_mask(&self) -> [bool; ANCHOR_ARITY] {
        self.values.map(|v| v.is_some())
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    /// Present `(slot, price)` pairs in slot order.
    pub fn present(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|p| (i, p)))
    }

    pub fn set(&mut self, slot: usize, value: Option<f64>) -> Result<()> {
        if let Some(v) = value {
            check_price(slot_name(slot), v)?;
        }
        self.values[slot] = value;
        Ok(())
    }

    /// Copy with one slot nulled out.
    pub fn without(&self, slot: usize) -> Self {
        let mut out = *self;
        out.values[slot] = None;
        out
    }
}

/// One historical observation of an anchor price.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub ts: DateTime<Utc>,
    pub price: f64,
}

/// A pricing or anchor update event for one item.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceEvent {
    pub item_id: String,
    pub timestamp: DateTime<Utc>,
    pub anchors: AnchorVector,
    /// Competing marketplace offer prices; may be empty.
    pub offers: Vec<f64>,
    pub history: [Vec<HistoryPoint>; ANCHOR_ARITY],
    pub aur: Option<f64>,
    pub category_id: String,
    /// Price of the incoming offer being checked against the ceiling.
    pub offer_price: Option<f64>,
}

impl PriceEvent {
    /// Validates every invariant of the type.
    pub fn validate(&self) -> Result<()> {
        for (slot, v) in self.anchors.present() {
            check_price(slot_name(slot), v)?;
        }
        for o in &self.offers {
            check_price("offer", *o)?;
        }
        if let Some(a) = self.aur {
            check_price("aur", a)?;
        }
        if let Some(p) = self.offer_price {
            check_price("offer_price", p)?;
        }
        for (slot, series) in self.history.iter().enumerate() {
            for p in series {
                check_price(slot_name(slot), p.price)?;
            }
            if series.windows(2).any(|w| w[1].ts < w[0].ts) {
                return Err(Error::Validation(format!(
                    "history timestamps for {} are not nondecreasing",
                    slot_name(slot)
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scoreability {
    Scoreable,
    NoAnchors,
}

/// An event is scoreable when at least one anchor is present.
pub fn validate_scoreable(event: &PriceEvent) -> Scoreability {
    if event.anchors.count() == 0 {
        Scoreability::NoAnchors
    } else {
        Scoreability::Scoreable
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStatus {
    Ok,
    NoReliableAnchor,
    NoAnchors,
}

/// Output of one scoring call: optimal anchor, per-anchor weights and
/// anomaly flags, plus the derived ceiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub optimal_anchor: Option<f64>,
    pub weights: BTreeMap<String, f64>,
    pub anomaly_flags: BTreeMap<String, bool>,
    pub ceiling_price: Option<f64>,
    pub status: ScoreStatus,
}

impl ScoreResult {
    pub fn no_anchors() -> Self {
        Self {
            optimal_anchor: None,
            weights: ANCHOR_NAMES.iter().map(|n| (n.to_string(), 0.0)).collect(),
            anomaly_flags: ANCHOR_NAMES.iter().map(|n| (n.to_string(), false)).collect(),
            ceiling_price: None,
            status: ScoreStatus::NoAnchors,
        }
    }
}

// Wire format. Anchor and history maps are keyed by anchor name; absent
// keys (or explicit nulls) mean the anchor is missing.
#[derive(Serialize, Deserialize)]
struct EventRecord {
    item_id: String,
    ts: DateTime<Utc>,
    #[serde(default)]
    anchors: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    offers: Vec<f64>,
    #[serde(default)]
    history: BTreeMap<String, Vec<(DateTime<Utc>, f64)>>,
    #[serde(default)]
    aur: Option<f64>,
    category_id: String,
    #[serde(default)]
    offer_price: Option<f64>,
}

/// Parses and validates one JSON-lines event record.
pub fn parse_event(line: &str) -> Result<PriceEvent> {
    let record: EventRecord = serde_json::from_str(line.trim()).map_err(|e| Error::Parse(e.to_string()))?;
    from_record(record)
}

/// Same as [`parse_event`] for an already decoded JSON value.
pub fn event_from_value(value: serde_json::Value) -> Result<PriceEvent> {
    let record: EventRecord = serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    from_record(record)
}

fn from_record(record: EventRecord) -> Result<PriceEvent> {
    let mut anchors = [None; ANCHOR_ARITY];
    for (name, value) in record.anchors {
        let slot = slot_of(&name).ok_or_else(|| Error::Schema(format!("unknown anchor name `{name}`")))?;
        anchors[slot] = value;
    }
    let mut history: [Vec<HistoryPoint>; ANCHOR_ARITY] = Default::default();
    for (name, series) in record.history {
        let slot = slot_of(&name).ok_or_else(|| Error::Schema(format!("unknown anchor name `{name}` in history")))?;
        history[slot] = series.into_iter().map(|(ts, price)| HistoryPoint { ts, price }).collect();
    }
    let event = PriceEvent {
        item_id: record.item_id,
        timestamp: record.ts,
        anchors: AnchorVector::new(anchors)?,
        offers: record.offers,
        history,
        aur: record.aur,
        category_id: record.category_id,
        offer_price: record.offer_price,
    };
    event.validate()?;
    Ok(event)
}

fn to_record(event: &PriceEvent) -> EventRecord {
    EventRecord {
        item_id: event.item_id.clone(),
        ts: event.timestamp,
        anchors: event.anchors.present().map(|(slot, v)| (slot_name(slot).to_string(), Some(v))).collect(),
        offers: event.offers.clone(),
        history: event
            .history
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .map(|(slot, s)| (slot_name(slot).to_string(), s.iter().map(|p| (p.ts, p.price)).collect()))
            .collect(),
        aur: event.aur,
        category_id: event.category_id.clone(),
        offer_price: event.offer_price,
    }
}

/// Serializes an event as a single JSON line (no trailing newline).
pub fn serialize_event(event: &PriceEvent) -> String {
    serde_json::to_string(&to_record(event)).expect("event serialization is infallible")
}

pub fn event_to_value(event: &PriceEvent) -> serde_json::Value {
    serde_json::to_value(to_record(event)).expect("event serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(anchors: &str) -> String {
        format!(r#"{{"item_id":"i1","ts":"2024-06-01T00:00:00Z","anchors":{anchors},"offers":[],"category_id":"c1"}}"#)
    }

    #[test]
    fn parses_minimal_record() {
        let e = parse_event(&minimal(r#"{"competitor_price": 10.0}"#)).unwrap();
        assert_eq!(e.anchors.count(), 1);
        assert_eq!(e.anchors.get(0), Some(10.0));
        assert!(e.offers.is_empty());
        assert_eq!(e.aur, None);
        assert_eq!(validate_scoreable(&e), Scoreability::Scoreable);
    }

    #[test]
    fn rejects_negative_anchor() {
        let err = parse_event(&minimal(r#"{"competitor_price": -3.0}"#)).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_zero_offer_and_aur() {
        let line = r#"{"item_id":"i","ts":"2024-06-01T00:00:00Z","anchors":{"msrp":1},"offers":[0],"category_id":"c"}"#;
        assert!(matches!(parse_event(line), Err(Error::Validation(_))));
        let line = r#"{"item_id":"i","ts":"2024-06-01T00:00:00Z","anchors":{"msrp":1},"aur":0.0,"category_id":"c"}"#;
        assert!(matches!(parse_event(line), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_unknown_anchor() {
        let err = parse_event(&minimal(r#"{"sixth_price": 4.0}"#)).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(parse_event("{not json"), Err(Error::Parse(_))));
        assert!(matches!(parse_event(r#"{"item_id":"x"}"#), Err(Error::Parse(_))));
    }

    #[test]
    fn rejects_unsorted_history() {
        let line = r#"{"item_id":"i","ts":"2024-06-01T00:00:00Z","anchors":{"msrp":1},
            "history":{"msrp":[["2024-05-02T00:00:00Z",1.0],["2024-05-01T00:00:00Z",1.0]]},"category_id":"c"}"#;
        assert!(matches!(parse_event(line), Err(Error::Validation(_))));
    }

    #[test]
    fn null_anchor_is_absent() {
        let e = parse_event(&minimal(r#"{"msrp": null, "store_price": 3.5}"#)).unwrap();
        assert!(!e.anchors.is_present(1));
        assert_eq!(e.anchors.get(2), Some(3.5));
    }

    #[test]
    fn scoreability() {
        let mut e = parse_event(&minimal("{}")).unwrap();
        assert_eq!(validate_scoreable(&e), Scoreability::NoAnchors);
        e.anchors = AnchorVector::new([Some(1.0); ANCHOR_ARITY]).unwrap();
        assert_eq!(validate_scoreable(&e), Scoreability::Scoreable);
    }

    #[test]
    fn anchor_vector_refuses_nonpositive() {
        assert!(AnchorVector::new([Some(0.0), None, None, None, None]).is_err());
        assert!(AnchorVector::new([None, Some(f64::NAN), None, None, None]).is_err());
        let mut a = AnchorVector::empty();
        assert!(a.set(3, Some(-1.0)).is_err());
        assert_eq!(a.count(), 0);
    }

    #[test]
    fn round_trip_preserves_fields() {
        let line = r#"{"item_id":"i9","ts":"2024-06-01T12:30:00.250Z","anchors":{"msrp":12.99,"mp_median_price":11.5},
            "offers":[11.0,12.25],"history":{"msrp":[["2024-05-20T00:00:00Z",12.49]]},"aur":11.75,"category_id":"c3","offer_price":13.0}"#;
        let e = parse_event(line).unwrap();
        let again = parse_event(&serialize_event(&e)).unwrap();
        assert_eq!(e, again);
    }
}
