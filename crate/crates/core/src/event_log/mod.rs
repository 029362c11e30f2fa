//! Event logs and their encoding into one fixed-width record per case.

mod csv;
mod discretize;
mod encode;
mod xes;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, FixedOffset, NaiveDateTime};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{parse_csv, write_csv, ColumnMap};
pub use self::discretize::{discretize, Binning, Bins};
pub use self::encode::{encode_cases, OutcomeSpec};
pub use self::xes::parse_xes;

/// Label used for missing values once a table is discretized.
pub const MISSING_LABEL: &str = "missing";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("trace {trace} has no case identifier (concept:name)")]
    MissingCaseId { trace: usize },
    #[error("event in trace {trace} has no activity (concept:name)")]
    MissingActivity { trace: String },
    #[error("event in trace {trace} has no timestamp (time:timestamp)")]
    MissingTimestamp { trace: String },
    #[error("unparseable timestamp {literal:?}")]
    Timestamp { literal: String },
    #[error("attribute {key:?} has unparseable {kind} value {literal:?}")]
    AttributeValue {
        key: String,
        kind: &'static str,
        literal: String,
    },
    #[error("CSV: {0}")]
    Csv(#[from] ::csv::Error),
    #[error("mapped column {column:?} not found in header")]
    MissingColumn { column: String },
    #[error("row {row}: empty case identifier")]
    EmptyCaseId { row: u64 },
    #[error("row {row}: empty activity")]
    EmptyActivity { row: u64 },
    #[error("outcome attribute {0:?} is not part of the schema")]
    OutcomeNotInSchema(String),
    #[error("outcome attribute {0:?} must not be controllable")]
    ControllableOutcome(String),
    #[error("outcome attribute {0:?} was never observed in any case")]
    OutcomeNeverObserved(String),
    #[error("attribute {0:?} appears more than once in the schema")]
    DuplicateAttribute(String),
    #[error("attribute {attribute:?} in case {case_id:?}: expected {expected}, found {found:?}")]
    TypeConflict {
        attribute: String,
        case_id: String,
        expected: &'static str,
        found: String,
    },
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("attribute {0:?} is not numeric")]
    NotNumeric(String),
    #[error("attribute {attribute:?}: equal-frequency binning needs k >= 2, got {k}")]
    BinCount { attribute: String, k: usize },
    #[error("attribute {0:?}: bin boundaries must be finite and strictly increasing")]
    Boundaries(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LogError> = std::result::Result<T, E>;

/// A typed attribute value as it appears in the raw log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttrValue {
    Text(String),
    Int(i64),
    Real(f64),
    Bool(bool),
}

impl AttrValue {
    /// Renders the value as a category label.
    pub fn to_label(&self) -> String {
        match self {
            AttrValue::Text(s) => s.clone(),
            AttrValue::Int(i) => i.to_string(),
            AttrValue::Real(x) => fmt_num(*x),
            AttrValue::Bool(b) => b.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttrValue::Int(i) => Some(*i as f64),
            AttrValue::Real(x) => Some(*x),
            AttrValue::Text(s) => s.trim().parse::<f64>().ok().filter(|x| x.is_finite()),
            AttrValue::Bool(_) => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_label())
    }
}

/// Formats a number without a trailing `.0` when it is integral.
pub fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub(crate) fn parse_timestamp(text: &str) -> Result<DateTime<FixedOffset>> {
    let t = text.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(t) {
        return Ok(ts);
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f%:z",
    ] {
        if let Ok(ts) = DateTime::parse_from_str(t, fmt) {
            return Ok(ts);
        }
        if let Ok(naive) = NaiveDateTime::parse_from_str(t, fmt) {
            return Ok(naive.and_utc().fixed_offset());
        }
    }
    Err(LogError::Timestamp {
        literal: text.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub activity: String,
    pub case_id: String,
    pub timestamp: DateTime<FixedOffset>,
    pub attributes: Vec<(String, AttrValue)>,
}

impl Event {
    pub fn attribute(&self, name: &str) -> Option<&AttrValue> {
        self.attributes
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v)
    }

    /// Sets an attribute, replacing an earlier value with the same name.
    pub fn set_attribute(&mut self, name: impl Into<String>, value: AttrValue) {
        let name = name.into();
        match self.attributes.iter_mut().find(|(k, _)| *k == name) {
            Some(slot) => slot.1 = value,
            None => self.attributes.push((name, value)),
        }
    }
}

/// The events of one case, sorted by timestamp (stable on ties).
///
/// `attributes` holds case-level attributes (XES trace attributes); they are
/// treated as observed before the first event.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub case_id: String,
    pub attributes: Vec<(String, AttrValue)>,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(case_id: impl Into<String>) -> Self {
        Trace {
            case_id: case_id.into(),
            attributes: Vec::new(),
            events: Vec::new(),
        }
    }

    fn sort_events(&mut self) {
        // sort_by_key is stable, so equal timestamps keep file order.
        self.events.sort_by_key(|e| e.timestamp);
    }
}

/// A set of traces keyed by case id, in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    traces: IndexMap<String, Trace>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an event to its case, creating the trace if needed. Call
    /// [`EventLog::finish`] once all events are in.
    pub fn push_event(&mut self, event: Event) {
        self.traces
            .entry(event.case_id.clone())
            .or_insert_with(|| Trace::new(event.case_id.clone()))
            .events
            .push(event);
    }

    /// Inserts a complete trace; a trace with the same case id is merged.
    pub fn push_trace(&mut self, trace: Trace) {
        match self.traces.get_mut(&trace.case_id) {
            Some(existing) => {
                existing.attributes.extend(trace.attributes);
                existing.events.extend(trace.events);
            }
            None => {
                self.traces.insert(trace.case_id.clone(), trace);
            }
        }
    }

    /// Restores the ordering invariant of every trace.
    pub fn finish(mut self) -> Self {
        for trace in self.traces.values_mut() {
            trace.sort_events();
        }
        self
    }

    pub fn traces(&self) -> impl ExactSizeIterator<Item = &Trace> {
        self.traces.values()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.get(case_id)
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn num_events(&self) -> usize {
        self.traces.values().map(|t| t.events.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Categorical,
    Numeric,
}

/// Where a case-level feature comes from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSource {
    /// Last observed value of the attribute with the same name.
    #[default]
    Raw,
    /// Number of events with this activity label.
    Count(String),
    /// Final value of the named event attribute.
    LastValue(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    #[serde(default)]
    pub controllable: bool,
    #[serde(default)]
    pub source: AttributeSource,
}

impl AttributeSchema {
    pub fn categorical(name: impl Into<String>) -> Self {
        AttributeSchema {
            name: name.into(),
            kind: AttributeKind::Categorical,
            controllable: false,
            source: AttributeSource::Raw,
        }
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        AttributeSchema {
            kind: AttributeKind::Numeric,
            ..Self::categorical(name)
        }
    }

    pub fn controllable(mut self) -> Self {
        self.controllable = true;
        self
    }

    pub fn with_source(mut self, source: AttributeSource) -> Self {
        self.source = source;
        self
    }
}

/// A case-level feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Missing,
    Number(f64),
    Label(String),
    /// A discretized number: its interval label plus the original value.
    Binned {
        label: String,
        raw: f64,
    },
}

impl Value {
    /// Category label, or `None` for a number that has not been discretized.
    pub fn label(&self) -> Option<&str> {
        match self {
            Value::Missing => Some(MISSING_LABEL),
            Value::Number(_) => None,
            Value::Label(s) => Some(s),
            Value::Binned { label, .. } => Some(label),
        }
    }

    pub fn numeric(&self) -> Option<f64> {
        match self {
            Value::Number(x) | Value::Binned { raw: x, .. } => Some(*x),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    /// Aligned with the table schema.
    pub features: Vec<Value>,
    pub outcome: u8,
}

/// One encoded row per case. `schema` lists the features (the outcome is
/// held separately in each row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTable {
    pub schema: Vec<AttributeSchema>,
    pub outcome_name: String,
    pub rows: Vec<CaseRecord>,
    #[serde(default)]
    pub bins: BTreeMap<String, Bins>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CaseTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a.name == name)
    }

    pub fn value(&self, row: usize, attribute: usize) -> &Value {
        &self.rows[row].features[attribute]
    }

    /// Looks up a feature of a row by attribute name.
    pub fn get(&self, row: usize, name: &str) -> Option<&Value> {
        self.attribute_index(name).map(|i| self.value(row, i))
    }

    /// True when every feature can be read as a category label.
    pub fn is_discretized(&self) -> bool {
        self.first_undiscretized().is_none()
    }

    pub fn first_undiscretized(&self) -> Option<&str> {
        (0..self.schema.len())
            .find(|&a| self.rows.iter().any(|r| r.features[a].label().is_none()))
            .map(|a| self.schema[a].name.as_str())
    }

    /// Positive outcome rate over all rows.
    pub fn outcome_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.outcome == 1).count() as f64 / self.rows.len() as f64
    }

    /// Rebuilds a minimal log with one event per case carrying the raw
    /// features and the outcome, so that the table can be written as CSV.
    pub fn to_event_log(&self, activity: &str, timestamp: DateTime<FixedOffset>) -> EventLog {
        let mut log = EventLog::new();
        for row in &self.rows {
            let mut attributes = Vec::with_capacity(self.schema.len() + 1);
            for (attr, value) in self.schema.iter().zip(&row.features) {
                let v = match value {
                    Value::Missing => continue,
                    Value::Number(x) | Value::Binned { raw: x, .. } => AttrValue::Real(*x),
                    Value::Label(s) => AttrValue::Text(s.clone()),
                };
                attributes.push((attr.name.clone(), v));
            }
            attributes.push((
                self.outcome_name.clone(),
                AttrValue::Int(row.outcome as i64),
            ));
            log.push_event(Event {
                activity: activity.to_string(),
                case_id: row.case_id.clone(),
                timestamp,
                attributes,
            });
        }
        log.finish()
    }
}
