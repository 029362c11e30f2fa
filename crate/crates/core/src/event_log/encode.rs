use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{
    AttrValue, AttributeKind, AttributeSchema, AttributeSource, CaseRecord, CaseTable, EventLog,
    LogError, Result, Trace, Value,
};

fn default_positive_labels() -> Vec<String> {
    vec!["1".into(), "true".into()]
}

/// The outcome attribute and which of its values count as positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    /// Compared case-insensitively against the value's label
    /// (`true`, `1`, ...).
    #[serde(default = "default_positive_labels")]
    pub positive_labels: Vec<String>,
}

impl OutcomeSpec {
    pub fn new(name: impl Into<String>) -> Self {
        OutcomeSpec {
            name: name.into(),
            positive_labels: default_positive_labels(),
        }
    }

    fn is_positive(&self, value: &AttrValue) -> bool {
        let label = value.to_label();
        let label = label.trim();
        self.positive_labels
            .iter()
            .any(|p| p.eq_ignore_ascii_case(label))
    }
}

/// Last observed value of `name`: trace attributes first, then events in
/// order, later observations overriding earlier ones.
fn last_value<'a>(trace: &'a Trace, name: &str, include_trace: bool) -> Option<&'a AttrValue> {
    let from_events = trace.events.iter().rev().find_map(|e| e.attribute(name));
    from_events.or_else(|| {
        include_trace
            .then(|| trace.attributes.iter().rev().find(|(k, _)| k == name))
            .flatten()
            .map(|(_, v)| v)
    })
}

fn observe<'a>(trace: &'a Trace, attr: &AttributeSchema) -> Observed<'a> {
    match &attr.source {
        AttributeSource::Raw => Observed::Attr(last_value(trace, &attr.name, true)),
        AttributeSource::LastValue(source) => Observed::Attr(last_value(trace, source, false)),
        AttributeSource::Count(activity) => Observed::Count(
            trace
                .events
                .iter()
                .filter(|e| e.activity == *activity)
                .count(),
        ),
    }
}

enum Observed<'a> {
    Attr(Option<&'a AttrValue>),
    Count(usize),
}

fn coerce(attr: &AttributeSchema, observed: Observed<'_>, case_id: &str) -> Result<Value> {
    match (attr.kind, observed) {
        (_, Observed::Attr(None)) => Ok(Value::Missing),
        (AttributeKind::Numeric, Observed::Count(n)) => Ok(Value::Number(n as f64)),
        (AttributeKind::Categorical, Observed::Count(n)) => Ok(Value::Label(n.to_string())),
        (AttributeKind::Categorical, Observed::Attr(Some(v))) => Ok(Value::Label(v.to_label())),
        (AttributeKind::Numeric, Observed::Attr(Some(v))) => v
            .as_f64()
            .map(Value::Number)
            .ok_or_else(|| LogError::TypeConflict {
                attribute: attr.name.clone(),
                case_id: case_id.to_string(),
                expected: "a number",
                found: v.to_label(),
            }),
    }
}

/// Encodes every case with an observed outcome into one [`CaseRecord`].
///
/// `schema` must contain the outcome attribute; it is removed from the
/// feature columns of the resulting table.
pub fn encode_cases(
    log: &EventLog,
    schema: &[AttributeSchema],
    outcome: &OutcomeSpec,
) -> Result<CaseTable> {
    let mut seen = HashSet::new();
    for attr in schema {
        if !seen.insert(attr.name.as_str()) {
            return Err(LogError::DuplicateAttribute(attr.name.clone()));
        }
    }
    let outcome_attr = schema
        .iter()
        .find(|a| a.name == outcome.name)
        .ok_or_else(|| LogError::OutcomeNotInSchema(outcome.name.clone()))?;
    if outcome_attr.controllable {
        return Err(LogError::ControllableOutcome(outcome.name.clone()));
    }
    let features: Vec<AttributeSchema> = schema
        .iter()
        .filter(|a| a.name != outcome.name)
        .cloned()
        .collect();

    let mut rows = Vec::with_capacity(log.len());
    let mut dropped = 0usize;
    for trace in log.traces() {
        let y = match observe(trace, outcome_attr) {
            Observed::Attr(Some(v)) => outcome.is_positive(v) as u8,
            Observed::Attr(None) => {
                dropped += 1;
                continue;
            }
            Observed::Count(n) => (n > 0) as u8,
        };
        let values = features
            .iter()
            .map(|a| coerce(a, observe(trace, a), &trace.case_id))
            .collect::<Result<Vec<_>>>()?;
        rows.push(CaseRecord {
            case_id: trace.case_id.clone(),
            features: values,
            outcome: y,
        });
    }
    if rows.is_empty() && !log.is_empty() {
        return Err(LogError::OutcomeNeverObserved(outcome.name.clone()));
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        let msg = format!(
            "{dropped} case(s) dropped: outcome {:?} missing",
            outcome.name
        );
        log::info!("{msg}");
        warnings.push(msg);
    }
    Ok(CaseTable {
        schema: features,
        outcome_name: outcome.name.clone(),
        rows,
        bins: BTreeMap::new(),
        warnings,
    })
}
