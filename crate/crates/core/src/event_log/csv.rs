use std::io::{Read, Write};

use chrono::{DateTime, FixedOffset, NaiveDateTime, SecondsFormat};
use serde::{Deserialize, Serialize};

use super::{parse_timestamp, AttrValue, Event, EventLog, LogError, Result};

/// Which CSV columns hold the mandatory event fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub case_id: String,
    pub activity: String,
    pub timestamp: String,
    /// chrono format string; RFC 3339 and `YYYY-MM-DD HH:MM:SS` are tried
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_format: Option<String>,
    /// Attribute columns to keep. All remaining columns when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Vec<String>>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            case_id: "case_id".into(),
            activity: "activity".into(),
            timestamp: "timestamp".into(),
            timestamp_format: None,
            attributes: None,
        }
    }
}

fn parse_with_format(text: &str, format: Option<&str>) -> Result<DateTime<FixedOffset>> {
    let Some(format) = format else {
        return parse_timestamp(text);
    };
    let t = text.trim();
    DateTime::parse_from_str(t, format)
        .or_else(|_| NaiveDateTime::parse_from_str(t, format).map(|n| n.and_utc().fixed_offset()))
        .map_err(|_| LogError::Timestamp {
            literal: text.to_string(),
        })
}

/// Parses a CSV event log (header row required, one event per row).
///
/// Attribute cells are kept as text; typing happens at encoding time against
/// the schema. Empty cells are treated as absent.
pub fn parse_csv<R: Read>(input: R, columns: &ColumnMap) -> Result<EventLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LogError::MissingColumn {
                column: name.to_string(),
            })
    };
    let case_col = find(&columns.case_id)?;
    let activity_col = find(&columns.activity)?;
    let ts_col = find(&columns.timestamp)?;
    let attribute_cols: Vec<(usize, String)> = match &columns.attributes {
        Some(names) => names
            .iter()
            .map(|n| find(n).map(|i| (i, n.clone())))
            .collect::<Result<_>>()?,
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| ![case_col, activity_col, ts_col].contains(i))
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };

    let mut log = EventLog::new();
    for (index, record) in reader.records().enumerate() {
        let record = record?;
        // Header is line 1; data rows are numbered from 1.
        let row = index as u64 + 1;
        let case_id = record.get(case_col).unwrap_or("").trim();
        if case_id.is_empty() {
            return Err(LogError::EmptyCaseId { row });
        }
        let activity = record.get(activity_col).unwrap_or("");
        if activity.is_empty() {
            return Err(LogError::EmptyActivity { row });
        }
        let timestamp = parse_with_format(
            record.get(ts_col).unwrap_or(""),
            columns.timestamp_format.as_deref(),
        )?;
        let attributes = attribute_cols
            .iter()
            .filter_map(|(i, name)| {
                let cell = record.get(*i)?;
                (!cell.is_empty()).then(|| (name.clone(), AttrValue::Text(cell.to_string())))
            })
            .collect();
        log.push_event(Event {
            activity: activity.to_string(),
            case_id: case_id.to_string(),
            timestamp,
            attributes,
        });
    }
    Ok(log.finish())
}

/// Writes a log as CSV with columns `case_id, activity, timestamp` followed
/// by every attribute name in first-seen order. Trace-level attributes are
/// not written.
pub fn write_csv<W: Write>(log: &EventLog, out: W) -> Result<()> {
    let mut names: Vec<&str> = Vec::new();
    for event in log.traces().flat_map(|t| &t.events) {
        for (k, _) in &event.attributes {
            if !names.contains(&k.as_str()) {
                names.push(k);
            }
        }
    }
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["case_id", "activity", "timestamp"];
    header.extend(&names);
    writer.write_record(&header)?;
    for event in log.traces().flat_map(|t| &t.events) {
        let mut record = vec![
            event.case_id.clone(),
            event.activity.clone(),
            event.timestamp.to_rfc3339_opts(SecondsFormat::Millis, true),
        ];
        record.extend(names.iter().map(|n| {
            event
                .attribute(n)
                .map(AttrValue::to_label)
                .unwrap_or_default()
        }));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
