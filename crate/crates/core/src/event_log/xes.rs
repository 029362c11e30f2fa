//! XES reader.
//!
//! Reads the `log > trace > event` structure and the typed attribute elements
//! (`string`, `id`, `int`, `float`, `boolean`, `date`). Log-level content
//! (`extension`, `global`, `classifier`, log attributes) and nested
//! meta-attributes are skipped.

use std::io::BufRead;

use chrono::{DateTime, FixedOffset};
use quick_xml::events::{BytesStart, Event as XmlEvent};
use quick_xml::Reader;

use super::{parse_timestamp, AttrValue, Event, EventLog, LogError, Result, Trace};

const ACTIVITY_KEY: &str = "concept:name";
const TIMESTAMP_KEY: &str = "time:timestamp";

#[derive(Debug)]
enum Frame {
    Log,
    Trace,
    Event,
    Skip,
}

#[derive(Default)]
struct PendingEvent {
    activity: Option<String>,
    timestamp: Option<DateTime<FixedOffset>>,
    attributes: Vec<(String, AttrValue)>,
}

#[derive(Default)]
struct PendingTrace {
    case_id: Option<String>,
    attributes: Vec<(String, AttrValue)>,
    events: Vec<PendingEvent>,
}

enum Parsed {
    Value(String, AttrValue),
    Timestamp(String, DateTime<FixedOffset>, String),
    Ignored,
}

fn xml_error(offset: u64, message: impl ToString) -> LogError {
    LogError::Xml {
        offset,
        message: message.to_string(),
    }
}

fn upsert(attrs: &mut Vec<(String, AttrValue)>, key: String, value: AttrValue) {
    match attrs.iter_mut().find(|(k, _)| *k == key) {
        Some(slot) => slot.1 = value,
        None => attrs.push((key, value)),
    }
}

fn parse_attribute(e: &BytesStart<'_>, offset: u64) -> Result<Parsed> {
    let tag = e.local_name();
    let tag = std::str::from_utf8(tag.as_ref()).map_err(|err| xml_error(offset, err))?;
    let mut key = None;
    let mut value = None;
    for attr in e.attributes() {
        let attr = attr.map_err(|err| xml_error(offset, err))?;
        let text = attr
            .unescape_value()
            .map_err(|err| xml_error(offset, err))?
            .into_owned();
        match attr.key.local_name().as_ref() {
            b"key" => key = Some(text),
            b"value" => value = Some(text),
            _ => {}
        }
    }
    let (Some(key), Some(literal)) = (key, value) else {
        return match tag {
            "list" | "container" => Ok(Parsed::Ignored),
            _ => Err(xml_error(offset, format!("<{tag}> without key/value"))),
        };
    };
    let bad = |kind: &'static str, key: &str, literal: &str| LogError::AttributeValue {
        key: key.to_string(),
        kind,
        literal: literal.to_string(),
    };
    let parsed = match tag {
        "string" | "id" => AttrValue::Text(literal),
        "int" => AttrValue::Int(
            literal
                .trim()
                .parse()
                .map_err(|_| bad("int", &key, &literal))?,
        ),
        "float" => AttrValue::Real(
            literal
                .trim()
                .parse()
                .map_err(|_| bad("float", &key, &literal))?,
        ),
        "boolean" => match literal.trim() {
            "true" | "TRUE" | "True" | "1" => AttrValue::Bool(true),
            "false" | "FALSE" | "False" | "0" => AttrValue::Bool(false),
            _ => return Err(bad("boolean", &key, &literal)),
        },
        "date" => {
            let ts = parse_timestamp(&literal)?;
            return Ok(Parsed::Timestamp(key, ts, literal));
        }
        _ => return Ok(Parsed::Ignored),
    };
    Ok(Parsed::Value(key, parsed))
}

fn is_attribute_tag(name: &[u8]) -> bool {
    matches!(
        name,
        b"string" | b"id" | b"int" | b"float" | b"boolean" | b"date" | b"list" | b"container"
    )
}

fn finish_trace(index: usize, trace: PendingTrace) -> Result<Trace> {
    let case_id = trace
        .case_id
        .ok_or(LogError::MissingCaseId { trace: index })?;
    let mut out = Trace::new(case_id.clone());
    out.attributes = trace.attributes;
    for ev in trace.events {
        let activity = ev.activity.ok_or_else(|| LogError::MissingActivity {
            trace: case_id.clone(),
        })?;
        let timestamp = ev.timestamp.ok_or_else(|| LogError::MissingTimestamp {
            trace: case_id.clone(),
        })?;
        out.events.push(Event {
            activity,
            case_id: case_id.clone(),
            timestamp,
            attributes: ev.attributes,
        });
    }
    Ok(out)
}

/// Parses an XES document into an [`EventLog`].
///
/// Each trace's `concept:name` becomes its case id; each event's
/// `concept:name` and `time:timestamp` become activity and timestamp. Every
/// other key is kept as a typed attribute (dates other than the timestamp are
/// kept as text).
pub fn parse_xes<R: BufRead>(input: R) -> Result<EventLog> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut stack: Vec<Frame> = Vec::new();
    let mut log = EventLog::new();
    let mut trace: Option<PendingTrace> = None;
    let mut event: Option<PendingEvent> = None;
    let mut trace_index = 0usize;
    let mut saw_log = false;

    loop {
        let offset = reader.buffer_position();
        let xml = reader
            .read_event_into(&mut buf)
            .map_err(|err| xml_error(reader.error_position(), err))?;
        let (start, is_empty) = match &xml {
            XmlEvent::Start(e) => (Some(e), false),
            XmlEvent::Empty(e) => (Some(e), true),
            XmlEvent::End(_) => {
                match stack.pop() {
                    Some(Frame::Event) => {
                        let ev = event.take().unwrap_or_default();
                        trace.get_or_insert_with(Default::default).events.push(ev);
                    }
                    Some(Frame::Trace) => {
                        let t = trace.take().unwrap_or_default();
                        log.push_trace(finish_trace(trace_index, t)?);
                        trace_index += 1;
                    }
                    Some(_) => {}
                    None => return Err(xml_error(offset, "unbalanced end tag")),
                }
                (None, false)
            }
            XmlEvent::Eof => break,
            _ => (None, false),
        };
        let Some(e) = start else {
            buf.clear();
            continue;
        };
        let name = e.local_name();
        let name = name.as_ref();
        let frame = match (stack.last(), name) {
            (None, b"log") => {
                saw_log = true;
                Frame::Log
            }
            (None, _) => {
                return Err(xml_error(offset, "root element is not <log>"));
            }
            (Some(Frame::Log), b"trace") => {
                trace = Some(PendingTrace::default());
                Frame::Trace
            }
            (Some(Frame::Trace), b"event") => {
                event = Some(PendingEvent::default());
                Frame::Event
            }
            (Some(Frame::Trace), tag) if is_attribute_tag(tag) => {
                let t = trace.get_or_insert_with(Default::default);
                match parse_attribute(e, offset)? {
                    Parsed::Value(key, AttrValue::Text(s)) if key == ACTIVITY_KEY => {
                        t.case_id = Some(s);
                    }
                    Parsed::Value(key, v) => upsert(&mut t.attributes, key, v),
                    Parsed::Timestamp(key, _, literal) => {
                        upsert(&mut t.attributes, key, AttrValue::Text(literal))
                    }
                    Parsed::Ignored => {}
                }
                Frame::Skip
            }
            (Some(Frame::Event), tag) if is_attribute_tag(tag) => {
                let ev = event.get_or_insert_with(Default::default);
                match parse_attribute(e, offset)? {
                    Parsed::Value(key, AttrValue::Text(s)) if key == ACTIVITY_KEY => {
                        ev.activity = Some(s);
                    }
                    Parsed::Timestamp(key, ts, _) if key == TIMESTAMP_KEY => {
                        ev.timestamp = Some(ts);
                    }
                    Parsed::Timestamp(key, _, literal) => {
                        upsert(&mut ev.attributes, key, AttrValue::Text(literal))
                    }
                    Parsed::Value(key, v) => upsert(&mut ev.attributes, key, v),
                    Parsed::Ignored => {}
                }
                Frame::Skip
            }
            _ => Frame::Skip,
        };
        if is_empty {
            // Self-closing trace/event elements still count.
            match frame {
                Frame::Event => {
                    let ev = event.take().unwrap_or_default();
                    trace.get_or_insert_with(Default::default).events.push(ev);
                }
                Frame::Trace => {
                    let t = trace.take().unwrap_or_default();
                    log.push_trace(finish_trace(trace_index, t)?);
                    trace_index += 1;
                }
                _ => {}
            }
        } else {
            stack.push(frame);
        }
        buf.clear();
    }
    if !stack.is_empty() {
        return Err(xml_error(
            reader.buffer_position(),
            "unexpected end of input inside an open element",
        ));
    }
    if !saw_log {
        return Err(xml_error(0, "no <log> element"));
    }
    Ok(log.finish())
}
