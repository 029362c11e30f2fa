use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ActionRule, ActionTerm, AtomicActionTerm, Result, RuleError, Treatment};

#[derive(Serialize, Deserialize)]
struct StableRecord {
    attribute: String,
    value: String,
}

#[derive(Serialize, Deserialize)]
struct ChangeRecord {
    attribute: String,
    from: String,
    to: String,
}

impl From<&AtomicActionTerm> for ChangeRecord {
    fn from(t: &AtomicActionTerm) -> Self {
        ChangeRecord {
            attribute: t.attribute.clone(),
            from: t.from.clone(),
            to: t.to.clone(),
        }
    }
}

impl From<ChangeRecord> for AtomicActionTerm {
    fn from(c: ChangeRecord) -> Self {
        AtomicActionTerm::change(c.attribute, c.from, c.to)
    }
}

#[derive(Serialize, Deserialize)]
struct RuleRecord {
    stable: Vec<StableRecord>,
    flexible: Vec<ChangeRecord>,
    outcome: ChangeRecord,
    support: f64,
    confidence: f64,
    /// Human-readable form; ignored when reading.
    #[serde(default)]
    text: String,
}

#[derive(Serialize, Deserialize)]
struct RulesFile {
    rules: Vec<RuleRecord>,
}

#[derive(Serialize, Deserialize)]
struct TreatmentRecord {
    changes: Vec<ChangeRecord>,
    #[serde(default)]
    text: String,
}

#[derive(Serialize, Deserialize)]
struct TreatmentsFile {
    treatments: Vec<TreatmentRecord>,
}

fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes rules as pretty-printed JSON. Reading the file back and writing it
/// again reproduces it byte for byte.
pub fn write_rules<W: Write>(rules: &[ActionRule], out: W) -> Result<()> {
    let file = RulesFile {
        rules: rules
            .iter()
            .map(|r| RuleRecord {
                stable: r
                    .antecedent
                    .stable_terms()
                    .map(|t| StableRecord {
                        attribute: t.attribute.clone(),
                        value: t.from.clone(),
                    })
                    .collect(),
                flexible: r
                    .antecedent
                    .flexible_terms()
                    .map(ChangeRecord::from)
                    .collect(),
                outcome: ChangeRecord::from(&r.consequent),
                support: r.support,
                confidence: r.confidence,
                text: r.to_string(),
            })
            .collect(),
    };
    write_json(out, &file)
}

pub fn read_rules<R: Read>(input: R) -> Result<Vec<ActionRule>> {
    let file: RulesFile = serde_json::from_reader(input)?;
    file.rules
        .into_iter()
        .map(|r| {
            let mut terms: Vec<AtomicActionTerm> = r
                .stable
                .into_iter()
                .map(|s| AtomicActionTerm::stable(s.attribute, s.value))
                .collect();
            for c in r.flexible {
                if c.from == c.to {
                    return Err(RuleError::InvalidRule(format!(
                        "flexible term on {:?} does not change the value",
                        c.attribute
                    )));
                }
                terms.push(c.into());
            }
            Ok(ActionRule {
                antecedent: ActionTerm::new(terms)?,
                consequent: r.outcome.into(),
                support: r.support,
                confidence: r.confidence,
            })
        })
        .collect()
}

pub fn write_treatments<W: Write>(treatments: &[Treatment], out: W) -> Result<()> {
    let file = TreatmentsFile {
        treatments: treatments
            .iter()
            .map(|t| TreatmentRecord {
                changes: t.changes.iter().map(ChangeRecord::from).collect(),
                text: t.to_string(),
            })
            .collect(),
    };
    write_json(out, &file)
}

pub fn read_treatments<R: Read>(input: R) -> Result<Vec<Treatment>> {
    let file: TreatmentsFile = serde_json::from_reader(input)?;
    file.treatments
        .into_iter()
        .map(|t| Treatment::new(t.changes.into_iter().map(Into::into).collect()))
        .collect()
}
