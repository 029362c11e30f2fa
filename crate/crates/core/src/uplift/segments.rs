use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Condition, Node, Result, SplitTest, UpliftError, UpliftTree};
use crate::event_log::{fmt_num, CaseTable, MISSING_LABEL};

/// A leaf of an uplift tree: the conditions leading to it and its estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub conditions: Vec<Condition>,
    /// Readable conjunction with numeric bounds merged per attribute.
    pub predicate: String,
    pub uplift: f64,
    pub p_treat: f64,
    pub p_ctrl: f64,
    pub n_treat: usize,
    pub n_ctrl: usize,
    /// All table rows satisfying the conditions, whatever their group.
    pub n_reachable: usize,
}

impl Segment {
    pub fn matches(&self, table: &CaseTable, row: usize) -> bool {
        self.conditions
            .iter()
            .all(|c| table.get(row, &c.attribute).is_some_and(|v| c.matches(v)))
    }
}

/// `lo < x <= hi`, `x = v`, `x not in {v, w}`, ... joined by `and`.
pub fn describe(conditions: &[Condition]) -> String {
    describe_with_domains(conditions, &BTreeMap::new())
}

/// As [`describe`], but an attribute whose exclusions leave a single value
/// of its domain reads as `x = v`.
fn describe_with_domains(
    conditions: &[Condition],
    domains: &BTreeMap<&str, BTreeSet<&str>>,
) -> String {
    let mut attributes: Vec<&str> = Vec::new();
    for c in conditions {
        if !attributes.contains(&c.attribute.as_str()) {
            attributes.push(&c.attribute);
        }
    }
    let parts: Vec<String> = attributes
        .iter()
        .map(|&name| {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            let mut equal = None;
            let mut excluded = Vec::new();
            for c in conditions.iter().filter(|c| c.attribute == name) {
                match (&c.test, c.holds) {
                    (SplitTest::Threshold(t), true) => hi = hi.min(*t),
                    (SplitTest::Threshold(t), false) => lo = lo.max(*t),
                    (SplitTest::Category(v), true) => equal = Some(v.as_str()),
                    (SplitTest::Category(v), false) => excluded.push(v.as_str()),
                }
            }
            let mut clauses = Vec::new();
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => {
                    clauses.push(format!("{} < {name} <= {}", fmt_num(lo), fmt_num(hi)))
                }
                (false, true) => clauses.push(format!("{name} <= {}", fmt_num(hi))),
                (true, false) => clauses.push(format!("{name} > {}", fmt_num(lo))),
                (false, false) => {}
            }
            let remaining: Vec<&str> = domains
                .get(name)
                .map(|d| {
                    d.iter()
                        .copied()
                        .filter(|v| !excluded.contains(v))
                        .collect()
                })
                .unwrap_or_default();
            if let Some(v) = equal {
                clauses.push(format!("{name} = {v}"));
            } else if !excluded.is_empty() && remaining.len() == 1 {
                clauses.push(format!("{name} = {}", remaining[0]));
            } else if excluded.len() == 1 {
                clauses.push(format!("{name} != {}", excluded[0]));
            } else if !excluded.is_empty() {
                clauses.push(format!("{name} not in {{{}}}", excluded.join(", ")));
            }
            clauses.join(" and ")
        })
        .collect();
    if parts.is_empty() {
        "all cases".to_string()
    } else {
        parts.join(" and ")
    }
}

/// One segment per leaf with uplift at least `min_uplift`, by descending
/// uplift and then predicate text.
pub fn extract_segments(
    tree: &UpliftTree,
    table: &CaseTable,
    min_uplift: f64,
) -> Result<Vec<Segment>> {
    let mut domains: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for name in &tree.features {
        let a = table
            .attribute_index(name)
            .ok_or_else(|| UpliftError::UnknownAttribute(name.clone()))?;
        let labels = table
            .rows
            .iter()
            .filter(|r| r.features[a].numeric().is_none())
            .map(|r| r.features[a].label().unwrap_or(MISSING_LABEL));
        domains.insert(name, labels.collect());
    }
    let mut out: Vec<Segment> = tree
        .root
        .leaves()
        .into_iter()
        .filter(|(_, leaf)| leaf.stats.uplift() >= min_uplift)
        .map(|(conditions, leaf)| {
            let mut segment = Segment {
                predicate: describe_with_domains(&conditions, &domains),
                conditions,
                uplift: leaf.stats.uplift(),
                p_treat: leaf.stats.p_treat,
                p_ctrl: leaf.stats.p_ctrl,
                n_treat: leaf.stats.n_treat,
                n_ctrl: leaf.stats.n_ctrl,
                n_reachable: 0,
            };
            segment.n_reachable = (0..table.len())
                .filter(|&r| segment.matches(table, r))
                .count();
            segment
        })
        .collect();
    out.sort_by(|a, b| {
        b.uplift
            .total_cmp(&a.uplift)
            .then_with(|| a.predicate.cmp(&b.predicate))
    });
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: one box per node with its group sizes, smoothed
/// probabilities and uplift; internal nodes also show their test.
pub fn to_dot(tree: &UpliftTree) -> String {
    fn node(out: &mut String, n: &Node, next: &mut usize) -> usize {
        let id = *next;
        *next += 1;
        let s = &n.stats;
        let mut label = format!(
            "n_treat={} n_ctrl={}\\np_treat={:.4} p_ctrl={:.4}\\nuplift={:.4}",
            s.n_treat,
            s.n_ctrl,
            s.p_treat,
            s.p_ctrl,
            s.uplift()
        );
        if let Some(split) = &n.split {
            let test = Condition {
                attribute: split.attribute.clone(),
                test: split.test.clone(),
                holds: true,
            };
            label = format!("{}\\n{label}", escape(&test.to_string()));
        }
        let _ = writeln!(out, "  n{id} [label=\"{label}\"];");
        if let Some(split) = &n.split {
            let left = node(out, &split.left, next);
            let _ = writeln!(out, "  n{id} -> n{left} [label=\"yes\"];");
            let right = node(out, &split.right, next);
            let _ = writeln!(out, "  n{id} -> n{right} [label=\"no\"];");
        }
        id
    }
    let mut out = String::new();
    let _ = writeln!(out, "digraph uplift {{");
    let _ = writeln!(out, "  label=\"{}\";", escape(&tree.treatment.to_string()));
    let _ = writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];");
    node(&mut out, &tree.root, &mut 0);
    out.push_str("}\n");
    out
}
