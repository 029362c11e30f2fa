use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    gain, normalization, Condition, GroupCounts, NodeStats, Result, SplitTest, TreatmentAssignment,
    TreeParams, UpliftError,
};
use crate::action_rules::Treatment;
use crate::event_log::{AttributeKind, CaseTable, MISSING_LABEL};

/// Normalized gains at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;
/// Relative margin a candidate must beat the incumbent by to replace it.
const TIE_TOLERANCE: f64 = 1e-12;
const MAX_THRESHOLDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub attribute: String,
    pub test: SplitTest,
    pub gain: f64,
    pub normalized_gain: f64,
    pub left: Box<Node>,
    pub right: Box<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub stats: NodeStats,
    pub depth: usize,
    pub split: Option<Split>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    /// Leaves in left-to-right order with the conditions leading to them.
    pub fn leaves(&self) -> Vec<(Vec<Condition>, &Node)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_leaves(&mut path, &mut out);
        out
    }

    fn collect_leaves<'a>(
        &'a self,
        path: &mut Vec<Condition>,
        out: &mut Vec<(Vec<Condition>, &'a Node)>,
    ) {
        let Some(split) = &self.split else {
            out.push((path.clone(), self));
            return;
        };
        for (child, holds) in [(&split.left, true), (&split.right, false)] {
            path.push(Condition {
                attribute: split.attribute.clone(),
                test: split.test.clone(),
                holds,
            });
            child.collect_leaves(path, out);
            path.pop();
        }
    }

    pub fn depth_below(&self) -> usize {
        match &self.split {
            None => 0,
            Some(s) => 1 + s.left.depth_below().max(s.right.depth_below()),
        }
    }
}

/// A fitted tree for one treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftTree {
    pub treatment: Treatment,
    pub params: TreeParams,
    /// Attributes offered to the splits, sorted by name.
    pub features: Vec<String>,
    pub root: Node,
}

/// A scored split test with the counts it sends each way.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSplit {
    pub attribute: String,
    pub test: SplitTest,
    pub left: NodeStats,
    pub right: NodeStats,
    pub gain: f64,
    pub normalized_gain: f64,
}

struct Feature {
    name: String,
    column: usize,
    numeric: bool,
}

fn features(table: &CaseTable, names: &[String]) -> Result<Vec<Feature>> {
    let mut out = names
        .iter()
        .map(|name| {
            let column = table
                .attribute_index(name)
                .ok_or_else(|| UpliftError::UnknownAttribute(name.clone()))?;
            let numeric = table.schema[column].kind == AttributeKind::Numeric
                && table
                    .rows
                    .iter()
                    .any(|r| r.features[column].numeric().is_some());
            Ok(Feature {
                name: name.clone(),
                column,
                numeric,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

struct Scorer<'a> {
    parent: &'a NodeStats,
    params: &'a TreeParams,
    best: Option<CandidateSplit>,
}

impl Scorer<'_> {
    fn offer(&mut self, attribute: &str, test: SplitTest, left: GroupCounts, right: GroupCounts) {
        let min_treat = self.params.min_samples_treatment.max(1);
        if left.n_treat < min_treat
            || right.n_treat < min_treat
            || left.n_ctrl == 0
            || right.n_ctrl == 0
        {
            return;
        }
        let (pt, pc, k) = (self.parent.p_treat, self.parent.p_ctrl, self.params.n_reg);
        let left = NodeStats::smoothed(left, pt, pc, k);
        let right = NodeStats::smoothed(right, pt, pc, k);
        let kind = self.params.divergence;
        let g = gain(self.parent, &left, &right, kind);
        let normalized_gain = g / normalization(&left.counts(), &right.counts(), kind);
        let candidate = CandidateSplit {
            attribute: attribute.to_string(),
            test,
            left,
            right,
            gain: g,
            normalized_gain,
        };
        self.consider(candidate);
    }

    fn consider(&mut self, candidate: CandidateSplit) {
        if candidate.normalized_gain <= MIN_GAIN {
            return;
        }
        let better = match &self.best {
            None => true,
            Some(b) => {
                candidate.normalized_gain
                    > b.normalized_gain + TIE_TOLERANCE * b.normalized_gain.abs()
            }
        };
        if better {
            self.best = Some(candidate);
        }
    }
}

/// Thresholds halfway between consecutive distinct values; when there are
/// more than [`MAX_THRESHOLDS`], an evenly spaced subset of them.
fn thresholds(distinct: &[f64]) -> Vec<(usize, f64)> {
    let mids: Vec<(usize, f64)> = distinct
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let mid = w[0] + (w[1] - w[0]) / 2.0;
            (i, if mid < w[1] { mid } else { w[0] })
        })
        .collect();
    let m = mids.len();
    if m <= MAX_THRESHOLDS {
        return mids;
    }
    (0..MAX_THRESHOLDS)
        .map(|j| mids[((2 * j + 1) * m) / (2 * MAX_THRESHOLDS)])
        .collect()
}

fn best_for_feature(
    table: &CaseTable,
    rows: &[(usize, bool)],
    feature: &Feature,
    total: GroupCounts,
    scorer: &mut Scorer<'_>,
) {
    if feature.numeric {
        let mut values: Vec<(f64, bool, bool)> = rows
            .iter()
            .filter_map(|&(r, treated)| {
                let x = table.value(r, feature.column).numeric()?;
                Some((x, treated, table.rows[r].outcome == 1))
            })
            .collect();
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Counts of all rows with a value at or below each distinct value.
        let mut distinct = Vec::new();
        let mut prefix = Vec::new();
        let mut acc = GroupCounts::default();
        for (i, &(x, treated, positive)) in values.iter().enumerate() {
            acc.add(treated, positive);
            if values.get(i + 1).is_none_or(|next| next.0 != x) {
                distinct.push(x);
                prefix.push(acc);
            }
        }
        for (i, t) in thresholds(&distinct) {
            let left = prefix[i];
            scorer.offer(
                &feature.name,
                SplitTest::Threshold(t),
                left,
                total.minus(&left),
            );
        }
    } else {
        let mut by_label: BTreeMap<&str, GroupCounts> = BTreeMap::new();
        for &(r, treated) in rows {
            let label = table
                .value(r, feature.column)
                .label()
                .unwrap_or(MISSING_LABEL);
            by_label
                .entry(label)
                .or_default()
                .add(treated, table.rows[r].outcome == 1);
        }
        for (label, left) in by_label {
            scorer.offer(
                &feature.name,
                SplitTest::Category(label.to_string()),
                left,
                total.minus(&left),
            );
        }
    }
}

fn search(
    table: &CaseTable,
    rows: &[(usize, bool)],
    parent: &NodeStats,
    features: &[Feature],
    params: &TreeParams,
) -> Option<CandidateSplit> {
    let total = parent.counts();
    let per_feature: Vec<Option<CandidateSplit>> = features
        .par_iter()
        .map(|f| {
            let mut scorer = Scorer {
                parent,
                params,
                best: None,
            };
            best_for_feature(table, rows, f, total, &mut scorer);
            scorer.best
        })
        .collect();
    let mut scorer = Scorer {
        parent,
        params,
        best: None,
    };
    for candidate in per_feature.into_iter().flatten() {
        scorer.consider(candidate);
    }
    scorer.best
}

/// The split of `rows` (row index, treated flag) maximizing gain over
/// normalization among `features`, or `None` when no admissible split has a
/// positive normalized gain. Ties go to the attribute first by name, then to
/// the smaller threshold or category label.
pub fn best_split(
    table: &CaseTable,
    rows: &[(usize, bool)],
    parent: &NodeStats,
    features: &[String],
    params: &TreeParams,
) -> Result<Option<CandidateSplit>> {
    let features = self::features(table, features)?;
    Ok(search(table, rows, parent, &features, params))
}

fn counts(table: &CaseTable, rows: &[(usize, bool)]) -> GroupCounts {
    let mut c = GroupCounts::default();
    for &(r, treated) in rows {
        c.add(treated, table.rows[r].outcome == 1);
    }
    c
}

fn grow(
    table: &CaseTable,
    rows: Vec<(usize, bool)>,
    stats: NodeStats,
    depth: usize,
    features: &[Feature],
    params: &TreeParams,
) -> Node {
    let leaf = |stats| Node {
        stats,
        depth,
        split: None,
    };
    if depth >= params.max_depth || rows.len() < params.min_samples_split {
        return leaf(stats);
    }
    let Some(best) = search(table, &rows, &stats, features, params) else {
        return leaf(stats);
    };
    let column = table
        .attribute_index(&best.attribute)
        .expect("feature column");
    let (left_rows, right_rows): (Vec<_>, Vec<_>) = rows
        .into_iter()
        .partition(|&(r, _)| best.test.goes_left(table.value(r, column)));
    let left = grow(table, left_rows, best.left, depth + 1, features, params);
    let right = grow(table, right_rows, best.right, depth + 1, features, params);
    Node {
        stats,
        depth,
        split: Some(Split {
            attribute: best.attribute,
            test: best.test,
            gain: best.gain,
            normalized_gain: best.normalized_gain,
            left: Box::new(left),
            right: Box::new(right),
        }),
    }
}

/// Grows a tree greedily from the treated and control rows of `assignment`.
/// Every attribute outside the treatment is offered to the splits.
pub fn build_tree(
    table: &CaseTable,
    treatment: &Treatment,
    assignment: &TreatmentAssignment,
    params: &TreeParams,
) -> Result<UpliftTree> {
    params.validate()?;
    if assignment.treated.is_empty() || assignment.control.is_empty() {
        return Err(UpliftError::Positivity {
            treatment: treatment.to_string(),
            treated: assignment.treated.len(),
            control: assignment.control.len(),
        });
    }
    let names: Vec<String> = table
        .schema
        .iter()
        .map(|a| a.name.clone())
        .filter(|n| !treatment.attributes().any(|t| t == n))
        .collect();
    let features = features(table, &names)?;
    let mut rows: Vec<(usize, bool)> = assignment
        .treated
        .iter()
        .map(|&r| (r, true))
        .chain(assignment.control.iter().map(|&r| (r, false)))
        .collect();
    rows.sort_unstable();
    let root_counts = counts(table, &rows);
    let pooled = (root_counts.pos_treat + root_counts.pos_ctrl) as f64 / root_counts.total() as f64;
    let root_stats = NodeStats::smoothed(root_counts, pooled, pooled, params.n_reg);
    let root = grow(table, rows, root_stats, 0, &features, params);
    Ok(UpliftTree {
        treatment: treatment.clone(),
        params: *params,
        features: features.into_iter().map(|f| f.name).collect(),
        root,
    })
}
