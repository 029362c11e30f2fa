//! Uplift trees over observational treated/control groups.
//!
//! For a [`Treatment`], cases already holding every target value form the
//! treated group and cases holding every source value form the control
//! group. The tree then looks for subgroups where the outcome distributions
//! of the two groups differ most, penalizing tests that send treated and
//! control cases to different sides in different proportions (a symptom of
//! confounding).

mod criterion;
mod segments;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action_rules::Treatment;
use crate::event_log::{CaseTable, Value, MISSING_LABEL};

pub use criterion::{
    divergence, gain, normalization, split_penalty, DivergenceKind, GroupCounts, NodeStats,
};
pub use segments::{describe, extract_segments, to_dot, Segment};
pub use tree::{best_split, build_tree, CandidateSplit, Node, Split, UpliftTree};

#[derive(Debug, Error)]
pub enum UpliftError {
    #[error("probabilities {0:?} are not a distribution with usable support")]
    Probability([f64; 2]),
    #[error("positivity violated for treatment {treatment}: {treated} treated and {control} control cases")]
    Positivity {
        treatment: String,
        treated: usize,
        control: usize,
    },
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("treatment attribute {0:?} has not been discretized")]
    NotDiscretized(String),
    #[error("invalid tree parameter: {0}")]
    Params(String),
}

pub type Result<T, E = UpliftError> = std::result::Result<T, E>;

/// Growth limits and the split criterion of an uplift tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_treatment: usize,
    /// Weight of the parent estimate when smoothing node probabilities.
    pub n_reg: f64,
    pub divergence: DivergenceKind,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 5,
            min_samples_split: 200,
            min_samples_treatment: 50,
            n_reg: 100.0,
            divergence: DivergenceKind::Kl,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_reg.is_finite() && self.n_reg > 0.0) {
            return Err(UpliftError::Params(format!(
                "n_reg must be positive, got {}",
                self.n_reg
            )));
        }
        if self.min_samples_split < 2 {
            return Err(UpliftError::Params(format!(
                "min_samples_split must be at least 2, got {}",
                self.min_samples_split
            )));
        }
        Ok(())
    }
}

/// Row indices of the treated, control and excluded cases. Each list is
/// ascending and together they partition the table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    pub excluded: Vec<usize>,
}

/// Treated rows hold every target value of `treatment`, control rows every
/// source value; all other rows are excluded.
pub fn assign_groups(table: &CaseTable, treatment: &Treatment) -> Result<TreatmentAssignment> {
    let columns = treatment
        .changes
        .iter()
        .map(|c| {
            table
                .attribute_index(&c.attribute)
                .map(|a| (a, c))
                .ok_or_else(|| UpliftError::UnknownAttribute(c.attribute.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = TreatmentAssignment {
        treated: Vec::new(),
        control: Vec::new(),
        excluded: Vec::new(),
    };
    for row in 0..table.len() {
        let mut treated = true;
        let mut control = true;
        for &(a, change) in &columns {
            let label = table
                .value(row, a)
                .label()
                .ok_or_else(|| UpliftError::NotDiscretized(change.attribute.clone()))?;
            treated &= label == change.to;
            control &= label == change.from;
        }
        match (treated, control) {
            (true, _) => out.treated.push(row),
            (_, true) => out.control.push(row),
            _ => out.excluded.push(row),
        }
    }
    if out.treated.is_empty() || out.control.is_empty() {
        return Err(UpliftError::Positivity {
            treatment: treatment.to_string(),
            treated: out.treated.len(),
            control: out.control.len(),
        });
    }
    Ok(out)
}

/// How a split routes rows: numbers at or below the threshold, or rows with
/// the category, go left; everything else (missing numbers included) goes
/// right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTest {
    Threshold(f64),
    Category(String),
}

impl SplitTest {
    pub fn goes_left(&self, value: &Value) -> bool {
        match self {
            SplitTest::Threshold(t) => value.numeric().is_some_and(|x| x <= *t),
            SplitTest::Category(c) => value.label().unwrap_or(MISSING_LABEL) == c,
        }
    }
}

/// One side of a split test along a root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub attribute: String,
    pub test: SplitTest,
    /// True for the left branch of the test.
    pub holds: bool,
}

impl Condition {
    pub fn matches(&self, value: &Value) -> bool {
        self.test.goes_left(value) == self.holds
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match (&self.test, self.holds) {
            (SplitTest::Threshold(_), true) => "<=",
            (SplitTest::Threshold(_), false) => ">",
            (SplitTest::Category(_), true) => "=",
            (SplitTest::Category(_), false) => "!=",
        };
        match &self.test {
            SplitTest::Threshold(t) => write!(
                f,
                "{} {op} {}",
                self.attribute,
                crate::event_log::fmt_num(*t)
            ),
            SplitTest::Category(c) => write!(f, "{} {op} {c}", self.attribute),
        }
    }
}
