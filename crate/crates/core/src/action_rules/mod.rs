//! Action rules and candidate treatments.
//!
//! An action rule pairs a class-0 and a class-1 classification rule that
//! share their uncontrollable conditions and disagree on the value of every
//! controllable condition:
//!
//! ```text
//! [(CreditScore: low) ∧ (NoOfTerms: [6-48] → [97-120])] ⟹ [Selected: 0 → 1]
//! ```
//!
//! Its support is the smaller of the two rules' supports and its confidence
//! the product of their confidences.

mod io;
mod mining;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_rules, read_treatments, write_rules, write_treatments};
pub use mining::{
    measure, mine_action_rules, mine_classification_rules, ClassificationRule, Condition,
    RuleParams,
};

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("case table is empty")]
    EmptyTable,
    #[error("attribute {0:?} is numeric and has not been discretized")]
    NotDiscretized(String),
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("{name} must be in (0, 1], got {value}")]
    Threshold { name: &'static str, value: f64 },
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("rules file: {0}")]
    Format(#[from] serde_json::Error),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RuleError> = std::result::Result<T, E>;

/// `(attribute: from → to)`; a stable term has `from == to`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AtomicActionTerm {
    pub attribute: String,
    pub from: String,
    pub to: String,
}

impl AtomicActionTerm {
    pub fn stable(attribute: impl Into<String>, value: impl Into<String>) -> Self {
        let value = value.into();
        AtomicActionTerm {
            attribute: attribute.into(),
            from: value.clone(),
            to: value,
        }
    }

    pub fn change(
        attribute: impl Into<String>,
        from: impl Into<String>,
        to: impl Into<String>,
    ) -> Self {
        AtomicActionTerm {
            attribute: attribute.into(),
            from: from.into(),
            to: to.into(),
        }
    }

    pub fn is_stable(&self) -> bool {
        self.from == self.to
    }
}

impl fmt::Display for AtomicActionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_stable() {
            write!(f, "({}: {})", self.attribute, self.from)
        } else {
            write!(f, "({}: {} → {})", self.attribute, self.from, self.to)
        }
    }
}

/// A conjunction of atomic terms over pairwise distinct attributes, kept
/// sorted by attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionTerm {
    terms: Vec<AtomicActionTerm>,
}

impl ActionTerm {
    pub fn new(mut terms: Vec<AtomicActionTerm>) -> Result<Self> {
        terms.sort();
        if let Some(w) = terms.windows(2).find(|w| w[0].attribute == w[1].attribute) {
            return Err(RuleError::InvalidRule(format!(
                "attribute {:?} appears twice",
                w[0].attribute
            )));
        }
        Ok(ActionTerm { terms })
    }

    pub fn terms(&self) -> &[AtomicActionTerm] {
        &self.terms
    }

    pub fn stable_terms(&self) -> impl Iterator<Item = &AtomicActionTerm> {
        self.terms.iter().filter(|t| t.is_stable())
    }

    pub fn flexible_terms(&self) -> impl Iterator<Item = &AtomicActionTerm> {
        self.terms.iter().filter(|t| !t.is_stable())
    }
}

impl fmt::Display for ActionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .stable_terms()
            .chain(self.flexible_terms())
            .map(ToString::to_string)
            .collect();
        f.write_str(&parts.join(" ∧ "))
    }
}

/// `[antecedent ⟹ (outcome: 0 → 1)]` with its measures.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRule {
    pub antecedent: ActionTerm,
    pub consequent: AtomicActionTerm,
    pub support: f64,
    pub confidence: f64,
}

impl ActionRule {
    pub fn treatment(&self) -> Treatment {
        Treatment {
            changes: self.antecedent.flexible_terms().cloned().collect(),
        }
    }

    /// Deterministic ordering key: the terms, then the consequent.
    fn key(&self) -> (&ActionTerm, &AtomicActionTerm) {
        (&self.antecedent, &self.consequent)
    }
}

impl fmt::Display for ActionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.consequent;
        write!(
            f,
            "[{}] ⟹ [{}: {} → {}]",
            self.antecedent, c.attribute, c.from, c.to
        )
    }
}

/// The controllable changes of an action rule, sorted by attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Treatment {
    pub changes: Vec<AtomicActionTerm>,
}

impl Treatment {
    pub fn new(mut changes: Vec<AtomicActionTerm>) -> Result<Self> {
        if changes.is_empty() {
            return Err(RuleError::InvalidRule("treatment without changes".into()));
        }
        changes.sort();
        if let Some(t) = changes.iter().find(|t| t.is_stable()) {
            return Err(RuleError::InvalidRule(format!(
                "treatment term on {:?} does not change the value",
                t.attribute
            )));
        }
        if let Some(w) = changes
            .windows(2)
            .find(|w| w[0].attribute == w[1].attribute)
        {
            return Err(RuleError::InvalidRule(format!(
                "attribute {:?} changed twice",
                w[0].attribute
            )));
        }
        Ok(Treatment { changes })
    }

    pub fn attributes(&self) -> impl Iterator<Item = &str> {
        self.changes.iter().map(|c| c.attribute.as_str())
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.changes.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" ∧ "))
    }
}

/// Distinct change sets of `rules`, by descending best support among the
/// rules that carry them, then in term order.
pub fn extract_treatments(rules: &[ActionRule]) -> Vec<Treatment> {
    let mut best: BTreeMap<Treatment, f64> = BTreeMap::new();
    for rule in rules {
        let t = rule.treatment();
        if t.changes.is_empty() {
            continue;
        }
        let entry = best.entry(t).or_insert(f64::NEG_INFINITY);
        *entry = entry.max(rule.support);
    }
    let mut out: Vec<(Treatment, f64)> = best.into_iter().collect();
    out.sort_by(|(ta, sa), (tb, sb)| sb.total_cmp(sa).then_with(|| ta.cmp(tb)));
    out.into_iter().map(|(t, _)| t).collect()
}

pub(crate) fn sort_rules(rules: &mut [ActionRule]) {
    rules.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then_with(|| b.confidence.total_cmp(&a.confidence))
            .then_with(|| a.key().cmp(&b.key()))
    });
}
