//! Cost-benefit ranking of (treatment, segment) pairs.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action_rules::Treatment;
use crate::uplift::Segment;

#[derive(Debug, Error)]
pub enum RankError {
    #[error("no cost model for treatment {0} and no default")]
    MissingCostModel(String),
    #[error("cost model for {treatment}: {field} must be a non-negative number, got {value}")]
    InvalidCost {
        treatment: String,
        field: &'static str,
        value: f64,
    },
    #[error("writing recommendations: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = RankError> = std::result::Result<T, E>;

/// Value of one positive outcome and the fixed cost of treating one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub outcome_value: f64,
    pub impression_cost: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            outcome_value: 1.0,
            impression_cost: 0.0,
        }
    }
}

impl CostModel {
    /// Both amounts must be finite and non-negative; `treatment` names the
    /// model in the error.
    pub fn validate(&self, treatment: &str) -> Result<()> {
        for (field, value) in [
            ("outcome_value", self.outcome_value),
            ("impression_cost", self.impression_cost),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(RankError::InvalidCost {
                    treatment: treatment.to_string(),
                    field,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// `n * (u * v - c)`.
pub fn net_value(n: usize, uplift: f64, model: &CostModel) -> f64 {
    n as f64 * (uplift * model.outcome_value - model.impression_cost)
}

/// A default model plus overrides keyed by the treatment's display form,
/// e.g. `(NoOfTerms: [6-48] → [97-120])`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<CostModel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, CostModel>,
}

impl CostModels {
    pub fn uniform(model: CostModel) -> Self {
        CostModels {
            default: Some(model),
            overrides: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.default {
            d.validate("default")?;
        }
        self.overrides.iter().try_for_each(|(k, m)| m.validate(k))
    }

    pub fn for_treatment(&self, treatment: &Treatment) -> Result<CostModel> {
        let key = treatment.to_string();
        let model = self
            .overrides
            .get(&key)
            .or(self.default.as_ref())
            .copied()
            .ok_or_else(|| RankError::MissingCostModel(key.clone()))?;
        model.validate(&key)?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub treatment: Treatment,
    pub segment: Segment,
    /// Cases matching the segment predicate.
    pub n: usize,
    pub uplift: f64,
    /// `n * u * v`
    pub incremental_value: f64,
    /// `n * c`
    pub incremental_cost: f64,
    /// `incremental_value - incremental_cost`
    pub net: f64,
    pub profitable: bool,
}

/// One recommendation per (treatment, segment), by descending net value,
/// then descending uplift, then treatment and predicate text. Unprofitable
/// pairs are kept and flagged.
pub fn rank(
    segments: &[(Treatment, Vec<Segment>)],
    costs: &CostModels,
) -> Result<Vec<Recommendation>> {
    let mut out = Vec::new();
    for (treatment, segs) in segments {
        let model = costs.for_treatment(treatment)?;
        for segment in segs {
            let n = segment.n_reachable;
            let incremental_value = n as f64 * segment.uplift * model.outcome_value;
            let incremental_cost = n as f64 * model.impression_cost;
            let net = incremental_value - incremental_cost;
            out.push(Recommendation {
                treatment: treatment.clone(),
                segment: segment.clone(),
                n,
                uplift: segment.uplift,
                incremental_value,
                incremental_cost,
                net,
                profitable: net >= 0.0,
            });
        }
    }
    out.sort_by(|a, b| {
        b.net
            .total_cmp(&a.net)
            .then_with(|| b.uplift.total_cmp(&a.uplift))
            .then_with(|| a.treatment.cmp(&b.treatment))
            .then_with(|| a.segment.predicate.cmp(&b.segment.predicate))
    });
    Ok(out)
}

/// Tabular export: treatment, segment, n, uplift, incremental value,
/// incremental cost, net, flag.
pub fn write_recommendations<W: Write>(recs: &[Recommendation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "treatment",
        "segment",
        "n",
        "uplift",
        "incremental_value",
        "incremental_cost",
        "net",
        "flag",
    ])?;
    for r in recs {
        w.write_record([
            r.treatment.to_string(),
            r.segment.predicate.clone(),
            r.n.to_string(),
            r.uplift.to_string(),
            r.incremental_value.to_string(),
            r.incremental_cost.to_string(),
            r.net.to_string(),
            if r.profitable {
                "profitable"
            } else {
                "unprofitable"
            }
            .to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
