//! Event logs drawn from a small causal model with known effects.
//!
//! Each case draws a binary confounder `L`, a binary subgroup flag `X`, a
//! treatment `A` whose probability depends on `L`, and both potential
//! outcomes `Y¹`, `Y⁰`, whose probabilities depend on `L` and `X`. The
//! observed outcome is the potential outcome of the treatment received.
//!
//! Randomness comes from ChaCha8 seeded with [`SyntheticScenario::seed`]
//! through `seed_from_u64`. Every case consumes exactly four `f64` draws in
//! the order `L`, `X`, `A`, `Y`, each uniform on `[0, 1)` and compared as
//! `u < p`. The same `Y` draw decides both potential outcomes.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_log::{AttrValue, AttributeSchema, Event, EventLog, OutcomeSpec};

pub const CONFOUNDER: &str = "confounder";
pub const SUBGROUP: &str = "subgroup";
pub const TREATMENT: &str = "treatment";
pub const OUTCOME: &str = "outcome";
pub const ACTIVITY: &str = "record";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{field} must be a probability, got {value}")]
    Probability { field: String, value: f64 },
    #[error("positivity violated: P(treatment = 1 | confounder = {confounder}) = {value}")]
    Positivity { confounder: usize, value: f64 },
    #[error("n_cases must be positive")]
    NoCases,
    #[error("unknown subgroup cell {0}")]
    UnknownCell(u8),
    #[error("scenario file: {0}")]
    Format(#[from] toml::de::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Parameters of the causal model. Outcome tables are indexed
/// `[confounder][subgroup]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub n_cases: usize,
    pub seed: u64,
    /// P(L = 1)
    pub p_confounder: f64,
    /// P(X = 1)
    pub p_subgroup: f64,
    /// P(A = 1 | L = l)
    pub p_treatment: [f64; 2],
    /// P(Y¹ = 1 | L = l, X = x)
    pub p_outcome_treated: [[f64; 2]; 2],
    /// P(Y⁰ = 1 | L = l, X = x)
    pub p_outcome_control: [[f64; 2]; 2],
}

impl SyntheticScenario {
    /// Effect 0.3 in subgroup 1 and none in subgroup 0, random assignment,
    /// no confounder variation.
    pub fn planted(n_cases: usize, seed: u64) -> Self {
        SyntheticScenario {
            n_cases,
            seed,
            p_confounder: 0.0,
            p_subgroup: 0.5,
            p_treatment: [0.5, 0.5],
            p_outcome_treated: [[0.3, 0.6], [0.3, 0.6]],
            p_outcome_control: [[0.3, 0.3], [0.3, 0.3]],
        }
    }

    /// Constant effect 0.1; the confounder raises the baseline by 0.2 and
    /// makes treatment less likely (0.8 vs 0.2), so that the pooled
    /// comparison points the wrong way.
    pub fn confounded(n_cases: usize, seed: u64) -> Self {
        SyntheticScenario {
            n_cases,
            seed,
            p_confounder: 0.5,
            p_subgroup: 0.5,
            p_treatment: [0.8, 0.2],
            p_outcome_treated: [[0.4, 0.4], [0.6, 0.6]],
            p_outcome_control: [[0.3, 0.3], [0.5, 0.5]],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SyntheticScenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cases == 0 {
            return Err(SynthError::NoCases);
        }
        let mut probs = vec![
            ("p_confounder".to_string(), self.p_confounder),
            ("p_subgroup".to_string(), self.p_subgroup),
        ];
        for l in 0..2 {
            probs.push((format!("p_treatment[{l}]"), self.p_treatment[l]));
            for x in 0..2 {
                probs.push((
                    format!("p_outcome_treated[{l}][{x}]"),
                    self.p_outcome_treated[l][x],
                ));
                probs.push((
                    format!("p_outcome_control[{l}][{x}]"),
                    self.p_outcome_control[l][x],
                ));
            }
        }
        if let Some((field, value)) = probs.into_iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(SynthError::Probability { field, value });
        }
        if let Some(l) = (0..2).find(|&l| !(self.p_treatment[l] > 0.0 && self.p_treatment[l] < 1.0))
        {
            return Err(SynthError::Positivity {
                confounder: l,
                value: self.p_treatment[l],
            });
        }
        Ok(())
    }

    fn p_l(&self, l: usize) -> f64 {
        if l == 1 {
            self.p_confounder
        } else {
            1.0 - self.p_confounder
        }
    }

    fn p_x(&self, x: usize) -> f64 {
        if x == 1 {
            self.p_subgroup
        } else {
            1.0 - self.p_subgroup
        }
    }

    /// P(Y¹ = 1 | l, x) − P(Y⁰ = 1 | l, x)
    pub fn cell_effect(&self, confounder: usize, subgroup: usize) -> f64 {
        self.p_outcome_treated[confounder][subgroup] - self.p_outcome_control[confounder][subgroup]
    }

    /// Effect within one confounder stratum, averaged over the subgroup.
    pub fn stratum_effect(&self, confounder: usize) -> f64 {
        (0..2)
            .map(|x| self.p_x(x) * self.cell_effect(confounder, x))
            .sum()
    }

    /// Average treatment effect over the whole population.
    pub fn ate(&self) -> f64 {
        (0..2).map(|l| self.p_l(l) * self.stratum_effect(l)).sum()
    }

    /// The schema and outcome settings that encode a generated log.
    pub fn schema() -> (Vec<AttributeSchema>, OutcomeSpec) {
        (
            vec![
                AttributeSchema::categorical(CONFOUNDER),
                AttributeSchema::categorical(SUBGROUP),
                AttributeSchema::categorical(TREATMENT).controllable(),
                AttributeSchema::categorical(OUTCOME),
            ],
            OutcomeSpec::new(OUTCOME),
        )
    }
}

/// Exact effects implied by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Effect per subgroup value, averaged over the confounder.
    pub cate: BTreeMap<u8, f64>,
    /// Effect per confounder value, averaged over the subgroup.
    pub stratum_effect: BTreeMap<u8, f64>,
    pub ate: f64,
    /// Expected treated-minus-control outcome rate without adjustment.
    pub naive_uplift: f64,
}

/// `E_L[P(Y¹=1 | L, X=x) − P(Y⁰=1 | L, X=x)]` for `cell` = `x` ∈ {0, 1}.
pub fn true_cate(scenario: &SyntheticScenario, cell: u8) -> Result<f64> {
    let x = match cell {
        0 | 1 => cell as usize,
        _ => return Err(SynthError::UnknownCell(cell)),
    };
    Ok((0..2)
        .map(|l| scenario.p_l(l) * scenario.cell_effect(l, x))
        .sum())
}

/// `P(Y=1 | A=1) − P(Y=1 | A=0)` in the population the scenario describes.
pub fn naive_uplift(scenario: &SyntheticScenario) -> f64 {
    let mut joint = [0.0; 2];
    let mut marginal = [0.0; 2];
    for l in 0..2 {
        for x in 0..2 {
            let w = scenario.p_l(l) * scenario.p_x(x);
            let pa = scenario.p_treatment[l];
            joint[1] += w * pa * scenario.p_outcome_treated[l][x];
            joint[0] += w * (1.0 - pa) * scenario.p_outcome_control[l][x];
            marginal[1] += w * pa;
            marginal[0] += w * (1.0 - pa);
        }
    }
    joint[1] / marginal[1] - joint[0] / marginal[0]
}

pub fn ground_truth(scenario: &SyntheticScenario) -> Result<GroundTruth> {
    Ok(GroundTruth {
        cate: BTreeMap::from([(0, true_cate(scenario, 0)?), (1, true_cate(scenario, 1)?)]),
        stratum_effect: BTreeMap::from([
            (0, scenario.stratum_effect(0)),
            (1, scenario.stratum_effect(1)),
        ]),
        ate: scenario.ate(),
        naive_uplift: naive_uplift(scenario),
    })
}

/// Samples `n_cases` cases, one event each, and returns them with the exact
/// effects of the scenario.
pub fn generate(scenario: &SyntheticScenario) -> Result<(EventLog, GroundTruth)> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let start = DateTime::parse_from_rfc3339("2020-01-01T00:00:00Z").expect("valid literal");
    let width = scenario.n_cases.to_string().len();
    let mut log = EventLog::new();
    for i in 0..scenario.n_cases {
        let (u_l, u_x, u_a, u_y): (f64, f64, f64, f64) =
            (rng.random(), rng.random(), rng.random(), rng.random());
        let l = usize::from(u_l < scenario.p_confounder);
        let x = usize::from(u_x < scenario.p_subgroup);
        let a = u_a < scenario.p_treatment[l];
        let y = if a {
            u_y < scenario.p_outcome_treated[l][x]
        } else {
            u_y < scenario.p_outcome_control[l][x]
        };
        log.push_event(Event {
            activity: ACTIVITY.to_string(),
            case_id: format!("case_{i:0width$}"),
            timestamp: start + Duration::seconds(i as i64),
            attributes: vec![
                (CONFOUNDER.to_string(), AttrValue::Int(l as i64)),
                (SUBGROUP.to_string(), AttrValue::Int(x as i64)),
                (TREATMENT.to_string(), AttrValue::Int(i64::from(a))),
                (OUTCOME.to_string(), AttrValue::Bool(y)),
            ],
        });
    }
    Ok((log.finish(), ground_truth(scenario)?))
}
