use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::action_rules::RuleParams;
use crate::event_log::{AttributeKind, AttributeSchema, Binning, ColumnMap, OutcomeSpec};
use crate::ranking::{CostModel, CostModels};
use crate::uplift::{DivergenceKind, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Xes,
    Csv,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "xes" => Ok(InputFormat::Xes),
            "csv" => Ok(InputFormat::Csv),
            other => Err(format!(
                "unknown input format {other:?} (expected xes or csv)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Inferred from the file extension (`.xes`, `.csv`, optionally `.gz`)
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<InputFormat>,
    pub columns: ColumnMap,
}

impl InputConfig {
    pub fn resolved_format(&self) -> Result<InputFormat> {
        if let Some(f) = self.format {
            return Ok(f);
        }
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| PipelineError::Config("input.path is not set".into()))?;
        let name = path.to_string_lossy().to_ascii_lowercase();
        let name = name.strip_suffix(".gz").unwrap_or(&name);
        if name.ends_with(".xes") {
            Ok(InputFormat::Xes)
        } else if name.ends_with(".csv") {
            Ok(InputFormat::Csv)
        } else {
            Err(PipelineError::Config(format!(
                "cannot infer the format of {}; set input.format",
                path.display()
            )))
        }
    }
}

fn default_positive_labels() -> Vec<String> {
    OutcomeSpec::new("").positive_labels
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingConfig {
    pub outcome: String,
    #[serde(default = "default_positive_labels")]
    pub positive_labels: Vec<String>,
    /// Features plus the outcome attribute itself.
    pub attributes: Vec<AttributeSchema>,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            outcome: String::new(),
            positive_labels: default_positive_labels(),
            attributes: Vec::new(),
        }
    }
}

impl EncodingConfig {
    pub fn outcome_spec(&self) -> OutcomeSpec {
        OutcomeSpec {
            name: self.outcome.clone(),
            positive_labels: self.positive_labels.clone(),
        }
    }
}

fn default_k() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinningConfig {
    /// Equal-frequency bin count for numeric attributes without their own
    /// entry.
    #[serde(default = "default_k")]
    pub default_k: usize,
    #[serde(default)]
    pub attributes: BTreeMap<String, Binning>,
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig {
            default_k: default_k(),
            attributes: BTreeMap::new(),
        }
    }
}

impl BinningConfig {
    /// Binning for every numeric feature in `schema` except the outcome.
    pub fn resolve(&self, schema: &[AttributeSchema], outcome: &str) -> BTreeMap<String, Binning> {
        schema
            .iter()
            .filter(|a| a.kind == AttributeKind::Numeric && a.name != outcome)
            .map(|a| {
                let b = self
                    .attributes
                    .get(&a.name)
                    .cloned()
                    .unwrap_or(Binning::EqualFrequency { k: self.default_k });
                (a.name.clone(), b)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_treatment: usize,
    pub n_reg: f64,
    pub divergence: DivergenceKind,
    /// Leaves below this uplift are not reported as segments.
    pub min_uplift: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        let p = TreeParams::default();
        TreeConfig {
            max_depth: p.max_depth,
            min_samples_split: p.min_samples_split,
            min_samples_treatment: p.min_samples_treatment,
            n_reg: p.n_reg,
            divergence: p.divergence,
            min_uplift: 0.0,
        }
    }
}

impl TreeConfig {
    pub fn params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_treatment: self.min_samples_treatment,
            n_reg: self.n_reg,
            divergence: self.divergence,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub default: CostModel,
    /// Keyed by the treatment's display form.
    #[serde(default)]
    pub overrides: BTreeMap<String, CostModel>,
}

impl CostConfig {
    pub fn models(&self) -> CostModels {
        CostModels {
            default: Some(self.default),
            overrides: self.overrides.clone(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a run needs. Relative paths in a config file are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub encoding: EncodingConfig,
    #[serde(default)]
    pub binning: BinningConfig,
    #[serde(default)]
    pub rules: RuleParams,
    #[serde(default)]
    pub tree: TreeConfig,
    #[serde(default)]
    pub costs: CostConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: default_output_dir(),
            input: InputConfig::default(),
            encoding: EncodingConfig::default(),
            binning: BinningConfig::default(),
            rules: RuleParams::default(),
            tree: TreeConfig::default(),
            costs: CostConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML config, or the `config` entry of a run manifest when the
    /// file ends in `.json`. Manifest paths are used as recorded.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            #[derive(Deserialize)]
            struct Manifest {
                config: PipelineConfig,
            }
            let m: Manifest = serde_json::from_str(&text)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            m.config.validate()?;
            return Ok(m.config);
        }
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(msg) => {
                PipelineError::Config(format!("{}: {msg}", path.display()))
            }
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(input) = &cfg.input.path {
            cfg.input.path = Some(base.join(input));
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let config = |e: &dyn std::fmt::Display| PipelineError::Config(e.to_string());
        self.rules.validate().map_err(|e| config(&e))?;
        self.tree.params().validate().map_err(|e| config(&e))?;
        if self.binning.default_k < 2 {
            return Err(PipelineError::Config(format!(
                "binning.default_k must be at least 2, got {}",
                self.binning.default_k
            )));
        }
        self.costs.models().validate().map_err(|e| config(&e))?;
        Ok(())
    }

    pub fn outcome_spec(&self) -> OutcomeSpec {
        self.encoding.outcome_spec()
    }
}
