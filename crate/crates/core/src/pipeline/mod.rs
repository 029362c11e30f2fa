//! File-based pipeline: ingest, mine, uplift and rank, each stage reading the
//! previous stage's artifacts from the output directory.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    BinningConfig, CostConfig, EncodingConfig, InputConfig, InputFormat, PipelineConfig, TreeConfig,
};

use crate::action_rules::{self, extract_treatments, ActionRule, RuleError, Treatment};
use crate::event_log::{
    self, discretize, encode_cases, AttributeKind, AttributeSchema, Bins, CaseTable, EventLog,
    LogError,
};
use crate::ranking::{self, RankError, Recommendation};
use crate::synthetic::{self, SynthError, SyntheticScenario};
use crate::uplift::{self, Segment, UpliftError};

pub const CASE_TABLE: &str = "case_table.json";
pub const CASES_SUMMARY: &str = "cases_summary.json";
pub const RULES: &str = "rules.json";
pub const TREATMENTS: &str = "treatments.json";
pub const TREES_DIR: &str = "trees";
pub const SEGMENTS: &str = "segments.json";
pub const RECOMMENDATIONS: &str = "recommendations.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("event_log: {}: {source}", path.display())]
    Ingest { path: PathBuf, source: LogError },
    #[error("event_log: {0}")]
    Encode(#[from] LogError),
    #[error("action_rules: {0}")]
    Rules(#[from] RuleError),
    #[error("uplift_tree: {0}")]
    Uplift(#[from] UpliftError),
    #[error("ranking: {0}")]
    Rank(#[from] RankError),
    #[error("synthetic: {0}")]
    Synthetic(#[from] SynthError),
    #[error("missing artifact {}: run the `{stage}` stage first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Artifact {
        path: PathBuf,
        source: serde_json::Error,
    },
}

impl PipelineError {
    /// True for problems with the invocation or configuration rather than
    /// with the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| PipelineError::Artifact {
        path: path.to_path_buf(),
        source,
    })?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(io_err(path))
}

fn open_artifact(path: &Path, stage: &'static str) -> Result<BufReader<File>> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        });
    }
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn read_json<T: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<T> {
    serde_json::from_reader(open_artifact(path, stage)?).map_err(|source| PipelineError::Artifact {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    treatments_file: Option<&'a Path>,
    artifacts: [&'static str; 7],
}

fn write_manifest(cfg: &PipelineConfig, treatments_file: Option<&Path>) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        treatments_file,
        artifacts: [
            CASES_SUMMARY,
            CASE_TABLE,
            RULES,
            TREATMENTS,
            TREES_DIR,
            SEGMENTS,
            RECOMMENDATIONS,
        ],
    };
    write_json(&cfg.output_dir.join(MANIFEST), &manifest)
}

/// Reads the configured log, decompressing `.gz` files.
pub fn load_log(input: &InputConfig) -> Result<EventLog> {
    let path = input
        .path
        .as_ref()
        .ok_or_else(|| PipelineError::Config("input.path is not set".into()))?;
    let format = input.resolved_format()?;
    let file = File::open(path).map_err(|e| PipelineError::Ingest {
        path: path.clone(),
        source: e.into(),
    })?;
    let reader: Box<dyn Read> = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"))
    {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let reader = BufReader::with_capacity(1 << 16, reader);
    let parsed = match format {
        InputFormat::Xes => event_log::parse_xes(reader),
        InputFormat::Csv => event_log::parse_csv(reader, &input.columns),
    };
    parsed.map_err(|source| PipelineError::Ingest {
        path: path.clone(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSummary {
    #[serde(flatten)]
    pub schema: AttributeSchema,
    /// Rows per value label after discretization.
    pub values: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasesSummary {
    pub traces: usize,
    pub events: usize,
    pub cases: usize,
    pub outcome: String,
    pub positive_rate: f64,
    pub attributes: Vec<AttributeSummary>,
    pub bins: BTreeMap<String, Bins>,
    pub warnings: Vec<String>,
}

fn summarize(log: &EventLog, table: &CaseTable) -> CasesSummary {
    let attributes = table
        .schema
        .iter()
        .enumerate()
        .map(|(a, schema)| {
            let mut values = BTreeMap::new();
            for row in &table.rows {
                let label = row.features[a].label().unwrap_or(event_log::MISSING_LABEL);
                *values.entry(label.to_string()).or_insert(0) += 1;
            }
            AttributeSummary {
                schema: schema.clone(),
                values,
            }
        })
        .collect();
    CasesSummary {
        traces: log.len(),
        events: log.num_events(),
        cases: table.len(),
        outcome: table.outcome_name.clone(),
        positive_rate: table.outcome_rate(),
        attributes,
        bins: table.bins.clone(),
        warnings: table.warnings.clone(),
    }
}

/// Encodes and discretizes a log according to `cfg`.
pub fn encode(cfg: &PipelineConfig, log: &EventLog) -> Result<CaseTable> {
    let enc = &cfg.encoding;
    if enc.outcome.is_empty() {
        return Err(PipelineError::Config("encoding.outcome is not set".into()));
    }
    if enc.attributes.is_empty() {
        return Err(PipelineError::Config("encoding.attributes is empty".into()));
    }
    for name in cfg.binning.attributes.keys() {
        match enc.attributes.iter().find(|a| &a.name == name) {
            Some(a) if a.kind == AttributeKind::Numeric && a.name != enc.outcome => {}
            Some(_) => {
                return Err(PipelineError::Config(format!(
                    "binning.attributes.{name}: not a numeric feature"
                )))
            }
            None => {
                return Err(PipelineError::Config(format!(
                    "binning.attributes.{name}: not in encoding.attributes"
                )))
            }
        }
    }
    let table = encode_cases(log, &enc.attributes, &enc.outcome_spec())?;
    Ok(discretize(
        &table,
        &cfg.binning.resolve(&enc.attributes, &enc.outcome),
    )?)
}

/// Parses, encodes and discretizes the input log.
pub fn ingest(cfg: &PipelineConfig) -> Result<CasesSummary> {
    let log = load_log(&cfg.input)?;
    let table = encode(cfg, &log)?;
    let summary = summarize(&log, &table);
    log::info!(
        "ingest: {} cases ({} events) encoded into {} rows",
        summary.traces,
        summary.events,
        summary.cases
    );
    for w in &table.warnings {
        log::warn!("ingest: {w}");
    }
    write_json(&cfg.output_dir.join(CASE_TABLE), &table)?;
    write_json(&cfg.output_dir.join(CASES_SUMMARY), &summary)?;
    write_manifest(cfg, None)?;
    Ok(summary)
}

pub fn read_case_table(cfg: &PipelineConfig) -> Result<CaseTable> {
    read_json(&cfg.output_dir.join(CASE_TABLE), "ingest")
}

/// Mines action rules and candidate treatments from the encoded table.
pub fn mine(cfg: &PipelineConfig) -> Result<(Vec<ActionRule>, Vec<Treatment>)> {
    let table = read_case_table(cfg)?;
    let rules = action_rules::mine_action_rules(&table, &cfg.rules)?;
    let treatments = extract_treatments(&rules);
    log::info!(
        "mine: {} rules, {} treatments",
        rules.len(),
        treatments.len()
    );
    let path = cfg.output_dir.join(RULES);
    action_rules::write_rules(&rules, create(&path)?).map_err(|e| rules_io(e, &path))?;
    let path = cfg.output_dir.join(TREATMENTS);
    action_rules::write_treatments(&treatments, create(&path)?).map_err(|e| rules_io(e, &path))?;
    write_manifest(cfg, None)?;
    Ok((rules, treatments))
}

fn rules_io(e: RuleError, path: &Path) -> PipelineError {
    match e {
        RuleError::Io(source) => PipelineError::Io {
            path: path.to_path_buf(),
            source,
        },
        RuleError::Format(source) => PipelineError::Artifact {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    }
}

/// Segments of one treatment's tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentSegments {
    pub treatment: Treatment,
    pub text: String,
    /// DOT file, relative to the output directory.
    pub tree: String,
    pub treated: usize,
    pub control: usize,
    pub excluded: usize,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTreatment {
    pub treatment: Treatment,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentsFile {
    pub treatments: Vec<TreatmentSegments>,
    pub skipped: Vec<SkippedTreatment>,
}

fn slug(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let out = out.trim_matches('_');
    out.chars()
        .take(60)
        .collect::<String>()
        .trim_end_matches('_')
        .to_string()
}

enum Fitted {
    Tree(TreatmentSegments, String),
    Skipped(SkippedTreatment),
}

fn fit_one(
    cfg: &PipelineConfig,
    table: &CaseTable,
    index: usize,
    treatment: &Treatment,
) -> Result<Fitted> {
    let text = treatment.to_string();
    let assignment = match uplift::assign_groups(table, treatment) {
        Ok(a) => a,
        Err(e @ UpliftError::Positivity { .. }) => {
            log::warn!("uplift: skipping {text}: {e}");
            return Ok(Fitted::Skipped(SkippedTreatment {
                treatment: treatment.clone(),
                text,
                reason: e.to_string(),
            }));
        }
        Err(e) => return Err(e.into()),
    };
    let tree = uplift::build_tree(table, treatment, &assignment, &cfg.tree.params())?;
    let segments = uplift::extract_segments(&tree, table, cfg.tree.min_uplift)?;
    let file = format!("{TREES_DIR}/{:02}_{}.dot", index + 1, slug(&text));
    Ok(Fitted::Tree(
        TreatmentSegments {
            treatment: treatment.clone(),
            text,
            tree: file,
            treated: assignment.treated.len(),
            control: assignment.control.len(),
            excluded: assignment.excluded.len(),
            segments,
        },
        uplift::to_dot(&tree),
    ))
}

/// Fits one uplift tree per treatment (from `treatments_file`, or the
/// mining stage's output) and writes the trees and their segments.
pub fn fit_uplift(cfg: &PipelineConfig, treatments_file: Option<&Path>) -> Result<SegmentsFile> {
    let table = read_case_table(cfg)?;
    let path = treatments_file
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output_dir.join(TREATMENTS));
    let treatments = action_rules::read_treatments(open_artifact(&path, "mine")?)
        .map_err(|e| rules_io(e, &path))?;
    let fitted = treatments
        .par_iter()
        .enumerate()
        .map(|(i, t)| fit_one(cfg, &table, i, t))
        .collect::<Result<Vec<_>>>()?;

    let trees_dir = cfg.output_dir.join(TREES_DIR);
    if trees_dir.exists() {
        fs::remove_dir_all(&trees_dir).map_err(io_err(&trees_dir))?;
    }
    fs::create_dir_all(&trees_dir).map_err(io_err(&trees_dir))?;
    let mut file = SegmentsFile::default();
    for f in fitted {
        match f {
            Fitted::Tree(entry, dot) => {
                let path = cfg.output_dir.join(&entry.tree);
                let mut out = create(&path)?;
                out.write_all(dot.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(io_err(&path))?;
                file.treatments.push(entry);
            }
            Fitted::Skipped(s) => file.skipped.push(s),
        }
    }
    log::info!(
        "uplift: {} trees, {} treatments skipped, {} segments",
        file.treatments.len(),
        file.skipped.len(),
        file.treatments
            .iter()
            .map(|t| t.segments.len())
            .sum::<usize>()
    );
    write_json(&cfg.output_dir.join(SEGMENTS), &file)?;
    write_manifest(cfg, treatments_file)?;
    Ok(file)
}

/// Ranks every segment by net value and writes the recommendations table.
pub fn rank(cfg: &PipelineConfig) -> Result<Vec<Recommendation>> {
    let file: SegmentsFile = read_json(&cfg.output_dir.join(SEGMENTS), "uplift")?;
    let input: Vec<(Treatment, Vec<Segment>)> = file
        .treatments
        .into_iter()
        .map(|t| (t.treatment, t.segments))
        .collect();
    let recs = ranking::rank(&input, &cfg.costs.models())?;
    log::info!(
        "rank: {} recommendations, {} unprofitable",
        recs.len(),
        recs.iter().filter(|r| !r.profitable).count()
    );
    let path = cfg.output_dir.join(RECOMMENDATIONS);
    let mut out = create(&path)?;
    ranking::write_recommendations(&recs, &mut out)?;
    out.flush().map_err(io_err(&path))?;
    write_manifest(cfg, None)?;
    Ok(recs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub cases: CasesSummary,
    pub rules: usize,
    pub treatments: usize,
    pub segments: SegmentsFile,
    pub recommendations: Vec<Recommendation>,
}

/// All four stages in order.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    let cases = ingest(cfg)?;
    let (rules, treatments) = mine(cfg)?;
    let segments = fit_uplift(cfg, None)?;
    let recommendations = rank(cfg)?;
    Ok(RunSummary {
        cases,
        rules: rules.len(),
        treatments: treatments.len(),
        segments,
        recommendations,
    })
}

pub const SIM_LOG: &str = "log.csv";
pub const SIM_TRUTH: &str = "ground_truth.json";
pub const SIM_SCENARIO: &str = "scenario.toml";
pub const SIM_CONFIG: &str = "pipeline.toml";

/// Pipeline settings for a generated log: the four scenario attributes and
/// a confidence floor low enough for the treatment to be mined.
pub fn simulation_config() -> PipelineConfig {
    let (attributes, outcome) = SyntheticScenario::schema();
    PipelineConfig {
        output_dir: PathBuf::from("report"),
        input: InputConfig {
            path: Some(PathBuf::from(SIM_LOG)),
            format: Some(InputFormat::Csv),
            ..InputConfig::default()
        },
        encoding: EncodingConfig {
            outcome: outcome.name,
            positive_labels: outcome.positive_labels,
            attributes,
        },
        rules: action_rules::RuleParams {
            min_confidence: 0.25,
            ..Default::default()
        },
        ..PipelineConfig::default()
    }
}

/// Writes a generated log, its ground truth, the scenario and a pipeline
/// config that runs on the log into `dir`.
pub fn simulate(scenario: &SyntheticScenario, dir: &Path) -> Result<synthetic::GroundTruth> {
    let (log, truth) = synthetic::generate(scenario)?;
    let path = dir.join(SIM_LOG);
    let mut out = create(&path)?;
    event_log::write_csv(&log, &mut out).map_err(|source| PipelineError::Ingest {
        path: path.clone(),
        source,
    })?;
    out.flush().map_err(io_err(&path))?;
    write_json(&dir.join(SIM_TRUTH), &truth)?;
    for (name, text) in [
        (SIM_SCENARIO, scenario.to_toml()),
        (SIM_CONFIG, simulation_config().to_toml()),
    ] {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    log::info!(
        "simulate: {} cases written to {}",
        scenario.n_cases,
        dir.display()
    );
    Ok(truth)
}
