use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use causal_rules::pipeline::{self, InputFormat, PipelineConfig, PipelineError};
use causal_rules::synthetic::SyntheticScenario;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Treatment recommendations from event logs.
#[derive(Parser)]
#[command(name = "causal-rules", version, about)]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage: ingest, mine, uplift, rank.
    Run(Common),
    /// Parse and encode the log into a case table.
    Ingest(Common),
    /// Mine action rules and candidate treatments from the case table.
    Mine(Common),
    /// Fit one uplift tree per treatment and extract its segments.
    Uplift {
        #[command(flatten)]
        common: Common,
        /// Treatments file to use instead of the mining stage's output.
        #[arg(long)]
        treatments: Option<PathBuf>,
    },
    /// Rank segments by net value.
    Rank(Common),
    /// Generate a synthetic log with known effects.
    Simulate {
        /// Scenario file (TOML); the planted-effect scenario when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of cases; overrides the scenario file.
        #[arg(long)]
        cases: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML, or a previous run's manifest.json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Event log; overrides the config.
    #[arg(long)]
    input: Option<PathBuf>,
    /// xes or csv; inferred from the file name when absent.
    #[arg(long)]
    format: Option<InputFormat>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(input) = &self.input {
            cfg.input.path = Some(input.clone());
            cfg.input.format = None;
        }
        if let Some(format) = self.format {
            cfg.input.format = Some(format);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run(common) => {
            let s = pipeline::run(&common.config()?)?;
            println!(
                "{} cases, {} rules, {} treatments, {} trees ({} skipped), {} recommendations",
                s.cases.cases,
                s.rules,
                s.treatments,
                s.segments.treatments.len(),
                s.segments.skipped.len(),
                s.recommendations.len()
            );
            if let Some(top) = s.recommendations.first() {
                println!(
                    "top: {} where {} (net {:.2})",
                    top.treatment, top.segment.predicate, top.net
                );
            }
        }
        Command::Ingest(common) => {
            let s = pipeline::ingest(&common.config()?)?;
            println!(
                "{} cases ({} events) encoded into {} rows",
                s.traces, s.events, s.cases
            );
        }
        Command::Mine(common) => {
            let (rules, treatments) = pipeline::mine(&common.config()?)?;
            println!("{} rules, {} treatments", rules.len(), treatments.len());
        }
        Command::Uplift { common, treatments } => {
            let s = pipeline::fit_uplift(&common.config()?, treatments.as_deref())?;
            println!(
                "{} trees, {} treatments skipped",
                s.treatments.len(),
                s.skipped.len()
            );
        }
        Command::Rank(common) => {
            let recs = pipeline::rank(&common.config()?)?;
            println!("{} recommendations", recs.len());
        }
        Command::Simulate {
            config,
            out,
            seed,
            cases,
        } => {
            let mut scenario = match config {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|source| PipelineError::Io {
                            path: path.clone(),
                            source,
                        })?;
                    SyntheticScenario::from_toml(&text)
                        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
                }
                None => SyntheticScenario::planted(20_000, 0),
            };
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            if let Some(n) = cases {
                scenario.n_cases = n;
            }
            let truth = pipeline::simulate(&scenario, &out)?;
            println!(
                "{} cases written to {}; true effect by subgroup: {:?}",
                scenario.n_cases,
                out.display(),
                truth.cate
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
