use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use personasim_cli::{
    cmd_evaluate, cmd_generate, cmd_report, cmd_sample, cmd_simulate, cmd_validate, CliError, Result, RunConfig,
    StageSummary,
};
use personasim_core::persona::PersonaTier;

#[derive(Parser)]
#[command(name = "personasim", version, about = "Census-grounded persona generation and opinion simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample meta personas from the joint census table.
    Sample(ConfigArg),
    /// Generate persona tiers from the sampled meta personas.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Only this tier, e.g. DESCRIPTIVE.
        #[arg(long)]
        tier: Option<PersonaTier>,
        /// Only this generator.
        #[arg(long)]
        generator: Option<String>,
    },
    /// Ask every persona set every question on every simulator.
    Simulate(ConfigArg),
    /// Aggregate answers and score them against the ground truth.
    Evaluate(ConfigArg),
    /// Write election map, cross-simulation, topic ranking and text reports.
    Report(ConfigArg),
    /// Run all stages in order.
    Run(ConfigArg),
    /// Check an external persona JSONL file against the value catalog.
    Validate {
        personas: PathBuf,
        /// Write per-persona problems to this JSONL file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config)
    }
}

fn report_stage(name: &str, s: &StageSummary) -> Result<()> {
    eprintln!("{name}: {} new, {} resumed, {} failed", s.produced, s.resumed, s.failed);
    if s.transport_failures > 0 {
        return Err(CliError::Transport(format!(
            "{name}: {} items failed without a backend response; rerun to resume",
            s.transport_failures
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample(c) => {
            let s = cmd_sample(&c.load()?)?;
            eprintln!("sample: {} meta personas", s.produced);
        }
        Command::Generate { config, tier, generator } => {
            let s = cmd_generate(&config.load()?, tier, generator.as_deref())?;
            report_stage("generate", &s)?;
        }
        Command::Simulate(c) => report_stage("simulate", &cmd_simulate(&c.load()?)?)?,
        Command::Evaluate(c) => {
            let n = cmd_evaluate(&c.load()?)?;
            eprintln!("evaluate: {n} alignment scores");
        }
        Command::Report(c) => {
            for f in cmd_report(&c.load()?)? {
                eprintln!("report: {f}");
            }
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            let s = cmd_sample(&cfg)?;
            eprintln!("sample: {} meta personas", s.produced);
            if !cfg.generated_tiers().is_empty() {
                report_stage("generate", &cmd_generate(&cfg, None, None)?)?;
            }
            report_stage("simulate", &cmd_simulate(&cfg)?)?;
            eprintln!("evaluate: {} alignment scores", cmd_evaluate(&cfg)?);
            for f in cmd_report(&cfg)? {
                eprintln!("report: {f}");
            }
        }
        Command::Validate { personas, report } => {
            let s = cmd_validate(&personas, report.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable"));
            if s.invalid + s.unreadable > 0 {
                return Err(CliError::Data(format!(
                    "{} invalid and {} unreadable personas in {}",
                    s.invalid,
                    s.unreadable,
                    personas.display()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("personasim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
