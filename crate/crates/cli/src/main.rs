//! ratebench: generate multi-horizon stock ratings through a chat backend
//! and score them against quantile-ranked forward returns.
//!
//! Subcommands run the pipeline stages in order:
//!   ingest -> summarize -> score-sentiment -> predict -> evaluate -> report
//!
//! Exit codes: 0 success, 1 partial (some cells failed or rows were
//! quarantined), 2 fatal.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ratebench_core::prompting::MethodKind;
use ratebench_core::runner::{emit_report, ExperimentConfig, Runner, RunnerError};

#[derive(Parser)]
#[command(name = "ratebench", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate configured inputs and write ingest reports
    Ingest(CommonArgs),
    /// Produce monthly company and sector news summaries via the backend
    Summarize(CommonArgs),
    /// Score sentiment for every stored summary
    ScoreSentiment(CommonArgs),
    /// Run the prediction grid (resumable; skips persisted cells)
    Predict(CommonArgs),
    /// Score persisted predictions against quintile labels
    Evaluate(CommonArgs),
    /// Emit the report file set from evaluation.json
    Report(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML); relative paths resolve against it
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the configured method
    #[arg(long)]
    method: Option<String>,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn load(&self) -> Result<Runner, RunnerError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(dir) = &self.output_dir {
            config.experiment.output_dir = dir.clone();
        }
        if let Some(method) = &self.method {
            config.experiment.method = method.parse::<MethodKind>().map_err(RunnerError::Config)?;
        }
        if let Some(seed) = self.seed {
            config.experiment.seed = seed;
        }
        Runner::load(config)
    }
}

fn run(cli: Cli) -> Result<ExitCode, RunnerError> {
    match cli.command {
        Command::Ingest(args) => {
            let runner = args.load()?;
            let report = runner.ingest()?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            let partial = report.analyst_quarantined + report.analyst_rejected > 0;
            Ok(if partial {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Summarize(args) => {
            let runner = args.load()?;
            let gateway = runner.default_gateway()?;
            let outcome = runner.summarize_all(&gateway)?;
            eprintln!(
                "summaries written: {}, already current: {}, empty bundles: {}",
                outcome.summarized, outcome.skipped, outcome.empty_bundles
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ScoreSentiment(args) => {
            let runner = args.load()?;
            let gateway = runner.default_gateway()?;
            let outcome = runner.score_sentiment_all(&gateway)?;
            eprintln!(
                "scores written: {}, already current: {}",
                outcome.summarized, outcome.skipped
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict(args) => {
            let runner = args.load()?;
            let gateway = runner.default_gateway()?;
            let manifest = runner.predict(&gateway)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&manifest).expect("manifest serializes")
            );
            let partial = !manifest.failed_cells.is_empty()
                || manifest.excluded_date_mismatch + manifest.excluded_malformed > 0;
            Ok(if partial {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Evaluate(args) => {
            let runner = args.load()?;
            let report = runner.evaluate()?;
            let path = runner.write_evaluation(&report)?;
            eprintln!("evaluation written to {}", path.display());
            for method in &report.methods {
                for composite in &method.composite {
                    match composite.value {
                        Some(value) => eprintln!(
                            "{} composite error ({}): {value:.4}",
                            method.method, composite.mode
                        ),
                        None => eprintln!(
                            "{} composite error ({}): unavailable ({})",
                            method.method,
                            composite.mode,
                            composite.note.as_deref().unwrap_or("no data")
                        ),
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report(args) => {
            let runner = args.load()?;
            let report = runner.read_evaluation()?;
            let dir = runner.config.experiment.output_dir.join("report");
            let files = emit_report(&report, &dir)?;
            for file in files {
                eprintln!("wrote {}", file.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
