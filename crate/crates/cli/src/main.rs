use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(
    name = "thememiner",
    version,
    about = "Theme mining over death-investigation narratives"
)]
struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 20240601)]
    seed: u64,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train embeddings on the corpus and list the nearest words to each starter phrase.
    ExpandKeyphrases(ExpandArgs),
    /// Draw the stratified annotation sample.
    Sample(SampleArgs),
    /// Classify every case with the prompt chain.
    RunPipeline(RunArgs),
    /// Score pipeline results against gold labels.
    Evaluate(EvaluateArgs),
    /// Raw and precision/recall-adjusted theme prevalence.
    Prevalence(PrevalenceArgs),
    /// Monthly decomposition and z-scored trend per theme.
    Trends(TrendsArgs),
    /// Per-theme logistic regressions on case covariates.
    Regress(RegressArgs),
    /// Serve a replay fixture as a chat-completions endpoint.
    MockServe(MockServeArgs),
    /// Synthetic corpus, scripted model, full chain.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    #[arg(long, default_value_t = 10)]
    pub min_age: u32,
    #[arg(long, default_value_t = 24)]
    pub max_age: u32,
    #[arg(long, default_value_t = 2013)]
    pub min_year: i32,
    #[arg(long, default_value_t = 2022)]
    pub max_year: i32,
    /// Restrict to these states (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub states: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub cases: PathBuf,
    /// Starter phrases, one per line; the bundled list when omitted.
    #[arg(long)]
    pub starter: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub dimension: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub min_count: u64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub cases: PathBuf,
    /// Keyphrase file; the bundled disclosed list when omitted.
    #[arg(long)]
    pub keyphrases: Option<PathBuf>,
    #[arg(long, default_value_t = 545)]
    pub n_with: usize,
    #[arg(long, default_value_t = 100)]
    pub n_without: usize,
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Base URL of an OpenAI-compatible server (also THEMEMINER_ENDPOINT).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Answer from a replay fixture in-process instead of calling a server.
    #[arg(long, conflicts_with = "endpoint")]
    pub fixture: Option<PathBuf>,
    #[arg(long, default_value = "meta-llama/Llama-3.1-8B-Instruct")]
    pub model: String,
    #[arg(long)]
    pub max_parallel: Option<usize>,
    /// Directory overriding the bundled prompt texts.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long, default_value_t = 120_000)]
    pub timeout_ms: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Case ids to score, one per line; all gold cases when omitted.
    #[arg(long)]
    pub subset: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PrevalenceArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// CSV with columns theme, precision, recall (proportions).
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrendsArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub period: usize,
    /// Only these themes (comma separated); all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub themes: Vec<String>,
    /// Skip series with zero-variance trends instead of failing.
    #[arg(long)]
    pub skip_flat: bool,
    /// Also write an SVG line chart of the z-scored trends.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Bonferroni family size; displayed coefficients times themes by default.
    #[arg(long)]
    pub family_size: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "White")]
    pub race_reference: String,
    #[arg(long)]
    pub no_state_effects: bool,
    #[arg(long)]
    pub no_year_effects: bool,
    #[arg(long)]
    pub no_source_effects: bool,
    #[arg(long)]
    pub no_narrative_length: bool,
    #[arg(long, value_delimiter = ',')]
    pub themes: Vec<String>,
}

#[derive(Debug, Args)]
pub struct MockServeArgs {
    #[arg(long)]
    pub fixture: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8089")]
    pub addr: String,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Share of cases whose gold labels are used for precision and recall.
    #[arg(long, default_value_t = 0.7)]
    pub annotated_fraction: f64,
    #[arg(long, default_value_t = 4)]
    pub max_parallel: usize,
    #[arg(long)]
    pub svg: bool,
}

/// A failed stage and its cause.
#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub cause: String,
}

impl CliError {
    pub fn new(stage: impl Into<String>, cause: impl ToString) -> Self {
        CliError {
            stage: stage.into(),
            cause: cause.to_string(),
        }
    }

    /// Error mapper naming the stage and the file involved.
    pub fn at<E: std::fmt::Display>(
        stage: &'static str,
        path: &Path,
    ) -> impl FnOnce(E) -> CliError + use<E> {
        let path = path.display().to_string();
        move |e| CliError::new(stage, format!("{path}: {e}"))
    }

    pub fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> CliError {
        move |e| CliError::new(stage, e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let seed = cli.seed;
    let outcome = match cli.command {
        Command::ExpandKeyphrases(a) => commands::expand_keyphrases(&a, seed),
        Command::Sample(a) => commands::sample(&a, seed),
        Command::RunPipeline(a) => commands::run_pipeline(&a, seed),
        Command::Evaluate(a) => commands::evaluate(&a, seed),
        Command::Prevalence(a) => commands::prevalence(&a, seed),
        Command::Trends(a) => commands::trends(&a, seed),
        Command::Regress(a) => commands::regress(&a, seed),
        Command::MockServe(a) => commands::mock_serve(&a),
        Command::Demo(a) => commands::demo(&a, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": { "stage": e.stage, "cause": e.cause } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
