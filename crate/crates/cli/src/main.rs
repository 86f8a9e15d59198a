use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::CliError;

/// Search-log sanitization experiments.
#[derive(Debug, Parser)]
#[command(name = "searchlog", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic Zipfian log as TSV.
    Generate(GenerateArgs),
    /// Run one release mechanism over a TSV log.
    Sanitize(SanitizeArgs),
    /// Score a release against the original log.
    Evaluate(EvaluateArgs),
    /// Exact-enumeration privacy audit on a tiny fixture.
    Audit(AuditArgs),
    /// Utility of every (mechanism, epsilon, seed) cell.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Mechanism {
    Threshold,
    TokenHash,
    Kanon,
    LaplaceHist,
    Pdp,
}

impl Mechanism {
    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Threshold => "threshold",
            Mechanism::TokenHash => "token_hash",
            Mechanism::Kanon => "kanon",
            Mechanism::LaplaceHist => "laplace_hist",
            Mechanism::Pdp => "pdp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditedMechanism {
    Pdp,
    Threshold,
    Kanon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Granularity {
    Exact,
    Day,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Query,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum CertificateArg {
    LeakBounded,
    RatioOnly,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub users: usize,
    #[arg(long, default_value_t = 1000, allow_hyphen_values = true)]
    pub vocab: usize,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub zipf: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub mean_activity: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub click_prob: f64,
    #[arg(long, default_value_t = 3, allow_hyphen_values = true)]
    pub urls_per_query: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Privacy flags shared by the noisy mechanisms.
#[derive(Debug, Clone, Args)]
pub struct PrivacyArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SanitizeArgs {
    #[arg(long, value_enum)]
    pub mechanism: Mechanism,
    /// Threshold on distinct users (threshold).
    #[arg(long)]
    pub t: Option<usize>,
    /// Count occurrences instead of distinct users (threshold).
    #[arg(long)]
    pub occurrences: bool,
    /// Minimum distinct users per query (kanon).
    #[arg(long)]
    pub k: Option<usize>,
    /// Publication threshold on noisy counts (laplace_hist).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tau: f64,
    /// Budget split; chosen by the optimizer when absent (pdp).
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_pseudonymize: bool,
    #[arg(long, value_enum, default_value = "day")]
    pub timestamps: Granularity,
    /// retention,coverage,distance,association,linkage
    #[arg(long)]
    pub weights: Option<String>,
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub original: PathBuf,
    /// Sanitized TSV log or aggregate release JSON.
    pub sanitized: PathBuf,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, value_enum, default_value = "pair")]
    pub kind: Kind,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, value_enum, default_value = "pdp")]
    pub mechanism: AuditedMechanism,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 2, allow_hyphen_values = true)]
    pub cap: usize,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long, default_value_t = 2)]
    pub t: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "leak_bounded")]
    pub certificate: CertificateArg,
    #[arg(long)]
    pub no_pseudonymize: bool,
    /// Keep every item and record (deliberately broken variant).
    #[arg(long)]
    pub disable_noise: bool,
    #[arg(long)]
    pub fixture: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub mechanisms: Vec<Mechanism>,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub epsilons: Vec<f64>,
    /// Seeds 0..N per cell.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 3, allow_hyphen_values = true)]
    pub cap: usize,
    #[arg(long, default_value_t = 2)]
    pub t: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tau: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(&args),
        Command::Sanitize(args) => commands::sanitize(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Audit(args) => commands::audit(&args),
        Command::Compare(args) => commands::compare(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if !matches!(err, CliError::AuditFailed) {
                eprintln!("error: {err}");
            }
            ExitCode::from(err.exit_code())
        }
    }
}
