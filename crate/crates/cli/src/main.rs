mod bench;
mod config;
mod evaluate;
mod manifest;
mod predict;
mod simulate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lcva::synth::Scenario;
use lcva::{LcvaError, TargetVariant};

#[derive(Debug, Parser)]
#[command(name = "lcva", version, about = "Nested latent class models for verbal autopsy")]
struct Cli {
    /// TOML file with per-command sections; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for chains and record-level work (0 = all cores).
    #[arg(long, global = true, env = "LCVA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the training-stage sampler and write an SCI checkpoint.
    Train(TrainArgs),
    /// Assign causes to TARGET records from a checkpoint.
    Predict(PredictArgs),
    /// Generate synthetic scenario data, or split a labeled dataset.
    Simulate(SimulateArgs),
    /// Score prediction outputs against known target causes.
    Evaluate(EvaluateArgs),
    /// Measure sweep throughput and cross-thread determinism.
    Bench(BenchArgs),
}

#[derive(Debug, Default, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub nu_phi: Option<f64>,
    #[arg(long)]
    pub a_gamma: Option<f64>,
    #[arg(long)]
    pub b_gamma: Option<f64>,
    #[arg(long)]
    pub nu_tau: Option<f64>,
    #[arg(long)]
    pub a_omega: Option<f64>,
    #[arg(long)]
    pub b_omega: Option<f64>,
    #[arg(long)]
    pub alpha_pi: Option<f64>,
    #[arg(long)]
    pub alpha_eta: Option<f64>,
    #[arg(long)]
    pub alpha_pi_target_scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV (rows with a non-TARGET domain are used).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Latent classes per cause.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Defaults to half of the iterations.
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path; sidecar files are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Merge all training domains into one (needed by the single-domain variants).
    #[arg(long)]
    pub pool: bool,
    /// Fix tau = 0: the conditional-independence model.
    #[arg(long)]
    pub tau_zero: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    ConstantWeights,
    NewWeights,
    MultiDomain,
    MultiDomainCause,
}

impl VariantArg {
    pub fn variant(self) -> TargetVariant {
        match self {
            VariantArg::ConstantWeights => TargetVariant::SingleConstant,
            VariantArg::NewWeights => TargetVariant::SingleNewWeights,
            VariantArg::MultiDomain => TargetVariant::MultiDomainMixture,
            VariantArg::MultiDomainCause => TargetVariant::MultiDomainCauseMixture,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// CSV whose TARGET rows are assigned causes.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the full record-by-cause probability matrix.
    #[arg(long)]
    pub full_probs: bool,
    /// Accumulate sampled cause indicators instead of conditional probabilities.
    #[arg(long)]
    pub no_rao_blackwell: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioArg {
    CondIndep,
    SingleDomain,
    IndepDomains,
    DepDomains,
}

impl ScenarioArg {
    pub fn scenario(self) -> Scenario {
        match self {
            ScenarioArg::CondIndep => Scenario::CondIndep,
            ScenarioArg::SingleDomain => Scenario::SingleDomain,
            ScenarioArg::IndepDomains => Scenario::IndepDomains,
            ScenarioArg::DepDomains => Scenario::DepDomains,
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct DimsArgs {
    #[arg(long)]
    pub causes: Option<usize>,
    #[arg(long)]
    pub symptoms: Option<usize>,
    #[arg(long)]
    pub domains: Option<usize>,
    /// Generative latent classes (scenario 1 always uses one).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Records per training domain (even plan).
    #[arg(long)]
    pub per_domain: Option<usize>,
    /// Total training records split unevenly; overrides --per-domain.
    #[arg(long, value_name = "TOTAL")]
    pub uneven: Option<usize>,
    /// Share of the largest domain under --uneven.
    #[arg(long)]
    pub major_fraction: Option<f64>,
    #[arg(long)]
    pub target_size: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[command(flatten)]
    pub dims: DimsArgs,
    /// Split a labeled dataset into a new training set and a synthetic target.
    #[arg(long)]
    pub resample: bool,
    /// Labeled CSV to split under --resample.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fixed per-cause inclusion probability under --resample (default: mixture draw).
    #[arg(long)]
    pub inclusion: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Output directory of `predict`.
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    /// CSV with the true causes of the TARGET rows.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[command(flatten)]
    pub dims: DimsArgs,
    /// Fitted latent classes.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub train_iters: Option<usize>,
    #[arg(long)]
    pub predict_iters: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Thread budgets to compare, e.g. `1,6`.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON report path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl From<LcvaError> for CliError {
    fn from(e: LcvaError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Required value after merging flags and the config file.
pub fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required --{flag}")))
}

fn run(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads).unwrap_or(0);
    match cli.command {
        Command::Train(args) => train::run(args, &file, threads),
        Command::Predict(args) => predict::run(args, &file, threads),
        Command::Simulate(args) => simulate::run(args, &file),
        Command::Evaluate(args) => evaluate::run(args, &file),
        Command::Bench(args) => bench::run(args, &file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
