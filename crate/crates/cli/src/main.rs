//! `emalign` — compare two emotion-rating similarity structures with
//! supervised correlation analysis and unsupervised Gromov-Wasserstein
//! alignment, against shuffled-null baselines.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

mod commands;
mod config;
mod pipeline;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "emalign",
    version,
    about = "Quantify how similar two emotion-rating similarity structures are",
    max_term_width = 100
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted-category synthetic dataset (two noisy views)
    Synth(SynthArgs),
    /// Split rater records into two groups and average each into a matrix
    Ingest(IngestArgs),
    /// Build the dissimilarity matrix of one rating CSV
    Rdm(RdmArgs),
    /// Per-stimulus and whole-structure correlations between two rating CSVs
    Rsa(RsaArgs),
    /// Align two dissimilarity matrices by Gromov-Wasserstein optimal transport
    Gwot(GwotArgs),
    /// Score a transport plan against identity and category ground truth
    Evaluate(EvaluateArgs),
    /// Run a single null analysis from a pipeline config
    Null(NullArgs),
    /// Run the full pipeline described by a config file
    Pipeline(PipelineArgs),
}

#[derive(Args)]
pub(crate) struct SynthArgs {
    /// Number of stimuli (must be a multiple of --categories)
    #[arg(long, default_value_t = 200)]
    pub stimuli: usize,
    /// Planted category count
    #[arg(long, default_value_t = 10)]
    pub categories: usize,
    /// Rating dimensions per stimulus
    #[arg(long, default_value_t = 34)]
    pub dims: usize,
    /// Rating scale upper bound
    #[arg(long, default_value_t = 9.0)]
    pub scale: f64,
    /// Per-view observation noise sigma
    #[arg(long, default_value_t = 0.8)]
    pub noise_sigma: f64,
    /// Sigma of the per-stimulus offsets shared by both views
    #[arg(long, default_value_t = 2.4)]
    pub item_sigma: f64,
    /// Minimum distance between category means, in noise-sigma units
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 77)]
    pub seed: u64,
    /// Output directory (default: $EMALIGN_OUTDIR, then ./out)
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct IngestArgs {
    /// Rater records CSV (rater_id, category, stimulus_id, t_index, value)
    #[arg(long)]
    pub records: PathBuf,
    /// Rating scale upper bound
    #[arg(long)]
    pub scale: f64,
    /// Seed for the rater-to-group split
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: $EMALIGN_OUTDIR, then ./out)
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct RdmArgs {
    /// Rating matrix CSV (stimulus_id column + one column per category)
    #[arg(long)]
    pub input: PathBuf,
    /// Rating scale upper bound
    #[arg(long)]
    pub scale: f64,
    /// Output directory (default: $EMALIGN_OUTDIR, then ./out)
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct RsaArgs {
    /// First rating matrix CSV (the reference)
    #[arg(long)]
    pub input_a: PathBuf,
    /// Second rating matrix CSV, same stimuli in the same order
    #[arg(long)]
    pub input_b: PathBuf,
    /// Rating scale upper bound
    #[arg(long)]
    pub scale: f64,
    /// Output directory (default: $EMALIGN_OUTDIR, then ./out)
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct GwotArgs {
    /// First dissimilarity matrix CSV
    #[arg(long)]
    pub rdm_a: PathBuf,
    /// Second dissimilarity matrix CSV
    #[arg(long)]
    pub rdm_b: PathBuf,
    /// Random restarts (default: size-based schedule 10,000 / 1,000 / 200)
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    /// Relative objective-decrease tolerance for convergence
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rewrite the second RDM's values onto the first's distribution first
    #[arg(long)]
    pub histogram_match: bool,
    /// Output directory (default: $EMALIGN_OUTDIR, then ./out)
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct EvaluateArgs {
    /// Transport plan CSV (as written by `gwot` or `pipeline`)
    #[arg(long)]
    pub plan: PathBuf,
    /// Category CSV (stimulus_id, category)
    #[arg(long)]
    pub categories: PathBuf,
    /// Output directory (default: $EMALIGN_OUTDIR, then ./out)
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct NullArgs {
    /// Pipeline config TOML
    #[arg(short, long)]
    pub config: PathBuf,
    /// Which null analysis to run
    #[arg(long, value_enum)]
    pub metric: NullMetricArg,
    /// Override the config's shuffle count for this metric
    #[arg(long)]
    pub shuffles: Option<usize>,
    /// Override the config's base seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's output directory
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub(crate) enum NullMetricArg {
    #[value(name = "per_stimulus_mean_r")]
    PerStimulusMeanR,
    #[value(name = "rdm_correlation")]
    RdmCorrelation,
    #[value(name = "matching_rate")]
    MatchingRate,
    #[value(name = "category_matching_rate")]
    CategoryMatchingRate,
}

#[derive(Args)]
pub(crate) struct PipelineArgs {
    /// Pipeline config TOML
    #[arg(short, long)]
    pub config: PathBuf,
    /// Override the config's output directory
    #[arg(short, long)]
    pub outdir: Option<PathBuf>,
    /// Override the config's base seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the solver restart count
    #[arg(long)]
    pub restarts: Option<usize>,
}

fn main() -> ExitCode {
    // Map usage errors to exit code 1 (clap's default of 2 is reserved for
    // numerical failures here); --help and --version still exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => commands::cmd_synth(&args),
        Command::Ingest(args) => commands::cmd_ingest(&args),
        Command::Rdm(args) => commands::cmd_rdm(&args),
        Command::Rsa(args) => commands::cmd_rsa(&args),
        Command::Gwot(args) => commands::cmd_gwot(&args),
        Command::Evaluate(args) => commands::cmd_evaluate(&args),
        Command::Null(args) => commands::cmd_null(&args),
        Command::Pipeline(args) => commands::cmd_pipeline(&args),
    }
}

/// 2 for numerical failures (degenerate inputs the math cannot handle),
/// 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<emalign::Error>() {
            return if e.is_numerical() { 2 } else { 1 };
        }
    }
    1
}
