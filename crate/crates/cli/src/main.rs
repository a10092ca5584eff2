mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::FileConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(condiv::Error),
}

impl From<condiv::Error> for CliError {
    fn from(e: condiv::Error) -> Self {
        CliError::Lib(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "condiv", version, about = "Conditional divergence statistics and tests")]
pub struct Cli {
    /// Master seed; every subcommand is reproducible for a fixed seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output format
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    /// TOML file with default values for any long flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Vn,
    Logdet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixArg {
    Correntropy,
    Covariance,
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    /// Matrix divergence [default: vn]
    #[arg(long, value_enum)]
    pub divergence: Option<KindArg>,
    /// Matrix built from the data [default: correntropy]
    #[arg(long, value_enum)]
    pub matrix: Option<MatrixArg>,
    /// Multiplier on every Silverman kernel width [default: 1]
    #[arg(long)]
    pub width_ratio: Option<f64>,
    /// Choose kernel widths once on the pooled samples
    #[arg(long)]
    pub shared_widths: bool,
    /// One Silverman width per variable pair instead of one per matrix
    #[arg(long)]
    pub pair_widths: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PermArgs {
    /// Number of permutations [default: 500]
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Significance level [default: 0.1]
    #[arg(long)]
    pub significance: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model pair such as A:C
    #[arg(long)]
    pub pair: String,
    /// Input dimension [default: 3]
    #[arg(long)]
    pub p: Option<usize>,
    /// Samples per dataset [default: 500]
    #[arg(long)]
    pub n: Option<usize>,
    /// Independent runs [default: 100]
    #[arg(long)]
    pub runs: Option<usize>,
    /// Desk scale: 50 runs and 100 permutations unless set explicitly
    #[arg(long)]
    pub desk: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarginalArg {
    Bregman,
    Mmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    Bregman,
    Knn,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Divergence between the conditionals of two paired CSV files
    Divergence {
        file1: PathBuf,
        file2: PathBuf,
        /// Target column name [default: y]
        #[arg(long)]
        target: Option<String>,
        #[command(flatten)]
        spec: SpecArgs,
        /// Report D(1||2) only instead of the symmetrized value
        #[arg(long)]
        asymmetric: bool,
        /// Compare the feature marginals instead of the conditionals
        #[arg(long)]
        marginal: bool,
    },
    /// Permutation test of equal conditionals (or marginals) of two files
    Test {
        file1: PathBuf,
        file2: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        perm: PermArgs,
        /// Test the feature marginals with the given statistic
        #[arg(long, value_enum)]
        marginal: Option<MarginalArg>,
    },
    /// Rejection rate of the test on pairs of synthetic models
    Power {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        perm: PermArgs,
        #[arg(long, value_enum, default_value = "bregman")]
        statistic: StatisticArg,
        /// Neighbours for the kNN statistic
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Power across kernel-width ratios
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        perm: PermArgs,
        /// Comma-separated width ratios [default: 0.25,0.5,1,2,4]
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
    /// Drift detection on a stream CSV (idx,x1,...,xp,y)
    Drift {
        stream: PathBuf,
        /// Window length W [default: 200]
        #[arg(long)]
        window: Option<usize>,
        /// Positions between tests [default: 1]
        #[arg(long)]
        stride: Option<usize>,
        /// Minimum gap between events [default: W]
        #[arg(long)]
        cooldown: Option<usize>,
        #[command(flatten)]
        spec: SpecArgs,
        #[command(flatten)]
        perm: PermArgs,
        /// Known drift indices, comma-separated, for scoring
        #[arg(long, value_delimiter = ',')]
        truth: Option<Vec<usize>>,
        /// Matching tolerance for scoring [default: 2W]
        #[arg(long)]
        tolerance: Option<usize>,
        /// Write the precision/recall/delay report (JSON) here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Greedy forward feature selection
    Select {
        file: PathBuf,
        #[arg(long)]
        target: Option<String>,
        /// Features to select
        #[arg(long)]
        k: Option<usize>,
        /// Useless-copy draws per candidate [default: 10]
        #[arg(long)]
        useless_reps: Option<usize>,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Pairwise relatedness of tasks given as paired CSV files
    Relate {
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Construction time of correntropy and covariance matrices versus n
    Bench {
        /// Comma-separated sample sizes
        #[arg(long, value_delimiter = ',', default_value = "500,1000,2000,4000")]
        ns: Vec<usize>,
        /// Number of variables
        #[arg(long, default_value_t = 10)]
        d: usize,
        /// Minimum duration of one timing trial in milliseconds
        #[arg(long, default_value_t = 200)]
        min_trial_ms: u64,
    },
    /// Write synthetic model data as a paired CSV, or a stream CSV
    Generate {
        /// Model A, B, C or D
        #[arg(long, conflicts_with = "stream")]
        model: Option<String>,
        /// Stream segments such as A:1000,C:1000
        #[arg(long, value_delimiter = ',')]
        stream: Option<Vec<String>>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return report(e),
    };
    let mut stdout = std::io::stdout().lock();
    match commands::run(&cli, &file, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        CliError::Lib(ref inner) if !inner.is_usage() => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}
