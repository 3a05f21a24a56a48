//! `sphae` command-line driver.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | internal or unclassified error |
//! | 2 | usage error (unknown flag, bad value) |
//! | 3 | missing or unreadable file |
//! | 4 | configuration conflict or invalid configuration |
//! | 5 | malformed input file (bad magic, version, truncation, shape) |
//! | 6 | numerical failure (non-finite loss) |
//! | 7 | self-test failure |

mod commands;
mod embeddings;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MISSING_FILE: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
pub const EXIT_FORMAT: u8 = 5;
pub const EXIT_NUMERIC: u8 = 6;
pub const EXIT_SELFTEST: u8 = 7;

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn new(code: u8, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, msg)
    }
}

impl From<sphae::Error> for CliError {
    fn from(e: sphae::Error) -> Self {
        use sphae::Error as E;
        let code = match &e {
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => EXIT_MISSING_FILE,
            E::Io(_) => EXIT_MISSING_FILE,
            E::InvalidConfig(_) | E::InvalidBandwidth(_) | E::EmptyDataset => EXIT_CONFIG,
            E::BadMagic(_) | E::Corrupt(_) | E::VersionMismatch { .. } | E::ShapeConflict(_) | E::Dimension(_) => {
                EXIT_FORMAT
            }
            E::NonFiniteLoss { .. } => EXIT_NUMERIC,
            _ => EXIT_INTERNAL,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        sphae::Error::Io(e).into()
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => Self::new(EXIT_MISSING_FILE, e.to_string()),
            _ => Self::new(EXIT_FORMAT, e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "sphae", version, about = "Rotation-invariant autoencoders for spherical signals")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Fixed-order gradient reduction. Reductions are always performed in
    /// sample order, so this flag is accepted for scripting symmetry.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Project MNIST digits onto the sphere and write a dataset file.
    GenData(GenDataArgs),
    /// Train an autoencoder.
    Train(TrainArgs),
    /// Train the supervised baseline classifier.
    TrainClassifier(TrainClassifierArgs),
    /// Reconstruct a dataset with a trained autoencoder.
    Reconstruct(ReconstructArgs),
    /// Write latent vectors of a dataset as CSV.
    Embed(EmbedArgs),
    /// k-means on embeddings, with purity, homogeneity and completeness.
    Cluster(ClusterArgs),
    /// Linear-probe (and optionally few-shot) classification of embeddings.
    Classify(ClassifyArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
    /// Time transforms and correlations.
    Bench(BenchArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantArg {
    Nr,
    R,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossArg {
    L2,
    Rotinv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegimeArg {
    Nrnr,
    Rr,
    Nrr,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Directory holding the MNIST IDX files.
    #[arg(long, env = "SPHAE_DATA_DIR")]
    pub mnist_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "nr")]
    pub variant: VariantArg,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 30)]
    pub bandwidth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of samples (default: the whole split).
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional validation dataset file (logged each epoch).
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rotinv")]
    pub loss: LossArg,
    /// Checked against the variants of `--data` and `--val`.
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    /// Preset name (`full`, `desk`, `toy`) or a `key=value` config file.
    #[arg(long, default_value = "full")]
    pub config: String,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SO(3) grid bandwidth for the loss maximum (default: input bandwidth).
    #[arg(long)]
    pub b_corr: Option<usize>,
    /// Global gradient-norm clip.
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub out_ckpt: PathBuf,
    /// Metrics CSV (`epoch,step,split,loss,psnr`); stdout when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainClassifierArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value = "full")]
    pub config: String,
    /// Percentage of the training labels to use (stratified).
    #[arg(long, default_value_t = 100.0)]
    pub percent: f64,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_ckpt: Option<PathBuf>,
    #[arg(long)]
    pub out_metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Rotate each reconstruction onto its input before scoring.
    #[arg(long)]
    pub align: bool,
    /// Print the mean PSNR to stdout.
    #[arg(long)]
    pub report_psnr: bool,
    /// Directory for per-sample CSV grids (`beta_index,alpha_index,input,reconstruction`).
    #[arg(long)]
    pub dump_grids: Option<PathBuf>,
    /// Per-sample CSV `index,label,psnr`.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub b_corr: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Labels CSV with a `label` column; defaults to the embeddings' own labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub train_emb: PathBuf,
    #[arg(long)]
    pub test_emb: PathBuf,
    /// Also evaluate at 1, 2, 5, 10 and 100 % of the training labels.
    #[arg(long)]
    pub few_shot: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_metrics: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    #[arg(long, value_enum, default_value = "fast")]
    pub level: Level,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    S2fft,
    So3fft,
    S2corr,
    So3corr,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "s2fft")]
    pub op: BenchOp,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
    pub bandwidths: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(EXIT_INTERNAL, e.to_string()))?;
    }
    match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::TrainClassifier(a) => commands::train_classifier(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Embed(a) => commands::embed(a),
        Command::Cluster(a) => commands::cluster(a),
        Command::Classify(a) => commands::classify(a),
        Command::Selftest(a) => selftest::run(a.level),
        Command::Bench(a) => commands::bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
