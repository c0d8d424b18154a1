use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use funcov::{BasisKind, EstimatorKind, InverseMode, ThresholdFamily};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "funcov", version, about = "Covariance estimation for high-dimensional functional time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a panel from one of the factor-model designs.
    Simulate(SimulateArgs),
    /// Estimate the covariance matrix function of a panel.
    Fit(FitArgs),
    /// Estimate factor numbers and choose between the two factor models.
    Select(SelectArgs),
    /// Invert a covariance estimate.
    Invert(InvertArgs),
    /// Minimum-variance functional portfolio backtest on intraday prices.
    Portfolio(PortfolioArgs),
    /// Monte Carlo tables over the simulation designs.
    Bench(BenchArgs),
    /// Run any of the above from a JSON config with a `command` field.
    Run(RunArgs),
}

/// The config-file form of a command. Keys match the long flag names with
/// `-` replaced by `_`; panel flags nest under `data` and threshold flags
/// under `thresholding`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Simulate(SimulateArgs),
    Fit(FitArgs),
    Select(SelectArgs),
    Invert(InvertArgs),
    Portfolio(PortfolioArgs),
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
}

fn d_dgp() -> u8 {
    1
}
fn d_p() -> usize {
    50
}
fn d_n() -> usize {
    100
}
fn d_r() -> usize {
    3
}
fn d_alpha() -> f64 {
    0.5
}
fn d_k() -> usize {
    funcov::experiment::DEFAULT_K
}
fn d_basis_kind() -> BasisKind {
    BasisKind::Fourier
}
fn d_method() -> EstimatorKind {
    EstimatorKind::Digit
}
fn d_threshold() -> ThresholdFamily {
    ThresholdFamily::Soft
}
fn d_cdot() -> f64 {
    0.5
}
fn d_cv_grid() -> Vec<f64> {
    (1..=8).map(|i| 0.25 * i as f64).collect()
}
fn d_c_r() -> f64 {
    funcov::select::DEFAULT_C_R
}
fn d_eps0() -> f64 {
    funcov::select::DEFAULT_EPS0
}
fn d_mode() -> InverseMode {
    InverseMode::Truncated
}
fn d_energy() -> f64 {
    funcov::inverse::DEFAULT_ENERGY
}
fn d_portfolio_k() -> usize {
    10
}
fn d_portfolio_basis() -> BasisKind {
    BasisKind::BsplineOrthonormalized
}
fn d_methods() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Digit, EstimatorKind::Fpoet, EstimatorKind::Sample]
}
fn d_train() -> usize {
    126
}
fn d_eval() -> usize {
    21
}
fn d_bench_p() -> usize {
    100
}
fn d_bench_n() -> usize {
    100
}
fn d_reps() -> usize {
    100
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// DgpConfig JSON; overrides the design flags below.
    #[arg(long)]
    #[serde(default)]
    pub config: Option<PathBuf>,
    /// 1: functional factors, real loadings. 2: real factors, functional loadings.
    #[arg(long, default_value_t = d_dgp())]
    #[serde(default = "d_dgp")]
    pub dgp: u8,
    #[arg(long, default_value_t = d_p())]
    #[serde(default = "d_p")]
    pub p: usize,
    #[arg(long, default_value_t = d_n())]
    #[serde(default = "d_n")]
    pub n: usize,
    #[arg(long, default_value_t = d_r())]
    #[serde(default = "d_r")]
    pub r: usize,
    #[arg(long, default_value_t = d_alpha())]
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub replication: u64,
    /// Dimension of the Fourier estimation basis.
    #[arg(long, default_value_t = d_k())]
    #[serde(default = "d_k")]
    pub k: usize,
    /// Grid size; defaults to 4K+1.
    #[arg(long)]
    #[serde(default)]
    pub grid: Option<usize>,
    /// Also write `prices.csv`, an intraday price panel driven by the curves.
    #[arg(long)]
    #[serde(default)]
    pub prices: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelArgs {
    /// Long-format CSV with columns t,series,u,value.
    #[arg(long)]
    pub input: PathBuf,
    /// Basis JSON {kind,K,grid}; built from the data grid when absent.
    #[arg(long)]
    #[serde(default)]
    pub basis: Option<PathBuf>,
    #[arg(long, default_value_t = d_basis_kind())]
    #[serde(default = "d_basis_kind")]
    pub basis_kind: BasisKind,
    #[arg(long, default_value_t = d_k())]
    #[serde(default = "d_k")]
    pub k: usize,
    /// Skip removing the sample mean curve.
    #[arg(long)]
    #[serde(default)]
    pub no_center: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdArgs {
    #[arg(long, default_value_t = d_threshold())]
    #[serde(default = "d_threshold")]
    pub threshold: ThresholdFamily,
    #[arg(long, default_value_t = d_cdot())]
    #[serde(default = "d_cdot")]
    pub cdot: f64,
    /// Choose the threshold constant by contiguous-fold cross-validation.
    #[arg(long)]
    #[serde(default)]
    pub cv_folds: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = d_cv_grid())]
    #[serde(default = "d_cv_grid")]
    pub cv_grid: Vec<f64>,
    #[arg(long)]
    #[serde(default)]
    pub threshold_diagonal: bool,
}

impl Default for ThresholdArgs {
    fn default() -> Self {
        ThresholdArgs {
            threshold: d_threshold(),
            cdot: d_cdot(),
            cv_folds: None,
            cv_grid: d_cv_grid(),
            threshold_diagonal: false,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(rename = "data")]
    pub panel: PanelArgs,
    #[arg(long, default_value_t = d_method())]
    #[serde(default = "d_method")]
    pub method: EstimatorKind,
    /// Number of factors; estimated by the eigenvalue-ratio rule when absent.
    #[arg(long)]
    #[serde(default)]
    pub r: Option<usize>,
    #[command(flatten)]
    #[serde(rename = "thresholding", default)]
    pub thresh: ThresholdArgs,
    /// True covariance CSV (header JSON alongside); adds losses to the report.
    #[arg(long)]
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    #[command(flatten)]
    #[serde(rename = "data")]
    pub panel: PanelArgs,
    #[arg(long, default_value_t = d_c_r())]
    #[serde(default = "d_c_r")]
    pub c_r: f64,
    #[arg(long, default_value_t = d_eps0())]
    #[serde(default = "d_eps0")]
    pub eps0: f64,
    #[arg(long)]
    #[serde(default)]
    pub r0: Option<usize>,
    /// Report path; stdout when absent.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertArgs {
    #[arg(long, default_value_t = d_mode())]
    #[serde(default = "d_mode")]
    pub mode: InverseMode,
    /// Covariance CSV to invert (truncated mode).
    #[arg(long)]
    #[serde(default)]
    pub sigma: Option<PathBuf>,
    /// Panel CSV for a DIGIT fit (smw mode).
    #[arg(long)]
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    #[serde(default)]
    pub basis: Option<PathBuf>,
    #[arg(long, default_value_t = d_basis_kind())]
    #[serde(default = "d_basis_kind")]
    pub basis_kind: BasisKind,
    #[arg(long, default_value_t = d_k())]
    #[serde(default = "d_k")]
    pub k: usize,
    #[arg(long)]
    #[serde(default)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = d_threshold())]
    #[serde(default = "d_threshold")]
    pub threshold: ThresholdFamily,
    #[arg(long, default_value_t = d_cdot())]
    #[serde(default = "d_cdot")]
    pub cdot: f64,
    #[arg(long, default_value_t = d_energy())]
    #[serde(default = "d_energy")]
    pub energy: f64,
    #[arg(long)]
    #[serde(default)]
    pub ridge: Option<f64>,
    /// Also write the regularized correlation and precision matrix functions.
    #[arg(long)]
    #[serde(default)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioArgs {
    /// Long-format CSV with columns t,series,u,price.
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long, default_value_t = d_portfolio_basis())]
    #[serde(default = "d_portfolio_basis")]
    pub basis_kind: BasisKind,
    #[arg(long, default_value_t = d_portfolio_k())]
    #[serde(default = "d_portfolio_k")]
    pub k: usize,
    #[arg(long = "method", value_delimiter = ',', default_values_t = d_methods())]
    #[serde(default = "d_methods")]
    pub methods: Vec<EstimatorKind>,
    /// Factor numbers to try; the ratio rule is used when empty.
    #[arg(long = "r", value_delimiter = ',')]
    #[serde(default)]
    pub ranks: Vec<usize>,
    #[arg(long, default_value_t = d_train())]
    #[serde(default = "d_train")]
    pub train: usize,
    #[arg(long, default_value_t = d_eval())]
    #[serde(default = "d_eval")]
    pub eval: usize,
    #[arg(long, default_value_t = d_energy())]
    #[serde(default = "d_energy")]
    pub energy: f64,
    #[arg(long, default_value_t = d_threshold())]
    #[serde(default = "d_threshold")]
    pub threshold: ThresholdFamily,
    #[arg(long, default_value_t = d_cdot())]
    #[serde(default = "d_cdot")]
    pub cdot: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// Relative frequency of recovering r.
    #[arg(long)]
    #[serde(default)]
    pub table1: bool,
    /// ΔPC and ΔIC per replication.
    #[arg(long)]
    #[serde(default)]
    pub figure1: bool,
    /// Estimation losses against the truth.
    #[arg(long)]
    #[serde(default)]
    pub losses: bool,
    /// Restrict to one design; both when absent.
    #[arg(long)]
    #[serde(default)]
    pub dgp: Option<u8>,
    #[arg(long, default_value_t = d_bench_p())]
    #[serde(default = "d_bench_p")]
    pub p: usize,
    #[arg(long, default_value_t = d_bench_n())]
    #[serde(default = "d_bench_n")]
    pub n: usize,
    #[arg(long, default_value_t = d_r())]
    #[serde(default = "d_r")]
    pub r: usize,
    /// Defaults to 0.75 for table1 and 0.5 otherwise.
    #[arg(long)]
    #[serde(default)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = d_reps())]
    #[serde(default = "d_reps")]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    #[serde(default)]
    pub seed: u64,
    #[arg(long, default_value_t = d_k())]
    #[serde(default = "d_k")]
    pub k: usize,
    #[arg(long, default_value_t = d_threshold())]
    #[serde(default = "d_threshold")]
    pub threshold: ThresholdFamily,
    #[arg(long, default_value_t = d_cdot())]
    #[serde(default = "d_cdot")]
    pub cdot: f64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Per-replication rows as CSV.
    #[arg(long)]
    #[serde(default)]
    pub csv: Option<PathBuf>,
}
