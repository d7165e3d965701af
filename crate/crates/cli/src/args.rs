use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use compdeg_core::NetworkKind;

#[derive(Debug, Parser)]
#[command(name = "compdeg", version, about = "Compositional degradation estimation and restoration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply blur, noise, quantization and optional JPEG to an image.
    Degrade(DegradeArgs),
    /// Train the estimation or restoration network.
    Train(TrainArgs),
    /// Estimate the per-pixel degradation attribute map of an image.
    Estimate(EstimateArgs),
    /// Restore an image, blind or with given attributes.
    Restore(RestoreArgs),
    /// Evaluate trained networks on a grid of degradations.
    Eval(EvalArgs),
    /// Serve the estimation and restoration HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("jpeg").required(true).args(["quality", "no_jpeg"])))]
pub struct DegradeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long)]
    pub quality: Option<u8>,
    #[arg(long)]
    pub no_jpeg: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Estimator,
    Restorer,
}

impl From<KindArg> for NetworkKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Estimator => NetworkKind::Estimator,
            KindArg::Restorer => NetworkKind::Restorer,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub data: PathBuf,
    /// Weights file; the history CSV and config JSON are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patches_per_epoch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out_map: PathBuf,
    /// Also write the channel means here; they are always printed.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub res_weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Blind mode: estimate the attributes with these weights.
    #[arg(long)]
    pub est_weights: Option<PathBuf>,
    /// Attribute map PNG (red = blur, green = noise, blue = JPEG).
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, conflicts_with = "no_jpeg")]
    pub quality: Option<u8>,
    #[arg(long)]
    pub no_jpeg: bool,
    /// Clean image to report PSNR against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of clean test images.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub est_weights: PathBuf,
    /// Also evaluate restoration (blind, nonblind and degraded PSNR).
    #[arg(long)]
    pub res_weights: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.5, 3.0])]
    pub sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 25.0, 55.0])]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [100, 50, 10])]
    pub qualities: Vec<u8>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the estimator grid CSV here.
    #[arg(long)]
    pub est_csv: Option<PathBuf>,
    /// Write the restoration grid CSV here.
    #[arg(long)]
    pub res_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub est_weights: PathBuf,
    #[arg(long)]
    pub res_weights: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Largest accepted width or height.
    #[arg(long, default_value_t = crate::service::DEFAULT_MAX_DIM)]
    pub max_dim: usize,
    /// Directory of static files served under `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}
