use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "fstucker", version, about = "Functional sparse Tucker compression of scientific fields")]
pub struct Cli {
    /// TOML file supplying defaults; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress a point cloud (CSV/FPCL) or structured tensor (FTEN) into a model.
    Compress(CompressArgs),
    /// Re-estimate a model's core against scattered data by sketched least squares.
    Reestimate(ReestimateArgs),
    /// Evaluate a model on a grid or at listed points.
    Reconstruct(ReconstructArgs),
    /// Write a 2-D slice of a model as PGM and CSV.
    Slice(SliceArgs),
    /// Write decay, leverage-score and self-convergence CSVs.
    Diagnostics(DiagnosticsArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Describe a model, tensor or point-cloud file.
    Info(InfoArgs),
}

#[derive(Args, Debug, Default)]
pub struct TuckerFlags {
    /// Relative ST-HOSVD tolerance ε.
    #[arg(long)]
    pub tucker_eps: Option<f64>,
    /// Legendre candidate degree p.
    #[arg(long)]
    pub basis_legendre_p: Option<usize>,
    /// Wavelet candidate resolution level s.
    #[arg(long)]
    pub basis_wavelet_s: Option<usize>,
    /// Wavelet candidate polynomial degree p.
    #[arg(long)]
    pub basis_wavelet_p: Option<usize>,
    /// Drop the Legendre candidate.
    #[arg(long)]
    pub no_legendre: bool,
    /// Drop the wavelet candidate.
    #[arg(long)]
    pub no_wavelet: bool,
}

#[derive(Args, Debug, Default)]
pub struct SketchFlags {
    /// Sampled rows S (default ceil(2.5·R)).
    #[arg(long)]
    pub sketch_s: Option<usize>,
    /// Mixing transform: dct, wht or fft.
    #[arg(long)]
    pub sketch_transform: Option<String>,
    /// Working-subset rows, or "all".
    #[arg(long)]
    pub sketch_working_subset: Option<String>,
    /// Fraction of the data held out for validation.
    #[arg(long)]
    pub sketch_validation_frac: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CompressArgs {
    /// Samples: CSV or FPCL point cloud, or FTEN tensor.
    #[arg(short, long)]
    pub input: PathBuf,
    /// Model file to write (FSTK).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Interpolation grid for scattered input, e.g. 64,64,64.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    /// Physical box of structured input, e.g. 0:1,0:2,-1:1 (default unit box).
    #[arg(long, value_delimiter = ',')]
    pub domain: Option<Vec<String>>,
    /// Fraction of scattered samples used for interpolation.
    #[arg(long)]
    pub subsample_frac: Option<f64>,
    /// IDW neighbour count (default 2d+2).
    #[arg(long)]
    pub idw_k: Option<usize>,
    /// Points used for the validation error.
    #[arg(long)]
    pub validation_points: Option<usize>,
    #[command(flatten)]
    pub tucker: TuckerFlags,
}

#[derive(Args, Debug)]
pub struct ReestimateArgs {
    /// FSTK model whose mode functions are kept.
    #[arg(short, long)]
    pub model: PathBuf,
    /// Original samples (CSV, FPCL, or FTEN on the model's box).
    #[arg(short, long)]
    pub data: PathBuf,
    /// Model file to write with the new core.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub sketch: SketchFlags,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// FSTK model.
    #[arg(short, long)]
    pub model: PathBuf,
    /// FTEN (grid only) or CSV output.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Evaluate on this grid over the model's box, e.g. 50,50,50.
    #[arg(long, value_delimiter = ',', conflicts_with = "points")]
    pub grid: Option<Vec<usize>>,
    /// CSV of points (header, d coordinate columns, optional value column).
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// FTEN tensor to compare a grid reconstruction against.
    #[arg(long, requires = "grid")]
    pub reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SliceArgs {
    /// FSTK model.
    #[arg(short, long)]
    pub model: PathBuf,
    /// Output prefix; writes PREFIX.pgm and PREFIX.csv.
    #[arg(short, long)]
    pub output: PathBuf,
    /// The two free modes (0-based), e.g. 0,1.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub free: Vec<usize>,
    /// Coordinates for every mode (free entries ignored); default box centre.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub fixed: Option<Vec<f64>>,
    /// Image size, e.g. 256,256.
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub resolution: Vec<usize>,
}

#[derive(Args, Debug)]
pub struct DiagnosticsArgs {
    /// FSTK model.
    #[arg(short, long)]
    pub model: PathBuf,
    /// Original samples for leverage and self-convergence outputs.
    #[arg(short, long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Rows used for the leverage-score SVDs.
    #[arg(long, default_value_t = 4096)]
    pub leverage_rows: usize,
    /// Histogram bins for the leverage scores.
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Increasing S values for the self-convergence curve.
    #[arg(long, value_delimiter = ',')]
    pub s_values: Option<Vec<usize>>,
    #[command(flatten)]
    pub sketch: SketchFlags,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// smooth, flame-front or multiscale.
    #[arg(long, default_value = "smooth")]
    pub kind: String,
    /// Grid shape for structured (FTEN) output.
    #[arg(long, value_delimiter = ',', conflicts_with = "points")]
    pub shape: Option<Vec<usize>>,
    /// Scattered sample count (CSV or FPCL by extension).
    #[arg(long, requires = "dim")]
    pub points: Option<usize>,
    /// Dimension of scattered output.
    #[arg(long)]
    pub dim: Option<usize>,
    /// FTEN for --shape; CSV (by extension) or FPCL for --points.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Mode-coupling strength (0 makes smooth and flame-front fields rank 1).
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Flame-front thickness on the unit box.
    #[arg(long)]
    pub thickness: Option<f64>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    /// File to describe (FSTK, FTEN, FPCL or CSV).
    pub path: PathBuf,
}
