//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use equicanon_core::metrics::Variant;

#[derive(Debug, Parser)]
#[command(name = "equicanon", version, about = "Denoise, canonicalize and benchmark 3D point clouds")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed; required without --config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sequence and its manifest into the --out directory.
    GenSynth,
    /// Denoise a cloud file or every frame of a manifest.
    Denoise {
        input: PathBuf,
        /// Neighborhood size; overrides denoise.k.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Farthest point sampling.
    Fps {
        input: PathBuf,
        /// Points to keep; defaults to bench.fps_points.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Normalize, then apply the configured augmentations.
    Augment { input: PathBuf },
    /// Map clouds into their estimated canonical frame.
    Canonicalize {
        input: PathBuf,
        /// Encoder parameters; defaults to a seeded initialization.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Adjacent-frame Chamfer distances of a manifest.
    BenchConsistency {
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [VariantArg::Raw, VariantArg::Fps, VariantArg::Denoised])]
        variants: Vec<VariantArg>,
    },
    /// Frame deviation and embedding similarity under three perturbation levels.
    BenchEquivariance {
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Contrastive training on a directory of clouds or a manifest.
    Train { dataset: PathBuf },
    /// Run the canonicalizing policy on an observation file.
    Act {
        observation: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Skip the denoising stage.
        #[arg(long)]
        no_denoise: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Raw,
    Fps,
    Denoised,
}

impl std::fmt::Display for VariantArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(Variant::from(*self).as_str())
    }
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Raw => Variant::Raw,
            VariantArg::Fps => Variant::Fps,
            VariantArg::Denoised => Variant::Denoised,
        }
    }
}
