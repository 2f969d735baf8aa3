//! JSON run configuration.
//!
//! Every section and field is optional and falls back to the library
//! defaults; only the top-level `seed` is required. Unknown keys are errors.

use std::path::Path;

use equicanon_core::contrastive::{AugmentationConfig, Optimizer, TrainConfig};
use equicanon_core::denoise::{DenoiseConfig, Pass};
use equicanon_core::encoder::{EncoderArch, InvariantFeatures, Lift};
use equicanon_core::geometry::{RigidTransform, Rotation};
use equicanon_core::synth::{NoiseSpec, SequenceSpec, ShapeKind, ShapeSpec};
use equicanon_core::Vec3;
use serde::{Deserialize, Serialize};

use crate::cloud_io::CloudFormat;
use crate::error::{CliError, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub denoise: DenoiseSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub contrastive: ContrastiveSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassName {
    Normal,
    Tangent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSection {
    pub k: usize,
    pub passes: Vec<PassName>,
}

impl Default for DenoiseSection {
    fn default() -> Self {
        DenoiseSection { k: 16, passes: vec![PassName::Normal, PassName::Tangent] }
    }
}

impl DenoiseSection {
    pub fn to_config(&self) -> DenoiseConfig {
        DenoiseConfig {
            k: self.k,
            passes: self
                .passes
                .iter()
                .map(|p| match p {
                    PassName::Normal => Pass::Normal,
                    PassName::Tangent => Pass::Tangent,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftName {
    Coordinates,
    Moments,
    Edges,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantsName {
    Norms,
    NormsAndAdjacentProducts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub lift: LiftName,
    /// Neighborhood size of the edge lift.
    pub lift_k: usize,
    pub channels: Vec<usize>,
    pub leak: f64,
    pub embed_dim: usize,
    pub invariants: InvariantsName,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let arch = EncoderArch::default();
        EncoderSection {
            lift: LiftName::Moments,
            lift_k: 16,
            channels: arch.channels,
            leak: arch.leak,
            embed_dim: arch.embed_dim,
            invariants: InvariantsName::NormsAndAdjacentProducts,
        }
    }
}

impl EncoderSection {
    pub fn to_arch(&self) -> EncoderArch {
        EncoderArch {
            lift: match self.lift {
                LiftName::Coordinates => Lift::Coordinates,
                LiftName::Moments => Lift::Moments,
                LiftName::Edges => Lift::Edges { k: self.lift_k },
            },
            channels: self.channels.clone(),
            leak: self.leak,
            embed_dim: self.embed_dim,
            invariants: match self.invariants {
                InvariantsName::Norms => InvariantFeatures::Norms,
                InvariantsName::NormsAndAdjacentProducts => InvariantFeatures::NormsAndAdjacentProducts,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveSection {
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerName,
}

impl Default for ContrastiveSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        ContrastiveSection { tau: d.tau, epochs: d.epochs, batch_size: d.batch_size, lr: d.lr, optimizer: OptimizerName::Adam }
    }
}

impl ContrastiveSection {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            tau: self.tau,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            optimizer: match self.optimizer {
                OptimizerName::Adam => Optimizer::ADAM,
                OptimizerName::Sgd => Optimizer::Sgd,
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub jitter_sigma: f64,
    pub dropout_frac: f64,
    pub insert_frac: f64,
    pub crop_frac: f64,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let d = AugmentationConfig::default();
        AugmentSection { jitter_sigma: d.jitter_sigma, dropout_frac: d.dropout_frac, insert_frac: d.insert_frac, crop_frac: d.crop_frac }
    }
}

impl AugmentSection {
    pub fn to_config(&self, seed: u64) -> AugmentationConfig {
        AugmentationConfig {
            jitter_sigma: self.jitter_sigma,
            dropout_frac: self.dropout_frac,
            insert_frac: self.insert_frac,
            crop_frac: self.crop_frac,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeConfig {
    Plane { half_extent: f64 },
    Sphere { radius: f64 },
    Box { half_widths: [f64; 3] },
    Torus { major: f64, minor: f64 },
}

impl ShapeConfig {
    pub fn to_kind(self) -> ShapeKind {
        match self {
            ShapeConfig::Plane { half_extent } => ShapeKind::Plane { half_extent },
            ShapeConfig::Sphere { radius } => ShapeKind::Sphere { radius },
            ShapeConfig::Box { half_widths } => ShapeKind::Box { half_widths: Vec3::from_array(half_widths) },
            ShapeConfig::Torus { major, minor } => ShapeKind::Torus { major, minor },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub gaussian_sigma: f64,
    /// Draw fresh surface samples for every frame.
    pub resample: bool,
    pub occlusion_frac: f64,
}

/// Frame t is rotated by t·`rotation_step` radians about `axis` and then
/// translated by t·`translation_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionSection {
    pub axis: [f64; 3],
    pub rotation_step: f64,
    pub translation_step: [f64; 3],
}

impl Default for MotionSection {
    fn default() -> Self {
        MotionSection { axis: [0.0, 0.0, 1.0], rotation_step: 0.0, translation_step: [0.0; 3] }
    }
}

impl MotionSection {
    pub fn transforms(&self, frames: usize) -> Result<Vec<RigidTransform>> {
        let axis = Vec3::from_array(self.axis)
            .try_normalize(1e-12)
            .ok_or_else(|| CliError::Config("synth.motion.axis must be nonzero".into()))?;
        let step = Vec3::from_array(self.translation_step);
        Ok((0..frames)
            .map(|t| {
                let tf = t as f64;
                RigidTransform::new(Rotation::from_axis_angle(axis, self.rotation_step * tf), step * tf)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub shape: ShapeConfig,
    pub n: usize,
    pub frames: usize,
    pub noise: NoiseSection,
    pub motion: MotionSection,
    pub format: CloudFormat,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            shape: ShapeConfig::Sphere { radius: 1.0 },
            n: 1024,
            frames: 5,
            noise: NoiseSection::default(),
            motion: MotionSection::default(),
            format: CloudFormat::Ply,
        }
    }
}

impl SynthSection {
    /// Shape samples use `seed`; per-frame noise streams use `seed + 1`.
    pub fn to_sequence(&self, seed: u64) -> Result<SequenceSpec> {
        let spec = SequenceSpec {
            shape: ShapeSpec { kind: self.shape.to_kind(), n: self.n, seed },
            motion: self.motion.transforms(self.frames)?,
            noise: NoiseSpec {
                gaussian_sigma: self.noise.gaussian_sigma,
                resample: self.noise.resample,
                occlusion_frac: self.noise.occlusion_frac,
                seed: seed.wrapping_add(1),
            },
            frames: self.frames,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// FPS target size for the consistency benchmark.
    pub fps_points: usize,
    /// Instances for the perturbation benchmark; empty selects the built-in six.
    pub instances: Vec<ShapeConfig>,
    pub instance_points: usize,
    pub augmentations: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { fps_points: 256, instances: Vec::new(), instance_points: 256, augmentations: 6 }
    }
}

impl BenchSection {
    pub fn instance_shapes(&self) -> Vec<ShapeKind> {
        if self.instances.is_empty() {
            default_instances()
        } else {
            self.instances.iter().map(|s| s.to_kind()).collect()
        }
    }
}

/// Six distinct surfaces used when no instances are configured.
pub fn default_instances() -> Vec<ShapeKind> {
    vec![
        ShapeKind::Sphere { radius: 0.5 },
        ShapeKind::Box { half_widths: Vec3::new(0.6, 0.4, 0.25) },
        ShapeKind::Torus { major: 0.5, minor: 0.15 },
        ShapeKind::Plane { half_extent: 0.6 },
        ShapeKind::Box { half_widths: Vec3::new(0.8, 0.15, 0.15) },
        ShapeKind::Torus { major: 0.4, minor: 0.3 },
    ]
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            denoise: DenoiseSection::default(),
            encoder: EncoderSection::default(),
            contrastive: ContrastiveSection::default(),
            augment: AugmentSection::default(),
            synth: SynthSection::default(),
            bench: BenchSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` if given; a `seed` override replaces the file's seed and
    /// is required when there is no file.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fsutil::read_to_string(p).map_err(|e| CliError::Config(e.to_string()))?;
                RunConfig::parse(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })?
            }
            None => RunConfig::with_seed(seed.ok_or_else(|| CliError::Config("a seed is required (--seed or a config file)".into()))?),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: equicanon_core::Error| CliError::Config(e.to_string());
        self.denoise.to_config().validate().map_err(bad)?;
        self.encoder.to_arch().validate().map_err(bad)?;
        self.contrastive.to_config(self.seed).validate().map_err(bad)?;
        self.augment.to_config(self.seed).validate().map_err(bad)?;
        self.synth.to_sequence(self.seed).map_err(|e| match e {
            CliError::Core(c) => bad(c),
            other => other,
        })?;
        if self.bench.augmentations == 0 || self.bench.fps_points == 0 || self.bench.instance_points < 4 {
            return Err(CliError::Config("bench sizes must be positive (instance_points at least 4)".into()));
        }
        for s in self.bench.instance_shapes() {
            s.validate().map_err(bad)?;
        }
        Ok(())
    }
}
