//! Temporal-consistency and perturbation-level benchmarks.

use std::f64::consts::TAU;

use equicanon_core::canonicalize::{canonicalize, normalize_coords};
use equicanon_core::contrastive::{augment, cluster_similarity, cosine_sim, AugmentationConfig};
use equicanon_core::denoise::{progressive_denoise, DenoiseConfig};
use equicanon_core::encoder::{encode, EncoderParams};
use equicanon_core::metrics::{frame_deviation, temporal_consistency, ConsistencyReport, Variant};
use equicanon_core::neighborhood::fps;
use equicanon_core::synth::{frame_rng, sample_surface, ShapeKind, ShapeSpec};
use equicanon_core::{apply_cloud, PointCloud, RigidTransform, Rotation};
use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;

/// Frames of one benchmark variant: raw, FPS-downsampled or denoised.
pub fn variant_frames(frames: &[PointCloud], variant: Variant, denoise: &DenoiseConfig, fps_points: usize, seed: u64) -> Result<Vec<PointCloud>> {
    let out = match variant {
        Variant::Raw => frames.to_vec(),
        Variant::Fps => frames.par_iter().map(|f| fps(f, fps_points, seed)).collect::<Result<_, _>>()?,
        Variant::Denoised => frames.par_iter().map(|f| progressive_denoise(f, denoise)).collect::<Result<_, _>>()?,
    };
    Ok(out)
}

/// Adjacent-frame Chamfer distances for each requested variant.
pub fn consistency(
    frames: &[PointCloud],
    variants: &[Variant],
    denoise: &DenoiseConfig,
    fps_points: usize,
    seed: u64,
) -> Result<Vec<ConsistencyReport>> {
    variants
        .iter()
        .map(|&v| Ok(temporal_consistency(&variant_frames(frames, v, denoise, fps_points, seed)?, v)?))
        .collect()
}

/// One perturbation level: jitter σ and a shared dropout/insertion/crop fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub index: usize,
    pub jitter_sigma: f64,
    pub frac: f64,
}

pub const LEVELS: [Level; 3] = [
    Level { index: 1, jitter_sigma: 0.0, frac: 0.0 },
    Level { index: 2, jitter_sigma: 0.1, frac: 0.1 },
    Level { index: 3, jitter_sigma: 0.2, frac: 0.2 },
];

impl Level {
    pub fn augmentation(&self) -> AugmentationConfig {
        AugmentationConfig::uniform(self.jitter_sigma, self.frac)
    }

    /// Comment line written at the top of the level's CSV files.
    pub fn header(&self) -> String {
        format!("# level={} jitter_sigma={} frac={}", self.index, self.jitter_sigma, self.frac)
    }
}

/// Surface samples for each instance, seeded `seed + i`.
pub fn sample_instances(shapes: &[ShapeKind], n: usize, seed: u64) -> Result<Vec<PointCloud>> {
    shapes
        .iter()
        .enumerate()
        .map(|(i, &kind)| Ok(sample_surface(&ShapeSpec { kind, n, seed: seed.wrapping_add(i as u64) })?))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub instance: usize,
    pub augmentation: usize,
    /// In-plane rotation about z applied to the augmented view.
    pub angle: f64,
    pub rot_dev: f64,
    pub trans_dev: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub level: Level,
    pub views: Vec<ViewRecord>,
    pub embeddings: Vec<Vec<f64>>,
    /// Instance of each embedding row.
    pub groups: Vec<usize>,
    /// Mean cosine similarity within and across instances.
    pub intra: f64,
    pub inter: f64,
}

impl LevelReport {
    pub fn similarity_matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.embeddings
            .iter()
            .map(|a| self.embeddings.iter().map(|b| Ok(cosine_sim(a, b)?)).collect())
            .collect()
    }

    pub fn mean_rot_dev(&self) -> f64 {
        self.views.iter().map(|v| v.rot_dev).sum::<f64>() / self.views.len().max(1) as f64
    }
}

/// Each view is R_z(θ)·augment(X) for a normalized instance X. The frame
/// deviation compares the view's frame with R_z(θ) applied to the frame of X;
/// the embedding is taken on the re-normalized view.
pub fn run_level(params: &EncoderParams, instances: &[PointCloud], level: Level, augmentations: usize, seed: u64) -> Result<LevelReport> {
    let aug = level.augmentation();
    let mut rng = frame_rng(seed, level.index);
    let mut jobs = Vec::with_capacity(instances.len() * augmentations);
    let normalized: Vec<PointCloud> = instances.iter().map(|x| normalize_coords(x).0).collect();
    for (i, x) in normalized.iter().enumerate() {
        for j in 0..augmentations {
            let view = augment(x, &aug, &mut rng)?;
            let angle = rng.random_range(0.0..TAU);
            jobs.push((i, j, angle, view));
        }
    }
    let bases = normalized.par_iter().map(|x| canonicalize(params, x)).collect::<Result<Vec<_>, _>>()?;
    let results = jobs
        .into_par_iter()
        .map(|(i, j, angle, view)| {
            let h = RigidTransform::from_rotation(Rotation::rot_z(angle));
            let moved = apply_cloud(&h, &view);
            let canon = canonicalize(params, &moved)?;
            let (rot_dev, trans_dev) = frame_deviation(&canon.frame, &h.compose(&bases[i].frame));
            let z = encode(params, &normalize_coords(&moved).0)?.z;
            let degenerate = canon.degenerate || bases[i].degenerate;
            Ok((ViewRecord { instance: i, augmentation: j, angle, rot_dev, trans_dev, degenerate }, z))
        })
        .collect::<Result<Vec<_>, equicanon_core::Error>>()?;
    let (views, embeddings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let groups: Vec<usize> = views.iter().map(|v| v.instance).collect();
    let (intra, inter) = cluster_similarity(&embeddings, &groups)?;
    Ok(LevelReport { level, views, embeddings, groups, intra, inter })
}
