//! Progressive geometric denoising.
//!
//! Stage one projects each point along its aggregated local normal onto the
//! plane through its neighborhood mean, removing off-surface deviation. Stage
//! two moves each point toward its neighborhood mean, restricted to the tangent
//! plane, which evens out sampling along the surface. Each stage reads a frozen
//! snapshot and writes a fresh cloud.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vec3};
use crate::neighborhood::{aggregate_normal, all_neighborhoods, mean_of, normal_of, KnnIndex};

pub const DEFAULT_K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Normal,
    Tangent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    pub k: usize,
    pub passes: Vec<Pass>,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        DenoiseConfig {
            k: DEFAULT_K,
            passes: alloc::vec![Pass::Normal, Pass::Tangent],
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 3 {
            return Err(Error::InvalidConfig("denoise.k must be at least 3"));
        }
        if self.passes.is_empty() {
            return Err(Error::InvalidConfig("denoise.passes must not be empty"));
        }
        Ok(())
    }
}

/// Per-point local frame used by one pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEstimate {
    pub mean: Vec3,
    /// `None` when the point's own neighborhood (or the aggregate) is degenerate.
    pub normal: Option<Vec3>,
}

/// Output of a pass together with which points were left untouched as degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutput {
    pub cloud: PointCloud,
    pub estimates: Vec<LocalEstimate>,
    pub degenerate: Vec<bool>,
}

/// x − n nᵀ (x − x̄)
pub fn normal_step(x: Vec3, mean: Vec3, n: Vec3) -> Vec3 {
    x - n * n.dot(x - mean)
}

/// x − (I − n nᵀ)(x − x̄)
pub fn tangent_step(x: Vec3, mean: Vec3, n: Vec3) -> Vec3 {
    let d = x - mean;
    x - (d - n * n.dot(d))
}

/// Local means and aggregated normals over self-inclusive k-NN of `points`.
///
/// One PCA normal is estimated per point from its own neighborhood; the
/// aggregate for a point averages those of its neighbors after aligning their
/// signs with the point's own normal. Degenerate neighbors are left out.
pub fn local_estimates(points: &[Vec3], k: usize) -> Result<Vec<LocalEstimate>> {
    let n = points.len();
    if n < k {
        return Err(Error::TooFewPoints { needed: k, found: n });
    }
    let index = KnnIndex::new(points)?;
    let hoods = all_neighborhoods(&index, k)?;
    let own: Vec<Option<Vec3>> = hoods.iter().map(|nb| normal_of(points, &nb.indices).ok()).collect();
    let mut normals = Vec::with_capacity(k);
    Ok(hoods
        .iter()
        .zip(&own)
        .map(|(nb, own_normal)| {
            let mean = mean_of(points, &nb.indices);
            let normal = own_normal.and_then(|reference| {
                normals.clear();
                normals.extend(nb.indices.iter().filter_map(|&j| own[j]));
                aggregate_normal(&normals, reference).ok()
            });
            LocalEstimate { mean, normal }
        })
        .collect())
}

fn run_pass(x: &PointCloud, k: usize, step: fn(Vec3, Vec3, Vec3) -> Vec3) -> Result<PassOutput> {
    if k < 3 {
        return Err(Error::InvalidConfig("k must be at least 3"));
    }
    let estimates = local_estimates(&x.points, k)?;
    let mut degenerate = Vec::with_capacity(x.len());
    let points = x
        .points
        .iter()
        .zip(&estimates)
        .map(|(&p, est)| match est.normal {
            Some(n) => {
                degenerate.push(false);
                step(p, est.mean, n)
            }
            None => {
                degenerate.push(true);
                p
            }
        })
        .collect();
    Ok(PassOutput {
        cloud: PointCloud {
            points,
            labels: x.labels.clone(),
        },
        estimates,
        degenerate,
    })
}

pub fn normal_correction_detailed(x_delta: &PointCloud, k: usize) -> Result<PassOutput> {
    run_pass(x_delta, k, normal_step)
}

pub fn tangent_correction_detailed(x: &PointCloud, k: usize) -> Result<PassOutput> {
    run_pass(x, k, tangent_step)
}

/// Normal-direction projection of every point toward its local mean plane.
pub fn normal_correction(x_delta: &PointCloud, k: usize) -> Result<PointCloud> {
    Ok(normal_correction_detailed(x_delta, k)?.cloud)
}

/// Tangent-plane smoothing of every point toward its local mean.
pub fn tangent_correction(x: &PointCloud, k: usize) -> Result<PointCloud> {
    Ok(tangent_correction_detailed(x, k)?.cloud)
}

/// Result of the full pipeline with a per-point flag that is set when any
/// pass left the point untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub cloud: PointCloud,
    pub degenerate: Vec<bool>,
}

pub fn progressive_denoise_detailed(x_delta: &PointCloud, cfg: &DenoiseConfig) -> Result<DenoiseOutput> {
    cfg.validate()?;
    let mut cloud = x_delta.clone();
    let mut degenerate = alloc::vec![false; x_delta.len()];
    for pass in &cfg.passes {
        let out = match pass {
            Pass::Normal => normal_correction_detailed(&cloud, cfg.k)?,
            Pass::Tangent => tangent_correction_detailed(&cloud, cfg.k)?,
        };
        for (d, o) in degenerate.iter_mut().zip(&out.degenerate) {
            *d |= *o;
        }
        cloud = out.cloud;
    }
    Ok(DenoiseOutput { cloud, degenerate })
}

pub fn progressive_denoise(x_delta: &PointCloud, cfg: &DenoiseConfig) -> Result<PointCloud> {
    Ok(progressive_denoise_detailed(x_delta, cfg)?.cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_cloud, random_transform};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Seven symmetric pairs plus the origin on z = 0, and a query hovering at height `d`.
    pub(crate) fn hover_example(d: f64) -> PointCloud {
        let mut pts = vec![Vec3::new(0.0, 0.0, d), Vec3::ZERO];
        for (x, y) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0), (2.0, 0.5), (0.5, 2.0), (2.0, -1.5)] {
            pts.push(Vec3::new(x, y, 0.0));
            pts.push(Vec3::new(-x, -y, 0.0));
        }
        PointCloud::new(pts)
    }

    #[test]
    fn hovering_point_keeps_one_kth_of_its_offset() {
        let out = normal_correction(&hover_example(0.16), 16).unwrap();
        assert_eq!(out.points[0].x, 0.0);
        assert_eq!(out.points[0].y, 0.0);
        assert!((out.points[0].z - 0.01).abs() <= 1e-12, "{}", out.points[0].z);
    }

    #[test]
    fn coincident_points_pass_through() {
        let c = PointCloud::new(vec![Vec3::new(0.5, 0.5, 0.5); 20]);
        let out = normal_correction_detailed(&c, 16).unwrap();
        assert_eq!(out.cloud, c);
        assert!(out.degenerate.iter().all(|&d| d));
        assert_eq!(tangent_correction(&c, 16).unwrap(), c);
    }

    #[test]
    fn too_few_points() {
        let c = PointCloud::new(vec![Vec3::X; 5]);
        assert_eq!(normal_correction(&c, 16).unwrap_err(), Error::TooFewPoints { needed: 16, found: 5 });
        assert_eq!(tangent_correction(&c, 16).unwrap_err(), Error::TooFewPoints { needed: 16, found: 5 });
    }

    #[test]
    fn tangent_step_cases() {
        // x equals the mean of its neighborhood: no motion.
        let x = Vec3::new(0.3, 0.0, 0.0);
        let mean = (Vec3::new(0.3, 0.0, 0.0) + Vec3::ZERO + Vec3::new(0.6, 0.0, 0.0)) / 3.0;
        assert!((tangent_step(x, mean, Vec3::Z) - x).max_abs() < 1e-15);
        // Lopsided neighborhood: in-plane shift onto the mean.
        let x = Vec3::X;
        let mean = (Vec3::X + Vec3::ZERO + Vec3::new(0.2, 0.0, 0.0)) / 3.0;
        assert!((mean - Vec3::new(0.4, 0.0, 0.0)).max_abs() < 1e-15);
        let moved = tangent_step(x, mean, Vec3::Z);
        assert!((moved - Vec3::new(0.4, 0.0, 0.0)).max_abs() < 1e-15);
        // Off-plane offsets are left alone.
        let moved = tangent_step(Vec3::new(0.0, 0.0, 0.3), Vec3::ZERO, Vec3::Z);
        assert_eq!(moved, Vec3::new(0.0, 0.0, 0.3));
    }

    fn grid_plane(n: usize, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn clean_plane_is_a_normal_fixed_point() {
        let c = grid_plane(12, 0.1);
        let out = progressive_denoise(&c, &DenoiseConfig::default()).unwrap();
        for p in &out.points {
            assert!(p.z.abs() < 1e-9);
        }
        // Tangent stage keeps the distance to the plane.
        let t = tangent_correction(&c, 16).unwrap();
        let before: f64 = c.points.iter().map(|p| p.z.abs()).sum();
        let after: f64 = t.points.iter().map(|p| p.z.abs()).sum();
        assert!((before - after).abs() / c.len() as f64 <= 1e-9);
    }

    fn jittered(c: &PointCloud, sigma: f64, seed: u64) -> PointCloud {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        c.map_points(|p| p + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng)))
    }

    #[test]
    fn stage_displacements_respect_their_directions() {
        let c = jittered(&grid_plane(16, 0.1), 0.02, 3);
        let normal = normal_correction_detailed(&c, 16).unwrap();
        for ((before, after), est) in c.points.iter().zip(&normal.cloud.points).zip(&normal.estimates) {
            let n = est.normal.unwrap();
            let d = *after - *before;
            assert!(d.cross(n).norm() <= 1e-9 * d.norm().max(1.0));
        }
        let tangent = tangent_correction_detailed(&normal.cloud, 16).unwrap();
        for ((before, after), est) in normal.cloud.points.iter().zip(&tangent.cloud.points).zip(&tangent.estimates) {
            let n = est.normal.unwrap();
            assert!((*after - *before).dot(n).abs() <= 1e-9);
        }
    }

    #[test]
    fn normal_stage_reduces_distance_to_plane() {
        for (seed, sigma) in [(1u64, 0.01), (2, 0.03), (3, 0.05)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = PointCloud::new((0..600).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0)).collect());
            let noisy = jittered(&base, sigma, seed + 10);
            let out = normal_correction(&noisy, 16).unwrap();
            let before: f64 = noisy.points.iter().map(|p| p.z.abs()).sum::<f64>();
            let after: f64 = out.points.iter().map(|p| p.z.abs()).sum::<f64>();
            assert!(after < before, "sigma {sigma}: {after} !< {before}");
        }
    }

    #[test]
    fn permuting_points_permutes_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = PointCloud::new((0..200).map(|_| Vec3::new(rng.random(), rng.random(), 0.1 * rng.random::<f64>())).collect());
        let out = progressive_denoise(&c, &DenoiseConfig::default()).unwrap();
        let perm: Vec<usize> = (0..200).rev().collect();
        let out_p = progressive_denoise(&c.select(&perm), &DenoiseConfig::default()).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert!((out_p.points[i] - out.points[j]).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn denoise_is_rigidly_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = PointCloud::new((0..128).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.2 * rng.random_range(-1.0..1.0))).collect());
        let h = random_transform(5, 1.0);
        let a = normal_correction(&apply_cloud(&h, &c), 16).unwrap();
        let b = apply_cloud(&h, &normal_correction(&c, 16).unwrap());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((*p - *q).max_abs() <= 1e-8);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = DenoiseConfig { k: 2, passes: vec![Pass::Normal] };
        assert!(cfg.validate().is_err());
        let cfg = DenoiseConfig { k: 16, passes: vec![] };
        assert!(cfg.validate().is_err());
        let c = grid_plane(6, 0.1);
        let only_normal = DenoiseConfig { k: 8, passes: vec![Pass::Normal] };
        assert_eq!(progressive_denoise(&c, &only_normal).unwrap(), normal_correction(&c, 8).unwrap());
        let default = progressive_denoise(&c, &DenoiseConfig { k: 8, ..Default::default() }).unwrap();
        assert_eq!(default, tangent_correction(&normal_correction(&c, 8).unwrap(), 8).unwrap());
    }
}
