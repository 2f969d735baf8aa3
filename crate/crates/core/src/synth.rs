//! Synthetic surfaces with known implicit functions, sensor-style noise and
//! observation sequences.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::contrastive::crop_along;
use crate::error::{Error, Result};
use crate::geometry::{apply_cloud, PointCloud, RigidTransform, Vec3};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    /// Square patch of z = 0 with |x|, |y| ≤ half_extent.
    Plane { half_extent: f64 },
    Sphere { radius: f64 },
    /// Surface of an axis-aligned box centered at the origin.
    Box { half_widths: Vec3 },
    /// Ring around the z axis.
    Torus { major: f64, minor: f64 },
}

impl ShapeKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ShapeKind::Plane { half_extent } => half_extent > 0.0,
            ShapeKind::Sphere { radius } => radius > 0.0,
            ShapeKind::Box { half_widths: h } => h.x > 0.0 && h.y > 0.0 && h.z > 0.0,
            ShapeKind::Torus { major, minor } => minor > 0.0 && major > minor,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("shape dimensions must be positive (torus needs major > minor)"))
        }
    }

    /// Signed implicit function; zero on the surface. For the plane and box
    /// this is the exact (unsigned on faces) distance to the surface.
    pub fn implicit(&self, p: Vec3) -> f64 {
        match *self {
            ShapeKind::Plane { .. } => p.z,
            ShapeKind::Sphere { radius } => p.norm() - radius,
            ShapeKind::Box { half_widths: h } => {
                let q = Vec3::new(math::fabs(p.x) - h.x, math::fabs(p.y) - h.y, math::fabs(p.z) - h.z);
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            ShapeKind::Torus { major, minor } => {
                let ring = math::sqrt(p.x * p.x + p.y * p.y) - major;
                math::sqrt(ring * ring + p.z * p.z) - minor
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub n: usize,
    pub seed: u64,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.n < 4 {
            return Err(Error::TooFewPoints { needed: 4, found: self.n });
        }
        Ok(())
    }
}

fn sample_one<R: Rng + ?Sized>(kind: &ShapeKind, rng: &mut R) -> Vec3 {
    match *kind {
        ShapeKind::Plane { half_extent: e } => Vec3::new(rng.random_range(-e..=e), rng.random_range(-e..=e), 0.0),
        ShapeKind::Sphere { radius } => loop {
            let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            if let Some(u) = v.try_normalize(1e-9) {
                break u * radius;
            }
        },
        ShapeKind::Box { half_widths: h } => {
            // Faces normal to x, y, z have areas 4·hy·hz, 4·hx·hz, 4·hx·hy (two each).
            let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
            let total = areas[0] + areas[1] + areas[2];
            let pick = rng.random_range(0.0..total);
            let axis = if pick < areas[0] {
                0
            } else if pick < areas[0] + areas[1] {
                1
            } else {
                2
            };
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mut c = [
                rng.random_range(-h.x..=h.x),
                rng.random_range(-h.y..=h.y),
                rng.random_range(-h.z..=h.z),
            ];
            c[axis] = sign * [h.x, h.y, h.z][axis];
            Vec3::from_array(c)
        }
        ShapeKind::Torus { major, minor } => loop {
            let u = rng.random_range(0.0..2.0 * PI);
            let v = rng.random_range(0.0..2.0 * PI);
            // Area element is proportional to major + minor·cos v.
            let w = (major + minor * math::cos(v)) / (major + minor);
            if rng.random::<f64>() <= w {
                let ring = major + minor * math::cos(v);
                break Vec3::new(ring * math::cos(u), ring * math::sin(u), minor * math::sin(v));
            }
        },
    }
}

fn sample_with<R: Rng + ?Sized>(kind: &ShapeKind, n: usize, rng: &mut R) -> PointCloud {
    PointCloud::new((0..n).map(|_| sample_one(kind, rng)).collect())
}

/// Area-uniform samples of the surface, deterministic per seed.
pub fn sample_surface(spec: &ShapeSpec) -> Result<PointCloud> {
    spec.validate()?;
    Ok(sample_with(&spec.kind, spec.n, &mut ChaCha8Rng::seed_from_u64(spec.seed)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub gaussian_sigma: f64,
    /// Draw a fresh surface sample for every frame.
    pub resample: bool,
    pub occlusion_frac: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            gaussian_sigma: 0.0,
            resample: false,
            occlusion_frac: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        NoiseSpec {
            gaussian_sigma: sigma,
            seed,
            ..NoiseSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise.gaussian_sigma must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.occlusion_frac) {
            return Err(Error::InvalidConfig("noise.occlusion_frac must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Resample (when `surface` is given and `spec.resample` is set), add i.i.d.
/// Gaussian offsets, then occlude the top fraction along a random direction.
pub fn apply_noise<R: Rng + ?Sized>(
    cloud: &PointCloud,
    spec: &NoiseSpec,
    surface: Option<&ShapeSpec>,
    rng: &mut R,
) -> Result<PointCloud> {
    spec.validate()?;
    let mut out = match (spec.resample, surface) {
        (true, Some(shape)) => sample_with(&shape.kind, shape.n, rng),
        _ => cloud.clone(),
    };
    if spec.gaussian_sigma > 0.0 {
        let d = Normal::new(0.0, spec.gaussian_sigma).map_err(|_| Error::InvalidConfig("noise.gaussian_sigma"))?;
        for p in &mut out.points {
            *p += Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng));
        }
    }
    if spec.occlusion_frac > 0.0 {
        let dir = loop {
            let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
            if let Some(u) = v.try_normalize(1e-9) {
                break u;
            }
        };
        out = crop_along(&out, spec.occlusion_frac, dir)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub shape: ShapeSpec,
    pub motion: Vec<RigidTransform>,
    pub noise: NoiseSpec,
    pub frames: usize,
}

impl SequenceSpec {
    /// A static scene observed `frames` times.
    pub fn stationary(shape: ShapeSpec, noise: NoiseSpec, frames: usize) -> Self {
        SequenceSpec {
            shape,
            motion: alloc::vec![RigidTransform::IDENTITY; frames],
            noise,
            frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.noise.validate()?;
        if self.frames == 0 {
            return Err(Error::InvalidConfig("sequence needs at least one frame"));
        }
        if self.motion.len() != self.frames {
            return Err(Error::ShapeMismatch { expected: self.frames, found: self.motion.len() });
        }
        Ok(())
    }
}

/// Independent RNG stream for frame `t` of a sequence seeded with `seed`.
pub fn frame_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

/// Generates one frame; frames are independent of each other.
pub fn make_frame(spec: &SequenceSpec, base: &PointCloud, t: usize) -> Result<PointCloud> {
    let mut rng = frame_rng(spec.noise.seed, t);
    let surface = if spec.noise.resample {
        sample_with(&spec.shape.kind, spec.shape.n, &mut rng)
    } else {
        base.clone()
    };
    let moved = apply_cloud(&spec.motion[t], &surface);
    let noise = NoiseSpec { resample: false, ..spec.noise };
    apply_noise(&moved, &noise, None, &mut rng)
}

/// Frame t = noise(motion[t] · surface sample).
pub fn make_sequence(spec: &SequenceSpec) -> Result<Vec<PointCloud>> {
    spec.validate()?;
    let base = sample_surface(&spec.shape)?;
    (0..spec.frames).map(|t| make_frame(spec, &base, t)).collect()
}

/// Two views of the same points: X with noise, and H·X with independent noise.
pub fn noisy_pair(x: &PointCloud, h: &RigidTransform, sigma: f64, seed: u64) -> Result<(PointCloud, PointCloud)> {
    let spec = NoiseSpec::gaussian(sigma, seed);
    let a = apply_noise(x, &spec, None, &mut frame_rng(seed, 0))?;
    let b = apply_noise(&apply_cloud(h, x), &spec, None, &mut frame_rng(seed, 1))?;
    Ok((a, b))
}
