//! Chamfer distance, temporal consistency and equivariance deviation.

use alloc::vec::Vec;

use crate::canonicalize::estimate_frame;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::geometry::{apply_cloud, rotation_geodesic, PointCloud, RigidTransform};
use crate::neighborhood::KnnIndex;

fn one_sided(from: &PointCloud, to: &KnnIndex) -> f64 {
    from.points.iter().map(|&p| to.nearest_distance_squared(p)).sum::<f64>() / from.len() as f64
}

/// Mean squared nearest-neighbor distance, summed over both directions.
pub fn chamfer(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ix = KnnIndex::new(&x.points)?;
    let iy = KnnIndex::new(&y.points)?;
    Ok(one_sided(x, &iy) + one_sided(y, &ix))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Raw,
    Fps,
    Denoised,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Raw, Variant::Fps, Variant::Denoised];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Raw => "raw",
            Variant::Fps => "fps",
            Variant::Denoised => "denoised",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub variant: Variant,
    /// Chamfer distance between frame t and t+1.
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Chamfer distance between each pair of adjacent frames.
pub fn temporal_consistency(seq: &[PointCloud], variant: Variant) -> Result<ConsistencyReport> {
    if seq.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: seq.len() });
    }
    let values = seq
        .windows(2)
        .map(|w| chamfer(&w[0], &w[1]))
        .collect::<Result<Vec<_>>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(ConsistencyReport { variant, values, mean })
}

/// Gap between Ψ(H·X) and H∘Ψ(X): (rotation geodesic in radians, translation distance).
pub fn equivariance_deviation(params: &EncoderParams, x: &PointCloud, h: &RigidTransform) -> Result<(f64, f64)> {
    let direct = estimate_frame(params, x)?;
    let moved = estimate_frame(params, &apply_cloud(h, x))?;
    Ok(frame_deviation(&moved, &h.compose(&direct)))
}

/// Deviation between an estimated frame and an expected one.
pub fn frame_deviation(got: &RigidTransform, expected: &RigidTransform) -> (f64, f64) {
    (
        rotation_geodesic(&got.rotation, &expected.rotation),
        (got.translation - expected.translation).norm(),
    )
}
