//! Canonicalization-based policy: π(O) = T·π̂(T⁻¹O).
//!
//! The observation is denoised, a frame T is estimated, the canonical head
//! acts on T⁻¹O and its action is mapped back by T. Any deterministic head
//! makes the whole policy equivariant to rigid motions of the observation.

use crate::canonicalize::canonicalize;
use crate::denoise::{progressive_denoise, DenoiseConfig};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::geometry::{apply_cloud, apply_pose, invert, PointCloud, Pose, RigidTransform, Rotation, Vec3};

/// Label that marks target points for [`ToyHead`].
pub const TARGET_LABEL: i64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub cloud: PointCloud,
    /// End-effector pose.
    pub proprio: Pose,
}

/// Maps a canonical-frame observation to a canonical-frame action.
pub trait CanonicalHead {
    fn predict(&self, o_hat: &Observation) -> Result<Pose>;
}

/// Moves to the centroid of the target points with identity orientation and
/// the current gripper width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyHead {
    pub target_label: i64,
}

impl Default for ToyHead {
    fn default() -> Self {
        ToyHead { target_label: TARGET_LABEL }
    }
}

impl CanonicalHead for ToyHead {
    fn predict(&self, o_hat: &Observation) -> Result<Pose> {
        toy_head_with(o_hat, self.target_label)
    }
}

pub fn toy_head(o_hat: &Observation) -> Result<Pose> {
    toy_head_with(o_hat, TARGET_LABEL)
}

fn toy_head_with(o_hat: &Observation, label: i64) -> Result<Pose> {
    let labels = o_hat.cloud.labels.as_ref().ok_or(Error::NoTarget)?;
    let mut sum = Vec3::ZERO;
    let mut n = 0usize;
    for (p, &l) in o_hat.cloud.points.iter().zip(labels) {
        if l == label {
            sum += *p;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoTarget);
    }
    Ok(Pose::new(sum / n as f64, Rotation::IDENTITY, o_hat.proprio.gripper))
}

/// Applies one rigid transform to both the cloud and the proprioceptive pose.
pub fn transform_observation(t: &RigidTransform, o: &Observation) -> Observation {
    Observation {
        cloud: apply_cloud(t, &o.cloud),
        proprio: apply_pose(t, &o.proprio),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    pub action: Pose,
    /// Estimated frame T.
    pub frame: RigidTransform,
    /// Frame estimation fell back to identity rotation.
    pub degenerate: bool,
}

/// Denoise (unless `denoise` is `None`), canonicalize, run the head, map back.
pub fn act<H: CanonicalHead + ?Sized>(
    params: &EncoderParams,
    head: &H,
    o: &Observation,
    denoise: Option<&DenoiseConfig>,
) -> Result<ActOutput> {
    let cloud = match denoise {
        Some(cfg) => progressive_denoise(&o.cloud, cfg)?,
        None => o.cloud.clone(),
    };
    let canon = canonicalize(params, &cloud)?;
    let o_hat = Observation {
        cloud: canon.canonical_cloud,
        proprio: apply_pose(&invert(&canon.frame), &o.proprio),
    };
    let a_hat = head.predict(&o_hat)?;
    Ok(ActOutput {
        action: apply_pose(&canon.frame, &a_hat),
        frame: canon.frame,
        degenerate: canon.degenerate,
    })
}
