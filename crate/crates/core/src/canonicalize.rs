//! Frame estimation and canonicalization.
//!
//! The frame of a cloud is T = {R, b}: b is the centroid and R comes from
//! Gram–Schmidt on the encoder's two equivariant vectors. Mapping the cloud by
//! T⁻¹ gives a canonical cloud that is identical for rigidly related inputs.

use crate::encoder::{encode, EncoderParams};
use crate::error::{Error, Result};
use crate::geometry::{apply_cloud, apply_pose, frame_from_vectors, invert, PointCloud, Pose, RigidTransform, Rotation, Vec3};
use crate::math;

/// Centers at the centroid and divides by the largest point radius, so every
/// coordinate lands in [−1, 1]. Returns `(normalized, scale, center)`; a
/// vanishing radius leaves the scale at 1.
pub fn normalize_coords(cloud: &PointCloud) -> (PointCloud, f64, Vec3) {
    let center = cloud.centroid();
    let radius = cloud
        .points
        .iter()
        .map(|p| (*p - center).norm_squared())
        .fold(0.0, f64::max);
    let radius = math::sqrt(radius);
    let scale = if radius < 1e-12 { 1.0 } else { radius };
    (cloud.map_points(|p| (p - center) / scale), scale, center)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalResult {
    /// T = Ψ(X): canonical → input.
    pub frame: RigidTransform,
    /// T⁻¹·X.
    pub canonical_cloud: PointCloud,
    /// The rotation fell back to identity because the frame vectors were degenerate.
    pub degenerate: bool,
}

/// T = {R, b} with b the centroid and R built from the encoder's frame vectors.
pub fn estimate_frame(params: &EncoderParams, cloud: &PointCloud) -> Result<RigidTransform> {
    if cloud.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, found: cloud.len() });
    }
    let (normalized, _, center) = normalize_coords(cloud);
    let out = encode(params, &normalized)?;
    let rotation = frame_from_vectors(out.u1, out.u2)?;
    Ok(RigidTransform::new(rotation, center))
}

/// X̂ = T⁻¹X. Degenerate frames fall back to the identity rotation about the
/// centroid and are flagged rather than reported as errors.
pub fn canonicalize(params: &EncoderParams, cloud: &PointCloud) -> Result<CanonicalResult> {
    let (frame, degenerate) = match estimate_frame(params, cloud) {
        Ok(t) => (t, false),
        Err(Error::DegenerateFrame) => (RigidTransform::new(Rotation::IDENTITY, cloud.centroid()), true),
        Err(e) => return Err(e),
    };
    Ok(CanonicalResult {
        canonical_cloud: apply_cloud(&invert(&frame), cloud),
        frame,
        degenerate,
    })
}

/// Maps a canonical-frame cloud back to the input frame.
pub fn decanonicalize_cloud(frame: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    apply_cloud(frame, cloud)
}

/// Maps a canonical-frame pose back to the input frame.
pub fn decanonicalize_pose(frame: &RigidTransform, pose: &Pose) -> Pose {
    apply_pose(frame, pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, EncoderArch};
    use crate::geometry::{random_transform, rotation_geodesic};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new((0..n).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.6..0.6), rng.random_range(-0.3..0.3)) + Vec3::new(0.5, 0.2, -1.0)).collect())
    }

    #[test]
    fn normalize_coords_cases() {
        let (n, s, c) = normalize_coords(&PointCloud::new(vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(-2.0, 0.0, 0.0)]));
        assert_eq!(n.points, vec![Vec3::X, -Vec3::X]);
        assert_eq!((s, c), (2.0, Vec3::ZERO));
        let (n, s, _) = normalize_coords(&PointCloud::new(vec![Vec3::new(4.0, 5.0, 6.0)]));
        assert_eq!((n.points[0], s), (Vec3::ZERO, 1.0));
        let x = cloud(1, 30);
        let (n, s, c) = normalize_coords(&x);
        assert!(n.points.iter().all(|p| p.max_abs() <= 1.0));
        for (a, b) in n.points.iter().zip(&x.points) {
            assert!((*a * s + c - *b).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn translation_moves_the_frame_origin() {
        let params = init_params(1, &EncoderArch::default()).unwrap();
        let x = cloud(2, 64);
        let b0 = Vec3::new(0.25, -0.5, 2.0);
        let a = estimate_frame(&params, &x).unwrap();
        let b = estimate_frame(&params, &x.map_points(|p| p + b0)).unwrap();
        assert!((b.translation - (a.translation + b0)).max_abs() < 1e-12);
        assert!(rotation_geodesic(&a.rotation, &b.rotation) < 1e-7);
    }

    #[test]
    fn frame_is_equivariant_and_canonical_cloud_invariant() {
        let params = init_params(2, &EncoderArch::default()).unwrap();
        for s in 0..10 {
            let x = cloud(10 + s, 64);
            let h = random_transform(s, 1.0);
            let hx = apply_cloud(&h, &x);
            let f = estimate_frame(&params, &x).unwrap();
            let g = estimate_frame(&params, &hx).unwrap();
            let expected = h.compose(&f);
            assert!(rotation_geodesic(&g.rotation, &expected.rotation) < 1e-6);
            assert!((g.translation - expected.translation).norm() < 1e-6);
            let a = canonicalize(&params, &x).unwrap();
            let b = canonicalize(&params, &hx).unwrap();
            for (p, q) in a.canonical_cloud.points.iter().zip(&b.canonical_cloud.points) {
                assert!((*p - *q).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn canonical_output_is_a_fixed_point() {
        let params = init_params(3, &EncoderArch::default()).unwrap();
        let first = canonicalize(&params, &cloud(5, 50)).unwrap();
        let again = canonicalize(&params, &first.canonical_cloud).unwrap();
        assert!(rotation_geodesic(&again.frame.rotation, &Rotation::IDENTITY) < 1e-6);
        assert!(again.frame.translation.norm() < 1e-8);
        assert!(first.canonical_cloud.centroid().norm() < 1e-8);
    }

    #[test]
    fn antipodal_pair_is_degenerate() {
        let params = init_params(4, &EncoderArch::default()).unwrap();
        let pair = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.0, 1.0)]);
        assert_eq!(estimate_frame(&params, &pair), Err(Error::DegenerateFrame));
        let res = canonicalize(&params, &pair).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.frame.rotation, Rotation::IDENTITY);
        assert_eq!(res.frame.translation, Vec3::new(0.0, 1.0, 2.0));
        let back = decanonicalize_cloud(&res.frame, &res.canonical_cloud);
        for (p, q) in back.points.iter().zip(&pair.points) {
            assert!((*p - *q).max_abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrips() {
        let params = init_params(5, &EncoderArch::default()).unwrap();
        let x = cloud(6, 40);
        let res = canonicalize(&params, &x).unwrap();
        let back = decanonicalize_cloud(&res.frame, &res.canonical_cloud);
        for (p, q) in back.points.iter().zip(&x.points) {
            assert!((*p - *q).max_abs() < 1e-9);
        }
        assert_eq!(decanonicalize_cloud(&RigidTransform::IDENTITY, &x), x);
        let pose = Pose::new(Vec3::new(0.1, 0.2, 0.3), Rotation::IDENTITY, 0.07);
        let canon = apply_pose(&invert(&res.frame), &pose);
        let restored = decanonicalize_pose(&res.frame, &canon);
        assert_eq!(restored.gripper, 0.07);
        assert!((restored.position - pose.position).max_abs() < 1e-12);
    }
}
