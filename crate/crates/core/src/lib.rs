//! Noise-robust SE(3) canonicalization of 3D point clouds.
//!
//! The pipeline is: [`denoise`] the observation with a two-stage local
//! projection, encode it with the rotation-equivariant vector-feature
//! network in [`encoder`], estimate a rigid frame and [`canonicalize`], run a canonical
//! action head and map the result back ([`policy`]). The encoder's invariant
//! embedding can be trained with a contrastive objective ([`contrastive`]).
//!
//! The crate is `no_std` with `alloc`; file formats and the command-line
//! tool live in the companion `equicanon` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
#[macro_use]
extern crate std;

pub mod canonicalize;
pub mod contrastive;
pub mod denoise;
pub mod encoder;
mod error;
pub mod geometry;
pub mod math;
pub mod metrics;
pub mod neighborhood;
pub mod policy;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    apply_cloud, apply_pose, compose, frame_from_vectors, invert, random_rotation, random_transform,
    rotation_geodesic, PointCloud, Pose, RigidTransform, Rotation, Vec3,
};
