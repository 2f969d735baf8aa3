use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("matrix is not a proper rotation")]
    NotARotation,
    #[error("frame vectors are zero or parallel")]
    DegenerateFrame,
    #[error("neighborhood covariance has rank < 2")]
    DegenerateNeighborhood,
    #[error("aggregated normal vanished")]
    ZeroAggregate,
    #[error("k = {k} is outside 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("m = {m} is outside 1..={n}")]
    BadM { m: usize, n: usize },
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("cloud is not centered (centroid norm {0:e})")]
    NotCentered(f64),
    #[error("vector norm is zero")]
    ZeroVector,
    #[error("no point carries the target label")]
    NoTarget,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}
