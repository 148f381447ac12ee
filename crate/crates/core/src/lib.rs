//! Simulation and verification tools for the ℓ^p directed spanning forest on
//! a homogeneous Poisson point process.

pub mod domination;
pub mod exploration;
pub mod forest;
pub mod lpgeom;
pub mod partition;
pub mod ppp;
pub mod stats;
pub mod stream;

pub use lpgeom::{Exponent, NormContext};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("nearest-point search exceeded the expansion cap at radius {0}")]
    ExpansionCap(f64),
    #[error("no point above the query in a finite store")]
    NoPointAbove,
    #[error("rejection sampler exceeded {0} attempts")]
    RejectionCap(u64),
    #[error("region is effectively empty (hit rate {0:e})")]
    EmptyRegion(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("verification failed: {0}")]
    Verification(String),
}
