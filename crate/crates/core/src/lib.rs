//! Change-point detection and spatial support recovery for spatially indexed
//! functional data.
//!
//! Curves `X_i(s_j, t)` observed on `n` replicates at `p` locations are
//! projected onto weakly separable principal components. Kernel-weighted
//! CUSUM statistics test for a single change in mean, with a Monte Carlo
//! Brownian-bridge null; split-sample ranking statistics then select the
//! locations that changed while controlling the false discovery rate.

pub mod bspline;
pub mod changepoint;
pub mod data;
pub mod error;
pub mod fpca;
pub mod kernel;
pub mod linalg;
pub mod recovery;
pub mod rng;

pub use changepoint::{
    detect, ChangePointResult, DetectConfig, DetectionContext, NullCorrelation, NullMethod, QProfile, StatSet,
};
pub use data::{SpatialDomain, SpatialFunctionalDataset, TimeGrid};
pub use error::{Error, Result};
pub use fpca::{CorrelationCurve, FpcaModel};
pub use kernel::KernelMatrix;
pub use recovery::{bh_baseline, fsda, RecoveryConfig, RecoveryMethod, RecoveryResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
