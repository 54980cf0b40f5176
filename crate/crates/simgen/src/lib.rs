//! Synthetic spatial functional data with a single mean change, and a
//! benchmark harness for the detection and recovery procedures.
//!
//! Scores follow independent Gaussian random fields with Matérn covariance
//! per component; the post-change mean is a truncated Gaussian bump around
//! the domain centre.

pub mod benchmark;
pub mod domain;
pub mod generate;
pub mod matern;
pub mod score;

pub use benchmark::{run_benchmark, AggregateRow, BenchMethod, BenchmarkConfig, BenchmarkReport, LongRow, RunRecord};
pub use domain::{sample_domain, Scheme};
pub use generate::{eigenfunction, simulate, simulate_on, GroundTruth, SimulationConfig};
pub use matern::{bessel_k1, matern};
pub use score::score;
