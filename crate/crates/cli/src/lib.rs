//! Command-line front end: CSV ingestion, detection and recovery drivers,
//! simulation and benchmark runners, and JSON/CSV report emission.
//!
//! Exit codes: 0 on success, 2 for invalid arguments or input, 3 when the
//! data cannot be analysed (zero variance, failed factorization).

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};

/// Size the global thread pool from `SPATIOFD_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SPATIOFD_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::validation("config", format!("SPATIOFD_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::validation("config", e.to_string()))
}
