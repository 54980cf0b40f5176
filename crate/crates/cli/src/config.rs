//! TOML run configuration. Every key is optional; unknown keys are errors.
//!
//! ```toml
//! seed = 7
//! fve_target = 0.9
//! varrho = 0.05
//! mc_reps = 1000
//! alpha = 0.2
//! stats = ["max", "sum"]
//! method = "fsda"
//!
//! [simulation]
//! n = 100
//! p = 100
//! delta = 0.4
//!
//! [benchmark]
//! reps = 50
//! methods = ["qh_sum", "fsda"]
//! ```

use crate::error::{CliError, CliResult, Stage};
use serde::{Deserialize, Serialize};
use spatiofd::{DetectConfig, NullCorrelation, NullMethod, RecoveryConfig, RecoveryMethod, StatSet};
use spatiofd_simgen::{BenchMethod, BenchmarkConfig, SimulationConfig};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    Max,
    Sum,
}

impl std::str::FromStr for StatKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(StatKind::Max),
            "sum" => Ok(StatKind::Sum),
            other => Err(format!("unknown statistic {other:?} (use max, sum)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub reps: usize,
    pub level: f64,
    pub methods: Vec<BenchMethod>,
    pub recover_under_null: bool,
    /// Scenario cells; when empty the `[simulation]` table is the only cell.
    pub cells: Vec<SimulationConfig>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            reps: 100,
            level: 0.05,
            methods: BenchMethod::ALL.to_vec(),
            recover_under_null: false,
            cells: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub fve_target: f64,
    pub varrho: f64,
    pub mc_reps: usize,
    pub alpha: f64,
    pub stats: Vec<StatKind>,
    /// `false` runs the unweighted statistic.
    pub kernel: bool,
    pub method: RecoveryMethod,
    pub interior_knots: usize,
    pub null_correlation: NullCorrelation,
    pub null_method: NullMethod,
    pub bandwidth: Option<f64>,
    pub truncation: Option<usize>,
    pub shared_truncation: bool,
    pub log10: bool,
    pub data: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub simulation: SimulationConfig,
    pub benchmark: BenchmarkSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DetectConfig::default();
        let r = RecoveryConfig::default();
        Self {
            seed: d.seed,
            fve_target: d.fve_target,
            varrho: d.varrho,
            mc_reps: d.mc_reps,
            alpha: r.alpha,
            stats: vec![StatKind::Max, StatKind::Sum],
            kernel: d.kernel,
            method: r.method,
            interior_knots: d.interior_knots,
            null_correlation: d.null_correlation,
            null_method: d.null_method,
            bandwidth: None,
            truncation: None,
            shared_truncation: r.shared_truncation,
            log10: false,
            data: None,
            locations: None,
            out: None,
            simulation: SimulationConfig::default(),
            benchmark: BenchmarkSection::default(),
        }
    }
}

const STAGE: &str = "config";

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(STAGE, path, e))?;
        toml::from_str(&text).map_err(|e| CliError::io(STAGE, path, e))
    }

    pub fn stat_set(&self) -> StatSet {
        StatSet {
            max: self.stats.contains(&StatKind::Max),
            sum: self.stats.contains(&StatKind::Sum),
        }
    }

    pub fn detect_config(&self) -> DetectConfig {
        DetectConfig {
            fve_target: self.fve_target,
            varrho: self.varrho,
            mc_reps: self.mc_reps,
            seed: self.seed,
            stats: self.stat_set(),
            kernel: self.kernel,
            interior_knots: self.interior_knots,
            null_correlation: self.null_correlation,
            null_method: self.null_method,
            bandwidth: self.bandwidth,
            truncation: self.truncation,
        }
    }

    pub fn recovery_config(&self) -> RecoveryConfig {
        RecoveryConfig {
            alpha: self.alpha,
            fve_target: self.fve_target,
            bandwidth: self.bandwidth,
            varrho: self.varrho,
            interior_knots: self.interior_knots,
            method: self.method,
            shared_truncation: self.shared_truncation,
        }
    }

    pub fn simulation_config(&self) -> SimulationConfig {
        SimulationConfig {
            seed: self.seed,
            ..self.simulation.clone()
        }
    }

    pub fn benchmark_config(&self) -> BenchmarkConfig {
        let cells = if self.benchmark.cells.is_empty() {
            vec![self.simulation.clone()]
        } else {
            self.benchmark.cells.clone()
        };
        BenchmarkConfig {
            cells,
            methods: self.benchmark.methods.clone(),
            reps: self.benchmark.reps,
            seed: self.seed,
            level: self.benchmark.level,
            detect: self.detect_config(),
            recovery: self.recovery_config(),
            recover_under_null: self.benchmark.recover_under_null,
        }
    }

    /// Range checks on every tunable.
    pub fn validate(&self) -> CliResult<()> {
        if self.stats.is_empty() {
            return Err(CliError::validation(STAGE, "stats must name at least one of max, sum"));
        }
        if self.interior_knots == 0 {
            return Err(CliError::validation(STAGE, "interior_knots must be at least 1"));
        }
        if self.benchmark.reps == 0 {
            return Err(CliError::validation(STAGE, "benchmark.reps must be at least 1"));
        }
        if self.benchmark.methods.is_empty() {
            return Err(CliError::validation(STAGE, "benchmark.methods is empty"));
        }
        self.detect_config().validate().stage(STAGE)?;
        self.recovery_config().validate().stage(STAGE)?;
        self.simulation.validate().stage(STAGE)?;
        self.benchmark_config().validate().stage(STAGE)
    }

    /// The configuration with input and output paths removed, so that the
    /// hash depends only on settings that influence results.
    pub fn effective(&self) -> Self {
        Self {
            data: None,
            locations: None,
            out: None,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_example() {
        let text = r#"
            seed = 7
            fve_target = 0.85
            stats = ["sum"]
            method = "fsda0"
            null_method = "direct"
            [simulation]
            n = 40
            p = 16
            scheme = "grid2d"
            delta = 0.3
            [benchmark]
            reps = 3
            methods = ["qh_sum", "bh"]
            [[benchmark.cells]]
            n = 20
            p = 9
        "#;
        let c: RunConfig = toml::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.stat_set(), StatSet { max: false, sum: true });
        assert_eq!(c.method, RecoveryMethod::Fsda0);
        assert_eq!(c.null_method, NullMethod::Direct);
        assert_eq!(c.simulation.p, 16);
        let b = c.benchmark_config();
        assert_eq!(b.cells.len(), 1);
        assert_eq!(b.cells[0].n, 20);
        assert_eq!(b.methods, vec![BenchMethod::QhSum, BenchMethod::Bh]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("sead = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[simulation]\nrs = 0.2").is_err());
        assert!(toml::from_str::<RunConfig>("[benchmark]\nrep = 2").is_err());
    }

    #[test]
    fn ranges_checked() {
        let check = |text: &str| toml::from_str::<RunConfig>(text).unwrap().validate().is_err();
        assert!(check("alpha = 0.0"));
        assert!(check("alpha = 1.0"));
        assert!(check("fve_target = 1.5"));
        assert!(check("varrho = 0.0"));
        assert!(check("mc_reps = 10"));
        assert!(check("stats = []"));
        assert!(check("bandwidth = -1.0"));
        assert!(check("[simulation]\nn = 4"));
        assert!(check("[benchmark]\nlevel = 2.0"));
        assert!(!check(""));
    }
}
