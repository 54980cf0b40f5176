//! Monte Carlo benchmark over a grid of scenarios and methods.
//!
//! Every (cell, replication) pair draws from its own stream derived from the
//! base seed, so records do not depend on scheduling or thread count.

use crate::generate::{simulate, SimulationConfig};
use crate::score::score;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spatiofd::changepoint::{estimate_change_point, q_profile};
use spatiofd::{
    fsda, rng, ChangePointResult, DetectConfig, DetectionContext, Error, RecoveryConfig, RecoveryMethod, Result,
    StatSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Q0Sum,
    Q0Max,
    QhSum,
    QhMax,
    Fsda,
    Fsda0,
    Bh,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 7] = [
        BenchMethod::Q0Sum,
        BenchMethod::Q0Max,
        BenchMethod::QhSum,
        BenchMethod::QhMax,
        BenchMethod::Fsda,
        BenchMethod::Fsda0,
        BenchMethod::Bh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Q0Sum => "q0_sum",
            BenchMethod::Q0Max => "q0_max",
            BenchMethod::QhSum => "qh_sum",
            BenchMethod::QhMax => "qh_max",
            BenchMethod::Fsda => "fsda",
            BenchMethod::Fsda0 => "fsda0",
            BenchMethod::Bh => "bh",
        }
    }

    pub fn is_detection(self) -> bool {
        matches!(
            self,
            BenchMethod::Q0Sum | BenchMethod::Q0Max | BenchMethod::QhSum | BenchMethod::QhMax
        )
    }

    fn recovery(self) -> Option<RecoveryMethod> {
        match self {
            BenchMethod::Fsda => Some(RecoveryMethod::Fsda),
            BenchMethod::Fsda0 => Some(RecoveryMethod::Fsda0),
            BenchMethod::Bh => Some(RecoveryMethod::Bh),
            _ => None,
        }
    }
}

impl std::str::FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        BenchMethod::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Parameter(format!("unknown benchmark method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    /// Scenario cells; their `seed` fields are replaced per replication.
    pub cells: Vec<SimulationConfig>,
    pub methods: Vec<BenchMethod>,
    pub reps: usize,
    pub seed: u64,
    /// Significance level for the detection tests.
    pub level: f64,
    pub detect: DetectConfig,
    pub recovery: RecoveryConfig,
    /// Also run support recovery when `delta = 0`.
    pub recover_under_null: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            cells: vec![SimulationConfig::default()],
            methods: BenchMethod::ALL.to_vec(),
            reps: 100,
            seed: 0,
            level: 0.05,
            detect: DetectConfig::default(),
            recovery: RecoveryConfig::default(),
            recover_under_null: false,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Parameter("reps must be at least 1".into()));
        }
        if self.cells.is_empty() || self.methods.is_empty() {
            return Err(Error::Parameter("need at least one cell and one method".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Parameter(format!("level must lie in (0, 1), got {}", self.level)));
        }
        for c in &self.cells {
            c.validate()?;
        }
        self.detect.validate()?;
        self.recovery.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: usize,
    pub rep: usize,
    pub method: BenchMethod,
    pub seed: u64,
    pub reject: Option<bool>,
    pub p_value: Option<f64>,
    pub tau_hat: Option<usize>,
    pub abs_tau_error: Option<usize>,
    pub fdp: Option<f64>,
    pub tdp: Option<f64>,
    pub selected: Option<usize>,
    pub bandwidth: Option<f64>,
    pub truncation: Option<usize>,
    pub error: Option<String>,
}

impl RunRecord {
    fn empty(cell: usize, rep: usize, method: BenchMethod, seed: u64) -> Self {
        Self {
            cell,
            rep,
            method,
            seed,
            reject: None,
            p_value: None,
            tau_hat: None,
            abs_tau_error: None,
            fdp: None,
            tdp: None,
            selected: None,
            bandwidth: None,
            truncation: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: usize,
    pub method: BenchMethod,
    pub runs: usize,
    pub failures: usize,
    pub rejection_rate: Option<f64>,
    pub mean_abs_tau_error: Option<f64>,
    pub sd_abs_tau_error: Option<f64>,
    pub mean_fdp: Option<f64>,
    pub mean_tdp: Option<f64>,
    pub mean_bandwidth: Option<f64>,
}

/// One row of the long-format table: scenario columns, method, metric, value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub cell: usize,
    pub scheme: String,
    pub n: usize,
    pub p: usize,
    pub delta: f64,
    pub r_s: f64,
    pub method: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl BenchmarkReport {
    pub fn long_rows(&self) -> Vec<LongRow> {
        let mut rows = Vec::new();
        for a in &self.aggregates {
            let cell = &self.config.cells[a.cell];
            let metrics = [
                ("runs", Some(a.runs as f64)),
                ("failures", Some(a.failures as f64)),
                ("rejection_rate", a.rejection_rate),
                ("mean_abs_tau_error", a.mean_abs_tau_error),
                ("sd_abs_tau_error", a.sd_abs_tau_error),
                ("mean_fdp", a.mean_fdp),
                ("mean_tdp", a.mean_tdp),
                ("mean_bandwidth", a.mean_bandwidth),
            ];
            for (metric, value) in metrics {
                if let Some(value) = value {
                    rows.push(LongRow {
                        cell: a.cell,
                        scheme: cell.scheme.name().to_string(),
                        n: cell.n,
                        p: cell.p,
                        delta: cell.delta,
                        r_s: cell.r_s,
                        method: a.method.name().to_string(),
                        metric: metric.to_string(),
                        value,
                    });
                }
            }
        }
        rows
    }

    pub fn aggregate(&self, cell: usize, method: BenchMethod) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.cell == cell && a.method == method)
    }
}

const STREAM_NULL: u64 = 2;

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.cells.len())
        .flat_map(|c| (0..config.reps).map(move |k| (c, k)))
        .collect();
    let records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(c, k)| run_one(config, c, k))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let aggregates = aggregate(config, &records);
    Ok(BenchmarkReport {
        config: config.clone(),
        records,
        aggregates,
    })
}

fn run_one(config: &BenchmarkConfig, cell: usize, rep: usize) -> Vec<RunRecord> {
    let seed = rng::derive_seed(config.seed, &[cell as u64, rep as u64]);
    let mut records: Vec<RunRecord> = config
        .methods
        .iter()
        .map(|&m| RunRecord::empty(cell, rep, m, seed))
        .collect();
    let sim = SimulationConfig {
        seed,
        ..config.cells[cell].clone()
    };
    if let Err(e) = fill_run(config, &sim, &mut records) {
        let msg = e.to_string();
        for r in records.iter_mut().filter(|r| r.error.is_none() && r.reject.is_none() && r.fdp.is_none()) {
            r.error = Some(msg.clone());
        }
    }
    records
}

fn fill_run(config: &BenchmarkConfig, sim: &SimulationConfig, records: &mut [RunRecord]) -> Result<()> {
    let (data, truth) = simulate(sim)?;
    let detect = DetectConfig {
        seed: rng::derive_seed(sim.seed, &[STREAM_NULL]),
        stats: StatSet { max: true, sum: true },
        ..config.detect.clone()
    };
    let ctx = DetectionContext::prepare(&data, &detect)?;
    let wants = |pred: fn(BenchMethod) -> bool| config.methods.iter().any(|&m| pred(m));

    let q0 = if wants(|m| matches!(m, BenchMethod::Q0Sum | BenchMethod::Q0Max)) {
        Some(ctx.evaluate(&data, &detect, false))
    } else {
        None
    };
    let qh = if wants(|m| matches!(m, BenchMethod::QhSum | BenchMethod::QhMax)) {
        Some(ctx.evaluate(&data, &detect, true))
    } else {
        None
    };

    let run_recovery = sim.delta > 0.0 || config.recover_under_null;
    let tau_hat = estimate_change_point(&q_profile(&ctx.eta, ctx.kernel.as_ref())?);
    for rec in records.iter_mut() {
        if rec.method.is_detection() {
            let (res, use_sum) = match rec.method {
                BenchMethod::Q0Sum => (&q0, true),
                BenchMethod::Q0Max => (&q0, false),
                BenchMethod::QhSum => (&qh, true),
                _ => (&qh, false),
            };
            match res.as_ref().expect("evaluated above") {
                Ok(r) => fill_detection(rec, r, use_sum, config.level, truth.tau_star),
                Err(e) => rec.error = Some(e.to_string()),
            }
        } else if run_recovery {
            let method = rec.method.recovery().expect("recovery method");
            let rc = RecoveryConfig {
                method,
                bandwidth: config.recovery.bandwidth.or(Some(ctx.bandwidth)),
                ..config.recovery.clone()
            };
            let scored = fsda(&data, tau_hat, &rc).and_then(|res| {
                let (fdp, tdp) = score(&res.selected, &truth)?;
                Ok((res, fdp, tdp))
            });
            match scored {
                Ok((res, fdp, tdp)) => {
                    rec.fdp = Some(fdp);
                    rec.tdp = Some(tdp);
                    rec.selected = Some(res.selected.len());
                    rec.tau_hat = Some(tau_hat);
                    rec.abs_tau_error = Some(tau_hat.abs_diff(truth.tau_star));
                    rec.bandwidth = Some(res.bandwidth);
                    rec.truncation = Some(res.truncation);
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
        }
    }
    Ok(())
}

fn fill_detection(rec: &mut RunRecord, r: &ChangePointResult, use_sum: bool, level: f64, tau_star: usize) {
    let p = if use_sum { r.p_sum } else { r.p_max };
    rec.p_value = p;
    rec.reject = p.map(|p| p <= level);
    rec.tau_hat = Some(r.tau_hat);
    rec.abs_tau_error = Some(r.tau_hat.abs_diff(tau_star));
    rec.bandwidth = Some(r.h);
    rec.truncation = Some(r.truncation);
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sd(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    if v.len() < 2 {
        return Some(0.0);
    }
    Some((v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn aggregate(config: &BenchmarkConfig, records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for cell in 0..config.cells.len() {
        for &method in &config.methods {
            let rs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.cell == cell && r.method == method)
                .collect();
            let collect = |f: fn(&RunRecord) -> Option<f64>| rs.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let rejects = collect(|r| r.reject.map(|b| if b { 1.0 } else { 0.0 }));
            let tau_err = collect(|r| r.abs_tau_error.map(|e| e as f64));
            rows.push(AggregateRow {
                cell,
                method,
                runs: rs.len(),
                failures: rs.iter().filter(|r| r.error.is_some()).count(),
                rejection_rate: mean(&rejects),
                mean_abs_tau_error: mean(&tau_err),
                sd_abs_tau_error: sd(&tau_err),
                mean_fdp: mean(&collect(|r| r.fdp)),
                mean_tdp: mean(&collect(|r| r.tdp)),
                mean_bandwidth: mean(&collect(|r| r.bandwidth)),
            });
        }
    }
    rows
}
