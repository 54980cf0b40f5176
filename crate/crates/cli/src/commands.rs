use crate::config::{RunConfig, StatKind};
use crate::error::{CliError, CliResult, Stage};
use crate::io::{self, IngestOptions};
use crate::report::{dataset_hash, DetectionBlock, Provenance, RecoveryBlock, Report};
use clap::{Args, Parser, Subcommand};
use spatiofd::{detect, fsda, RecoveryMethod, SpatialFunctionalDataset};
use spatiofd_simgen::{run_benchmark, simulate, BenchMethod, Scheme};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "spatiofd", version, about = "Change-point detection and support recovery for spatial functional data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and write it back in normalized form.
    Ingest(IngestArgs),
    /// Test for a global change point and estimate its location.
    Detect(DetectArgs),
    /// Select the locations whose mean changed.
    Recover(RecoverArgs),
    /// Draw a synthetic dataset with known support.
    Simulate(SimulateArgs),
    /// Run the simulation benchmark.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Long-format observations: replicate,location_id,time_index,value.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Coordinates: location_id,x[,y].
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Map every value v to log10(v + 1).
    #[arg(long)]
    pub log10: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub fve: Option<f64>,
    #[arg(long)]
    pub varrho: Option<f64>,
    #[arg(long = "mc-reps")]
    pub mc_reps: Option<usize>,
    /// Functionals to test, e.g. `max,sum`.
    #[arg(long, value_delimiter = ',')]
    pub stat: Option<Vec<StatKind>>,
    /// Use the unweighted statistic instead of the kernel one.
    #[arg(long)]
    pub no_kernel: bool,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub fve: Option<f64>,
    #[arg(long)]
    pub varrho: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// fsda, fsda0 or bh.
    #[arg(long)]
    pub method: Option<String>,
    /// Last pre-change replicate position (1-based).
    #[arg(long)]
    pub tau: Option<usize>,
    /// Detection report supplying the change point.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// grid1d, grid2d or poisson.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "r-s")]
    pub r_s: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "mc-reps")]
    pub mc_reps: Option<usize>,
    /// Comma-separated subset of q0_sum,q0_max,qh_sum,qh_max,fsda,fsda0,bh.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<String>>,
}

fn base_config(common: &CommonArgs) -> CliResult<RunConfig> {
    let mut c = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(o) = &common.out {
        c.out = Some(o.clone());
    }
    Ok(c)
}

fn apply_data(c: &mut RunConfig, d: &DataArgs) {
    if let Some(p) = &d.data {
        c.data = Some(p.clone());
    }
    if let Some(p) = &d.locations {
        c.locations = Some(p.clone());
    }
    if d.log10 {
        c.log10 = true;
    }
}

fn out_dir(c: &RunConfig) -> CliResult<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io("output", &dir, e))?;
    Ok(dir)
}

fn load_data(c: &RunConfig) -> CliResult<SpatialFunctionalDataset> {
    let data = c
        .data
        .as_deref()
        .ok_or_else(|| CliError::validation("ingest", "no observations file (--data)"))?;
    let locations = c
        .locations
        .as_deref()
        .ok_or_else(|| CliError::validation("ingest", "no locations file (--locations)"))?;
    io::read_dataset(data, locations, IngestOptions { log10: c.log10 })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io("output", path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io("output", path, e))
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
    }
}

fn ingest(a: IngestArgs) -> CliResult<()> {
    let mut c = base_config(&a.common)?;
    apply_data(&mut c, &a.data);
    c.validate()?;
    let data = load_data(&c)?;
    println!(
        "n={} p={} T={} dim={} hash={}",
        data.n(),
        data.p(),
        data.t(),
        data.domain().dim(),
        dataset_hash(&data)
    );
    if c.out.is_some() {
        let dir = out_dir(&c)?;
        io::write_dataset(&data, &dir.join("data.csv"), &dir.join("locations.csv"))?;
    }
    Ok(())
}

fn detect_cmd(a: DetectArgs) -> CliResult<()> {
    let mut c = base_config(&a.common)?;
    apply_data(&mut c, &a.data);
    if let Some(v) = a.fve {
        c.fve_target = v;
    }
    if let Some(v) = a.varrho {
        c.varrho = v;
    }
    if let Some(v) = a.mc_reps {
        c.mc_reps = v;
    }
    if let Some(s) = a.stat {
        c.stats = s;
    }
    if a.no_kernel {
        c.kernel = false;
    }
    c.validate()?;
    let data = load_data(&c)?;
    let res = detect(&data, &c.detect_config()).stage("detect")?;
    let block = DetectionBlock::new(&res, &data);
    let dir = out_dir(&c)?;
    io::write_q_profile(&block.profile, &dir.join("q_profile.csv"))?;
    let report = Report {
        detection: Some(block),
        recovery: None,
        provenance: Provenance::new("detect", &c, Some(&data)),
    };
    write_json(&report, &dir.join("report.json"))?;
    let fmt = |p: Option<f64>| p.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} max={:.4} (p={}) sum={:.4} (p={}) tau_hat={} h={:.4} R={}",
        if res.kernel { "Q_h" } else { "Q_0" },
        res.q_max,
        fmt(res.p_max),
        res.q_sum,
        fmt(res.p_sum),
        res.tau_hat,
        res.h,
        res.truncation
    );
    Ok(())
}

fn recover_cmd(a: RecoverArgs) -> CliResult<()> {
    let mut c = base_config(&a.common)?;
    apply_data(&mut c, &a.data);
    if let Some(v) = a.fve {
        c.fve_target = v;
    }
    if let Some(v) = a.varrho {
        c.varrho = v;
    }
    if let Some(v) = a.alpha {
        c.alpha = v;
    }
    if let Some(m) = &a.method {
        c.method = m.parse::<RecoveryMethod>().stage("config")?;
    }
    c.validate()?;

    let prior: Option<Report> = match &a.report {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io("recover", path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::io("recover", path, e))?)
        }
        None => None,
    };
    let tau_hat = a
        .tau
        .or_else(|| prior.as_ref().and_then(|r| r.detection.as_ref()).map(|d| d.tau_hat))
        .ok_or_else(|| {
            CliError::validation("recover", "no change point: pass --tau or a detection --report")
        })?;

    let data = load_data(&c)?;
    let mut rc = c.recovery_config();
    if rc.bandwidth.is_none() && rc.method == RecoveryMethod::Fsda {
        rc.bandwidth = prior.as_ref().and_then(|r| r.detection.as_ref()).map(|d| d.bandwidth);
    }
    let res = fsda(&data, tau_hat, &rc).stage("recover")?;
    let block = RecoveryBlock::new(&res, tau_hat, &data);
    let dir = out_dir(&c)?;
    io::write_recovery(data.domain().ids(), &res.w, &res.selected, &dir.join("recovery.csv"))?;
    let report = Report {
        detection: prior.and_then(|r| r.detection),
        recovery: Some(block),
        provenance: Provenance::new("recover", &c, Some(&data)),
    };
    write_json(&report, &dir.join("report.json"))?;
    println!(
        "{} selected {} of {} locations (L={}, alpha={})",
        res.method.name(),
        res.selected.len(),
        data.p(),
        if res.threshold.is_finite() { format!("{:.4}", res.threshold) } else { "inf".into() },
        res.alpha
    );
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> CliResult<()> {
    let mut c = base_config(&a.common)?;
    let s = &mut c.simulation;
    if let Some(v) = a.n {
        s.n = v;
    }
    if let Some(v) = a.p {
        s.p = v;
    }
    if let Some(v) = &a.scheme {
        s.scheme = v.parse::<Scheme>().stage("config")?;
    }
    if let Some(v) = a.delta {
        s.delta = v;
    }
    if let Some(v) = a.r_s {
        s.r_s = v;
    }
    c.validate()?;
    let sim = c.simulation_config();
    let (data, truth) = simulate(&sim).stage("simulate")?;
    let dir = out_dir(&c)?;
    io::write_dataset(&data, &dir.join("data.csv"), &dir.join("locations.csv"))?;
    io::write_truth(data.domain(), &truth, &dir.join("truth.csv"))?;
    write_json(
        &serde_json::json!({
            "simulation": sim,
            "tau_star": truth.tau_star,
            "support_size": truth.support_indices().len(),
            "provenance": Provenance::new("simulate", &c, Some(&data)),
        }),
        &dir.join("simulation.json"),
    )?;
    println!(
        "simulated n={} p={} T={} tau*={} |support|={}",
        data.n(),
        data.p(),
        data.t(),
        truth.tau_star,
        truth.support_indices().len()
    );
    Ok(())
}

fn benchmark_cmd(a: BenchmarkArgs) -> CliResult<()> {
    let mut c = base_config(&a.common)?;
    if let Some(v) = a.reps {
        c.benchmark.reps = v;
    }
    if let Some(v) = a.mc_reps {
        c.mc_reps = v;
    }
    if let Some(ms) = &a.method {
        c.benchmark.methods = ms
            .iter()
            .map(|m| m.parse::<BenchMethod>())
            .collect::<spatiofd::Result<_>>()
            .stage("config")?;
    }
    c.validate()?;
    let report = run_benchmark(&c.benchmark_config()).stage("benchmark")?;
    let dir = out_dir(&c)?;
    let rows = report.long_rows();
    io::write_rows(&rows, &dir.join("benchmark.csv"))?;
    io::write_rows(&report.records, &dir.join("runs.csv"))?;
    write_json(
        &serde_json::json!({
            "benchmark": report,
            "provenance": Provenance::new("benchmark", &c, None),
        }),
        &dir.join("benchmark.json"),
    )?;
    for agg in &report.aggregates {
        let cell = &report.config.cells[agg.cell];
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "cell {} (n={} p={} delta={} r_s={}) {:7} reject={} |tau err|={} fdp={} tdp={} failures={}",
            agg.cell,
            cell.n,
            cell.p,
            cell.delta,
            cell.r_s,
            agg.method.name(),
            show(agg.rejection_rate),
            show(agg.mean_abs_tau_error),
            show(agg.mean_fdp),
            show(agg.mean_tdp),
            agg.failures
        );
    }
    Ok(())
}
