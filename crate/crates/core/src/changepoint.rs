//! Global change-point test and location estimate.
//!
//! CUSUM contrasts of the replicate curves are projected onto the leading
//! eigenfunctions and standardized per location. The resulting `eta` values
//! are combined either by a plain sum of squares (`Q_0`) or by a quadratic
//! form in a spatial kernel matrix (`Q_h`). The null law of the max/sum
//! functionals is approximated by Monte Carlo over correlated Brownian
//! bridges.

use crate::data::SpatialFunctionalDataset;
use crate::error::{Error, Result};
use crate::fpca::{fit_correlation_curve, select_bandwidth, CorrelationCurve, FpcaModel, DEFAULT_INTERIOR_KNOTS};
use crate::kernel::KernelMatrix;
use crate::linalg::{psd_project, psd_sqrt, sym_eigen};
use crate::rng::stream;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Standardized projected CUSUM values, indexed by `(tau, r, j)` with
/// `tau` in `1..n`.
#[derive(Debug, Clone)]
pub struct CusumTensor {
    eta: Vec<f64>,
    n: usize,
    r: usize,
    p: usize,
}

impl CusumTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.r
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// The `p` values at change index `tau` (1-based) and component `r`
    /// (0-based).
    pub fn at(&self, tau: usize, r: usize) -> &[f64] {
        assert!((1..self.n).contains(&tau) && r < self.r, "index out of range");
        let start = ((tau - 1) * self.r + r) * self.p;
        &self.eta[start..start + self.p]
    }

    /// `R x p` slice at a fixed `tau`, row per component.
    pub fn matrix_at(&self, tau: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.r, self.p, |r, j| self.at(tau, r)[j])
    }

    /// Truncate to the leading `r` components.
    pub fn leading(&self, r: usize) -> Self {
        let r = r.min(self.r);
        let mut eta = Vec::with_capacity((self.n - 1) * r * self.p);
        for tau in 1..self.n {
            for c in 0..r {
                eta.extend_from_slice(self.at(tau, c));
            }
        }
        Self {
            eta,
            n: self.n,
            r,
            p: self.p,
        }
    }
}

pub fn cusum_projections(data: &SpatialFunctionalDataset, model: &FpcaModel) -> Result<CusumTensor> {
    let (n, p, t) = (data.n(), data.p(), data.t());
    let r = model.truncation;
    if model.eigenfunctions.nrows() != t || model.eigenfunctions.ncols() < r {
        return Err(Error::Dimension("eigenfunctions do not match the time grid".into()));
    }
    if model.p() != p {
        return Err(Error::Dimension(format!(
            "model has {} locations, data has {p}",
            model.p()
        )));
    }
    for c in 0..r {
        for j in 0..p {
            if !(model.per_location_var[(c, j)] > crate::fpca::MIN_LOCATION_VARIANCE) {
                return Err(Error::ZeroVariance {
                    component: c + 1,
                    location: j + 1,
                });
            }
        }
    }
    let w = data.grid().weights();
    let wpsi: Vec<Vec<f64>> = (0..r)
        .map(|c| (0..t).map(|m| w[m] * model.eigenfunctions[(m, c)]).collect())
        .collect();

    // scores[(i, c, j)] = <X_i(s_j), psi_c>
    let mut scores = vec![0.0; n * r * p];
    for i in 0..n {
        for j in 0..p {
            let x = data.curve(i, j);
            for c in 0..r {
                scores[(i * r + c) * p + j] = x.iter().zip(&wpsi[c]).map(|(a, b)| a * b).sum();
            }
        }
    }
    let mut totals = vec![0.0; r * p];
    for i in 0..n {
        for k in 0..r * p {
            totals[k] += scores[i * r * p + k];
        }
    }
    let inv_sd: Vec<f64> = (0..r * p)
        .map(|k| model.per_location_var[(k / p, k % p)].sqrt().recip())
        .collect();
    let root_n = (n as f64).sqrt();
    let mut eta = vec![0.0; (n - 1) * r * p];
    let mut partial = vec![0.0; r * p];
    for tau in 1..n {
        let frac = tau as f64 / n as f64;
        for k in 0..r * p {
            partial[k] += scores[(tau - 1) * r * p + k];
            eta[(tau - 1) * r * p + k] = (partial[k] - frac * totals[k]) / root_n * inv_sd[k];
        }
    }
    Ok(CusumTensor { eta, n, r, p })
}

/// `Q(tau)` for `tau = 1..n-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QProfile {
    pub values: Vec<f64>,
    /// Kernel bandwidth; `0` for the non-kernel statistic.
    pub bandwidth: f64,
    pub components: usize,
    pub n: usize,
}

/// Kernel quadratic form summed over components; `None` gives the plain sum
/// of squares.
pub fn q_profile(eta: &CusumTensor, kernel: Option<&KernelMatrix>) -> Result<QProfile> {
    let (n, r, p) = (eta.n, eta.r, eta.p);
    let identity;
    let kernel = match kernel {
        Some(k) => k,
        None => {
            identity = KernelMatrix::identity(p);
            &identity
        }
    };
    if kernel.size() != p {
        return Err(Error::Dimension(format!(
            "kernel is {0}x{0} for {p} locations",
            kernel.size()
        )));
    }
    let values = if kernel.bandwidth() == 0.0 {
        (1..n)
            .map(|tau| (0..r).map(|c| eta.at(tau, c).iter().map(|v| v * v).sum::<f64>()).sum())
            .collect()
    } else {
        // rows (tau, c) of eta times K, dotted back with eta
        let rows = (n - 1) * r;
        let e = DMatrix::from_row_slice(rows, p, &eta.eta);
        let ek = &e * kernel.entries();
        (0..n - 1)
            .map(|k| {
                (0..r)
                    .map(|c| {
                        let row = k * r + c;
                        e.row(row).dot(&ek.row(row))
                    })
                    .sum()
            })
            .collect()
    };
    Ok(QProfile {
        values,
        bandwidth: kernel.bandwidth(),
        components: r,
        n,
    })
}

/// `(max_tau Q(tau), n^{-1} sum_tau Q(tau))`.
pub fn q_statistics(profile: &QProfile) -> (f64, f64) {
    let max = profile.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum = profile.values.iter().sum::<f64>() / profile.n as f64;
    (max, sum)
}

/// Argmax of the profile (1-based), smallest index on ties.
pub fn estimate_change_point(profile: &QProfile) -> usize {
    let mut best = 0;
    for (k, &v) in profile.values.iter().enumerate() {
        if v > profile.values[best] {
            best = k;
        }
    }
    best + 1
}

/// Monte Carlo draws of the max and sum functionals under the null.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSamples {
    pub max: Vec<f64>,
    pub sum: Vec<f64>,
}

/// How correlated bridges are drawn for the null law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NullMethod {
    /// Rotate each component's quadratic form to its eigenbasis, so that the
    /// functional is a weighted sum of squared independent standard bridges.
    /// Same law as `Direct`, at `O(Rp)` rather than `O(Rp^2)` per grid point.
    #[default]
    Spectral,
    /// Multiply standard bridges by `P^{1/2}` and evaluate `B^T K B`.
    Direct,
}

pub const MIN_NULL_REPS: usize = 100;

fn check_null_inputs(corr: &[DMatrix<f64>], kernel: Option<&KernelMatrix>, n: usize, reps: usize) -> Result<usize> {
    if reps < MIN_NULL_REPS {
        return Err(Error::Parameter(format!(
            "need at least {MIN_NULL_REPS} Monte Carlo replicates, got {reps}"
        )));
    }
    if n < 2 {
        return Err(Error::Parameter(format!("bridge grid needs n >= 2, got {n}")));
    }
    let first = corr
        .first()
        .ok_or_else(|| Error::Parameter("no correlation matrices supplied".into()))?;
    let p = first.nrows();
    for c in corr {
        if c.nrows() != p || c.ncols() != p {
            return Err(Error::Dimension("correlation matrices differ in size".into()));
        }
        if (0..p).any(|j| (c[(j, j)] - 1.0).abs() > 1e-8) {
            return Err(Error::Validation("correlation matrix diagonal is not unit".into()));
        }
    }
    if let Some(k) = kernel {
        if k.size() != p {
            return Err(Error::Dimension(format!(
                "kernel is {0}x{0} for {p} locations",
                k.size()
            )));
        }
    }
    Ok(p)
}

/// Standard Brownian bridge on `x_k = k/n`, `k = 1..n-1`, written into `out`.
fn standard_bridge<R: Rng>(rng: &mut R, n: usize, out: &mut [f64]) {
    let step = (1.0 / n as f64).sqrt();
    let mut w = 0.0;
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        w += step * z;
        *v = w;
    }
    let z: f64 = rng.sample(StandardNormal);
    let w1 = w + step * z;
    for (k, v) in out.iter_mut().enumerate() {
        *v -= (k + 1) as f64 / n as f64 * w1;
    }
}

/// One path of `P^{1/2} B*(x_k)`: a `(n-1) x p` matrix, row per grid point.
pub fn correlated_bridge<R: Rng>(rng: &mut R, sqrt_corr: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let p = sqrt_corr.nrows();
    let mut raw = DMatrix::zeros(n - 1, p);
    let mut buf = vec![0.0; n - 1];
    for j in 0..p {
        standard_bridge(rng, n, &mut buf);
        raw.column_mut(j).copy_from_slice(&buf);
    }
    raw * sqrt_corr
}

pub fn simulate_null(
    corr: &[DMatrix<f64>],
    kernel: Option<&KernelMatrix>,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<NullSamples> {
    simulate_null_with(corr, kernel, n, reps, seed, NullMethod::Spectral)
}

pub fn simulate_null_with(
    corr: &[DMatrix<f64>],
    kernel: Option<&KernelMatrix>,
    n: usize,
    reps: usize,
    seed: u64,
    method: NullMethod,
) -> Result<NullSamples> {
    let p = check_null_inputs(corr, kernel, n, reps)?;
    let roots: Vec<DMatrix<f64>> = corr.iter().map(psd_sqrt).collect::<Result<_>>()?;
    let draws: Vec<(f64, f64)> = match method {
        NullMethod::Spectral => {
            let mut weights = Vec::with_capacity(corr.len() * p);
            for s in &roots {
                let m = match kernel {
                    Some(k) => s * k.entries() * s,
                    None => s * s,
                };
                let m = (&m + m.transpose()) * 0.5;
                weights.extend(sym_eigen(&m)?.values.iter().map(|&v| v.max(0.0)));
            }
            let top = weights.iter().copied().fold(0.0, f64::max);
            weights.retain(|&v| v > 1e-12 * top);
            (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = stream(seed, &[rep as u64]);
                    let mut f = vec![0.0; n - 1];
                    let mut buf = vec![0.0; n - 1];
                    for &wt in &weights {
                        standard_bridge(&mut rng, n, &mut buf);
                        for (acc, b) in f.iter_mut().zip(&buf) {
                            *acc += wt * b * b;
                        }
                    }
                    functionals(&f, n)
                })
                .collect()
        }
        NullMethod::Direct => (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = stream(seed, &[rep as u64]);
                let mut f = vec![0.0; n - 1];
                for s in &roots {
                    let b = correlated_bridge(&mut rng, s, n);
                    let bk = match kernel {
                        Some(k) => &b * k.entries(),
                        None => b.clone(),
                    };
                    for (k, acc) in f.iter_mut().enumerate() {
                        *acc += b.row(k).dot(&bk.row(k));
                    }
                }
                functionals(&f, n)
            })
            .collect(),
    };
    let (max, sum) = draws.into_iter().unzip();
    Ok(NullSamples { max, sum })
}

fn functionals(f: &[f64], n: usize) -> (f64, f64) {
    let max = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum = f.iter().sum::<f64>() / n as f64;
    (max, sum)
}

/// Add-one Monte Carlo p-value.
pub fn monte_carlo_p_value(observed: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    (1 + exceed) as f64 / (null.len() + 1) as f64
}

/// Which functionals of the profile to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatSet {
    pub max: bool,
    pub sum: bool,
}

impl Default for StatSet {
    fn default() -> Self {
        Self { max: true, sum: true }
    }
}

/// Source of the correlation matrices fed to the null simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NullCorrelation {
    /// Per-component estimates from the projected differences.
    #[default]
    Raw,
    /// The fitted distance-correlation curve, plugged in for every component.
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub fve_target: f64,
    pub varrho: f64,
    pub mc_reps: usize,
    pub seed: u64,
    pub stats: StatSet,
    pub kernel: bool,
    pub interior_knots: usize,
    pub null_correlation: NullCorrelation,
    pub null_method: NullMethod,
    /// Skip the data-driven rule and use this bandwidth.
    pub bandwidth: Option<f64>,
    /// Skip FVE and use this many components.
    pub truncation: Option<usize>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            fve_target: 0.90,
            varrho: 0.05,
            mc_reps: 1000,
            seed: 0,
            stats: StatSet::default(),
            kernel: true,
            interior_knots: DEFAULT_INTERIOR_KNOTS,
            null_correlation: NullCorrelation::Raw,
            null_method: NullMethod::Spectral,
            bandwidth: None,
            truncation: None,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fve_target > 0.0 && self.fve_target <= 1.0) {
            return Err(Error::Parameter(format!(
                "fve_target must lie in (0, 1], got {}",
                self.fve_target
            )));
        }
        if !(self.varrho > 0.0 && self.varrho < 1.0) {
            return Err(Error::Parameter(format!(
                "varrho must lie in (0, 1), got {}",
                self.varrho
            )));
        }
        if self.mc_reps < MIN_NULL_REPS {
            return Err(Error::Parameter(format!(
                "mc_reps must be at least {MIN_NULL_REPS}, got {}",
                self.mc_reps
            )));
        }
        if !self.stats.max && !self.stats.sum {
            return Err(Error::Parameter("no test statistic selected".into()));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Parameter(format!("bandwidth must be positive, got {h}")));
            }
        }
        if self.truncation == Some(0) {
            return Err(Error::Parameter("truncation must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointResult {
    pub q_max: f64,
    pub q_sum: f64,
    pub p_max: Option<f64>,
    pub p_sum: Option<f64>,
    /// 1-based; the last pre-change replicate.
    pub tau_hat: usize,
    /// Bandwidth chosen by the correlation rule (also reported for `Q_0`).
    pub h: f64,
    pub kernel: bool,
    pub truncation: usize,
    pub mc_reps: usize,
    pub seed: u64,
    pub profile: QProfile,
}

/// Everything the test needs that does not depend on the kernel choice.
#[derive(Debug, Clone)]
pub struct DetectionContext {
    pub model: FpcaModel,
    pub curve: Option<CorrelationCurve>,
    pub bandwidth: f64,
    pub kernel: Option<KernelMatrix>,
    pub eta: CusumTensor,
    pub n: usize,
}

impl DetectionContext {
    /// FPCA, truncation, bandwidth selection and CUSUM projections.
    pub fn prepare(data: &SpatialFunctionalDataset, config: &DetectConfig) -> Result<Self> {
        config.validate()?;
        let model = match config.truncation {
            Some(r) => FpcaModel::fit_with_truncation(data, r)?,
            None => FpcaModel::fit(data, config.fve_target)?,
        };
        let p = data.p();
        let curve = if p >= 3 {
            Some(fit_correlation_curve(&model.corr, data.domain(), config.interior_knots)?)
        } else {
            None
        };
        let bandwidth = match (config.bandwidth, &curve) {
            (Some(h), _) => h,
            (None, Some(c)) => select_bandwidth(c, config.varrho),
            // fewer than three locations: no curve to invert
            (None, None) => data.domain().max_distance().max(1.0),
        };
        let bandwidth = if bandwidth > 0.0 { bandwidth } else { 1.0 };
        let kernel = Some(KernelMatrix::build(data.domain(), bandwidth)?);
        let eta = cusum_projections(data, &model)?;
        Ok(Self {
            model,
            curve,
            bandwidth,
            kernel,
            eta,
            n: data.n(),
        })
    }

    fn null_correlations(&self, config: &DetectConfig, domain: &crate::data::SpatialDomain) -> Result<Vec<DMatrix<f64>>> {
        match (config.null_correlation, &self.curve) {
            (NullCorrelation::Smoothed, Some(curve)) => {
                let p = domain.len();
                let raw = DMatrix::from_fn(p, p, |a, b| {
                    if a == b {
                        1.0
                    } else {
                        curve.eval(domain.distance(a, b))
                    }
                });
                let proj = psd_project(&raw)?;
                let d: Vec<f64> = (0..p).map(|j| proj[(j, j)].max(1e-12).sqrt()).collect();
                let mut corr = DMatrix::from_fn(p, p, |a, b| proj[(a, b)] / (d[a] * d[b]));
                for j in 0..p {
                    corr[(j, j)] = 1.0;
                }
                Ok(vec![corr; self.model.truncation])
            }
            _ => Ok(self.model.corr.clone()),
        }
    }

    /// Run the test with or without the kernel.
    pub fn evaluate(
        &self,
        data: &SpatialFunctionalDataset,
        config: &DetectConfig,
        use_kernel: bool,
    ) -> Result<ChangePointResult> {
        let kernel = if use_kernel { self.kernel.as_ref() } else { None };
        let profile = q_profile(&self.eta, kernel)?;
        let (q_max, q_sum) = q_statistics(&profile);
        let tau_hat = estimate_change_point(&profile);
        let corr = self.null_correlations(config, data.domain())?;
        let null = simulate_null_with(&corr, kernel, self.n, config.mc_reps, config.seed, config.null_method)?;
        Ok(ChangePointResult {
            q_max,
            q_sum,
            p_max: config.stats.max.then(|| monte_carlo_p_value(q_max, &null.max)),
            p_sum: config.stats.sum.then(|| monte_carlo_p_value(q_sum, &null.sum)),
            tau_hat,
            h: self.bandwidth,
            kernel: use_kernel,
            truncation: self.model.truncation,
            mc_reps: config.mc_reps,
            seed: config.seed,
            profile,
        })
    }
}

/// Full detection procedure with the configured statistic.
pub fn detect(data: &SpatialFunctionalDataset, config: &DetectConfig) -> Result<ChangePointResult> {
    let ctx = DetectionContext::prepare(data, config)?;
    ctx.evaluate(data, config, config.kernel)
}
