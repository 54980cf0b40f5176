//! The data-generating process: Fourier eigenfunctions, Matérn score fields,
//! and a radially decaying mean shift after the change point.

use crate::domain::{sample_domain, Scheme};
use crate::matern::matern;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use spatiofd::{rng, Error, Result, SpatialDomain, SpatialFunctionalDataset, TimeGrid};

pub const CHOLESKY_JITTER: f64 = 1e-10;

const STREAM_DOMAIN: u64 = 0;
const STREAM_SCORES: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub scheme: Scheme,
    pub delta: f64,
    pub r_s: f64,
    /// Scale of the Gaussian bump, independent of `r_s`.
    pub sigma_omega: f64,
    /// Last pre-change replicate; `n / 2` when unset.
    pub tau_star: Option<usize>,
    pub t_len: usize,
    pub omega: Vec<f64>,
    pub nu: Vec<f64>,
    pub phi: Vec<f64>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 100,
            p: 100,
            scheme: Scheme::Poisson,
            delta: 0.0,
            r_s: 0.4,
            sigma_omega: 0.5,
            tau_star: None,
            t_len: 100,
            omega: (1..=6).map(|r| 4.0 * (r as f64).powf(-1.6)).collect(),
            nu: vec![1.0, 0.5, 0.5, 0.5, 0.5, 0.5],
            phi: vec![0.1, 0.05, 0.075, 0.02, 0.0, 0.0],
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn components(&self) -> usize {
        self.omega.len()
    }

    pub fn tau_star(&self) -> usize {
        self.tau_star.unwrap_or(self.n / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::Parameter(format!("n must be at least 8, got {}", self.n)));
        }
        if self.p == 0 {
            return Err(Error::Parameter("p must be positive".into()));
        }
        if self.t_len < 2 {
            return Err(Error::Parameter(format!("t_len must be at least 2, got {}", self.t_len)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Parameter(format!("delta must be non-negative, got {}", self.delta)));
        }
        if !(self.r_s >= 0.0 && self.r_s.is_finite()) {
            return Err(Error::Parameter(format!("r_s must be non-negative, got {}", self.r_s)));
        }
        if !(self.sigma_omega >= 0.0 && self.sigma_omega.is_finite()) {
            return Err(Error::Parameter(format!(
                "sigma_omega must be non-negative, got {}",
                self.sigma_omega
            )));
        }
        let tau = self.tau_star();
        if tau == 0 || tau >= self.n {
            return Err(Error::Parameter(format!("tau_star {tau} outside 1..{}", self.n)));
        }
        let r = self.components();
        if r == 0 || self.nu.len() != r || self.phi.len() != r {
            return Err(Error::Parameter(format!(
                "omega, nu and phi need equal non-zero lengths, got {}, {}, {}",
                r,
                self.nu.len(),
                self.phi.len()
            )));
        }
        if self.omega.iter().any(|&w| !(w >= 0.0)) || self.phi.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Parameter("omega and phi must be non-negative".into()));
        }
        for &nu in &self.nu {
            matern(1.0, nu, 1.0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub tau_star: usize,
    pub support: Vec<bool>,
    /// Post-change mean at each location (constant in time).
    pub mu1: Vec<f64>,
}

impl GroundTruth {
    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.support.len()).filter(|&j| self.support[j]).collect()
    }
}

/// `sqrt(2) cos(r pi t)` for odd `r`, `sqrt(2) sin((r - 1) pi t)` for even `r`.
pub fn eigenfunction(r: usize, t: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    let pi = std::f64::consts::PI;
    if r % 2 == 1 {
        s2 * (r as f64 * pi * t).cos()
    } else {
        s2 * ((r - 1) as f64 * pi * t).sin()
    }
}

fn shift_profile(domain: &SpatialDomain, config: &SimulationConfig) -> (Vec<bool>, Vec<f64>) {
    let center = domain.center();
    let sigma = config.sigma_omega;
    let mut support = vec![false; domain.len()];
    let mut mu1 = vec![0.0; domain.len()];
    if config.delta == 0.0 {
        return (support, mu1);
    }
    for j in 0..domain.len() {
        let u = domain
            .coord(j)
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if u <= config.r_s {
            support[j] = true;
            mu1[j] = if sigma > 0.0 {
                config.delta * (-u * u / (2.0 * sigma * sigma)).exp()
            } else {
                config.delta
            };
        }
    }
    (support, mu1)
}

/// Lower Cholesky factor of `omega * M(|s_j - s_k|) + jitter * I`.
fn score_factor(domain: &SpatialDomain, omega: f64, nu: f64, phi: f64) -> Result<DMatrix<f64>> {
    let p = domain.len();
    if phi == 0.0 {
        return Ok(DMatrix::from_diagonal_element(p, p, (omega + CHOLESKY_JITTER).sqrt()));
    }
    let mut cov = DMatrix::zeros(p, p);
    for a in 0..p {
        cov[(a, a)] = omega + CHOLESKY_JITTER;
        for b in 0..a {
            let v = omega * matern(domain.distance(a, b), nu, phi)?;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Covariance(format!("Matérn covariance (nu = {nu}, phi = {phi}) is not positive definite")))
}

/// Draw one dataset. The domain and the scores use separate streams under
/// `config.seed`, so a fixed seed fixes both.
pub fn simulate(config: &SimulationConfig) -> Result<(SpatialFunctionalDataset, GroundTruth)> {
    config.validate()?;
    let domain = sample_domain(config.scheme, config.p, rng::derive_seed(config.seed, &[STREAM_DOMAIN]))?;
    simulate_on(config, domain)
}

/// As [`simulate`], on a fixed domain.
pub fn simulate_on(
    config: &SimulationConfig,
    domain: SpatialDomain,
) -> Result<(SpatialFunctionalDataset, GroundTruth)> {
    config.validate()?;
    let (n, p, t_len, r_true) = (config.n, domain.len(), config.t_len, config.components());
    let grid = TimeGrid::uniform(t_len)?;
    let psi = DMatrix::from_fn(r_true, t_len, |r, m| eigenfunction(r + 1, grid.points()[m]));

    let mut g = rng::stream(config.seed, &[STREAM_SCORES]);
    // scores[(i * p + j), r]
    let mut scores = DMatrix::zeros(n * p, r_true);
    for r in 0..r_true {
        let l = score_factor(&domain, config.omega[r], config.nu[r], config.phi[r])?;
        let z = DMatrix::from_fn(p, n, |_, _| g.sample::<f64, _>(StandardNormal));
        let xi = l * z;
        for i in 0..n {
            for j in 0..p {
                scores[(i * p + j, r)] = xi[(j, i)];
            }
        }
    }
    let curves = scores * psi;

    let (support, mu1) = shift_profile(&domain, config);
    let tau = config.tau_star();
    let mut values = vec![0.0; n * p * t_len];
    for i in 0..n {
        for j in 0..p {
            let shift = if i >= tau { mu1[j] } else { 0.0 };
            let row = i * p + j;
            let out = &mut values[row * t_len..(row + 1) * t_len];
            for (m, v) in out.iter_mut().enumerate() {
                *v = curves[(row, m)] + shift;
            }
        }
    }
    let data = SpatialFunctionalDataset::new(values, n, grid, domain)?;
    Ok((
        data,
        GroundTruth {
            tau_star: tau,
            support,
            mu1,
        },
    ))
}
