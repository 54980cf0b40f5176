//! Functional principal components under weak separability.
//!
//! The temporal eigenbasis is estimated from the location-averaged covariance
//! of lag-one replicate differences, which stays consistent when the mean
//! shifts at an unknown replicate. Per-component spatial covariances are then
//! estimated from the projected differences.

use crate::bspline::CubicBSpline;
use crate::data::{SpatialDomain, SpatialFunctionalDataset, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Variances at or below this are treated as degenerate.
pub const MIN_LOCATION_VARIANCE: f64 = 1e-12;
/// Default number of interior knots for the correlation curve fit.
pub const DEFAULT_INTERIOR_KNOTS: usize = 8;
const BANDWIDTH_GRID: usize = 1000;

/// `T x T` estimate of the marginal temporal covariance.
#[derive(Debug, Clone)]
pub struct MarginalCovariance {
    pub matrix: DMatrix<f64>,
    pub grid: TimeGrid,
}

/// Lag-one differences stacked as rows, `(n - 1) * p` rows by `T` columns,
/// ordered replicate-major.
fn difference_matrix(data: &SpatialFunctionalDataset) -> DMatrix<f64> {
    let (n, p, t) = (data.n(), data.p(), data.t());
    let mut d = DMatrix::zeros((n - 1) * p, t);
    for i in 0..n - 1 {
        for j in 0..p {
            let a = data.curve(i, j);
            let b = data.curve(i + 1, j);
            let row = i * p + j;
            for m in 0..t {
                d[(row, m)] = b[m] - a[m];
            }
        }
    }
    d
}

fn require_replicates(data: &SpatialFunctionalDataset, needed: usize) -> Result<()> {
    if data.n() < needed {
        return Err(Error::InsufficientReplicates {
            needed,
            got: data.n(),
        });
    }
    Ok(())
}

pub fn differenced_marginal_covariance(data: &SpatialFunctionalDataset) -> Result<MarginalCovariance> {
    require_replicates(data, 2)?;
    let d = difference_matrix(data);
    let scale = 1.0 / (2.0 * data.p() as f64 * (data.n() - 1) as f64);
    let mut matrix = d.tr_mul(&d) * scale;
    // exact symmetry
    let t = matrix.nrows();
    for a in 0..t {
        for b in a + 1..t {
            let v = 0.5 * (matrix[(a, b)] + matrix[(b, a)]);
            matrix[(a, b)] = v;
            matrix[(b, a)] = v;
        }
    }
    Ok(MarginalCovariance {
        matrix,
        grid: data.grid().clone(),
    })
}

/// Full spectrum of a covariance operator on the grid.
#[derive(Debug, Clone)]
pub struct FpcaDecomposition {
    /// Nonnegative, descending.
    pub eigenvalues: Vec<f64>,
    /// Column `r` holds the `r`-th eigenfunction sampled on the grid.
    pub eigenfunctions: DMatrix<f64>,
}

/// Eigenpairs of the integral operator with kernel `H`, orthonormal under the
/// grid's quadrature inner product.
pub fn fpca_decompose(h: &MarginalCovariance) -> Result<FpcaDecomposition> {
    let w = h.grid.weights();
    let t = w.len();
    if h.matrix.nrows() != t || h.matrix.ncols() != t {
        return Err(Error::Dimension(format!(
            "covariance is {}x{} on a grid of {t} points",
            h.matrix.nrows(),
            h.matrix.ncols()
        )));
    }
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(t, t, |i, j| sw[i] * h.matrix[(i, j)] * sw[j]);
    let eig = sym_eigen(&a)?;
    let mut eigenfunctions = DMatrix::zeros(t, t);
    for r in 0..t {
        let v = eig.vectors.column(r);
        let mut col: Vec<f64> = (0..t).map(|m| v[m] / sw[m]).collect();
        orient(&mut col);
        for m in 0..t {
            eigenfunctions[(m, r)] = col[m];
        }
    }
    Ok(FpcaDecomposition {
        eigenvalues: eig.values.iter().map(|&v| v.max(0.0)).collect(),
        eigenfunctions,
    })
}

/// Flip sign so the entry of largest magnitude is positive.
fn orient(col: &mut [f64]) {
    let mut best = 0usize;
    for (k, v) in col.iter().enumerate() {
        if v.abs() > col[best].abs() {
            best = k;
        }
    }
    if col[best] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Smallest `R` whose cumulative share of the spectrum reaches `target`.
pub fn select_truncation_fve(eigenvalues: &[f64], target: f64) -> Result<usize> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Parameter(format!(
            "FVE target must lie in (0, 1], got {target}"
        )));
    }
    let total: f64 = eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let positive = eigenvalues.iter().filter(|&&v| v > 0.0).count();
    let mut acc = 0.0;
    for (r, &v) in eigenvalues.iter().enumerate() {
        acc += v.max(0.0);
        // small slack so a target of exactly 1 is reachable despite rounding
        if acc / total >= target - 1e-12 {
            return Ok((r + 1).min(positive));
        }
    }
    Ok(positive)
}

/// Per-component spatial covariance estimates.
#[derive(Debug, Clone)]
pub struct CrossCovariance {
    pub sigma: Vec<DMatrix<f64>>,
    /// `R x p`; entry `(r, j)` equals `sigma[r][(j, j)]`.
    pub per_location_var: DMatrix<f64>,
    pub corr: Vec<DMatrix<f64>>,
}

/// `psi` holds at least `r` eigenfunctions as columns.
pub fn cross_covariance(
    data: &SpatialFunctionalDataset,
    psi: &DMatrix<f64>,
    r: usize,
) -> Result<CrossCovariance> {
    require_replicates(data, 2)?;
    if r == 0 {
        return Err(Error::Parameter("truncation must be at least 1".into()));
    }
    if psi.nrows() != data.t() || psi.ncols() < r {
        return Err(Error::Dimension(format!(
            "eigenfunction matrix is {}x{}, need {}x{r} or wider",
            psi.nrows(),
            psi.ncols(),
            data.t()
        )));
    }
    let (n, p) = (data.n(), data.p());
    let w = data.grid().weights();
    let wpsi = DMatrix::from_fn(data.t(), r, |m, c| w[m] * psi[(m, c)]);
    let scores = difference_matrix(data) * wpsi;
    let scale = 1.0 / (2.0 * (n - 1) as f64);

    let mut sigma = Vec::with_capacity(r);
    let mut per_location_var = DMatrix::zeros(r, p);
    let mut corr = Vec::with_capacity(r);
    for c in 0..r {
        let s = DMatrix::from_fn(n - 1, p, |i, j| scores[(i * p + j, c)]);
        let mut sig = s.tr_mul(&s) * scale;
        for a in 0..p {
            for b in a + 1..p {
                let v = 0.5 * (sig[(a, b)] + sig[(b, a)]);
                sig[(a, b)] = v;
                sig[(b, a)] = v;
            }
        }
        for j in 0..p {
            let v = sig[(j, j)];
            if !(v > MIN_LOCATION_VARIANCE) {
                return Err(Error::ZeroVariance {
                    component: c + 1,
                    location: j + 1,
                });
            }
            per_location_var[(c, j)] = v;
        }
        let sd: Vec<f64> = (0..p).map(|j| sig[(j, j)].sqrt()).collect();
        let mut rho = DMatrix::from_fn(p, p, |a, b| sig[(a, b)] / (sd[a] * sd[b]));
        for j in 0..p {
            rho[(j, j)] = 1.0;
        }
        sigma.push(sig);
        corr.push(rho);
    }
    Ok(CrossCovariance {
        sigma,
        per_location_var,
        corr,
    })
}

/// Fitted weakly separable components, truncated at `truncation`.
#[derive(Debug, Clone)]
pub struct FpcaModel {
    /// Full spectrum of the marginal covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// `T x R` leading eigenfunctions.
    pub eigenfunctions: DMatrix<f64>,
    /// `R x p`.
    pub per_location_var: DMatrix<f64>,
    pub sigma: Vec<DMatrix<f64>>,
    pub corr: Vec<DMatrix<f64>>,
    pub truncation: usize,
}

impl FpcaModel {
    /// Estimate the model and pick the truncation by FVE.
    pub fn fit(data: &SpatialFunctionalDataset, fve_target: f64) -> Result<Self> {
        let h = differenced_marginal_covariance(data)?;
        let dec = fpca_decompose(&h)?;
        let r = select_truncation_fve(&dec.eigenvalues, fve_target)?;
        Self::from_decomposition(data, dec, r)
    }

    /// Estimate the model with a fixed truncation.
    pub fn fit_with_truncation(data: &SpatialFunctionalDataset, r: usize) -> Result<Self> {
        let h = differenced_marginal_covariance(data)?;
        let dec = fpca_decompose(&h)?;
        if dec.eigenvalues.iter().all(|&v| v <= 0.0) {
            return Err(Error::DegenerateSpectrum);
        }
        Self::from_decomposition(data, dec, r)
    }

    fn from_decomposition(
        data: &SpatialFunctionalDataset,
        dec: FpcaDecomposition,
        r: usize,
    ) -> Result<Self> {
        if r == 0 || r > dec.eigenvalues.len() {
            return Err(Error::Parameter(format!(
                "truncation {r} outside 1..={}",
                dec.eigenvalues.len()
            )));
        }
        let psi = dec.eigenfunctions.columns(0, r).into_owned();
        let cc = cross_covariance(data, &psi, r)?;
        Ok(Self {
            eigenvalues: dec.eigenvalues,
            eigenfunctions: psi,
            per_location_var: cc.per_location_var,
            sigma: cc.sigma,
            corr: cc.corr,
            truncation: r,
        })
    }

    /// Assemble a model from known eigenfunctions and per-location variances.
    /// Correlations default to the identity.
    pub fn from_parts(
        eigenfunctions: DMatrix<f64>,
        per_location_var: DMatrix<f64>,
    ) -> Result<Self> {
        let r = eigenfunctions.ncols();
        if per_location_var.nrows() != r {
            return Err(Error::Dimension(format!(
                "{} eigenfunctions but {} variance rows",
                r,
                per_location_var.nrows()
            )));
        }
        let p = per_location_var.ncols();
        let sigma = (0..r)
            .map(|c| DMatrix::from_fn(p, p, |a, b| if a == b { per_location_var[(c, a)] } else { 0.0 }))
            .collect();
        Ok(Self {
            eigenvalues: (0..r)
                .map(|c| per_location_var.row(c).mean())
                .collect(),
            eigenfunctions,
            per_location_var,
            sigma,
            corr: vec![DMatrix::identity(p, p); r],
            truncation: r,
        })
    }

    /// Flip eigenfunction signs to agree with `reference` (positive inner
    /// product), componentwise over the shared leading components.
    pub fn align_signs(&mut self, reference: &DMatrix<f64>, grid: &TimeGrid) {
        let w = grid.weights();
        let shared = self.truncation.min(reference.ncols());
        for c in 0..shared {
            let ip: f64 = (0..w.len())
                .map(|m| w[m] * self.eigenfunctions[(m, c)] * reference[(m, c)])
                .sum();
            if ip < 0.0 {
                self.eigenfunctions.column_mut(c).neg_mut();
            }
        }
    }

    pub fn p(&self) -> usize {
        self.per_location_var.ncols()
    }
}

/// Pooled spatial correlation as a function of distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub d_max: f64,
    pub fit: CurveFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CurveFit {
    Spline(CubicBSpline),
    /// Mean correlation at each distinct distance, linearly interpolated.
    Binned { distances: Vec<f64>, means: Vec<f64> },
}

impl CorrelationCurve {
    pub fn eval(&self, d: f64) -> f64 {
        match &self.fit {
            CurveFit::Spline(s) => s.eval(d.clamp(0.0, self.d_max)),
            CurveFit::Binned { distances, means } => interp_linear(distances, means, d),
        }
    }

    /// Set when too few distinct distances forced the binned fallback.
    pub fn is_fallback(&self) -> bool {
        matches!(self.fit, CurveFit::Binned { .. })
    }
}

fn interp_linear(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let (y0, y1) = (ys[k - 1], ys[k]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Regress averaged pairwise correlations on distance with a cubic B-spline.
pub fn fit_correlation_curve(
    corr: &[DMatrix<f64>],
    domain: &SpatialDomain,
    interior_knots: usize,
) -> Result<CorrelationCurve> {
    let p = domain.len();
    if p < 3 {
        return Err(Error::Validation(format!(
            "correlation curve needs at least 3 locations, got {p}"
        )));
    }
    if corr.is_empty() {
        return Err(Error::Parameter("no correlation matrices supplied".into()));
    }
    if corr.iter().any(|c| c.nrows() != p || c.ncols() != p) {
        return Err(Error::Dimension("correlation matrix size differs from domain".into()));
    }
    let rs = corr.len() as f64;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for k in j + 1..p {
            let mean = corr.iter().map(|c| c[(j, k)]).sum::<f64>() / rs;
            pairs.push((domain.distance(j, k), mean));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d_max = pairs[pairs.len() - 1].0;

    let mut distances: Vec<f64> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for &(d, v) in &pairs {
        match distances.last() {
            Some(&last) if (d - last).abs() <= 1e-12 * d_max.max(1.0) => {
                let s = sums.last_mut().expect("parallel vectors");
                s.0 += v;
                s.1 += 1;
            }
            _ => {
                distances.push(d);
                sums.push((v, 1));
            }
        }
    }

    if !(d_max > 0.0) || distances.len() < CubicBSpline::basis_size(interior_knots) {
        let means = sums.iter().map(|(s, c)| s / *c as f64).collect();
        return Ok(CorrelationCurve {
            d_max,
            fit: CurveFit::Binned { distances, means },
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let spline = CubicBSpline::fit(&x, &y, 0.0, d_max, interior_knots)?;
    Ok(CorrelationCurve {
        d_max,
        fit: CurveFit::Spline(spline),
    })
}

/// Smallest grid distance at which the curve falls below `varrho`; `d_max`
/// when it never does.
pub fn select_bandwidth(curve: &CorrelationCurve, varrho: f64) -> f64 {
    (1..=BANDWIDTH_GRID)
        .map(|k| curve.d_max * k as f64 / BANDWIDTH_GRID as f64)
        .find(|&d| curve.eval(d) < varrho)
        .unwrap_or(curve.d_max)
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use std::f64::consts::PI;

    pub(crate) fn line_domain(p: usize) -> SpatialDomain {
        SpatialDomain::with_default_ids((1..=p).map(|k| vec![k as f64 / p as f64]).collect()).unwrap()
    }

    pub(crate) fn dataset(curves: &[Vec<Vec<f64>>], grid: &TimeGrid, domain: SpatialDomain) -> SpatialFunctionalDataset {
        let n = curves.len();
        let values = curves.iter().flatten().flatten().copied().collect();
        SpatialFunctionalDataset::new(values, n, grid.clone(), domain).unwrap()
    }

    pub(crate) fn unit_cos(grid: &TimeGrid) -> Vec<f64> {
        grid.points().iter().map(|t| 2f64.sqrt() * (PI * t).cos()).collect()
    }

    /// n=4, p=1, X_i = c_i * psi with c = (0, 0, 1, 1).
    pub(crate) fn step_example() -> (SpatialFunctionalDataset, DMatrix<f64>) {
        let grid = TimeGrid::uniform(201).unwrap();
        let psi = unit_cos(&grid);
        let norm = grid.inner(&psi, &psi).unwrap().sqrt();
        let psi: Vec<f64> = psi.iter().map(|v| v / norm).collect();
        let c = [0.0, 0.0, 1.0, 1.0];
        let curves: Vec<Vec<Vec<f64>>> = c.iter().map(|&ci| vec![psi.iter().map(|v| ci * v).collect()]).collect();
        let data = dataset(&curves, &grid, line_domain(1));
        let t = grid.len();
        (data, DMatrix::from_column_slice(t, 1, &psi))
    }

}

#[cfg(test)]
mod tests {
    use super::tests_support::*;
    use super::*;
    use std::f64::consts::PI;


    #[test]
    fn identical_replicates_give_zero_covariance() {
        let grid = TimeGrid::uniform(5).unwrap();
        let c = vec![vec![1.0, 2.0, 0.5, -1.0, 3.0]];
        let data = dataset(&vec![c; 4], &grid, line_domain(1));
        let h = differenced_marginal_covariance(&data).unwrap();
        assert!(h.matrix.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_replicates_outer_product() {
        let grid = TimeGrid::uniform(4).unwrap();
        let g = [1.0, -2.0, 0.5, 3.0];
        let x1 = vec![vec![0.3, 0.1, -0.2, 0.0]];
        let x2 = vec![x1[0].iter().zip(&g).map(|(a, b)| a + b).collect::<Vec<_>>()];
        let values: Vec<f64> = x1.iter().chain(&x2).flatten().copied().collect();
        // the constructor wants four replicates; take the first two of a padded set
        let full: Vec<f64> = values.iter().chain(values.iter()).copied().collect();
        let d4 = SpatialFunctionalDataset::new(full, 4, grid, line_domain(1)).unwrap();
        let d2 = d4.select_replicates(&[0, 1]).unwrap();
        let h = differenced_marginal_covariance(&d2).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expect = g[a] * g[b] / 2.0;
                assert!((h.matrix[(a, b)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn common_curve_cancels() {
        let grid = TimeGrid::uniform(6).unwrap();
        let base: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|i| (0..2).map(|j| (0..6).map(|m| ((i * 7 + j * 3 + m) % 5) as f64).collect()).collect())
            .collect();
        let shift = [0.5, -1.0, 2.0, 0.0, 1.5, 3.0];
        let shifted: Vec<Vec<Vec<f64>>> = base
            .iter()
            .map(|rep| rep.iter().map(|c| c.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect())
            .collect();
        let a = differenced_marginal_covariance(&dataset(&base, &grid, line_domain(2))).unwrap();
        let b = differenced_marginal_covariance(&dataset(&shifted, &grid, line_domain(2))).unwrap();
        assert!((a.matrix - b.matrix).amax() < 1e-12);
    }

    #[test]
    fn rank_one_operator() {
        let grid = TimeGrid::uniform(51).unwrap();
        let phi = unit_cos(&grid);
        let norm = grid.inner(&phi, &phi).unwrap().sqrt();
        let phi: Vec<f64> = phi.iter().map(|v| v / norm).collect();
        let t = grid.len();
        let h = MarginalCovariance {
            matrix: DMatrix::from_fn(t, t, |a, b| 2.0 * phi[a] * phi[b]),
            grid: grid.clone(),
        };
        let dec = fpca_decompose(&h).unwrap();
        assert!((dec.eigenvalues[0] - 2.0).abs() < 1e-8);
        assert!(dec.eigenvalues[1..].iter().all(|v| v.abs() < 1e-8));
        let psi: Vec<f64> = dec.eigenfunctions.column(0).iter().copied().collect();
        assert!((grid.inner(&psi, &phi).unwrap().abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_operator() {
        let grid = TimeGrid::uniform(10).unwrap();
        let h = MarginalCovariance {
            matrix: DMatrix::zeros(10, 10),
            grid,
        };
        assert!(fpca_decompose(&h).unwrap().eigenvalues.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_two_operator() {
        let grid = TimeGrid::uniform(101).unwrap();
        let f1 = unit_cos(&grid);
        let f2: Vec<f64> = grid.points().iter().map(|t| 2f64.sqrt() * (2.0 * PI * t).sin()).collect();
        // orthonormalize under the discrete inner product
        let n1 = grid.inner(&f1, &f1).unwrap().sqrt();
        let f1: Vec<f64> = f1.iter().map(|v| v / n1).collect();
        let c = grid.inner(&f2, &f1).unwrap();
        let f2: Vec<f64> = f2.iter().zip(&f1).map(|(a, b)| a - c * b).collect();
        let n2 = grid.inner(&f2, &f2).unwrap().sqrt();
        let f2: Vec<f64> = f2.iter().map(|v| v / n2).collect();
        let t = grid.len();
        let h = MarginalCovariance {
            matrix: DMatrix::from_fn(t, t, |a, b| 3.0 * f1[a] * f1[b] + f2[a] * f2[b]),
            grid: grid.clone(),
        };
        let dec = fpca_decompose(&h).unwrap();
        assert!((dec.eigenvalues[0] - 3.0).abs() < 1e-8);
        assert!((dec.eigenvalues[1] - 1.0).abs() < 1e-8);
        let e1: Vec<f64> = dec.eigenfunctions.column(0).iter().copied().collect();
        let e2: Vec<f64> = dec.eigenfunctions.column(1).iter().copied().collect();
        assert!((grid.inner(&e1, &f1).unwrap().abs() - 1.0).abs() < 1e-8);
        assert!((grid.inner(&e2, &f2).unwrap().abs() - 1.0).abs() < 1e-8);
        assert!(grid.inner(&e1, &e2).unwrap().abs() < 1e-6);
    }

    #[test]
    fn fve_examples() {
        assert_eq!(select_truncation_fve(&[4.0, 2.0, 1.0, 1.0], 0.8).unwrap(), 3);
        assert_eq!(select_truncation_fve(&[5.0], 0.3).unwrap(), 1);
        assert_eq!(select_truncation_fve(&[5.0], 1.0).unwrap(), 1);
        assert_eq!(select_truncation_fve(&[3.0, 1.0], 0.75).unwrap(), 1);
        assert_eq!(select_truncation_fve(&[0.0, 0.0], 0.9), Err(Error::DegenerateSpectrum));
        assert_eq!(select_truncation_fve(&[2.0, 1.0, 0.0], 1.0).unwrap(), 2);
    }

    #[test]
    fn cross_covariance_step_example() {
        let (data, psi) = step_example();
        let cc = cross_covariance(&data, &psi, 1).unwrap();
        assert!((cc.sigma[0][(0, 0)] - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(cc.per_location_var[(0, 0)], cc.sigma[0][(0, 0)]);
        assert_eq!(cc.corr[0][(0, 0)], 1.0);
    }

    #[test]
    fn cross_covariance_zero_data_errors() {
        let grid = TimeGrid::uniform(5).unwrap();
        let data = SpatialFunctionalDataset::new(vec![0.0; 4 * 2 * 5], 4, grid.clone(), line_domain(2)).unwrap();
        let psi = DMatrix::from_element(5, 1, 1.0);
        assert_eq!(
            cross_covariance(&data, &psi, 1).unwrap_err(),
            Error::ZeroVariance { component: 1, location: 1 }
        );
    }

    #[test]
    fn cross_covariance_structure_on_pseudorandom_data() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let grid = TimeGrid::uniform(20).unwrap();
        let (n, p) = (30, 6);
        let values: Vec<f64> = (0..n * p * 20).map(|_| rng.random::<f64>() - 0.5).collect();
        let data = SpatialFunctionalDataset::new(values, n, grid, line_domain(p)).unwrap();
        let model = FpcaModel::fit_with_truncation(&data, 3).unwrap();
        for c in 0..3 {
            assert_eq!(model.sigma[c], model.sigma[c].transpose());
            for j in 0..p {
                assert_eq!(model.corr[c][(j, j)], 1.0);
                assert_eq!(model.per_location_var[(c, j)], model.sigma[c][(j, j)]);
            }
        }
        // total-variance conservation
        let h = differenced_marginal_covariance(&data).unwrap();
        let w = data.grid().weights();
        let trace: f64 = (0..20).map(|m| w[m] * h.matrix[(m, m)]).sum();
        let total: f64 = model.eigenvalues.iter().sum();
        assert!((trace - total).abs() < 1e-8 * trace);
        // orthonormality
        for a in 0..3 {
            for b in 0..3 {
                let fa: Vec<f64> = model.eigenfunctions.column(a).iter().copied().collect();
                let fb: Vec<f64> = model.eigenfunctions.column(b).iter().copied().collect();
                let ip = data.grid().inner(&fa, &fb).unwrap();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mean_shift_changes_covariance_only_at_straddling_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let grid = TimeGrid::uniform(8).unwrap();
        let (n, p, t, tau) = (200, 3, 8, 100);
        let values: Vec<f64> = (0..n * p * t).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let shift: Vec<f64> = (0..p * t).map(|k| ((k % 5) as f64) * 0.3 - 0.4).collect();
        let mut shifted = values.clone();
        for i in tau..n {
            for k in 0..p * t {
                shifted[i * p * t + k] += shift[k];
            }
        }
        let a = SpatialFunctionalDataset::new(values.clone(), n, grid.clone(), line_domain(p)).unwrap();
        let b = SpatialFunctionalDataset::new(shifted, n, grid, line_domain(p)).unwrap();
        let ha = differenced_marginal_covariance(&a).unwrap().matrix;
        let hb = differenced_marginal_covariance(&b).unwrap().matrix;
        // only the difference X_{tau+1} - X_tau changes, by `shift`
        let scale = 1.0 / (2.0 * p as f64 * (n - 1) as f64);
        let expect = DMatrix::from_fn(t, t, |u, v| {
            let mut acc = 0.0;
            for j in 0..p {
                let d = |m: usize| a.value(tau, j, m) - a.value(tau - 1, j, m);
                let (su, sv) = (shift[j * t + u], shift[j * t + v]);
                acc += (d(u) + su) * (d(v) + sv) - d(u) * d(v);
            }
            acc * scale
        });
        assert!((hb - ha - expect).amax() < 1e-12);
    }

    #[test]
    fn identity_correlations_fit_near_zero() {
        let domain = SpatialDomain::with_default_ids(
            (0..40).map(|k| vec![(k % 8) as f64 / 7.0, (k / 8) as f64 / 4.0]).collect(),
        )
        .unwrap();
        let corr = vec![DMatrix::identity(40, 40); 3];
        let curve = fit_correlation_curve(&corr, &domain, DEFAULT_INTERIOR_KNOTS).unwrap();
        for k in 1..=100 {
            let d = curve.d_max * k as f64 / 100.0;
            assert!(curve.eval(d).abs() < 0.05);
        }
    }

    #[test]
    fn exponential_correlation_recovered() {
        let p = 200;
        let domain = line_domain(p);
        let rho = DMatrix::from_fn(p, p, |a, b| (-domain.distance(a, b) / 0.1).exp());
        let curve = fit_correlation_curve(&[rho], &domain, DEFAULT_INTERIOR_KNOTS).unwrap();
        assert!(!curve.is_fallback());
        let mut worst = 0.0f64;
        for k in 0..=500 {
            let d = 0.5 * k as f64 / 500.0;
            worst = worst.max((curve.eval(d) - (-d / 0.1).exp()).abs());
        }
        assert!(worst < 0.02, "max deviation {worst}");
        let h = select_bandwidth(&curve, 0.05);
        let exact = -0.1 * 0.05f64.ln();
        assert!((h - exact).abs() < 0.01, "h = {h}, exact {exact}");
    }

    #[test]
    fn constant_correlation_and_clamp() {
        let p = 30;
        let domain = line_domain(p);
        let rho = DMatrix::from_fn(p, p, |a, b| if a == b { 1.0 } else { 0.7 });
        let curve = fit_correlation_curve(&[rho], &domain, DEFAULT_INTERIOR_KNOTS).unwrap();
        for k in 0..=100 {
            let d = curve.d_max * k as f64 / 100.0;
            assert!((curve.eval(d) - 0.7).abs() < 1e-6);
        }
        assert_eq!(select_bandwidth(&curve, 0.05), curve.d_max);
    }

    #[test]
    fn bandwidth_within_one_step_of_crossing() {
        let curve = CorrelationCurve {
            d_max: 2.0,
            fit: CurveFit::Binned {
                distances: vec![0.0, 2.0],
                means: vec![1.0, 0.0],
            },
        };
        // crosses 0.25 at d = 1.5
        let h = select_bandwidth(&curve, 0.25);
        assert!((h - 1.5).abs() <= 2.0 / 1000.0 + 1e-12);
    }

    #[test]
    fn few_distances_fall_back_to_binned() {
        let domain = line_domain(4);
        let rho = DMatrix::from_fn(4, 4, |a, b| if a == b { 1.0 } else { 0.5 });
        let curve = fit_correlation_curve(&[rho], &domain, DEFAULT_INTERIOR_KNOTS).unwrap();
        assert!(curve.is_fallback());
        assert!((curve.eval(0.3) - 0.5).abs() < 1e-12);
        assert!(fit_correlation_curve(&[DMatrix::identity(2, 2)], &line_domain(2), 8).is_err());
    }
}
