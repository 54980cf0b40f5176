//! Support recovery with false discovery rate control.
//!
//! The sample is split into odd and even replicates (order preserved). Each
//! half gets its own FPCA; the odd half contributes raw standardized CUSUM
//! values at the estimated change point, the even half contributes
//! kernel-smoothed ones. Their componentwise products give a ranking
//! statistic `W_j` that is roughly sign-symmetric at null locations, so the
//! count of large negative values estimates the count of false positives.

use crate::changepoint::cusum_projections;
use crate::data::SpatialFunctionalDataset;
use crate::error::{Error, Result};
use crate::fpca::{fit_correlation_curve, select_bandwidth, FpcaModel, DEFAULT_INTERIOR_KNOTS};
use crate::kernel::KernelMatrix;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub const MIN_SPLIT_REPLICATES: usize = 8;

/// Odd- and even-indexed halves of a dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub odd: SpatialFunctionalDataset,
    pub even: SpatialFunctionalDataset,
    pub m: usize,
}

/// Replicates 1, 3, 5, ... and 2, 4, 6, ...; an odd trailing replicate is
/// dropped so both halves have the same length.
pub fn split_dataset(data: &SpatialFunctionalDataset) -> Result<SplitPair> {
    if data.n() < MIN_SPLIT_REPLICATES {
        return Err(Error::InsufficientReplicates {
            needed: MIN_SPLIT_REPLICATES,
            got: data.n(),
        });
    }
    let m = data.n() / 2;
    let odd: Vec<usize> = (0..m).map(|i| 2 * i).collect();
    let even: Vec<usize> = (0..m).map(|i| 2 * i + 1).collect();
    Ok(SplitPair {
        odd: data.select_replicates(&odd)?,
        even: data.select_replicates(&even)?,
        m,
    })
}

/// Nadaraya-Watson average over locations: row `r`, column `j` becomes
/// `sum_k K(s_k - s_j) eta[r, k] / sum_k K(s_k - s_j)`.
pub fn kernel_smooth(eta: &DMatrix<f64>, kernel: &KernelMatrix) -> Result<DMatrix<f64>> {
    let p = eta.ncols();
    if kernel.size() != p {
        return Err(Error::Dimension(format!(
            "kernel is {0}x{0} for {p} locations",
            kernel.size()
        )));
    }
    let k = kernel.entries();
    let row_sums: Vec<f64> = (0..p).map(|j| k.column(j).sum()).collect();
    let mut out = eta * k;
    for j in 0..p {
        out.column_mut(j).unscale_mut(row_sums[j]);
    }
    Ok(out)
}

/// `W_j = sum_r odd[r, j] * even[r, j]`.
pub fn ranking_statistics(odd: &DMatrix<f64>, even: &DMatrix<f64>) -> Result<Vec<f64>> {
    if odd.shape() != even.shape() {
        return Err(Error::Dimension(format!(
            "odd statistics are {:?}, even are {:?}",
            odd.shape(),
            even.shape()
        )));
    }
    Ok((0..odd.ncols())
        .map(|j| odd.column(j).dot(&even.column(j)))
        .collect())
}

/// Symmetrized threshold: the smallest `t > 0` among the distinct `|W_j|`
/// with `(1 + #{W <= -t}) / max(#{W >= t}, 1) <= alpha`. Returns `+inf` and
/// an empty selection when no candidate qualifies.
pub fn sda_threshold(w: &[f64], alpha: f64) -> (f64, Vec<usize>) {
    let mut pos: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
    let mut neg: Vec<f64> = w.iter().filter(|&&v| v < 0.0).map(|v| -v).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    for &t in &candidates {
        let above = pos.len() - pos.partition_point(|&v| v < t);
        let below = neg.len() - neg.partition_point(|&v| v < t);
        let ratio = (1 + below) as f64 / above.max(1) as f64;
        if ratio <= alpha {
            let selected = (0..w.len()).filter(|&j| w[j] >= t).collect();
            return (t, selected);
        }
    }
    (f64::INFINITY, Vec::new())
}

/// Step-up Benjamini-Hochberg; returns rejected indices in ascending order.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Vec<usize> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut cutoff = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if p_values[idx] <= (rank + 1) as f64 * alpha / m as f64 {
            cutoff = rank + 1;
        }
    }
    let mut out: Vec<usize> = order[..cutoff].to_vec();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecoveryMethod {
    Fsda,
    Fsda0,
    Bh,
}

impl RecoveryMethod {
    pub fn name(self) -> &'static str {
        match self {
            RecoveryMethod::Fsda => "fsda",
            RecoveryMethod::Fsda0 => "fsda0",
            RecoveryMethod::Bh => "bh",
        }
    }
}

impl std::str::FromStr for RecoveryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fsda" => Ok(Self::Fsda),
            "fsda0" => Ok(Self::Fsda0),
            "bh" => Ok(Self::Bh),
            other => Err(Error::Parameter(format!("unknown recovery method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub alpha: f64,
    pub fve_target: f64,
    /// Kernel bandwidth; when `None` it is chosen from the full data with the
    /// same correlation rule as detection.
    pub bandwidth: Option<f64>,
    pub varrho: f64,
    pub interior_knots: usize,
    pub method: RecoveryMethod,
    /// Use one truncation, chosen on the full data, for both halves.
    pub shared_truncation: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            fve_target: 0.90,
            bandwidth: None,
            varrho: 0.05,
            interior_knots: DEFAULT_INTERIOR_KNOTS,
            method: RecoveryMethod::Fsda,
            shared_truncation: false,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Parameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
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
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Parameter(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// Ranking statistic per location (chi-square statistic for BH).
    pub w: Vec<f64>,
    /// `+inf` (serialized as null) when nothing is selected by the rule.
    #[serde(with = "inf_as_null")]
    pub threshold: f64,
    /// 0-based location indices, ascending.
    pub selected: Vec<usize>,
    pub alpha: f64,
    pub method: RecoveryMethod,
    pub bandwidth: f64,
    pub truncation: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_values: Option<Vec<f64>>,
}

/// Change index on the half-sample scale.
pub fn split_change_point(tau_hat: usize, m: usize) -> usize {
    tau_hat.div_ceil(2).clamp(1, m - 1)
}

fn check_tau(data: &SpatialFunctionalDataset, tau_hat: usize) -> Result<()> {
    if tau_hat == 0 || tau_hat >= data.n() {
        return Err(Error::Parameter(format!(
            "change point {tau_hat} outside 1..{}",
            data.n()
        )));
    }
    Ok(())
}

fn resolve_bandwidth(data: &SpatialFunctionalDataset, config: &RecoveryConfig) -> Result<f64> {
    if let Some(h) = config.bandwidth {
        return Ok(h);
    }
    if data.p() < 3 {
        return Ok(data.domain().max_distance().max(1.0));
    }
    let model = FpcaModel::fit(data, config.fve_target)?;
    let curve = fit_correlation_curve(&model.corr, data.domain(), config.interior_knots)?;
    let h = select_bandwidth(&curve, config.varrho);
    Ok(if h > 0.0 { h } else { 1.0 })
}

/// Split-sample recovery (`Fsda` or `Fsda0`); `Bh` is routed to
/// [`bh_baseline`].
pub fn fsda(data: &SpatialFunctionalDataset, tau_hat: usize, config: &RecoveryConfig) -> Result<RecoveryResult> {
    config.validate()?;
    check_tau(data, tau_hat)?;
    if config.method == RecoveryMethod::Bh {
        return bh_baseline(data, tau_hat, config);
    }
    let split = split_dataset(data)?;
    let (model_o, mut model_e) = if config.shared_truncation {
        let r = FpcaModel::fit(data, config.fve_target)?.truncation;
        (
            FpcaModel::fit_with_truncation(&split.odd, r)?,
            FpcaModel::fit_with_truncation(&split.even, r)?,
        )
    } else {
        let o = FpcaModel::fit(&split.odd, config.fve_target)?;
        let e = FpcaModel::fit(&split.even, config.fve_target)?;
        let r = o.truncation.min(e.truncation);
        (truncate(o, r), truncate(e, r))
    };
    model_e.align_signs(&model_o.eigenfunctions, data.grid());
    let r = model_o.truncation;

    let tau_s = split_change_point(tau_hat, split.m);
    let eta_o = cusum_projections(&split.odd, &model_o)?.matrix_at(tau_s);
    let eta_e = cusum_projections(&split.even, &model_e)?.matrix_at(tau_s);

    let bandwidth = resolve_bandwidth(data, config)?;
    let eta_e = match config.method {
        RecoveryMethod::Fsda => kernel_smooth(&eta_e, &KernelMatrix::build(data.domain(), bandwidth)?)?,
        _ => eta_e,
    };
    let w = ranking_statistics(&eta_o, &eta_e)?;
    let (threshold, selected) = sda_threshold(&w, config.alpha);
    Ok(RecoveryResult {
        w,
        threshold,
        selected,
        alpha: config.alpha,
        method: config.method,
        bandwidth: if config.method == RecoveryMethod::Fsda { bandwidth } else { 0.0 },
        truncation: r,
        p_values: None,
    })
}

fn truncate(mut model: FpcaModel, r: usize) -> FpcaModel {
    if r < model.truncation {
        model.eigenfunctions = model.eigenfunctions.columns(0, r).into_owned();
        model.per_location_var = model.per_location_var.rows(0, r).into_owned();
        model.sigma.truncate(r);
        model.corr.truncate(r);
        model.truncation = r;
    }
    model
}

/// Null variance of a standardized CUSUM value at change fraction `theta`.
pub fn cusum_null_variance(theta: f64) -> f64 {
    theta * (1.0 - theta)
}

/// Chi-square screening of the full-sample statistics at `tau_hat`, followed
/// by Benjamini-Hochberg.
pub fn bh_baseline(data: &SpatialFunctionalDataset, tau_hat: usize, config: &RecoveryConfig) -> Result<RecoveryResult> {
    config.validate()?;
    check_tau(data, tau_hat)?;
    let model = FpcaModel::fit(data, config.fve_target)?;
    let r = model.truncation;
    let eta = cusum_projections(data, &model)?.matrix_at(tau_hat);
    let theta = tau_hat as f64 / data.n() as f64;
    let v = cusum_null_variance(theta);
    if !(v > 0.0) {
        return Err(Error::Numeric(format!("degenerate null variance at theta = {theta}")));
    }
    let chi = ChiSquared::new(r as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    let w: Vec<f64> = (0..data.p())
        .map(|j| eta.column(j).iter().map(|x| x * x).sum::<f64>() / v)
        .collect();
    let p_values: Vec<f64> = w.iter().map(|&t| chi.sf(t)).collect();
    let selected = benjamini_hochberg(&p_values, config.alpha);
    let threshold = selected
        .iter()
        .map(|&j| w[j])
        .fold(f64::INFINITY, f64::min);
    Ok(RecoveryResult {
        w,
        threshold,
        selected,
        alpha: config.alpha,
        method: RecoveryMethod::Bh,
        bandwidth: 0.0,
        truncation: r,
        p_values: Some(p_values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SpatialDomain, TimeGrid};

    fn toy(n: usize) -> SpatialFunctionalDataset {
        let grid = TimeGrid::uniform(3).unwrap();
        let domain = SpatialDomain::with_default_ids(vec![vec![0.0], vec![1.0]]).unwrap();
        let values = (0..n * 2 * 3).map(|v| v as f64).collect();
        SpatialFunctionalDataset::new(values, n, grid, domain).unwrap()
    }

    #[test]
    fn split_preserves_order() {
        let s = split_dataset(&toy(8)).unwrap();
        assert_eq!(s.m, 4);
        assert_eq!(s.odd.replicate_labels(), &[1, 3, 5, 7]);
        assert_eq!(s.even.replicate_labels(), &[2, 4, 6, 8]);
        let s = split_dataset(&toy(9)).unwrap();
        assert_eq!(s.odd.replicate_labels(), &[1, 3, 5, 7]);
        assert_eq!(s.even.replicate_labels(), &[2, 4, 6, 8]);
        assert!(matches!(
            split_dataset(&toy(5)),
            Err(Error::InsufficientReplicates { needed: 8, got: 5 })
        ));
    }

    #[test]
    fn split_labels_small_cases() {
        // the labelling rule on four and five replicates, via direct selection
        let d = toy(5);
        let odd = d.select_replicates(&[0, 2]).unwrap();
        let even = d.select_replicates(&[1, 3]).unwrap();
        assert_eq!(odd.replicate_labels(), &[1, 3]);
        assert_eq!(even.replicate_labels(), &[2, 4]);
    }

    #[test]
    fn smoothing_examples() {
        let one = SpatialDomain::with_default_ids(vec![vec![0.3]]).unwrap();
        let k = KernelMatrix::build(&one, 0.2).unwrap();
        let eta = DMatrix::from_row_slice(2, 1, &[1.5, -2.0]);
        assert_eq!(kernel_smooth(&eta, &k).unwrap(), eta);

        let twin = SpatialDomain::with_default_ids(vec![vec![0.3, 0.1], vec![0.3, 0.1]]).unwrap();
        let k = KernelMatrix::build(&twin, 0.2).unwrap();
        let eta = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
        let s = kernel_smooth(&eta, &k).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-12 && (s[(0, 1)] - 2.0).abs() < 1e-12);

        let spread = SpatialDomain::with_default_ids(vec![vec![0.0], vec![0.4], vec![0.9]]).unwrap();
        let k = KernelMatrix::build(&spread, 0.3).unwrap();
        let eta = DMatrix::from_element(2, 3, 0.7);
        assert!((kernel_smooth(&eta, &k).unwrap() - eta).amax() < 1e-12);
    }

    #[test]
    fn ranking_examples() {
        let w = |o: &[f64], e: &[f64]| {
            ranking_statistics(
                &DMatrix::from_column_slice(o.len(), 1, o),
                &DMatrix::from_column_slice(e.len(), 1, e),
            )
            .unwrap()[0]
        };
        assert_eq!(w(&[2.0], &[3.0]), 6.0);
        assert_eq!(w(&[-2.0], &[3.0]), -6.0);
        assert_eq!(w(&[1.0, 2.0], &[1.0, 1.0]), 3.0);
        assert!(ranking_statistics(&DMatrix::zeros(1, 2), &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn threshold_examples() {
        let (l, sel) = sda_threshold(&[5.0, 4.0, 3.0, -1.0], 0.5);
        assert_eq!(l, 3.0);
        assert_eq!(sel, vec![0, 1, 2]);
        let (l, sel) = sda_threshold(&[-1.0, -2.0, -0.5], 0.3);
        assert!(l.is_infinite() && sel.is_empty());
        let (l, sel) = sda_threshold(&[10.0], 0.2);
        assert!(l.is_infinite() && sel.is_empty());
    }

    fn ratio(w: &[f64], t: f64) -> f64 {
        let above = w.iter().filter(|&&v| v >= t).count();
        let below = w.iter().filter(|&&v| v <= -t).count();
        (1 + below) as f64 / above.max(1) as f64
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn threshold_is_infimum(w in proptest::collection::vec(-5.0f64..8.0, 1..60), alpha in 0.05f64..0.9) {
            let (l, sel) = sda_threshold(&w, alpha);
            let mut cands: Vec<f64> = w.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
            cands.sort_by(f64::total_cmp);
            for &t in cands.iter().filter(|&&t| t < l) {
                prop_assert!(ratio(&w, t) > alpha);
            }
            if l.is_finite() {
                prop_assert!(ratio(&w, l) <= alpha);
                let expect: Vec<usize> = (0..w.len()).filter(|&j| w[j] >= l).collect();
                prop_assert_eq!(sel, expect);
            } else {
                prop_assert!(sel.is_empty());
            }
        }

        #[test]
        fn threshold_monotone_in_alpha(w in proptest::collection::vec(-5.0f64..8.0, 1..60), a in 0.05f64..0.5, b in 0.0f64..0.4) {
            let (l1, s1) = sda_threshold(&w, a);
            let (l2, s2) = sda_threshold(&w, a + b);
            prop_assert!(l2 <= l1);
            prop_assert!(s1.iter().all(|j| s2.contains(j)));
        }
    }

    #[test]
    fn bh_examples() {
        assert_eq!(benjamini_hochberg(&[0.01, 0.02, 0.04, 0.5], 0.1), vec![0, 1, 2]);
        assert!(benjamini_hochberg(&[1.0, 1.0, 1.0], 0.1).is_empty());
        assert_eq!(benjamini_hochberg(&[0.01], 0.05), vec![0]);
        // step-up: a later small-enough rank rescues earlier ones
        assert_eq!(benjamini_hochberg(&[0.04, 0.045, 0.9], 0.1), vec![0, 1]);
    }

    #[test]
    fn split_scale_change_point() {
        assert_eq!(split_change_point(50, 50), 25);
        assert_eq!(split_change_point(51, 50), 26);
        assert_eq!(split_change_point(1, 50), 1);
        assert_eq!(split_change_point(99, 50), 49);
    }

    #[test]
    fn method_parse() {
        assert_eq!("FSDA0".parse::<RecoveryMethod>().unwrap(), RecoveryMethod::Fsda0);
        assert!("laws".parse::<RecoveryMethod>().is_err());
    }
}
