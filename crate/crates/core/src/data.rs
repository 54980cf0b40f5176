//! Containers for replicated spatial functional observations.
//!
//! A dataset holds `n` replicates of curves observed at `p` locations on a
//! shared time grid of `T` points, stored replicate-major so that
//! `curve(i, j)` is a contiguous slice.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ordered time stamps with composite trapezoid quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation(format!(
                "time grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("time grid contains non-finite points".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("time grid must be strictly increasing".into()));
        }
        let m = points.len();
        let mut weights = vec![0.0; m];
        for k in 0..m - 1 {
            let half = 0.5 * (points[k + 1] - points[k]);
            weights[k] += half;
            weights[k + 1] += half;
        }
        Ok(Self { points, weights })
    }

    /// `len` equally spaced points covering `[0, 1]` inclusive.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::Validation(format!(
                "time grid needs at least 2 points, got {len}"
            )));
        }
        let step = 1.0 / (len - 1) as f64;
        Self::new((0..len).map(|k| k as f64 * step).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.points[self.points.len() - 1] - self.points[0]
    }

    /// Quadrature inner product of two curves sampled on this grid.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        inner_product(f, g, self)
    }
}

/// Trapezoid approximation of the L2 inner product on the grid.
pub fn inner_product(f: &[f64], g: &[f64], grid: &TimeGrid) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "curves of length {} and {} on a grid of length {}",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    Ok(weighted_dot(f, g, grid.weights()))
}

#[inline]
pub(crate) fn weighted_dot(f: &[f64], g: &[f64], w: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .zip(w)
        .map(|((a, b), w)| w * a * b)
        .sum()
}

/// Location coordinates in one or two planar dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialDomain {
    dim: usize,
    coords: Vec<f64>,
    ids: Vec<String>,
}

impl SpatialDomain {
    /// `coords` holds one entry per location, each of length `dim`.
    pub fn new(ids: Vec<String>, coords: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != coords.len() {
            return Err(Error::Dimension(format!(
                "{} ids for {} coordinates",
                ids.len(),
                coords.len()
            )));
        }
        if coords.is_empty() {
            return Err(Error::Validation("spatial domain has no locations".into()));
        }
        let dim = coords[0].len();
        if !(1..=2).contains(&dim) {
            return Err(Error::Validation(format!(
                "spatial dimension must be 1 or 2, got {dim}"
            )));
        }
        let mut flat = Vec::with_capacity(coords.len() * dim);
        for (k, c) in coords.iter().enumerate() {
            if c.len() != dim {
                return Err(Error::Validation(format!(
                    "location {} has dimension {}, expected {dim}",
                    ids[k],
                    c.len()
                )));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "location {} has non-finite coordinates",
                    ids[k]
                )));
            }
            flat.extend_from_slice(c);
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate location id {id}")));
            }
        }
        Ok(Self {
            dim,
            coords: flat,
            ids,
        })
    }

    /// Locations labelled `s1, s2, ...` in order.
    pub fn with_default_ids(coords: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (1..=coords.len()).map(|k| format!("s{k}")).collect();
        Self::new(ids, coords)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn coord(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn distance(&self, j: usize, k: usize) -> f64 {
        self.coord(j)
            .iter()
            .zip(self.coord(k))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_distance(&self) -> f64 {
        let p = self.len();
        let mut best = 0.0f64;
        for j in 0..p {
            for k in j + 1..p {
                best = best.max(self.distance(j, k));
            }
        }
        best
    }

    /// Midpoint of the coordinate bounding box.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|d| {
                let (lo, hi) = (0..self.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |acc, j| {
                    let x = self.coord(j)[d];
                    (acc.0.min(x), acc.1.max(x))
                });
                0.5 * (lo + hi)
            })
            .collect()
    }

    /// Sub-domain restricted to `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&j| self.ids[j].clone()).collect();
        let coords = indices.iter().map(|&j| self.coord(j).to_vec()).collect();
        Self::new(ids, coords)
    }
}

/// `n x p x T` array of curves `X_i(s_j; t_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFunctionalDataset {
    n: usize,
    values: Vec<f64>,
    grid: TimeGrid,
    domain: SpatialDomain,
    replicate_labels: Vec<usize>,
}

impl SpatialFunctionalDataset {
    /// Minimum replicate count accepted by the constructor.
    pub const MIN_REPLICATES: usize = 4;

    pub fn new(values: Vec<f64>, n: usize, grid: TimeGrid, domain: SpatialDomain) -> Result<Self> {
        let labels = (1..=n).collect();
        Self::with_labels(values, n, grid, domain, labels)
    }

    /// Like [`new`](Self::new) but with explicit 1-based labels naming each
    /// replicate's position in some parent dataset.
    pub fn with_labels(
        values: Vec<f64>,
        n: usize,
        grid: TimeGrid,
        domain: SpatialDomain,
        replicate_labels: Vec<usize>,
    ) -> Result<Self> {
        Self::build(values, n, grid, domain, replicate_labels, Self::MIN_REPLICATES)
    }

    fn build(
        values: Vec<f64>,
        n: usize,
        grid: TimeGrid,
        domain: SpatialDomain,
        replicate_labels: Vec<usize>,
        min_n: usize,
    ) -> Result<Self> {
        if n < min_n {
            return Err(Error::InsufficientReplicates { needed: min_n, got: n });
        }
        let expected = n * domain.len() * grid.len();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} values for n={n}, p={}, T={}, got {}",
                domain.len(),
                grid.len(),
                values.len()
            )));
        }
        if replicate_labels.len() != n {
            return Err(Error::Dimension(format!(
                "{} replicate labels for n={n}",
                replicate_labels.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let t = grid.len();
            let p = domain.len();
            return Err(Error::Validation(format!(
                "non-finite value at replicate {}, location {}, time {}",
                pos / (p * t) + 1,
                (pos / t) % p + 1,
                pos % t + 1
            )));
        }
        Ok(Self {
            n,
            values,
            grid,
            domain,
            replicate_labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.domain.len()
    }

    pub fn t(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn domain(&self) -> &SpatialDomain {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn replicate_labels(&self) -> &[usize] {
        &self.replicate_labels
    }

    #[inline]
    pub fn curve(&self, i: usize, j: usize) -> &[f64] {
        let t = self.t();
        let start = (i * self.p() + j) * t;
        &self.values[start..start + t]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, m: usize) -> f64 {
        self.values[(i * self.p() + j) * self.t() + m]
    }

    /// Replicates at the given 0-based indices, in order. Labels carry over.
    pub fn select_replicates(&self, indices: &[usize]) -> Result<Self> {
        let block = self.p() * self.t();
        let mut values = Vec::with_capacity(indices.len() * block);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Dimension(format!(
                    "replicate index {i} out of range for n={}",
                    self.n
                )));
            }
            values.extend_from_slice(&self.values[i * block..(i + 1) * block]);
        }
        let labels = indices.iter().map(|&i| self.replicate_labels[i]).collect();
        Self::build(
            values,
            indices.len(),
            self.grid.clone(),
            self.domain.clone(),
            labels,
            2,
        )
    }

    /// Locations at the given 0-based indices, in order.
    pub fn select_locations(&self, indices: &[usize]) -> Result<Self> {
        let t = self.t();
        let mut values = Vec::with_capacity(self.n * indices.len() * t);
        for i in 0..self.n {
            for &j in indices {
                values.extend_from_slice(self.curve(i, j));
            }
        }
        Self::build(
            values,
            self.n,
            self.grid.clone(),
            self.domain.select(indices)?,
            self.replicate_labels.clone(),
            2,
        )
    }

    /// Every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_integrand() {
        let grid = TimeGrid::uniform(11).unwrap();
        let ones = vec![1.0; 11];
        assert_eq!(inner_product(&ones, &ones, &grid).unwrap(), 1.0);
    }

    #[test]
    fn linear_integrand_is_exact() {
        let grid = TimeGrid::uniform(11).unwrap();
        let t = grid.points().to_vec();
        let ones = vec![1.0; 11];
        let v = inner_product(&t, &ones, &grid).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sine_integrates_to_zero() {
        let grid = TimeGrid::uniform(101).unwrap();
        let s: Vec<f64> = grid.points().iter().map(|t| (2.0 * PI * t).sin()).collect();
        let ones = vec![1.0; 101];
        assert!(inner_product(&s, &ones, &grid).unwrap().abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        let grid = TimeGrid::uniform(5).unwrap();
        assert!(matches!(
            inner_product(&[1.0; 4], &[1.0; 5], &grid),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn weights_sum_to_span() {
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.35, 0.7, 1.0]).unwrap();
        let s: f64 = grid.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(grid.weights().iter().all(|&w| w > 0.0));
        assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
    }

    #[test]
    fn domain_validation() {
        assert!(SpatialDomain::new(vec!["a".into(), "a".into()], vec![vec![0.0], vec![1.0]]).is_err());
        assert!(SpatialDomain::new(vec!["a".into()], vec![vec![f64::NAN]]).is_err());
        assert!(SpatialDomain::new(vec!["a".into(), "b".into()], vec![vec![0.0], vec![1.0, 2.0]]).is_err());
        let d = SpatialDomain::with_default_ids(vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d.distance(0, 1), 5.0);
        assert_eq!(d.center(), vec![1.5, 2.0]);
    }

    #[test]
    fn dataset_layout_and_selection() {
        let grid = TimeGrid::uniform(3).unwrap();
        let domain = SpatialDomain::with_default_ids(vec![vec![0.0], vec![1.0]]).unwrap();
        let values: Vec<f64> = (0..4 * 2 * 3).map(|v| v as f64).collect();
        let data = SpatialFunctionalDataset::new(values, 4, grid, domain).unwrap();
        assert_eq!(data.curve(1, 1), &[9.0, 10.0, 11.0]);
        assert_eq!(data.value(3, 0, 2), 20.0);
        let sub = data.select_replicates(&[1, 3]).unwrap();
        assert_eq!(sub.replicate_labels(), &[2, 4]);
        assert_eq!(sub.curve(1, 0), data.curve(3, 0));
    }

    #[test]
    fn dataset_rejects_small_or_nonfinite() {
        let grid = TimeGrid::uniform(2).unwrap();
        let domain = SpatialDomain::with_default_ids(vec![vec![0.0]]).unwrap();
        assert!(matches!(
            SpatialFunctionalDataset::new(vec![0.0; 6], 3, grid.clone(), domain.clone()),
            Err(Error::InsufficientReplicates { .. })
        ));
        let mut v = vec![0.0; 8];
        v[5] = f64::INFINITY;
        assert!(SpatialFunctionalDataset::new(v, 4, grid, domain).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn inner_product_bilinear_symmetric(
            f in proptest::collection::vec(-10.0f64..10.0, 7),
            g in proptest::collection::vec(-10.0f64..10.0, 7),
            h in proptest::collection::vec(-10.0f64..10.0, 7),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let grid = TimeGrid::uniform(7).unwrap();
            let fg = inner_product(&f, &g, &grid).unwrap();
            let gf = inner_product(&g, &f, &grid).unwrap();
            prop_assert!((fg - gf).abs() <= 1e-12 * (1.0 + fg.abs()));
            let comb: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let lhs = inner_product(&comb, &h, &grid).unwrap();
            let rhs = a * inner_product(&f, &h, &grid).unwrap() + b * inner_product(&g, &h, &grid).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
