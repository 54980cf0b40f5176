//! Least-squares cubic B-spline regression on an interval.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const DEGREE: usize = 3;

/// Clamped cubic B-spline `sum_k c_k B_k(x)` on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicBSpline {
    knots: Vec<f64>,
    coefficients: Vec<f64>,
}

impl CubicBSpline {
    /// Clamped knot vector with `interior` equally spaced interior knots.
    pub fn clamped_knots(lo: f64, hi: f64, interior: usize) -> Vec<f64> {
        let mut knots = vec![lo; DEGREE + 1];
        let step = (hi - lo) / (interior + 1) as f64;
        knots.extend((1..=interior).map(|k| lo + k as f64 * step));
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
        knots
    }

    pub fn basis_size(interior: usize) -> usize {
        interior + DEGREE + 1
    }

    /// Fit by linear least squares (minimum-norm solution when the design
    /// matrix is rank deficient).
    pub fn fit(x: &[f64], y: &[f64], lo: f64, hi: f64, interior: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} abscissae for {} responses",
                x.len(),
                y.len()
            )));
        }
        if !(hi > lo) {
            return Err(Error::Parameter(format!("empty spline interval [{lo}, {hi}]")));
        }
        let knots = Self::clamped_knots(lo, hi, interior);
        let m = Self::basis_size(interior);
        let mut design = DMatrix::zeros(x.len(), m);
        let mut row = vec![0.0; m];
        for (i, &xi) in x.iter().enumerate() {
            basis_values(&knots, xi, &mut row);
            for (k, &b) in row.iter().enumerate() {
                design[(i, k)] = b;
            }
        }
        let rhs = DVector::from_column_slice(y);
        let svd = design.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let coef = svd
            .solve(&rhs, tol)
            .map_err(|e| Error::Numeric(format!("spline least squares failed: {e}")))?;
        Ok(Self {
            knots,
            coefficients: coef.iter().copied().collect(),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut row = vec![0.0; self.coefficients.len()];
        basis_values(&self.knots, x, &mut row);
        row.iter().zip(&self.coefficients).map(|(b, c)| b * c).sum()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

/// All cubic basis functions at `x` (Cox-de Boor), clamped to the knot span.
fn basis_values(knots: &[f64], x: f64, out: &mut [f64]) {
    let lo = knots[0];
    let hi = knots[knots.len() - 1];
    let x = x.clamp(lo, hi);
    let m = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);

    // locate span: knots[span] <= x < knots[span + 1], with the right end
    // assigned to the last non-degenerate span
    let mut span = DEGREE;
    while span < m - 1 && x >= knots[span + 1] {
        span += 1;
    }

    let mut n = [0.0; DEGREE + 1];
    n[0] = 1.0;
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    for d in 1..=DEGREE {
        left[d] = x - knots[span + 1 - d];
        right[d] = knots[span + d] - x;
        let mut saved = 0.0;
        for r in 0..d {
            let denom = right[r + 1] + left[d - r];
            let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
            n[r] = saved + right[r + 1] * temp;
            saved = left[d - r] * temp;
        }
        n[d] = saved;
    }
    for (k, &v) in n.iter().enumerate() {
        out[span - DEGREE + k] = v;
    }
}
