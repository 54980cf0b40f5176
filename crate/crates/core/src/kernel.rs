//! Isotropic Gaussian spatial kernel matrices.

use crate::data::SpatialDomain;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// `p x p` matrix of `K_h(s_j - s_k)` for a Gaussian kernel scaled by `1/h^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    entries: DMatrix<f64>,
    bandwidth: f64,
    dim: usize,
}

/// Gaussian kernel `K_h(u) = (2 pi)^{-d/2} exp(-|u|^2 / (2 h^2)) / h^d`
/// evaluated at distance `dist`.
pub fn gaussian_kernel(dist: f64, h: f64, dim: usize) -> f64 {
    let norm = (2.0 * PI).powf(-(dim as f64) / 2.0) / h.powi(dim as i32);
    norm * (-dist * dist / (2.0 * h * h)).exp()
}

impl KernelMatrix {
    pub fn build(domain: &SpatialDomain, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Parameter(format!(
                "kernel bandwidth must be positive and finite, got {h}"
            )));
        }
        let p = domain.len();
        let dim = domain.dim();
        let mut entries = DMatrix::zeros(p, p);
        for j in 0..p {
            entries[(j, j)] = gaussian_kernel(0.0, h, dim);
            for k in j + 1..p {
                let v = gaussian_kernel(domain.distance(j, k), h, dim);
                entries[(j, k)] = v;
                entries[(k, j)] = v;
            }
        }
        Ok(Self {
            entries,
            bandwidth: h,
            dim,
        })
    }

    /// The identity stand-in used by the non-kernel statistics.
    pub fn identity(p: usize) -> Self {
        Self {
            entries: DMatrix::identity(p, p),
            bandwidth: 0.0,
            dim: 0,
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Bandwidth in coordinate units; `0` marks the identity stand-in.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    /// `x^T K x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let p = self.size();
        debug_assert_eq!(x.len(), p);
        let mut total = 0.0;
        for j in 0..p {
            let row = self.entries.column(j);
            let mut acc = 0.0;
            for k in 0..p {
                acc += row[k] * x[k];
            }
            total += x[j] * acc;
        }
        total
    }
}
