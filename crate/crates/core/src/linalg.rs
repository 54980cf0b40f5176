//! Symmetric eigendecomposition and PSD square roots.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 10_000;

/// Eigenpairs sorted by descending eigenvalue; eigenvectors are the columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("matrix has non-finite entries".into()));
    }
    let norm = frobenius(a);
    let asym = frobenius(&(a - a.transpose()));
    if asym > SYMMETRY_TOL * norm.max(f64::MIN_POSITIVE) {
        return Err(Error::Validation(format!(
            "matrix is not symmetric (asymmetry {asym:e} relative to norm {norm:e})"
        )));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Symmetric PSD square root. Negative eigenvalues within `1e-8 * lambda_max`
/// are clamped to zero; anything more negative is an error.
pub fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let max = eig.values[0];
    let min = eig.values[n - 1];
    if min < -PSD_TOL * max.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(rebuild(&eig, |v| v.max(0.0).sqrt()))
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clamped).
pub fn psd_project(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigen(a)?;
    Ok(rebuild(&eig, |v| v.max(0.0)))
}

fn rebuild(eig: &SymEigen, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mut scaled = eig.vectors.clone();
    for (c, &v) in eig.values.iter().enumerate() {
        let s = f(v);
        scaled.column_mut(c).scale_mut(s);
    }
    let out = &scaled * eig.vectors.transpose();
    (&out + out.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eigen(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn two_by_two_by_hand() {
        let e = sym_eigen(&mat(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vectors.column(0);
        assert!((v0[0].abs() - s).abs() < 1e-12 && (v0[0] - v0[1]).abs() < 1e-12);
        let v1 = e.vectors.column(1);
        assert!((v1[0].abs() - s).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
    }

    #[test]
    fn diagonal_sorted_descending() {
        let e = sym_eigen(&mat(&[&[4.0, 0.0], &[0.0, 9.0]])).unwrap();
        assert_eq!(e.values.as_slice(), &[9.0, 4.0]);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(matches!(
            sym_eigen(&mat(&[&[1.0, 2.0], &[0.0, 1.0]])),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn sqrt_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!((psd_sqrt(&id).unwrap() - &id).amax() < 1e-14);
        let s = psd_sqrt(&mat(&[&[4.0, 0.0], &[0.0, 9.0]])).unwrap();
        assert!((s - mat(&[&[2.0, 0.0], &[0.0, 3.0]])).amax() < 1e-12);
        let a = mat(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let s = psd_sqrt(&a).unwrap();
        assert!((&s * &s - &a).amax() < 1e-6 * frobenius(&a));
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let a = mat(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(psd_sqrt(&a), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn sqrt_clamps_tiny_negative() {
        // rank-one plus rounding noise
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut a = &v * v.transpose();
        a[(0, 0)] -= 1e-13;
        let s = psd_sqrt(&a).unwrap();
        assert!((&s * &s - &a).amax() < 1e-6 * frobenius(&a));
    }

    fn symmetric_from(vals: &[f64], n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_column_slice(n, n, vals);
        (&m + m.transpose()) * 0.5
    }

    proptest! {
        #[test]
        fn eigen_reconstructs(vals in proptest::collection::vec(-5.0f64..5.0, 25)) {
            let a = symmetric_from(&vals, 5);
            let e = sym_eigen(&a).unwrap();
            let norm = frobenius(&a).max(1e-300);
            let rec = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
            prop_assert!(frobenius(&(rec - &a)) < 1e-8 * norm);
            let gram = e.vectors.transpose() * &e.vectors;
            prop_assert!((gram - DMatrix::<f64>::identity(5, 5)).amax() < 1e-8);
            prop_assert!((a.trace() - e.values.sum()).abs() < 1e-8 * norm);
            prop_assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn sqrt_round_trip(n in 1usize..50, seed in proptest::collection::vec(-1.0f64..1.0, 2500)) {
            let b = DMatrix::from_column_slice(n, n, &seed[..n * n]);
            let a = &b * b.transpose();
            let s = psd_sqrt(&a).unwrap();
            let s2 = &s * &s;
            let back = psd_sqrt(&s2).unwrap();
            let norm = frobenius(&a).max(1e-300);
            prop_assert!(frobenius(&(&s2 - &a)) < 1e-6 * norm);
            prop_assert!(frobenius(&(&back * &back - &a)) < 1e-5 * norm);
        }
    }
}
