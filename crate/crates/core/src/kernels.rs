//! Kernel functions and Gram matrices.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::Mat;
use crate::manifold::SpdMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    /// `exp(−‖x−y‖² / 2σ²)`
    Rbf { sigma: f64 },
    /// `(x·y + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// Additive chi-square, `Σ 2xᵢyᵢ/(xᵢ+yᵢ)` with `0/0 = 0`.
    ChiSquare,
    HistogramIntersection,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("rbf sigma must be positive, got {sigma}")),
            ),
            KernelSpec::Polynomial { degree, offset } if degree < 1 || !(offset >= 0.0) => {
                Err(Error::InvalidParameter(format!(
                    "polynomial kernel needs degree >= 1 and offset >= 0, got {degree}, {offset}"
                )))
            }
            _ => Ok(()),
        }
    }

    fn needs_nonnegative(&self) -> bool {
        matches!(self, KernelSpec::ChiSquare | KernelSpec::HistogramIntersection)
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(dim_err(format!("kernel inputs of length {} and {}", x.len(), y.len())));
    }
    if spec.needs_nonnegative() {
        check_nonnegative(x)?;
        check_nonnegative(y)?;
    }
    Ok(eval_unchecked(spec, x, y))
}

fn check_nonnegative(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("histogram kernels need non-negative features".into()));
    }
    Ok(())
}

fn eval_unchecked(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    match *spec {
        KernelSpec::Linear => dot(x, y),
        KernelSpec::Rbf { sigma } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
        KernelSpec::Polynomial { degree, offset } => (dot(x, y) + offset).powi(degree as i32),
        KernelSpec::ChiSquare => x
            .iter()
            .zip(y)
            .map(|(a, b)| if a + b > 0.0 { 2.0 * a * b / (a + b) } else { 0.0 })
            .sum(),
        KernelSpec::HistogramIntersection => x.iter().zip(y).map(|(a, b)| a.min(*b)).sum(),
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn rows_of(x: &Mat) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Kernel matrix between the rows of `x` and the rows of `y` (or `x` itself).
pub fn gram(spec: &KernelSpec, x: &Mat, y: Option<&Mat>) -> Result<Mat> {
    spec.validate()?;
    let xr = rows_of(x);
    if spec.needs_nonnegative() {
        xr.iter().try_for_each(|r| check_nonnegative(r))?;
    }
    match y {
        None => {
            let n = xr.len();
            let mut k = Mat::zeros(n, n);
            for i in 0..n {
                for j in i..n {
                    let v = eval_unchecked(spec, &xr[i], &xr[j]);
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                }
            }
            Ok(k)
        }
        Some(y) => {
            if y.ncols() != x.ncols() {
                return Err(dim_err(format!(
                    "gram inputs have {} and {} columns",
                    x.ncols(),
                    y.ncols()
                )));
            }
            let yr = rows_of(y);
            if spec.needs_nonnegative() {
                yr.iter().try_for_each(|r| check_nonnegative(r))?;
            }
            Ok(Mat::from_fn(xr.len(), yr.len(), |i, j| {
                eval_unchecked(spec, &xr[i], &yr[j])
            }))
        }
    }
}

/// Smallest Cholesky pivot accepted, relative to the mean diagonal.
const PIVOT_RTOL: f64 = 1e-13;

/// Default jitter for a Gram matrix: `1e-10 · trace / n`.
pub fn default_jitter(k: &Mat) -> f64 {
    1e-10 * mean_diag(k)
}

fn mean_diag(k: &Mat) -> f64 {
    k.trace() / k.nrows().max(1) as f64
}

/// Adds the smallest `ε ∈ {0, jitter, 10·jitter, …}` to the diagonal that lets a
/// Cholesky factorization go through with pivots above `1e-13 · trace/n`.
/// Returns the factored matrix and the `ε` applied.
pub fn ensure_pd(k: &Mat, jitter: f64) -> Result<(SpdMatrix, f64)> {
    if !k.is_square() || k.nrows() == 0 {
        return Err(dim_err("ensure_pd needs a non-empty square matrix"));
    }
    let asym = (k - k.transpose()).amax();
    if asym > 1e-10 * k.amax().max(1.0) {
        return Err(Error::Domain(format!("matrix is not symmetric (max |K − Kᵀ| = {asym:e})")));
    }
    let scale = mean_diag(k);
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NotPositiveDefinite);
    }
    let limit = 1e-2 * scale;
    let jitter = if jitter > 0.0 { jitter } else { default_jitter(k) };
    let n = k.nrows();

    let mut eps = 0.0;
    loop {
        let shifted = k + Mat::identity(n, n) * eps;
        if let Some(ch) = shifted.clone().cholesky() {
            let min_pivot = ch.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v * v));
            if min_pivot > PIVOT_RTOL * scale {
                return Ok((SpdMatrix::new(shifted)?, eps));
            }
        }
        eps = if eps == 0.0 { jitter } else { eps * 10.0 };
        if eps > limit {
            return Err(Error::Conditioning { jitter: eps, limit });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn scalar_examples() {
        let x = [0.6, 0.8];
        assert!((kernel_eval(&KernelSpec::Linear, &x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(kernel_eval(&KernelSpec::Rbf { sigma: 0.37 }, &x, &x).unwrap(), 1.0);
        let p = KernelSpec::Polynomial { degree: 3, offset: 1.0 };
        assert_eq!(kernel_eval(&p, &[0.5, 0.0], &[1.0, 3.0]).unwrap(), 3.375);
        let hi = kernel_eval(&KernelSpec::HistogramIntersection, &[0.2, 0.8], &[0.5, 0.5]).unwrap();
        assert!((hi - 0.7).abs() < 1e-15);
        let chi = kernel_eval(&KernelSpec::ChiSquare, &[0.0, 1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(chi, 1.0);
    }

    #[test]
    fn histogram_kernels_reject_negative_input() {
        let r = kernel_eval(&KernelSpec::ChiSquare, &[-0.1, 1.0], &[0.5, 0.5]);
        assert!(matches!(r, Err(Error::Domain(_))));
        let x = Mat::from_row_slice(1, 2, &[0.1, -1.0]);
        assert!(gram(&KernelSpec::HistogramIntersection, &x, None).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(KernelSpec::Rbf { sigma: 0.0 }.validate().is_err());
        assert!(KernelSpec::Polynomial { degree: 0, offset: 1.0 }.validate().is_err());
    }

    #[test]
    fn gram_matches_scalar_loop() {
        let mut r = rng::seeded(12);
        let x = rng::gaussian_matrix(&mut r, 3, 4);
        let spec = KernelSpec::Rbf { sigma: 0.1 };
        let k = gram(&spec, &x, None).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let xi: Vec<f64> = x.row(i).iter().copied().collect();
                let xj: Vec<f64> = x.row(j).iter().copied().collect();
                let d2: f64 = xi.iter().zip(&xj).map(|(a, b)| (a - b).powi(2)).sum();
                assert!((k[(i, j)] - (-d2 / 0.02).exp()).abs() <= 1e-14);
                assert_eq!(k[(i, j)], kernel_eval(&spec, &xi, &xj).unwrap());
            }
        }
    }

    #[test]
    fn linear_gram_of_orthonormal_rows_is_identity() {
        let x = Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(gram(&KernelSpec::Linear, &x, None).unwrap(), Mat::identity(2, 2));
        let one = Mat::from_row_slice(1, 2, &[0.3, 0.4]);
        let k = gram(&KernelSpec::Linear, &one, None).unwrap();
        assert_eq!(k.shape(), (1, 1));
    }

    #[test]
    fn ensure_pd_cases() {
        let good = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (spd, eps) = ensure_pd(&good, 0.0).unwrap();
        assert_eq!(eps, 0.0);
        assert_eq!(spd.matrix(), &good);

        let v = Mat::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let (_, eps) = ensure_pd(&(&v * v.transpose()), 0.0).unwrap();
        assert!(eps > 0.0);

        let mut r = rng::seeded(2);
        let mut x = rng::gaussian_matrix(&mut r, 5, 3);
        let row = x.row(0).into_owned();
        x.row_mut(4).copy_from(&row);
        let (spd, _) = ensure_pd(&gram(&KernelSpec::Rbf { sigma: 1.0 }, &x, None).unwrap(), 0.0).unwrap();
        let eig = nalgebra::SymmetricEigen::new(spd.matrix().clone());
        assert!(eig.eigenvalues.min() > 0.0);
    }

    #[test]
    fn hopeless_matrix_is_a_conditioning_error() {
        let k = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(ensure_pd(&k, 0.0), Err(Error::NotPositiveDefinite)));
        let k = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        assert!(matches!(ensure_pd(&k, 0.0), Err(Error::Conditioning { .. })));
    }
}
