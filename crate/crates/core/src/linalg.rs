//! Small dense helpers shared by the manifold, model and kernel code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Frobenius inner product.
pub fn frob(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

pub fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn is_all_zero(a: &Mat) -> bool {
    a.iter().all(|&v| v == 0.0)
}

pub fn all_finite(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Thin QR with the triangular factor's diagonal made strictly positive.
///
/// Fails with [`Error::DegenerateStep`] when `m` is numerically rank deficient.
pub fn qr_positive(m: &Mat) -> Result<(Mat, Mat)> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::DegenerateStep);
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let scale = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for j in 0..cols {
        let d = r[(j, j)];
        if !d.is_finite() || d.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateStep);
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok((q, r))
}

/// Inverse square root of a symmetric positive definite matrix via its eigendecomposition.
pub fn inv_sqrt_spd(m: &Mat) -> Result<Mat> {
    let eig = SymmetricEigen::new(sym(m));
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if eig.eigenvalues.iter().any(|&l| !(l > 1e-14 * max) || !l.is_finite()) {
        return Err(Error::DegenerateStep);
    }
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()),
    );
    let v = &eig.eigenvectors;
    Ok(v * Mat::from_diagonal(&d) * v.transpose())
}

/// Top-`k` right singular vectors of `m` as the columns of a `cols × k` matrix,
/// ordered by decreasing singular value. Each column's first non-negligible
/// entry is made non-negative so the result is unique.
pub fn top_right_singular_vectors(m: &Mat, k: usize) -> Result<Mat> {
    let (rows, cols) = m.shape();
    if k > cols || k > rows {
        return Err(Error::Dimension(format!(
            "cannot take {k} singular vectors of a {rows}x{cols} matrix"
        )));
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.ok_or(Error::DegenerateStep)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Mat::zeros(cols, k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let mut col: DVector<f64> = v_t.row(idx).transpose();
        fix_sign(&mut col);
        out.set_column(j, &col);
    }
    Ok(out)
}

pub fn fix_sign(v: &mut DVector<f64>) {
    let norm = v.norm();
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-10 * norm) {
        if first < 0.0 {
            v.neg_mut();
        }
    }
}
