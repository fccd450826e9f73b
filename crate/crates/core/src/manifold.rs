//! Riemannian manifolds for the frame and dual variables.
//!
//! A [`ManifoldSpec`] describes the search space; points and tangent vectors are
//! lists of dense matrices ("factors"), one or more per atomic manifold, in the
//! order the atoms appear in the `ManifoldSpec` (products are flattened).
//!
//! | kind | factor shapes | constraint |
//! |------|---------------|------------|
//! | `Sphere(d)` | `d×1` | `‖w‖ = 1` |
//! | `Stiefel(d,K)` | `d×K` | `WᵀW = I` |
//! | `NonCompactStiefel(d,K)` | `d×K`, `K×1` | `QᵀQ = I`, `r > 0` |
//! | `Oblique(d,K)` | `d×K` | `diag(WᵀW) = 1` |
//! | `Euclidean(d,K)` | `d×K` | none |
//! | `GeneralizedStiefel(K,n,G)` | `K×n` | `U G Uᵀ = I` |
//!
//! Gradients follow the canonical-metric formulas (`∇ − W∇ᵀW` on Stiefel,
//! `∇G⁻¹ − U∇ᵀU` on the generalized Stiefel manifold); the solver uses the
//! Frobenius product for its bookkeeping, see [`inner`].

use std::sync::Arc;

use nalgebra::Cholesky;
use nalgebra::Dyn;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{frob, inv_sqrt_spd, is_all_zero, qr_positive, sym, Mat};
use crate::rng;

/// Default feasibility tolerance.
pub const TOL_FEAS: f64 = 1e-8;

/// A symmetric positive definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    matrix: Mat,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    pub fn new(matrix: Mat) -> Result<Self> {
        if !matrix.is_square() {
            return Err(dim_err("gram matrix must be square"));
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { matrix, chol })
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `a · G⁻¹` for a row-major block `a` (`K×n`), through the cached factor.
    pub fn solve_right(&self, a: &Mat) -> Mat {
        self.chol.solve(&a.transpose()).transpose()
    }
}

#[derive(Clone, Debug)]
pub enum ManifoldSpec {
    Sphere {
        dim: usize,
    },
    Stiefel {
        rows: usize,
        cols: usize,
    },
    /// Full-rank `d×K` matrices stored as `Q diag(r)`; the `r` factor is
    /// updated multiplicatively (`r ⊙ exp(t / r)`), i.e. additively in `log r`.
    NonCompactStiefel {
        rows: usize,
        cols: usize,
    },
    Oblique {
        rows: usize,
        cols: usize,
    },
    Euclidean {
        rows: usize,
        cols: usize,
    },
    GeneralizedStiefel {
        rows: usize,
        cols: usize,
        gram: Arc<SpdMatrix>,
    },
    Product(Vec<ManifoldSpec>),
}

fn frame_dims(rows: usize, cols: usize) -> Result<()> {
    if cols == 0 || rows < cols {
        return Err(Error::InvalidParameter(format!(
            "frame manifold needs rows >= cols >= 1, got {rows}x{cols}"
        )));
    }
    Ok(())
}

impl ManifoldSpec {
    pub fn sphere(dim: usize) -> Result<Self> {
        frame_dims(dim, 1)?;
        Ok(Self::Sphere { dim })
    }

    pub fn stiefel(rows: usize, cols: usize) -> Result<Self> {
        frame_dims(rows, cols)?;
        Ok(Self::Stiefel { rows, cols })
    }

    pub fn non_compact_stiefel(rows: usize, cols: usize) -> Result<Self> {
        frame_dims(rows, cols)?;
        Ok(Self::NonCompactStiefel { rows, cols })
    }

    pub fn oblique(rows: usize, cols: usize) -> Result<Self> {
        frame_dims(rows, cols)?;
        Ok(Self::Oblique { rows, cols })
    }

    pub fn euclidean(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("empty euclidean factor".into()));
        }
        Ok(Self::Euclidean { rows, cols })
    }

    /// `K×n` matrices `U` with `U G Uᵀ = I_K`.
    pub fn generalized_stiefel(rows: usize, gram: Arc<SpdMatrix>) -> Result<Self> {
        let cols = gram.dim();
        frame_dims(cols, rows)?;
        Ok(Self::GeneralizedStiefel { rows, cols, gram })
    }

    pub fn product(parts: Vec<ManifoldSpec>) -> Self {
        Self::Product(parts)
    }

    fn atoms(&self) -> Vec<&ManifoldSpec> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a ManifoldSpec>) {
        match self {
            Self::Product(parts) => parts.iter().for_each(|p| p.collect_atoms(out)),
            atom => out.push(atom),
        }
    }

    /// Shapes of every factor of a point, in order.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.atoms().into_iter().flat_map(|a| a.atom_shapes()).collect()
    }

    /// Number of scalar coordinates in the ambient space.
    pub fn ambient_dim(&self) -> usize {
        self.shapes().iter().map(|(r, c)| r * c).sum()
    }

    fn atom_shapes(&self) -> Vec<(usize, usize)> {
        match *self {
            Self::Sphere { dim } => vec![(dim, 1)],
            Self::Stiefel { rows, cols }
            | Self::Oblique { rows, cols }
            | Self::Euclidean { rows, cols }
            | Self::GeneralizedStiefel { rows, cols, .. } => vec![(rows, cols)],
            Self::NonCompactStiefel { rows, cols } => vec![(rows, cols), (cols, 1)],
            Self::Product(_) => unreachable!("products are flattened"),
        }
    }

    fn check(&self, what: &str, factors: &[Mat]) -> Result<()> {
        let shapes = self.shapes();
        if shapes.len() != factors.len() {
            return Err(dim_err(format!(
                "{what}: expected {} factors, got {}",
                shapes.len(),
                factors.len()
            )));
        }
        for (i, (&(r, c), f)) in shapes.iter().zip(factors).enumerate() {
            if f.shape() != (r, c) {
                return Err(dim_err(format!(
                    "{what}: factor {i} should be {r}x{c}, got {}x{}",
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        Ok(())
    }

    /// Walk atoms alongside their factor slices.
    fn zip_atoms<'a, T>(
        &'a self,
        slices: &[&'a [Mat]],
        mut f: impl FnMut(&'a ManifoldSpec, Vec<&'a [Mat]>) -> Result<T>,
    ) -> Result<Vec<T>> {
        let mut offset = 0;
        let mut out = Vec::new();
        for atom in self.atoms() {
            let n = atom.atom_shapes().len();
            let parts = slices.iter().map(|s| &s[offset..offset + n]).collect();
            out.push(f(atom, parts)?);
            offset += n;
        }
        Ok(out)
    }
}

/// A point on a manifold: one dense matrix per factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub factors: Vec<Mat>,
}

/// A tangent (or ambient) vector with the same factor layout as [`Point`].
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub factors: Vec<Mat>,
}

impl Point {
    pub fn new(factors: Vec<Mat>) -> Self {
        Self { factors }
    }
}

impl TangentVector {
    pub fn new(factors: Vec<Mat>) -> Self {
        Self { factors }
    }

    pub fn zeros_like(p: &Point) -> Self {
        Self {
            factors: p.factors.iter().map(|f| Mat::zeros(f.nrows(), f.ncols())).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            factors: self.factors.iter().map(|f| f * s).collect(),
        }
    }

    /// `self + s · other`
    pub fn add_scaled(&self, s: f64, other: &TangentVector) -> Self {
        Self {
            factors: self
                .factors
                .iter()
                .zip(&other.factors)
                .map(|(a, b)| a + b * s)
                .collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.factors.iter().map(|f| f.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.factors.iter().all(crate::linalg::all_finite)
    }
}

/// Frobenius inner product summed over factors.
pub fn frob_factors(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| frob(x, y)).sum()
}

pub fn project_tangent(m: &ManifoldSpec, p: &Point, a: &[Mat]) -> Result<TangentVector> {
    m.check("point", &p.factors)?;
    m.check("ambient vector", a)?;
    let parts = m.zip_atoms(&[&p.factors, a], |atom, s| Ok(atom_project(atom, s[0], s[1])))?;
    Ok(TangentVector::new(parts.into_iter().flatten().collect()))
}

fn atom_project(atom: &ManifoldSpec, p: &[Mat], a: &[Mat]) -> Vec<Mat> {
    match atom {
        ManifoldSpec::Sphere { .. } => {
            let (p, a) = (&p[0], &a[0]);
            vec![a - p * frob(p, a)]
        }
        ManifoldSpec::Stiefel { .. } => vec![stiefel_project(&p[0], &a[0])],
        ManifoldSpec::NonCompactStiefel { .. } => {
            vec![stiefel_project(&p[0], &a[0]), a[1].clone()]
        }
        ManifoldSpec::Oblique { .. } => {
            let (p, a) = (&p[0], &a[0]);
            let mut out = a.clone();
            for j in 0..p.ncols() {
                let d = p.column(j).dot(&a.column(j));
                out.column_mut(j).axpy(-d, &p.column(j), 1.0);
            }
            vec![out]
        }
        ManifoldSpec::Euclidean { .. } => vec![a[0].clone()],
        ManifoldSpec::GeneralizedStiefel { gram, .. } => {
            let (u, a) = (&p[0], &a[0]);
            let s = sym(&(a * gram.matrix() * u.transpose()));
            vec![a - s * u]
        }
        ManifoldSpec::Product(_) => unreachable!(),
    }
}

fn stiefel_project(p: &Mat, a: &Mat) -> Mat {
    a - p * sym(&(p.transpose() * a))
}

/// Map a Euclidean gradient to the Riemannian gradient used as the descent direction.
pub fn egrad_to_rgrad(m: &ManifoldSpec, p: &Point, g: &[Mat]) -> Result<TangentVector> {
    m.check("point", &p.factors)?;
    m.check("gradient", g)?;
    let parts = m.zip_atoms(&[&p.factors, g], |atom, s| Ok(atom_rgrad(atom, s[0], s[1])))?;
    Ok(TangentVector::new(parts.into_iter().flatten().collect()))
}

fn atom_rgrad(atom: &ManifoldSpec, p: &[Mat], g: &[Mat]) -> Vec<Mat> {
    match atom {
        ManifoldSpec::Sphere { .. } | ManifoldSpec::Stiefel { .. } => {
            let (w, g) = (&p[0], &g[0]);
            vec![g - w * g.transpose() * w]
        }
        ManifoldSpec::NonCompactStiefel { .. } => {
            let (q, g0) = (&p[0], &g[0]);
            let r = &p[1];
            vec![g0 - q * g0.transpose() * q, g[1].component_mul(r).component_mul(r)]
        }
        ManifoldSpec::Oblique { .. } | ManifoldSpec::Euclidean { .. } => {
            atom_project(atom, p, g)
        }
        ManifoldSpec::GeneralizedStiefel { gram, .. } => {
            let (u, g) = (&p[0], &g[0]);
            vec![gram.solve_right(g) - u * g.transpose() * u]
        }
        ManifoldSpec::Product(_) => unreachable!(),
    }
}

pub fn retract(m: &ManifoldSpec, p: &Point, t: &TangentVector) -> Result<Point> {
    m.check("point", &p.factors)?;
    m.check("tangent", &t.factors)?;
    let parts = m.zip_atoms(&[&p.factors, &t.factors], |atom, s| atom_retract(atom, s[0], s[1]))?;
    Ok(Point::new(parts.into_iter().flatten().collect()))
}

fn atom_retract(atom: &ManifoldSpec, p: &[Mat], t: &[Mat]) -> Result<Vec<Mat>> {
    if t.iter().all(is_all_zero) {
        return Ok(p.to_vec());
    }
    Ok(match atom {
        ManifoldSpec::Sphere { .. } => {
            let v = &p[0] + &t[0];
            let n = v.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::DegenerateStep);
            }
            vec![v / n]
        }
        ManifoldSpec::Stiefel { .. } => vec![qr_positive(&(&p[0] + &t[0]))?.0],
        ManifoldSpec::NonCompactStiefel { .. } => {
            let q = if is_all_zero(&t[0]) {
                p[0].clone()
            } else {
                qr_positive(&(&p[0] + &t[0]))?.0
            };
            let r = p[1].zip_map(&t[1], |r, t| r * (t / r).exp());
            if r.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::DegenerateStep);
            }
            vec![q, r]
        }
        ManifoldSpec::Oblique { .. } => {
            let mut v = &p[0] + &t[0];
            for mut col in v.column_iter_mut() {
                let n = col.norm();
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::DegenerateStep);
                }
                col /= n;
            }
            vec![v]
        }
        ManifoldSpec::Euclidean { .. } => vec![&p[0] + &t[0]],
        ManifoldSpec::GeneralizedStiefel { gram, .. } => {
            vec![generalized_polar(&(&p[0] + &t[0]), gram)?]
        }
        ManifoldSpec::Product(_) => unreachable!(),
    })
}

/// `(V G Vᵀ)^{-1/2} V`, the closest point on the generalized Stiefel manifold
/// in the polar sense. A second pass removes the residual left by roundoff
/// when `G` is poorly conditioned.
pub fn generalized_polar(v: &Mat, gram: &SpdMatrix) -> Result<Mat> {
    let mut u = v.clone();
    for _ in 0..2 {
        let m = &u * gram.matrix() * u.transpose();
        u = inv_sqrt_spd(&m)? * u;
    }
    if !crate::linalg::all_finite(&u) {
        return Err(Error::DegenerateStep);
    }
    Ok(u)
}

/// Projection-based vector transport.
pub fn transport(
    m: &ManifoldSpec,
    _from: &Point,
    to: &Point,
    t: &TangentVector,
) -> Result<TangentVector> {
    project_tangent(m, to, &t.factors)
}

/// Frobenius inner product of two tangent vectors (summed over factors).
pub fn inner(m: &ManifoldSpec, p: &Point, t1: &TangentVector, t2: &TangentVector) -> Result<f64> {
    m.check("point", &p.factors)?;
    m.check("tangent", &t1.factors)?;
    m.check("tangent", &t2.factors)?;
    Ok(frob_factors(&t1.factors, &t2.factors))
}

pub fn random_point(m: &ManifoldSpec, seed: u64) -> Result<Point> {
    let mut rng = rng::seeded(seed);
    let parts = m.zip_atoms(&[], |atom, _| atom_random(atom, &mut rng))?;
    Ok(Point::new(parts.into_iter().flatten().collect()))
}

/// A seeded Gaussian ambient vector with the factor layout of `m`.
pub fn random_ambient(m: &ManifoldSpec, seed: u64) -> Vec<Mat> {
    let mut rng = rng::seeded(seed);
    m.shapes()
        .into_iter()
        .map(|(r, c)| rng::gaussian_matrix(&mut rng, r, c))
        .collect()
}

fn atom_random(atom: &ManifoldSpec, rng: &mut rng::SeededRng) -> Result<Vec<Mat>> {
    Ok(match atom {
        ManifoldSpec::Sphere { dim } => {
            let v = rng::gaussian_matrix(rng, *dim, 1);
            let n = v.norm();
            vec![v / n]
        }
        ManifoldSpec::Stiefel { rows, cols } => {
            vec![qr_positive(&rng::gaussian_matrix(rng, *rows, *cols))?.0]
        }
        ManifoldSpec::NonCompactStiefel { rows, cols } => {
            let q = qr_positive(&rng::gaussian_matrix(rng, *rows, *cols))?.0;
            let r = rng::gaussian_matrix(rng, *cols, 1).map(|v| (0.5 * v).exp());
            vec![q, r]
        }
        ManifoldSpec::Oblique { rows, cols } => {
            let mut v = rng::gaussian_matrix(rng, *rows, *cols);
            for mut c in v.column_iter_mut() {
                let n = c.norm();
                c /= n;
            }
            vec![v]
        }
        ManifoldSpec::Euclidean { rows, cols } => vec![rng::gaussian_matrix(rng, *rows, *cols)],
        ManifoldSpec::GeneralizedStiefel { rows, cols, gram } => {
            vec![generalized_polar(&rng::gaussian_matrix(rng, *rows, *cols), gram)?]
        }
        ManifoldSpec::Product(_) => unreachable!(),
    })
}

/// Largest constraint violation of `p` (Frobenius norm per factor).
pub fn feasibility_residual(m: &ManifoldSpec, p: &Point) -> Result<f64> {
    m.check("point", &p.factors)?;
    let parts = m.zip_atoms(&[&p.factors], |atom, s| Ok(atom_residual(atom, s[0])))?;
    Ok(parts.into_iter().fold(0.0, f64::max))
}

fn atom_residual(atom: &ManifoldSpec, p: &[Mat]) -> f64 {
    match atom {
        ManifoldSpec::Sphere { .. } => (p[0].norm() - 1.0).abs(),
        ManifoldSpec::Stiefel { cols, .. } => {
            (p[0].transpose() * &p[0] - Mat::identity(*cols, *cols)).norm()
        }
        ManifoldSpec::NonCompactStiefel { cols, .. } => {
            let orth = (p[0].transpose() * &p[0] - Mat::identity(*cols, *cols)).norm();
            if p[1].iter().all(|v| *v > 0.0 && v.is_finite()) {
                orth
            } else {
                f64::INFINITY
            }
        }
        ManifoldSpec::Oblique { .. } => p[0]
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max),
        ManifoldSpec::Euclidean { .. } => {
            if crate::linalg::all_finite(&p[0]) {
                0.0
            } else {
                f64::INFINITY
            }
        }
        ManifoldSpec::GeneralizedStiefel { rows, gram, .. } => {
            (&p[0] * gram.matrix() * p[0].transpose() - Mat::identity(*rows, *rows)).norm()
        }
        ManifoldSpec::Product(_) => unreachable!(),
    }
}

/// Largest violation of the tangent-space condition for `t` at `p`.
pub fn tangency_residual(m: &ManifoldSpec, p: &Point, t: &TangentVector) -> Result<f64> {
    m.check("point", &p.factors)?;
    m.check("tangent", &t.factors)?;
    let parts = m.zip_atoms(&[&p.factors, &t.factors], |atom, s| {
        let (p, t) = (s[0], s[1]);
        Ok(match atom {
            ManifoldSpec::Sphere { .. } => frob(&p[0], &t[0]).abs(),
            ManifoldSpec::Stiefel { .. } | ManifoldSpec::NonCompactStiefel { .. } => {
                let a = p[0].transpose() * &t[0];
                (&a + a.transpose()).norm()
            }
            ManifoldSpec::Oblique { .. } => p[0]
                .column_iter()
                .zip(t[0].column_iter())
                .map(|(a, b)| a.dot(&b).abs())
                .fold(0.0, f64::max),
            ManifoldSpec::Euclidean { .. } => 0.0,
            ManifoldSpec::GeneralizedStiefel { gram, .. } => {
                let a = &t[0] * gram.matrix() * p[0].transpose();
                (&a + a.transpose()).norm()
            }
            ManifoldSpec::Product(_) => unreachable!(),
        })
    })?;
    Ok(parts.into_iter().fold(0.0, f64::max))
}
