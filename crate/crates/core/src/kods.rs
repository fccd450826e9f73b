//! Kernelized one-class discriminative subspaces.
//!
//! Dual variables `Y`, `Z` are `K×n` points on the generalized Stiefel manifold
//! of the (jittered) Gram matrix `𝕂`; the effective non-negative duals are
//! `A = Y⊙Y` and `B = Z⊙Z`. The primal frames are recovered as
//! `W1(·) = B·k(X,·)` and `W2(·) = −A·k(X,·)` with intercepts from
//! [`recover_primal`].

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::l2_normalize;
use crate::error::{dim_err, Error, Result};
use crate::kernels::{ensure_pd, gram, KernelSpec};
use crate::linalg::Mat;
use crate::manifold::{generalized_polar, ManifoldSpec, Point, SpdMatrix};
use crate::rng;
use crate::solver::{minimize, Objective, SolveReport, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct DualVars {
    pub y: Mat,
    pub z: Mat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KodsHyper {
    pub k: usize,
    pub eta: f64,
    pub lambda: f64,
    /// `None` uses `1e-10 · trace(𝕂)/n`.
    pub jitter: Option<f64>,
    pub normalize: bool,
}

impl Default for KodsHyper {
    fn default() -> Self {
        Self { k: 3, eta: 0.3, lambda: 1.0, jitter: None, normalize: true }
    }
}

impl KodsHyper {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KodsModel {
    pub duals: DualVars,
    pub kernel: KernelSpec,
    /// Training features as seen by the kernel (normalized if `normalization`).
    pub support: Mat,
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    pub eta_effective: f64,
    pub jitter: f64,
    pub hyper: KodsHyper,
    pub normalization: bool,
}

fn check_shapes(d: &DualVars, kk: &Mat) -> Result<()> {
    let n = kk.nrows();
    if !kk.is_square() || d.y.ncols() != n || d.z.shape() != d.y.shape() {
        return Err(dim_err(format!(
            "duals {}x{} / {}x{} do not match a {}x{} gram matrix",
            d.y.nrows(),
            d.y.ncols(),
            d.z.nrows(),
            d.z.ncols(),
            kk.nrows(),
            kk.ncols()
        )));
    }
    Ok(())
}

fn row_sums(a: &Mat) -> DVector<f64> {
    DVector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()))
}

/// `½‖A1‖² + tr(A𝕂Bᵀ) − η·Σ(A + B) + (λ/2)‖(A − B)1‖²` with `A = Y⊙Y`, `B = Z⊙Z`.
pub fn kods_objective(duals: &DualVars, kk: &Mat, hyper: &KodsHyper) -> Result<f64> {
    check_shapes(duals, kk)?;
    let a = duals.y.component_mul(&duals.y);
    let b = duals.z.component_mul(&duals.z);
    let a1 = row_sums(&a);
    let b1 = row_sums(&b);
    let cross = (&a * kk).dot(&b);
    Ok(0.5 * a1.norm_squared() + cross - hyper.eta * (a1.sum() + b1.sum())
        + 0.5 * hyper.lambda * (&a1 - &b1).norm_squared())
}

/// Exact Euclidean gradient of [`kods_objective`]:
///
/// `∂Y = (2+2λ)·Y⊙(AEₙ) + 2·Y⊙(B𝕂) − 2λ·Y⊙(BEₙ) − 2ηY`
///
/// `∂Z = 2λ·Z⊙(BEₙ) + 2·Z⊙(A𝕂) − 2λ·Z⊙(AEₙ) − 2ηZ`
pub fn kods_egrad(duals: &DualVars, kk: &Mat, hyper: &KodsHyper) -> Result<(Mat, Mat)> {
    check_shapes(duals, kk)?;
    let (y, z) = (&duals.y, &duals.z);
    let a = y.component_mul(y);
    let b = z.component_mul(z);
    let n = kk.nrows();
    // A·Eₙ repeats the row sums across every column
    let spread = |v: &DVector<f64>| Mat::from_fn(v.len(), n, |i, _| v[i]);
    let ae = spread(&row_sums(&a));
    let be = spread(&row_sums(&b));
    let lam = hyper.lambda;
    let gy = (&ae * (2.0 + 2.0 * lam) + &b * kk * 2.0 - &be * (2.0 * lam)).component_mul(y)
        - y * (2.0 * hyper.eta);
    let gz = (&be * (2.0 * lam) + &a * kk * 2.0 - &ae * (2.0 * lam)).component_mul(z)
        - z * (2.0 * hyper.eta);
    Ok((gy, gz))
}

/// `b1 = rowmax(η − B𝕂)`, `b2 = rowmin(−η + A𝕂)`.
pub fn recover_primal(duals: &DualVars, kk: &Mat, eta: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    check_shapes(duals, kk)?;
    let bk = duals.z.component_mul(&duals.z) * kk;
    let ak = duals.y.component_mul(&duals.y) * kk;
    let b1 = DVector::from_iterator(bk.nrows(), bk.row_iter().map(|r| eta - r.min()));
    let b2 = DVector::from_iterator(ak.nrows(), ak.row_iter().map(|r| -eta + r.min()));
    Ok((b1, b2))
}

struct KodsObjective<'a> {
    gram: &'a Mat,
    hyper: &'a KodsHyper,
}

impl Objective for KodsObjective<'_> {
    fn cost(&self, p: &Point) -> f64 {
        let d = DualVars { y: p.factors[0].clone(), z: p.factors[1].clone() };
        kods_objective(&d, self.gram, self.hyper).unwrap_or(f64::NAN)
    }

    fn egrad(&self, p: &Point) -> Vec<Mat> {
        let d = DualVars { y: p.factors[0].clone(), z: p.factors[1].clone() };
        match kods_egrad(&d, self.gram, self.hyper) {
            Ok((gy, gz)) => vec![gy, gz],
            Err(_) => p.factors.iter().map(|f| f.map(|_| f64::NAN)).collect(),
        }
    }
}

/// Relative size of the seeded perturbation added to the constant start so
/// that its `K` rows are linearly independent.
const INIT_PERTURBATION: f64 = 1e-2;

/// Uniform `1/(nK)` start, perturbed and mapped onto the manifold.
pub fn kods_init(spd: &SpdMatrix, k: usize, seed: u64) -> Result<DualVars> {
    let n = spd.dim();
    let c = 1.0 / (n * k) as f64;
    let mut r = rng::seeded(seed);
    let mut start = || -> Result<Mat> {
        let noise = rng::gaussian_matrix(&mut r, k, n);
        let v = Mat::from_element(k, n, c) + noise * (INIT_PERTURBATION * c);
        generalized_polar(&v, spd)
    };
    let y = start()?;
    let z = start()?;
    Ok(DualVars { y, z })
}

pub fn kods_train(
    x: &Mat,
    kernel: &KernelSpec,
    hyper: &KodsHyper,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(KodsModel, SolveReport)> {
    hyper.validate()?;
    kernel.validate()?;
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    if n < hyper.k {
        return Err(dim_err(format!("{n} training points for K = {}", hyper.k)));
    }
    let support = if hyper.normalize { l2_normalize(x) } else { x.clone() };
    let raw = gram(kernel, &support, None)?;
    let (spd, jitter) = ensure_pd(&raw, hyper.jitter.unwrap_or(0.0))?;
    let spd = Arc::new(spd);
    let gs = ManifoldSpec::generalized_stiefel(hyper.k, spd.clone())?;
    let m = ManifoldSpec::product(vec![gs.clone(), gs]);

    let init = kods_init(&spd, hyper.k, seed)?;
    let obj = KodsObjective { gram: spd.matrix(), hyper };
    let (p, report) = minimize(&obj, &m, &Point::new(vec![init.y, init.z]), cfg)?;
    let duals = DualVars { y: p.factors[0].clone(), z: p.factors[1].clone() };
    // intercepts against the kernel used at scoring time, so training points score consistently
    let (b1, b2) = recover_primal(&duals, &raw, hyper.eta)?;
    let model = KodsModel {
        duals,
        kernel: kernel.clone(),
        support,
        b1,
        b2,
        eta_effective: hyper.eta,
        jitter,
        hyper: hyper.clone(),
        normalization: hyper.normalize,
    };
    Ok((model, report))
}

/// Largest violation of `U𝕂Uᵀ = I` over both duals, with the jittered Gram matrix.
pub fn feasibility(model: &KodsModel) -> Result<f64> {
    let raw = gram(&model.kernel, &model.support, None)?;
    let n = raw.nrows();
    let kk = raw + Mat::identity(n, n) * model.jitter;
    let k = model.duals.y.nrows();
    let res = |u: &Mat| (u * &kk * u.transpose() - Mat::identity(k, k)).norm();
    Ok(res(&model.duals.y).max(res(&model.duals.z)))
}

/// Scores for each row of `x`.
pub fn kods_scores_batch(model: &KodsModel, x: &Mat) -> Result<Vec<(f64, f64)>> {
    if x.ncols() != model.support.ncols() {
        return Err(dim_err(format!(
            "samples have {} features, model expects {}",
            x.ncols(),
            model.support.ncols()
        )));
    }
    let xs = if model.normalization { l2_normalize(x) } else { x.clone() };
    let kx = gram(&model.kernel, &model.support, Some(&xs))?;
    let s1 = model.duals.z.component_mul(&model.duals.z) * &kx;
    let s2 = -(model.duals.y.component_mul(&model.duals.y) * &kx);
    Ok((0..xs.nrows())
        .map(|j| {
            let a = (s1.column(j) + &model.b1).min();
            let b = (s2.column(j) + &model.b2).max();
            (a, b)
        })
        .collect())
}

pub fn kods_scores(model: &KodsModel, x: &[f64]) -> Result<(f64, f64)> {
    let xm = Mat::from_row_slice(1, x.len(), x);
    Ok(kods_scores_batch(model, &xm)?[0])
}
