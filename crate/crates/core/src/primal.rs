//! BODS and the GODS family: objectives, gradients, initialization, training, scoring.
//!
//! Scores of a sample `x` under frames `(W1, b1)` and `(W2, b2)`:
//! `s1 = min(W1ᵀx + b1)`, `s2 = max(W2ᵀx + b2)`. A training point is well placed
//! when `s1 ≥ η` and `s2 ≤ −η`; GODS additionally pulls both score vectors
//! towards zero so the data sit between the two frames.

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::l2_normalize;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{top_right_singular_vectors, Mat};
use crate::manifold::{random_point, ManifoldSpec, Point};
use crate::solver::{minimize, Objective, SolveReport, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Bods,
    Gods,
    GodsN,
    GodsO,
    GodsE,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Bods, Variant::Gods, Variant::GodsN, Variant::GodsO, Variant::GodsE];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bods => "bods",
            Variant::Gods => "gods",
            Variant::GodsN => "gods_n",
            Variant::GodsO => "gods_o",
            Variant::GodsE => "gods_e",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GodsHyper {
    pub variant: Variant,
    pub k: usize,
    pub eta: f64,
    pub nu: f64,
    pub lambda: f64,
    pub p_norm: f64,
    pub normalize: bool,
}

impl Default for GodsHyper {
    fn default() -> Self {
        Self { variant: Variant::Gods, k: 3, eta: 0.3, nu: 1.0, lambda: 1.0, p_norm: 1.0, normalize: true }
    }
}

impl GodsHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.nu > 0.0) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.variant == Variant::Bods && self.k != 1 {
            return bad(format!("BODS uses a single hyperplane per frame, got K = {}", self.k));
        }
        if !(self.p_norm >= 1.0) {
            return bad(format!("p_norm must be >= 1, got {}", self.p_norm));
        }
        Ok(())
    }
}

/// The two complementary frames. For GODS_N `w1`, `w2` hold the orthonormal
/// factors `Q` and `r1`, `r2` the positive column scales, so `W = Q diag(r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePair {
    pub w1: Mat,
    pub w2: Mat,
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    pub r1: Option<DVector<f64>>,
    pub r2: Option<DVector<f64>>,
}

impl FramePair {
    pub fn dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn k(&self) -> usize {
        self.w1.ncols()
    }

    /// `W1` and `W2` with any column scaling applied.
    pub fn effective(&self) -> (Mat, Mat) {
        let scale = |w: &Mat, r: &Option<DVector<f64>>| match r {
            Some(r) => w * Mat::from_diagonal(r),
            None => w.clone(),
        };
        (scale(&self.w1, &self.r1), scale(&self.w2, &self.r2))
    }

    fn check(&self, x: &Mat) -> Result<()> {
        let (d, k) = self.w1.shape();
        if self.w2.shape() != (d, k) || self.b1.len() != k || self.b2.len() != k {
            return Err(dim_err("frame pair has inconsistent shapes"));
        }
        if x.ncols() != d {
            return Err(dim_err(format!("data has {} features, frames expect {d}", x.ncols())));
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyData);
        }
        Ok(())
    }
}

/// Euclidean gradient of a primal objective, laid out like [`FramePair`].
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGrad {
    pub w1: Mat,
    pub w2: Mat,
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    pub r1: Option<DVector<f64>>,
    pub r2: Option<DVector<f64>>,
}

fn scores(x: &Mat, w: &Mat, b: &DVector<f64>) -> Mat {
    let mut s = x * w;
    for mut row in s.row_iter_mut() {
        row += b.transpose();
    }
    s
}

fn hinge(v: f64) -> f64 {
    v.max(0.0)
}

fn argmin_row(s: &Mat, i: usize) -> usize {
    let row = s.row(i);
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] < row[best] {
            best = j;
        }
    }
    best
}

fn argmax_row(s: &Mat, i: usize) -> usize {
    let row = s.row(i);
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

pub fn bods_objective(frames: &FramePair, x: &Mat, hyper: &GodsHyper) -> Result<f64> {
    frames.check(x)?;
    if frames.k() != 1 {
        return Err(Error::InvalidParameter("BODS needs K = 1".into()));
    }
    let n = x.nrows() as f64;
    let (w1, w2) = (frames.w1.column(0), frames.w2.column(0));
    let (b1, b2) = (frames.b1[0], frames.b2[0]);
    let db = b1 - b2;
    let alpha = db * db - 2.0 * db;
    let mut pen = 0.0;
    for xi in x.row_iter() {
        let h1 = hinge(hyper.eta - (xi.dot(&w1.transpose()) + b1));
        let h2 = hinge(hyper.eta + xi.dot(&w2.transpose()) + b2);
        pen += h1 * h1 + h2 * h2;
    }
    Ok(0.5 * alpha - w1.dot(&w2) + hyper.nu / (2.0 * n) * pen)
}

fn bods_egrad(frames: &FramePair, x: &Mat, hyper: &GodsHyper) -> Result<FrameGrad> {
    frames.check(x)?;
    let n = x.nrows() as f64;
    let (w1, w2) = (frames.w1.column(0).into_owned(), frames.w2.column(0).into_owned());
    let (b1, b2) = (frames.b1[0], frames.b2[0]);
    let c = hyper.nu / n;
    let mut gw1 = -&w2;
    let mut gw2 = -&w1;
    let mut gb1 = b1 - b2 - 1.0;
    let mut gb2 = -(b1 - b2 - 1.0);
    for xi in x.row_iter() {
        let xt = xi.transpose();
        let h1 = hinge(hyper.eta - (xt.dot(&w1) + b1));
        let h2 = hinge(hyper.eta + xt.dot(&w2) + b2);
        gw1.axpy(-c * h1, &xt, 1.0);
        gw2.axpy(c * h2, &xt, 1.0);
        gb1 -= c * h1;
        gb2 += c * h2;
    }
    Ok(FrameGrad {
        w1: Mat::from_column_slice(w1.len(), 1, gw1.as_slice()),
        w2: Mat::from_column_slice(w2.len(), 1, gw2.as_slice()),
        b1: DVector::from_element(1, gb1),
        b2: DVector::from_element(1, gb2),
        r1: None,
        r2: None,
    })
}

fn lp_norm(r: &DVector<f64>, p: f64) -> f64 {
    if p == 1.0 {
        r.iter().map(|v| v.abs()).sum()
    } else {
        r.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn lp_norm_grad(r: &DVector<f64>, p: f64) -> DVector<f64> {
    if p == 1.0 {
        return r.map(|v| v.signum());
    }
    let nrm = lp_norm(r, p);
    if nrm == 0.0 {
        return DVector::zeros(r.len());
    }
    r.map(|v| v.signum() * (v.abs() / nrm).powf(p - 1.0))
}

/// The GODS family objective. `Bods` is scored with the plain GODS terms; use
/// [`bods_objective`] for the BODS formulation.
pub fn gods_objective(frames: &FramePair, x: &Mat, hyper: &GodsHyper) -> Result<f64> {
    frames.check(x)?;
    let n = x.nrows() as f64;
    let (w1, w2) = frames.effective();
    let s1 = scores(x, &w1, &frames.b1);
    let s2 = scores(x, &w2, &frames.b2);
    let mut pen = 0.0;
    for i in 0..x.nrows() {
        let h1 = hinge(hyper.eta - s1.row(i).min());
        let h2 = hinge(hyper.eta + s2.row(i).max());
        pen += h1 * h1 + h2 * h2;
    }
    let mut f = (s1.norm_squared() + s2.norm_squared()) / (2.0 * n) + hyper.nu / (2.0 * n) * pen;
    f += variant_penalty(frames, &w1, &w2, hyper);
    Ok(f)
}

fn variant_penalty(frames: &FramePair, w1: &Mat, w2: &Mat, hyper: &GodsHyper) -> f64 {
    match hyper.variant {
        Variant::GodsN => {
            let r1 = frames.r1.as_ref().map_or(0.0, |r| lp_norm(r, hyper.p_norm));
            let r2 = frames.r2.as_ref().map_or(0.0, |r| lp_norm(r, hyper.p_norm));
            0.5 * hyper.lambda * (r1 + r2)
        }
        Variant::GodsO | Variant::GodsE => {
            let k = w1.ncols();
            let off = |w: &Mat| (w.transpose() * w - Mat::identity(k, k)).norm_squared();
            0.5 * hyper.lambda * (off(w1) + off(w2))
        }
        Variant::Gods | Variant::Bods => 0.0,
    }
}

pub fn gods_egrad(frames: &FramePair, x: &Mat, hyper: &GodsHyper) -> Result<FrameGrad> {
    frames.check(x)?;
    let n = x.nrows() as f64;
    let (w1, w2) = frames.effective();
    let mut d1 = scores(x, &w1, &frames.b1) / n;
    let mut d2 = scores(x, &w2, &frames.b2) / n;
    let c = hyper.nu / n;
    for i in 0..x.nrows() {
        let j1 = argmin_row(&d1, i);
        let h1 = hinge(hyper.eta - d1[(i, j1)] * n);
        d1[(i, j1)] -= c * h1;
        let j2 = argmax_row(&d2, i);
        let h2 = hinge(hyper.eta + d2[(i, j2)] * n);
        d2[(i, j2)] += c * h2;
    }
    let mut gw1 = x.transpose() * &d1;
    let mut gw2 = x.transpose() * &d2;
    let gb1 = DVector::from_iterator(d1.ncols(), d1.column_iter().map(|c| c.sum()));
    let gb2 = DVector::from_iterator(d2.ncols(), d2.column_iter().map(|c| c.sum()));

    match hyper.variant {
        Variant::GodsO | Variant::GodsE => {
            let k = w1.ncols();
            let l2 = 2.0 * hyper.lambda;
            gw1 += &w1 * (w1.transpose() * &w1 - Mat::identity(k, k)) * l2;
            gw2 += &w2 * (w2.transpose() * &w2 - Mat::identity(k, k)) * l2;
        }
        Variant::GodsN => {
            // chain rule through W = Q diag(r)
            let (r1, r2) = match (&frames.r1, &frames.r2) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::InvalidParameter("GODS_N frames need column scales".into())),
            };
            let scale_grad = |q: &Mat, gw: &Mat, r: &DVector<f64>| {
                let dr = DVector::from_iterator(r.len(), (0..r.len()).map(|k| q.column(k).dot(&gw.column(k))));
                dr + lp_norm_grad(r, hyper.p_norm) * (0.5 * hyper.lambda)
            };
            let dr1 = scale_grad(&frames.w1, &gw1, r1);
            let dr2 = scale_grad(&frames.w2, &gw2, r2);
            gw1 *= Mat::from_diagonal(r1);
            gw2 *= Mat::from_diagonal(r2);
            return Ok(FrameGrad { w1: gw1, w2: gw2, b1: gb1, b2: gb2, r1: Some(dr1), r2: Some(dr2) });
        }
        Variant::Gods | Variant::Bods => {}
    }
    Ok(FrameGrad { w1: gw1, w2: gw2, b1: gb1, b2: gb2, r1: None, r2: None })
}

/// Objective value for `hyper.variant`, dispatching BODS to its own formulation.
pub fn primal_objective(frames: &FramePair, x: &Mat, hyper: &GodsHyper) -> Result<f64> {
    match hyper.variant {
        Variant::Bods => bods_objective(frames, x, hyper),
        _ => gods_objective(frames, x, hyper),
    }
}

pub fn primal_egrad(frames: &FramePair, x: &Mat, hyper: &GodsHyper) -> Result<FrameGrad> {
    match hyper.variant {
        Variant::Bods => bods_egrad(frames, x, hyper),
        _ => gods_egrad(frames, x, hyper),
    }
}

/// Search space for a variant: two frame factors followed by the two bias vectors.
pub fn manifold_for(variant: Variant, d: usize, k: usize) -> Result<ManifoldSpec> {
    let frame = || match variant {
        Variant::Bods => ManifoldSpec::sphere(d),
        Variant::Gods => ManifoldSpec::stiefel(d, k),
        Variant::GodsN => ManifoldSpec::non_compact_stiefel(d, k),
        Variant::GodsO => ManifoldSpec::oblique(d, k),
        Variant::GodsE => ManifoldSpec::euclidean(d, k),
    };
    if d < k {
        return Err(dim_err(format!("feature dimension {d} is smaller than K = {k}")));
    }
    Ok(ManifoldSpec::product(vec![
        frame()?,
        frame()?,
        ManifoldSpec::euclidean(k, 1)?,
        ManifoldSpec::euclidean(k, 1)?,
    ]))
}

fn col(v: &DVector<f64>) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

fn vec_of(m: &Mat) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn frames_to_point(frames: &FramePair, variant: Variant) -> Point {
    let mut f = Vec::new();
    if variant == Variant::GodsN {
        let ones = DVector::from_element(frames.k(), 1.0);
        f.push(frames.w1.clone());
        f.push(col(frames.r1.as_ref().unwrap_or(&ones)));
        f.push(frames.w2.clone());
        f.push(col(frames.r2.as_ref().unwrap_or(&ones)));
    } else {
        f.push(frames.w1.clone());
        f.push(frames.w2.clone());
    }
    f.push(col(&frames.b1));
    f.push(col(&frames.b2));
    Point::new(f)
}

pub fn point_to_frames(p: &Point, variant: Variant) -> FramePair {
    let f = &p.factors;
    if variant == Variant::GodsN {
        FramePair {
            w1: f[0].clone(),
            w2: f[2].clone(),
            b1: vec_of(&f[4]),
            b2: vec_of(&f[5]),
            r1: Some(vec_of(&f[1])),
            r2: Some(vec_of(&f[3])),
        }
    } else {
        FramePair { w1: f[0].clone(), w2: f[1].clone(), b1: vec_of(&f[2]), b2: vec_of(&f[3]), r1: None, r2: None }
    }
}

fn grad_to_factors(g: FrameGrad, variant: Variant) -> Vec<Mat> {
    let mut f = Vec::new();
    if variant == Variant::GodsN {
        let k = g.w1.ncols();
        f.push(g.w1);
        f.push(col(&g.r1.unwrap_or_else(|| DVector::zeros(k))));
        f.push(g.w2);
        f.push(col(&g.r2.unwrap_or_else(|| DVector::zeros(k))));
    } else {
        f.push(g.w1);
        f.push(g.w2);
    }
    f.push(col(&g.b1));
    f.push(col(&g.b2));
    f
}

/// A primal objective bound to a data matrix, in the solver's factor layout.
pub struct PrimalObjective<'a> {
    pub x: &'a Mat,
    pub hyper: &'a GodsHyper,
}

impl Objective for PrimalObjective<'_> {
    fn cost(&self, p: &Point) -> f64 {
        primal_objective(&point_to_frames(p, self.hyper.variant), self.x, self.hyper)
            .unwrap_or(f64::NAN)
    }

    fn egrad(&self, p: &Point) -> Vec<Mat> {
        let v = self.hyper.variant;
        match primal_egrad(&point_to_frames(p, v), self.x, self.hyper) {
            Ok(g) => grad_to_factors(g, v),
            Err(_) => p.factors.iter().map(|f| f.map(|_| f64::NAN)).collect(),
        }
    }
}

/// Initial frames from the thin SVDs of the `3K` rows closest to and farthest
/// from the origin (`W1` and `W2` respectively), zero intercepts.
///
/// With fewer than `3K` rows the frames are drawn with [`random_point`] and the
/// returned flag is set.
pub fn init_frames(x: &Mat, k: usize, seed: u64) -> Result<(FramePair, bool)> {
    let (n, d) = x.shape();
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if d < k {
        return Err(dim_err(format!("feature dimension {d} is smaller than K = {k}")));
    }
    let m = 3 * k;
    let zeros = DVector::zeros(k);
    if n < m {
        warn!("only {n} training rows for K = {k}; using random initial frames");
        let p = random_point(&ManifoldSpec::product(vec![ManifoldSpec::stiefel(d, k)?, ManifoldSpec::stiefel(d, k)?]), seed)?;
        let fp = FramePair {
            w1: p.factors[0].clone(),
            w2: p.factors[1].clone(),
            b1: zeros.clone(),
            b2: zeros,
            r1: None,
            r2: None,
        };
        return Ok((fp, true));
    }
    let norms: Vec<f64> = x.row_iter().map(|r| r.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
    let pick = |idx: &[usize]| Mat::from_fn(idx.len(), d, |i, j| x[(idx[i], j)]);
    let near = pick(&order[..m]);
    let far = pick(&order[n - m..]);
    let fp = FramePair {
        w1: top_right_singular_vectors(&near, k)?,
        w2: top_right_singular_vectors(&far, k)?,
        b1: zeros.clone(),
        b2: zeros,
        r1: None,
        r2: None,
    };
    Ok((fp, false))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPrimalModel {
    pub frames: FramePair,
    pub hyper: GodsHyper,
    pub eta_effective: f64,
    pub feature_dim: usize,
    pub normalization: bool,
}

pub fn train_primal(
    x: &Mat,
    hyper: &GodsHyper,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(TrainedPrimalModel, SolveReport)> {
    hyper.validate()?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    let xs = if hyper.normalize { l2_normalize(x) } else { x.clone() };
    let (d, k) = (xs.ncols(), hyper.k);
    let m = manifold_for(hyper.variant, d, k)?;
    let (mut init, _) = init_frames(&xs, k, seed)?;
    if hyper.variant == Variant::GodsN {
        init.r1 = Some(DVector::from_element(k, 1.0));
        init.r2 = Some(DVector::from_element(k, 1.0));
    }
    let obj = PrimalObjective { x: &xs, hyper };
    let (p, report) = minimize(&obj, &m, &frames_to_point(&init, hyper.variant), cfg)?;
    let model = TrainedPrimalModel {
        frames: point_to_frames(&p, hyper.variant),
        hyper: hyper.clone(),
        eta_effective: hyper.eta,
        feature_dim: d,
        normalization: hyper.normalize,
    };
    Ok((model, report))
}

fn prepare(x: &[f64], dim: usize, normalize: bool) -> Result<Vec<f64>> {
    if x.len() != dim {
        return Err(dim_err(format!("sample has {} features, model expects {dim}", x.len())));
    }
    if !normalize {
        return Ok(x.to_vec());
    }
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(if n > 0.0 { x.iter().map(|v| v / n).collect() } else { x.to_vec() })
}

pub fn primal_scores(model: &TrainedPrimalModel, x: &[f64]) -> Result<(f64, f64)> {
    let xv = prepare(x, model.feature_dim, model.normalization)?;
    let xm = Mat::from_row_slice(1, xv.len(), &xv);
    let (w1, w2) = model.frames.effective();
    let s1 = scores(&xm, &w1, &model.frames.b1).min();
    let s2 = scores(&xm, &w2, &model.frames.b2).max();
    Ok((s1, s2))
}

/// Scores for every row of `x`.
pub fn primal_scores_batch(model: &TrainedPrimalModel, x: &Mat) -> Result<Vec<(f64, f64)>> {
    x.row_iter()
        .map(|r| primal_scores(model, &r.iter().copied().collect::<Vec<_>>()))
        .collect()
}
