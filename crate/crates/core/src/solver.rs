//! Riemannian conjugate gradient with backtracking Armijo line search.

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::manifold::{
    egrad_to_rgrad, frob_factors, retract, transport, ManifoldSpec, Point,
};

/// A differentiable cost on the ambient space of a manifold.
pub trait Objective {
    fn cost(&self, p: &Point) -> f64;
    /// Euclidean gradient, one matrix per factor of `p`.
    fn egrad(&self, p: &Point) -> Vec<Mat>;
}

/// Wraps a pair of closures as an [`Objective`].
pub struct FnObjective<C, G> {
    pub cost: C,
    pub egrad: G,
}

impl<C, G> FnObjective<C, G>
where
    C: Fn(&Point) -> f64,
    G: Fn(&Point) -> Vec<Mat>,
{
    pub fn new(cost: C, egrad: G) -> Self {
        Self { cost, egrad }
    }
}

impl<C, G> Objective for FnObjective<C, G>
where
    C: Fn(&Point) -> f64,
    G: Fn(&Point) -> Vec<Mat>,
{
    fn cost(&self, p: &Point) -> f64 {
        (self.cost)(p)
    }
    fn egrad(&self, p: &Point) -> Vec<Mat> {
        (self.egrad)(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetaRule {
    PolakRibierePlus,
    FletcherReeves,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub initial_step: f64,
    pub beta_rule: BetaRule,
    /// `None` restarts every `ambient_dim` iterations.
    pub restart_period: Option<usize>,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            initial_step: 1.0,
            beta_rule: BetaRule::PolakRibierePlus,
            restart_period: None,
            max_backtracks: 60,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be positive");
        }
        if !(self.grad_tol >= 0.0) {
            return bad("grad_tol must be non-negative");
        }
        if self.restart_period == Some(0) {
            return bad("restart_period must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// The line search ran out of halvings; the last accepted iterate is returned.
    Stalled,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    pub wall_time: f64,
}

pub fn minimize(
    obj: &dyn Objective,
    m: &ManifoldSpec,
    init: &Point,
    cfg: &SolverConfig,
) -> Result<(Point, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let restart_period = cfg.restart_period.unwrap_or_else(|| m.ambient_dim().max(1));

    let mut x = init.clone();
    let mut f = obj.cost(&x);
    let mut eg = obj.egrad(&x);
    if !f.is_finite() || !eg.iter().all(crate::linalg::all_finite) {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut g = egrad_to_rgrad(m, &x, &eg)?;
    let mut gn = g.norm();

    let mut objective_trace = vec![f];
    let mut grad_norm_trace = vec![gn];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    let mut dir = g.scaled(-1.0);
    let mut since_restart = 0;
    let mut prev: Option<(f64, f64)> = None; // (accepted step, slope)

    if gn <= cfg.grad_tol {
        termination = Termination::GradientTolerance;
    } else {
        for k in 1..=cfg.max_iters {
            let mut slope = frob_factors(&eg, &dir.factors);
            if slope >= 0.0 || since_restart >= restart_period {
                dir = g.scaled(-1.0);
                slope = frob_factors(&eg, &dir.factors);
                since_restart = 0;
            }

            let mut t = match prev {
                Some((step, prev_slope)) if slope < 0.0 => {
                    (step * prev_slope / slope).clamp(1e-12, 1e3 * cfg.initial_step)
                }
                _ => cfg.initial_step,
            };

            let mut accepted = None;
            for _ in 0..=cfg.max_backtracks {
                match retract(m, &x, &dir.scaled(t)) {
                    Ok(trial) => {
                        let ft = obj.cost(&trial);
                        let bound = f + cfg.armijo_c * t * slope;
                        // a step too small to register in f is not progress
                        if ft.is_finite() && ft <= bound && (ft < f || bound < f) {
                            accepted = Some((trial, ft));
                            break;
                        }
                    }
                    Err(Error::DegenerateStep) => {}
                    Err(e) => return Err(e),
                }
                t *= cfg.backtrack_factor;
            }

            let Some((x_new, f_new)) = accepted else {
                warn!("line search stalled at iteration {k}");
                termination = Termination::Stalled;
                break;
            };

            let eg_new = obj.egrad(&x_new);
            if !eg_new.iter().all(crate::linalg::all_finite) {
                return Err(Error::NonFinite { iteration: k });
            }
            let g_new = egrad_to_rgrad(m, &x_new, &eg_new)?;
            let g_old_t = transport(m, &x, &x_new, &g)?;
            let dir_t = transport(m, &x, &x_new, &dir)?;
            let gg_old = frob_factors(&g.factors, &g.factors);
            let beta = match cfg.beta_rule {
                BetaRule::PolakRibierePlus => {
                    let diff = g_new.add_scaled(-1.0, &g_old_t);
                    (frob_factors(&g_new.factors, &diff.factors) / gg_old).max(0.0)
                }
                BetaRule::FletcherReeves => frob_factors(&g_new.factors, &g_new.factors) / gg_old,
            };
            let beta = if beta.is_finite() { beta } else { 0.0 };

            dir = g_new.scaled(-1.0).add_scaled(beta, &dir_t);
            prev = Some((t, slope));
            since_restart += 1;
            x = x_new;
            f = f_new;
            eg = eg_new;
            g = g_new;
            gn = g.norm();
            iterations = k;
            objective_trace.push(f);
            grad_norm_trace.push(gn);
            debug!("rcg iter {k}: f = {f:.6e}, |grad| = {gn:.3e}, step = {t:.3e}");

            if gn <= cfg.grad_tol {
                termination = Termination::GradientTolerance;
                break;
            }
        }
    }

    let report = SolveReport {
        iterations,
        objective_trace,
        grad_norm_trace,
        converged: termination == Termination::GradientTolerance,
        termination,
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((x, report))
}

/// Relative error between the analytic Euclidean gradient and central differences:
/// `‖egrad − fd‖_F / max(1, ‖egrad‖_F)`.
pub fn fd_gradient_check(obj: &dyn Objective, p: &Point, h: f64) -> f64 {
    let eg = obj.egrad(p);
    let mut err2 = 0.0;
    let mut norm2 = 0.0;
    let mut probe = p.clone();
    for (fi, g) in eg.iter().enumerate() {
        for idx in 0..g.len() {
            let orig = probe.factors[fi][idx];
            probe.factors[fi][idx] = orig + h;
            let fp = obj.cost(&probe);
            probe.factors[fi][idx] = orig - h;
            let fm = obj.cost(&probe);
            probe.factors[fi][idx] = orig;
            let fd = (fp - fm) / (2.0 * h);
            err2 += (g[idx] - fd).powi(2);
            norm2 += g[idx] * g[idx];
        }
    }
    err2.sqrt() / norm2.sqrt().max(1.0)
}

/// Asserts the Armijo invariant on a finished solve.
pub fn trace_is_monotone(report: &SolveReport) -> bool {
    report.objective_trace.windows(2).all(|w| w[1] <= w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::random_point;
    use crate::rng;
    use nalgebra::SymmetricEigen;

    fn rayleigh(a: Mat) -> impl Objective {
        let a2 = a.clone();
        FnObjective::new(
            move |p: &Point| (p.factors[0].transpose() * &a * &p.factors[0])[(0, 0)],
            move |p: &Point| vec![&a2 * &p.factors[0] * 2.0],
        )
    }

    #[test]
    fn rayleigh_quotient_reaches_smallest_eigenvalue() {
        let mut r = rng::seeded(3);
        let b = rng::gaussian_matrix(&mut r, 5, 5);
        let a = &b + b.transpose();
        let lmin = SymmetricEigen::new(a.clone()).eigenvalues.min();
        let m = ManifoldSpec::sphere(5).unwrap();
        let x0 = random_point(&m, 4).unwrap();
        let (_, rep) = minimize(&rayleigh(a), &m, &x0, &SolverConfig::default()).unwrap();
        assert!(trace_is_monotone(&rep));
        let f = *rep.objective_trace.last().unwrap();
        assert!((f - lmin).abs() <= 1e-6, "{f} vs {lmin}");
    }

    #[test]
    fn procrustes_matches_svd() {
        let mut r = rng::seeded(8);
        let x = rng::gaussian_matrix(&mut r, 6, 4);
        let b = rng::gaussian_matrix(&mut r, 3, 4);
        let (x2, b2) = (x.clone(), b.clone());
        let obj = FnObjective::new(
            move |p: &Point| (&x - &p.factors[0] * &b).norm_squared(),
            move |p: &Point| vec![(&p.factors[0] * &b2 - &x2) * b2.transpose() * 2.0],
        );
        let m = ManifoldSpec::stiefel(6, 3).unwrap();
        let x0 = random_point(&m, 1).unwrap();
        let (w, rep) = minimize(&obj, &m, &x0, &SolverConfig::default()).unwrap();
        assert!(rep.converged && trace_is_monotone(&rep));

        let mut r = rng::seeded(8);
        let x = rng::gaussian_matrix(&mut r, 6, 4);
        let b = rng::gaussian_matrix(&mut r, 3, 4);
        let svd = (&x * b.transpose()).svd(true, true);
        let oracle = svd.u.unwrap() * svd.v_t.unwrap();
        assert!((oracle - &w.factors[0]).norm() <= 1e-6);
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let m = ManifoldSpec::stiefel(4, 2).unwrap();
        let x0 = random_point(&m, 2).unwrap();
        let obj = FnObjective::new(|_: &Point| 1.5, |p: &Point| vec![Mat::zeros(p.factors[0].nrows(), 2)]);
        let (x, rep) = minimize(&obj, &m, &x0, &SolverConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert_eq!(x, x0);
    }

    #[test]
    fn fd_check_on_trivial_objectives() {
        let p = Point::new(vec![Mat::from_row_slice(2, 2, &[0.3, -1.0, 2.0, 0.5])]);
        let c = FnObjective::new(|_: &Point| 7.0, |p: &Point| vec![Mat::zeros(p.factors[0].nrows(), 2)]);
        assert_eq!(fd_gradient_check(&c, &p, 1e-6), 0.0);
        let q = FnObjective::new(
            |p: &Point| p.factors[0].norm_squared(),
            |p: &Point| vec![&p.factors[0] * 2.0],
        );
        assert!(fd_gradient_check(&q, &p, 1e-6) <= 1e-8);
    }

    #[test]
    fn nonfinite_start_is_an_error() {
        let m = ManifoldSpec::euclidean(2, 1).unwrap();
        let x0 = random_point(&m, 0).unwrap();
        let obj = FnObjective::new(|_: &Point| f64::NAN, |p: &Point| vec![p.factors[0].clone()]);
        assert!(matches!(
            minimize(&obj, &m, &x0, &SolverConfig::default()),
            Err(Error::NonFinite { iteration: 0 })
        ));
    }

    #[test]
    fn wrong_gradient_stalls_without_crashing() {
        // gradient points uphill, so no step can satisfy Armijo
        let m = ManifoldSpec::euclidean(2, 1).unwrap();
        let x0 = Point::new(vec![Mat::from_element(2, 1, 1.0)]);
        let obj = FnObjective::new(
            |p: &Point| p.factors[0].norm_squared(),
            |p: &Point| vec![&p.factors[0] * -2.0],
        );
        let (x, rep) = minimize(&obj, &m, &x0, &SolverConfig::default()).unwrap();
        assert_eq!(rep.termination, Termination::Stalled);
        assert!(!rep.converged);
        assert_eq!(x, x0);
    }

    #[test]
    fn solves_are_deterministic() {
        let mut r = rng::seeded(5);
        let b = rng::gaussian_matrix(&mut r, 5, 5);
        let a = &b * b.transpose();
        let m = ManifoldSpec::sphere(5).unwrap();
        let x0 = random_point(&m, 6).unwrap();
        let obj = rayleigh(a);
        let (x1, r1) = minimize(&obj, &m, &x0, &SolverConfig::default()).unwrap();
        let (x2, r2) = minimize(&obj, &m, &x0, &SolverConfig::default()).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(r1.objective_trace, r2.objective_trace);
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig { armijo_c: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig { backtrack_factor: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
