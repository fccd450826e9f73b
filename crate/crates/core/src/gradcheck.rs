//! Finite-difference checks of every objective's analytic gradient.

use std::sync::Arc;

use crate::error::Result;
use crate::kernels::{ensure_pd, gram, KernelSpec};
use crate::kods::{kods_egrad, kods_objective, DualVars, KodsHyper};
use crate::linalg::Mat;
use crate::manifold::{random_point, ManifoldSpec, Point};
use crate::primal::{manifold_for, GodsHyper, PrimalObjective, Variant};
use crate::rng;
use crate::solver::{fd_gradient_check, FnObjective, Objective};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub objective: String,
    pub points: usize,
    pub max_rel_error: f64,
}

impl GradCheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= FD_TOL
    }
}

/// Scales a wrapped objective's gradient, to exercise the failure path.
struct Corrupted<'a>(&'a dyn Objective);

impl Objective for Corrupted<'_> {
    fn cost(&self, p: &Point) -> f64 {
        self.0.cost(p)
    }
    fn egrad(&self, p: &Point) -> Vec<Mat> {
        self.0.egrad(p).into_iter().map(|g| g * 1.01).collect()
    }
}

fn check(obj: &dyn Objective, p: &Point, corrupt: bool) -> f64 {
    if corrupt {
        fd_gradient_check(&Corrupted(obj), p, FD_STEP)
    } else {
        fd_gradient_check(obj, p, FD_STEP)
    }
}

/// Runs the check for the five primal variants (d = 5, K = 2, n = 10; K = 1 for
/// BODS) and KODS (n = 6, K = 2, RBF Gram) at `points` seeded feasible points each.
pub fn run_gradient_checks(seed: u64, points: usize, corrupt: bool) -> Result<Vec<GradCheckEntry>> {
    let mut out = Vec::new();
    let mut r = rng::seeded(seed);
    let x = rng::gaussian_matrix(&mut r, 10, 5);
    for v in Variant::ALL {
        let k = if v == Variant::Bods { 1 } else { 2 };
        let hyper = GodsHyper { variant: v, k, ..Default::default() };
        let m = manifold_for(v, 5, k)?;
        let obj = PrimalObjective { x: &x, hyper: &hyper };
        let mut worst: f64 = 0.0;
        for i in 0..points {
            let p = random_point(&m, seed.wrapping_add(1000 + i as u64))?;
            worst = worst.max(check(&obj, &p, corrupt));
        }
        out.push(GradCheckEntry { objective: v.name().into(), points, max_rel_error: worst });
    }

    let xs = rng::gaussian_matrix(&mut r, 6, 3);
    let (spd, _) = ensure_pd(&gram(&KernelSpec::Rbf { sigma: 1.0 }, &xs, None)?, 0.0)?;
    let kk = spd.matrix().clone();
    let hyper = KodsHyper { k: 2, ..Default::default() };
    let gs = ManifoldSpec::generalized_stiefel(2, Arc::new(spd))?;
    let m = ManifoldSpec::product(vec![gs.clone(), gs]);
    let duals = |p: &Point| DualVars { y: p.factors[0].clone(), z: p.factors[1].clone() };
    let obj = FnObjective::new(
        |p: &Point| kods_objective(&duals(p), &kk, &hyper).unwrap_or(f64::NAN),
        |p: &Point| match kods_egrad(&duals(p), &kk, &hyper) {
            Ok((a, b)) => vec![a, b],
            Err(_) => p.factors.iter().map(|f| f.map(|_| f64::NAN)).collect(),
        },
    );
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let p = random_point(&m, seed.wrapping_add(2000 + i as u64))?;
        worst = worst.max(check(&obj, &p, corrupt));
    }
    out.push(GradCheckEntry { objective: "kods".into(), points, max_rel_error: worst });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_objectives_pass_and_corruption_is_caught() {
        let good = run_gradient_checks(0, 3, false).unwrap();
        assert_eq!(good.len(), 6);
        assert!(good.iter().all(|e| e.passed()), "{good:?}");
        let bad = run_gradient_checks(0, 1, true).unwrap();
        assert!(bad.iter().all(|e| !e.passed()));
    }
}
