use std::sync::Arc;

use gods_core::data::{synth, SynthKind};
use gods_core::kernels::{ensure_pd, gram, KernelSpec};
use gods_core::kods::*;
use gods_core::linalg::Mat;
use gods_core::manifold::{random_point, ManifoldSpec, SpdMatrix};
use gods_core::rng;
use gods_core::solver::{fd_gradient_check, trace_is_monotone, FnObjective, SolverConfig};
use nalgebra::DVector;

fn random_duals(n: usize, k: usize, spd: &Arc<SpdMatrix>, seed: u64) -> DualVars {
    let gs = ManifoldSpec::generalized_stiefel(k, spd.clone()).unwrap();
    let p = random_point(&ManifoldSpec::product(vec![gs.clone(), gs]), seed).unwrap();
    assert_eq!(p.factors[0].ncols(), n);
    DualVars { y: p.factors[0].clone(), z: p.factors[1].clone() }
}

#[test]
fn gradient_matches_finite_differences_on_20_instances() {
    for seed in 0..20u64 {
        let mut r = rng::seeded(seed);
        let n = 5 + (seed as usize % 4);
        let x = rng::gaussian_matrix(&mut r, n, 3);
        let kk = gram(&KernelSpec::Rbf { sigma: 1.0 }, &x, None).unwrap();
        let (spd, _) = ensure_pd(&kk, 0.0).unwrap();
        let spd = Arc::new(spd);
        let h = KodsHyper { k: 2, lambda: 0.5 + seed as f64 * 0.1, ..Default::default() };
        let d = random_duals(n, 2, &spd, seed + 100);
        let obj = FnObjective::new(
            |p: &gods_core::manifold::Point| {
                kods_objective(&DualVars { y: p.factors[0].clone(), z: p.factors[1].clone() }, spd.matrix(), &h).unwrap()
            },
            |p: &gods_core::manifold::Point| {
                let (a, b) =
                    kods_egrad(&DualVars { y: p.factors[0].clone(), z: p.factors[1].clone() }, spd.matrix(), &h).unwrap();
                vec![a, b]
            },
        );
        let err = fd_gradient_check(&obj, &gods_core::manifold::Point::new(vec![d.y, d.z]), 1e-6);
        assert!(err <= 1e-5, "seed {seed}: {err:e}");
    }
}

/// With an identity Gram matrix and λ = 0, entry by entry:
/// ∂Y_ij = 2·Y_ij·Σ_l A_il + 2·Y_ij·B_ij − 2η·Y_ij, and symmetrically for Z.
fn loop_grad(d: &DualVars, eta: f64) -> (Mat, Mat) {
    let (k, n) = d.y.shape();
    let mut gy = Mat::zeros(k, n);
    let mut gz = Mat::zeros(k, n);
    for i in 0..k {
        let mut ra = 0.0;
        for l in 0..n {
            ra += d.y[(i, l)] * d.y[(i, l)];
        }
        for j in 0..n {
            let yij = d.y[(i, j)];
            let zij = d.z[(i, j)];
            gy[(i, j)] = 2.0 * yij * ra + 2.0 * yij * zij * zij - 2.0 * eta * yij;
            gz[(i, j)] = 2.0 * zij * yij * yij - 2.0 * eta * zij;
        }
    }
    (gy, gz)
}

#[test]
fn identity_gram_without_coupling_matches_loop() {
    let n = 6;
    let id = Arc::new(SpdMatrix::new(Mat::identity(n, n)).unwrap());
    let h = KodsHyper { k: 3, lambda: 0.0, ..Default::default() };
    for seed in 0..10 {
        let d = random_duals(n, 3, &id, seed);
        let (gy, gz) = kods_egrad(&d, id.matrix(), &h).unwrap();
        let (ly, lz) = loop_grad(&d, h.eta);
        assert!((gy - ly).norm() <= 1e-12);
        assert!((gz - lz).norm() <= 1e-12);
    }
}

fn ring(n: usize, seed: u64) -> Mat {
    synth(&SynthKind::Ring { n, r_in: 0.7, r_out: 1.0 }, seed).unwrap().features
}

fn train_ring(seed: u64) -> KodsModel {
    let h = KodsHyper { normalize: false, ..Default::default() };
    let cfg = SolverConfig { max_iters: 150, ..Default::default() };
    let (m, rep) = kods_train(&ring(60, 4), &KernelSpec::Rbf { sigma: 0.3 }, &h, &cfg, seed).unwrap();
    assert!(trace_is_monotone(&rep));
    m
}

#[test]
fn trained_duals_are_feasible() {
    let m = train_ring(0);
    assert!(feasibility(&m).unwrap() <= 1e-8);
}

#[test]
fn intercepts_are_tight_on_the_training_set() {
    let m = train_ring(0);
    let s = kods_scores_batch(&m, &m.support).unwrap();
    let eta = m.hyper.eta;
    let min_s1 = s.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let max_s2 = s.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    assert!((min_s1 - eta).abs() <= 1e-10, "{min_s1}");
    assert!((max_s2 + eta).abs() <= 1e-10, "{max_s2}");
    assert!(s.iter().all(|v| v.0 >= eta - 1e-10 && v.1 <= -eta + 1e-10));
}

#[test]
fn batch_scores_match_scalar_loop() {
    let m = train_ring(1);
    let probe = ring(15, 77);
    let got = kods_scores_batch(&m, &probe).unwrap();
    let (k, n) = m.duals.y.shape();
    for (j, row) in probe.row_iter().enumerate() {
        let mut s1 = f64::INFINITY;
        let mut s2 = f64::NEG_INFINITY;
        for i in 0..k {
            let (mut a, mut b) = (m.b1[i], m.b2[i]);
            for l in 0..n {
                let kv = (-(m.support.row(l) - row).norm_squared() / (2.0 * 0.3 * 0.3)).exp();
                a += m.duals.z[(i, l)].powi(2) * kv;
                b -= m.duals.y[(i, l)].powi(2) * kv;
            }
            s1 = s1.min(a);
            s2 = s2.max(b);
        }
        assert!((got[j].0 - s1).abs() <= 1e-12 && (got[j].1 - s2).abs() <= 1e-12);
    }
}

#[test]
fn single_point_hand_example() {
    let m = KodsModel {
        duals: DualVars { y: Mat::zeros(1, 1), z: Mat::from_element(1, 1, 1.0) },
        kernel: KernelSpec::Linear,
        support: Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        b1: DVector::from_element(1, -0.7),
        b2: DVector::from_element(1, 0.25),
        eta_effective: 0.3,
        jitter: 0.0,
        hyper: KodsHyper { k: 1, normalize: false, ..Default::default() },
        normalization: false,
    };
    let (s1, s2) = kods_scores(&m, &[1.0, 0.0]).unwrap();
    assert!((s1 - 0.3).abs() < 1e-15);
    assert_eq!(s2, 0.25);
}

#[test]
fn training_is_deterministic() {
    assert_eq!(train_ring(3), train_ring(3));
}
