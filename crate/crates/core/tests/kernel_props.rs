use gods_core::kernels::*;
use gods_core::linalg::Mat;
use gods_core::rng;

#[test]
fn gram_matrices_are_psd_on_50_instances() {
    for seed in 0..50u64 {
        let mut r = rng::seeded(seed);
        let x = rng::gaussian_matrix(&mut r, 12, 4);
        // histogram-style kernels get non-negative inputs
        let xa = x.map(f64::abs);
        let specs = [
            (KernelSpec::Linear, &x),
            (KernelSpec::Rbf { sigma: 0.5 + seed as f64 * 0.05 }, &x),
            (KernelSpec::Polynomial { degree: 1 + (seed % 4) as u32, offset: 1.0 }, &x),
            (KernelSpec::HistogramIntersection, &xa),
            (KernelSpec::ChiSquare, &xa),
        ];
        for (spec, data) in specs {
            let k = gram(&spec, data, None).unwrap();
            assert_eq!(k, k.transpose());
            let min = k.clone().symmetric_eigen().eigenvalues.min();
            let tol = 1e-8 * k.diagonal().amax().max(1.0);
            assert!(min >= -tol, "{spec:?} seed {seed}: {min:e}");
        }
    }
}

#[test]
fn gram_entries_equal_pairwise_evaluation() {
    let mut r = rng::seeded(3);
    let x = rng::gaussian_matrix(&mut r, 7, 3);
    let y = rng::gaussian_matrix(&mut r, 4, 3);
    let spec = KernelSpec::Rbf { sigma: 0.8 };
    let k = gram(&spec, &x, Some(&y)).unwrap();
    for i in 0..7 {
        for j in 0..4 {
            let a: Vec<f64> = x.row(i).iter().copied().collect();
            let b: Vec<f64> = y.row(j).iter().copied().collect();
            assert_eq!(k[(i, j)], kernel_eval(&spec, &a, &b).unwrap());
        }
    }
}

#[test]
fn duplicated_rows_are_repaired_to_positive_definite() {
    let mut r = rng::seeded(4);
    let base = rng::gaussian_matrix(&mut r, 5, 3);
    let x = Mat::from_fn(10, 3, |i, j| base[(i % 5, j)]);
    let k = gram(&KernelSpec::Linear, &x, None).unwrap();
    let (spd, eps) = ensure_pd(&k, 0.0).unwrap();
    assert!(eps > 0.0);
    assert!(spd.matrix().clone().symmetric_eigen().eigenvalues.min() > 0.0);
}

#[test]
fn well_conditioned_input_is_left_alone() {
    let k = Mat::identity(4, 4) * 2.0;
    let (spd, eps) = ensure_pd(&k, 0.0).unwrap();
    assert_eq!(eps, 0.0);
    assert_eq!(spd.matrix(), &k);
}
