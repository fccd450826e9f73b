use std::ffi::{CStr, CString};
use std::ptr;

use gods_ffi::*;

fn gaussian_rows(n: usize, d: usize) -> Vec<f64> {
    // deterministic, away from the origin
    (0..n * d).map(|i| 2.0 + ((i as f64) * 0.7548776662).fract() - 0.5).collect()
}

fn primal_params() -> GodsPrimalParams {
    GodsPrimalParams {
        variant: GodsVariant::Gods,
        k: 2,
        eta: 0.3,
        nu: 1.0,
        lambda: 1.0,
        p_norm: 1.0,
        normalize: 1,
        max_iters: 50,
        seed: 3,
    }
}

fn last_error() -> String {
    let p = gods_last_error_message();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { gods_string_free(p) };
    s
}

#[test]
fn train_score_save_load_round_trip() {
    let (n, d) = (40, 3);
    let x = gaussian_rows(n, d);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gods_train_primal(x.as_ptr(), n, d, primal_params(), &mut m) }, GodsStatus::Ok);
    assert_eq!(unsafe { gods_model_feature_dim(m) }, d);
    assert_eq!(unsafe { gods_model_eta(m) }, 0.3);

    let (mut s1, mut s2) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(
        unsafe { gods_model_scores(m, x.as_ptr(), n, d, s1.as_mut_ptr(), s2.as_mut_ptr()) },
        GodsStatus::Ok
    );
    let mut labels = vec![0i32; n];
    assert_eq!(unsafe { gods_model_classify(m, x.as_ptr(), n, d, labels.as_mut_ptr()) }, GodsStatus::Ok);
    for i in 0..n {
        let inside = s1[i] >= 0.3 && s2[i] <= -0.3;
        assert_eq!(labels[i], if inside { 1 } else { -1 });
    }

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gods_model_save(m, path.as_ptr()) }, GodsStatus::Ok);
    let mut m2 = ptr::null_mut();
    assert_eq!(unsafe { gods_model_load(path.as_ptr(), &mut m2) }, GodsStatus::Ok);
    let (mut t1, mut t2) = (vec![0.0; n], vec![0.0; n]);
    unsafe { gods_model_scores(m2, x.as_ptr(), n, d, t1.as_mut_ptr(), t2.as_mut_ptr()) };
    assert_eq!(s1, t1);
    assert_eq!(s2, t2);
    unsafe {
        gods_model_free(m);
        gods_model_free(m2);
    }
}

#[test]
fn kods_through_the_abi() {
    let (n, d) = (30, 2);
    let x = gaussian_rows(n, d);
    let params = GodsKodsParams {
        kernel: GodsKernel { family: GodsKernelFamily::Rbf, sigma: 0.5, degree: 0, offset: 0.0 },
        k: 2,
        eta: 0.3,
        lambda: 1.0,
        normalize: 0,
        max_iters: 50,
        seed: 1,
    };
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gods_train_kods(x.as_ptr(), n, d, params, &mut m) }, GodsStatus::Ok);
    let mut labels = vec![0i32; n];
    assert_eq!(unsafe { gods_model_classify(m, x.as_ptr(), n, d, labels.as_mut_ptr()) }, GodsStatus::Ok);
    assert!(labels.iter().all(|&l| l == 1 || l == -1));
    unsafe { gods_model_free(m) };
}

#[test]
fn errors_are_reported() {
    let x = gaussian_rows(10, 3);
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gods_train_primal(ptr::null(), 10, 3, primal_params(), &mut m) }, GodsStatus::NullPointer);
    assert!(last_error().contains("null"));

    let mut bad = primal_params();
    bad.k = 5;
    assert_eq!(unsafe { gods_train_primal(x.as_ptr(), 10, 3, bad, &mut m) }, GodsStatus::InvalidArgument);
    assert!(m.is_null());

    let path = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { gods_model_load(path.as_ptr(), &mut m) }, GodsStatus::Io);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.json");
    std::fs::write(&p, "{\"schema_version\": 1}").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gods_model_load(path.as_ptr(), &mut m) }, GodsStatus::Schema);

    assert_eq!(unsafe { gods_model_feature_dim(ptr::null()) }, 0);
    unsafe { gods_model_free(ptr::null_mut()) };
}

#[test]
fn dimension_mismatch_at_scoring() {
    let x = gaussian_rows(20, 3);
    let mut m = ptr::null_mut();
    unsafe { gods_train_primal(x.as_ptr(), 20, 3, primal_params(), &mut m) };
    let mut s = vec![0.0; 15];
    let status = unsafe { gods_model_scores(m, x.as_ptr(), 15, 4, s.as_mut_ptr(), s.as_mut_ptr()) };
    assert_eq!(status, GodsStatus::InvalidArgument);
    unsafe { gods_model_free(m) };
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(gods_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gods.h")).unwrap();
    for f in [
        "gods_model_load",
        "gods_model_save",
        "gods_model_free",
        "gods_train_primal",
        "gods_train_kods",
        "gods_model_scores",
        "gods_model_classify",
        "gods_model_feature_dim",
        "gods_model_eta",
        "gods_last_error_message",
        "gods_string_free",
        "gods_version",
        "typedef struct GodsModel GodsModel",
    ] {
        assert!(h.contains(f), "{f} missing from header");
    }
}
