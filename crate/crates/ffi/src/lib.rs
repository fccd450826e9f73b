//! C ABI over `gods-core`.
//!
//! Models live behind an opaque [`GodsModel`] handle. Every fallible call
//! returns a [`GodsStatus`]; on failure the message is kept per thread and can
//! be fetched with [`gods_last_error_message`]. Matrices are passed as
//! row-major `double` buffers of `n * d` entries.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gods_core::inference::{classify, Calibration, Label};
use gods_core::kernels::KernelSpec;
use gods_core::kods::{kods_train, KodsHyper};
use gods_core::linalg::Mat;
use gods_core::persist::{data_hash, Fingerprint, Model, ModelFile};
use gods_core::primal::{train_primal, GodsHyper, Variant};
use gods_core::solver::SolverConfig;
use gods_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GodsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Schema = 4,
    Numeric = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GodsVariant {
    Bods = 0,
    Gods = 1,
    GodsN = 2,
    GodsO = 3,
    GodsE = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GodsKernelFamily {
    Linear = 0,
    Rbf = 1,
    Polynomial = 2,
    ChiSquare = 3,
    HistogramIntersection = 4,
}

/// Kernel choice. `sigma` is read for RBF, `degree` and `offset` for polynomial.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GodsKernel {
    pub family: GodsKernelFamily,
    pub sigma: f64,
    pub degree: u32,
    pub offset: f64,
}

/// Primal training parameters. `normalize` is 0 or 1.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GodsPrimalParams {
    pub variant: GodsVariant,
    pub k: usize,
    pub eta: f64,
    pub nu: f64,
    pub lambda: f64,
    pub p_norm: f64,
    pub normalize: i32,
    pub max_iters: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GodsKodsParams {
    pub kernel: GodsKernel,
    pub k: usize,
    pub eta: f64,
    pub lambda: f64,
    pub normalize: i32,
    pub max_iters: usize,
    pub seed: u64,
}

/// Opaque trained model.
pub struct GodsModel {
    model: Model,
    fingerprint: Fingerprint,
    calibration: Option<Calibration>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &Error) -> GodsStatus {
    match e {
        Error::Io(_) => GodsStatus::Io,
        Error::Schema(_) | Error::Json(_) | Error::Parse { .. } => GodsStatus::Schema,
        e if e.is_numeric() => GodsStatus::Numeric,
        _ => GodsStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), GodsStatus>) -> GodsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GodsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            GodsStatus::Panic
        }
    }
}

fn fail(e: Error) -> GodsStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> GodsStatus {
    set_error(format!("{what} is null"));
    GodsStatus::NullPointer
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, GodsStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("path is not valid UTF-8");
        GodsStatus::InvalidArgument
    })?;
    Ok(Path::new(s))
}

unsafe fn matrix_arg(x: *const f64, n: usize, d: usize) -> Result<Mat, GodsStatus> {
    if x.is_null() {
        return Err(null("data"));
    }
    if n == 0 || d == 0 {
        return Err(fail(Error::EmptyData));
    }
    let len = n.checked_mul(d).ok_or_else(|| fail(Error::InvalidParameter("n * d overflows".into())))?;
    Ok(Mat::from_row_slice(n, d, std::slice::from_raw_parts(x, len)))
}

unsafe fn model_arg<'a>(m: *const GodsModel) -> Result<&'a GodsModel, GodsStatus> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn boxed(out: *mut *mut GodsModel, m: GodsModel) {
    unsafe { *out = Box::into_raw(Box::new(m)) };
}

/// Loads a model file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gods_model_load(path: *const c_char, out: *mut *mut GodsModel) -> GodsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let file = ModelFile::load(path_arg(path)?).map_err(fail)?;
        let model = file.to_model().map_err(fail)?;
        boxed(out, GodsModel { model, fingerprint: file.fingerprint, calibration: file.calibration });
        Ok(())
    })
}

/// Writes the model to `path`.
///
/// # Safety
/// `model` must come from this library and `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gods_model_save(model: *const GodsModel, path: *const c_char) -> GodsStatus {
    guard(|| {
        let m = model_arg(model)?;
        let file = ModelFile::from_model(&m.model, m.fingerprint.clone(), m.calibration.clone());
        file.save(path_arg(path)?).map_err(fail)
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gods_model_free(model: *mut GodsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Trains a primal model on the `n x d` row-major matrix `x`.
///
/// # Safety
/// `x` must hold `n * d` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gods_train_primal(
    x: *const f64,
    n: usize,
    d: usize,
    params: GodsPrimalParams,
    out: *mut *mut GodsModel,
) -> GodsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = matrix_arg(x, n, d)?;
        let variant = match params.variant {
            GodsVariant::Bods => Variant::Bods,
            GodsVariant::Gods => Variant::Gods,
            GodsVariant::GodsN => Variant::GodsN,
            GodsVariant::GodsO => Variant::GodsO,
            GodsVariant::GodsE => Variant::GodsE,
        };
        let hyper = GodsHyper {
            variant,
            k: params.k,
            eta: params.eta,
            nu: params.nu,
            lambda: params.lambda,
            p_norm: params.p_norm,
            normalize: params.normalize != 0,
        };
        let cfg = SolverConfig { max_iters: params.max_iters, ..Default::default() };
        let (m, _) = train_primal(&x, &hyper, &cfg, params.seed).map_err(fail)?;
        let fingerprint = Fingerprint { seed: params.seed, data_sha256: data_hash(&x), n_train: n };
        boxed(out, GodsModel { model: Model::Primal(m), fingerprint, calibration: None });
        Ok(())
    })
}

/// Trains a KODS model on the `n x d` row-major matrix `x`.
///
/// # Safety
/// `x` must hold `n * d` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gods_train_kods(
    x: *const f64,
    n: usize,
    d: usize,
    params: GodsKodsParams,
    out: *mut *mut GodsModel,
) -> GodsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let x = matrix_arg(x, n, d)?;
        let kp = params.kernel;
        let kernel = match kp.family {
            GodsKernelFamily::Linear => KernelSpec::Linear,
            GodsKernelFamily::Rbf => KernelSpec::Rbf { sigma: kp.sigma },
            GodsKernelFamily::Polynomial => KernelSpec::Polynomial { degree: kp.degree, offset: kp.offset },
            GodsKernelFamily::ChiSquare => KernelSpec::ChiSquare,
            GodsKernelFamily::HistogramIntersection => KernelSpec::HistogramIntersection,
        };
        let hyper = KodsHyper {
            k: params.k,
            eta: params.eta,
            lambda: params.lambda,
            jitter: None,
            normalize: params.normalize != 0,
        };
        let cfg = SolverConfig { max_iters: params.max_iters, ..Default::default() };
        let (m, _) = kods_train(&x, &kernel, &hyper, &cfg, params.seed).map_err(fail)?;
        let fingerprint = Fingerprint { seed: params.seed, data_sha256: data_hash(&x), n_train: n };
        boxed(out, GodsModel { model: Model::Kods(m), fingerprint, calibration: None });
        Ok(())
    })
}

/// Fills `s1` and `s2` (each of length `n`) with the scores of the rows of `x`.
///
/// # Safety
/// `x` must hold `n * d` doubles; `s1` and `s2` must hold `n` doubles each.
#[no_mangle]
pub unsafe extern "C" fn gods_model_scores(
    model: *const GodsModel,
    x: *const f64,
    n: usize,
    d: usize,
    s1: *mut f64,
    s2: *mut f64,
) -> GodsStatus {
    guard(|| {
        let m = model_arg(model)?;
        if s1.is_null() || s2.is_null() {
            return Err(null("score buffer"));
        }
        let x = matrix_arg(x, n, d)?;
        let scores = m.model.scores(&x).map_err(fail)?;
        let (o1, o2) = (std::slice::from_raw_parts_mut(s1, n), std::slice::from_raw_parts_mut(s2, n));
        for (i, (a, b)) in scores.into_iter().enumerate() {
            o1[i] = a;
            o2[i] = b;
        }
        Ok(())
    })
}

/// Writes 1 (in-class) or -1 (anomaly) per row of `x` into `labels`.
///
/// # Safety
/// `x` must hold `n * d` doubles and `labels` must hold `n` ints.
#[no_mangle]
pub unsafe extern "C" fn gods_model_classify(
    model: *const GodsModel,
    x: *const f64,
    n: usize,
    d: usize,
    labels: *mut i32,
) -> GodsStatus {
    guard(|| {
        let m = model_arg(model)?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let x = matrix_arg(x, n, d)?;
        let eta = m.model.eta_effective();
        let scores = m.model.scores(&x).map_err(fail)?;
        let out = std::slice::from_raw_parts_mut(labels, n);
        for (o, (a, b)) in out.iter_mut().zip(scores) {
            *o = match classify(a, b, eta) {
                Label::InClass => 1,
                Label::Anomaly => -1,
            };
        }
        Ok(())
    })
}

/// Number of features the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gods_model_feature_dim(model: *const GodsModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.feature_dim())
}

/// Margin used for classification, or NaN for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gods_model_eta(model: *const GodsModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.model.eta_effective())
}

/// Copy of the last error message on this thread, or null. Free it with
/// [`gods_string_free`].
#[no_mangle]
pub extern "C" fn gods_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |s| s.clone().into_raw()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or come from [`gods_last_error_message`].
#[no_mangle]
pub unsafe extern "C" fn gods_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gods_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
