//! C ABI over the deltaiss toolkit.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`DissStatus`]; on failure the message is kept per thread and can be read
//! with [`diss_last_error`]. Matrices are row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use deltaiss::certify::{certify_theorem2, validate_certificate, Certificate};
use deltaiss::compose::factorize;
use deltaiss::io::{
    parse_architecture_file, parse_model_file, CertificateFile, GainsFile, ModelFile,
};
use deltaiss::models::{GenericRnn, Vector};
use deltaiss::numerics::{DenseMatrix, SymmetricMatrix};
use deltaiss::sdp::{SolveOptions, DEFAULT_BUDGET, DEFAULT_MARGIN};
use deltaiss::sim::simulate;
use deltaiss::synthesize::{design, structural_precheck};
use deltaiss::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    /// The condition could not be established within the solver budget.
    NotCertified = 4,
    NotSynthesized = 5,
    StructuralObstruction = 6,
    Numerical = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A loaded model in the generic form.
pub struct DissModel {
    file: ModelFile,
    generic: GenericRnn,
}

/// A validated Lyapunov certificate for a particular model.
pub struct DissCertificate {
    cert: Certificate,
    model: ModelFile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> DissStatus {
    match err {
        Error::Parse(_) | Error::Io(_) => DissStatus::Parse,
        Error::NotCertified { .. } => DissStatus::NotCertified,
        Error::NotSynthesized(_) => DissStatus::NotSynthesized,
        Error::StructuralObstruction(_) => DissStatus::StructuralObstruction,
        Error::Diverged { .. } | Error::Recovery(_) | Error::UndefinedMetric(_) => {
            DissStatus::Numerical
        }
        _ => DissStatus::InvalidInput,
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard<F>(f: F) -> DissStatus
where
    F: FnOnce() -> Result<(), DissStatus>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DissStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            DissStatus::Panic
        }
    }
}

fn fail(err: Error) -> DissStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> DissStatus {
    set_error(format!("{what} is null"));
    DissStatus::NullPointer
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, DissStatus> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        DissStatus::InvalidInput
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, DissStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], DissStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], DissStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn options(margin: f64, budget: usize) -> SolveOptions {
    let margin = if margin.is_finite() && margin >= 0.0 {
        margin
    } else {
        DEFAULT_MARGIN
    };
    let budget = if budget == 0 { DEFAULT_BUDGET } else { budget };
    SolveOptions::default()
        .with_margin(margin)
        .with_budget(budget)
}

fn into_c_string(s: String) -> Result<*mut c_char, DissStatus> {
    CString::new(s).map(CString::into_raw).map_err(|_| {
        set_error("output contains an interior NUL byte");
        DissStatus::Numerical
    })
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn diss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static version string of the toolkit.
#[no_mangle]
pub extern "C" fn diss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn diss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a model file from a JSON string.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn diss_model_from_json(
    json: *const c_char,
    out: *mut *mut DissModel,
) -> DissStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let file = parse_model_file(text).map_err(fail)?;
        let generic = file
            .model
            .to_model()
            .and_then(|m| m.to_generic())
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(DissModel { file, generic }));
        Ok(())
    })
}

/// Builds a generic model `x⁺ = f(Ax + Bu)`, `y = Cx + Du` from row-major
/// buffers. `activations` holds `n` NUL-terminated names (`identity`,
/// `tanh`, `sigmoid`, `relu`).
///
/// # Safety
/// Buffers must hold `n·n`, `n·m`, `l·n` and `l·m` values; `activations`
/// must point to `n` valid strings; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn diss_model_new(
    n: usize,
    m: usize,
    l: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    d: *const f64,
    activations: *const *const c_char,
    out: *mut *mut DissModel,
) -> DissStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if activations.is_null() && n > 0 {
            return Err(null("activations"));
        }
        let mat =
            |p, r, c, what| slice(p, r * c, what).map(|s| DenseMatrix::from_row_slice(r, c, s));
        let (a, b, c, d) = (
            mat(a, n, n, "a")?,
            mat(b, n, m, "b")?,
            mat(c, l, n, "c")?,
            mat(d, l, m, "d")?,
        );
        let mut specs = Vec::with_capacity(n);
        for i in 0..n {
            let kind = read_str(*activations.add(i), "activation name")?;
            specs.push(deltaiss::io::ActivationSpec {
                kind: kind.to_string(),
                lipschitz: None,
                bounded: None,
            });
        }
        let acts = specs
            .iter()
            .map(|s| s.to_activation())
            .collect::<deltaiss::Result<Vec<_>>>()
            .map_err(fail)?;
        let generic = GenericRnn::new(a, b, c, d, acts).map_err(fail)?;
        let file = ModelFile::new(deltaiss::io::ModelSpec::generic(&generic).map_err(fail)?);
        *out = Box::into_raw(Box::new(DissModel { file, generic }));
        Ok(())
    })
}

/// Frees a model. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn diss_model_free(model: *mut DissModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State, input and output dimensions of the lifted generic form.
///
/// # Safety
/// `model` must be a live handle; the output pointers may be NULL.
#[no_mangle]
pub unsafe extern "C" fn diss_model_dims(
    model: *const DissModel,
    n: *mut usize,
    m: *mut usize,
    l: *mut usize,
) -> DissStatus {
    guard(|| {
        let g = &handle(model, "model")?.generic;
        for (p, v) in [(n, g.n()), (m, g.m()), (l, g.l())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Searches for a structured Lyapunov certificate. `margin < 0` and
/// `budget = 0` select the defaults. [`DissStatus::NotCertified`] means the
/// condition was not established, not that the model is unstable.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn diss_certify(
    model: *const DissModel,
    margin: f64,
    budget: usize,
    out: *mut *mut DissCertificate,
) -> DissStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = handle(model, "model")?;
        let cert = certify_theorem2(&model.generic, &options(margin, budget)).map_err(fail)?;
        *out = Box::into_raw(Box::new(DissCertificate {
            cert,
            model: model.file.clone(),
        }));
        Ok(())
    })
}

/// Frees a certificate. NULL is ignored.
///
/// # Safety
/// `cert` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn diss_certificate_free(cert: *mut DissCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// `λmax(ÃᵀPÃ − P)` of the certificate, negative. NaN for a NULL handle.
///
/// # Safety
/// `cert` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn diss_certificate_gap(cert: *const DissCertificate) -> f64 {
    cert.as_ref().map_or(f64::NAN, |c| c.cert.lyapunov_gap)
}

/// Dimension of the certificate matrix, 0 for a NULL handle.
///
/// # Safety
/// `cert` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn diss_certificate_dim(cert: *const DissCertificate) -> usize {
    cert.as_ref().map_or(0, |c| c.cert.p.n())
}

/// Copies `P` into `buf` (row-major, `n·n` values).
///
/// # Safety
/// `cert` must be a live handle; `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn diss_certificate_p(
    cert: *const DissCertificate,
    buf: *mut f64,
    len: usize,
) -> DissStatus {
    guard(|| {
        let p = handle(cert, "certificate")?.cert.p.to_dense();
        let n = p.nrows();
        if len < n * n {
            set_error(format!("buffer holds {len} values, {} needed", n * n));
            return Err(DissStatus::BufferTooSmall);
        }
        let dst = slice_mut(buf, n * n, "buf")?;
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = p[(i, j)];
            }
        }
        Ok(())
    })
}

/// Serializes the certificate file. Free the result with [`diss_string_free`].
///
/// # Safety
/// `cert` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn diss_certificate_to_json(
    cert: *const DissCertificate,
    out: *mut *mut c_char,
) -> DissStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let c = handle(cert, "certificate")?;
        let file = CertificateFile::new(&c.model, &c.cert);
        let text =
            serde_json::to_string_pretty(&file).map_err(|e| fail(Error::Parse(e.to_string())))?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Checks a candidate `P` (row-major `n·n`) against the model. `passed` is
/// set to 1 when the certificate is valid and 0 otherwise; `gap` receives
/// `λmax(ÃᵀPÃ − P)`. Both outputs may be NULL.
///
/// # Safety
/// `model` must be a live handle; `p` must hold `n·n` values.
#[no_mangle]
pub unsafe extern "C" fn diss_validate(
    model: *const DissModel,
    p: *const f64,
    n: usize,
    passed: *mut i32,
    gap: *mut f64,
) -> DissStatus {
    guard(|| {
        let g = &handle(model, "model")?.generic;
        let dense = DenseMatrix::from_row_slice(n, n, slice(p, n * n, "p")?);
        let sym = SymmetricMatrix::from_dense(&dense).map_err(fail)?;
        let report = validate_certificate(g, &sym).map_err(fail)?;
        if !passed.is_null() {
            *passed = i32::from(report.passed);
        }
        if !gap.is_null() {
            *gap = report.lyapunov_gap;
        }
        Ok(())
    })
}

/// Simulates `steps` steps from `x0` (`n` values) under `inputs`
/// (`steps·m`, row per step) and writes `steps·l` outputs.
///
/// # Safety
/// `model` must be a live handle and the buffers must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn diss_simulate(
    model: *const DissModel,
    x0: *const f64,
    inputs: *const f64,
    steps: usize,
    outputs: *mut f64,
) -> DissStatus {
    guard(|| {
        let g = &handle(model, "model")?.generic;
        let (n, m, l) = (g.n(), g.m(), g.l());
        let x0 = Vector::from_column_slice(slice(x0, n, "x0")?);
        let u = slice(inputs, steps * m, "inputs")?;
        let u: Vec<Vector> = (0..steps)
            .map(|k| Vector::from_column_slice(&u[k * m..(k + 1) * m]))
            .collect();
        let t = simulate(g, &x0, &u).map_err(fail)?;
        let dst = slice_mut(outputs, steps * l, "outputs")?;
        for (k, y) in t.outputs.iter().enumerate() {
            dst[k * l..(k + 1) * l].copy_from_slice(y.as_slice());
        }
        Ok(())
    })
}

/// Designs a gain for an architecture file given as JSON and returns the
/// gains file as JSON. Free the result with [`diss_string_free`].
///
/// # Safety
/// `architecture_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn diss_synthesize(
    architecture_json: *const c_char,
    margin: f64,
    budget: usize,
    out: *mut *mut c_char,
) -> DissStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(architecture_json, "architecture_json")?;
        let arch = parse_architecture_file(text)
            .and_then(|f| f.architecture.to_architecture())
            .map_err(fail)?;
        let fac = factorize(&arch).map_err(fail)?;
        structural_precheck(&fac).map_err(fail)?;
        let synthesis = design(&fac, &options(margin, budget)).map_err(fail)?;
        let gains = GainsFile::new(&arch, fac.side, &synthesis).map_err(fail)?;
        let json =
            serde_json::to_string_pretty(&gains).map_err(|e| fail(Error::Parse(e.to_string())))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}
