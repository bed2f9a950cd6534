//! C interface to `momineq`.
//!
//! Problems and outcomes are opaque handles created by `*_new` / `*_test`
//! functions and released with the matching `*_free`. Matrices are passed
//! row-major. Every function returns an [`MiStatus`]; on failure the message
//! is available from [`mi_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use momineq::linalg::{Matrix, Vector};
use momineq::{Error, FullVectorProblem, PolyhedralSpec, Settings, SubvectorProblem, TestOutcome, Tolerances, Variant};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPositiveDefinite = 3,
    Infeasible = 4,
    Numerical = 5,
    BudgetExceeded = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiVariant {
    Cc = 0,
    Rcc = 1,
}

impl From<MiVariant> for Variant {
    fn from(v: MiVariant) -> Self {
        match v {
            MiVariant::Cc => Variant::Cc,
            MiVariant::Rcc => Variant::Rcc,
        }
    }
}

/// Solver settings; fill with [`mi_settings_default`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiSettings {
    pub tol_feas: f64,
    pub tol_active: f64,
    pub tol_rank: f64,
    pub tol_kkt: f64,
    pub tol_vertex_dedupe: f64,
    pub tol_zero_statistic: f64,
    pub ridge: f64,
    pub delta_ridge: f64,
    pub vertex_budget: u64,
}

impl From<Settings> for MiSettings {
    fn from(s: Settings) -> Self {
        let t = s.tolerances;
        Self {
            tol_feas: t.tol_feas,
            tol_active: t.tol_active,
            tol_rank: t.tol_rank,
            tol_kkt: t.tol_kkt,
            tol_vertex_dedupe: t.tol_vertex_dedupe,
            tol_zero_statistic: t.tol_zero_statistic,
            ridge: s.ridge,
            delta_ridge: s.delta_ridge,
            vertex_budget: s.vertex_budget.min(u64::MAX as u128) as u64,
        }
    }
}

impl From<MiSettings> for Settings {
    fn from(s: MiSettings) -> Self {
        Settings {
            tolerances: Tolerances {
                tol_feas: s.tol_feas,
                tol_active: s.tol_active,
                tol_rank: s.tol_rank,
                tol_kkt: s.tol_kkt,
                tol_vertex_dedupe: s.tol_vertex_dedupe,
                tol_zero_statistic: s.tol_zero_statistic,
            },
            ridge: s.ridge,
            delta_ridge: s.delta_ridge,
            vertex_budget: s.vertex_budget as u128,
        }
    }
}

/// Scalar part of a test outcome. `tau_hat` is NaN when the refinement was
/// not computed and may be infinite.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiSummary {
    pub statistic: f64,
    pub r_hat: usize,
    pub tau_hat: f64,
    pub beta_hat: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub kkt_residual: f64,
}

/// Opaque full-vector problem.
pub struct MiFullProblem(FullVectorProblem);

/// Opaque subvector problem.
pub struct MiSubProblem(SubvectorProblem);

/// Opaque test outcome.
pub struct MiOutcome(TestOutcome);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(MiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Argument(_) | Error::Dimension(_) => MiStatus::InvalidArgument,
            Error::NotPositiveDefinite { .. } => MiStatus::NotPositiveDefinite,
            Error::Infeasible(_) => MiStatus::Infeasible,
            Error::BudgetExceeded { .. } => MiStatus::BudgetExceeded,
            _ => MiStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(MiStatus::NullPointer, format!("{name} is NULL"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MiStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            MiStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, name: &str) -> Result<Matrix, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(MiStatus::InvalidArgument, format!("{name} is too large")))?;
    Ok(Matrix::from_row_slice(rows, cols, slice(p, len, name)?))
}

unsafe fn vector(p: *const f64, len: usize, name: &str) -> Result<Vector, Failure> {
    Ok(Vector::from_column_slice(slice(p, len, name)?))
}

unsafe fn settings_from(p: *const MiSettings) -> Settings {
    if p.is_null() {
        Settings::default()
    } else {
        (*p).into()
    }
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the
/// same thread.
#[no_mangle]
pub extern "C" fn mi_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mi_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string contains a NUL"),
    };
    VERSION.as_ptr()
}

/// # Safety
/// `out` must be a valid pointer to writable memory for one `MiSettings`.
#[no_mangle]
pub unsafe extern "C" fn mi_settings_default(out: *mut MiSettings) -> MiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Settings::default().into();
        Ok(())
    })
}

/// Quantile of the chi-squared distribution with `r` degrees of freedom;
/// `r = 0` is the point mass at zero.
///
/// # Safety
/// `out` must be a valid pointer to one writable `double`.
#[no_mangle]
pub unsafe extern "C" fn mi_chi2_quantile(r: u32, p: f64, out: *mut f64) -> MiStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = momineq::dist::chi2_quantile(r, p)?;
        Ok(())
    })
}

/// Problem `A E[m] <= b` with `a` a row-major `k x d_m` matrix, `mean` of
/// length `d_m` and `variance` the row-major `d_m x d_m` estimate of the
/// variance of `√n m̄`.
///
/// # Safety
/// Every pointer must reference at least as many readable doubles as the
/// dimensions imply, and `out` must be writable. Free the handle with
/// [`mi_full_problem_free`].
#[no_mangle]
pub unsafe extern "C" fn mi_full_problem_new(
    mean: *const f64,
    variance: *const f64,
    d_m: usize,
    n: usize,
    a: *const f64,
    b: *const f64,
    k: usize,
    alpha: f64,
    out: *mut *mut MiFullProblem,
) -> MiStatus {
    guard(|| {
        let spec = PolyhedralSpec::new(matrix(a, k, d_m, "a")?, vector(b, k, "b")?)?;
        let problem = FullVectorProblem::new(
            vector(mean, d_m, "mean")?,
            matrix(variance, d_m, d_m, "variance")?,
            n,
            spec,
            alpha,
        )?;
        write_out(out, MiFullProblem(problem))
    })
}

/// # Safety
/// `problem` must be NULL or a handle from [`mi_full_problem_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn mi_full_problem_free(problem: *mut MiFullProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs the test. `settings` may be NULL for the defaults.
///
/// # Safety
/// `problem` must be a live handle, `settings` NULL or valid, and `out`
/// writable. Free the outcome with [`mi_outcome_free`].
#[no_mangle]
pub unsafe extern "C" fn mi_full_problem_test(
    problem: *const MiFullProblem,
    variant: MiVariant,
    settings: *const MiSettings,
    out: *mut *mut MiOutcome,
) -> MiStatus {
    guard(|| {
        let problem = problem.as_ref().ok_or_else(|| null("problem"))?;
        let settings = settings_from(settings);
        settings.validate()?;
        let outcome = problem.0.run_test(variant.into(), &settings)?;
        write_out(out, MiOutcome(outcome))
    })
}

/// Problem `B E[m|Z] <= C δ + d` for some `δ`: `b` is row-major `k x d_m`,
/// `c` row-major `k x p`, `d` of length `k`.
///
/// # Safety
/// As for [`mi_full_problem_new`]. Free the handle with
/// [`mi_sub_problem_free`].
#[no_mangle]
pub unsafe extern "C" fn mi_sub_problem_new(
    b: *const f64,
    c: *const f64,
    d: *const f64,
    k: usize,
    p: usize,
    mean: *const f64,
    variance: *const f64,
    d_m: usize,
    n: usize,
    alpha: f64,
    out: *mut *mut MiSubProblem,
) -> MiStatus {
    guard(|| {
        let problem = SubvectorProblem::new(
            matrix(b, k, d_m, "b")?,
            matrix(c, k, p, "c")?,
            vector(d, k, "d")?,
            vector(mean, d_m, "mean")?,
            matrix(variance, d_m, d_m, "variance")?,
            n,
            alpha,
        )?;
        write_out(out, MiSubProblem(problem))
    })
}

/// # Safety
/// `problem` must be NULL or a handle from [`mi_sub_problem_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn mi_sub_problem_free(problem: *mut MiSubProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// # Safety
/// As for [`mi_full_problem_test`].
#[no_mangle]
pub unsafe extern "C" fn mi_sub_problem_test(
    problem: *const MiSubProblem,
    variant: MiVariant,
    settings: *const MiSettings,
    out: *mut *mut MiOutcome,
) -> MiStatus {
    guard(|| {
        let problem = problem.as_ref().ok_or_else(|| null("problem"))?;
        let settings = settings_from(settings);
        settings.validate()?;
        let outcome = problem.0.run_test(variant.into(), &settings, None)?;
        write_out(out, MiOutcome(outcome))
    })
}

/// # Safety
/// `outcome` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mi_outcome_summary(outcome: *const MiOutcome, out: *mut MiSummary) -> MiStatus {
    guard(|| {
        let o = &outcome.as_ref().ok_or_else(|| null("outcome"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = MiSummary {
            statistic: o.statistic,
            r_hat: o.r_hat,
            tau_hat: o.tau_hat.unwrap_or(f64::NAN),
            beta_hat: o.beta_hat,
            critical_value: o.critical_value,
            reject: o.reject,
            kkt_residual: o.diagnostics.kkt_residual,
        };
        Ok(())
    })
}

/// Copies the restricted estimate into `buf`. `len` is the capacity of
/// `buf`; the full length is stored in `written` even when `buf` is too
/// small, in which case nothing is copied and `MI_STATUS_INVALID_ARGUMENT`
/// is returned.
///
/// # Safety
/// `outcome` must be a live handle, `buf` must hold `len` doubles (it may
/// be NULL when `len` is 0) and `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mi_outcome_restricted_estimate(
    outcome: *const MiOutcome,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> MiStatus {
    guard(|| {
        let o = &outcome.as_ref().ok_or_else(|| null("outcome"))?.0;
        if written.is_null() {
            return Err(null("written"));
        }
        let values = &o.restricted_estimate;
        *written = values.len();
        if len < values.len() {
            return Err(Failure(
                MiStatus::InvalidArgument,
                format!("buffer holds {len} values, {} needed", values.len()),
            ));
        }
        if !values.is_empty() {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        }
        Ok(())
    })
}

/// The full outcome as JSON. Free the string with [`mi_string_free`].
///
/// # Safety
/// `outcome` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mi_outcome_to_json(outcome: *const MiOutcome, out: *mut *mut c_char) -> MiStatus {
    guard(|| {
        let o = &outcome.as_ref().ok_or_else(|| null("outcome"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(o).map_err(|e| Failure(MiStatus::Numerical, e.to_string()))?;
        *out = CString::new(text).map_err(|e| Failure(MiStatus::Numerical, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `outcome` must be NULL or a handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn mi_outcome_free(outcome: *mut MiOutcome) {
    if !outcome.is_null() {
        drop(Box::from_raw(outcome));
    }
}

/// # Safety
/// `s` must be NULL or a string returned by this library that has not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn mi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
