//! C ABI for `kktcont`.
//!
//! Problems and schedules are opaque handles created by `*_new` and
//! released by `*_free`. Every fallible call returns a [`KktStatus`]; on
//! failure [`kkt_last_error`] describes the most recent error on the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kktcont::examples;
use kktcont::staged::StagedProblem;
use kktcont::successive_driver::{kkt_check, Driver, Intervention, Outcome, Status};
use kktcont::Error;

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// No problem, variant, schedule or quantity of that name.
    UnknownName = 3,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 4,
    /// The numerical computation failed.
    Numerical = 5,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 6,
    /// An internal error (a caught panic).
    Internal = 7,
}

/// State of a schedule after a step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KktStageStatus {
    /// A stage finished and more remain.
    Continue = 0,
    /// All stages finished.
    Done = 1,
    /// Halted at an MX point.
    HaltedMx = 2,
    /// Halted at a domain boundary.
    HaltedBoundary = 3,
    /// Halted when the step budget ran out.
    HaltedMaxSteps = 4,
}

/// Dimensions of a problem.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KktDims {
    /// Dimension of the solution manifold of the equality constraints.
    pub d: usize,
    /// Number of monitor functions.
    pub l: usize,
    /// Number of inequality constraints.
    pub q: usize,
    /// Number of problem unknowns.
    pub n_u: usize,
}

/// Opaque problem handle.
pub struct KktProblem {
    inner: StagedProblem,
}

/// Opaque handle of a running schedule preset.
pub struct KktSchedule {
    driver: Driver,
    script: Vec<Intervention>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> KktStatus {
    match e {
        Error::UnknownProblem(_) | Error::UnknownParameter(_) => KktStatus::UnknownName,
        Error::Config(_)
        | Error::Dimension(_)
        | Error::ParameterConflict(_)
        | Error::ManifoldDimension(_)
        | Error::Schedule(_)
        | Error::ActiveAtStart { .. } => KktStatus::InvalidArgument,
        _ => KktStatus::Numerical,
    }
}

/// Runs `f`, recording errors and turning panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<(), KktStatus>) -> KktStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KktStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal error (panic)");
            KktStatus::Internal
        }
    }
}

fn fail(e: Error) -> KktStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn err(status: KktStatus, msg: &str) -> KktStatus {
    set_error(msg);
    status
}

/// # Safety
/// `s` is null or a NUL-terminated string.
unsafe fn opt_str<'a>(s: *const c_char) -> Result<Option<&'a str>, KktStatus> {
    if s.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(s)
        .to_str()
        .map(Some)
        .map_err(|_| err(KktStatus::InvalidUtf8, "string argument is not UTF-8"))
}

/// # Safety
/// `s` is null or a NUL-terminated string.
unsafe fn req_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, KktStatus> {
    opt_str(s)?.ok_or_else(|| err(KktStatus::NullPointer, &format!("`{what}` is null")))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), KktStatus> {
    if p.is_null() {
        Err(err(KktStatus::NullPointer, &format!("`{what}` is null")))
    } else {
        Ok(())
    }
}

/// Message of the most recent error on this thread, or an empty string.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn kkt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kkt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The Fischer–Burmeister function `√(a² + b²) − a − b`.
#[no_mangle]
pub extern "C" fn kkt_fb_chi(a: f64, b: f64) -> f64 {
    kktcont::complementarity::fb_chi(a, b)
}

/// Builds a registered problem. `variant` may be null for the default.
///
/// # Safety
/// `name` and `variant` are null or NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kkt_problem_new(
    name: *const c_char,
    variant: *const c_char,
    out: *mut *mut KktProblem,
) -> KktStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let name = req_str(name, "name")?;
        let variant = opt_str(variant)?;
        let p = examples::build(name, variant).map_err(fail)?;
        *out = Box::into_raw(Box::new(KktProblem { inner: p }));
        Ok(())
    })
}

/// Releases a problem; null is ignored.
///
/// # Safety
/// `p` is null or came from [`kkt_problem_new`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn kkt_problem_free(p: *mut KktProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Writes the dimensions of `p`.
///
/// # Safety
/// `p` is a live problem handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kkt_problem_dims(p: *const KktProblem, out: *mut KktDims) -> KktStatus {
    guard(|| {
        non_null(p, "problem")?;
        non_null(out, "out")?;
        let p = &(*p).inner;
        *out = KktDims {
            d: p.manifold_dim_phi(),
            l: p.n_monitors(),
            q: p.n_ineq(),
            n_u: p.n_u(),
        };
        Ok(())
    })
}

/// Evaluates the monitors `Ψ(u)` and inequalities `G(u)` at `u` (length
/// `n_u`). `psi` must hold `l` values and `g` must hold `q` values; either
/// may be null when not wanted.
///
/// # Safety
/// `p` is a live handle; `u` holds `n_u` doubles; non-null outputs are
/// large enough.
#[no_mangle]
pub unsafe extern "C" fn kkt_problem_eval(
    p: *const KktProblem,
    u: *const f64,
    n_u: usize,
    psi: *mut f64,
    g: *mut f64,
) -> KktStatus {
    guard(|| {
        non_null(p, "problem")?;
        non_null(u, "u")?;
        let p = &(*p).inner;
        if n_u != p.n_u() {
            return Err(err(
                KktStatus::InvalidArgument,
                &format!("expected {} unknowns, got {n_u}", p.n_u()),
            ));
        }
        let v = p
            .eval_stages(std::slice::from_raw_parts(u, n_u))
            .map_err(fail)?;
        if !psi.is_null() {
            ptr::copy_nonoverlapping(v.psi.as_ptr(), psi, v.psi.len());
        }
        if !g.is_null() {
            ptr::copy_nonoverlapping(v.g.as_ptr(), g, v.g.len());
        }
        Ok(())
    })
}

/// Sets up a registered schedule preset, e.g. (`"doedel"`, `"feasible"`).
///
/// # Safety
/// `problem` and `schedule` are NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_new(
    problem: *const c_char,
    schedule: *const c_char,
    out: *mut *mut KktSchedule,
) -> KktStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let problem = req_str(problem, "problem")?;
        let schedule = req_str(schedule, "schedule")?;
        let preset = examples::preset(problem, schedule).map_err(|e| match e {
            Error::Config(m) => {
                set_error(&m);
                KktStatus::UnknownName
            }
            e => fail(e),
        })?;
        let driver = Driver::new(&preset.problem, preset.schedule)
            .map_err(fail)?
            .with_settings(preset.settings)
            .with_bounds(preset.bounds);
        *out = Box::into_raw(Box::new(KktSchedule {
            driver,
            script: preset.script,
        }));
        Ok(())
    })
}

/// Releases a schedule; null is ignored.
///
/// # Safety
/// `s` is null or came from [`kkt_schedule_new`] and was not freed.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_free(s: *mut KktSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

fn stage_status(s: Status) -> KktStageStatus {
    match s {
        Status::Continue => KktStageStatus::Continue,
        Status::Done => KktStageStatus::Done,
        Status::Halted(Outcome::Mx) => KktStageStatus::HaltedMx,
        Status::Halted(Outcome::Boundary) => KktStageStatus::HaltedBoundary,
        Status::Halted(_) => KktStageStatus::HaltedMaxSteps,
    }
}

/// Runs the next stage.
///
/// # Safety
/// `s` is a live schedule handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_step(
    s: *mut KktSchedule,
    out: *mut KktStageStatus,
) -> KktStatus {
    guard(|| {
        non_null(s, "schedule")?;
        non_null(out, "out")?;
        let d = &mut (*s).driver;
        if d.is_done() {
            *out = KktStageStatus::Done;
            return Ok(());
        }
        let st = d.step().map_err(fail)?;
        *out = if st == Status::Continue && d.is_done() {
            KktStageStatus::Done
        } else {
            stage_status(st)
        };
        Ok(())
    })
}

/// Runs all remaining stages, applying the preset's constraint
/// activations at MX halts.
///
/// # Safety
/// `s` is a live schedule handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_run(
    s: *mut KktSchedule,
    out: *mut KktStageStatus,
) -> KktStatus {
    guard(|| {
        non_null(s, "schedule")?;
        non_null(out, "out")?;
        let s = &mut *s;
        let st = s.driver.run_scripted(&s.script).map_err(fail)?;
        *out = stage_status(st);
        Ok(())
    })
}

/// Replaces complementarity condition `k` by `G_k = 0` after a halt; the
/// next step continues from the halt point.
///
/// # Safety
/// `s` is a live schedule handle.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_activate(s: *mut KktSchedule, k: usize) -> KktStatus {
    guard(|| {
        non_null(s, "schedule")?;
        let d = &mut (*s).driver;
        if k >= d.problem().n_ineq() {
            return Err(err(
                KktStatus::InvalidArgument,
                &format!("no inequality {k}"),
            ));
        }
        d.activate(k).map_err(fail)
    })
}

/// Number of completed runs.
///
/// # Safety
/// `s` is a live schedule handle.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_runs(s: *const KktSchedule) -> usize {
    if s.is_null() {
        return 0;
    }
    (*s).driver.records().len()
}

/// Value of a named quantity (`mu_J`, `sigma_g1`, `x`, ...) at the current
/// point of the schedule.
///
/// # Safety
/// `s` is a live handle; `name` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_quantity(
    s: *const KktSchedule,
    name: *const c_char,
    out: *mut f64,
) -> KktStatus {
    guard(|| {
        non_null(s, "schedule")?;
        non_null(out, "out")?;
        let name = req_str(name, "name")?;
        let d = &(*s).driver;
        *out = d.problem().quantity(d.point(), name).ok_or_else(|| {
            err(
                KktStatus::UnknownName,
                &format!("unknown quantity `{name}`"),
            )
        })?;
        Ok(())
    })
}

/// Copies the unknowns `u` of the current point into `buf`. `*len` holds
/// the capacity on entry and the number of unknowns on return; a null or
/// short buffer gives `BufferTooSmall`.
///
/// # Safety
/// `s` is a live handle; `len` is writable; `buf` holds `*len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_point(
    s: *const KktSchedule,
    buf: *mut f64,
    len: *mut usize,
) -> KktStatus {
    guard(|| {
        non_null(s, "schedule")?;
        non_null(len, "len")?;
        let u = &(*s).driver.point().u;
        let cap = *len;
        *len = u.len();
        if buf.is_null() || cap < u.len() {
            return Err(err(
                KktStatus::BufferTooSmall,
                &format!("need {} doubles", u.len()),
            ));
        }
        ptr::copy_nonoverlapping(u.as_ptr(), buf, u.len());
        Ok(())
    })
}

/// Checks the first-order optimality conditions at the current point;
/// writes 1 to `pass` when all hold and 0 otherwise.
///
/// # Safety
/// `s` is a live handle; `pass` is writable.
#[no_mangle]
pub unsafe extern "C" fn kkt_schedule_kkt(s: *const KktSchedule, pass: *mut c_int) -> KktStatus {
    guard(|| {
        non_null(s, "schedule")?;
        non_null(pass, "pass")?;
        let d = &(*s).driver;
        let r = kkt_check(d.problem(), d.point()).map_err(fail)?;
        *pass = c_int::from(r.pass());
        Ok(())
    })
}
