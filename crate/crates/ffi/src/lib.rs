//! C ABI over `orbidual`.
//!
//! Objects cross the boundary as opaque handles created by `orb_*_new`-style
//! constructors and released by the matching `orb_*_free`. Every fallible call
//! returns an [`OrbStatus`]; on failure a message is kept per thread and read
//! with [`orb_last_error`]. Panics never unwind into C.
//!
//! Strings are UTF-8 and NUL-terminated. Output strings are copied into caller
//! buffers: `needed` receives the size including the terminator, and a short
//! buffer yields `ORB_STATUS_BUFFER_TOO_SMALL` without writing.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use orbidual::cli::{resolve_config, scenarios, CliError, ResidualReport};
use orbidual::dynamics::{lie_poisson_flow, Inertia};
use orbidual::extension::{check_alpha_condition, Cocycle, ExtendedDual, ShiftedCocycle};
use orbidual::groups::DoubleGroup;
use orbidual::liecore::Vector;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Config text rejected: unknown scenario, bad params or schema version.
    Config = 3,
    /// A computation failed (singular block, blow-up, factorization breakdown).
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

type Failure = (OrbStatus, String);

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> OrbStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => (OrbStatus::Ok, String::new()),
        Ok(Err(e)) => e,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            (OrbStatus::Panic, msg)
        }
    };
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
    status
}

fn null(what: &str) -> Failure {
    (OrbStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    (OrbStatus::InvalidArgument, msg.into())
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    (OrbStatus::Numerical, e.to_string())
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write<T>(ptr: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    ptr.write(v);
    Ok(())
}

unsafe fn copy_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), Failure> {
    let n = s.len() + 1;
    if !needed.is_null() {
        needed.write(n);
    }
    if buf.is_null() || cap < n {
        return Err((OrbStatus::BufferTooSmall, format!("buffer holds {cap} bytes, {n} needed")));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    buf.add(s.len()).write(0);
    Ok(())
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn orb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message (empty after a success).
///
/// # Safety
/// `buf` must hold `cap` writable bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn orb_last_error(buf: *mut c_char, cap: usize, needed: *mut usize) -> OrbStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    // Not routed through `guard`, which would overwrite the message.
    match copy_str(&msg, buf, cap, needed) {
        Ok(()) => OrbStatus::Ok,
        Err((s, _)) => s,
    }
}

// ---------------------------------------------------------------------------
// Doubles
// ---------------------------------------------------------------------------

/// A double Lie group `N x N*`.
pub struct OrbDouble(DoubleGroup);

/// The Lu-Weinstein double `AN(2) x SU(2)` inside `SL(2, C)`.
///
/// # Safety
/// `out` must be a valid pointer; the handle is released with [`orb_double_free`].
#[no_mangle]
pub unsafe extern "C" fn orb_double_lu_weinstein(out: *mut *mut OrbDouble) -> OrbStatus {
    guard(|| write(out, Box::into_raw(Box::new(OrbDouble(DoubleGroup::lu_weinstein()))), "out"))
}

/// The abelian double of `R^n`, `n >= 1`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_double_abelian(n: usize, out: *mut *mut OrbDouble) -> OrbStatus {
    guard(|| {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        write(out, Box::into_raw(Box::new(OrbDouble(DoubleGroup::abelian(n)))), "out")
    })
}

/// # Safety
/// `d` must come from an `orb_double_*` constructor and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn orb_double_free(d: *mut OrbDouble) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Dimension `n` of each factor.
///
/// # Safety
/// `d` must be a live handle and `n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_double_factor_dim(d: *const OrbDouble, n: *mut usize) -> OrbStatus {
    guard(|| write(n, handle(d, "double")?.0.n(), "n"))
}

/// Evaluates the condition `Pi_{n*}[X, alpha] = 0` for every `X` in `n`, with
/// `alpha` given by `len = n` coordinates in `n*`. `holds` is 1 or 0 and
/// `residual` the largest violation.
///
/// # Safety
/// `alpha` must hold `len` doubles; `holds` and `residual` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn orb_double_alpha_condition(
    d: *const OrbDouble,
    alpha: *const f64,
    len: usize,
    holds: *mut c_int,
    residual: *mut f64,
) -> OrbStatus {
    guard(|| {
        let dg = &handle(d, "double")?.0;
        let a = slice(alpha, len, "alpha")?;
        if len != dg.n() {
            return Err(invalid(format!("alpha has {len} entries, expected {}", dg.n())));
        }
        let (ok, worst) = check_alpha_condition(&Vector::from_row_slice(a), dg.algebra()).map_err(numerical)?;
        write(holds, ok as c_int, "holds")?;
        write(residual, worst, "residual")
    })
}

// ---------------------------------------------------------------------------
// Scenarios and reports
// ---------------------------------------------------------------------------

/// Outcome of a scenario run.
pub struct OrbReport(ResidualReport);

/// Runs a scenario from config JSON (same schema as the command line,
/// `spec_version` 1). Relative `include` paths resolve against `base_dir`,
/// which may be null for the working directory. No artifacts are written.
///
/// # Safety
/// `config_json` must be a NUL-terminated string, `base_dir` null or one, and
/// `out` a valid pointer. Release the report with [`orb_report_free`].
#[no_mangle]
pub unsafe extern "C" fn orb_scenario_run(
    config_json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut OrbReport,
) -> OrbStatus {
    guard(|| {
        let text = as_str(config_json, "config_json")?;
        let dir = if base_dir.is_null() { "." } else { as_str(base_dir, "base_dir")? };
        let label = Path::new(dir).join("<config>");
        let (res, _) = resolve_config(text, &label).map_err(|e| (OrbStatus::Config, e.to_string()))?;
        let outcome = scenarios::run(&res.name, &res.params, res.seed).map_err(|e| match e {
            CliError::Usage(_) | CliError::Config(_) => (OrbStatus::Config, e.to_string()),
            _ => numerical(e),
        })?;
        write(out, Box::into_raw(Box::new(OrbReport(outcome.report))), "out")
    })
}

/// # Safety
/// `r` must come from [`orb_scenario_run`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn orb_report_free(r: *mut OrbReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// 1 when every metric lies within its bound.
///
/// # Safety
/// `r` must be a live handle and `pass` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_report_pass(r: *const OrbReport, pass: *mut c_int) -> OrbStatus {
    guard(|| write(pass, handle(r, "report")?.0.pass as c_int, "pass"))
}

/// Value of a named metric; `ORB_STATUS_INVALID_ARGUMENT` when absent.
///
/// # Safety
/// `r` must be a live handle, `name` a NUL-terminated string and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orb_report_metric(r: *const OrbReport, name: *const c_char, value: *mut f64) -> OrbStatus {
    guard(|| {
        let rep = &handle(r, "report")?.0;
        let name = as_str(name, "name")?;
        let v = rep.metrics.get(name).ok_or_else(|| invalid(format!("no metric named {name:?}")))?;
        write(value, *v, "value")
    })
}

/// The report as pretty JSON.
///
/// # Safety
/// `r` must be a live handle; `buf` must hold `cap` writable bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn orb_report_json(
    r: *const OrbReport,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> OrbStatus {
    guard(|| copy_str(&handle(r, "report")?.0.to_json(), buf, cap, needed))
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// Uniformly sampled trajectory of coordinate vectors.
pub struct OrbTrajectory {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    dim: usize,
}

/// Lie-Poisson flow of the free rigid body on `se(2)*` with principal moments
/// `i1 < i2 < i3`, from `beta0` (3 doubles) over `[0, t_end]` with step `dt`.
///
/// # Safety
/// `beta0` must hold 3 doubles and `out` be a valid pointer. Release with [`orb_trajectory_free`].
#[no_mangle]
pub unsafe extern "C" fn orb_rigid_body_flow(
    i1: f64,
    i2: f64,
    i3: f64,
    beta0: *const f64,
    t_end: f64,
    dt: f64,
    out: *mut *mut OrbTrajectory,
) -> OrbStatus {
    guard(|| {
        if !(i1 > 0.0 && i1 < i2 && i2 < i3) {
            return Err(invalid("moments must satisfy 0 < i1 < i2 < i3"));
        }
        let beta = Vector::from_row_slice(slice(beta0, 3, "beta0")?);
        let inertia = Inertia { i1, i2, i3 };
        let group = inertia.group();
        let c = ShiftedCocycle::unshifted(Cocycle::Zero, 3);
        let traj = lie_poisson_flow(&inertia.hamiltonian(), &c, group.algebra(), &ExtendedDual::unit(beta), t_end, dt)
            .map_err(|e| invalid(e.to_string()))?;
        let states = traj.states.iter().map(|s| s.xi.iter().cloned().collect()).collect();
        let t = OrbTrajectory { times: traj.times, states, dim: 3 };
        write(out, Box::into_raw(Box::new(t)), "out")
    })
}

/// # Safety
/// `t` must come from a trajectory constructor and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn orb_trajectory_free(t: *mut OrbTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples and coordinates per sample.
///
/// # Safety
/// `t` must be a live handle; `len` and `dim` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn orb_trajectory_shape(t: *const OrbTrajectory, len: *mut usize, dim: *mut usize) -> OrbStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        write(len, t.times.len(), "len")?;
        write(dim, t.dim, "dim")
    })
}

/// Time and coordinates of sample `i`; `state` must hold `dim` doubles.
///
/// # Safety
/// `t` must be a live handle, `time` a valid pointer and `state` hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn orb_trajectory_sample(
    t: *const OrbTrajectory,
    i: usize,
    time: *mut f64,
    state: *mut f64,
    cap: usize,
) -> OrbStatus {
    guard(|| {
        let t = handle(t, "trajectory")?;
        let s = t.states.get(i).ok_or_else(|| invalid(format!("sample {i} out of range {}", t.times.len())))?;
        if state.is_null() {
            return Err(null("state"));
        }
        if cap < t.dim {
            return Err((OrbStatus::BufferTooSmall, format!("state holds {cap} doubles, {} needed", t.dim)));
        }
        std::ptr::copy_nonoverlapping(s.as_ptr(), state, t.dim);
        write(time, t.times[i], "time")
    })
}
