//! C ABI over `primlow-core`.
//!
//! Every function returns a [`PrimlowStatus`]; on failure the message is
//! available from [`primlow_last_error`] on the same thread. Solvers are
//! opaque handles released with [`primlow_solver_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use primlow_core::cpe::{advance_to, energy, step, CpeState, StepControl};
use primlow_core::diagnostics::fit_rate;
use primlow_core::fields::{Field2, Field3, Grid, Planar};
use primlow_core::hydrostatics::{check_admissible, BackgroundProfile, Params};
use primlow_core::Error;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimlowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidParams = 3,
    Inadmissible = 4,
    Vacuum = 5,
    NoContraction = 6,
    BlowUp = 7,
    BoundaryViolation = 8,
    DegenerateFit = 9,
    Internal = 10,
}

/// Non-dimensional constants, mirrored field for field.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PrimlowParams {
    pub gamma: f64,
    pub theta: f64,
    pub kappa: f64,
    pub delta: f64,
    /// Rossby number; infinity disables rotation.
    pub ro: f64,
    pub mu: f64,
    pub nu: f64,
}

impl From<PrimlowParams> for Params {
    fn from(p: PrimlowParams) -> Self {
        Params {
            gamma: p.gamma,
            theta: p.theta,
            kappa: p.kappa,
            delta: p.delta,
            ro: p.ro,
            mu: p.mu,
            nu: p.nu,
        }
    }
}

impl From<Params> for PrimlowParams {
    fn from(p: Params) -> Self {
        PrimlowParams {
            gamma: p.gamma,
            theta: p.theta,
            kappa: p.kappa,
            delta: p.delta,
            ro: p.ro,
            mu: p.mu,
            nu: p.nu,
        }
    }
}

/// Opaque compressible solver.
pub struct PrimlowSolver {
    state: CpeState,
    params: Params,
    control: StepControl,
    background: BackgroundProfile,
}

/// Which field to copy out of a solver.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimlowField {
    /// z-independent density fluctuation, `nx * ny` values.
    R = 0,
    U1 = 1,
    U2 = 2,
    W = 3,
    Rho = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PrimlowStatus {
    match e {
        Error::InvalidParams(_) | Error::InvalidGrid(_) => PrimlowStatus::InvalidParams,
        Error::Inadmissible(_) => PrimlowStatus::Inadmissible,
        Error::Vacuum { .. } => PrimlowStatus::Vacuum,
        Error::NoContraction { .. } => PrimlowStatus::NoContraction,
        Error::BlowUp { .. } => PrimlowStatus::BlowUp,
        Error::BoundaryViolation { .. } => PrimlowStatus::BoundaryViolation,
        Error::DegenerateFit(_) => PrimlowStatus::DegenerateFit,
        _ => PrimlowStatus::Internal,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PrimlowStatus, String)>) -> PrimlowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PrimlowStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PrimlowStatus::Internal
        }
    }
}

fn core_err(e: Error) -> (PrimlowStatus, String) {
    (status_of(&e), e.to_string())
}

fn null() -> (PrimlowStatus, String) {
    (PrimlowStatus::NullPointer, "null pointer argument".into())
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn primlow_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Fill `out` with the default constants.
///
/// # Safety
/// `out` must be null or point to writable memory for one `PrimlowParams`.
#[no_mangle]
pub unsafe extern "C" fn primlow_params_default(out: *mut PrimlowParams) -> PrimlowStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(null)?;
        *out = Params::default().into();
        Ok(())
    })
}

unsafe fn input<'a>(p: *const f64, len: usize) -> Option<&'a [f64]> {
    (!p.is_null()).then(|| slice::from_raw_parts(p, len))
}

/// Create a solver on an `nx x ny x nz` grid.
///
/// `r0` holds `nx * ny` values, `u1` and `u2` hold `nx * ny * nz` values in
/// (k, j, i) order; any of them may be null for zero. The initial data must
/// pass the admissibility gates.
///
/// # Safety
/// Non-null arrays must hold the stated number of values; `params` and
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn primlow_solver_new(
    params: *const PrimlowParams,
    nx: usize,
    ny: usize,
    nz: usize,
    r0: *const f64,
    u1: *const f64,
    u2: *const f64,
    out: *mut *mut PrimlowSolver,
) -> PrimlowStatus {
    guard(|| {
        let params: Params = (*params.as_ref().ok_or_else(null)?).into();
        let out = out.as_mut().ok_or_else(null)?;
        *out = ptr::null_mut();
        params.validate().map_err(core_err)?;
        let grid = Grid::new(nx, ny, nz, params.kappa).map_err(core_err)?;
        let n2 = grid.plane_len();
        let n3 = grid.len3();
        let r = match input(r0, n2) {
            Some(v) => Field2::from_values(&grid, v.to_vec()).map_err(core_err)?,
            None => Field2::zeros(&grid),
        };
        let vel = |p: *const f64| -> Result<Field3, (PrimlowStatus, String)> {
            match input(p, n3) {
                Some(v) => Field3::from_values(&grid, v.to_vec()).map_err(core_err),
                None => Ok(Field3::zeros(&grid)),
            }
        };
        let u = [vel(u1)?, vel(u2)?];
        let rep = check_admissible(&params, &r, f64::INFINITY);
        if !rep.is_admissible() {
            return Err((PrimlowStatus::Inadmissible, rep.messages.join("; ")));
        }
        let control = StepControl::default();
        let state = CpeState::new(0.0, r, u, &params, &control).map_err(core_err)?;
        let background = BackgroundProfile::new(&grid, &params).map_err(core_err)?;
        *out = Box::into_raw(Box::new(PrimlowSolver {
            state,
            params,
            control,
            background,
        }));
        Ok(())
    })
}

/// Release a solver; null is ignored.
///
/// # Safety
/// `h` must be null or a handle from [`primlow_solver_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn primlow_solver_free(h: *mut PrimlowSolver) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Take `n` steps at the stable time step.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn primlow_solver_step(h: *mut PrimlowSolver, n: usize) -> PrimlowStatus {
    guard(|| {
        let s = h.as_mut().ok_or_else(null)?;
        for _ in 0..n {
            s.state = step(&s.state, &s.params, &s.control).map_err(core_err)?;
        }
        Ok(())
    })
}

/// Advance until `t_end`, landing on it exactly.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn primlow_solver_advance_to(
    h: *mut PrimlowSolver,
    t_end: f64,
) -> PrimlowStatus {
    guard(|| {
        let s = h.as_mut().ok_or_else(null)?;
        if !t_end.is_finite() {
            return Err((PrimlowStatus::InvalidArgument, format!("t_end = {t_end}")));
        }
        s.state = advance_to(&s.state, t_end, &s.params, &s.control, |_| {}).map_err(core_err)?;
        Ok(())
    })
}

/// Current time.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn primlow_solver_time(
    h: *const PrimlowSolver,
    out: *mut f64,
) -> PrimlowStatus {
    guard(|| {
        let s = h.as_ref().ok_or_else(null)?;
        *out.as_mut().ok_or_else(null)? = s.state.t;
        Ok(())
    })
}

/// `(1/2) int rho |u|^2` plus the scaled relative entropy.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn primlow_solver_energy(
    h: *const PrimlowSolver,
    out: *mut f64,
) -> PrimlowStatus {
    guard(|| {
        let s = h.as_ref().ok_or_else(null)?;
        *out.as_mut().ok_or_else(null)? = energy(&s.state, &s.background, &s.params);
        Ok(())
    })
}

/// Copy a field into `buf`, which must hold exactly its value count
/// (`nx * ny` for `R`, `nx * ny * nz` otherwise).
///
/// # Safety
/// `h` must be a live handle and `buf` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn primlow_solver_copy_field(
    h: *const PrimlowSolver,
    which: PrimlowField,
    buf: *mut f64,
    len: usize,
) -> PrimlowStatus {
    guard(|| {
        let s = h.as_ref().ok_or_else(null)?;
        if buf.is_null() {
            return Err(null());
        }
        let src = match which {
            PrimlowField::R => s.state.r.values(),
            PrimlowField::U1 => s.state.u[0].values(),
            PrimlowField::U2 => s.state.u[1].values(),
            PrimlowField::W => s.state.w.values(),
            PrimlowField::Rho => s.state.rho.values(),
        };
        if src.len() != len {
            return Err((
                PrimlowStatus::InvalidArgument,
                format!("buffer holds {len} values, field has {}", src.len()),
            ));
        }
        slice::from_raw_parts_mut(buf, len).copy_from_slice(src);
        Ok(())
    })
}

/// Log-log least-squares slope of `values` against `deltas`.
///
/// # Safety
/// `deltas` and `values` must hold `n` values; `slope` and `r2` writable.
#[no_mangle]
pub unsafe extern "C" fn primlow_fit_rate(
    deltas: *const f64,
    values: *const f64,
    n: usize,
    slope: *mut f64,
    r2: *mut f64,
) -> PrimlowStatus {
    guard(|| {
        let d = input(deltas, n).ok_or_else(null)?;
        let v = input(values, n).ok_or_else(null)?;
        let pts: Vec<(f64, f64)> = d.iter().copied().zip(v.iter().copied()).collect();
        let fit = fit_rate(&pts).map_err(core_err)?;
        *slope.as_mut().ok_or_else(null)? = fit.slope;
        *r2.as_mut().ok_or_else(null)? = fit.r2;
        Ok(())
    })
}
