//! C ABI for `impact_kam`.
//!
//! Objects are opaque heap handles released with the matching `*_free`
//! function. Every fallible call returns an [`IkStatus`]; on failure a
//! message is kept per thread and can be copied out with
//! [`ik_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use impact_kam::certify::SectionCurve;
use impact_kam::dynamics::{
    DynamicsError, ForcingSpec, ImpactPoint, JacobianMode, MapKind, Oscillator, RootMethod, Side,
};
use impact_kam::kam::{initial_circle, solve_curve, KamError, KamOptions, Verdict};
use impact_kam::maps::ScaledImpactMap;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Grazing = 3,
    NoConvergence = 4,
    DomainEscape = 5,
    SmallDivisor = 6,
    KamFailed = 7,
    Panic = 8,
}

/// Which half-plane an impact time starts in.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IkSide {
    Right = 0,
    Left = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IkRootMethod {
    Newton = 0,
    FixedPoint = 1,
}

/// Coordinates of the map whose Jacobian is requested.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IkMapKind {
    /// `(t₀, y₀)`.
    Velocity = 0,
    /// `(t₀, E₀)` with `E = -y²/2`.
    Energy = 1,
}

/// One impact-map step and its perturbative split.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IkImpact {
    pub t_bar: f64,
    pub y_bar: f64,
    pub alpha: f64,
    pub f_t0: f64,
    pub f_y0: f64,
}

/// `τ = τ₀ + ε τ*`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IkImpactTime {
    pub tau: f64,
    pub tau0: f64,
    pub tau_star: f64,
    pub iterations: usize,
}

/// Summary of a curve solve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IkKamSummary {
    pub iterations: usize,
    pub final_error: f64,
    pub quadratic_decay: bool,
    /// Measured rotation in radians per iterate; NaN when not measured.
    pub rotation: f64,
    pub y0_star: f64,
}

/// Opaque forcing `p(t)`.
pub struct IkForcing(ForcingSpec);

/// Opaque oscillator: forcing plus `ε`.
pub struct IkOscillator(Oscillator);

/// Opaque invariant curve in section coordinates.
pub struct IkCurve {
    section: SectionCurve,
    omega: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl ToString) {
    let msg = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn dynamics_status(e: &DynamicsError) -> IkStatus {
    match e {
        DynamicsError::Grazing { .. } => IkStatus::Grazing,
        DynamicsError::DomainEscape { .. } => IkStatus::DomainEscape,
        DynamicsError::InvalidParameter(_) => IkStatus::InvalidParameter,
        _ => IkStatus::NoConvergence,
    }
}

fn kam_status(e: &KamError) -> IkStatus {
    match e {
        KamError::Dynamics(d) => dynamics_status(d),
        KamError::SmallDivisor(_) => IkStatus::SmallDivisor,
        _ => IkStatus::KamFailed,
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (IkStatus, String)>) -> IkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IkStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside impact_kam");
            IkStatus::Panic
        }
    }
}

fn null() -> (IkStatus, String) {
    (IkStatus::NullPointer, "null pointer argument".into())
}

fn dyn_err(e: DynamicsError) -> (IkStatus, String) {
    (dynamics_status(&e), e.to_string())
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Option<&'a [f64]> {
    if n == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        // SAFETY: caller guarantees `p` points to `n` readable doubles.
        Some(std::slice::from_raw_parts(p, n))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ik_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ik_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Builds `p(t) = a0 + Σ cos[k-1] cos kt + sin[k-1] sin kt`.
///
/// # Safety
/// `cos` and `sin` must point to `n_cos` and `n_sin` doubles (or be NULL when
/// the count is 0); `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_forcing_new(
    a0: f64,
    cos: *const f64,
    n_cos: usize,
    sin: *const f64,
    n_sin: usize,
    rho: f64,
    out: *mut *mut IkForcing,
) -> IkStatus {
    guard(|| {
        let (Some(c), Some(s)) = (slice(cos, n_cos), slice(sin, n_sin)) else {
            return Err(null());
        };
        if out.is_null() {
            return Err(null());
        }
        let spec = ForcingSpec::new(a0, c.to_vec(), s.to_vec(), rho).map_err(dyn_err)?;
        *out = Box::into_raw(Box::new(IkForcing(spec)));
        Ok(())
    })
}

/// # Safety
/// `f` must be NULL or a handle from [`ik_forcing_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ik_forcing_free(f: *mut IkForcing) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// `p̃`, the largest strip norm of the forcing antiderivative family.
///
/// # Safety
/// `f` must be a live forcing handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_forcing_p_tilde(f: *const IkForcing, out: *mut f64) -> IkStatus {
    guard(|| {
        let (Some(f), false) = (f.as_ref(), out.is_null()) else {
            return Err(null());
        };
        *out = f.0.p_tilde();
        Ok(())
    })
}

/// # Safety
/// `forcing` must be a live handle and `out` a valid pointer. The forcing
/// may be freed afterwards; the oscillator keeps its own copy.
#[no_mangle]
pub unsafe extern "C" fn ik_oscillator_new(
    forcing: *const IkForcing,
    epsilon: f64,
    out: *mut *mut IkOscillator,
) -> IkStatus {
    guard(|| {
        let (Some(f), false) = (forcing.as_ref(), out.is_null()) else {
            return Err(null());
        };
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err((IkStatus::InvalidParameter, format!("epsilon must be >= 0, got {epsilon}")));
        }
        let osc = Oscillator::new(f.0.clone(), epsilon).map_err(dyn_err)?;
        *out = Box::into_raw(Box::new(IkOscillator(osc)));
        Ok(())
    })
}

/// # Safety
/// `o` must be NULL or a handle from [`ik_oscillator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ik_oscillator_free(o: *mut IkOscillator) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// One step of the impact map from `(t0, y0)`, `y0 > 0`.
///
/// # Safety
/// `o` must be a live oscillator and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_impact_map(o: *const IkOscillator, t0: f64, y0: f64, out: *mut IkImpact) -> IkStatus {
    guard(|| {
        let (Some(o), false) = (o.as_ref(), out.is_null()) else {
            return Err(null());
        };
        let r = o.0.impact_map(ImpactPoint::new(t0, y0)).map_err(dyn_err)?;
        *out = IkImpact {
            t_bar: r.t_bar,
            y_bar: r.y_bar,
            alpha: r.alpha,
            f_t0: r.f_t0,
            f_y0: r.f_y0,
        };
        Ok(())
    })
}

/// The impact map in `(t, E)` coordinates.
///
/// # Safety
/// `o` must be a live oscillator; `t_bar` and `e_bar` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ik_impact_map_energy(
    o: *const IkOscillator,
    t0: f64,
    e0: f64,
    t_bar: *mut f64,
    e_bar: *mut f64,
) -> IkStatus {
    guard(|| {
        let (Some(o), false, false) = (o.as_ref(), t_bar.is_null(), e_bar.is_null()) else {
            return Err(null());
        };
        let r = o.0.impact_map_energy(t0, e0).map_err(dyn_err)?;
        *t_bar = r.t_bar;
        *e_bar = r.e_bar;
        Ok(())
    })
}

/// First return time to `x = 0` from `(t, 0, y)`.
///
/// # Safety
/// `o` must be a live oscillator and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_impact_time(
    o: *const IkOscillator,
    side: IkSide,
    t: f64,
    y: f64,
    method: IkRootMethod,
    out: *mut IkImpactTime,
) -> IkStatus {
    guard(|| {
        let (Some(o), false) = (o.as_ref(), out.is_null()) else {
            return Err(null());
        };
        let side = match side {
            IkSide::Right => Side::Right,
            IkSide::Left => Side::Left,
        };
        let method = match method {
            IkRootMethod::Newton => RootMethod::Newton,
            IkRootMethod::FixedPoint => RootMethod::FixedPoint,
        };
        let d = o.0.impact_time(side, t, y, method).map_err(dyn_err)?;
        *out = IkImpactTime {
            tau: d.tau,
            tau0: d.tau0,
            tau_star: d.tau_star,
            iterations: d.iterations,
        };
        Ok(())
    })
}

/// Row-major 2×2 Jacobian at `(angle, action)` written to `out[0..4]`.
///
/// # Safety
/// `o` must be a live oscillator and `out` point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ik_jacobian(
    o: *const IkOscillator,
    kind: IkMapKind,
    angle: f64,
    action: f64,
    analytic: bool,
    out: *mut f64,
) -> IkStatus {
    guard(|| {
        let (Some(o), false) = (o.as_ref(), out.is_null()) else {
            return Err(null());
        };
        let map = match kind {
            IkMapKind::Velocity => MapKind::Impact,
            IkMapKind::Energy => MapKind::ImpactEnergy,
        };
        let mode = if analytic {
            JacobianMode::Analytic
        } else {
            JacobianMode::FiniteDifference
        };
        let j = o.0.jacobian(map, [angle, action], mode).map_err(dyn_err)?;
        let out = std::slice::from_raw_parts_mut(out, 4);
        out.copy_from_slice(&[j[0][0], j[0][1], j[1][0], j[1][1]]);
        Ok(())
    })
}

/// Solves for the invariant curve of rotation `omega` (radians per impact)
/// near `y₀* = ω(1 - a₀²ε²)/4` with `order` Fourier modes. `tol <= 0`
/// selects the default tolerance. `summary` may be NULL.
///
/// # Safety
/// `o` must be a live oscillator, `out` a valid pointer, `summary` NULL or
/// valid.
#[no_mangle]
pub unsafe extern "C" fn ik_solve_curve(
    o: *const IkOscillator,
    omega: f64,
    order: usize,
    tol: f64,
    out: *mut *mut IkCurve,
    summary: *mut IkKamSummary,
) -> IkStatus {
    guard(|| {
        let (Some(o), false) = (o.as_ref(), out.is_null()) else {
            return Err(null());
        };
        if order < 2 || !omega.is_finite() || omega <= 0.0 {
            return Err((IkStatus::InvalidParameter, "need order >= 2 and omega > 0".into()));
        }
        let eps = o.0.epsilon();
        let y0_star = omega * (1.0 - (o.0.forcing().a0 * eps).powi(2)) / 4.0;
        let map = ScaledImpactMap::new(o.0.clone(), y0_star);
        let opts = KamOptions {
            tol: (tol > 0.0).then_some(tol),
            ..KamOptions::default()
        };
        let init = initial_circle(&map, omega, order).map_err(|e| (kam_status(&e), e.to_string()))?;
        let write_summary = |r: &impact_kam::kam::KamReport| {
            if !summary.is_null() {
                *summary = IkKamSummary {
                    iterations: r.iterations,
                    final_error: r.final_error,
                    quadratic_decay: r.quadratic_decay,
                    rotation: r.rotation_check.map_or(f64::NAN, |x| x.value),
                    y0_star,
                };
            }
        };
        match solve_curve(&map, init, &opts) {
            Ok((curve, report)) => {
                debug_assert_eq!(report.verdict, Verdict::Converged);
                write_summary(&report);
                let section = SectionCurve::from_scaled(&curve, &map.spec);
                *out = Box::into_raw(Box::new(IkCurve { section, omega }));
                Ok(())
            }
            Err(f) => {
                write_summary(&f.report);
                Err((kam_status(&f.error), f.error.to_string()))
            }
        }
    })
}

/// Point `(t, y)` of the curve at parameter `theta`.
///
/// # Safety
/// `c` must be a live curve; `t` and `y` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ik_curve_point(c: *const IkCurve, theta: f64, t: *mut f64, y: *mut f64) -> IkStatus {
    guard(|| {
        let (Some(c), false, false) = (c.as_ref(), t.is_null(), y.is_null()) else {
            return Err(null());
        };
        let [a, b] = c.section.point(theta);
        *t = a;
        *y = b;
        Ok(())
    })
}

/// Height `y` of the curve above the section time `t`.
///
/// # Safety
/// `c` must be a live curve and `y` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ik_curve_y_at(c: *const IkCurve, t: f64, y: *mut f64) -> IkStatus {
    guard(|| {
        let (Some(c), false) = (c.as_ref(), y.is_null()) else {
            return Err(null());
        };
        *y = c.section.y_at(t);
        Ok(())
    })
}

/// Rotation number the curve was solved for; NaN for a NULL handle.
///
/// # Safety
/// `c` must be NULL or a live curve.
#[no_mangle]
pub unsafe extern "C" fn ik_curve_omega(c: *const IkCurve) -> f64 {
    c.as_ref().map_or(f64::NAN, |c| c.omega)
}

/// # Safety
/// `c` must be NULL or a handle from [`ik_solve_curve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ik_curve_free(c: *mut IkCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}
