//! C ABI for the equilibrium-manifold geometry engine.
//!
//! Economies are opaque handles created from the same JSON config the CLI
//! accepts. Every computation reports an [`EqmStatus`]; on failure the
//! thread-local message behind [`eqm_last_error`] describes the problem.
//! All output buffers are caller-allocated; sizes are fixed by the number of
//! goods L (`eqm_economy_goods`): ambient vectors hold `2L-1` doubles, the
//! metric `L*L` (row-major), the Christoffel tensor `L*L*L` in `[k][i][j]`
//! layout.
//!
//! The reference header lives at `include/eqmanifold.h` and is kept in sync
//! with this file by a test.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DVector;

use eqmanifold::economy::EconomyModel;
use eqmanifold::geodesic::{exp_map, log_map, TangentVector};
use eqmanifold::geometry::{christoffel_at, curvature_at, metric_at};
use eqmanifold::selection::{find_equilibria, select, uniqueness_check, PerturbedState};
use eqmanifold::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqmStatus {
    EqmOk = 0,
    EqmErrDomain = 1,
    EqmErrValidation = 2,
    EqmErrSingularMetric = 3,
    EqmErrDegeneratePlane = 4,
    EqmErrDomainExit = 5,
    EqmErrStiffness = 6,
    EqmErrNonConvergence = 7,
    EqmErrRefinementStall = 8,
    EqmErrNullPointer = 9,
    EqmErrPanic = 10,
}

/// Opaque economy handle.
pub struct EqmEconomy {
    model: EconomyModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> EqmStatus {
    match err {
        Error::Domain { .. } => EqmStatus::EqmErrDomain,
        Error::Validation(_) | Error::Json(_) | Error::Io(_) => EqmStatus::EqmErrValidation,
        Error::SingularMetric { .. } => EqmStatus::EqmErrSingularMetric,
        Error::DegeneratePlane { .. } => EqmStatus::EqmErrDegeneratePlane,
        Error::DomainExit { .. } => EqmStatus::EqmErrDomainExit,
        Error::Stiffness { .. } => EqmStatus::EqmErrStiffness,
        Error::NonConvergence { .. } => EqmStatus::EqmErrNonConvergence,
        Error::RefinementStall { .. } => EqmStatus::EqmErrRefinementStall,
    }
}

fn fail(err: Error) -> EqmStatus {
    let status = status_for(&err);
    set_error(&err.to_string());
    status
}

/// Runs a fallible body, translating errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Error>) -> EqmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EqmStatus::EqmOk,
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_error("internal panic");
            EqmStatus::EqmErrPanic
        }
    }
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(ptr, len) })
    }
}

unsafe fn slice_out<'a>(ptr: *mut f64, len: usize) -> Option<&'a mut [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts_mut(ptr, len) })
    }
}

fn null_pointer() -> EqmStatus {
    set_error("null pointer argument");
    EqmStatus::EqmErrNullPointer
}

macro_rules! econ {
    ($handle:expr) => {
        match unsafe { $handle.as_ref() } {
            Some(h) => &h.model,
            None => return null_pointer(),
        }
    };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eqm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Thread-local message for the most recent failure; valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn eqm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Builds an economy from the JSON config (same schema as the CLI). Returns
/// NULL on failure; see `eqm_last_error`. Free with `eqm_economy_free`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eqm_economy_from_json(json: *const c_char) -> *mut EqmEconomy {
    if json.is_null() {
        set_error("null pointer argument");
        return std::ptr::null_mut();
    }
    let text = match unsafe { CStr::from_ptr(json) }.to_str() {
        Ok(t) => t,
        Err(_) => {
            set_error("config is not valid UTF-8");
            return std::ptr::null_mut();
        }
    };
    match catch_unwind(|| EconomyModel::from_json(text)) {
        Ok(Ok(model)) => Box::into_raw(Box::new(EqmEconomy { model })),
        Ok(Err(e)) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("internal panic");
            std::ptr::null_mut()
        }
    }
}

/// Releases an economy handle. NULL is a no-op.
///
/// # Safety
/// `econ` must be a pointer returned by `eqm_economy_from_json`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eqm_economy_free(econ: *mut EqmEconomy) {
    if !econ.is_null() {
        drop(unsafe { Box::from_raw(econ) });
    }
}

/// Number of goods L; 0 for a NULL handle.
///
/// # Safety
/// `econ` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn eqm_economy_goods(econ: *const EqmEconomy) -> usize {
    unsafe { econ.as_ref() }.map_or(0, |h| h.model.goods())
}

/// Embeds `(t, alpha)`; writes `2L-1` doubles to `ambient_out`.
///
/// # Safety
/// `alpha` must hold `L-1` doubles and `ambient_out` room for `2L-1`.
#[no_mangle]
pub unsafe extern "C" fn eqm_embed(
    econ: *const EqmEconomy,
    t: f64,
    alpha: *const f64,
    ambient_out: *mut f64,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let (Some(alpha), Some(out)) =
        (unsafe { slice_arg(alpha, l - 1) }, unsafe { slice_out(ambient_out, 2 * l - 1) })
    else {
        return null_pointer();
    };
    guard(|| {
        let pt = model.embed(t, alpha)?;
        out.copy_from_slice(pt.ambient().as_slice());
        Ok(())
    })
}

/// Metric at `(t, alpha)`: `g_out` and optional `g_inv_out` are `L*L`
/// row-major; `det_out` optionally receives `det g`.
///
/// # Safety
/// Buffer sizes as documented; `g_inv_out` and `det_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn eqm_metric(
    econ: *const EqmEconomy,
    t: f64,
    alpha: *const f64,
    g_out: *mut f64,
    g_inv_out: *mut f64,
    det_out: *mut f64,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let (Some(alpha), Some(g_out)) =
        (unsafe { slice_arg(alpha, l - 1) }, unsafe { slice_out(g_out, l * l) })
    else {
        return null_pointer();
    };
    let g_inv_out = unsafe { slice_out(g_inv_out, l * l) };
    guard(|| {
        let pt = model.embed(t, alpha)?;
        let md = metric_at(model, &pt)?;
        for i in 0..l {
            for j in 0..l {
                g_out[i * l + j] = md.g[(i, j)];
            }
        }
        if let Some(inv) = g_inv_out {
            for i in 0..l {
                for j in 0..l {
                    inv[i * l + j] = md.g_inv[(i, j)];
                }
            }
        }
        if !det_out.is_null() {
            unsafe { *det_out = md.det_g };
        }
        Ok(())
    })
}

/// Christoffel symbols at `(t, alpha)`: `L*L*L` doubles, `gamma[k][i][j]`
/// row-major in `gamma_out`.
///
/// # Safety
/// Buffer sizes as documented.
#[no_mangle]
pub unsafe extern "C" fn eqm_christoffel(
    econ: *const EqmEconomy,
    t: f64,
    alpha: *const f64,
    gamma_out: *mut f64,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let (Some(alpha), Some(out)) =
        (unsafe { slice_arg(alpha, l - 1) }, unsafe { slice_out(gamma_out, l * l * l) })
    else {
        return null_pointer();
    };
    guard(|| {
        let pt = model.embed(t, alpha)?;
        let ch = christoffel_at(model, &pt)?;
        for k in 0..l {
            for i in 0..l {
                for j in 0..l {
                    out[(k * l + i) * l + j] = ch.get(k, i, j);
                }
            }
        }
        Ok(())
    })
}

/// Sectional-curvature report at `(t, alpha)`: `inner_r_out` and `sec_0i_out`
/// hold `L-1` doubles, `sec_ij_max_abs_out` one double.
///
/// # Safety
/// Buffer sizes as documented.
#[no_mangle]
pub unsafe extern "C" fn eqm_curvature(
    econ: *const EqmEconomy,
    t: f64,
    alpha: *const f64,
    inner_r_out: *mut f64,
    sec_0i_out: *mut f64,
    sec_ij_max_abs_out: *mut f64,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let (Some(alpha), Some(inner), Some(sec)) = (
        unsafe { slice_arg(alpha, l - 1) },
        unsafe { slice_out(inner_r_out, l - 1) },
        unsafe { slice_out(sec_0i_out, l - 1) },
    ) else {
        return null_pointer();
    };
    if sec_ij_max_abs_out.is_null() {
        return null_pointer();
    }
    guard(|| {
        let pt = model.embed(t, alpha)?;
        let cr = curvature_at(model, &pt)?;
        inner.copy_from_slice(cr.inner_r.as_slice());
        sec.copy_from_slice(cr.sec_0i.as_slice());
        unsafe { *sec_ij_max_abs_out = cr.sec_ij_max_abs };
        Ok(())
    })
}

/// Exponential map: follows the geodesic from `(t, alpha)` with initial
/// velocity `coeffs` (L doubles) to parameter 1; writes the endpoint chart
/// coordinates `(t, alpha...)` and optionally the relative speed drift.
///
/// # Safety
/// Buffer sizes as documented; `speed_drift_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn eqm_exp_map(
    econ: *const EqmEconomy,
    t: f64,
    alpha: *const f64,
    coeffs: *const f64,
    end_coords_out: *mut f64,
    speed_drift_out: *mut f64,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let (Some(alpha), Some(coeffs), Some(out)) = (
        unsafe { slice_arg(alpha, l - 1) },
        unsafe { slice_arg(coeffs, l) },
        unsafe { slice_out(end_coords_out, l) },
    ) else {
        return null_pointer();
    };
    guard(|| {
        let base = model.embed(t, alpha)?;
        let v = TangentVector::new(base, DVector::from_column_slice(coeffs));
        let (end, path) = exp_map(model, &v)?;
        out.copy_from_slice(end.coords().as_slice());
        if !speed_drift_out.is_null() {
            unsafe { *speed_drift_out = path.speed_drift(model)? };
        }
        Ok(())
    })
}

/// Log map: the tangent coefficients at `(tx, alpha_x)` whose geodesic
/// reaches `(ty, alpha_y)` at parameter 1. Writes L doubles.
///
/// # Safety
/// Buffer sizes as documented.
#[no_mangle]
pub unsafe extern "C" fn eqm_log_map(
    econ: *const EqmEconomy,
    tx: f64,
    alpha_x: *const f64,
    ty: f64,
    alpha_y: *const f64,
    coeffs_out: *mut f64,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let (Some(ax), Some(ay), Some(out)) = (
        unsafe { slice_arg(alpha_x, l - 1) },
        unsafe { slice_arg(alpha_y, l - 1) },
        unsafe { slice_out(coeffs_out, l) },
    ) else {
        return null_pointer();
    };
    guard(|| {
        let x = model.embed(tx, ax)?;
        let y = model.embed(ty, ay)?;
        let v = log_map(model, &x, &y)?;
        out.copy_from_slice(v.coeffs.as_slice());
        Ok(())
    })
}

/// Price selection after perturbing the endowment at `(t, alpha)` to
/// `omega_prime` (L doubles). Writes the landed chart coordinates (L), the
/// landed prices (L-1), the endowment residual and the iteration count.
///
/// # Safety
/// Buffer sizes as documented; `residual_out` / `iterations_out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn eqm_select(
    econ: *const EqmEconomy,
    t: f64,
    alpha: *const f64,
    omega_prime: *const f64,
    refine: bool,
    landed_coords_out: *mut f64,
    price_out: *mut f64,
    residual_out: *mut f64,
    iterations_out: *mut u64,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let (Some(alpha), Some(omega), Some(coords_out), Some(price_out)) = (
        unsafe { slice_arg(alpha, l - 1) },
        unsafe { slice_arg(omega_prime, l) },
        unsafe { slice_out(landed_coords_out, l) },
        unsafe { slice_out(price_out, l - 1) },
    ) else {
        return null_pointer();
    };
    guard(|| {
        let base = model.embed(t, alpha)?;
        let state = PerturbedState::new(model, base, omega)?;
        let result = select(model, &state, refine)?;
        coords_out.copy_from_slice(result.landed.coords().as_slice());
        price_out.copy_from_slice(result.price_new.as_slice());
        if !residual_out.is_null() {
            unsafe { *residual_out = result.endowment_residual };
        }
        if !iterations_out.is_null() {
            unsafe { *iterations_out = result.iterations as u64 };
        }
        Ok(())
    })
}

/// All equilibrium parameters t supporting `endowment` (L doubles), sorted.
/// Writes up to `cap` roots into `t_roots_out` and the total count into
/// `count_out`; the count may exceed `cap`, in which case only the first
/// `cap` roots are written.
///
/// # Safety
/// Buffer sizes as documented.
#[no_mangle]
pub unsafe extern "C" fn eqm_find_equilibria(
    econ: *const EqmEconomy,
    endowment: *const f64,
    t_roots_out: *mut f64,
    cap: usize,
    count_out: *mut usize,
) -> EqmStatus {
    let model = econ!(econ);
    let l = model.goods();
    let Some(endowment) = (unsafe { slice_arg(endowment, l) }) else {
        return null_pointer();
    };
    if count_out.is_null() || (cap > 0 && t_roots_out.is_null()) {
        return null_pointer();
    }
    guard(|| {
        let roots = find_equilibria(model, endowment)?;
        unsafe { *count_out = roots.len() };
        let n = roots.len().min(cap);
        if n > 0 {
            let out = unsafe { std::slice::from_raw_parts_mut(t_roots_out, n) };
            for (slot, root) in out.iter_mut().zip(&roots) {
                *slot = root.t();
            }
        }
        Ok(())
    })
}

/// Zero-curvature/uniqueness equivalence for the whole economy.
///
/// # Safety
/// All three out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_uniqueness(
    econ: *const EqmEconomy,
    unique_out: *mut bool,
    max_abs_p_prime_out: *mut f64,
    max_abs_inner_r_out: *mut f64,
) -> EqmStatus {
    let model = econ!(econ);
    if unique_out.is_null() || max_abs_p_prime_out.is_null() || max_abs_inner_r_out.is_null() {
        return null_pointer();
    }
    guard(|| {
        let rep = uniqueness_check(model)?;
        unsafe {
            *unique_out = rep.unique;
            *max_abs_p_prime_out = rep.max_abs_p_prime;
            *max_abs_inner_r_out = rep.max_abs_inner_r;
        }
        Ok(())
    })
}
