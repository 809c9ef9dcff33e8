//! C interface to frame_langevin: opaque model handles, integer status codes
//! and a thread-local last-error message.
//!
//! Matrices cross the boundary as row-major `double` arrays. Frames `h` are
//! n x n, coordinates and velocities have length n, where n is
//! `fl_model_dim`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use frame_langevin::drift::noise_induced_drift;
use frame_langevin::engine::{run_limit_path, run_mass_path, DriftScales, IntegratorConfig, MassState, Scheme, WienerGrid};
use frame_langevin::fields::{preset, AnyModel, Model};
use frame_langevin::geometry::FramePoint;
use frame_langevin::linalg::{lyapunov_solve, Mat, Vecn};
use frame_langevin::{with_model, Error};

pub const FL_OK: i32 = 0;
pub const FL_ERR_NULL: i32 = 1;
pub const FL_ERR_DOMAIN: i32 = 2;
pub const FL_ERR_MODEL: i32 = 3;
pub const FL_ERR_DT_BUDGET: i32 = 4;
pub const FL_ERR_INVALID_ARG: i32 = 5;
pub const FL_ERR_NUMERIC: i32 = 6;
pub const FL_ERR_PANIC: i32 = 7;

pub const FL_SCHEME_EM: i32 = 0;
pub const FL_SCHEME_EXP_OU: i32 = 1;

/// Opaque model handle.
pub struct FlModel {
    inner: AnyModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) => FL_ERR_DOMAIN,
        Error::ModelValidation(_) => FL_ERR_MODEL,
        Error::DtBudget { .. } => FL_ERR_DT_BUDGET,
        Error::Singular(_) | Error::Stability(_) | Error::Overflow(_) => FL_ERR_NUMERIC,
        Error::Config(_) | Error::Unregistered(_) | Error::Io(_) => FL_ERR_INVALID_ARG,
    }
}

struct Fail(i32, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(code(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FL_ERR_NULL, format!("null pointer: {what}"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FL_OK
        }
        Ok(Err(Fail(c, m))) => {
            set_error(&m);
            c
        }
        Err(_) => {
            set_error("internal panic");
            FL_ERR_PANIC
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(FL_ERR_INVALID_ARG, format!("{what} is not valid UTF-8")))
}

unsafe fn model<'a>(m: *const FlModel) -> Result<&'a AnyModel, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn frame_point<const N: usize>(chart: u32, coords: *const f64, h: *const f64) -> Result<FramePoint<N>, Fail> {
    let x = Vecn::<N>::from_column_slice(slice(coords, N, "coords")?);
    let h = Mat::<N>::from_row_slice(slice(h, N * N, "h")?);
    Ok(FramePoint::new(chart as usize, x, h))
}

fn write_mat<const N: usize>(m: &Mat<N>, out: &mut [f64]) {
    for a in 0..N {
        for b in 0..N {
            out[a * N + b] = m[(a, b)];
        }
    }
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a preset model. `keys`/`values` hold `count` parameter overrides
/// (e.g. "mass", "gamma0"); they may be null when `count` is 0.
///
/// # Safety
/// String arguments must be NUL-terminated; arrays must hold `count` entries;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_new_preset(
    manifold: *const c_char,
    preset_name: *const c_char,
    keys: *const *const c_char,
    values: *const f64,
    count: usize,
    out: *mut *mut FlModel,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let man = cstr(manifold, "manifold")?;
        let pre = cstr(preset_name, "preset")?;
        let mut params = BTreeMap::new();
        if count > 0 {
            if keys.is_null() {
                return Err(null("keys"));
            }
            let vals = slice(values, count, "values")?;
            for (i, v) in vals.iter().enumerate() {
                params.insert(cstr(*keys.add(i), "key")?.to_string(), *v);
            }
        }
        let inner = preset(man, pre, &params)?;
        *out = Box::into_raw(Box::new(FlModel { inner }));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `m` must come from `fl_model_new_preset` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fl_model_free(m: *mut FlModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Manifold dimension n of the model.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_dim(m: *const FlModel, out: *mut usize) -> i32 {
    guard(|| {
        let md = model(m)?;
        *out.as_mut().ok_or_else(|| null("out"))? = md.dim();
        Ok(())
    })
}

/// Certified lower bound gamma1 on the symmetric part of the drag.
///
/// # Safety
/// `m` must be a live handle and `gamma1` writable.
#[no_mangle]
pub unsafe extern "C" fn fl_model_validate(m: *const FlModel, gamma1: *mut f64) -> i32 {
    guard(|| {
        let md = model(m)?;
        *gamma1.as_mut().ok_or_else(|| null("gamma1"))? = md.gamma1();
        Ok(())
    })
}

unsafe fn drift_impl<const N: usize, const K: usize>(
    md: &Model<N, K>,
    chart: u32,
    coords: *const f64,
    h: *const f64,
    sh_dx: *mut f64,
    sh_dh: *mut f64,
    sv_dh: *mut f64,
) -> Result<(), Fail> {
    let u = frame_point::<N>(chart, coords, h)?;
    let r = noise_induced_drift(md, &u)?;
    slice_mut(sh_dx, N, "sh_dx")?.copy_from_slice(r.sh.dx.as_slice());
    write_mat(&r.sh.dh, slice_mut(sh_dh, N * N, "sh_dh")?);
    write_mat(&r.sv.dh, slice_mut(sv_dh, N * N, "sv_dh")?);
    Ok(())
}

/// Noise-induced drift at the frame (chart, coords, h): the coordinate and
/// frame parts of S^h and the frame part of S^v (its coordinate part is zero).
///
/// # Safety
/// Inputs hold n and n*n doubles; outputs hold n, n*n and n*n doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_drift(
    m: *const FlModel,
    chart: u32,
    coords: *const f64,
    h: *const f64,
    sh_dx: *mut f64,
    sh_dh: *mut f64,
    sv_dh: *mut f64,
) -> i32 {
    guard(|| {
        let md = model(m)?;
        with_model!(md, x => drift_impl(x, chart, coords, h, sh_dx, sh_dh, sv_dh))
    })
}

struct PathOut {
    chart: *mut u32,
    coords: *mut f64,
    h: *mut f64,
}

unsafe fn write_point<const N: usize>(u: &FramePoint<N>, o: &PathOut) -> Result<(), Fail> {
    *o.chart.as_mut().ok_or_else(|| null("out_chart"))? = u.x.chart as u32;
    slice_mut(o.coords, N, "out_coords")?.copy_from_slice(u.x.coords.as_slice());
    write_mat(&u.h, slice_mut(o.h, N * N, "out_h")?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
unsafe fn mass_impl<const N: usize, const K: usize>(
    md: &Model<N, K>,
    seed: u64,
    path_index: u64,
    scheme: i32,
    dt: f64,
    n_steps: usize,
    chart: u32,
    coords: *const f64,
    h: *const f64,
    v0: *const f64,
    o: &PathOut,
    out_v: *mut f64,
) -> Result<(), Fail> {
    let scheme = match scheme {
        FL_SCHEME_EM => Scheme::Em,
        FL_SCHEME_EXP_OU => Scheme::ExpOu,
        s => return Err(Fail(FL_ERR_INVALID_ARG, format!("unknown scheme code {s}"))),
    };
    let u = frame_point::<N>(chart, coords, h)?;
    let v = Vecn::<N>::from_column_slice(slice(v0, N, "v0")?);
    let grid = WienerGrid::sample(seed, path_index, dt, n_steps, K, N)?;
    let cfg = IntegratorConfig::new(scheme, dt, n_steps);
    let end = run_mass_path(md, &MassState { u, v }, &grid, &cfg, |_, _, _| {})?;
    write_point(&end.u, o)?;
    slice_mut(out_v, N, "out_v")?.copy_from_slice(end.v.as_slice());
    Ok(())
}

/// Integrates the mass system for `n_steps` of size `dt` on the Wiener grid
/// of (seed, path_index) and writes the final state.
///
/// # Safety
/// Array arguments hold n (coords, v) or n*n (h) doubles; outputs are writable.
#[no_mangle]
pub unsafe extern "C" fn fl_simulate_mass(
    m: *const FlModel,
    seed: u64,
    path_index: u64,
    scheme: i32,
    dt: f64,
    n_steps: usize,
    chart: u32,
    coords: *const f64,
    h: *const f64,
    v0: *const f64,
    out_chart: *mut u32,
    out_coords: *mut f64,
    out_h: *mut f64,
    out_v: *mut f64,
) -> i32 {
    guard(|| {
        let md = model(m)?;
        let o = PathOut { chart: out_chart, coords: out_coords, h: out_h };
        with_model!(md, x => mass_impl(x, seed, path_index, scheme, dt, n_steps, chart, coords, h, v0, &o, out_v))
    })
}

#[allow(clippy::too_many_arguments)]
unsafe fn limit_impl<const N: usize, const K: usize>(
    md: &Model<N, K>,
    seed: u64,
    path_index: u64,
    dt: f64,
    n_steps: usize,
    chart: u32,
    coords: *const f64,
    h: *const f64,
    o: &PathOut,
) -> Result<(), Fail> {
    let u = frame_point::<N>(chart, coords, h)?;
    let grid = WienerGrid::sample(seed, path_index, dt, n_steps, K, N)?;
    let cfg = IntegratorConfig::new(Scheme::Heun, dt, n_steps);
    let end = run_limit_path(md, &u, &grid, &cfg, DriftScales::default(), |_, _, _| {})?;
    write_point(&end, o)
}

/// Integrates the limiting equation with the Stratonovich Heun scheme on the
/// same Wiener grid that `fl_simulate_mass` uses for (seed, path_index).
///
/// # Safety
/// As for `fl_simulate_mass`, without velocities.
#[no_mangle]
pub unsafe extern "C" fn fl_simulate_limit(
    m: *const FlModel,
    seed: u64,
    path_index: u64,
    dt: f64,
    n_steps: usize,
    chart: u32,
    coords: *const f64,
    h: *const f64,
    out_chart: *mut u32,
    out_coords: *mut f64,
    out_h: *mut f64,
) -> i32 {
    guard(|| {
        let md = model(m)?;
        let o = PathOut { chart: out_chart, coords: out_coords, h: out_h };
        with_model!(md, x => limit_impl(x, seed, path_index, dt, n_steps, chart, coords, h, &o))
    })
}

fn lyap<const N: usize>(g: &[f64], s: &[f64], out: &mut [f64]) -> Result<(), Fail> {
    let j = lyapunov_solve(&Mat::<N>::from_row_slice(g), &Mat::<N>::from_row_slice(s))?;
    write_mat(&j, out);
    Ok(())
}

/// Solves gamma J + J gamma^T = sigma for n in 1..=3.
///
/// # Safety
/// `gamma`, `sigma` and `out_j` hold n*n doubles.
#[no_mangle]
pub unsafe extern "C" fn fl_lyapunov_solve(n: usize, gamma: *const f64, sigma: *const f64, out_j: *mut f64) -> i32 {
    guard(|| {
        if !(1..=3).contains(&n) {
            return Err(Fail(FL_ERR_INVALID_ARG, format!("n must be 1, 2 or 3, got {n}")));
        }
        let g = slice(gamma, n * n, "gamma")?;
        let s = slice(sigma, n * n, "sigma")?;
        let o = slice_mut(out_j, n * n, "out_j")?;
        match n {
            1 => lyap::<1>(g, s, o),
            2 => lyap::<2>(g, s, o),
            _ => lyap::<3>(g, s, o),
        }
    })
}
