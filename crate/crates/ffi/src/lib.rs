//! C ABI for collapse-lab.
//!
//! Every fallible function returns a `ClStatus`; on failure a message is
//! kept per thread and readable through `cl_last_error`. Spaces are opaque
//! `ClSpace` handles released with `cl_space_free`. Strings returned by the
//! library are released with `cl_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use collapse_lab::experiment::{run_experiment, ExperimentConfig};
use collapse_lab::generators::SpaceSpec;
use collapse_lab::metric::io::{load_space, save_space, MatrixFormat};
use collapse_lab::metric::{greedy_net, packing_profile};
use collapse_lab::model_geom::{comparison_angle, TriangleSides};
use collapse_lab::{Curvature, Error, FiniteMetricSpace};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidSpace = 3,
    /// No value exists, e.g. a comparison angle of an impossible triangle.
    Undefined = 4,
    /// The output buffer is too small; the needed length was written.
    BufferTooSmall = 5,
    Io = 6,
    Parse = 7,
    Failed = 8,
    Panic = 9,
}

/// Distance-matrix file formats.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClFormat {
    Text = 0,
    Binary = 1,
}

/// Opaque finite metric space.
pub struct ClSpace(FiniteMetricSpace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &Error) -> ClStatus {
    match e {
        Error::Io(_) => ClStatus::Io,
        Error::Parse { .. } | Error::Binary { .. } | Error::Json(_) | Error::Config(_) => {
            ClStatus::Parse
        }
        Error::EmptySpace
        | Error::InvalidDistance { .. }
        | Error::ShapeMismatch { .. }
        | Error::NonzeroDiagonal { .. }
        | Error::Asymmetric { .. } => ClStatus::InvalidSpace,
        Error::IndexOutOfRange { .. }
        | Error::InvalidParameter(_)
        | Error::NonPositiveSpacing(_)
        | Error::DegenerateGrid { .. }
        | Error::UnsortedGrid
        | Error::NonPositiveScale(_) => ClStatus::InvalidArgument,
        _ => ClStatus::Failed,
    }
}

fn fail(status: ClStatus, msg: impl Into<String>) -> ClStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), ClStatus>) -> ClStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ClStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(ClStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: collapse_lab::Result<T>) -> Result<T, ClStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn space_ref<'a>(space: *const ClSpace) -> Result<&'a FiniteMetricSpace, ClStatus> {
    space
        .as_ref()
        .map(|s| &s.0)
        .ok_or_else(|| fail(ClStatus::NullPointer, "null space handle"))
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, ClStatus> {
    if s.is_null() {
        return Err(fail(ClStatus::NullPointer, format!("null {what}")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(ClStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), ClStatus> {
    if out.is_null() {
        return Err(fail(ClStatus::NullPointer, "null output pointer"));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, ClStatus> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| fail(ClStatus::Failed, "string contains a NUL byte"))
}

fn matrix_format(f: ClFormat) -> MatrixFormat {
    match f {
        ClFormat::Text => MatrixFormat::Text,
        ClFormat::Binary => MatrixFormat::Binary,
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn cl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a space from a row-major `n × n` distance table.
///
/// # Safety
/// `table` must point to `n * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_space_from_table(
    n: usize,
    table: *const f64,
    out: *mut *mut ClSpace,
) -> ClStatus {
    guard(|| {
        if table.is_null() {
            return Err(fail(ClStatus::NullPointer, "null table"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| fail(ClStatus::InvalidArgument, "n too large"))?;
        let t = std::slice::from_raw_parts(table, len);
        let s = lift(FiniteMetricSpace::from_table(n, t))?;
        put(out, Box::into_raw(Box::new(ClSpace(s))))
    })
}

/// Generates a space from a JSON space spec such as
/// `{"kind": "circle", "n": 100, "radius": 1.0}`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_space_generate(
    spec_json: *const c_char,
    out: *mut *mut ClSpace,
) -> ClStatus {
    guard(|| {
        let text = str_arg(spec_json, "spec")?;
        let spec: SpaceSpec = lift(serde_json::from_str(text).map_err(Error::from))?;
        let g = lift(spec.generate())?;
        put(out, Box::into_raw(Box::new(ClSpace(g.space))))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_space_load(
    path: *const c_char,
    format: ClFormat,
    out: *mut *mut ClSpace,
) -> ClStatus {
    guard(|| {
        let p = str_arg(path, "path")?;
        let s = lift(load_space(Path::new(p), matrix_format(format)))?;
        put(out, Box::into_raw(Box::new(ClSpace(s))))
    })
}

/// # Safety
/// `space` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cl_space_save(
    space: *const ClSpace,
    path: *const c_char,
    format: ClFormat,
) -> ClStatus {
    guard(|| {
        let s = space_ref(space)?;
        let p = str_arg(path, "path")?;
        lift(save_space(s, Path::new(p), matrix_format(format)))
    })
}

/// # Safety
/// `space` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cl_space_free(space: *mut ClSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of points, or 0 for a NULL handle.
///
/// # Safety
/// `space` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cl_space_len(space: *const ClSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_space_distance(
    space: *const ClSpace,
    i: usize,
    j: usize,
    out: *mut f64,
) -> ClStatus {
    guard(|| {
        let s = space_ref(space)?;
        if i >= s.len() || j >= s.len() {
            return Err(fail(
                ClStatus::InvalidArgument,
                format!("index out of range for {} points", s.len()),
            ));
        }
        put(out, s.dist(i, j))
    })
}

/// Sample mesh: the largest nearest-neighbour distance.
///
/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_space_resolution(space: *const ClSpace, out: *mut f64) -> ClStatus {
    guard(|| put(out, space_ref(space)?.resolution()))
}

/// # Safety
/// `space` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_space_diameter(space: *const ClSpace, out: *mut f64) -> ClStatus {
    guard(|| put(out, space_ref(space)?.diameter()))
}

/// Angle between sides `a` and `b` of the κ-model triangle with sides
/// `a, b, c`. `CL_STATUS_UNDEFINED` when no such triangle exists.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_comparison_angle(
    kappa: f64,
    a: f64,
    b: f64,
    c: f64,
    out: *mut f64,
) -> ClStatus {
    guard(
        || match comparison_angle(Curvature::new(kappa), TriangleSides::new(a, b, c)) {
            Some(angle) => put(out, angle),
            None => Err(fail(
                ClStatus::Undefined,
                format!("no comparison triangle for sides ({a}, {b}, {c})"),
            )),
        },
    )
}

/// Farthest-first ν-net from `start`. Members are written to `members`
/// when `capacity` allows; `len` always receives the member count.
///
/// # Safety
/// `space` must be a live handle; `members` must hold `capacity` entries
/// (may be NULL when `capacity` is 0); `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_greedy_net(
    space: *const ClSpace,
    nu: f64,
    start: usize,
    members: *mut usize,
    capacity: usize,
    len: *mut usize,
) -> ClStatus {
    guard(|| {
        let s = space_ref(space)?;
        if start >= s.len() {
            return Err(fail(ClStatus::InvalidArgument, "start index out of range"));
        }
        let net = lift(greedy_net(s, nu, start))?;
        put(len, net.len())?;
        if net.len() > capacity {
            return Err(fail(
                ClStatus::BufferTooSmall,
                format!("net has {} members", net.len()),
            ));
        }
        if members.is_null() {
            return Err(fail(ClStatus::NullPointer, "null member buffer"));
        }
        std::slice::from_raw_parts_mut(members, net.len()).copy_from_slice(&net.members);
        Ok(())
    })
}

/// Packing profile at exponent `m` over an ascending scale grid, as JSON.
/// Free the result with `cl_string_free`.
///
/// # Safety
/// `space` must be a live handle; `grid` must hold `grid_len` doubles;
/// `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_packing_profile(
    space: *const ClSpace,
    m: f64,
    grid: *const f64,
    grid_len: usize,
    out_json: *mut *mut c_char,
) -> ClStatus {
    guard(|| {
        let s = space_ref(space)?;
        if grid.is_null() {
            return Err(fail(ClStatus::NullPointer, "null grid"));
        }
        let g = std::slice::from_raw_parts(grid, grid_len);
        let profile = lift(packing_profile(s, m, g, None))?;
        let text = lift(serde_json::to_string(&profile).map_err(Error::from))?;
        put(out_json, into_c_string(text)?)
    })
}

/// Runs an experiment from TOML config text and returns the JSON report.
/// `all_passed` receives 1 when every threshold check passed, else 0.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out_json` and
/// `all_passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cl_run_experiment(
    config_toml: *const c_char,
    out_json: *mut *mut c_char,
    all_passed: *mut i32,
) -> ClStatus {
    guard(|| {
        let text = str_arg(config_toml, "config")?;
        let cfg = lift(ExperimentConfig::from_toml(text))?;
        let outcome = run_experiment(&cfg);
        let json = lift(outcome.report.to_json())?;
        put(all_passed, i32::from(outcome.report.all_passed))?;
        put(out_json, into_c_string(json)?)
    })
}
