//! C ABI over the core library: an opaque scenario handle created from a
//! JSON file or string, status codes for every fallible call, and flat
//! row-major buffers for tensor output. The caller owns every output buffer;
//! the library never allocates across the boundary except for the handle
//! itself and the thread-local error message.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use nalgebra::DVector;

use finsleroid::error::Error;
use finsleroid::fields::{FieldSet, Signature};
use finsleroid::scenario::Scenario;
use finsleroid::{checks, geodesic, kernel, pseudo, spray, tensors};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrStatus {
    Ok = 0,
    /// A required pointer was null or an argument was malformed.
    InvalidArgument = 1,
    /// The scenario file could not be read.
    Io = 2,
    /// The scenario JSON did not parse or validate.
    Parse = 3,
    /// The inputs left the admissible domain (norm range, cone, signature).
    Domain = 4,
    /// A numerical guard failed (step underflow, inadmissible stencil).
    Numeric = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message =
        CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(err: &Error) -> FrStatus {
    match err {
        Error::Io(_) => FrStatus::Io,
        Error::Json(_) | Error::InvalidScenario(_) => FrStatus::Parse,
        Error::StepUnderflow { .. } | Error::InadmissibleStencil(_) | Error::RangeClamp { .. } => {
            FrStatus::Numeric
        }
        _ => FrStatus::Domain,
    }
}

fn fail(err: Error) -> FrStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// Opaque scenario handle: the parsed scenario plus its immutable field set.
pub struct FrScenario {
    scenario: Scenario,
    fields: FieldSet,
}

impl FrScenario {
    fn from_scenario(scenario: Scenario) -> Result<Box<FrScenario>, Error> {
        let fields = scenario.field_set()?;
        Ok(Box::new(FrScenario { scenario, fields }))
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

/// Load a scenario from a JSON file. On success writes the new handle to
/// `out`; the caller releases it with `fr_scenario_free`.
///
/// Safety: `path` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_scenario_load(
    path: *const c_char,
    out: *mut *mut FrScenario,
) -> FrStatus {
    if path.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return FrStatus::InvalidArgument;
    }
    let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
        set_error("path is not valid UTF-8".into());
        return FrStatus::InvalidArgument;
    };
    match Scenario::from_path(Path::new(path)).and_then(FrScenario::from_scenario) {
        Ok(handle) => {
            unsafe { *out = Box::into_raw(handle) };
            FrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Parse a scenario from a JSON string.
///
/// Safety: `json` must be a valid NUL-terminated string and `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_scenario_from_json(
    json: *const c_char,
    out: *mut *mut FrScenario,
) -> FrStatus {
    if json.is_null() || out.is_null() {
        set_error("null pointer argument".into());
        return FrStatus::InvalidArgument;
    }
    let Ok(text) = unsafe { CStr::from_ptr(json) }.to_str() else {
        set_error("scenario JSON is not valid UTF-8".into());
        return FrStatus::InvalidArgument;
    };
    match Scenario::from_json(text).and_then(FrScenario::from_scenario) {
        Ok(handle) => {
            unsafe { *out = Box::into_raw(handle) };
            FrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release a handle returned by the load functions. Null is a no-op.
///
/// Safety: `handle` must be null or a pointer returned by a load function,
/// released at most once.
#[no_mangle]
pub unsafe extern "C" fn fr_scenario_free(handle: *mut FrScenario) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Dimension N of the scenario, or 0 for a null handle.
///
/// Safety: `handle` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn fr_scenario_dimension(handle: *const FrScenario) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { &*handle }.fields.dim()
}

/// 1 when the background has time-space signature, 0 when positive-definite,
/// -1 for a null handle.
///
/// Safety: `handle` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn fr_scenario_is_indefinite(handle: *const FrScenario) -> i32 {
    if handle.is_null() {
        return -1;
    }
    match unsafe { &*handle }.fields.signature() {
        Signature::TimeSpace => 1,
        Signature::PositiveDefinite => 0,
    }
}

fn with_handle(
    handle: *const FrScenario,
    x: *const f64,
    y: *const f64,
    out_len: usize,
    out: *mut f64,
    f: impl FnOnce(&FrScenario, &[f64], &DVector<f64>, &mut [f64]) -> Result<(), Error>,
) -> FrStatus {
    if handle.is_null() {
        set_error("null scenario handle".into());
        return FrStatus::InvalidArgument;
    }
    let h = unsafe { &*handle };
    let n = h.fields.dim();
    let (Some(xs), Some(ys), Some(outs)) = (
        unsafe { slice_arg(x, n) },
        unsafe { slice_arg(y, n) },
        unsafe { slice_out(out, out_len) },
    ) else {
        set_error("null buffer argument".into());
        return FrStatus::InvalidArgument;
    };
    let yv = DVector::from_column_slice(ys);
    match f(h, xs, &yv, outs) {
        Ok(()) => FrStatus::Ok,
        Err(e) => fail(e),
    }
}

/// The norm at (x, y): K in the positive-definite case, F in the indefinite
/// case. `x` and `y` carry N entries; `out` receives one value.
///
/// Safety: buffers must match the documented lengths for the handle's
/// dimension.
#[no_mangle]
pub unsafe extern "C" fn fr_norm(
    handle: *const FrScenario,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> FrStatus {
    with_handle(handle, x, y, 1, out, |h, xs, yv, outs| {
        let pf = h.fields.at(xs)?;
        outs[0] = match h.fields.signature() {
            Signature::PositiveDefinite => kernel::eval(&pf, yv)?.k,
            Signature::TimeSpace => pseudo::eval_pseudo_kernel(&pf, yv)?.f,
        };
        Ok(())
    })
}

/// The metric tensor at (x, y), row-major N*N: the closed form in the
/// positive-definite case, the certified numeric Hessian in the indefinite
/// case.
///
/// Safety: buffers must match the documented lengths for the handle's
/// dimension.
#[no_mangle]
pub unsafe extern "C" fn fr_metric_tensor(
    handle: *const FrScenario,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> FrStatus {
    if handle.is_null() {
        set_error("null scenario handle".into());
        return FrStatus::InvalidArgument;
    }
    let n = unsafe { &*handle }.fields.dim();
    with_handle(handle, x, y, n * n, out, |h, xs, yv, outs| {
        let pf = h.fields.at(xs)?;
        let metric = match h.fields.signature() {
            Signature::PositiveDefinite => {
                let kern = kernel::eval(&pf, yv)?;
                let aux = tensors::auxiliary_vectors(&pf, &kern, yv);
                tensors::metric_tensor(&pf, &kern, &aux)
            }
            Signature::TimeSpace => pseudo::pseudo_metric_numeric(&pf, yv)?.1,
        };
        for i in 0..n {
            for j in 0..n {
                outs[i * n + j] = metric[(i, j)];
            }
        }
        Ok(())
    })
}

/// Spray coefficients G^i at (x, y), N entries. Positive-definite only.
///
/// Safety: buffers must match the documented lengths for the handle's
/// dimension.
#[no_mangle]
pub unsafe extern "C" fn fr_spray(
    handle: *const FrScenario,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> FrStatus {
    if handle.is_null() {
        set_error("null scenario handle".into());
        return FrStatus::InvalidArgument;
    }
    let n = unsafe { &*handle }.fields.dim();
    with_handle(handle, x, y, n, out, |h, xs, yv, outs| {
        if h.fields.signature() != Signature::PositiveDefinite {
            return Err(Error::WrongSignature {
                x: xs.to_vec(),
                positive: usize::MAX,
            });
        }
        let data = spray::spray_closed_form(&h.fields, xs, yv)?;
        outs.copy_from_slice(data.g_spray.as_slice());
        Ok(())
    })
}

/// Cartan trace A_i at (x, y), N entries. Positive-definite only.
///
/// Safety: buffers must match the documented lengths for the handle's
/// dimension.
#[no_mangle]
pub unsafe extern "C" fn fr_cartan_trace(
    handle: *const FrScenario,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> FrStatus {
    if handle.is_null() {
        set_error("null scenario handle".into());
        return FrStatus::InvalidArgument;
    }
    let n = unsafe { &*handle }.fields.dim();
    with_handle(handle, x, y, n, out, |h, xs, yv, outs| {
        if h.fields.signature() != Signature::PositiveDefinite {
            return Err(Error::WrongSignature {
                x: xs.to_vec(),
                positive: usize::MAX,
            });
        }
        let pf = h.fields.at(xs)?;
        let kern = kernel::eval(&pf, yv)?;
        let aux = tensors::auxiliary_vectors(&pf, &kern, yv);
        outs.copy_from_slice(tensors::cartan_trace(&pf, &kern, &aux).as_slice());
        Ok(())
    })
}

/// Run the scenario's check batteries. `seed` overrides the random seed when
/// nonzero. Writes pass/fail counts; returns FR_OK even when checks fail —
/// inspect `failed`.
///
/// Safety: `passed` and `failed` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn fr_run_checks(
    handle: *const FrScenario,
    seed: u64,
    passed: *mut usize,
    failed: *mut usize,
) -> FrStatus {
    if handle.is_null() || passed.is_null() || failed.is_null() {
        set_error("null pointer argument".into());
        return FrStatus::InvalidArgument;
    }
    let h = unsafe { &*handle };
    let opts = checks::CheckOptions {
        seed_override: if seed == 0 { None } else { Some(seed) },
        ..Default::default()
    };
    match checks::run_checks(&h.scenario, &opts) {
        Ok(report) => {
            unsafe {
                *passed = report.summary.passed;
                *failed = report.summary.failed;
            }
            FrStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Integrate a geodesic and report the worst relative norm drift over the
/// trajectory. Positive-definite only.
///
/// Safety: `x0` and `y0` must carry N entries; `drift` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn fr_geodesic_drift(
    handle: *const FrScenario,
    x0: *const f64,
    y0: *const f64,
    t_end: f64,
    step: f64,
    drift: *mut f64,
) -> FrStatus {
    with_handle(handle, x0, y0, 1, drift, |h, xs, yv, outs| {
        let traj = geodesic::integrate(&h.fields, xs, yv.as_slice(), t_end, step)?;
        if let Some(fault) = traj.fault {
            return Err(fault);
        }
        outs[0] = traj.max_residual();
        Ok(())
    })
}

/// The message of the last error on this thread, or null when the last call
/// succeeded. The pointer stays valid until the next failing call on the
/// same thread.
#[no_mangle]
pub extern "C" fn fr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
