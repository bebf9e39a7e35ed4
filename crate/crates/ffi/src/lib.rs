//! C ABI over the `filelife` models.
//!
//! Objects are opaque handles created by `fl_*_new`-style calls and released
//! with the matching `*_free`. Every fallible call returns an [`FlStatus`]; on
//! failure a description is available from [`fl_last_error_message`] on the
//! same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use filelife::approx_ph::mean_lifetime_approx;
use filelife::montecarlo::{simulate_lifetime, SimConfig, SimInitial, SimModel};
use filelife::qbd::{mean_lifetime_qbd, InitialAssignment};
use filelife::stationary::poisson_stationary;
use filelife::{Error, LifetimeReport, ModelParams};

/// Result codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Singular = 3,
    NoConvergence = 4,
    BufferTooSmall = 5,
    Unavailable = 6,
    Internal = 7,
}

/// Which chain the simulator runs.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlSimModel {
    /// Full (centers, copies) chain started from the stationary network.
    Physical2d = 0,
    /// Copy-count chain with corrected replication rates, started from one copy.
    Corrected1d = 1,
}

/// Validated model parameters.
pub struct FlParams(ModelParams);

/// Result of one lifetime evaluation.
pub struct FlReport(LifetimeReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_of(err: &Error) -> FlStatus {
    match err {
        Error::SingularSystem
        | Error::SingularSubgenerator
        | Error::SingularU { .. }
        | Error::Linalg(_) => FlStatus::Singular,
        Error::NoConvergence { .. } => FlStatus::NoConvergence,
        Error::DimensionMismatch { .. } => FlStatus::Internal,
        _ => FlStatus::InvalidArgument,
    }
}

fn fail(status: FlStatus, message: impl Into<String>) -> FlStatus {
    set_error(message.into());
    status
}

/// Runs `body`, turning model errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), FlStatus>) -> FlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => FlStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(FlStatus::Internal, "internal panic"),
    }
}

fn check<T>(result: filelife::Result<T>) -> Result<T, FlStatus> {
    result.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn params_ref<'a>(params: *const FlParams) -> Result<&'a ModelParams, FlStatus> {
    params
        .as_ref()
        .map(|p| &p.0)
        .ok_or_else(|| fail(FlStatus::NullPointer, "params is null"))
}

unsafe fn report_ref<'a>(report: *const FlReport) -> Result<&'a LifetimeReport, FlStatus> {
    report
        .as_ref()
        .map(|r| &r.0)
        .ok_or_else(|| fail(FlStatus::NullPointer, "report is null"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), FlStatus> {
    if out.is_null() {
        return Err(fail(FlStatus::NullPointer, "output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn publish(out: *mut *mut FlReport, report: LifetimeReport) -> Result<(), FlStatus> {
    write_out(out, Box::into_raw(Box::new(FlReport(report))))
}

/// Message for the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Validates `(lambda, beta, mu, d)` and stores a new handle in `*out`.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_params_new(
    lambda: f64,
    beta: f64,
    mu: f64,
    d: usize,
    out: *mut *mut FlParams,
) -> FlStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(FlStatus::NullPointer, "output pointer is null"));
        }
        let params = check(ModelParams::new(lambda, beta, mu, d))?;
        write_out(out, Box::into_raw(Box::new(FlParams(params))))
    })
}

/// # Safety
/// `params` must be null or a handle from [`fl_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fl_params_free(params: *mut FlParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Mean lifetime of the one-dimensional phase-type approximation.
///
/// # Safety
/// `params` must be a live handle; `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_approx(params: *const FlParams, out: *mut *mut FlReport) -> FlStatus {
    guard(|| {
        let p = params_ref(params)?;
        let report = check(mean_lifetime_approx(p, None))?;
        publish(out, report)
    })
}

/// Mean lifetime of the two-dimensional chain, refining the truncation level
/// until the relative change falls below `tol`.
///
/// # Safety
/// `params` must be a live handle; `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_qbd(
    params: *const FlParams,
    tol: f64,
    out: *mut *mut FlReport,
) -> FlStatus {
    guard(|| {
        let p = params_ref(params)?;
        let report = check(mean_lifetime_qbd(p, &InitialAssignment::default(), tol))?;
        publish(out, report)
    })
}

/// Monte Carlo estimate with `samples` independent replications.
///
/// # Safety
/// `params` must be a live handle; `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn fl_simulate(
    params: *const FlParams,
    model: FlSimModel,
    samples: u64,
    seed: u64,
    out: *mut *mut FlReport,
) -> FlStatus {
    guard(|| {
        let p = *params_ref(params)?;
        let (model, initial) = match model {
            FlSimModel::Physical2d => (SimModel::Physical2d, SimInitial::StationaryOneCopy),
            FlSimModel::Corrected1d => (
                SimModel::Corrected1d,
                SimInitial::Fixed {
                    centers: 0,
                    copies: 1,
                },
            ),
        };
        let result = check(simulate_lifetime(&SimConfig {
            params: p,
            model,
            samples,
            seed,
            initial,
        }))?;
        publish(out, result.into_report())
    })
}

/// # Safety
/// `report` must be null or a handle returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fl_report_free(report: *mut FlReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Mean lifetime, or NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_report_mean(report: *const FlReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.mean)
}

/// Number of raw moments stored in the report.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fl_report_moment_count(report: *const FlReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.moments.len())
}

/// Raw moment `E[X^order]`, `order >= 1`.
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for writing a double.
#[no_mangle]
pub unsafe extern "C" fn fl_report_moment(
    report: *const FlReport,
    order: usize,
    out: *mut f64,
) -> FlStatus {
    guard(|| {
        let r = report_ref(report)?;
        let value = order
            .checked_sub(1)
            .and_then(|i| r.moments.get(i))
            .ok_or_else(|| {
                fail(
                    FlStatus::Unavailable,
                    format!("moment of order {order} not available"),
                )
            })?;
        write_out(out, *value)
    })
}

/// Standard error of the mean; zero for analytic methods.
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for writing a double.
#[no_mangle]
pub unsafe extern "C" fn fl_report_std_error(report: *const FlReport, out: *mut f64) -> FlStatus {
    guard(|| {
        let r = report_ref(report)?;
        write_out(out, r.std_error)
    })
}

/// Truncation level behind the result: the final level for the QBD method,
/// the stationary-law cutoff for the approximation. Simulations have none.
///
/// # Safety
/// `report` must be a live handle; `out` must be valid for writing a `size_t`.
#[no_mangle]
pub unsafe extern "C" fn fl_report_truncation_level(
    report: *const FlReport,
    out: *mut usize,
) -> FlStatus {
    guard(|| {
        let r = report_ref(report)?;
        let level = r
            .meta
            .truncation_level
            .ok_or_else(|| fail(FlStatus::Unavailable, "report has no truncation level"))?;
        write_out(out, level)
    })
}

/// Stationary probabilities of the number of live centers, truncated once
/// the remaining tail is below `tol`.
///
/// `*out_len` always receives the number of probabilities. If `capacity` is
/// smaller, nothing is copied and [`FlStatus::BufferTooSmall`] is returned,
/// so a first call with `buf = NULL, capacity = 0` queries the size.
///
/// # Safety
/// `buf` must be valid for `capacity` doubles (or null with zero capacity);
/// `out_len` must be valid for writing a `size_t`.
#[no_mangle]
pub unsafe extern "C" fn fl_stationary(
    lambda: f64,
    beta: f64,
    tol: f64,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> FlStatus {
    guard(|| {
        let params = check(ModelParams::new(lambda, beta, 0.0, 1))?;
        let dist = check(poisson_stationary(&params, tol))?;
        let n = dist.probs.len();
        write_out(out_len, n)?;
        if capacity < n {
            return Err(fail(
                FlStatus::BufferTooSmall,
                format!("need room for {n} values"),
            ));
        }
        if buf.is_null() {
            return Err(fail(FlStatus::NullPointer, "buffer is null"));
        }
        ptr::copy_nonoverlapping(dist.probs.as_ptr(), buf, n);
        Ok(())
    })
}
