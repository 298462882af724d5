//! C ABI for the precoding simulator.
//!
//! Conventions:
//! - Scenarios are opaque handles created by the constructors and released
//!   with `hia_scenario_free`.
//! - Functions returning pointers yield NULL on failure; functions returning
//!   `HiaStatus` report the failure class. Either way the thread-local
//!   message from `hia_last_error` describes the most recent failure.
//! - Strings returned by the library are NUL-terminated UTF-8 owned by the
//!   caller; release them with `hia_string_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;

use hia_precode::error::HiaError;
use hia_precode::harness::{bundled_scenario, monte_carlo, trace_run, trace_to_csv, Scenario};
use hia_precode::validate::run_suites;

/// Failure classes mirrored across the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiaStatus {
    Ok = 0,
    /// NULL pointer, non-UTF-8 text, or an argument violating a contract.
    InvalidArgument = 1,
    /// Scenario text did not parse or failed validation.
    ParseError = 2,
    /// A solver or channel computation failed.
    NumericalError = 3,
}

/// Opaque scenario handle.
#[repr(C)]
pub struct HiaScenario {
    _private: [u8; 0],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn classify(e: &HiaError) -> HiaStatus {
    match e {
        HiaError::Config(_) | HiaError::InvalidGeometry(_) => HiaStatus::ParseError,
        _ => HiaStatus::NumericalError,
    }
}

fn into_handle(sc: Scenario) -> *mut HiaScenario {
    Box::into_raw(Box::new(sc)) as *mut HiaScenario
}

unsafe fn scenario_ref<'a>(h: *const HiaScenario) -> Option<&'a Scenario> {
    (h as *const Scenario).as_ref()
}

unsafe fn scenario_mut<'a>(h: *mut HiaScenario) -> Option<&'a mut Scenario> {
    (h as *mut Scenario).as_mut()
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, HiaStatus> {
    if p.is_null() {
        set_error("NULL string argument");
        return Err(HiaStatus::InvalidArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        HiaStatus::InvalidArgument
    })
}

fn export_string(s: String) -> *mut c_char {
    match CString::new(s) {
        Ok(c) => c.into_raw(),
        Err(_) => {
            set_error("output contained an interior NUL byte");
            std::ptr::null_mut()
        }
    }
}

/// Message describing the most recent failure on this thread, or NULL.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hia_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map(|c| c.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Parses a scenario from TOML text. NULL on failure.
///
/// # Safety
/// `text` must be a NUL-terminated string or NULL.
#[no_mangle]
pub unsafe extern "C" fn hia_scenario_from_toml(text: *const c_char) -> *mut HiaScenario {
    clear_error();
    let text = match str_arg(text) {
        Ok(t) => t,
        Err(_) => return std::ptr::null_mut(),
    };
    match Scenario::from_toml_str(text) {
        Ok(sc) => into_handle(sc),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Returns a copy of the bundled scenario with the given id, or NULL.
///
/// # Safety
/// `id` must be a NUL-terminated string or NULL.
#[no_mangle]
pub unsafe extern "C" fn hia_scenario_bundled(id: *const c_char) -> *mut HiaScenario {
    clear_error();
    let id = match str_arg(id) {
        Ok(t) => t,
        Err(_) => return std::ptr::null_mut(),
    };
    match bundled_scenario(id) {
        Some(sc) => into_handle(sc),
        None => {
            set_error(&format!("no bundled scenario named '{id}'"));
            std::ptr::null_mut()
        }
    }
}

/// Releases a scenario handle. NULL is a no-op.
///
/// # Safety
/// `h` must come from a scenario constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hia_scenario_free(h: *mut HiaScenario) {
    if !h.is_null() {
        drop(Box::from_raw(h as *mut Scenario));
    }
}

/// Overrides the master seed.
///
/// # Safety
/// `h` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn hia_scenario_set_seed(h: *mut HiaScenario, seed: u64) -> HiaStatus {
    clear_error();
    match scenario_mut(h) {
        Some(sc) => {
            sc.seed = seed;
            HiaStatus::Ok
        }
        None => {
            set_error("NULL scenario handle");
            HiaStatus::InvalidArgument
        }
    }
}

/// Overrides the draw count (must stay positive).
///
/// # Safety
/// `h` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn hia_scenario_set_draws(h: *mut HiaScenario, draws: usize) -> HiaStatus {
    clear_error();
    let Some(sc) = scenario_mut(h) else {
        set_error("NULL scenario handle");
        return HiaStatus::InvalidArgument;
    };
    if draws == 0 {
        set_error("draw count must be positive");
        return HiaStatus::InvalidArgument;
    }
    sc.draws = draws;
    HiaStatus::Ok
}

/// Runs the scenario's Monte Carlo experiment and returns the aggregated
/// rate table as CSV text. NULL on failure.
///
/// # Safety
/// `h` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn hia_run_csv(h: *const HiaScenario) -> *mut c_char {
    clear_error();
    let Some(sc) = scenario_ref(h) else {
        set_error("NULL scenario handle");
        return std::ptr::null_mut();
    };
    match monte_carlo(sc) {
        Ok(table) => export_string(table.to_csv()),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Runs the scenario's solver once and returns the per-iteration trace as
/// CSV text. NULL on failure.
///
/// # Safety
/// `h` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn hia_trace_csv(h: *const HiaScenario) -> *mut c_char {
    clear_error();
    let Some(sc) = scenario_ref(h) else {
        set_error("NULL scenario handle");
        return std::ptr::null_mut();
    };
    match trace_run(sc) {
        Ok(trace) => export_string(trace_to_csv(sc, &trace)),
        Err(e) => {
            set_error(&e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Runs the numeric self checks. Returns 0 when every check passes, 1 when
/// any check fails, or a negative HiaStatus value on setup errors. When
/// `report_out` is non-NULL it receives the check table (caller frees).
///
/// # Safety
/// `only` must be NULL or a NUL-terminated suite name; `report_out` must be
/// NULL or a valid out-pointer.
#[no_mangle]
pub unsafe extern "C" fn hia_validate(
    only: *const c_char,
    report_out: *mut *mut c_char,
) -> i32 {
    clear_error();
    let only = if only.is_null() {
        None
    } else {
        match str_arg(only) {
            Ok(t) => Some(t),
            Err(s) => return -(s as i32),
        }
    };
    if let Some(name) = only {
        if !hia_precode::validate::SUITES.contains(&name) {
            set_error(&format!("unknown suite '{name}'"));
            return -(HiaStatus::InvalidArgument as i32);
        }
    }
    match run_suites(only) {
        Ok(report) => {
            if !report_out.is_null() {
                *report_out = export_string(report.render());
            }
            if report.all_pass() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            set_error(&e.to_string());
            -(classify(&e) as i32)
        }
    }
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hia_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
