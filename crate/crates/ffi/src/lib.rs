//! C ABI for `vodsim`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free` function. Every fallible call returns a
//! [`VodsimStatus`]; on failure, [`vodsim_last_error`] describes the cause
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vodsim::{Error, RunConfig, RunReport};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VodsimStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// Parsed run configuration.
pub struct VodsimConfig(RunConfig);

/// Result of one simulation run.
pub struct VodsimReport(RunReport);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VodsimSample {
    pub time: f64,
    pub buffer_utilization: f64,
    pub hit_ratio: f64,
    pub prefixes_buffered: u64,
    pub concurrent_users: u64,
    pub rejections: u64,
    pub mean_startup_latency: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VodsimSummary {
    pub seed: u64,
    pub requests: u64,
    pub events_dispatched: u64,
    pub final_hit_ratio: f64,
    pub peak_utilization: f64,
    pub peak_prefixes: u64,
    pub peak_concurrent_users: u64,
    pub rejections: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: VodsimStatus, message: impl Into<String>) -> VodsimStatus {
    set_error(message.into());
    status
}

fn classify(err: &Error) -> VodsimStatus {
    match err {
        Error::Config(_) | Error::ConfigLine { .. } => VodsimStatus::Config,
        Error::Io(_) | Error::Trace(_) => VodsimStatus::Io,
        _ => VodsimStatus::Simulation,
    }
}

fn from_error(err: Error) -> VodsimStatus {
    let status = classify(&err);
    fail(status, err.to_string())
}

fn guarded(body: impl FnOnce() -> VodsimStatus) -> VodsimStatus {
    catch_unwind(AssertUnwindSafe(body))
        .unwrap_or_else(|_| fail(VodsimStatus::Panic, "internal panic"))
}

unsafe fn text_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, VodsimStatus> {
    if p.is_null() {
        return Err(fail(VodsimStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VodsimStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

macro_rules! check {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

macro_rules! non_null {
    ($p:expr, $what:expr) => {
        if $p.is_null() {
            return fail(VodsimStatus::NullArgument, concat!($what, " is null"));
        }
    };
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vodsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn vodsim_status_name(status: VodsimStatus) -> *const c_char {
    let s: &'static CStr = match status {
        VodsimStatus::Ok => c"ok",
        VodsimStatus::NullArgument => c"null argument",
        VodsimStatus::InvalidUtf8 => c"invalid utf-8",
        VodsimStatus::Config => c"configuration error",
        VodsimStatus::Simulation => c"simulation error",
        VodsimStatus::Io => c"i/o error",
        VodsimStatus::OutOfRange => c"index out of range",
        VodsimStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// New configuration with every default.
#[no_mangle]
pub extern "C" fn vodsim_config_new() -> *mut VodsimConfig {
    Box::into_raw(Box::new(VodsimConfig(RunConfig::default())))
}

/// Parses `key = value` text into a new configuration.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vodsim_config_parse(
    text: *const c_char,
    out: *mut *mut VodsimConfig,
) -> VodsimStatus {
    guarded(|| {
        non_null!(out, "out");
        let text = check!(text_arg(text, "text"));
        match vodsim::parse_config(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(VodsimConfig(cfg)));
                VodsimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Sets one key, with the same names and ranges as the config file.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn vodsim_config_set(
    cfg: *mut VodsimConfig,
    key: *const c_char,
    value: *const c_char,
) -> VodsimStatus {
    guarded(|| {
        non_null!(cfg, "cfg");
        let key = check!(text_arg(key, "key"));
        let value = check!(text_arg(value, "value"));
        match (*cfg).0.set(key, value) {
            Ok(()) => VodsimStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn vodsim_config_free(cfg: *mut VodsimConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs one simulation with the given seed. Cross-field checks on the
/// configuration happen here.
///
/// # Safety
/// `cfg` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vodsim_run(
    cfg: *const VodsimConfig,
    seed: u64,
    out: *mut *mut VodsimReport,
) -> VodsimStatus {
    guarded(|| {
        non_null!(cfg, "cfg");
        non_null!(out, "out");
        let cfg = &(*cfg).0;
        if let Err(e) = cfg.validate() {
            return from_error(e);
        }
        match vodsim::run(&cfg.sim.with_seed(seed)) {
            Ok(report) => {
                *out = Box::into_raw(Box::new(VodsimReport(report)));
                VodsimStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of metric samples; 0 for a null report.
///
/// # Safety
/// `report` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn vodsim_report_sample_count(report: *const VodsimReport) -> usize {
    if report.is_null() {
        0
    } else {
        (*report).0.trace.samples.len()
    }
}

/// # Safety
/// `report` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vodsim_report_sample(
    report: *const VodsimReport,
    index: usize,
    out: *mut VodsimSample,
) -> VodsimStatus {
    guarded(|| {
        non_null!(report, "report");
        non_null!(out, "out");
        let samples = &(*report).0.trace.samples;
        let Some(s) = samples.get(index) else {
            return fail(
                VodsimStatus::OutOfRange,
                format!("sample {index} of {}", samples.len()),
            );
        };
        *out = VodsimSample {
            time: s.time,
            buffer_utilization: s.buffer_utilization,
            hit_ratio: s.hit_ratio,
            prefixes_buffered: s.prefixes_buffered,
            concurrent_users: s.concurrent_users,
            rejections: s.rejections,
            mean_startup_latency: s.mean_startup_latency,
        };
        VodsimStatus::Ok
    })
}

/// # Safety
/// `report` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vodsim_report_summary(
    report: *const VodsimReport,
    out: *mut VodsimSummary,
) -> VodsimStatus {
    guarded(|| {
        non_null!(report, "report");
        non_null!(out, "out");
        let r = &(*report).0;
        *out = VodsimSummary {
            seed: r.seed,
            requests: r.requests.len() as u64,
            events_dispatched: r.events_dispatched,
            final_hit_ratio: r.trace.final_hit_ratio(),
            peak_utilization: r.trace.peak_utilization(),
            peak_prefixes: r.trace.peak_prefixes(),
            peak_concurrent_users: r.peak_concurrent_users,
            rejections: r.trace.total_rejections(),
        };
        VodsimStatus::Ok
    })
}

/// Writes the metrics trace as CSV.
///
/// # Safety
/// `report` must come from this library; `path` must be a nul-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn vodsim_report_write_csv(
    report: *const VodsimReport,
    path: *const c_char,
) -> VodsimStatus {
    guarded(|| {
        non_null!(report, "report");
        let path = check!(text_arg(path, "path"));
        match (*report).0.trace.save(Path::new(path)) {
            Ok(()) => VodsimStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn vodsim_report_free(report: *mut VodsimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
