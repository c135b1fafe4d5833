//! C interface to the v2vsim simulator.
//!
//! Scenarios and reports are opaque handles owned by the caller and released
//! with the matching `_free` function. Every fallible call returns a status
//! code; the message for the most recent failure on the calling thread is
//! available from [`v2v_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use v2vsim::adversary::{bounded_search, SearchError, SearchOutcome};
use v2vsim::crypto::default_provider;
use v2vsim::sim::verdict::Outcome;
use v2vsim::sim::{demos, load_scenario, run, RunReport, Scenario};

/// Status codes. Scenario parse failures use 10..=14.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2vStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    UnknownDemo = 3,
    Simulation = 4,
    SearchBudget = 5,
    SearchLimit = 6,
    Panic = 7,
    SyntaxError = 10,
    UnknownId = 11,
    DuplicateId = 12,
    OutOfRange = 13,
    MissingField = 14,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2vOutcome {
    SecureRun = 0,
    AttackFound = 1,
    HandshakeAborted = 2,
    Error = 3,
}

/// A parsed scenario.
pub struct V2vScenario(Scenario);

/// The result of one run.
pub struct V2vReport(RunReport);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct V2vSearchResult {
    pub attack_found: bool,
    pub nodes: u64,
    pub runs: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl ToString) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string());
}

fn guard(f: impl FnOnce() -> Result<(), (V2vStatus, String)>) -> V2vStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => V2vStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            V2vStatus::Panic
        }
    }
}

fn status_from_code(code: i32) -> V2vStatus {
    match code {
        10 => V2vStatus::SyntaxError,
        11 => V2vStatus::UnknownId,
        12 => V2vStatus::DuplicateId,
        13 => V2vStatus::OutOfRange,
        _ => V2vStatus::MissingField,
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, (V2vStatus, String)> {
    if p.is_null() {
        return Err((V2vStatus::NullArgument, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (V2vStatus::InvalidUtf8, e.to_string()))
}

fn null(what: &str) -> (V2vStatus, String) {
    (V2vStatus::NullArgument, format!("null {what}"))
}

/// Copies `s` into `buf` as a NUL-terminated string, truncating if needed.
/// Returns the length `s` needs without the terminator.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > 0 {
        let n = s.len().min(len - 1);
        ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), n);
        *buf.add(n) = 0;
    }
    s.len()
}

/// Parses scenario text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2v_scenario_parse(text: *const c_char, out: *mut *mut V2vScenario) -> V2vStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out pointer"));
        }
        let text = str_arg(text)?;
        let sc = load_scenario(text).map_err(|e| (status_from_code(e.code()), e.to_string()))?;
        *out = Box::into_raw(Box::new(V2vScenario(sc)));
        Ok(())
    })
}

/// Loads a built-in demo scenario by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2v_demo_scenario(name: *const c_char, out: *mut *mut V2vScenario) -> V2vStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out pointer"));
        }
        let name = str_arg(name)?;
        let demo = demos::find(name).ok_or_else(|| (V2vStatus::UnknownDemo, format!("unknown demo `{name}`")))?;
        *out = Box::into_raw(Box::new(V2vScenario(demo.scenario())));
        Ok(())
    })
}

/// Overrides the scenario seed.
///
/// # Safety
/// `sc` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn v2v_scenario_set_seed(sc: *mut V2vScenario, seed: u64) -> V2vStatus {
    guard(|| {
        let sc = sc.as_mut().ok_or_else(|| null("scenario"))?;
        sc.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `sc` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn v2v_scenario_free(sc: *mut V2vScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Runs a scenario to completion.
///
/// # Safety
/// `sc` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2v_run(sc: *const V2vScenario, out: *mut *mut V2vReport) -> V2vStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out pointer"));
        }
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        let report = run(&sc.0, default_provider()).map_err(|e| (V2vStatus::Simulation, e.to_string()))?;
        *out = Box::into_raw(Box::new(V2vReport(report)));
        Ok(())
    })
}

/// Bounded attack search with at most `max_actions` adversary actions.
///
/// # Safety
/// `sc` must be a live scenario handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn v2v_search(
    sc: *const V2vScenario,
    max_actions: u32,
    node_budget: u64,
    out: *mut V2vSearchResult,
) -> V2vStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out pointer"))?;
        let sc = sc.as_ref().ok_or_else(|| null("scenario"))?;
        let result = bounded_search(&sc.0, default_provider(), max_actions as usize, node_budget).map_err(|e| {
            let status = match e {
                SearchError::Budget { .. } => V2vStatus::SearchBudget,
                SearchError::TooManyActions(_) => V2vStatus::SearchLimit,
                SearchError::Setup(_) => V2vStatus::Simulation,
            };
            (status, e.to_string())
        })?;
        let stats = result.stats();
        *out = V2vSearchResult {
            attack_found: matches!(result, SearchOutcome::Attack { .. }),
            nodes: stats.nodes,
            runs: stats.runs,
        };
        Ok(())
    })
}

/// # Safety
/// `r` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn v2v_report_outcome(r: *const V2vReport) -> V2vOutcome {
    match r.as_ref().map(|r| &r.0.verdict.outcome) {
        Some(Outcome::SecureRun) => V2vOutcome::SecureRun,
        Some(Outcome::AttackFound(_)) => V2vOutcome::AttackFound,
        Some(Outcome::HandshakeAborted(_)) => V2vOutcome::HandshakeAborted,
        Some(Outcome::Error(_)) | None => V2vOutcome::Error,
    }
}

/// Process exit code matching the command-line tool.
///
/// # Safety
/// `r` must be a live report handle.
#[no_mangle]
pub unsafe extern "C" fn v2v_report_exit_code(r: *const V2vReport) -> i32 {
    r.as_ref().map_or(1, |r| r.0.verdict.outcome.exit_code())
}

/// Writes the verdict, e.g. `ATTACK_FOUND(SECRECY)`, into `buf`.
/// Returns the full length; retry with a larger buffer if it is `>= len`.
///
/// # Safety
/// `r` must be a live report handle; `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn v2v_report_verdict(r: *const V2vReport, buf: *mut c_char, len: usize) -> usize {
    match r.as_ref() {
        Some(r) => copy_out(&r.0.verdict.outcome.to_string(), buf, len),
        None => copy_out("", buf, len),
    }
}

/// Writes the rendered trace into `buf`. Same length convention as
/// [`v2v_report_verdict`].
///
/// # Safety
/// `r` must be a live report handle; `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn v2v_report_trace(r: *const V2vReport, buf: *mut c_char, len: usize) -> usize {
    match r.as_ref() {
        Some(r) => copy_out(&r.0.trace.render(), buf, len),
        None => copy_out("", buf, len),
    }
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn v2v_report_free(r: *mut V2vReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Copies the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must hold `len` bytes or be null.
#[no_mangle]
pub unsafe extern "C" fn v2v_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_out(&e.borrow(), buf, len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_out_truncates_and_terminates() {
        let mut buf = [0x7f as c_char; 4];
        let n = unsafe { copy_out("abcdef", buf.as_mut_ptr(), buf.len()) };
        assert_eq!(n, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }

    #[test]
    fn null_buffer_reports_length() {
        assert_eq!(unsafe { copy_out("hello", ptr::null_mut(), 0) }, 5);
    }
}
