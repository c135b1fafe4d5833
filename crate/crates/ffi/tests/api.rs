use std::ffi::{c_char, CStr, CString};
use std::ptr;

use v2vsim_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe { v2v_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn demo(name: &str) -> *mut V2vScenario {
    let name = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { v2v_demo_scenario(name.as_ptr(), &mut sc) }, V2vStatus::Ok);
    sc
}

fn run(sc: *const V2vScenario) -> *mut V2vReport {
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { v2v_run(sc, &mut r) }, V2vStatus::Ok);
    r
}

fn verdict(r: *const V2vReport) -> String {
    let mut buf = [0 as c_char; 64];
    unsafe { v2v_report_verdict(r, buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn demo_round_trip() {
    let sc = demo("ps-baseline");
    let r = run(sc);
    unsafe {
        assert_eq!(v2v_report_outcome(r), V2vOutcome::AttackFound);
        assert_eq!(v2v_report_exit_code(r), 2);
    }
    assert_eq!(verdict(r), "ATTACK_FOUND(SECRECY)");
    unsafe {
        v2v_report_free(r);
        v2v_scenario_free(sc);
    }
}

#[test]
fn defense_demo_aborts() {
    let sc = demo("puf-defense");
    let r = run(sc);
    assert_eq!(unsafe { v2v_report_outcome(r) }, V2vOutcome::HandshakeAborted);
    assert_eq!(verdict(r), "HANDSHAKE_ABORTED(TIMING_VIOLATION)");
    unsafe {
        v2v_report_free(r);
        v2v_scenario_free(sc);
    }
}

#[test]
fn trace_length_protocol() {
    let sc = demo("basic-defense");
    let r = run(sc);
    let need = unsafe { v2v_report_trace(r, ptr::null_mut(), 0) };
    assert!(need > 0);
    let mut buf = vec![0 as c_char; need + 1];
    let n = unsafe { v2v_report_trace(r, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, need);
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert_eq!(text.len(), need);
    assert!(text.lines().last().unwrap().contains("VERDICT"));
    unsafe {
        v2v_report_free(r);
        v2v_scenario_free(sc);
    }
}

#[test]
fn seed_override_keeps_outcome() {
    let sc = demo("twin-attack");
    let mut verdicts = Vec::new();
    for seed in [1, 2, 3] {
        assert_eq!(unsafe { v2v_scenario_set_seed(sc, seed) }, V2vStatus::Ok);
        let r = run(sc);
        verdicts.push(verdict(r));
        unsafe { v2v_report_free(r) };
    }
    assert!(verdicts.iter().all(|v| v == "ATTACK_FOUND(AUTHENTICATION)"), "{verdicts:?}");
    unsafe { v2v_scenario_free(sc) };
}

#[test]
fn parse_errors_set_status_and_message() {
    let text = CString::new("scheme = V9\n").unwrap();
    let mut sc = ptr::null_mut();
    let status = unsafe { v2v_scenario_parse(text.as_ptr(), &mut sc) };
    assert_ne!(status, V2vStatus::Ok);
    assert!((10..=14).contains(&(status as i32)));
    assert!(sc.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn unknown_demo() {
    let name = CString::new("no-such-demo").unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { v2v_demo_scenario(name.as_ptr(), &mut sc) }, V2vStatus::UnknownDemo);
    assert!(last_error().contains("no-such-demo"));
}

#[test]
fn null_arguments() {
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { v2v_scenario_parse(ptr::null(), &mut sc) }, V2vStatus::NullArgument);
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { v2v_run(ptr::null(), &mut r) }, V2vStatus::NullArgument);
    assert_eq!(unsafe { v2v_report_outcome(ptr::null()) }, V2vOutcome::Error);
    unsafe {
        v2v_scenario_free(ptr::null_mut());
        v2v_report_free(ptr::null_mut());
    }
}

#[test]
fn search_through_ffi() {
    let sc = demo("ps-baseline");
    let mut out = V2vSearchResult::default();
    assert_eq!(unsafe { v2v_search(sc, 2, 100_000, &mut out) }, V2vStatus::Ok);
    assert!(out.attack_found);
    assert!(out.nodes >= 1);
    assert_eq!(unsafe { v2v_search(sc, 99, 100_000, &mut out) }, V2vStatus::SearchLimit);
    unsafe { v2v_scenario_free(sc) };
}
