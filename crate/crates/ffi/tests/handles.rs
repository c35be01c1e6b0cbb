use std::ffi::{CStr, CString};
use std::ptr;

use loophole_ffi::*;

const BREATH: &str = r#"
schema = 1
[breath]
duration_s = 40.0
persons = [{ rate_bpm = 15.0 }]
"#;

const SIM: &str = r#"
schema = 1
seed = 3
duration_s = 3.0

[[station]]
name = "ap"
mac = "02:00:00:00:00:a0"
is_ap = true
associated = ["02:00:00:00:00:01"]

[[station]]
name = "victim"
mac = "02:00:00:00:00:01"
aid = 1
ap_mac = "02:00:00:00:00:a0"

[attacker]
target = "02:00:00:00:00:01"
beacon_period_us = 200000
"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(loophole_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn synth_sense_roundtrip() {
    let text = CString::new(BREATH).unwrap();
    let mut trace = ptr::null_mut();
    assert_eq!(
        unsafe { loophole_trace_synth(text.as_ptr(), 5, &mut trace) },
        LoopholeStatus::Ok
    );
    let n = unsafe { loophole_trace_len(trace) };
    assert!(n > 350, "{n}");

    let mut est = ptr::null_mut();
    assert_eq!(unsafe { loophole_sense(trace, &mut est) }, LoopholeStatus::Ok);
    let len = unsafe { loophole_estimates_len(est) };
    assert_eq!(len, 11);
    for i in 0..len {
        let mut e = LoopholeEstimate::default();
        assert_eq!(unsafe { loophole_estimates_get(est, i, &mut e) }, LoopholeStatus::Ok);
        assert!((e.rate_bpm - 15.0).abs() < 1.0, "window {i}: {}", e.rate_bpm);
        assert!((e.window_end_s - e.window_start_s - 30.0).abs() < 1e-9);
    }
    let mut e = LoopholeEstimate::default();
    assert_eq!(
        unsafe { loophole_estimates_get(est, len, &mut e) },
        LoopholeStatus::InvalidArgument
    );
    assert!(last_error().contains("out of range"));
    unsafe {
        loophole_estimates_free(est);
        loophole_trace_free(trace);
        loophole_trace_free(ptr::null_mut());
    }
}

#[test]
fn trace_read_reports_io_and_parse() {
    let missing = CString::new("/nonexistent/trace.csv").unwrap();
    let mut trace = ptr::null_mut();
    assert_eq!(
        unsafe { loophole_trace_read(missing.as_ptr(), &mut trace) },
        LoopholeStatus::Io
    );
    assert!(trace.is_null());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "t_s,sub_0\n0.0,1.0\n").unwrap();
    let p = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { loophole_trace_read(p.as_ptr(), &mut trace) },
        LoopholeStatus::Parse
    );
    assert!(!last_error().is_empty());
}

#[test]
fn simulate_keeps_target_awake() {
    let text = CString::new(SIM).unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { loophole_simulate(text.as_ptr(), &mut report) },
        LoopholeStatus::Ok,
        "{}",
        last_error()
    );
    let mut awake = 0.0;
    assert_eq!(
        unsafe { loophole_sim_awake_fraction(report, ptr::null(), &mut awake) },
        LoopholeStatus::Ok
    );
    assert!(awake > 0.95, "{awake}");
    let mut ratio = 0.0;
    assert_eq!(
        unsafe { loophole_sim_response_ratio(report, &mut ratio) },
        LoopholeStatus::Ok
    );
    assert!(ratio > 0.9, "{ratio}");
    let other = CString::new("02:00:00:00:00:77").unwrap();
    assert_eq!(
        unsafe { loophole_sim_awake_fraction(report, other.as_ptr(), &mut awake) },
        LoopholeStatus::NotFound
    );
    unsafe { loophole_sim_free(report) };
}

#[test]
fn bad_scenario_is_a_parse_error() {
    let text = CString::new("schema = 1\nbogus = 2\n").unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { loophole_simulate(text.as_ptr(), &mut report) },
        LoopholeStatus::Parse
    );
    assert!(last_error().contains("bogus"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/loophole.h")).unwrap();
    for name in [
        "LOOPHOLE_STATUS_OK",
        "typedef struct LoopholeTrace LoopholeTrace",
        "loophole_last_error",
        "loophole_frame_size",
        "loophole_airtime_us",
        "loophole_exchange_cycle_us",
        "loophole_drain_minutes",
        "loophole_trace_read",
        "loophole_trace_synth",
        "loophole_trace_free",
        "loophole_sense",
        "loophole_estimates_get",
        "loophole_estimates_free",
        "loophole_simulate",
        "loophole_sim_awake_fraction",
        "loophole_sim_free",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
