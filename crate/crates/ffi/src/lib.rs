//! C ABI over the loophole core.
//!
//! Every fallible call returns a [`LoopholeStatus`]. On failure the message is
//! kept per thread and read back with [`loophole_last_error`]. Objects cross
//! the boundary as opaque handles that the caller releases with the matching
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};

use loophole::attacker::AttackConfig;
use loophole::cli::Scenario;
use loophole::csi::{read_trace, synthesize_trace, CsiTrace};
use loophole::energy::{drain_report, Library};
use loophole::frames::{airtime_us, frame_size, FrameKind, Mac, PhyTiming};
use loophole::medium::exchange_cycle_us;
use loophole::sensing::{sliding_estimate, BreathEstimate, PipelineConfig};
use loophole::sim::{simulate, SimReport};
use loophole::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopholeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    NotFound = 5,
    Signal = 6,
    Panic = 7,
}

impl From<&Error> for LoopholeStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => LoopholeStatus::Io,
            Error::TraceParse { .. } | Error::Csv(_) | Error::Json(_) | Error::Scenario { .. } => LoopholeStatus::Parse,
            Error::UnknownName { .. } => LoopholeStatus::NotFound,
            Error::Signal(_) | Error::TraceTooShort { .. } => LoopholeStatus::Signal,
            _ => LoopholeStatus::InvalidArgument,
        }
    }
}

/// One sliding-window breathing estimate. `rate_bpm` is -1 when nothing was detected.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoopholeEstimate {
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub rate_bpm: f64,
    pub weight: f64,
}

/// Opaque CSI trace.
pub struct LoopholeTrace {
    trace: CsiTrace,
}

/// Opaque list of breathing estimates.
pub struct LoopholeEstimates {
    estimates: Vec<BreathEstimate>,
}

/// Opaque simulation report.
pub struct LoopholeSimReport {
    report: SimReport,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(LoopholeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

type FfiResult<T> = std::result::Result<T, Fail>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> LoopholeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LoopholeStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LoopholeStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LoopholeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(LoopholeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn kind_arg(p: *const c_char) -> FfiResult<FrameKind> {
    Ok(str_arg(p, "kind")?.parse()?)
}

unsafe fn band_arg(p: *const c_char) -> FfiResult<PhyTiming> {
    if p.is_null() {
        return Ok(PhyTiming::band_2_4ghz());
    }
    Ok(PhyTiming::preset(str_arg(p, "band")?)?)
}

/// Message for the last failed call on this thread. Empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn loophole_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn loophole_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// On-air size in bytes of a frame kind such as "null", "rts" or "bar".
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_frame_size(kind: *const c_char, out: *mut u32) -> LoopholeStatus {
    guard(|| {
        let k = kind_arg(kind)?;
        *out_arg(out, "out")? = frame_size(k);
        Ok(())
    })
}

/// Airtime in microseconds of one frame. A null `band` means 2.4 GHz.
///
/// # Safety
/// String arguments must be NUL-terminated or null where allowed; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_airtime_us(
    kind: *const c_char,
    bitrate_mbps: f64,
    band: *const c_char,
    out: *mut f64,
) -> LoopholeStatus {
    guard(|| {
        let k = kind_arg(kind)?;
        let phy = band_arg(band)?;
        *out_arg(out, "out")? = airtime_us(k, bitrate_mbps, &phy)?;
        Ok(())
    })
}

/// Duration in microseconds of one saturated query and response exchange.
///
/// # Safety
/// As for [`loophole_airtime_us`].
#[no_mangle]
pub unsafe extern "C" fn loophole_exchange_cycle_us(
    kind: *const c_char,
    bitrate_mbps: f64,
    band: *const c_char,
    out: *mut f64,
) -> LoopholeStatus {
    guard(|| {
        let k = kind_arg(kind)?;
        let phy = band_arg(band)?;
        *out_arg(out, "out")? = exchange_cycle_us(k, bitrate_mbps, &phy)?;
        Ok(())
    })
}

/// Minutes until `fraction` of the named battery is drained by a saturating flood.
///
/// # Safety
/// String arguments must be NUL-terminated; `band` may be null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_drain_minutes(
    kind: *const c_char,
    bitrate_mbps: f64,
    device: *const c_char,
    battery: *const c_char,
    fraction: f64,
    band: *const c_char,
    out: *mut f64,
) -> LoopholeStatus {
    guard(|| {
        let k = kind_arg(kind)?;
        let phy = band_arg(band)?;
        let lib = Library::builtin();
        let dev = lib.device(str_arg(device, "device")?)?;
        let bat = lib.battery(str_arg(battery, "battery")?)?;
        let report = drain_report(&AttackConfig::new(k, bitrate_mbps), dev, bat, fraction, &phy)?;
        *out_arg(out, "out")? = report.minutes;
        Ok(())
    })
}

/// Reads a CSI trace from a CSV file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_trace_read(path: *const c_char, out: *mut *mut LoopholeTrace) -> LoopholeStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let slot = out_arg(out, "out")?;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let trace = read_trace(BufReader::new(file))?;
        *slot = Box::into_raw(Box::new(LoopholeTrace { trace }));
        Ok(())
    })
}

/// Synthesizes a trace from scenario TOML text with a `[breath]` section.
///
/// # Safety
/// `scenario_toml` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_trace_synth(
    scenario_toml: *const c_char,
    seed: u64,
    out: *mut *mut LoopholeTrace,
) -> LoopholeStatus {
    guard(|| {
        let text = str_arg(scenario_toml, "scenario_toml")?;
        let slot = out_arg(out, "out")?;
        let mut sc = Scenario::parse(text, "<scenario>")?;
        sc.seed = seed;
        let trace = synthesize_trace(&sc.breath_scenario()?)?;
        *slot = Box::into_raw(Box::new(LoopholeTrace { trace }));
        Ok(())
    })
}

/// Number of samples in a trace; 0 for null.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn loophole_trace_len(trace: *const LoopholeTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.len())
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn loophole_trace_free(trace: *mut LoopholeTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Runs the sliding-window breathing estimator with default settings.
///
/// # Safety
/// `trace` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_sense(
    trace: *const LoopholeTrace,
    out: *mut *mut LoopholeEstimates,
) -> LoopholeStatus {
    guard(|| {
        let t = ref_arg(trace, "trace")?;
        let slot = out_arg(out, "out")?;
        let estimates = sliding_estimate(&t.trace, &PipelineConfig::default())?;
        *slot = Box::into_raw(Box::new(LoopholeEstimates { estimates }));
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn loophole_estimates_len(est: *const LoopholeEstimates) -> usize {
    est.as_ref().map_or(0, |e| e.estimates.len())
}

/// Copies estimate `index` into `out`.
///
/// # Safety
/// `est` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_estimates_get(
    est: *const LoopholeEstimates,
    index: usize,
    out: *mut LoopholeEstimate,
) -> LoopholeStatus {
    guard(|| {
        let e = ref_arg(est, "estimates")?;
        let slot = out_arg(out, "out")?;
        let item = e.estimates.get(index).ok_or_else(|| {
            Fail(
                LoopholeStatus::InvalidArgument,
                format!("index {index} out of range (len {})", e.estimates.len()),
            )
        })?;
        *slot = LoopholeEstimate {
            window_start_s: item.window_start_s,
            window_end_s: item.window_end_s,
            rate_bpm: item.rate_bpm,
            weight: item.weight,
        };
        Ok(())
    })
}

/// # Safety
/// `est` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn loophole_estimates_free(est: *mut LoopholeEstimates) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Runs a simulation described by scenario TOML text.
///
/// # Safety
/// `scenario_toml` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_simulate(
    scenario_toml: *const c_char,
    out: *mut *mut LoopholeSimReport,
) -> LoopholeStatus {
    guard(|| {
        let text = str_arg(scenario_toml, "scenario_toml")?;
        let slot = out_arg(out, "out")?;
        let sc = Scenario::parse(text, "<scenario>")?;
        let report = simulate(&sc.sim_config(&Library::builtin())?)?;
        *slot = Box::into_raw(Box::new(LoopholeSimReport { report }));
        Ok(())
    })
}

/// Awake share of a station's simulated time. A null `mac` selects the attack target.
///
/// # Safety
/// `report` must be a live handle; `mac` null or NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_sim_awake_fraction(
    report: *const LoopholeSimReport,
    mac: *const c_char,
    out: *mut f64,
) -> LoopholeStatus {
    guard(|| {
        let r = &ref_arg(report, "report")?.report;
        let slot = out_arg(out, "out")?;
        let station = if mac.is_null() {
            r.target()
        } else {
            let m: Mac = str_arg(mac, "mac")?.parse()?;
            r.station(m)
                .ok_or_else(|| Fail(LoopholeStatus::NotFound, format!("no station {m}")))?
        };
        *slot = station.awake_fraction;
        Ok(())
    })
}

/// Share of delivered queries the target answered.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn loophole_sim_response_ratio(
    report: *const LoopholeSimReport,
    out: *mut f64,
) -> LoopholeStatus {
    guard(|| {
        let r = &ref_arg(report, "report")?.report;
        *out_arg(out, "out")? = r.target_stats.response_ratio;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn loophole_sim_free(report: *mut LoopholeSimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
