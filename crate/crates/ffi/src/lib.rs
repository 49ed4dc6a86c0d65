//! C ABI for the thermofray simulator.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free` function. Every call returns a [`TfStatus`];
//! on failure [`tf_last_error_message`] describes the error for the calling
//! thread. Panics are caught and reported as [`TfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use thermofray::attack::AttackSignal;
use thermofray::harness::{self, RunLog, Scenario};
use thermofray::model::{self, ControlInput, Disturbance, ThermalState, N_INPUTS, N_STATES};
use thermofray::zone::N_ZONES;
use thermofray::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Io = 5,
    Parse = 6,
    /// Non-finite values, divergence or a controller fault.
    Simulation = 7,
    Panic = 8,
}

/// A parsed, validated scenario.
pub struct TfScenario(Scenario);

/// The log of a completed (or aborted) run.
pub struct TfRun(RunLog);

/// A bias trajectory, one value per control interval.
pub struct TfAttack(AttackSignal);

/// Summary metrics of a run. Arrays are indexed center, west, east,
/// south, north.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct TfReport {
    pub mse: [f64; 5],
    pub energy_kwh: [f64; 5],
    pub total_energy_kwh: f64,
    pub lifespan_years: f64,
    pub valve_ops: [u64; 5],
    pub intervals: u64,
    pub fallback_intervals: u64,
    pub horizon_s: f64,
    /// 1 if the run was under attack.
    pub attacked: u8,
}

const _: () = assert!(N_ZONES == 5);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(TfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::LengthMismatch { .. } => TfStatus::Config,
            Error::Io { .. } => TfStatus::Io,
            Error::Parse { .. } => TfStatus::Parse,
            Error::OutOfRange { .. } => TfStatus::InvalidArgument,
            Error::NonFinite(_) | Error::Divergence { .. } | Error::ControllerFault(_) => TfStatus::Simulation,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, records any error message and maps panics to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            TfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TfStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Parses a scenario from TOML text. Relative paths inside it resolve
/// against `base_dir`, or the working directory when `base_dir` is null.
///
/// # Safety
/// `toml` and a non-null `base_dir` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_scenario_from_toml(
    toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut TfScenario,
) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(toml, "toml")?;
        let base = if base_dir.is_null() { "." } else { str_arg(base_dir, "base_dir")? };
        let sc = Scenario::from_toml_str(text, base)?;
        *out = Box::into_raw(Box::new(TfScenario(sc)));
        Ok(())
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_scenario_from_file(path: *const c_char, out: *mut *mut TfScenario) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let sc = Scenario::from_file(Path::new(path))?;
        *out = Box::into_raw(Box::new(TfScenario(sc)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from a `tf_scenario_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn tf_scenario_free(scenario: *mut TfScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario, resolving its attack block if present. A run that
/// aborts mid-way still yields a handle with the partial log, together
/// with `TF_STATUS_SIMULATION`.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_run(scenario: *const TfScenario, out: *mut *mut TfRun) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let sc = &ref_arg(scenario, "scenario")?.0;
        let log = harness::run(sc)?;
        let failure = log.failure.clone();
        *out = Box::into_raw(Box::new(TfRun(log)));
        match failure {
            Some(f) => Err(Failure(TfStatus::Simulation, f)),
            None => Ok(()),
        }
    })
}

/// # Safety
/// `run` must come from [`tf_run`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tf_run_free(run: *mut TfRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of logged control intervals; 0 for a null handle.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tf_run_record_count(run: *const TfRun) -> usize {
    run.as_ref().map_or(0, |r| r.0.records.len())
}

/// Metrics of `run`. With a non-null `baseline` (the unattacked run) the
/// lifespan reflects the energy ratio; otherwise it equals
/// `baseline_years`.
///
/// # Safety
/// `run` must be a live handle, `baseline` a live handle or null, and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tf_run_report(
    run: *const TfRun,
    baseline: *const TfRun,
    baseline_years: f64,
    out: *mut TfReport,
) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let log = &ref_arg(run, "run")?.0;
        let base = baseline.as_ref().map(|b| &b.0);
        let r = log.report(base, baseline_years)?;
        *out = TfReport {
            mse: r.mse,
            energy_kwh: r.energy_kwh,
            total_energy_kwh: r.total_energy_kwh,
            lifespan_years: r.lifespan_years,
            valve_ops: r.valve_ops.map(|v| v as u64),
            intervals: r.intervals as u64,
            fallback_intervals: r.fallback_intervals as u64,
            horizon_s: r.horizon_s,
            attacked: r.attacked as u8,
        };
        Ok(())
    })
}

/// Writes the run log as CSV.
///
/// # Safety
/// `run` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tf_run_write_log_csv(run: *const TfRun, path: *const c_char) -> TfStatus {
    guard(|| {
        let log = &ref_arg(run, "run")?.0;
        let path = str_arg(path, "path")?;
        let f = std::fs::File::create(path).map_err(|e| Failure(TfStatus::Io, format!("{path}: {e}")))?;
        log.write_csv(std::io::BufWriter::new(f))?;
        Ok(())
    })
}

/// Synthesizes the energy-maximizing attack configured in the scenario.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tf_synthesize_attack(scenario: *const TfScenario, out: *mut *mut TfAttack) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let sc = &ref_arg(scenario, "scenario")?.0;
        if sc.attack.is_none() {
            return Err(Failure(TfStatus::Config, "scenario has no attack block".into()));
        }
        let traces = sc.load_traces()?;
        let result = harness::synthesize_attack(sc, &traces)?;
        *out = Box::into_raw(Box::new(TfAttack(result.signal)));
        Ok(())
    })
}

/// Number of attack samples; 0 for a null handle.
///
/// # Safety
/// `attack` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tf_attack_len(attack: *const TfAttack) -> usize {
    attack.as_ref().map_or(0, |a| a.0.values.len())
}

/// Copies the attack samples (K) into `buf`, which must hold at least
/// [`tf_attack_len`] values.
///
/// # Safety
/// `attack` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn tf_attack_values(attack: *const TfAttack, buf: *mut f64, len: usize) -> TfStatus {
    guard(|| {
        let values = &ref_arg(attack, "attack")?.0.values;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if len < values.len() {
            return Err(Failure(
                TfStatus::InvalidArgument,
                format!("buffer holds {len} values, attack has {}", values.len()),
            ));
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// # Safety
/// `attack` must come from [`tf_synthesize_attack`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tf_attack_free(attack: *mut TfAttack) {
    if !attack.is_null() {
        drop(Box::from_raw(attack));
    }
}

/// State derivative (K/s) of the scenario's building.
///
/// `x` holds 14 states, `u` the 7 inputs (supply water, supply air, valves
/// center..north) and `d` the outdoor temperature, solar and internal
/// gains.
///
/// # Safety
/// `scenario` must be a live handle; `x` and `xdot` valid for 14 values,
/// `u` for 7 and `d` for 3.
#[no_mangle]
pub unsafe extern "C" fn tf_dynamics(
    scenario: *const TfScenario,
    x: *const f64,
    u: *const f64,
    d: *const f64,
    xdot: *mut f64,
) -> TfStatus {
    guard(|| {
        let sc = &ref_arg(scenario, "scenario")?.0;
        if x.is_null() || u.is_null() || d.is_null() || xdot.is_null() {
            return Err(null("x, u, d or xdot"));
        }
        let mut xs = [0.0; N_STATES];
        xs.copy_from_slice(std::slice::from_raw_parts(x, N_STATES));
        let mut us = [0.0; N_INPUTS];
        us.copy_from_slice(std::slice::from_raw_parts(u, N_INPUTS));
        let ds = std::slice::from_raw_parts(d, 3);
        let dist = Disturbance {
            outdoor: ds[0],
            solar: ds[1],
            internal: ds[2],
        };
        let dx = model::dynamics(&ThermalState(xs), &ControlInput::from_array(us), &dist, &sc.building)?;
        std::slice::from_raw_parts_mut(xdot, N_STATES).copy_from_slice(&dx);
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
