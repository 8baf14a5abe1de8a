//! C ABI over `mqs-core`.
//!
//! Objects are opaque handles released with the matching `*_free`. Every fallible call
//! returns an [`MqsStatus`]; on failure the message is kept per thread and
//! can be copied out with [`mqs_last_error`]. Output arrays and strings are
//! written into caller buffers; when a buffer is too short the call returns
//! `MQS_STATUS_BUFFER_TOO_SMALL` and stores the required length in `needed`
//! (bytes including the terminating NUL for strings, elements for arrays).
//!
//! Handles must come from this library and be used from one thread at a
//! time; string arguments are NUL-terminated UTF-8; buffers must hold the
//! length passed alongside them. Null handles and null outputs are reported
//! as `MQS_STATUS_NULL_POINTER`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mqs_core::cli::{run, RunSummary};
use mqs_core::coherent::{evolve_with, n0_distribution, CouplingParams, EvolveOptions};
use mqs_core::config::RunConfig;
use mqs_core::fock::{PlusMinusState, SectorSpec};
use mqs_core::interference::{final_number_distribution, fringe_report};
use mqs_core::qmc::{run_detections, TrajectoryRecord};
use mqs_core::{CountHistogram, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    InvalidInput = 10,
    Config = 11,
    Io = 12,
    UndepletedAssumptionViolated = 20,
    Truncation = 21,
    ZeroProbabilityOutcome = 22,
    FormulaScope = 23,
    DarkStateStall = 24,
    DimensionCap = 25,
    StepControlFailure = 26,
    ZeroOverlap = 27,
    KernelUnderresolved = 28,
    GridTooSmall = 29,
    DegenerateRoot = 30,
    SelfCheckFailed = 40,
}

impl From<&Error> for MqsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidInput(_) => MqsStatus::InvalidInput,
            Error::Config(_) => MqsStatus::Config,
            Error::Io(_) => MqsStatus::Io,
            Error::UndepletedAssumptionViolated { .. } => MqsStatus::UndepletedAssumptionViolated,
            Error::Truncation { .. } => MqsStatus::Truncation,
            Error::ZeroProbabilityOutcome { .. } => MqsStatus::ZeroProbabilityOutcome,
            Error::FormulaScope(_) => MqsStatus::FormulaScope,
            Error::DarkStateStall { .. } => MqsStatus::DarkStateStall,
            Error::DimensionCap { .. } => MqsStatus::DimensionCap,
            Error::StepControlFailure { .. } => MqsStatus::StepControlFailure,
            Error::ZeroOverlap { .. } => MqsStatus::ZeroOverlap,
            Error::KernelUnderresolved { .. } => MqsStatus::KernelUnderresolved,
            Error::GridTooSmall { .. } => MqsStatus::GridTooSmall,
            Error::DegenerateRoot { .. } => MqsStatus::DegenerateRoot,
        }
    }
}

/// Parsed run configuration.
pub struct MqsConfig(RunConfig);

/// Outcome of [`mqs_run`].
pub struct MqsRunSummary(RunSummary);

/// Integer-valued probability distribution.
pub struct MqsHistogram(CountHistogram);

/// One continuous-detection trajectory.
pub struct MqsTrajectory(TrajectoryRecord);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: MqsStatus, msg: impl Into<String>) -> MqsStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), MqsStatus>) -> MqsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MqsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(MqsStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: mqs_core::Result<T>) -> Result<T, MqsStatus> {
    r.map_err(|e| fail(MqsStatus::from(&e), format!("{}: {e}", e.kind())))
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, MqsStatus> {
    p.as_ref().ok_or_else(|| fail(MqsStatus::NullPointer, "null handle"))
}

unsafe fn out_ptr<'a, T>(p: *mut T) -> Result<&'a mut T, MqsStatus> {
    p.as_mut().ok_or_else(|| fail(MqsStatus::NullPointer, "null output pointer"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, MqsStatus> {
    if s.is_null() {
        return Err(fail(MqsStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(MqsStatus::InvalidUtf8, "string is not valid UTF-8"))
}

unsafe fn write_str(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), MqsStatus> {
    let total = s.len() + 1;
    if let Some(n) = needed.as_mut() {
        *n = total;
    }
    if buf.is_null() || len < total {
        return Err(fail(MqsStatus::BufferTooSmall, format!("need {total} bytes")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

unsafe fn write_f64s(xs: &[f64], buf: *mut f64, len: usize, needed: *mut usize) -> Result<(), MqsStatus> {
    if let Some(n) = needed.as_mut() {
        *n = xs.len();
    }
    if len < xs.len() || (buf.is_null() && !xs.is_empty()) {
        return Err(fail(MqsStatus::BufferTooSmall, format!("need {} elements", xs.len())));
    }
    if !xs.is_empty() {
        ptr::copy_nonoverlapping(xs.as_ptr(), buf, xs.len());
    }
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mqs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of the calling thread.
#[no_mangle]
pub unsafe extern "C" fn mqs_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> MqsStatus {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let total = msg.len() + 1;
        if let Some(n) = needed.as_mut() {
            *n = total;
        }
        if buf.is_null() || len < total {
            return MqsStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), msg.len());
        *buf.add(msg.len()) = 0;
        MqsStatus::Ok
    })
}

/// Parses a JSON run configuration.
#[no_mangle]
pub unsafe extern "C" fn mqs_config_from_json(json: *const c_char, out: *mut *mut MqsConfig) -> MqsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let cfg = lift(RunConfig::from_json(read_str(json)?))?;
        *out = boxed(MqsConfig(cfg));
        Ok(())
    })
}

/// Serialises the configuration, defaults included.
#[no_mangle]
pub unsafe extern "C" fn mqs_config_to_json(
    config: *const MqsConfig,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> MqsStatus {
    guard(|| write_str(&deref(config)?.0.to_json(), buf, len, needed))
}

#[no_mangle]
pub unsafe extern "C" fn mqs_config_set_seed(config: *mut MqsConfig, seed: u64) -> MqsStatus {
    guard(|| {
        out_ptr(config)?.0.seed = seed;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mqs_config_set_out_dir(config: *mut MqsConfig, dir: *const c_char) -> MqsStatus {
    guard(|| {
        let dir = read_str(dir)?;
        out_ptr(config)?.0.out_dir = dir.into();
        Ok(())
    })
}

/// Checks every precondition; on failure the message lists all problems.
#[no_mangle]
pub unsafe extern "C" fn mqs_config_validate(config: *const MqsConfig) -> MqsStatus {
    guard(|| {
        let report = deref(config)?.0.validate();
        match report.problems.first() {
            None => Ok(()),
            Some(e) => Err(fail(MqsStatus::from(e), report.to_string())),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn mqs_config_free(config: *mut MqsConfig) {
    free(config)
}

/// Runs the configured mode and writes its output files.
#[no_mangle]
pub unsafe extern "C" fn mqs_run(config: *const MqsConfig, out: *mut *mut MqsRunSummary) -> MqsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let summary = lift(run(&deref(config)?.0))?;
        let passed = summary.self_check_passed;
        let line = summary.line.clone();
        *out = boxed(MqsRunSummary(summary));
        if passed {
            Ok(())
        } else {
            Err(fail(MqsStatus::SelfCheckFailed, line))
        }
    })
}

/// One-line summary of the run.
#[no_mangle]
pub unsafe extern "C" fn mqs_run_summary_line(
    summary: *const MqsRunSummary,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> MqsStatus {
    guard(|| write_str(&deref(summary)?.0.line, buf, len, needed))
}

#[no_mangle]
pub unsafe extern "C" fn mqs_run_summary_file_count(summary: *const MqsRunSummary) -> usize {
    summary.as_ref().map_or(0, |s| s.0.files.len())
}

#[no_mangle]
pub unsafe extern "C" fn mqs_run_summary_free(summary: *mut MqsRunSummary) {
    free(summary)
}

/// Outcoupled-atom distribution P(n0) for equal couplings at the given sin²(Vt).
#[no_mangle]
pub unsafe extern "C" fn mqs_coherent_n0_distribution(
    n1: usize,
    n2: usize,
    sin2_vt: f64,
    out: *mut *mut MqsHistogram,
) -> MqsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let sector = lift(SectorSpec::new(n1, n2))?;
        let params = lift(CouplingParams::equal_with_sin2(sin2_vt))?;
        let joint = lift(evolve_with(sector, params, &EvolveOptions::default()))?;
        *out = boxed(MqsHistogram(n0_distribution(&joint)));
        Ok(())
    })
}

/// Distribution of N1 − N2 in the final state of a trajectory.
#[no_mangle]
pub unsafe extern "C" fn mqs_trajectory_difference_distribution(
    trajectory: *const MqsTrajectory,
    out: *mut *mut MqsHistogram,
) -> MqsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let t = deref(trajectory)?;
        *out = boxed(MqsHistogram(final_number_distribution(&t.0.final_state)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mqs_histogram_len(h: *const MqsHistogram) -> usize {
    h.as_ref().map_or(0, |h| h.0.len())
}

/// Value of the first bin.
#[no_mangle]
pub unsafe extern "C" fn mqs_histogram_offset(h: *const MqsHistogram) -> i64 {
    h.as_ref().map_or(0, |h| h.0.offset())
}

#[no_mangle]
pub unsafe extern "C" fn mqs_histogram_probabilities(
    h: *const MqsHistogram,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> MqsStatus {
    guard(|| write_f64s(deref(h)?.0.probabilities(), buf, len, needed))
}

#[no_mangle]
pub unsafe extern "C" fn mqs_histogram_moments(h: *const MqsHistogram, mean: *mut f64, variance: *mut f64) -> MqsStatus {
    guard(|| {
        let h = deref(h)?;
        *out_ptr(mean)? = h.0.mean();
        *out_ptr(variance)? = h.0.variance();
        Ok(())
    })
}

/// Fringe visibility after Gaussian blur of width `sigma`; `spacing` is 0
/// when no regular lattice of peaks is found.
#[no_mangle]
pub unsafe extern "C" fn mqs_histogram_fringes(
    h: *const MqsHistogram,
    sigma: f64,
    visibility: *mut f64,
    spacing: *mut i64,
) -> MqsStatus {
    guard(|| {
        let r = lift(fringe_report(&deref(h)?.0, sigma))?;
        *out_ptr(visibility)? = r.visibility;
        *out_ptr(spacing)? = r.peak_spacing.unwrap_or(0);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mqs_histogram_free(h: *mut MqsHistogram) {
    free(h)
}

/// Detects `nu` atoms one by one from |n1, n2⟩ with jump rate `w`.
/// Returns `MQS_STATUS_DARK_STATE_STALL` when the state goes dark first.
#[no_mangle]
pub unsafe extern "C" fn mqs_trajectory_run(
    n1: usize,
    n2: usize,
    w: f64,
    nu: usize,
    seed: u64,
    index: u64,
    out: *mut *mut MqsTrajectory,
) -> MqsStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let init = PlusMinusState::fock(lift(SectorSpec::new(n1, n2))?);
        let rec = lift(run_detections(&init, w, nu, seed, index))?;
        *out = boxed(MqsTrajectory(rec));
        Ok(())
    })
}

/// Waiting times between successive detections.
#[no_mangle]
pub unsafe extern "C" fn mqs_trajectory_taus(
    t: *const MqsTrajectory,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> MqsStatus {
    guard(|| write_f64s(&deref(t)?.0.taus, buf, len, needed))
}

/// ⟨cos φ⟩ after each detection.
#[no_mangle]
pub unsafe extern "C" fn mqs_trajectory_cosphi_history(
    t: *const MqsTrajectory,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> MqsStatus {
    guard(|| write_f64s(&deref(t)?.0.cosphi_history, buf, len, needed))
}

#[no_mangle]
pub unsafe extern "C" fn mqs_trajectory_final_cosphi(t: *const MqsTrajectory, cosphi: *mut f64) -> MqsStatus {
    guard(|| {
        *out_ptr(cosphi)? = deref(t)?.0.final_cosphi();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mqs_trajectory_free(t: *mut MqsTrajectory) {
    free(t)
}
