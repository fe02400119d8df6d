//! C ABI over the `qclock` simulator.
//!
//! Every function returns a [`QclockStatus`]. On failure a message is stored
//! per thread and can be read with [`qclock_last_error`]. Ensembles and sync
//! runs are opaque handles owned by the caller and released with their
//! `_free` functions. Strings returned by the library are released with
//! [`qclock_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use qclock::atom::{clock_frequency, FieldConfig, TransferMode};
use qclock::estimation::{compare_clocks, fit_fringe, ComparisonPlan, CompareError, FitError, FringeDataset, FringePoint};
use qclock::format::{ensemble_from_text, ensemble_to_text};
use qclock::link::{generate_pairs, ChannelModel, Ensemble, LinkOptions};
use qclock::protocol::{alice_start, SyncRun};
use qclock::quantum::{ramsey_sequence, ClockConfig};
use qclock::rng::{SimRng, StreamSeed};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QclockStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Degenerate = 3,
    FitFailed = 4,
    Simulation = 5,
    Parse = 6,
    Panic = 7,
}

/// Opaque pair ensemble.
pub struct QclockEnsemble(Ensemble);

/// Opaque protocol state after the start measurement.
pub struct QclockSyncRun(SyncRun);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QclockChannel {
    pub eta_a: f64,
    pub eta_b: f64,
    pub p_miss: f64,
    pub p_false: f64,
    /// Herald with the fluorescence check; otherwise every pair is kept.
    pub heralded: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QclockFringeFit {
    pub omega: f64,
    pub omega_error: f64,
    pub gamma: f64,
    pub gamma_error: f64,
    pub chi_square: f64,
    pub iterations: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QclockCompareInput {
    pub nu0: f64,
    pub b_param: f64,
    pub gamma: f64,
    pub alice_detuning: f64,
    pub bob_detuning: f64,
    /// Pair attempts per ensemble, over an ideal link.
    pub atoms: u64,
    pub n_periods: u64,
    pub trials_per_point: u64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct QclockCompareResult {
    pub fractional_offset: f64,
    pub std_error: f64,
    pub omega_a: f64,
    pub omega_a_error: f64,
    pub omega_b: f64,
    pub omega_b_error: f64,
    pub t1: f64,
    pub phase_ambiguous: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(QclockStatus, String);

fn fail<T>(status: QclockStatus, message: impl ToString) -> Result<T, Failure> {
    Err(Failure(status, message.to_string()))
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(body: F) -> QclockStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QclockStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            QclockStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller passes either null or a valid, aligned, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(QclockStatus::NullPointer, format!("{name} is null")))
}

fn input<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: caller passes either null or a valid, aligned pointer.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(QclockStatus::NullPointer, format!("{name} is null")))
}

fn invalid(e: impl ToString) -> Failure {
    Failure(QclockStatus::InvalidArgument, e.to_string())
}

fn fit_status(e: &FitError) -> QclockStatus {
    match e {
        FitError::InvalidPoint { .. } | FitError::Parse { .. } => QclockStatus::InvalidArgument,
        FitError::Degenerate => QclockStatus::Degenerate,
        _ => QclockStatus::FitFailed,
    }
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn qclock_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn qclock_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by CString::into_raw in this crate.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Exact `(P0, P1)` of a single-atom Ramsey sequence.
///
/// # Safety
/// `p0` and `p1` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_ramsey_probabilities(
    nu0: f64,
    detuning: f64,
    b_param: f64,
    gamma: f64,
    duration: f64,
    use_density: bool,
    p0: *mut f64,
    p1: *mut f64,
) -> QclockStatus {
    guard(|| {
        let p0 = out(p0, "p0")?;
        let p1 = out(p1, "p1")?;
        let clock = ClockConfig::new(nu0, detuning, b_param, gamma).map_err(invalid)?;
        let (a, b) = ramsey_sequence(&clock, duration, use_density).map_err(invalid)?;
        *p0 = a;
        *p1 = b;
        Ok(())
    })
}

/// Cesium clock frequency in a static field `b_static` (tesla).
///
/// # Safety
/// `hz` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_clock_frequency(b_static: f64, hz: *mut f64) -> QclockStatus {
    guard(|| {
        let hz = out(hz, "hz")?;
        *hz = clock_frequency(&FieldConfig::cesium(b_static).map_err(invalid)?);
        Ok(())
    })
}

/// Generates `count` pair attempts from stream `(seed, stream)`.
///
/// # Safety
/// `channel` must be null or valid for reads; `ensemble` null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_ensemble_generate(
    count: u64,
    channel: *const QclockChannel,
    seed: u64,
    stream: u64,
    ensemble: *mut *mut QclockEnsemble,
) -> QclockStatus {
    guard(|| {
        let slot = out(ensemble, "ensemble")?;
        let c = input(channel, "channel")?;
        let model = ChannelModel::new(c.eta_a, c.eta_b, c.p_miss, c.p_false).map_err(invalid)?;
        let options = LinkOptions {
            transfer: if c.heralded { TransferMode::Heralded } else { TransferMode::Direct },
            ..LinkOptions::default()
        };
        let e = generate_pairs(count, &model, &options, StreamSeed::new(seed, stream)).map_err(invalid)?;
        *slot = Box::into_raw(Box::new(QclockEnsemble(e)));
        Ok(())
    })
}

/// Parses an ensemble from its text form.
///
/// # Safety
/// `text` must be null or a NUL-terminated string; `ensemble` null or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_ensemble_from_text(text: *const c_char, ensemble: *mut *mut QclockEnsemble) -> QclockStatus {
    guard(|| {
        let slot = out(ensemble, "ensemble")?;
        if text.is_null() {
            return fail(QclockStatus::NullPointer, "text is null");
        }
        // SAFETY: checked non-null; caller guarantees NUL termination.
        let text = unsafe { CStr::from_ptr(text) }.to_str().map_err(invalid)?;
        let e = ensemble_from_text(text).map_err(|e| Failure(QclockStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(QclockEnsemble(e)));
        Ok(())
    })
}

/// Text form of an ensemble; free the result with [`qclock_string_free`].
///
/// # Safety
/// `ensemble` must be null or a live handle; `text` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_ensemble_to_text(ensemble: *const QclockEnsemble, text: *mut *mut c_char) -> QclockStatus {
    guard(|| {
        let slot = out(text, "text")?;
        let e = input(ensemble, "ensemble")?;
        *slot = CString::new(ensemble_to_text(&e.0)).map_err(invalid)?.into_raw();
        Ok(())
    })
}

/// Number of records and number of kept records.
///
/// # Safety
/// `ensemble` must be null or a live handle; outputs null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_ensemble_counts(ensemble: *const QclockEnsemble, len: *mut u64, kept: *mut u64) -> QclockStatus {
    guard(|| {
        let e = input(ensemble, "ensemble")?;
        *out(len, "len")? = e.0.len() as u64;
        *out(kept, "kept")? = e.0.kept_count() as u64;
        Ok(())
    })
}

/// Releases an ensemble. Null is ignored.
///
/// # Safety
/// `ensemble` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn qclock_ensemble_free(ensemble: *mut QclockEnsemble) {
    if !ensemble.is_null() {
        // SAFETY: produced by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(ensemble) });
    }
}

/// Alice's start measurement at `t0`. Takes ownership of `ensemble`, which
/// is released whether or not the call succeeds.
///
/// # Safety
/// `ensemble` must be null or a live handle not used afterwards; `run` null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_sync_start(
    ensemble: *mut QclockEnsemble,
    t0: f64,
    seed: u64,
    run: *mut *mut QclockSyncRun,
) -> QclockStatus {
    let owned = if ensemble.is_null() {
        None
    } else {
        // SAFETY: produced by Box::into_raw in this crate; ownership moves here.
        Some(unsafe { Box::from_raw(ensemble) })
    };
    guard(move || {
        let Some(owned) = owned else {
            return fail(QclockStatus::NullPointer, "ensemble is null");
        };
        let slot = out(run, "run")?;
        let started = alice_start(owned.0, t0, &mut SimRng::substream(seed, "start")).map_err(invalid)?;
        *slot = Box::into_raw(Box::new(QclockSyncRun(started)));
        Ok(())
    })
}

/// Sizes of the type-I and type-II subensembles.
///
/// # Safety
/// `run` must be null or a live handle; outputs null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_sync_type_counts(run: *const QclockSyncRun, type_i: *mut u64, type_ii: *mut u64) -> QclockStatus {
    guard(|| {
        let r = input(run, "run")?;
        *out(type_i, "type_i")? = r.0.type_i_labels().len() as u64;
        *out(type_ii, "type_ii")? = r.0.type_ii_labels().len() as u64;
        Ok(())
    })
}

/// Releases a sync run. Null is ignored.
///
/// # Safety
/// `run` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn qclock_sync_run_free(run: *mut QclockSyncRun) {
    if !run.is_null() {
        // SAFETY: produced by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Fits `(1 − e^(−γt)·cos Ωt)/2` to `len` fringe points. `clock_hint` is
/// the nominal Ω, or 0 for none.
///
/// # Safety
/// The three arrays must hold `len` readable elements; `fit` null or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_fit_fringe(
    times: *const f64,
    successes: *const f64,
    trials: *const u64,
    len: usize,
    clock_hint: f64,
    fit: *mut QclockFringeFit,
) -> QclockStatus {
    guard(|| {
        let slot = out(fit, "fit")?;
        if times.is_null() || successes.is_null() || trials.is_null() {
            return fail(QclockStatus::NullPointer, "fringe arrays must not be null");
        }
        // SAFETY: checked non-null; caller guarantees `len` elements each.
        let (t, s, n) = unsafe {
            (
                std::slice::from_raw_parts(times, len),
                std::slice::from_raw_parts(successes, len),
                std::slice::from_raw_parts(trials, len),
            )
        };
        let points = (0..len).map(|i| FringePoint { time: t[i], successes: s[i], trials: n[i] }).collect();
        let hint = (clock_hint != 0.0).then_some(clock_hint);
        let data = FringeDataset::new(points, hint).map_err(|e| Failure(fit_status(&e), e.to_string()))?;
        let f = fit_fringe(&data).map_err(|e| Failure(fit_status(&e), e.to_string()))?;
        *slot = QclockFringeFit {
            omega: f.omega.value,
            omega_error: f.omega.std_error,
            gamma: f.gamma.value,
            gamma_error: f.gamma.std_error,
            chi_square: f.chi_square,
            iterations: f.iterations as u32,
        };
        Ok(())
    })
}

/// Two-ensemble frequency comparison of Bob's clock against Alice's.
///
/// # Safety
/// `params` must be null or valid for reads; `result` null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn qclock_compare(params: *const QclockCompareInput, result: *mut QclockCompareResult) -> QclockStatus {
    guard(|| {
        let slot = out(result, "result")?;
        let c = input(params, "params")?;
        let alice = ClockConfig::new(c.nu0, c.alice_detuning, c.b_param, c.gamma).map_err(invalid)?;
        let bob = ClockConfig::new(c.nu0, c.bob_detuning, c.b_param, c.gamma).map_err(invalid)?;
        let ensemble = |name| {
            generate_pairs(c.atoms, &ChannelModel::ideal(), &LinkOptions::default(), StreamSeed::derive(c.seed, name, 0))
                .map_err(invalid)
        };
        let plan = ComparisonPlan {
            n_periods: c.n_periods,
            trials_per_point: c.trials_per_point,
            ..ComparisonPlan::default()
        };
        let mut rng = SimRng::substream(c.seed, "compare");
        let r = compare_clocks(ensemble("first")?, ensemble("second")?, &alice, &bob, &plan, &mut rng).map_err(|e| {
            let status = match &e {
                CompareError::EmptySubensemble(_) => QclockStatus::Degenerate,
                CompareError::Fit { source, .. } => fit_status(source),
                CompareError::Plan(_) => QclockStatus::InvalidArgument,
                _ => QclockStatus::Simulation,
            };
            Failure(status, e.to_string())
        })?;
        *slot = QclockCompareResult {
            fractional_offset: r.fractional_offset.value,
            std_error: r.fractional_offset.std_error,
            omega_a: r.omega_a.value,
            omega_a_error: r.omega_a.std_error,
            omega_b: r.omega_b.value,
            omega_b_error: r.omega_b.std_error,
            t1: r.t1,
            phase_ambiguous: r.phase_ambiguous,
        };
        Ok(())
    })
}
