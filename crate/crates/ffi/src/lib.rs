//! C ABI over `swidopt`.
//!
//! Every fallible call returns a [`SwidStatus`]; on anything but `SWID_OK` a
//! human-readable message is available from [`swid_last_error_message`] on
//! the same thread. Results go through caller-provided out-pointers.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use swidopt::metrics::jain_index;
use swidopt::numerics::exp_integral_e1;
use swidopt::optimize::{optimize, pf_threshold};
use swidopt::seld::seld_iid_sum_capacity;
use swidopt::sim::{simulate, SimConfig};
use swidopt::{expected_rates, ChannelModel, Error, Objective, Scenario, ThresholdVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwidStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Quadrature or root finding failed.
    Numerical = 3,
    /// Output buffer length does not match the scenario.
    LengthMismatch = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwidObjective {
    /// Uses the weights the scenario was built with.
    WeightedSum = 0,
    ProportionalFair = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SwidSimSummary {
    pub flags_per_unit: f64,
    pub idle_fraction: f64,
    /// NaN when every unit was idle.
    pub mean_flag_position: f64,
    pub sum_rate: f64,
    /// Users flagged by the threshold monitor.
    pub flagged_users: usize,
}

/// Opaque scenario: users in feedback order plus their weights.
pub struct SwidScenario {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(SwidStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            _ if e.is_numerical() => SwidStatus::Numerical,
            Error::LengthMismatch { .. } => SwidStatus::LengthMismatch,
            _ => SwidStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SwidStatus::NullPointer, format!("{what} is null"))
}

fn guard<F>(f: F) -> SwidStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwidStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            SwidStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, want: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len != want {
        return Err(Fail(
            SwidStatus::LengthMismatch,
            format!("{what}: buffer holds {len}, need {want}"),
        ));
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn scenario_ref<'a>(s: *const SwidScenario) -> Result<&'a Scenario, Fail> {
    s.as_ref().map(|s| &s.inner).ok_or_else(|| null("scenario"))
}

/// Message for the last failed call on this thread, or null if it succeeded.
/// The pointer stays valid until the next `swid_*` call on the same thread.
#[no_mangle]
pub extern "C" fn swid_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a Rayleigh scenario. `mean_snrs` are linear and in feedback order;
/// user ids are `1..=len`. `weights` may be null for unit weights.
///
/// # Safety
/// `mean_snrs` must point to `len` doubles, `weights` to `len` doubles or be
/// null, and `out` must be writable. Release the handle with
/// [`swid_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn swid_scenario_new(
    mean_snrs: *const f64,
    weights: *const f64,
    len: usize,
    seed: u64,
    out: *mut *mut SwidScenario,
) -> SwidStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let snrs = slice_in(mean_snrs, len, "mean_snrs")?;
        let channels = snrs
            .iter()
            .map(|&g| ChannelModel::rayleigh(g))
            .collect::<Result<Vec<_>, _>>()?;
        let mut scenario = Scenario::from_channels(&channels, seed)?;
        if !weights.is_null() {
            scenario = scenario.with_weights(slice_in(weights, len, "weights")?.to_vec())?;
        }
        out.write(Box::into_raw(Box::new(SwidScenario { inner: scenario })));
        Ok(())
    })
}

/// # Safety
/// `scenario` must come from [`swid_scenario_new`] and not be freed twice.
/// Null is accepted.
#[no_mangle]
pub unsafe extern "C" fn swid_scenario_free(scenario: *mut SwidScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn swid_scenario_len(scenario: *const SwidScenario, out: *mut usize) -> SwidStatus {
    guard(|| write(out, scenario_ref(scenario)?.len(), "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swid_exp_integral_e1(x: f64, out: *mut f64) -> SwidStatus {
    guard(|| write(out, exp_integral_e1(x)?, "out"))
}

/// PF rate threshold (nats) of a Rayleigh user with `users_after` users
/// behind it in the feedback order.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swid_pf_threshold(mean_snr: f64, users_after: usize, out: *mut f64) -> SwidStatus {
    guard(|| {
        let ch = ChannelModel::rayleigh(mean_snr)?;
        write(out, pf_threshold(&ch, users_after)?, "out")
    })
}

/// Optimal rate thresholds (nats) and the objective value.
/// `objective_value` may be null.
///
/// # Safety
/// `scenario` must be a live handle, `thresholds` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn swid_optimize(
    scenario: *const SwidScenario,
    objective: SwidObjective,
    thresholds: *mut f64,
    len: usize,
    objective_value: *mut f64,
) -> SwidStatus {
    guard(|| {
        let s = scenario_ref(scenario)?;
        let out = slice_out(thresholds, len, s.len(), "thresholds")?;
        let objective = match objective {
            SwidObjective::WeightedSum => Objective::WeightedSum(s.weights().to_vec()),
            SwidObjective::ProportionalFair => Objective::ProportionalFair,
        };
        let result = optimize(s, &objective)?;
        out.copy_from_slice(result.thresholds.rates());
        if !objective_value.is_null() {
            objective_value.write(result.objective_value);
        }
        Ok(())
    })
}

/// Per-user expected rates (nats) and access ratios under the given rate
/// thresholds. `access_ratios` may be null.
///
/// # Safety
/// `thresholds`, `rates` and (when non-null) `access_ratios` must each hold
/// `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn swid_expected_rates(
    scenario: *const SwidScenario,
    thresholds: *const f64,
    len: usize,
    rates: *mut f64,
    access_ratios: *mut f64,
) -> SwidStatus {
    guard(|| {
        let s = scenario_ref(scenario)?;
        let t = ThresholdVector::new(slice_in(thresholds, len, "thresholds")?.to_vec())?;
        let report = expected_rates(s, &t)?;
        slice_out(rates, len, s.len(), "rates")?.copy_from_slice(&report.rates());
        if !access_ratios.is_null() {
            slice_out(access_ratios, len, s.len(), "access_ratios")?.copy_from_slice(&report.access_ratios());
        }
        Ok(())
    })
}

/// Sum capacity (nats) of full-feedback selection over `users` i.i.d.
/// Rayleigh users.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swid_seld_iid_sum_capacity(mean_snr: f64, users: usize, out: *mut f64) -> SwidStatus {
    guard(|| write(out, seld_iid_sum_capacity(mean_snr, users)?, "out"))
}

/// # Safety
/// `values` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swid_jain_index(values: *const f64, len: usize, out: *mut f64) -> SwidStatus {
    guard(|| write(out, jain_index(slice_in(values, len, "values")?)?, "out"))
}

/// Monte Carlo run with every terminal honest. Per-user empirical rates go to
/// `rates` (may be null), aggregates to `summary`.
///
/// # Safety
/// `thresholds` must hold `len` doubles, `rates` `len` doubles or be null,
/// and `summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swid_simulate(
    scenario: *const SwidScenario,
    thresholds: *const f64,
    len: usize,
    resource_units: u64,
    batches: u64,
    seed: u64,
    rates: *mut f64,
    summary: *mut SwidSimSummary,
) -> SwidStatus {
    guard(|| {
        if summary.is_null() {
            return Err(null("summary"));
        }
        let s = scenario_ref(scenario)?;
        let t = ThresholdVector::new(slice_in(thresholds, len, "thresholds")?.to_vec())?;
        let outcome = simulate(s, &t, &SimConfig::new(resource_units, batches, seed))?;
        if !rates.is_null() {
            slice_out(rates, len, s.len(), "rates")?.copy_from_slice(&outcome.report.rates());
        }
        summary.write(SwidSimSummary {
            flags_per_unit: outcome.feedback.flags_per_unit,
            idle_fraction: outcome.feedback.idle_fraction,
            mean_flag_position: outcome.feedback.mean_flag_position.unwrap_or(f64::NAN),
            sum_rate: outcome.report.sum_rate,
            flagged_users: outcome.verdicts().iter().filter(|v| v.flagged).count(),
        });
        Ok(())
    })
}
