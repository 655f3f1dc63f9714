//! C ABI for the `cvar-games` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` or
//! `*_from_*` functions and released by the matching `*_free`. Every function
//! returns a [`CvgStatus`]; on failure a message is available from
//! [`cvg_last_error_message`] on the same thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cvar_games::distribution::{cvar, CostSupport, DiscreteDistribution, RiskLevel};
use cvar_games::evaluation::dkw_radius;
use cvar_games::experiment::{self, ExperimentConfig, ExperimentError, RunOptions};
use cvar_games::learner::SamplingSchedule;
use cvar_games::scenarios::{cournot_equilibrium, cournot_true_cvar};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ValidationFailed = 3,
    ContractViolation = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: CvgStatus, msg: impl Into<String>) -> CvgStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CvgStatus) -> CvgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CvgStatus::Panic, "internal panic"),
    }
}

fn experiment_status(e: &ExperimentError) -> CvgStatus {
    match e.exit_code() {
        2 => CvgStatus::ValidationFailed,
        3 => CvgStatus::ContractViolation,
        _ => match e {
            ExperimentError::Io { .. } => CvgStatus::Io,
            _ => CvgStatus::InvalidArgument,
        },
    }
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, CvgStatus> {
    if p.is_null() {
        return Err(fail(CvgStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CvgStatus::InvalidArgument, "string is not valid UTF-8"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cvg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cvg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// `n_t = ceil(b U^2 (T - t + 1)^a)` for `1 <= t <= T`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `usize`.
#[no_mangle]
pub unsafe extern "C" fn cvg_sample_count(a: f64, b: f64, bound_u: f64, horizon: usize, t: usize, out: *mut usize) -> CvgStatus {
    guard(|| {
        if out.is_null() {
            return fail(CvgStatus::NullPointer, "null output pointer");
        }
        match SamplingSchedule::new(a, b, bound_u, horizon).and_then(|s| s.sample_count(t)) {
            Ok(n) => {
                *out = n;
                CvgStatus::Ok
            }
            Err(e) => fail(CvgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// DKW radius of episode `t` for confidence `gamma`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn cvg_dkw_radius(
    a: f64,
    b: f64,
    bound_u: f64,
    horizon: usize,
    t: usize,
    gamma: f64,
    out: *mut f64,
) -> CvgStatus {
    guard(|| {
        if out.is_null() {
            return fail(CvgStatus::NullPointer, "null output pointer");
        }
        let schedule = match SamplingSchedule::new(a, b, bound_u, horizon) {
            Ok(s) => s,
            Err(e) => return fail(CvgStatus::InvalidArgument, e.to_string()),
        };
        match dkw_radius(t, &schedule, gamma) {
            Ok(r) => {
                *out = r;
                CvgStatus::Ok
            }
            Err(e) => fail(CvgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Closed-form CVaR of both Cournot agents at `(x1, x2)`.
///
/// # Safety
/// `out` must be null or point to writable memory for two `double`s.
#[no_mangle]
pub unsafe extern "C" fn cvg_cournot_true_cvar(x1: f64, x2: f64, alpha1: f64, alpha2: f64, out: *mut f64) -> CvgStatus {
    guard(|| {
        if out.is_null() {
            return fail(CvgStatus::NullPointer, "null output pointer");
        }
        let (Ok(a1), Ok(a2)) = (RiskLevel::new(alpha1), RiskLevel::new(alpha2)) else {
            return fail(CvgStatus::InvalidArgument, "risk levels must lie in (0, 1]");
        };
        if ![x1, x2].iter().all(|x| (0.0..=1.0).contains(x)) {
            return fail(CvgStatus::InvalidArgument, "actions must lie in [0, 1]");
        }
        let c = cournot_true_cvar([x1, x2], [a1, a2]);
        *out = c[0];
        *out.add(1) = c[1];
        CvgStatus::Ok
    })
}

/// Symmetric Cournot equilibrium action for risk level `alpha`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn cvg_cournot_equilibrium(alpha: f64, out: *mut f64) -> CvgStatus {
    guard(|| {
        if out.is_null() {
            return fail(CvgStatus::NullPointer, "null output pointer");
        }
        match RiskLevel::new(alpha) {
            Ok(a) => {
                *out = cournot_equilibrium(a);
                CvgStatus::Ok
            }
            Err(e) => fail(CvgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Opaque cost histogram.
pub struct CvgDistribution {
    inner: DiscreteDistribution,
}

/// Builds a histogram of `len` samples on `bins` equal bins over `[lo, hi]`.
///
/// # Safety
/// `samples` must point to `len` readable `double`s; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_distribution_from_samples(
    samples: *const f64,
    len: usize,
    lo: f64,
    hi: f64,
    bins: usize,
    out: *mut *mut CvgDistribution,
) -> CvgStatus {
    guard(|| {
        if samples.is_null() || out.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        let values = std::slice::from_raw_parts(samples, len);
        let result = CostSupport::new(lo, hi, bins).and_then(|s| DiscreteDistribution::from_samples(values, s));
        match result {
            Ok((d, _)) => {
                *out = Box::into_raw(Box::new(CvgDistribution { inner: d }));
                CvgStatus::Ok
            }
            Err(e) => fail(CvgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// `beta * prev + (1 - beta) * current` as a new handle.
///
/// # Safety
/// `prev` and `current` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_distribution_mix(
    prev: *const CvgDistribution,
    current: *const CvgDistribution,
    beta: f64,
    out: *mut *mut CvgDistribution,
) -> CvgStatus {
    guard(|| {
        if prev.is_null() || current.is_null() || out.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        match (*prev).inner.mix(&(*current).inner, beta) {
            Ok(d) => {
                *out = Box::into_raw(Box::new(CvgDistribution { inner: d }));
                CvgStatus::Ok
            }
            Err(e) => fail(CvgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// CVaR of the histogram at risk level `alpha`.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_distribution_cvar(dist: *const CvgDistribution, alpha: f64, out: *mut f64) -> CvgStatus {
    guard(|| {
        if dist.is_null() || out.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        match RiskLevel::new(alpha) {
            Ok(a) => {
                *out = cvar(&(*dist).inner, a);
                CvgStatus::Ok
            }
            Err(e) => fail(CvgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Sup distance between the two histograms' CDFs.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_distribution_kolmogorov(
    f: *const CvgDistribution,
    g: *const CvgDistribution,
    out: *mut f64,
) -> CvgStatus {
    guard(|| {
        if f.is_null() || g.is_null() || out.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        match (*f).inner.kolmogorov_distance(&(*g).inner) {
            Ok(k) => {
                *out = k;
                CvgStatus::Ok
            }
            Err(e) => fail(CvgStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `dist` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cvg_distribution_free(dist: *mut CvgDistribution) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Opaque, validated experiment configuration.
pub struct CvgConfig {
    inner: ExperimentConfig,
}

/// Parses and validates a JSON config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_config_from_json(json: *const c_char, out: *mut *mut CvgConfig) -> CvgStatus {
    guard(|| {
        if out.is_null() {
            return fail(CvgStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg = match ExperimentConfig::from_json(text) {
            Ok(c) => c,
            Err(r) => return fail(CvgStatus::ValidationFailed, r.to_string()),
        };
        if let Err(r) = cfg.resolve() {
            return fail(CvgStatus::ValidationFailed, r.to_string());
        }
        *out = Box::into_raw(Box::new(CvgConfig { inner: cfg }));
        CvgStatus::Ok
    })
}

/// The default Cournot experiment.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_config_cournot_default(out: *mut *mut CvgConfig) -> CvgStatus {
    guard(|| {
        if out.is_null() {
            return fail(CvgStatus::NullPointer, "null output pointer");
        }
        *out = Box::into_raw(Box::new(CvgConfig {
            inner: ExperimentConfig::cournot_default(),
        }));
        CvgStatus::Ok
    })
}

/// Overrides the trial count and master seed.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cvg_config_set_trials(config: *mut CvgConfig, trials: usize, seed: u64) -> CvgStatus {
    guard(|| {
        if config.is_null() {
            return fail(CvgStatus::NullPointer, "null config");
        }
        let mut cfg = (*config).inner.clone();
        cfg.trials = trials;
        cfg.seed = seed;
        if let Err(r) = cfg.resolve() {
            return fail(CvgStatus::ValidationFailed, r.to_string());
        }
        (*config).inner = cfg;
        CvgStatus::Ok
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cvg_config_free(config: *mut CvgConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Opaque result of a finished run.
pub struct CvgResult {
    outcome: experiment::RunOutcome,
}

fn run_with(
    config: *const CvgConfig,
    out_dir: *const c_char,
    jobs: usize,
    out: *mut *mut CvgResult,
    f: impl FnOnce(&ExperimentConfig, &Path, RunOptions) -> Result<experiment::RunOutcome, ExperimentError>,
) -> CvgStatus {
    guard(|| unsafe {
        if config.is_null() || out.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        let dir = match read_str(out_dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let opts = if jobs == 0 { RunOptions::default() } else { RunOptions { jobs } };
        match f(&(*config).inner, Path::new(dir), opts) {
            Ok(outcome) => {
                *out = Box::into_raw(Box::new(CvgResult { outcome }));
                CvgStatus::Ok
            }
            Err(e) => fail(experiment_status(&e), e.to_string()),
        }
    })
}

/// Runs the config and writes its files into `out_dir`. `jobs == 0` uses
/// every available core.
///
/// # Safety
/// `config` must be live, `out_dir` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_run(
    config: *const CvgConfig,
    out_dir: *const c_char,
    jobs: usize,
    out: *mut *mut CvgResult,
) -> CvgStatus {
    run_with(config, out_dir, jobs, out, experiment::run)
}

/// Like [`cvg_run`] but requires at least two variants and writes `comparison.csv`.
///
/// # Safety
/// As [`cvg_run`].
#[no_mangle]
pub unsafe extern "C" fn cvg_compare(
    config: *const CvgConfig,
    out_dir: *const c_char,
    jobs: usize,
    out: *mut *mut CvgResult,
) -> CvgStatus {
    run_with(config, out_dir, jobs, out, experiment::compare)
}

/// Number of variants in a result.
///
/// # Safety
/// `result` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_result_variant_count(result: *const CvgResult, out: *mut usize) -> CvgStatus {
    guard(|| {
        if result.is_null() || out.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        *out = (*result).outcome.traces.len();
        CvgStatus::Ok
    })
}

/// Trial-mean, agent-averaged true CVaR at the mean action in every episode
/// of variant `variant`. Writes `episodes` values into `buf` when `cap` is
/// large enough; always stores the episode count in `episodes`.
///
/// # Safety
/// `result` must be live; `buf` must hold `cap` doubles; `episodes` writable.
#[no_mangle]
pub unsafe extern "C" fn cvg_result_mean_cvar(
    result: *const CvgResult,
    variant: usize,
    buf: *mut f64,
    cap: usize,
    episodes: *mut usize,
) -> CvgStatus {
    guard(|| {
        if result.is_null() || episodes.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        let outcome = &(*result).outcome;
        let Some(group) = outcome.traces.get(variant) else {
            return fail(CvgStatus::InvalidArgument, format!("variant index {variant} out of range"));
        };
        let label = &group[0].variant;
        let Some(series) = outcome
            .aggregates
            .iter()
            .find(|a| &a.variant == label && a.metric == cvar_games::evaluation::Metric::MeanCvarAtMean.name())
        else {
            return fail(CvgStatus::InvalidArgument, "missing aggregate series");
        };
        *episodes = series.mean.len();
        if cap < series.mean.len() || buf.is_null() {
            return fail(CvgStatus::BufferTooSmall, format!("need room for {} values", series.mean.len()));
        }
        std::slice::from_raw_parts_mut(buf, series.mean.len()).copy_from_slice(&series.mean);
        CvgStatus::Ok
    })
}

/// Lowercase hex config hash of the run, copied with a trailing NUL into `buf`.
///
/// # Safety
/// `result` must be live; `buf` must hold `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn cvg_result_config_hash(result: *const CvgResult, buf: *mut c_char, cap: usize) -> CvgStatus {
    guard(|| {
        if result.is_null() || buf.is_null() {
            return fail(CvgStatus::NullPointer, "null pointer argument");
        }
        let hash = (*result).outcome.manifest.config_hash.as_bytes();
        if cap < hash.len() + 1 {
            return fail(CvgStatus::BufferTooSmall, format!("need {} bytes", hash.len() + 1));
        }
        ptr::copy_nonoverlapping(hash.as_ptr(), buf.cast::<u8>(), hash.len());
        *buf.add(hash.len()) = 0;
        CvgStatus::Ok
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cvg_result_free(result: *mut CvgResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
