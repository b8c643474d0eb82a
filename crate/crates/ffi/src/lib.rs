//! C interface to the `cv2x-sim` simulator.
//!
//! Configs and results are opaque handles created and freed by this library.
//! Every fallible call returns a [`Cv2xStatus`]; on failure the message is
//! available from [`cv2x_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cv2x_sim::metrics::{tail_improvement, MetricsStore};
use cv2x_sim::runner::{merge_outputs, run_seeds};
use cv2x_sim::{parse_config_str, Error, SimConfig};

/// A validated simulation configuration.
pub struct Cv2xConfig(SimConfig);

/// Accumulated metrics of one or more runs.
pub struct Cv2xMetrics(MetricsStore);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cv2xStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// The configuration failed to parse or validate.
    InvalidConfig = 3,
    /// Index or argument out of range.
    OutOfRange = 4,
    /// The requested statistic has no samples.
    NoData = 5,
    /// Any other simulator error.
    Failed = 6,
    /// A panic was caught at the boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: Cv2xStatus, message: impl Into<String>) -> Cv2xStatus {
    set_error(message);
    status
}

fn from_error(e: Error) -> Cv2xStatus {
    let status = match e {
        Error::Config { .. } | Error::ConfigSyntax(_) => Cv2xStatus::InvalidConfig,
        Error::EmptySamples | Error::ZeroBaseline => Cv2xStatus::NoData,
        _ => Cv2xStatus::Failed,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning a panic into [`Cv2xStatus::Panic`].
fn guard(f: impl FnOnce() -> Cv2xStatus) -> Cv2xStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(Cv2xStatus::Panic, msg)
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T) -> Cv2xStatus {
    if out.is_null() {
        return fail(Cv2xStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    Cv2xStatus::Ok
}

unsafe fn metrics<'a>(m: *const Cv2xMetrics) -> Result<&'a MetricsStore, Cv2xStatus> {
    m.as_ref()
        .map(|m| &m.0)
        .ok_or_else(|| fail(Cv2xStatus::NullPointer, "metrics handle is null"))
}

fn check_bin(store: &MetricsStore, bin: usize) -> Result<(), Cv2xStatus> {
    if bin < store.bins.len() {
        Ok(())
    } else {
        Err(fail(
            Cv2xStatus::OutOfRange,
            format!("bin {bin} out of range ({} bins)", store.bins.len()),
        ))
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cv2x_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cv2x_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Reference highway scenario with all defaults.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_config_default(out: *mut *mut Cv2xConfig) -> Cv2xStatus {
    guard(|| {
        if out.is_null() {
            return fail(Cv2xStatus::NullPointer, "output pointer is null");
        }
        write(out, Box::into_raw(Box::new(Cv2xConfig(SimConfig::default()))))
    })
}

/// Parses and validates a TOML config document.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_config_from_toml(toml: *const c_char, out: *mut *mut Cv2xConfig) -> Cv2xStatus {
    guard(|| {
        if toml.is_null() || out.is_null() {
            return fail(Cv2xStatus::NullPointer, "config text or output pointer is null");
        }
        let Ok(text) = CStr::from_ptr(toml).to_str() else {
            return fail(Cv2xStatus::InvalidUtf8, "config text is not UTF-8");
        };
        match parse_config_str(text) {
            Ok(c) => write(out, Box::into_raw(Box::new(Cv2xConfig(c)))),
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn cv2x_config_free(config: *mut Cv2xConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the scenario once per seed and merges the results.
///
/// # Safety
/// `seeds` must point to `n_seeds` values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_run(
    config: *const Cv2xConfig,
    seeds: *const u64,
    n_seeds: usize,
    out: *mut *mut Cv2xMetrics,
) -> Cv2xStatus {
    guard(|| {
        let Some(config) = config.as_ref() else {
            return fail(Cv2xStatus::NullPointer, "config handle is null");
        };
        if out.is_null() {
            return fail(Cv2xStatus::NullPointer, "output pointer is null");
        }
        if seeds.is_null() || n_seeds == 0 {
            return fail(Cv2xStatus::OutOfRange, "at least one seed is required");
        }
        let seeds = std::slice::from_raw_parts(seeds, n_seeds);
        match run_seeds(&config.0, seeds).and_then(|o| merge_outputs(&o)) {
            Ok(store) => write(out, Box::into_raw(Box::new(Cv2xMetrics(store)))),
            Err(e) => from_error(e),
        }
    })
}

/// Adds the samples of `other` to `into`. Both must use the same distance bins.
///
/// # Safety
/// Both handles must come from this library.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_merge(into: *mut Cv2xMetrics, other: *const Cv2xMetrics) -> Cv2xStatus {
    guard(|| {
        let (Some(into), Some(other)) = (into.as_mut(), other.as_ref()) else {
            return fail(Cv2xStatus::NullPointer, "metrics handle is null");
        };
        match into.0.merge(&other.0) {
            Ok(()) => Cv2xStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `metrics` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_free(metrics: *mut Cv2xMetrics) {
    if !metrics.is_null() {
        drop(Box::from_raw(metrics));
    }
}

/// Number of IPG/IA distance bins.
///
/// # Safety
/// `m` must be a valid handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_bin_count(m: *const Cv2xMetrics, out: *mut usize) -> Cv2xStatus {
    guard(|| match metrics(m) {
        Ok(s) => write(out, s.bins.len()),
        Err(status) => status,
    })
}

/// Centre of distance bin `bin`, metres.
///
/// # Safety
/// `m` must be a valid handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_bin_center(m: *const Cv2xMetrics, bin: usize, out: *mut f64) -> Cv2xStatus {
    guard(|| {
        let s = match metrics(m) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = check_bin(s, bin) {
            return status;
        }
        write(out, s.bins[bin].center_m)
    })
}

/// Packet reception ratio in the 1 m bin containing `distance_m`.
///
/// # Safety
/// `m` must be a valid handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_prr(m: *const Cv2xMetrics, distance_m: f64, out: *mut f64) -> Cv2xStatus {
    guard(|| {
        let s = match metrics(m) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if !(distance_m >= 0.0 && distance_m.is_finite()) {
            return fail(Cv2xStatus::OutOfRange, format!("bad distance {distance_m}"));
        }
        match s.prr(distance_m) {
            Some(p) => write(out, p),
            None => fail(Cv2xStatus::NoData, format!("nothing transmitted at {distance_m} m")),
        }
    })
}

/// Which gap statistic to read.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cv2xMetric {
    InterPacketGap = 0,
    InformationAge = 1,
}

fn histogram(s: &MetricsStore, metric: Cv2xMetric, bin: usize) -> &cv2x_sim::metrics::IntHistogram {
    match metric {
        Cv2xMetric::InterPacketGap => &s.ipg[bin],
        Cv2xMetric::InformationAge => &s.ia[bin],
    }
}

/// 99.9th percentile (nearest rank) of a gap statistic in bin `bin`, ms.
///
/// # Safety
/// `m` must be a valid handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_p999(
    m: *const Cv2xMetrics,
    metric: Cv2xMetric,
    bin: usize,
    out: *mut u64,
) -> Cv2xStatus {
    guard(|| {
        let s = match metrics(m) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = check_bin(s, bin) {
            return status;
        }
        match histogram(s, metric, bin).percentile_999() {
            Ok(v) => write(out, v),
            Err(e) => from_error(e),
        }
    })
}

/// Fraction of samples in bin `bin` exceeding `i_ms`.
///
/// # Safety
/// `m` must be a valid handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_ccdf(
    m: *const Cv2xMetrics,
    metric: Cv2xMetric,
    bin: usize,
    i_ms: u64,
    out: *mut f64,
) -> Cv2xStatus {
    guard(|| {
        let s = match metrics(m) {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = check_bin(s, bin) {
            return status;
        }
        match histogram(s, metric, bin).ccdf() {
            Ok(f) => write(out, f.at(i_ms)),
            Err(e) => from_error(e),
        }
    })
}

/// Time-averaged channel busy ratio of the reporting vehicles.
///
/// # Safety
/// `m` must be a valid handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_mean_cbr(m: *const Cv2xMetrics, out: *mut f64) -> Cv2xStatus {
    guard(|| match metrics(m) {
        Ok(s) => match s.mean_cbr() {
            Some(v) => write(out, v),
            None => fail(Cv2xStatus::NoData, "no CBR samples"),
        },
        Err(status) => status,
    })
}

/// Mean BSM generation interval in the statistics region, ms.
///
/// # Safety
/// `m` must be a valid handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_metrics_mean_interval(m: *const Cv2xMetrics, out: *mut f64) -> Cv2xStatus {
    guard(|| match metrics(m) {
        Ok(s) => match s.interval.mean() {
            Some(v) => write(out, v),
            None => fail(Cv2xStatus::NoData, "no generation samples"),
        },
        Err(status) => status,
    })
}

/// Mean relative CCDF reduction of `variant` against `base` over
/// `[from_ms, to_ms]` in bin `bin`.
///
/// # Safety
/// Both handles must be valid; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cv2x_tail_improvement(
    base: *const Cv2xMetrics,
    variant: *const Cv2xMetrics,
    metric: Cv2xMetric,
    bin: usize,
    from_ms: u64,
    to_ms: u64,
    out: *mut f64,
) -> Cv2xStatus {
    guard(|| {
        let (b, v) = match (metrics(base), metrics(variant)) {
            (Ok(b), Ok(v)) => (b, v),
            (Err(status), _) | (_, Err(status)) => return status,
        };
        if b.bins != v.bins {
            return fail(Cv2xStatus::OutOfRange, "stores use different bins");
        }
        if let Err(status) = check_bin(b, bin) {
            return status;
        }
        if from_ms > to_ms {
            return fail(Cv2xStatus::OutOfRange, "from_ms exceeds to_ms");
        }
        let curves = histogram(b, metric, bin)
            .ccdf()
            .and_then(|fb| histogram(v, metric, bin).ccdf().map(|fv| (fb, fv)));
        match curves.and_then(|(fb, fv)| tail_improvement(&fb, &fv, from_ms, to_ms)) {
            Ok(t) => write(out, t.mean),
            Err(e) => from_error(e),
        }
    })
}
