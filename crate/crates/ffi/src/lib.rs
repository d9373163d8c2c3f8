//! C interface to `dpimap`.
//!
//! Every fallible function returns a [`DpimapStatus`]; on failure the
//! message is kept per thread and can be read with
//! [`dpimap_last_error_message`]. Objects that cross the boundary by
//! pointer are opaque and owned by the caller until passed to their `_free`
//! function. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dpimap::fusion::{kf_predict, kf_update, unbiased_convert, ConvertedMeasurement, MotionModel, PolarMeasurement, TrackState};
use dpimap::identity::{cosine_similarity, FeatureVector};
use dpimap::matcher::{bim_match_costs, CostMatrix, ExchangeGuard, MatcherParams};
use dpimap::sim::MetricsRecord;
use nalgebra::{Matrix3, Vector3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpimapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Numerical = 3,
    Internal = 4,
    Config = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DpimapStatus, String);

impl From<dpimap::Error> for Failure {
    fn from(e: dpimap::Error) -> Self {
        let status = match e {
            dpimap::Error::InvalidInput(_) => DpimapStatus::InvalidInput,
            dpimap::Error::Numerical(_) => DpimapStatus::Numerical,
            dpimap::Error::Internal(_) => DpimapStatus::Internal,
            dpimap::Error::Config(_) => DpimapStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DpimapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DpimapStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dpimap".into());
            DpimapStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(DpimapStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Reads `len` values; a null pointer is allowed only when `len` is zero.
unsafe fn slice<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dpimap_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Bytes needed to hold the last error message including the terminator;
/// zero when no error has been recorded on this thread.
#[no_mangle]
pub extern "C" fn dpimap_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(0, |c| c.as_bytes_with_nul().len()))
}

/// Copies the last error message of this thread into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn dpimap_last_error_message(buf: *mut c_char, len: usize) -> DpimapStatus {
    if buf.is_null() {
        return DpimapStatus::NullPointer;
    }
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_ref().map_or(&b"\0"[..], |c| c.as_bytes_with_nul());
        if bytes.len() > len {
            return DpimapStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
        DpimapStatus::Ok
    })
}

/// Clamped cosine similarity of two vectors of length `dim` (at least 2).
///
/// # Safety
/// `a` and `b` must be valid for `dim` reads, `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn dpimap_cosine_similarity(a: *const f64, b: *const f64, dim: usize, out: *mut f64) -> DpimapStatus {
    guard(|| {
        non_null(out, "out")?;
        let a = FeatureVector::new(slice(a, dim, "a")?.to_vec())?;
        let b = FeatureVector::new(slice(b, dim, "b")?.to_vec())?;
        *out = cosine_similarity(&a, &b)?;
        Ok(())
    })
}

/// Padded cost matrix between visual rows and auditory columns.
pub struct DpimapCostMatrix(CostMatrix);

unsafe fn new_matrix(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut DpimapCostMatrix,
    build: fn(&[Vec<f64>]) -> dpimap::Result<CostMatrix>,
) -> DpimapStatus {
    guard(|| {
        non_null(out, "out")?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(DpimapStatus::InvalidInput, format!("{rows} x {cols} overflows")))?;
        let flat = slice(values, len, "values")?;
        let nested: Vec<Vec<f64>> = (0..rows).map(|i| flat[i * cols..(i + 1) * cols].to_vec()).collect();
        let m = build(&nested)?;
        *out = Box::into_raw(Box::new(DpimapCostMatrix(m)));
        Ok(())
    })
}

/// Builds a cost matrix from `rows * cols` nonnegative costs.
///
/// # Safety
/// `costs` must be valid for `rows * cols` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn dpimap_cost_matrix_new(
    costs: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut DpimapCostMatrix,
) -> DpimapStatus {
    new_matrix(costs, rows, cols, out, CostMatrix::from_rows)
}

/// Builds a cost matrix from similarities in `[0, 1]` (cost `1 / s`).
///
/// # Safety
/// As [`dpimap_cost_matrix_new`].
#[no_mangle]
pub unsafe extern "C" fn dpimap_cost_matrix_from_similarities(
    similarities: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut DpimapCostMatrix,
) -> DpimapStatus {
    new_matrix(similarities, rows, cols, out, CostMatrix::from_similarities)
}

/// # Safety
/// `m` must come from a constructor above and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dpimap_cost_matrix_free(m: *mut DpimapCostMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Runs the auction and exchange matcher.
///
/// `visual_to_auditory` receives one entry per row: the matched column or
/// -1. `total_cost` may be null.
///
/// # Safety
/// `visual_to_auditory` must be valid for as many writes as the matrix has
/// rows.
#[no_mangle]
pub unsafe extern "C" fn dpimap_match(
    m: *const DpimapCostMatrix,
    alpha: f64,
    epsilon: f64,
    visual_to_auditory: *mut i64,
    total_cost: *mut f64,
) -> DpimapStatus {
    guard(|| {
        non_null(m, "matrix")?;
        let c = &(*m).0;
        if c.real_rows() > 0 {
            non_null(visual_to_auditory, "visual_to_auditory")?;
        }
        let params = MatcherParams {
            alpha,
            epsilon,
            exchange: ExchangeGuard::default(),
        };
        let result = bim_match_costs(c, &params)?.result;
        for i in 0..c.real_rows() {
            *visual_to_auditory.add(i) = -1;
        }
        for p in &result.pairs {
            *visual_to_auditory.add(p.visual) = p.auditory as i64;
        }
        if !total_cost.is_null() {
            *total_cost = result.total_cost();
        }
        Ok(())
    })
}

/// Polar detection (m, rad) with noise standard deviations.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpimapPolar {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub sigma_r: f64,
    pub sigma_theta: f64,
    pub sigma_phi: f64,
}

/// Converted Cartesian measurement; `covariance` is row-major 3x3.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpimapConverted {
    pub position: [f64; 3],
    pub covariance: [f64; 9],
    pub bias: [f64; 3],
}

impl From<&ConvertedMeasurement> for DpimapConverted {
    fn from(z: &ConvertedMeasurement) -> Self {
        let mut covariance = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                covariance[i * 3 + j] = z.covariance[(i, j)];
            }
        }
        DpimapConverted {
            position: z.position.into(),
            covariance,
            bias: z.bias.into(),
        }
    }
}

impl From<&DpimapConverted> for ConvertedMeasurement {
    fn from(z: &DpimapConverted) -> Self {
        ConvertedMeasurement {
            position: Vector3::from(z.position),
            covariance: Matrix3::from_row_slice(&z.covariance),
            bias: Vector3::from(z.bias),
        }
    }
}

/// Debiased polar-to-Cartesian conversion.
///
/// # Safety
/// `m` must be valid for one read and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn dpimap_unbiased_convert(m: *const DpimapPolar, out: *mut DpimapConverted) -> DpimapStatus {
    guard(|| {
        non_null(m, "measurement")?;
        non_null(out, "out")?;
        let m = &*m;
        let polar = PolarMeasurement::new(m.r, m.theta, m.phi, m.sigma_r, m.sigma_theta, m.sigma_phi)?;
        *out = DpimapConverted::from(&unbiased_convert(&polar));
        Ok(())
    })
}

/// Constant-velocity track with its motion model.
pub struct DpimapTrack {
    state: TrackState,
    model: MotionModel,
}

/// Starts a track at a converted measurement with velocity variance
/// `velocity_var` per axis, step `dt` (s) and process noise `q`.
///
/// # Safety
/// `z` must be valid for one read and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn dpimap_track_new(
    z: *const DpimapConverted,
    velocity_var: f64,
    dt: f64,
    q: f64,
    out: *mut *mut DpimapTrack,
) -> DpimapStatus {
    guard(|| {
        non_null(z, "measurement")?;
        non_null(out, "out")?;
        if !(velocity_var >= 0.0 && velocity_var.is_finite()) {
            return Err(Failure(DpimapStatus::InvalidInput, format!("velocity variance {velocity_var}")));
        }
        let model = MotionModel::new(dt, q)?;
        let state = TrackState::from_measurement(&ConvertedMeasurement::from(&*z), velocity_var, 0);
        *out = Box::into_raw(Box::new(DpimapTrack { state, model }));
        Ok(())
    })
}

/// # Safety
/// `t` must come from [`dpimap_track_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dpimap_track_free(t: *mut DpimapTrack) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Advances the track one step.
///
/// # Safety
/// `t` must be a live track.
#[no_mangle]
pub unsafe extern "C" fn dpimap_track_predict(t: *mut DpimapTrack) -> DpimapStatus {
    guard(|| {
        non_null(t, "track")?;
        let t = &mut *t;
        t.state = kf_predict(&t.state, &t.model);
        Ok(())
    })
}

/// Corrects the track with a converted measurement; the track is left
/// unchanged on failure.
///
/// # Safety
/// `t` must be a live track and `z` valid for one read.
#[no_mangle]
pub unsafe extern "C" fn dpimap_track_update(t: *mut DpimapTrack, z: *const DpimapConverted) -> DpimapStatus {
    guard(|| {
        non_null(t, "track")?;
        non_null(z, "measurement")?;
        let t = &mut *t;
        t.state = kf_update(&t.state, &ConvertedMeasurement::from(&*z))?;
        Ok(())
    })
}

/// Writes `[p1, p2, p3, v1, v2, v3]` and, when `covariance` is not null,
/// the row-major 6x6 covariance.
///
/// # Safety
/// `state` must be valid for 6 writes and `covariance`, if set, for 36.
#[no_mangle]
pub unsafe extern "C" fn dpimap_track_state(t: *const DpimapTrack, state: *mut f64, covariance: *mut f64) -> DpimapStatus {
    guard(|| {
        non_null(t, "track")?;
        non_null(state, "state")?;
        let s = &(*t).state;
        for k in 0..6 {
            *state.add(k) = s.x[k];
        }
        if !covariance.is_null() {
            for i in 0..6 {
                for j in 0..6 {
                    *covariance.add(i * 6 + j) = s.p[(i, j)];
                }
            }
        }
        Ok(())
    })
}

/// Summary of one simulation run; undefined rates are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpimapMetrics {
    pub seed: u64,
    pub events: u64,
    pub received_intended: u64,
    pub received_unintended: u64,
    pub missed_intended: u64,
    pub spared_unintended: u64,
    pub hit_rate: f64,
    pub disturbance_rate: f64,
    pub latency_mean_ms: f64,
    pub latency_p90_ms: f64,
    pub mapping_accuracy: f64,
    pub ad_range_p90_m: f64,
    pub vd_range_p90_m: f64,
    pub fused_range_p90_m: f64,
}

impl From<&MetricsRecord> for DpimapMetrics {
    fn from(m: &MetricsRecord) -> Self {
        let v = |x: Option<f64>| x.unwrap_or(f64::NAN);
        DpimapMetrics {
            seed: m.seed,
            events: m.events,
            received_intended: m.counters.ri,
            received_unintended: m.counters.ru,
            missed_intended: m.counters.ni,
            spared_unintended: m.counters.nu,
            hit_rate: v(m.hit_rate),
            disturbance_rate: v(m.disturbance_rate),
            latency_mean_ms: v(m.latency_mean_ms),
            latency_p90_ms: v(m.latency_p90_ms),
            mapping_accuracy: v(m.mapping_accuracy),
            ad_range_p90_m: v(m.ad_range_p90_m),
            vd_range_p90_m: v(m.vd_range_p90_m),
            fused_range_p90_m: v(m.fused_range_p90_m),
        }
    }
}

/// Runs one simulation from a TOML configuration (same keys as the CLI
/// config file; environment overrides are not applied).
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` valid for one
/// write.
#[no_mangle]
pub unsafe extern "C" fn dpimap_simulate(config_toml: *const c_char, out: *mut DpimapMetrics) -> DpimapStatus {
    guard(|| {
        non_null(config_toml, "config")?;
        non_null(out, "out")?;
        let text = CStr::from_ptr(config_toml)
            .to_str()
            .map_err(|e| Failure(DpimapStatus::InvalidInput, format!("config is not UTF-8: {e}")))?;
        let config_error = |e: dpimap::cli::CliError| Failure(DpimapStatus::Config, e.to_string());
        let spec = dpimap::cli::parse(text, std::iter::empty()).map_err(config_error)?;
        spec.config.validate()?;
        let metrics = dpimap::sim::run(&spec.config)?.metrics;
        *out = DpimapMetrics::from(&metrics);
        Ok(())
    })
}
