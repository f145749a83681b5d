//! C ABI over the polarest estimators.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by `*_free`. Complex vectors are interleaved `re, im` doubles.
//! Every fallible call returns a [`PolarestStatus`]; the message of the last
//! failure on the calling thread is available from [`polarest_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use polarest::analysis::{compute_zeta, ZetaModel};
use polarest::dictionary::{build_arc_bases, ArcBasisSet, ParametricDictionary};
use polarest::estimators::{estimate, Algorithm, EstimatorConfig};
use polarest::sensing::MeasurementOperator;
use polarest::signal::{CVector, PulseSpec, SamplingGrid, C64};
use polarest::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarestStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Solver = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarestAlgorithm {
    Bomp = 0,
    Paibomp = 1,
    Poibomp = 2,
    Ccbp = 3,
    PaibompCcbp = 4,
    TdeMusic = 5,
}

impl From<PolarestAlgorithm> for Algorithm {
    fn from(a: PolarestAlgorithm) -> Self {
        match a {
            PolarestAlgorithm::Bomp => Algorithm::Bomp,
            PolarestAlgorithm::Paibomp => Algorithm::Paibomp,
            PolarestAlgorithm::Poibomp => Algorithm::Poibomp,
            PolarestAlgorithm::Ccbp => Algorithm::Ccbp,
            PolarestAlgorithm::PaibompCcbp => Algorithm::PaibompCcbp,
            PolarestAlgorithm::TdeMusic => Algorithm::TdeMusic,
        }
    }
}

/// Time-delay dictionary with its arc frames and arc error.
pub struct PolarestModel {
    dict: ParametricDictionary,
    arcs: ArcBasisSet,
    zeta: f64,
}

/// Random demodulator.
pub struct PolarestOperator {
    op: MeasurementOperator,
}

/// Estimator settings. Initialise with [`polarest_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PolarestOptions {
    pub algorithm: PolarestAlgorithm,
    /// Number of pulses to recover.
    pub k: usize,
    /// Band exclusion level in [0, 1].
    pub eta: f64,
    /// CCBP sparsity weight.
    pub lambda: f64,
    /// Per-measurement noise variance.
    pub sigma_sq: f64,
    /// Grid neighbors added around greedy atoms before CCBP refinement.
    pub xi: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> PolarestStatus {
    match e {
        Error::Config(_) | Error::Dimension(_) => PolarestStatus::InvalidArgument,
        Error::Domain(_) | Error::DegenerateArc { .. } | Error::UnstableFit(_) | Error::SpectrumNull { .. } => {
            PolarestStatus::Domain
        }
        Error::Solver(_) => PolarestStatus::Solver,
        Error::Io(_) | Error::Csv(_) | Error::Format(_) => PolarestStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, recording any error or panic for [`polarest_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PolarestStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PolarestStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            PolarestStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_error(msg);
            PolarestStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            PolarestStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn complex_in(data: *const f64, len: usize, name: &'static str) -> Result<CVector, Failure> {
    if data.is_null() {
        return Err(Failure::Null(name));
    }
    let raw = slice::from_raw_parts(data, 2 * len);
    Ok(CVector::from_iterator(len, raw.chunks_exact(2).map(|c| C64::new(c[0], c[1]))))
}

unsafe fn complex_out(v: &CVector, out: *mut f64, len: usize, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    if len != v.len() {
        return Err(Failure::Invalid(format!("{name} holds {len} values, expected {}", v.len())));
    }
    let dst = slice::from_raw_parts_mut(out, 2 * len);
    for (d, z) in dst.chunks_exact_mut(2).zip(v.iter()) {
        d[0] = z.re;
        d[1] = z.im;
    }
    Ok(())
}

/// Message describing the last failed call on this thread, or NULL.
///
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn polarest_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds a time-delay model on `n` samples at rate `fs` Hz with the reference
/// chirp and redundancy `redundancy`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn polarest_model_new(
    n: usize,
    fs: f64,
    redundancy: usize,
    out: *mut *mut PolarestModel,
) -> PolarestStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let spec = PulseSpec::reference();
        let grid = SamplingGrid::from_rate(n, fs)?;
        let dict = ParametricDictionary::tde(spec, grid, redundancy)?;
        let arcs = build_arc_bases(&dict)?;
        let zeta = compute_zeta(ZetaModel::Tde { spec, grid }, redundancy, 100)?.zeta;
        *out = Box::into_raw(Box::new(PolarestModel { dict, arcs, zeta }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`polarest_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn polarest_model_free(model: *mut PolarestModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Arc approximation error of the model's dictionary.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn polarest_model_zeta(model: *const PolarestModel, out: *mut f64) -> PolarestStatus {
    guard(|| {
        let m = deref(model, "model")?;
        *out.as_mut().ok_or(Failure::Null("out"))? = m.zeta;
        Ok(())
    })
}

/// Arc approximation error of the time-delay dictionary with `n` samples at
/// the reference rate and redundancy `c`, sampled at `samples` offsets.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn polarest_zeta(n: usize, c: usize, samples: usize, out: *mut f64) -> PolarestStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let grid = SamplingGrid::new(n, SamplingGrid::reference().ts)?;
        *out = compute_zeta(ZetaModel::Tde { spec: PulseSpec::reference(), grid }, c, samples)?.zeta;
        Ok(())
    })
}

/// Builds a random demodulator with `round(kappa * n)` rows from `seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn polarest_operator_new(
    n: usize,
    kappa: f64,
    seed: u64,
    out: *mut *mut PolarestOperator,
) -> PolarestStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let op = MeasurementOperator::new(n, kappa, seed)?;
        *out = Box::into_raw(Box::new(PolarestOperator { op }));
        Ok(())
    })
}

/// # Safety
/// `op` must be NULL or a handle from [`polarest_operator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn polarest_operator_free(op: *mut PolarestOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Number of measurements produced by `op`, or 0 if `op` is NULL.
///
/// # Safety
/// `op` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn polarest_operator_rows(op: *const PolarestOperator) -> usize {
    op.as_ref().map_or(0, |o| o.op.rows())
}

/// Applies `op` to the signal `f` (`n` complex values) and writes `m` measurements to `y`.
///
/// # Safety
/// `f` must hold `2 * n` doubles and `y` room for `2 * m`.
#[no_mangle]
pub unsafe extern "C" fn polarest_operator_apply(
    op: *const PolarestOperator,
    f: *const f64,
    n: usize,
    y: *mut f64,
    m: usize,
) -> PolarestStatus {
    guard(|| {
        let o = deref(op, "op")?;
        let f = complex_in(f, n, "f")?;
        let out = o.op.apply(&f)?;
        complex_out(&out, y, m, "y")
    })
}

#[no_mangle]
pub extern "C" fn polarest_options_default(algorithm: PolarestAlgorithm, k: usize) -> PolarestOptions {
    let d = EstimatorConfig::new(algorithm.into(), k);
    PolarestOptions { algorithm, k, eta: d.eta, lambda: d.lambda, sigma_sq: d.sigma_sq, xi: d.xi }
}

/// Estimates delays and amplitudes from `m` measurements `y`.
///
/// Writes up to `capacity` delays (seconds) to `delays` and interleaved
/// amplitudes to `amplitudes`, and the number written to `count`.
///
/// # Safety
/// `y` must hold `2 * m` doubles, `delays` room for `capacity` doubles,
/// `amplitudes` room for `2 * capacity`, and `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn polarest_estimate(
    model: *const PolarestModel,
    op: *const PolarestOperator,
    options: *const PolarestOptions,
    y: *const f64,
    m: usize,
    delays: *mut f64,
    amplitudes: *mut f64,
    capacity: usize,
    count: *mut usize,
) -> PolarestStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let o = deref(op, "op")?;
        let opts = deref(options, "options")?;
        if delays.is_null() || amplitudes.is_null() || count.is_null() {
            return Err(Failure::Null("output buffer"));
        }
        let y = complex_in(y, m, "y")?;
        let cfg = EstimatorConfig {
            eta: opts.eta,
            lambda: opts.lambda,
            sigma_sq: opts.sigma_sq,
            xi: opts.xi,
            zeta: model.zeta,
            ..EstimatorConfig::new(opts.algorithm.into(), opts.k)
        };
        let res = estimate(&y, &o.op, &model.dict, &model.arcs, &cfg)?;
        if res.b_hat.len() > capacity {
            return Err(Failure::Invalid(format!("capacity {capacity} below {} estimates", res.b_hat.len())));
        }
        let d = slice::from_raw_parts_mut(delays, capacity);
        let a = slice::from_raw_parts_mut(amplitudes, 2 * capacity);
        for (i, (b, amp)) in res.b_hat.iter().zip(&res.a_hat).enumerate() {
            d[i] = *b;
            a[2 * i] = amp.re;
            a[2 * i + 1] = amp.im;
        }
        *count = res.b_hat.len();
        Ok(())
    })
}
