//! C ABI for the covariance-equality test engine.
//!
//! Scalars and buffers cross the boundary directly; streams and trained
//! models live behind opaque handles with explicit constructors and
//! destructors. Every fallible call returns a [`covtest_status`] and
//! leaves a human-readable message for [`covtest_last_error`] on failure.
//!
//! Buffer layout: sample blocks are column-major `p x columns` arrays,
//! element `(i, j)` at index `i + j*p`, matching one sample column of `p`
//! channels after another in memory.

#![allow(non_camel_case_types)]

use covtest::detector::{detect, train, DetectorError, DetectorModel};
use covtest::matrixflow::{FlowError, MatrixFlow, StreamCursor, WindowMatrix};
use covtest::ustat::{
    far_threshold, gaussian_tail, multi_stat, standardize, StatConfig, StatError, TestResult,
};
use std::cell::RefCell;
use std::collections::VecDeque;
use std::ffi::{c_char, CString};

/// Builds a flow of q windows from a column-major `p x (q*n_g)` buffer.
fn flow_from_columns(data: &[f64], p: usize, n_g: usize, q: usize) -> Result<MatrixFlow, FlowError> {
    let mut windows = Vec::with_capacity(q);
    for g in 0..q {
        let mut cols = Vec::with_capacity(n_g);
        for j in 0..n_g {
            let start = (g * n_g + j) * p;
            cols.push(data[start..start + p].to_vec());
        }
        windows.push(WindowMatrix::from_columns(p, &cols)?);
    }
    MatrixFlow::new(windows)
}

/// Outcome of an ABI call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum covtest_status {
    /// The call succeeded.
    COVTEST_OK = 0,
    /// A required pointer argument was null.
    COVTEST_NULL_POINTER = 1,
    /// An argument violated a documented requirement.
    COVTEST_INVALID_ARGUMENT = 2,
    /// The data could not be processed (non-finite entries or a failed
    /// internal validation).
    COVTEST_DATA_ERROR = 3,
    /// The variance estimate is zero, so no score can be formed; retrain
    /// on more varied history.
    COVTEST_DEGENERATE = 4,
}

use covtest_status::*;

/// A standardized test outcome.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct covtest_test_result {
    /// Pooled covariance-distance statistic of the flow.
    pub statistic: f64,
    /// Estimated standard deviation of the statistic.
    pub std_dev: f64,
    /// `statistic / std_dev`.
    pub score: f64,
    /// Number of unordered window pairs pooled.
    pub pair_count: u64,
}

impl From<TestResult> for covtest_test_result {
    fn from(r: TestResult) -> Self {
        Self {
            statistic: r.statistic,
            std_dev: r.std_dev,
            score: r.score,
            pair_count: r.pair_count,
        }
    }
}

/// Streaming ingestion handle: buffers sample columns and yields one
/// standardized result per completed flow.
pub struct covtest_cursor {
    cursor: StreamCursor,
    ready: VecDeque<MatrixFlow>,
}

/// A trained detector model.
pub struct covtest_model {
    model: DetectorModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl AsRef<str>) {
    let owned = CString::new(msg.as_ref())
        .unwrap_or_else(|_| CString::new("error message contained an interior NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn flow_status(err: &FlowError) -> covtest_status {
    match err {
        FlowError::NonFinite { .. } => COVTEST_DATA_ERROR,
        _ => COVTEST_INVALID_ARGUMENT,
    }
}

fn stat_status(err: &StatError) -> covtest_status {
    match err {
        StatError::DegenerateVariance { .. } => COVTEST_DEGENERATE,
        StatError::Compute(_) => COVTEST_DATA_ERROR,
        _ => COVTEST_INVALID_ARGUMENT,
    }
}

fn detector_status(err: &DetectorError) -> covtest_status {
    match err {
        DetectorError::Degenerate => COVTEST_DEGENERATE,
        DetectorError::Stat(inner) => stat_status(inner),
        _ => COVTEST_INVALID_ARGUMENT,
    }
}

fn fail(status: covtest_status, err: impl std::fmt::Display) -> covtest_status {
    set_last_error(err.to_string());
    status
}

/// Checks the geometry product fits in memory arithmetic.
fn buffer_len(p: usize, n_g: usize, q: usize) -> Option<usize> {
    p.checked_mul(n_g)?.checked_mul(q)
}

/// Message for the most recent failure on this thread.
///
/// The pointer stays valid until the next failing call on the same
/// thread; the string is empty if nothing has failed yet.
///
/// # Safety
/// The returned pointer must not be freed or written through.
#[no_mangle]
pub unsafe extern "C" fn covtest_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn covtest_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Standard normal upper-tail probability Q(x).
#[no_mangle]
pub extern "C" fn covtest_gaussian_tail(x: f64) -> f64 {
    gaussian_tail(x)
}

/// Writes the score threshold whose normal upper-tail probability is
/// `tau` (0 < tau < 1) to `out`.
///
/// # Safety
/// `out` must be a valid pointer to one `double`.
#[no_mangle]
pub unsafe extern "C" fn covtest_far_threshold(tau: f64, out: *mut f64) -> covtest_status {
    if out.is_null() {
        return fail(COVTEST_NULL_POINTER, "out is null");
    }
    match far_threshold(tau) {
        Ok(v) => {
            *out = v;
            COVTEST_OK
        }
        Err(e) => fail(stat_status(&e), e),
    }
}

unsafe fn flow_from_raw(
    data: *const f64,
    p: usize,
    n_g: usize,
    q: usize,
) -> Result<MatrixFlow, covtest_status> {
    if data.is_null() {
        return Err(fail(COVTEST_NULL_POINTER, "data is null"));
    }
    let Some(len) = buffer_len(p, n_g, q) else {
        return Err(fail(
            COVTEST_INVALID_ARGUMENT,
            "p * n_g * q overflows the address space",
        ));
    };
    if len == 0 {
        return Err(fail(
            COVTEST_INVALID_ARGUMENT,
            "p, n_g, and q must all be nonzero",
        ));
    }
    let slice = std::slice::from_raw_parts(data, len);
    flow_from_columns(slice, p, n_g, q).map_err(|e| fail(flow_status(&e), e))
}

/// Pooled covariance-distance statistic of one flow laid out as a
/// column-major `p x (q*n_g)` buffer of q consecutive windows.
///
/// # Safety
/// `data` must point to `p*n_g*q` doubles; `out` to one `double`.
#[no_mangle]
pub unsafe extern "C" fn covtest_multi_stat(
    data: *const f64,
    p: usize,
    n_g: usize,
    q: usize,
    out: *mut f64,
) -> covtest_status {
    if out.is_null() {
        return fail(COVTEST_NULL_POINTER, "out is null");
    }
    let flow = match flow_from_raw(data, p, n_g, q) {
        Ok(flow) => flow,
        Err(status) => return status,
    };
    match multi_stat(&flow) {
        Ok(v) => {
            *out = v;
            COVTEST_OK
        }
        Err(e) => fail(stat_status(&e), e),
    }
}

/// Standardized test of one flow (same layout as [`covtest_multi_stat`])
/// under the default configuration.
///
/// # Safety
/// `data` must point to `p*n_g*q` doubles; `out` to one
/// `covtest_test_result`.
#[no_mangle]
pub unsafe extern "C" fn covtest_standardize(
    data: *const f64,
    p: usize,
    n_g: usize,
    q: usize,
    out: *mut covtest_test_result,
) -> covtest_status {
    if out.is_null() {
        return fail(COVTEST_NULL_POINTER, "out is null");
    }
    let flow = match flow_from_raw(data, p, n_g, q) {
        Ok(flow) => flow,
        Err(status) => return status,
    };
    match standardize(&flow) {
        Ok(r) => {
            *out = r.into();
            COVTEST_OK
        }
        Err(e) => fail(stat_status(&e), e),
    }
}

/// Creates a streaming cursor for `p` channels, windows of `n_g` samples,
/// and `q` windows per flow. Returns null (with a message for
/// [`covtest_last_error`]) when the geometry is invalid.
///
/// # Safety
/// The handle must be released with [`covtest_cursor_free`].
#[no_mangle]
pub unsafe extern "C" fn covtest_cursor_new(p: usize, n_g: usize, q: usize) -> *mut covtest_cursor {
    match StreamCursor::new(p, n_g, q) {
        Ok(cursor) => Box::into_raw(Box::new(covtest_cursor {
            cursor,
            ready: VecDeque::new(),
        })),
        Err(e) => {
            set_last_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Releases a cursor. Null is ignored.
///
/// # Safety
/// `cursor` must be null or a pointer from [`covtest_cursor_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn covtest_cursor_free(cursor: *mut covtest_cursor) {
    if !cursor.is_null() {
        drop(Box::from_raw(cursor));
    }
}

/// Appends `count` sample columns (column-major `p x count`) to the
/// stream. Completed flows queue up for [`covtest_cursor_next_stat`].
/// The batch is validated before any of it is consumed.
///
/// # Safety
/// `cursor` must be a live cursor handle; `samples` must point to
/// `p*count` doubles.
#[no_mangle]
pub unsafe extern "C" fn covtest_cursor_push(
    cursor: *mut covtest_cursor,
    samples: *const f64,
    count: usize,
) -> covtest_status {
    let Some(handle) = cursor.as_mut() else {
        return fail(COVTEST_NULL_POINTER, "cursor is null");
    };
    if samples.is_null() {
        return fail(COVTEST_NULL_POINTER, "samples is null");
    }
    let p = handle.cursor.p();
    let Some(len) = p.checked_mul(count) else {
        return fail(COVTEST_INVALID_ARGUMENT, "p * count overflows");
    };
    let slice = std::slice::from_raw_parts(samples, len);
    let columns: Vec<Vec<f64>> = (0..count)
        .map(|j| slice[j * p..(j + 1) * p].to_vec())
        .collect();
    match handle.cursor.ingest_samples(&columns) {
        Ok(flows) => {
            handle.ready.extend(flows);
            COVTEST_OK
        }
        Err(e) => fail(flow_status(&e), e),
    }
}

/// Number of completed flows waiting to be tested.
///
/// # Safety
/// `cursor` must be null (returns 0) or a live cursor handle.
#[no_mangle]
pub unsafe extern "C" fn covtest_cursor_flows_ready(cursor: *const covtest_cursor) -> usize {
    cursor.as_ref().map_or(0, |handle| handle.ready.len())
}

/// Pops the oldest completed flow and writes its standardized test result
/// (default configuration) to `out`.
///
/// # Safety
/// `cursor` must be a live cursor handle; `out` must point to one
/// `covtest_test_result`.
#[no_mangle]
pub unsafe extern "C" fn covtest_cursor_next_stat(
    cursor: *mut covtest_cursor,
    out: *mut covtest_test_result,
) -> covtest_status {
    let Some(handle) = cursor.as_mut() else {
        return fail(COVTEST_NULL_POINTER, "cursor is null");
    };
    if out.is_null() {
        return fail(COVTEST_NULL_POINTER, "out is null");
    }
    let Some(flow) = handle.ready.pop_front() else {
        return fail(COVTEST_INVALID_ARGUMENT, "no completed flow is ready");
    };
    match standardize(&flow) {
        Ok(r) => {
            *out = r.into();
            COVTEST_OK
        }
        Err(e) => fail(stat_status(&e), e),
    }
}

/// Trains a detector on `flow_count` consecutive flows stored as one
/// column-major `p x (flow_count*q*n_g)` buffer. On success writes a model
/// handle to `out`; release it with [`covtest_model_free`].
///
/// # Safety
/// `data` must point to `p*n_g*q*flow_count` doubles; `out` must point to
/// one `covtest_model*`.
#[no_mangle]
pub unsafe extern "C" fn covtest_train(
    data: *const f64,
    p: usize,
    n_g: usize,
    q: usize,
    flow_count: usize,
    window_seconds: f64,
    out: *mut *mut covtest_model,
) -> covtest_status {
    if out.is_null() {
        return fail(COVTEST_NULL_POINTER, "out is null");
    }
    if data.is_null() {
        return fail(COVTEST_NULL_POINTER, "data is null");
    }
    let Some(flow_len) = buffer_len(p, n_g, q) else {
        return fail(COVTEST_INVALID_ARGUMENT, "p * n_g * q overflows");
    };
    if flow_len == 0 || flow_count == 0 {
        return fail(
            COVTEST_INVALID_ARGUMENT,
            "p, n_g, q, and flow_count must all be nonzero",
        );
    }
    let Some(total) = flow_len.checked_mul(flow_count) else {
        return fail(COVTEST_INVALID_ARGUMENT, "buffer length overflows");
    };
    let slice = std::slice::from_raw_parts(data, total);
    let mut flows = Vec::with_capacity(flow_count);
    for k in 0..flow_count {
        match flow_from_columns(&slice[k * flow_len..(k + 1) * flow_len], p, n_g, q) {
            Ok(flow) => flows.push(flow),
            Err(e) => return fail(flow_status(&e), e),
        }
    }
    match train(&flows, window_seconds, &StatConfig::default()) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(covtest_model { model }));
            COVTEST_OK
        }
        Err(e) => fail(detector_status(&e), e),
    }
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or a pointer from [`covtest_train`] that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn covtest_model_free(model: *mut covtest_model) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Tests one flow (layout as in [`covtest_multi_stat`], geometry taken
/// from the model) and writes the event flag and the flow's statistic.
///
/// # Safety
/// `model` must be a live model handle; `data` must point to `p*n_g*q`
/// doubles for the model's geometry; `out_flag` and `out_magnitude` must
/// each point to one value.
#[no_mangle]
pub unsafe extern "C" fn covtest_detect(
    model: *const covtest_model,
    data: *const f64,
    out_flag: *mut bool,
    out_magnitude: *mut f64,
) -> covtest_status {
    let Some(handle) = model.as_ref() else {
        return fail(COVTEST_NULL_POINTER, "model is null");
    };
    if out_flag.is_null() || out_magnitude.is_null() {
        return fail(COVTEST_NULL_POINTER, "output pointer is null");
    }
    let config = handle.model.config;
    let flow = match flow_from_raw(data, config.p, config.n_g, config.q) {
        Ok(flow) => flow,
        Err(status) => return status,
    };
    match detect(&handle.model, &flow) {
        Ok((flag, magnitude)) => {
            *out_flag = flag;
            *out_magnitude = magnitude;
            COVTEST_OK
        }
        Err(e) => fail(detector_status(&e), e),
    }
}
