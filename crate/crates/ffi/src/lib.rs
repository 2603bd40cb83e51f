//! C ABI over the validator engine and rank statistics.
//!
//! Every fallible call returns a [`VbStatus`]; on failure the message is
//! available from [`vb_last_error_message`] on the same thread. Checkpoints
//! are opaque handles released with [`vb_checkpoint_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use valbench::metrics::{self, MetricsError, PairedSeries};
use valbench::store::{load_checkpoint, CheckpointRecord, StoreError};
use valbench::synth::oracle_accuracy;
use valbench::validators::{all_variants, RecordView, ScoringConfig, ValidatorError, ValidatorVariant};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidData = 4,
    UnknownVariant = 5,
    ScoreFailed = 6,
    DegenerateInput = 7,
    BufferTooSmall = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// A loaded checkpoint.
pub struct VbCheckpoint {
    record: CheckpointRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: VbStatus, msg: impl Into<String>) -> VbStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> VbStatus) -> VbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(VbStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, VbStatus> {
    if p.is_null() {
        return Err(fail(VbStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VbStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

fn store_status(e: &StoreError) -> VbStatus {
    match e {
        StoreError::Io { .. } | StoreError::MissingFile(_) => VbStatus::Io,
        _ => VbStatus::InvalidData,
    }
}

fn metrics_status(e: &MetricsError) -> VbStatus {
    match e {
        MetricsError::DegenerateInput(_) | MetricsError::TooShort { .. } => VbStatus::DegenerateInput,
        _ => VbStatus::InvalidData,
    }
}

/// Copies `text` plus a NUL into `buf`. Returns the byte count needed
/// including the NUL, whether or not it fit.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: usize) -> usize {
    let needed = text.len() + 1;
    if !buf.is_null() && len >= needed {
        ptr::copy_nonoverlapping(text.as_ptr() as *const c_char, buf, text.len());
        *buf.add(text.len()) = 0;
    }
    needed
}

/// Copies the last error message of this thread into `buf` and returns the
/// buffer size it needs (including the NUL). Pass a null `buf` to query.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn vb_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_out(&e.borrow(), buf, len))
}

/// Loads the checkpoint directory at `path` into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vb_checkpoint_load(path: *const c_char, out: *mut *mut VbCheckpoint) -> VbStatus {
    guard(|| {
        if out.is_null() {
            return fail(VbStatus::NullPointer, "null output pointer");
        }
        *out = ptr::null_mut();
        let path = match c_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_checkpoint(path) {
            Ok(record) => {
                *out = Box::into_raw(Box::new(VbCheckpoint { record }));
                VbStatus::Ok
            }
            Err(e) => fail(store_status(&e), e.to_string()),
        }
    })
}

/// Releases a handle from [`vb_checkpoint_load`]. Null is ignored.
///
/// # Safety
/// `handle` must come from [`vb_checkpoint_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn vb_checkpoint_free(handle: *mut VbCheckpoint) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vb_checkpoint_num_classes(handle: *const VbCheckpoint, out: *mut usize) -> VbStatus {
    if handle.is_null() || out.is_null() {
        return fail(VbStatus::NullPointer, "null argument");
    }
    *out = (*handle).record.num_classes;
    VbStatus::Ok
}

/// Target accuracy from the stored target labels.
///
/// # Safety
/// `handle` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vb_checkpoint_target_accuracy(handle: *const VbCheckpoint, out: *mut f64) -> VbStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return fail(VbStatus::NullPointer, "null argument");
        }
        match oracle_accuracy(&(*handle).record) {
            Ok(a) => {
                *out = a;
                VbStatus::Ok
            }
            Err(e) => fail(VbStatus::ScoreFailed, e.to_string()),
        }
    })
}

/// Number of validator variants in the registry.
#[no_mangle]
pub extern "C" fn vb_variant_count() -> usize {
    all_variants().len()
}

/// Writes the canonical name of variant `index` into `buf`; `*needed`
/// receives the size including the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn vb_variant_name(index: usize, buf: *mut c_char, len: usize, needed: *mut usize) -> VbStatus {
    let variants = all_variants();
    let Some(v) = variants.get(index) else {
        return fail(VbStatus::OutOfRange, format!("variant index {index} out of range"));
    };
    let name = v.name();
    let n = copy_out(&name, buf, len);
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || len < n {
        return fail(VbStatus::BufferTooSmall, format!("name needs {n} bytes"));
    }
    VbStatus::Ok
}

/// Scores one variant, given by canonical name, on a checkpoint.
///
/// # Safety
/// `handle` must be live, `name` NUL-terminated, outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vb_score_variant(
    handle: *const VbCheckpoint,
    name: *const c_char,
    seed: u64,
    out_raw: *mut f64,
    out_oriented: *mut f64,
) -> VbStatus {
    guard(|| {
        if handle.is_null() || out_raw.is_null() || out_oriented.is_null() {
            return fail(VbStatus::NullPointer, "null argument");
        }
        let name = match c_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let variant = match ValidatorVariant::from_name(name) {
            Ok(v) => v,
            Err(e) => return fail(VbStatus::UnknownVariant, e.to_string()),
        };
        let view = RecordView::new(&(*handle).record, ScoringConfig::with_seed(seed));
        match view.score(&variant) {
            Ok(score) => {
                *out_raw = score.raw;
                *out_oriented = score.oriented;
                VbStatus::Ok
            }
            Err(e @ ValidatorError::UnknownVariant(_)) => fail(VbStatus::UnknownVariant, e.to_string()),
            Err(e) => fail(VbStatus::ScoreFailed, e.to_string()),
        }
    })
}

unsafe fn pair<'a>(x: *const f64, y: *const f64, n: usize) -> Result<(&'a [f64], &'a [f64]), VbStatus> {
    if x.is_null() || y.is_null() {
        return Err(fail(VbStatus::NullPointer, "null array"));
    }
    Ok((slice::from_raw_parts(x, n), slice::from_raw_parts(y, n)))
}

/// Weighted Spearman correlation (×100) of `n` score/accuracy pairs.
///
/// # Safety
/// `scores` and `accuracies` must be valid for `n` reads, `out` for a write.
#[no_mangle]
pub unsafe extern "C" fn vb_weighted_spearman(
    scores: *const f64,
    accuracies: *const f64,
    n: usize,
    out: *mut f64,
) -> VbStatus {
    guard(|| {
        if out.is_null() {
            return fail(VbStatus::NullPointer, "null output pointer");
        }
        let (s, a) = match pair(scores, accuracies, n) {
            Ok(p) => p,
            Err(st) => return st,
        };
        match PairedSeries::new(s.to_vec(), a.to_vec()).and_then(|p| metrics::weighted_spearman(&p)) {
            Ok(v) => {
                *out = v;
                VbStatus::Ok
            }
            Err(e) => fail(metrics_status(&e), e.to_string()),
        }
    })
}

/// Spearman correlation (×100) of `n` pairs.
///
/// # Safety
/// `x` and `y` must be valid for `n` reads, `out` for a write.
#[no_mangle]
pub unsafe extern "C" fn vb_spearman(x: *const f64, y: *const f64, n: usize, out: *mut f64) -> VbStatus {
    guard(|| {
        if out.is_null() {
            return fail(VbStatus::NullPointer, "null output pointer");
        }
        let (x, y) = match pair(x, y, n) {
            Ok(p) => p,
            Err(st) => return st,
        };
        match metrics::spearman(x, y) {
            Ok(v) => {
                *out = v;
                VbStatus::Ok
            }
            Err(e) => fail(metrics_status(&e), e.to_string()),
        }
    })
}
