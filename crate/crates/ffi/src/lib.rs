//! C ABI over the `transhp` crate.
//!
//! Hierarchies and models are opaque heap handles created by `*_load` and
//! released by the matching `*_free`. Every fallible function returns a
//! [`TranshpStatus`]; on failure the message is available from
//! [`transhp_last_error`] on the same thread until the next failing call.
//! Panics are caught at the boundary and reported as `TRANSHP_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use transhp::analysis;
use transhp::dataset::ImageRecord;
use transhp::hierarchy::LabelHierarchy;
use transhp::model::{load_checkpoint, TransHPModel};
use transhp::numerics::{Tape, Tensor};
use transhp::Error;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TranshpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Validation = 5,
    Numeric = 6,
    Panic = 7,
}

/// Opaque label hierarchy.
pub struct TranshpHierarchy(LabelHierarchy);

/// Opaque trained model (single precision).
pub struct TranshpModel(TransHPModel<f32>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TranshpStatus {
    match e {
        Error::Io { .. } => TranshpStatus::Io,
        Error::Format(_) | Error::Parse { .. } | Error::Length { .. } => TranshpStatus::Format,
        Error::Numeric(_) | Error::Divergence { .. } => TranshpStatus::Numeric,
        Error::Validation(_) | Error::Consistency { .. } | Error::Config(_) => TranshpStatus::Validation,
        _ => TranshpStatus::InvalidArgument,
    }
}

struct Fail(TranshpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TranshpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TranshpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside transhp".into());
            TranshpStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(TranshpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(TranshpStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_ref<'a, V>(p: *mut V, what: &str) -> Result<&'a mut V, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn transhp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Loads a hierarchy text file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn transhp_hierarchy_load(path: *const c_char, out: *mut *mut TranshpHierarchy) -> TranshpStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let h = LabelHierarchy::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(TranshpHierarchy(h)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`transhp_hierarchy_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn transhp_hierarchy_free(h: *mut TranshpHierarchy) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of fine classes and coarse levels.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn transhp_hierarchy_shape(
    h: *const TranshpHierarchy,
    fine_count: *mut usize,
    level_count: *mut usize,
) -> TranshpStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("hierarchy"))?;
        *out_ref(fine_count, "fine_count")? = h.0.fine_count();
        *out_ref(level_count, "level_count")? = h.0.levels().len();
        Ok(())
    })
}

/// Coarse ancestor of `fine` at `level`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn transhp_hierarchy_ancestor(
    h: *const TranshpHierarchy,
    fine: usize,
    level: usize,
    out: *mut usize,
) -> TranshpStatus {
    guard(|| {
        let h = h.as_ref().ok_or_else(|| null("hierarchy"))?;
        *out_ref(out, "out")? = h.0.ancestor_of(fine, level)?;
        Ok(())
    })
}

/// Loads a checkpoint written by `transhp train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn transhp_model_load(path: *const c_char, out: *mut *mut TranshpModel) -> TranshpStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let m = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(TranshpModel(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must come from [`transhp_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn transhp_model_free(m: *mut TranshpModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Image side length and fine class count the model expects.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn transhp_model_shape(
    m: *const TranshpModel,
    image_size: *mut usize,
    fine_count: *mut usize,
) -> TranshpStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        *out_ref(image_size, "image_size")? = m.0.config().image_size;
        *out_ref(fine_count, "fine_count")? = m.0.config().fine_count;
        Ok(())
    })
}

/// Total parameter count and the part added by prompting.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn transhp_model_count_params(
    m: *const TranshpModel,
    total: *mut usize,
    added_by_prompting: *mut usize,
) -> TranshpStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null("model"))?;
        let c = m.0.count_params();
        *out_ref(total, "total")? = c.total;
        *out_ref(added_by_prompting, "added_by_prompting")? = c.added_by_prompting;
        Ok(())
    })
}

/// Fine-class logits for `count` images.
///
/// `pixels` holds `count` images of `3·S·S` bytes each (channel-major, rows
/// of S pixels, S = image size). `logits` receives `count·F` values and
/// `logits_len` must be at least that.
///
/// # Safety
/// `pixels` must point to `count·3·S·S` readable bytes and `logits` to
/// `logits_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn transhp_model_forward(
    m: *const TranshpModel,
    pixels: *const u8,
    count: usize,
    logits: *mut f32,
    logits_len: usize,
) -> TranshpStatus {
    guard(|| {
        let m = &m.as_ref().ok_or_else(|| null("model"))?.0;
        if count == 0 {
            return Ok(());
        }
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        if logits.is_null() {
            return Err(null("logits"));
        }
        let cfg = m.config();
        let per = 3 * cfg.image_size * cfg.image_size;
        if logits_len < count * cfg.fine_count {
            return Err(Fail(
                TranshpStatus::InvalidArgument,
                format!("logits buffer holds {logits_len} values, need {}", count * cfg.fine_count),
            ));
        }
        let bytes = std::slice::from_raw_parts(pixels, count * per);
        let records = bytes
            .chunks_exact(per)
            .enumerate()
            .map(|(i, px)| ImageRecord::new(i as u32, 0, cfg.image_size, px.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&ImageRecord> = records.iter().collect();
        let mut tape = Tape::new();
        let bound = m.bind(&mut tape, false);
        let out = m.forward(&mut tape, &bound, &refs)?;
        let values = tape.value(out.fine_logits).data();
        std::slice::from_raw_parts_mut(logits, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// Head-averaged attention mass each of the first `n_feature` query tokens
/// puts on each of the last `m` keys.
///
/// `attention` is `heads × T × T` row-major probabilities with
/// `T = n_feature + m`; `out` receives `n_feature × m` values.
///
/// # Safety
/// `attention` must point to `heads·T·T` readable doubles and `out` to
/// `n_feature·m` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn transhp_absorption_weights(
    attention: *const f64,
    heads: usize,
    n_feature: usize,
    m: usize,
    out: *mut f64,
) -> TranshpStatus {
    guard(|| {
        if attention.is_null() {
            return Err(null("attention"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let t = n_feature + m;
        let data = std::slice::from_raw_parts(attention, heads * t * t).to_vec();
        let w = analysis::absorption_weights(&Tensor::new([heads, t, t], data)?, n_feature, m)?;
        std::slice::from_raw_parts_mut(out, n_feature * m).copy_from_slice(w.data());
        Ok(())
    })
}
