//! C interface to the trained detector. One opaque handle owns a checkpoint
//! and the event-embedding table; callers hand in template-id sequences and
//! get anomaly probabilities back. Every entry point is panic-safe, returns a
//! status code, and leaves a human-readable message behind [`zl_last_error`].
//!
//! The C header mirroring these exports is `include/zerolog.h` and is
//! maintained by hand; `tests/header.rs` keeps the two in sync.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use zerolog::embed::{EmbeddingConfig, EventEmbedding};
use zerolog::eval::embed_session;
use zerolog::net::checkpoint::load_checkpoint;
use zerolog::net::NetworkParams;
use zerolog::Error;

/// Status codes shared with the header. 2 and 3 deliberately match the CLI
/// exit codes for the same failure classes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZlStatus {
    Ok = 0,
    /// Unreadable or malformed files, mismatched dimensions, empty sessions.
    Input = 2,
    /// Non-finite numbers where finite ones are required.
    Numeric = 3,
    /// A required pointer argument was null.
    NullArgument = 4,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 5,
    /// A panic was caught at the FFI boundary; state may be stale, handles
    /// stay valid.
    Internal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let clean: String = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn fail(status: ZlStatus, msg: &str) -> ZlStatus {
    set_last_error(msg);
    status
}

fn fail_error(err: &Error) -> ZlStatus {
    let status = match err.exit_code() {
        zerolog::error::EXIT_NUMERIC => ZlStatus::Numeric,
        _ => ZlStatus::Input,
    };
    fail(status, &err.to_string())
}

/// Runs a closure behind the unwind barrier so panics become status codes
/// instead of undefined behavior across the C boundary.
fn guarded(body: impl FnOnce() -> ZlStatus) -> ZlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(ZlStatus::Internal, "internal panic caught at the FFI boundary"),
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string valid for reads.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, ZlStatus> {
    if ptr.is_null() {
        return Err(fail(ZlStatus::NullArgument, &format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(ZlStatus::InvalidUtf8, &format!("{name} is not valid UTF-8")))
}

/// Loaded model plus embedding table. Immutable after open, so one handle
/// may be shared across threads for scoring.
pub struct ZlDetector {
    params: NetworkParams,
    embeddings: EventEmbedding,
    config: EmbeddingConfig,
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message from the most recent failing call on this thread. Never null;
/// empty until something fails. The pointer stays valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn zl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Opens a detector from a checkpoint file and an embedding table file (the
/// `checkpoint.bin` and `embeddings.tsv` a training run leaves behind).
/// Writes the new handle to `out` on success; the caller owns it and must
/// release it with [`zl_detector_free`].
///
/// # Safety
/// `checkpoint_path` and `embeddings_path` must be NUL-terminated strings,
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn zl_detector_open(
    checkpoint_path: *const c_char,
    embeddings_path: *const c_char,
    out: *mut *mut ZlDetector,
) -> ZlStatus {
    guarded(|| {
        if out.is_null() {
            return fail(ZlStatus::NullArgument, "out is null");
        }
        let ckpt_path = match utf8_arg(checkpoint_path, "checkpoint_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let emb_path = match utf8_arg(embeddings_path, "embeddings_path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let ckpt = match load_checkpoint(Path::new(ckpt_path)) {
            Ok(c) => c,
            Err(e) => return fail_error(&e),
        };
        let embeddings = match EventEmbedding::load(Path::new(emb_path)) {
            Ok(t) => t,
            Err(e) => return fail_error(&e),
        };
        if embeddings.dimension() != ckpt.params.config.input_dim {
            return fail(
                ZlStatus::Input,
                &format!(
                    "embedding dimension {} does not match network input {}",
                    embeddings.dimension(),
                    ckpt.params.config.input_dim
                ),
            );
        }
        let config = EmbeddingConfig {
            dimension: embeddings.dimension(),
            ..EmbeddingConfig::default()
        };
        let det = Box::new(ZlDetector { params: ckpt.params, embeddings, config });
        *out = Box::into_raw(det);
        ZlStatus::Ok
    })
}

/// Input dimension the detector expects, which equals the embedding width.
///
/// # Safety
/// `detector` must come from [`zl_detector_open`], `out` must be valid for a
/// write.
#[no_mangle]
pub unsafe extern "C" fn zl_detector_dimension(
    detector: *const ZlDetector,
    out: *mut usize,
) -> ZlStatus {
    guarded(|| {
        if detector.is_null() {
            return fail(ZlStatus::NullArgument, "detector is null");
        }
        if out.is_null() {
            return fail(ZlStatus::NullArgument, "out is null");
        }
        *out = (*detector).embeddings.dimension();
        ZlStatus::Ok
    })
}

/// Scores one session: `event_ids` are the template ids of its events in
/// order, `system` names the side they were parsed under (the embedding keys
/// are `<system>:<template_id>`). Ids missing from the table resolve through
/// the deterministic hash fallback, never an error. Writes the anomaly
/// probability in [0, 1] to `probability`.
///
/// # Safety
/// `detector` must come from [`zl_detector_open`]; `system` must be a
/// NUL-terminated string; `event_ids` must point to `n_events` readable
/// values; `probability` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn zl_detector_score(
    detector: *const ZlDetector,
    system: *const c_char,
    event_ids: *const u32,
    n_events: usize,
    probability: *mut f64,
) -> ZlStatus {
    guarded(|| {
        if detector.is_null() {
            return fail(ZlStatus::NullArgument, "detector is null");
        }
        if probability.is_null() {
            return fail(ZlStatus::NullArgument, "probability is null");
        }
        let system = match utf8_arg(system, "system") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if n_events == 0 {
            return fail(ZlStatus::Input, "session has no events");
        }
        if event_ids.is_null() {
            return fail(ZlStatus::NullArgument, "event_ids is null");
        }
        let det = &*detector;
        let ids = std::slice::from_raw_parts(event_ids, n_events);
        let (seq, _oov) = embed_session(ids, system, &det.embeddings, &det.config);
        let p = det.params.classify_anomaly(&seq);
        if !p.is_finite() {
            return fail(ZlStatus::Numeric, "probability came out non-finite");
        }
        *probability = p;
        ZlStatus::Ok
    })
}

/// Releases a handle. Null is a no-op. Passing the same handle twice is
/// undefined behavior, as with free().
///
/// # Safety
/// `detector` must be null or a handle from [`zl_detector_open`] not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn zl_detector_free(detector: *mut ZlDetector) {
    if !detector.is_null() {
        drop(Box::from_raw(detector));
    }
}
