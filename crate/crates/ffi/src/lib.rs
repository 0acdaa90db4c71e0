//! C ABI over `sce-core`: checkpoint loading and inference for both
//! classifiers, text metrics, and mock-backend narratives.
//!
//! Every fallible call returns an [`SceStatus`]; on failure the message is
//! available from [`sce_last_error`] on the same thread. Models are opaque
//! handles released with their `_free` function. Strings returned by the
//! library are released with [`sce_string_free`]; label and name strings are
//! static and must not be freed.
//!
//! Clips are passed as packed RGB bytes, `frames * height * width * 3` long,
//! frame-major then row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::OnceLock;

use sce_core::cli::CliError;
use sce_core::contrastive::{infer_with_bank, ContrastiveModel, LabelBank};
use sce_core::data::{EventType, FrameSequence, LabelVocabulary};
use sce_core::metrics::{meteor, rouge_l_f1};
use sce_core::narrative::{generate_narrative, MockBackend, NarrativeJob, PromptStrategy};
use sce_core::supervised::{forward_scores, SupervisedModel};

/// Number of event-type scores written by [`sce_event_model_predict`].
pub const SCE_EVENT_TYPE_COUNT: usize = 4;
/// Number of conflict scores written by [`sce_conflict_model_predict`].
pub const SCE_TRAINABLE_LABEL_COUNT: usize = 16;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Numeric = 5,
    Artifact = 6,
    Backend = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceStrategy {
    Direct = 0,
    ChainOfThought = 1,
    ChainOfThoughtRepeat = 2,
}

/// Event-type classifier handle.
pub struct SceEventModel {
    model: SupervisedModel,
}

/// Conflict-type matcher handle with its label embeddings precomputed.
pub struct SceConflictModel {
    model: ContrastiveModel,
    bank: LabelBank,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(SceStatus, String);

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Config(_) => SceStatus::InvalidArgument,
            CliError::Io(_) => SceStatus::Io,
            CliError::Numeric(_) => SceStatus::Numeric,
            CliError::Artifact(_) => SceStatus::Artifact,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: SceStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Run `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SceStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            SceStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("panic inside sce");
            SceStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(SceStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(SceStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn read_clip(rgb: *const u8, frames: usize, height: usize, width: usize) -> Result<FrameSequence, Failure> {
    if rgb.is_null() {
        return Err(fail(SceStatus::NullPointer, "rgb is NULL"));
    }
    let len = frames
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| fail(SceStatus::InvalidArgument, "clip dimensions overflow"))?;
    let data = std::slice::from_raw_parts(rgb, len).to_vec();
    FrameSequence::new(data, frames, height, width, 15.0).map_err(|e| Failure::from(CliError::from(e)))
}

fn static_cstrings(texts: impl Iterator<Item = &'static str>) -> Vec<CString> {
    texts.map(|t| CString::new(t).expect("static text has no NUL")).collect()
}

fn label_texts() -> &'static [CString] {
    static TEXTS: OnceLock<Vec<CString>> = OnceLock::new();
    TEXTS.get_or_init(|| static_cstrings(LabelVocabulary::standard().entries().iter().map(|e| e.text)))
}

fn event_type_names() -> &'static [CString] {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    NAMES.get_or_init(|| static_cstrings(EventType::ALL.iter().map(|e| e.display_text())))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sce_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION.get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).unwrap()).as_ptr()
}

/// Copy the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be NULL or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sce_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sce_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Conflict-type label text for `id` in 1..=17, or NULL.
#[no_mangle]
pub extern "C" fn sce_label_text(id: u32) -> *const c_char {
    match id.checked_sub(1).and_then(|i| label_texts().get(i as usize)) {
        Some(s) => s.as_ptr(),
        None => ptr::null(),
    }
}

/// Event-type display name for `index` in 0..4, or NULL.
#[no_mangle]
pub extern "C" fn sce_event_type_name(index: u32) -> *const c_char {
    match event_type_names().get(index as usize) {
        Some(s) => s.as_ptr(),
        None => ptr::null(),
    }
}

/// Load an event-type checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sce_event_model_load(path: *const c_char, out: *mut *mut SceEventModel) -> SceStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SceStatus::NullPointer, "out is NULL"));
        }
        let path = read_str(path, "path")?;
        let model = SupervisedModel::load(Path::new(path)).map_err(|e| Failure::from(CliError::from(e)))?;
        *out = Box::into_raw(Box::new(SceEventModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`sce_event_model_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sce_event_model_free(model: *mut SceEventModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Score a clip. Writes the four event-type logits (crash, tire strike,
/// near-crash, normal driving) to `scores` and the argmax index to `label`.
///
/// # Safety
/// `model` must be a live handle, `rgb` must hold the whole clip, `scores`
/// must have room for 4 values and `label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sce_event_model_predict(
    model: *const SceEventModel,
    rgb: *const u8,
    frames: usize,
    height: usize,
    width: usize,
    scores: *mut f64,
    label: *mut u32,
) -> SceStatus {
    guard(|| {
        if model.is_null() || scores.is_null() || label.is_null() {
            return Err(fail(SceStatus::NullPointer, "model, scores and label must be non-NULL"));
        }
        let clip = read_clip(rgb, frames, height, width)?;
        let s = forward_scores(&(*model).model, &clip).map_err(|e| Failure::from(CliError::from(e)))?;
        ptr::copy_nonoverlapping(s.0.as_ptr(), scores, SCE_EVENT_TYPE_COUNT);
        *label = s.predict().index() as u32;
        Ok(())
    })
}

/// Load a conflict-type checkpoint and encode the label bank.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sce_conflict_model_load(path: *const c_char, out: *mut *mut SceConflictModel) -> SceStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SceStatus::NullPointer, "out is NULL"));
        }
        let path = read_str(path, "path")?;
        let model = ContrastiveModel::load(Path::new(path)).map_err(|e| Failure::from(CliError::from(e)))?;
        let bank = model
            .label_bank(&LabelVocabulary::standard())
            .map_err(|e| Failure::from(CliError::from(e)))?;
        *out = Box::into_raw(Box::new(SceConflictModel { model, bank }));
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from [`sce_conflict_model_load`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sce_conflict_model_free(model: *mut SceConflictModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Match a clip against the 16 trainable labels. Writes the cosines in
/// label-id order to `scores` and the best label id (1-based) to `label`.
///
/// # Safety
/// As for [`sce_event_model_predict`], with room for 16 scores.
#[no_mangle]
pub unsafe extern "C" fn sce_conflict_model_predict(
    model: *const SceConflictModel,
    rgb: *const u8,
    frames: usize,
    height: usize,
    width: usize,
    scores: *mut f64,
    label: *mut u32,
) -> SceStatus {
    guard(|| {
        if model.is_null() || scores.is_null() || label.is_null() {
            return Err(fail(SceStatus::NullPointer, "model, scores and label must be non-NULL"));
        }
        let clip = read_clip(rgb, frames, height, width)?;
        let m = &*model;
        let p = infer_with_bank(&m.model, &m.bank, &clip).map_err(|e| Failure::from(CliError::from(e)))?;
        let out = std::slice::from_raw_parts_mut(scores, SCE_TRAINABLE_LABEL_COUNT);
        for &(id, s) in &p.ranked {
            out[id.index()] = s;
        }
        *label = u32::from(p.label.0);
        Ok(())
    })
}

unsafe fn text_metric(
    candidate: *const c_char,
    reference: *const c_char,
    out: *mut f64,
    f: fn(&str, &str) -> Result<f64, sce_core::metrics::MetricsError>,
) -> SceStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SceStatus::NullPointer, "out is NULL"));
        }
        let (c, r) = (read_str(candidate, "candidate")?, read_str(reference, "reference")?);
        *out = f(c, r).map_err(|e| fail(SceStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// ROUGE-L F1 between two texts.
///
/// # Safety
/// Both texts must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sce_rouge_l_f1(candidate: *const c_char, reference: *const c_char, out: *mut f64) -> SceStatus {
    text_metric(candidate, reference, out, rouge_l_f1)
}

/// METEOR between two texts.
///
/// # Safety
/// Both texts must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sce_meteor(candidate: *const c_char, reference: *const c_char, out: *mut f64) -> SceStatus {
    text_metric(candidate, reference, out, meteor)
}

/// Narrate a clip with the deterministic mock backend. `strategy` is an
/// [`SceStrategy`] value. `conflict_label` may
/// be NULL for normal driving. The final text is returned through `out` and
/// must be released with [`sce_string_free`].
///
/// # Safety
/// `rgb` must hold the whole clip, `conflict_label` must be NULL or
/// NUL-terminated, and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sce_narrate_mock(
    seed: u64,
    strategy: u32,
    rgb: *const u8,
    frames: usize,
    height: usize,
    width: usize,
    event_type: u32,
    conflict_label: *const c_char,
    out: *mut *mut c_char,
) -> SceStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(SceStatus::NullPointer, "out is NULL"));
        }
        let event_type = EventType::from_index(event_type as usize)
            .ok_or_else(|| fail(SceStatus::InvalidArgument, format!("event type {event_type} out of range")))?;
        let conflict_label = if conflict_label.is_null() {
            None
        } else {
            Some(read_str(conflict_label, "conflict_label")?.to_owned())
        };
        let job = NarrativeJob {
            event_id: "ffi".into(),
            frames: read_clip(rgb, frames, height, width)?,
            event_type,
            conflict_label,
        };
        let strategy = match strategy {
            s if s == SceStrategy::Direct as u32 => PromptStrategy::Direct,
            s if s == SceStrategy::ChainOfThought as u32 => PromptStrategy::ChainOfThought,
            s if s == SceStrategy::ChainOfThoughtRepeat as u32 => PromptStrategy::ChainOfThoughtRepeat,
            s => return Err(fail(SceStatus::InvalidArgument, format!("strategy {s} out of range"))),
        };
        let n = generate_narrative(&MockBackend::new(seed), &job, strategy)
            .map_err(|e| fail(SceStatus::Backend, e.to_string()))?;
        let text = CString::new(n.final_text).map_err(|_| fail(SceStatus::Backend, "narrative contains NUL"))?;
        *out = text.into_raw();
        Ok(())
    })
}
