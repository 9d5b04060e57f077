//! C ABI over the transduction model: load a checkpoint into an opaque
//! handle, then score or decode sentences.  Every entry point returns a
//! status code, never unwinds, and touches caller memory only through
//! the provided pointers.

use equitrans::data::{builtin_lexicon, TokenId, Vocabulary};
use equitrans::tensor::{read_meta, Graph, ParamStore, Real};
use equitrans::train::load_trained;
use equitrans::transducer::HardAlignmentModel;
use libc::{c_char, c_double, size_t};
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result of every API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqtStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The checkpoint could not be read or rebuilt into a model.
    LoadFailed = 3,
    /// A sentence contained a word outside the vocabulary, or was empty.
    BadSentence = 4,
    /// Beam search exhausted its length budget without terminating.
    DecodeFailed = 5,
    /// The output buffer is too small; retry with the reported size.
    BufferTooSmall = 6,
    /// An internal invariant failed.
    Internal = 7,
}

enum Precision {
    F32(ParamStore<f32>),
    F64(ParamStore<f64>),
}

/// Opaque model handle: a checkpointed model plus its vocabularies.
pub struct EqtModel {
    model: HardAlignmentModel,
    store: Precision,
    in_vocab: Vocabulary,
    out_vocab: Vocabulary,
}

fn tokenize(sentence: &str, vocab: &Vocabulary) -> Result<Vec<TokenId>, EqtStatus> {
    let mut ids = Vec::new();
    for word in sentence.split_whitespace() {
        ids.push(vocab.id_of(word).ok_or(EqtStatus::BadSentence)?);
    }
    if ids.is_empty() {
        return Err(EqtStatus::BadSentence);
    }
    ids.push(vocab.eos());
    Ok(ids)
}

unsafe fn str_arg<'a>(ptr: *const c_char) -> Result<&'a str, EqtStatus> {
    if ptr.is_null() {
        return Err(EqtStatus::NullArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| EqtStatus::InvalidUtf8)
}

fn guarded(body: impl FnOnce() -> EqtStatus) -> EqtStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(EqtStatus::Internal)
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eqt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn eqt_status_message(status: EqtStatus) -> *const c_char {
    let msg: &'static str = match status {
        EqtStatus::Ok => "ok\0",
        EqtStatus::NullArgument => "null pointer argument\0",
        EqtStatus::InvalidUtf8 => "argument is not valid UTF-8\0",
        EqtStatus::LoadFailed => "checkpoint could not be loaded\0",
        EqtStatus::BadSentence => "sentence is empty or has out-of-vocabulary words\0",
        EqtStatus::DecodeFailed => "decoding did not terminate within the length budget\0",
        EqtStatus::BufferTooSmall => "output buffer too small\0",
        EqtStatus::Internal => "internal error\0",
    };
    msg.as_ptr() as *const c_char
}

fn load(path: &Path) -> Result<EqtModel, EqtStatus> {
    let meta = read_meta(path).map_err(|_| EqtStatus::LoadFailed)?;
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let f64_ckpt = meta.get("precision").map(String::as_str) == Some("f64");
    let (model, store) = if f64_ckpt {
        let (model, store, _) =
            load_trained::<f64>(path).map_err(|_| EqtStatus::LoadFailed)?;
        (model, Precision::F64(store))
    } else {
        let (model, store, _) =
            load_trained::<f32>(path).map_err(|_| EqtStatus::LoadFailed)?;
        (model, Precision::F32(store))
    };
    Ok(EqtModel { model, store, in_vocab, out_vocab })
}

/// Load a checkpoint written by the trainer.  On success `*out` owns the
/// handle; release it with `eqt_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eqt_model_load(
    path: *const c_char,
    out: *mut *mut EqtModel,
) -> EqtStatus {
    if out.is_null() {
        return EqtStatus::NullArgument;
    }
    let path = match str_arg(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    guarded(|| match load(Path::new(path)) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(model));
            EqtStatus::Ok
        }
        Err(s) => s,
    })
}

/// Release a handle returned by `eqt_model_load`.  Null is a no-op.
///
/// # Safety
/// `model` must be a pointer from `eqt_model_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eqt_model_free(model: *mut EqtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of group elements the loaded model is equivariant under.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqt_model_group_order(model: *const EqtModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).model.class_map().group().order()
}

fn log_likelihood_value<T: Real>(
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    x: &[TokenId],
    y: &[TokenId],
) -> Result<f64, EqtStatus> {
    let graph = Graph::<T>::new();
    let ll = model.log_likelihood(&graph, store, x, y).map_err(|_| EqtStatus::BadSentence)?;
    graph.item(ll).to_f64().ok_or(EqtStatus::Internal)
}

/// Log-likelihood of an output sentence given an input sentence, both as
/// space-separated words without terminators.
///
/// # Safety
/// `model` must be a live handle; strings NUL-terminated; `out_ll` valid.
#[no_mangle]
pub unsafe extern "C" fn eqt_log_likelihood(
    model: *const EqtModel,
    input: *const c_char,
    output: *const c_char,
    out_ll: *mut c_double,
) -> EqtStatus {
    if model.is_null() || out_ll.is_null() {
        return EqtStatus::NullArgument;
    }
    let (input, output) = match (str_arg(input), str_arg(output)) {
        (Ok(i), Ok(o)) => (i, o),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    let handle = &*model;
    guarded(|| {
        let x = match tokenize(input, &handle.in_vocab) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let y = match tokenize(output, &handle.out_vocab) {
            Ok(y) => y,
            Err(s) => return s,
        };
        let ll = match &handle.store {
            Precision::F32(store) => log_likelihood_value(&handle.model, store, &x, &y),
            Precision::F64(store) => log_likelihood_value(&handle.model, store, &x, &y),
        };
        match ll {
            Ok(v) => {
                *out_ll = v;
                EqtStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Beam-decode an input sentence.  The decoded words are written to
/// `buf` as a NUL-terminated string and `*written` is set to the byte
/// count including the NUL.  When the buffer is too small the status is
/// `BufferTooSmall` and `*written` holds the required size.
///
/// # Safety
/// `model` must be a live handle; `input` NUL-terminated; `buf` must
/// point to at least `buf_len` writable bytes; `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn eqt_decode(
    model: *const EqtModel,
    input: *const c_char,
    beam_width: size_t,
    max_len: size_t,
    buf: *mut c_char,
    buf_len: size_t,
    written: *mut size_t,
) -> EqtStatus {
    if model.is_null() || buf.is_null() || written.is_null() {
        return EqtStatus::NullArgument;
    }
    let input = match str_arg(input) {
        Ok(i) => i,
        Err(s) => return s,
    };
    let handle = &*model;
    guarded(|| {
        let x = match tokenize(input, &handle.in_vocab) {
            Ok(x) => x,
            Err(s) => return s,
        };
        if beam_width == 0 {
            return EqtStatus::BadSentence;
        }
        let decoded = match &handle.store {
            Precision::F32(store) => handle.model.decode_beam(store, &x, beam_width, max_len),
            Precision::F64(store) => handle.model.decode_beam(store, &x, beam_width, max_len),
        };
        let tokens = match decoded {
            Ok(t) => t,
            Err(_) => return EqtStatus::DecodeFailed,
        };
        let words: Vec<&str> = tokens.iter().map(|&t| handle.out_vocab.token(t)).collect();
        let text = CString::new(words.join(" ")).expect("tokens have no NUL");
        let bytes = text.as_bytes_with_nul();
        *written = bytes.len();
        if bytes.len() > buf_len {
            return EqtStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
        EqtStatus::Ok
    })
}
