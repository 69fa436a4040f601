//! C ABI over the colmax retrieval engine: opaque handles, integer status
//! codes, and a per-thread last-error message.
//!
//! Ownership rules: every `*_open`/`*_search` out-pointer hands the caller
//! an owned handle that must go back through the matching `*_free`. Strings
//! returned by accessors borrow from their handle and die with it.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, UnwindSafe};

use colmax::maxsim::{maxsim_score, search};
use colmax::model::{MultiVector, Precision, SimilarityKind};
use colmax::store::{estimate_storage, Index};

pub const COLMAX_OK: c_int = 0;
/// A required pointer argument was null.
pub const COLMAX_ERR_NULL_ARGUMENT: c_int = 1;
/// An argument failed validation before reaching the engine.
pub const COLMAX_ERR_INVALID_ARGUMENT: c_int = 2;
/// The engine rejected the operation; colmax_last_error has the detail.
pub const COLMAX_ERR_ENGINE: c_int = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn engine_error(err: colmax::Error) -> c_int {
    set_error(&format!("{}: {err}", err.code()));
    COLMAX_ERR_ENGINE
}

fn guard<F>(body: F) -> c_int
where
    F: FnOnce() -> c_int + UnwindSafe,
{
    match catch_unwind(body) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic");
            COLMAX_ERR_ENGINE
        }
    }
}

/// Opaque handle over a loaded index.
pub struct ColmaxIndex {
    inner: Index,
}

/// Opaque ranked-hit list produced by colmax_search.
pub struct ColmaxHits {
    ids: Vec<CString>,
    scores: Vec<f32>,
}

/// Message for the most recent failure on this thread. Empty string when no
/// failure has been recorded. The pointer stays valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn colmax_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn colmax_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opens an index file. On success writes an owned handle to `out_index`.
///
/// # Safety
/// `path` must point to a NUL-terminated string and `out_index` to writable
/// pointer storage.
#[no_mangle]
pub unsafe extern "C" fn colmax_index_open(
    path: *const c_char,
    out_index: *mut *mut ColmaxIndex,
) -> c_int {
    if path.is_null() || out_index.is_null() {
        set_error("null argument to colmax_index_open");
        return COLMAX_ERR_NULL_ARGUMENT;
    }
    let raw = CStr::from_ptr(path);
    guard(move || {
        let Ok(path) = raw.to_str() else {
            set_error("path is not valid UTF-8");
            return COLMAX_ERR_INVALID_ARGUMENT;
        };
        match Index::read(path) {
            Ok(inner) => {
                let handle = Box::new(ColmaxIndex { inner });
                unsafe { out_index.write(Box::into_raw(handle)) };
                COLMAX_OK
            }
            Err(e) => engine_error(e),
        }
    })
}

/// Releases an index handle. Null is a no-op.
///
/// # Safety
/// `index` must be a pointer from colmax_index_open, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn colmax_index_free(index: *mut ColmaxIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Number of documents, or 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle from colmax_index_open.
#[no_mangle]
pub unsafe extern "C" fn colmax_index_doc_count(index: *const ColmaxIndex) -> u64 {
    index.as_ref().map_or(0, |ix| ix.inner.doc_count() as u64)
}

/// Embedding dimension, or 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle from colmax_index_open.
#[no_mangle]
pub unsafe extern "C" fn colmax_index_dim(index: *const ColmaxIndex) -> u32 {
    index.as_ref().map_or(0, |ix| ix.inner.dim() as u32)
}

/// Payload precision code (0 fp32, 1 fp16, 2 int8, 3 binary), or 255 for a
/// null handle.
///
/// # Safety
/// `index` must be null or a live handle from colmax_index_open.
#[no_mangle]
pub unsafe extern "C" fn colmax_index_precision(index: *const ColmaxIndex) -> u8 {
    index
        .as_ref()
        .map_or(u8::MAX, |ix| ix.inner.precision().code())
}

/// MaxSim-ranks the whole index against one query and writes an owned hit
/// list to `out_hits`. `query` holds `token_count` tokens of `dim` floats
/// each, token-major.
///
/// # Safety
/// `index` must be a live handle, `query` must point to
/// `token_count * dim` floats, and `out_hits` to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn colmax_search(
    index: *const ColmaxIndex,
    query: *const f32,
    token_count: usize,
    dim: usize,
    k: usize,
    out_hits: *mut *mut ColmaxHits,
) -> c_int {
    if index.is_null() || query.is_null() || out_hits.is_null() {
        set_error("null argument to colmax_search");
        return COLMAX_ERR_NULL_ARGUMENT;
    }
    let Some(total) = token_count.checked_mul(dim).filter(|&n| n > 0) else {
        set_error("token_count and dim must be positive and in range");
        return COLMAX_ERR_INVALID_ARGUMENT;
    };
    let data = std::slice::from_raw_parts(query, total).to_vec();
    let ix = &(*index).inner;
    guard(move || {
        let query = match MultiVector::from_flat("query", dim, data) {
            Ok(q) => q,
            Err(e) => return engine_error(e),
        };
        let result = match search(&query, ix, k, SimilarityKind::Dot) {
            Ok(r) => r,
            Err(e) => return engine_error(e),
        };
        let mut ids = Vec::with_capacity(result.hits.len());
        let mut scores = Vec::with_capacity(result.hits.len());
        for hit in result.hits {
            match CString::new(hit.doc_id) {
                Ok(id) => ids.push(id),
                Err(_) => {
                    set_error("doc id contains an interior NUL byte");
                    return COLMAX_ERR_ENGINE;
                }
            }
            scores.push(hit.score);
        }
        let handle = Box::new(ColmaxHits { ids, scores });
        unsafe { out_hits.write(Box::into_raw(handle)) };
        COLMAX_OK
    })
}

/// Number of hits, or 0 for a null handle.
///
/// # Safety
/// `hits` must be null or a live handle from colmax_search.
#[no_mangle]
pub unsafe extern "C" fn colmax_hits_len(hits: *const ColmaxHits) -> usize {
    hits.as_ref().map_or(0, |h| h.ids.len())
}

/// Borrowed doc id of hit `i`, or null when out of range. Valid while the
/// hit list is alive.
///
/// # Safety
/// `hits` must be null or a live handle from colmax_search.
#[no_mangle]
pub unsafe extern "C" fn colmax_hits_doc_id(hits: *const ColmaxHits, i: usize) -> *const c_char {
    hits.as_ref()
        .and_then(|h| h.ids.get(i))
        .map_or(std::ptr::null(), |id| id.as_ptr())
}

/// Score of hit `i`, or NaN when out of range.
///
/// # Safety
/// `hits` must be null or a live handle from colmax_search.
#[no_mangle]
pub unsafe extern "C" fn colmax_hits_score(hits: *const ColmaxHits, i: usize) -> f32 {
    hits.as_ref()
        .and_then(|h| h.scores.get(i))
        .copied()
        .unwrap_or(f32::NAN)
}

/// Releases a hit list. Null is a no-op.
///
/// # Safety
/// `hits` must be a pointer from colmax_search, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn colmax_hits_free(hits: *mut ColmaxHits) {
    if !hits.is_null() {
        drop(Box::from_raw(hits));
    }
}

/// Late-interaction score of one query against one document, dot-product
/// token similarity. Both buffers are token-major with `dim` floats per
/// token.
///
/// # Safety
/// `query` must point to `query_tokens * dim` floats, `doc` to
/// `doc_tokens * dim` floats, and `out_score` to a writable float.
#[no_mangle]
pub unsafe extern "C" fn colmax_maxsim_score(
    query: *const f32,
    query_tokens: usize,
    doc: *const f32,
    doc_tokens: usize,
    dim: usize,
    out_score: *mut f32,
) -> c_int {
    if query.is_null() || doc.is_null() || out_score.is_null() {
        set_error("null argument to colmax_maxsim_score");
        return COLMAX_ERR_NULL_ARGUMENT;
    }
    let sizes = (
        query_tokens.checked_mul(dim).filter(|&n| n > 0),
        doc_tokens.checked_mul(dim).filter(|&n| n > 0),
    );
    let (Some(q_len), Some(d_len)) = sizes else {
        set_error("token counts and dim must be positive and in range");
        return COLMAX_ERR_INVALID_ARGUMENT;
    };
    let q_data = std::slice::from_raw_parts(query, q_len).to_vec();
    let d_data = std::slice::from_raw_parts(doc, d_len).to_vec();
    guard(move || {
        let score = MultiVector::from_flat("query", dim, q_data).and_then(|q| {
            let d = MultiVector::from_flat("doc", dim, d_data)?;
            maxsim_score(&q, &d, SimilarityKind::Dot)
        });
        match score {
            Ok(s) => {
                unsafe { out_score.write(s) };
                COLMAX_OK
            }
            Err(e) => engine_error(e),
        }
    })
}

/// Storage footprint in GiB for a corpus of `docs` documents averaging
/// `avg_tokens` tokens at `dim` dims under precision code `precision`
/// (0 fp32, 1 fp16, 2 int8, 3 binary).
///
/// # Safety
/// `out_gib` must point to a writable double.
#[no_mangle]
pub unsafe extern "C" fn colmax_estimate_storage_gib(
    docs: u64,
    avg_tokens: f64,
    dim: u32,
    precision: u8,
    out_gib: *mut f64,
) -> c_int {
    if out_gib.is_null() {
        set_error("null argument to colmax_estimate_storage_gib");
        return COLMAX_ERR_NULL_ARGUMENT;
    }
    guard(move || {
        let precision = match Precision::from_code(precision) {
            Ok(p) => p,
            Err(_) => {
                set_error("precision code must be 0..=3");
                return COLMAX_ERR_INVALID_ARGUMENT;
            }
        };
        match estimate_storage(docs, avg_tokens, dim, precision) {
            Ok(estimate) => {
                unsafe { out_gib.write(estimate.total_gib) };
                COLMAX_OK
            }
            Err(e) => engine_error(e),
        }
    })
}
