//! Storage footprint arithmetic for multi-vector corpora.
//!
//! The estimate models one image-sized document as `round(avg_tokens)`
//! token vectors of `dim` elements each. INT8 additionally pays a 4-byte
//! f32 scale per token. GiB means bytes / 2^30.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Precision;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageEstimate {
    pub n_docs: u64,
    pub avg_tokens: f64,
    pub dim: u32,
    pub precision: Precision,
    pub floats_per_image: u64,
    pub total_bytes: u64,
    pub total_gib: f64,
}

pub fn estimate_storage(
    n_docs: u64,
    avg_tokens: f64,
    dim: u32,
    precision: Precision,
) -> Result<StorageEstimate> {
    if n_docs == 0 {
        return Err(Error::InvalidInput("n_docs must be at least 1".to_string()));
    }
    if avg_tokens <= 0.0 || !avg_tokens.is_finite() {
        return Err(Error::InvalidInput(format!(
            "avg_tokens must be positive and finite, got {avg_tokens}"
        )));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("dim must be at least 1".to_string()));
    }
    let tokens = avg_tokens.round();
    let floats_per_image = tokens * dim as f64;
    let mut bytes_per_image = floats_per_image * precision.bytes_per_element();
    if precision == Precision::Int8 {
        bytes_per_image += tokens * 4.0;
    }
    let total = n_docs as f64 * bytes_per_image;
    let total_bytes = total.round() as u64;
    Ok(StorageEstimate {
        n_docs,
        avg_tokens,
        dim,
        precision,
        floats_per_image: floats_per_image as u64,
        total_bytes,
        total_gib: total_bytes as f64 / f64::from(1u32 << 30),
    })
}

impl StorageEstimate {
    /// GiB formatted to one decimal, e.g. "5897.5".
    pub fn gib_display(&self) -> String {
        format!("{:.1}", self.total_gib)
    }
}

/// Byte footprint of `reduced` as a percentage of `baseline`, rounded
/// half up to a whole percent.
pub fn storage_ratio(reduced: &StorageEstimate, baseline: &StorageEstimate) -> u32 {
    let pct = reduced.total_bytes as f64 / baseline.total_bytes as f64 * 100.0;
    (pct + 0.5).floor() as u32
}
