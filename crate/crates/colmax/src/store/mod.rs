//! Persistence: quantized token payloads, the on-disk index format,
//! PCA dimension reduction, and storage accounting.

pub mod format;
pub mod projection;
pub mod quantize;
pub mod storage;

pub use format::Index;
pub use projection::{apply_projection, fit_projection, ProjectionMatrix};
pub use quantize::{dequantize_token, quantize_token, quantize_tokens};
pub use storage::{estimate_storage, storage_ratio, StorageEstimate};
