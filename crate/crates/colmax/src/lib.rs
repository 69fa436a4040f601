//! Late-interaction (multi-vector) visual-document retrieval engine and
//! data-curation toolkit.
//!
//! Documents and queries are bags of token embeddings. Retrieval scores a
//! query against a document as the sum over query tokens of the maximum
//! token-pair similarity, which preserves fine-grained matches that single
//! pooled vectors blur away. The flip side is storage: hundreds of vectors
//! per document instead of one. This crate packages the whole trade-off
//! loop: an exhaustive scoring engine, a quantizing on-disk index, PCA
//! dimension reduction, storage accounting, hard-negative mining and
//! cluster-based sampling for training-data curation, the contrastive loss
//! and checkpoint-merging math used to train such models, and an evaluation
//! harness with a synthetic planted-structure benchmark.

pub mod cli;
pub mod curation;
pub mod error;
pub mod eval;
pub mod maxsim;
pub mod model;
pub mod seed;
pub mod store;
pub mod training;

pub use error::{Error, Result};
pub use model::{MultiVector, Precision, SimilarityKind, Vector};
