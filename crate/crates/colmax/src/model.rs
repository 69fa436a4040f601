//! Core domain types: token vectors, multi-vector documents, precisions,
//! and similarity kinds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(pub Vec<f32>);

impl Vector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// L2 norm, accumulated in f64.
    pub fn l2_norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Deref for Vector {
    type Target = [f32];

    fn deref(&self) -> &[f32] {
        &self.0
    }
}

impl From<Vec<f32>> for Vector {
    fn from(values: Vec<f32>) -> Self {
        Vector(values)
    }
}

/// One document or query as a bag of token embeddings, stored flat
/// (token-major) for scoring.
///
/// Invariants, enforced at construction: non-empty id, at least one token,
/// uniform token dimension, all values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVector {
    id: String,
    dim: usize,
    data: Vec<f32>,
}

impl MultiVector {
    pub fn new(id: impl Into<String>, tokens: Vec<Vector>) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::EmptyTokens { id });
        }
        let dim = tokens[0].dim();
        let mut data = Vec::with_capacity(tokens.len() * dim);
        for t in &tokens {
            if t.dim() != dim {
                return Err(Error::DimMismatch {
                    context: format!("tokens of `{id}`"),
                    expected: dim,
                    found: t.dim(),
                });
            }
            data.extend_from_slice(t);
        }
        let mv = MultiVector { id, dim, data };
        mv.validate()?;
        Ok(mv)
    }

    /// Builds from a flat token-major buffer of `data.len() / dim` tokens.
    pub fn from_flat(id: impl Into<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        let id = id.into();
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimMismatch {
                context: format!("flat buffer for `{id}`"),
                expected: dim.max(1),
                found: data.len(),
            });
        }
        let mv = MultiVector { id, dim, data };
        mv.validate()?;
        Ok(mv)
    }

    /// Re-checks every construction invariant.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::EmptyId);
        }
        if self.data.is_empty() || self.dim == 0 {
            return Err(Error::EmptyTokens {
                id: self.id.clone(),
            });
        }
        if !self.data.len().is_multiple_of(self.dim) {
            return Err(Error::DimMismatch {
                context: format!("flat buffer for `{}`", self.id),
                expected: self.dim,
                found: self.data.len(),
            });
        }
        for (i, value) in self.data.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteValue {
                    id: self.id.clone(),
                    token: i / self.dim,
                    coord: i % self.dim,
                });
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn tokens(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f32] {
        &self.data
    }

    /// L2-normalizes each token in place; zero tokens are left untouched.
    pub fn normalize_tokens(&mut self) {
        for token in self.data.chunks_exact_mut(self.dim) {
            let norm = token
                .iter()
                .map(|&v| (v as f64) * (v as f64))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                for v in token.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
            }
        }
    }
}

/// Validates a multi-vector against all construction invariants.
pub fn validate_multivector(mv: &MultiVector) -> Result<()> {
    mv.validate()
}

/// Element encoding for stored token embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Fp32,
    Fp16,
    Int8,
    Binary,
}

impl Precision {
    pub const ALL: [Precision; 4] = [
        Precision::Fp32,
        Precision::Fp16,
        Precision::Int8,
        Precision::Binary,
    ];

    /// On-disk code byte.
    pub fn code(self) -> u8 {
        match self {
            Precision::Fp32 => 0,
            Precision::Fp16 => 1,
            Precision::Int8 => 2,
            Precision::Binary => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Precision::Fp32),
            1 => Ok(Precision::Fp16),
            2 => Ok(Precision::Int8),
            3 => Ok(Precision::Binary),
            other => Err(Error::InvalidInput(format!(
                "unknown precision code {other}"
            ))),
        }
    }

    /// Average storage cost of one element, in bytes. BINARY packs eight
    /// elements per byte; INT8 excludes the per-token scale, which
    /// [`Precision::token_bytes`] accounts for.
    pub fn bytes_per_element(self) -> f64 {
        match self {
            Precision::Fp32 => 4.0,
            Precision::Fp16 => 2.0,
            Precision::Int8 => 1.0,
            Precision::Binary => 0.125,
        }
    }

    /// Exact on-disk payload size of one token of `dim` elements.
    pub fn token_bytes(self, dim: usize) -> usize {
        match self {
            Precision::Fp32 => dim * 4,
            Precision::Fp16 => dim * 2,
            Precision::Int8 => 4 + dim,
            Precision::Binary => dim / 8,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Precision::Fp32 => "fp32",
            Precision::Fp16 => "fp16",
            Precision::Int8 => "int8",
            Precision::Binary => "binary",
        };
        f.write_str(s)
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" | "f32" => Ok(Precision::Fp32),
            "fp16" | "f16" => Ok(Precision::Fp16),
            "int8" | "i8" => Ok(Precision::Int8),
            "binary" | "bin" => Ok(Precision::Binary),
            other => Err(Error::InvalidInput(format!("unknown precision `{other}`"))),
        }
    }
}

/// Token-pair similarity used inside late-interaction scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Dot,
    Cosine,
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityKind::Dot => "dot",
            SimilarityKind::Cosine => "cosine",
        })
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(SimilarityKind::Dot),
            "cosine" | "cos" => Ok(SimilarityKind::Cosine),
            other => Err(Error::InvalidInput(format!("unknown similarity `{other}`"))),
        }
    }
}
