//! The on-disk multi-vector index and its in-memory handle.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! header (20 bytes)
//!   magic      4 bytes  "CMX1"
//!   version    u16      currently 1
//!   dim        u32
//!   precision  u8       0 = fp32, 1 = fp16, 2 = int8, 3 = binary
//!   normalized u8       1 if tokens were L2-normalized at build time
//!   doc_count  u64
//! doc table, one entry per document in payload order
//!   id_len         u16
//!   id             id_len bytes of UTF-8
//!   token_count    u32
//!   payload_offset u64   byte offset into the payload blob, strictly increasing
//! payload blob
//!   doc_count concatenated per-document payloads; each document is
//!   token_count fixed-size token payloads (see the quantize module)
//! ```
//!
//! The handle keeps the raw quantized payload as the write source of
//! truth (so write -> read -> write is byte-identical) plus decoded f32
//! tokens and pooled per-document embeddings for scoring.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{MultiVector, Precision, Vector};
use crate::store::quantize::{dequantize_token, quantize_tokens};

pub const MAGIC: [u8; 4] = *b"CMX1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone)]
pub struct Index {
    dim: usize,
    precision: Precision,
    normalized: bool,
    doc_ids: Vec<String>,
    token_counts: Vec<u32>,
    /// Per-doc byte offsets into `payload`, plus a trailing end offset.
    payload_offsets: Vec<u64>,
    payload: Vec<u8>,
    /// Decoded token values, doc-major then token-major.
    decoded: Vec<f32>,
    /// Per-doc float offsets into `decoded`, plus a trailing end offset.
    decoded_offsets: Vec<usize>,
    /// Pooled embedding per doc (unit norm, or all zeros for a zero-mean doc).
    pooled: Vec<f32>,
    by_id: HashMap<String, usize>,
}

impl Index {
    /// Quantizes and indexes `docs` in the given order. With `normalize`,
    /// tokens are L2-normalized before quantization (zero tokens pass
    /// through unchanged).
    pub fn build(
        docs: impl IntoIterator<Item = MultiVector>,
        precision: Precision,
        normalize: bool,
    ) -> Result<Self> {
        let mut dim = 0usize;
        let mut doc_ids = Vec::new();
        let mut token_counts = Vec::new();
        let mut payload_offsets = vec![0u64];
        let mut payload = Vec::new();
        let mut decoded = Vec::new();
        let mut decoded_offsets = vec![0usize];
        let mut pooled = Vec::new();
        let mut by_id = HashMap::new();

        for mut doc in docs {
            if doc_ids.is_empty() {
                dim = doc.dim();
                if precision == Precision::Binary && !dim.is_multiple_of(8) {
                    return Err(Error::BinaryDimNotByteAligned { dim });
                }
            } else if doc.dim() != dim {
                return Err(Error::DimMismatch {
                    context: format!("document `{}`", doc.id()),
                    expected: dim,
                    found: doc.dim(),
                });
            }
            if doc.id().len() > u16::MAX as usize {
                return Err(Error::InvalidInput(format!(
                    "document id longer than {} bytes",
                    u16::MAX
                )));
            }
            if by_id.insert(doc.id().to_string(), doc_ids.len()).is_some() {
                return Err(Error::DuplicateId {
                    id: doc.id().to_string(),
                });
            }
            if normalize {
                doc.normalize_tokens();
            }
            let (doc_payload, doc_decoded) = quantize_tokens(&doc, precision)?;
            payload.extend_from_slice(&doc_payload);
            payload_offsets.push(payload.len() as u64);
            decoded.extend_from_slice(doc_decoded.flat());
            decoded_offsets.push(decoded.len());
            pooled.extend(pooled_or_zero(&doc_decoded));
            token_counts.push(doc.token_count() as u32);
            doc_ids.push(doc.id().to_string());
        }
        if doc_ids.is_empty() {
            return Err(Error::EmptyIndex);
        }
        Ok(Index {
            dim,
            precision,
            normalized: normalize,
            doc_ids,
            token_counts,
            payload_offsets,
            payload,
            decoded,
            decoded_offsets,
            pooled,
            by_id,
        })
    }

    /// Builds and writes in one step, returning the in-memory handle.
    pub fn build_to_path(
        docs: impl IntoIterator<Item = MultiVector>,
        precision: Precision,
        normalize: bool,
        path: impl AsRef<Path>,
    ) -> Result<Self> {
        let index = Index::build(docs, precision, normalize)?;
        index.write(path)?;
        Ok(index)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.push(self.precision.code());
        out.push(self.normalized as u8);
        out.extend_from_slice(&(self.doc_ids.len() as u64).to_le_bytes());
        for i in 0..self.doc_ids.len() {
            let id = self.doc_ids[i].as_bytes();
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id);
            out.extend_from_slice(&self.token_counts[i].to_le_bytes());
            out.extend_from_slice(&self.payload_offsets[i].to_le_bytes());
        }
        out.extend_from_slice(&self.payload);
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&out).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Index::from_bytes(&bytes).map_err(|e| match e {
            Error::InvalidInput(reason) => Error::format(path, reason),
            other => other,
        })
    }

    /// Parses a serialized index. Every structural invariant is checked:
    /// magic, version, precision code, dim, offset monotonicity and
    /// consistency with token counts, id uniqueness, payload length, and
    /// finiteness of decoded values.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |reason: &str| Error::InvalidInput(reason.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(fail("file shorter than header"));
        }
        if bytes[0..4] != MAGIC {
            return Err(fail("bad magic, not an index file"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported version {version}"
            )));
        }
        let dim = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        if dim == 0 {
            return Err(fail("dim is zero"));
        }
        let precision = Precision::from_code(bytes[10])
            .map_err(|_| Error::InvalidInput(format!("unknown precision code {}", bytes[10])))?;
        if precision == Precision::Binary && !dim.is_multiple_of(8) {
            return Err(Error::BinaryDimNotByteAligned { dim });
        }
        let normalized = match bytes[11] {
            0 => false,
            1 => true,
            other => {
                return Err(Error::InvalidInput(format!(
                    "normalized flag must be 0 or 1, got {other}"
                )))
            }
        };
        let doc_count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if doc_count == 0 {
            return Err(fail("index contains no documents"));
        }

        let token_bytes = precision.token_bytes(dim) as u64;
        let mut pos = HEADER_LEN;
        let mut doc_ids = Vec::with_capacity(doc_count);
        let mut token_counts = Vec::with_capacity(doc_count);
        let mut payload_offsets = Vec::with_capacity(doc_count + 1);
        let mut by_id = HashMap::with_capacity(doc_count);
        let mut expected_offset = 0u64;
        for i in 0..doc_count {
            if bytes.len() < pos + 2 {
                return Err(fail("truncated doc table"));
            }
            let id_len = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as usize;
            pos += 2;
            if bytes.len() < pos + id_len + 4 + 8 {
                return Err(fail("truncated doc table"));
            }
            let id = std::str::from_utf8(&bytes[pos..pos + id_len])
                .map_err(|_| fail("doc id is not valid UTF-8"))?
                .to_string();
            pos += id_len;
            if id.is_empty() {
                return Err(fail("empty doc id"));
            }
            let token_count = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
            pos += 4;
            if token_count == 0 {
                return Err(Error::InvalidInput(format!(
                    "document `{id}` has zero tokens"
                )));
            }
            let offset = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            pos += 8;
            if offset != expected_offset {
                return Err(Error::InvalidInput(format!(
                    "payload offset of doc {i} is {offset}, expected {expected_offset}"
                )));
            }
            expected_offset = offset + token_count as u64 * token_bytes;
            if by_id.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId { id });
            }
            payload_offsets.push(offset);
            token_counts.push(token_count);
            doc_ids.push(id);
        }
        payload_offsets.push(expected_offset);
        let payload = &bytes[pos..];
        if payload.len() as u64 != expected_offset {
            return Err(Error::InvalidInput(format!(
                "payload is {} bytes, doc table requires {expected_offset}",
                payload.len()
            )));
        }

        let mut decoded = Vec::new();
        let mut decoded_offsets = vec![0usize];
        let mut pooled = Vec::with_capacity(doc_count * dim);
        for i in 0..doc_count {
            let start = payload_offsets[i] as usize;
            let end = payload_offsets[i + 1] as usize;
            let doc_payload = &payload[start..end];
            let mut doc_decoded = Vec::with_capacity(token_counts[i] as usize * dim);
            for token_payload in doc_payload.chunks_exact(token_bytes as usize) {
                doc_decoded.extend(dequantize_token(token_payload, dim, precision)?);
            }
            if doc_decoded.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "document `{}` decodes to non-finite values",
                    doc_ids[i]
                )));
            }
            let mv = MultiVector::from_flat(doc_ids[i].clone(), dim, doc_decoded)?;
            pooled.extend(pooled_or_zero(&mv));
            decoded.extend_from_slice(mv.flat());
            decoded_offsets.push(decoded.len());
        }

        Ok(Index {
            dim,
            precision,
            normalized,
            doc_ids,
            token_counts,
            payload_offsets,
            payload: payload.to_vec(),
            decoded,
            decoded_offsets,
            pooled,
            by_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_id(&self, i: usize) -> &str {
        &self.doc_ids[i]
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn token_count(&self, i: usize) -> usize {
        self.token_counts[i] as usize
    }

    pub fn mean_token_count(&self) -> f64 {
        let total: u64 = self.token_counts.iter().map(|&c| c as u64).sum();
        total as f64 / self.doc_count() as f64
    }

    /// Decoded token values of doc `i`, token-major.
    pub fn doc_tokens(&self, i: usize) -> &[f32] {
        &self.decoded[self.decoded_offsets[i]..self.decoded_offsets[i + 1]]
    }

    /// Pooled embedding of doc `i`. All zeros for a zero-mean document.
    pub fn pooled(&self, i: usize) -> &[f32] {
        &self.pooled[i * self.dim..(i + 1) * self.dim]
    }

    /// Materializes doc `i` as a multi-vector of decoded values.
    pub fn doc_multivector(&self, i: usize) -> MultiVector {
        MultiVector::from_flat(
            self.doc_ids[i].clone(),
            self.dim,
            self.doc_tokens(i).to_vec(),
        )
        .expect("decoded documents are validated at construction")
    }

    /// All documents as decoded multi-vectors, in index order.
    pub fn to_multivectors(&self) -> Vec<MultiVector> {
        (0..self.doc_count())
            .map(|i| self.doc_multivector(i))
            .collect()
    }

    /// Pooled embeddings paired with doc ids, in index order.
    pub fn pooled_vectors(&self) -> Vec<(String, Vector)> {
        (0..self.doc_count())
            .map(|i| (self.doc_ids[i].clone(), Vector(self.pooled(i).to_vec())))
            .collect()
    }

    /// Re-encodes the decoded documents at another precision.
    pub fn requantize(&self, precision: Precision) -> Result<Index> {
        Index::build(self.to_multivectors(), precision, false)
    }
}

/// Pooled embedding, or all zeros when the token mean is the zero vector.
fn pooled_or_zero(mv: &MultiVector) -> Vec<f32> {
    match crate::maxsim::pooled_embedding(mv) {
        Ok(v) => v.0,
        Err(_) => vec![0.0; mv.dim()],
    }
}
