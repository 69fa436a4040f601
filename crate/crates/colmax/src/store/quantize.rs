//! Token payload encodings: FP32, FP16, per-token symmetric INT8, and
//! sign-bit BINARY.
//!
//! Each precision defines an exact byte layout (little-endian throughout)
//! and a decode back to f32. Scoring always runs over decoded values, so
//! quantization error shows up in scores exactly as it does on disk.

use half::f16;

use crate::error::{Error, Result};
use crate::model::{MultiVector, Precision};

/// Sign rule for BINARY: one bit per element, set iff the value is
/// strictly positive. Usable at any dim; only packed payloads require
/// byte alignment.
pub fn binary_signs(token: &[f32]) -> Vec<bool> {
    token.iter().map(|&v| v > 0.0).collect()
}

/// BINARY decode of one bit at dimension `dim`: +1/sqrt(dim) for a set
/// bit, -1/sqrt(dim) otherwise, so decoded tokens have unit norm.
pub fn binary_decode_value(bit: bool, dim: usize) -> f32 {
    let mag = 1.0 / (dim as f32).sqrt();
    if bit {
        mag
    } else {
        -mag
    }
}

/// INT8 per-token scale: absmax / 127, as f32. Zero for an all-zero token.
pub fn int8_scale(token: &[f32]) -> f32 {
    let absmax = token.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    absmax / 127.0
}

/// Encodes one token. Payload sizes match [`Precision::token_bytes`].
pub fn quantize_token(token: &[f32], precision: Precision) -> Result<Vec<u8>> {
    let dim = token.len();
    match precision {
        Precision::Fp32 => {
            let mut out = Vec::with_capacity(dim * 4);
            for &v in token {
                out.extend_from_slice(&v.to_le_bytes());
            }
            Ok(out)
        }
        Precision::Fp16 => {
            let mut out = Vec::with_capacity(dim * 2);
            for &v in token {
                out.extend_from_slice(&f16::from_f32(v).to_le_bytes());
            }
            Ok(out)
        }
        Precision::Int8 => {
            let scale = int8_scale(token);
            let mut out = Vec::with_capacity(4 + dim);
            out.extend_from_slice(&scale.to_le_bytes());
            for &v in token {
                let q = if scale == 0.0 {
                    0.0
                } else {
                    (v as f64 / scale as f64).round().clamp(-127.0, 127.0)
                };
                out.push((q as i8) as u8);
            }
            Ok(out)
        }
        Precision::Binary => {
            if !dim.is_multiple_of(8) {
                return Err(Error::BinaryDimNotByteAligned { dim });
            }
            let mut out = vec![0u8; dim / 8];
            for (i, &v) in token.iter().enumerate() {
                if v > 0.0 {
                    out[i / 8] |= 1 << (i % 8);
                }
            }
            Ok(out)
        }
    }
}

/// Decodes one token payload back to f32 values.
pub fn dequantize_token(payload: &[u8], dim: usize, precision: Precision) -> Result<Vec<f32>> {
    let expected = precision.token_bytes(dim);
    if payload.len() != expected {
        return Err(Error::InvalidInput(format!(
            "token payload is {} bytes, {precision} at dim {dim} needs {expected}",
            payload.len()
        )));
    }
    match precision {
        Precision::Fp32 => Ok(payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect()),
        Precision::Fp16 => Ok(payload
            .chunks_exact(2)
            .map(|b| f16::from_le_bytes([b[0], b[1]]).to_f32())
            .collect()),
        Precision::Int8 => {
            let scale = f32::from_le_bytes([payload[0], payload[1], payload[2], payload[3]]);
            Ok(payload[4..]
                .iter()
                .map(|&b| (b as i8) as f32 * scale)
                .collect())
        }
        Precision::Binary => {
            if !dim.is_multiple_of(8) {
                return Err(Error::BinaryDimNotByteAligned { dim });
            }
            let mut out = Vec::with_capacity(dim);
            for i in 0..dim {
                let bit = payload[i / 8] & (1 << (i % 8)) != 0;
                out.push(binary_decode_value(bit, dim));
            }
            Ok(out)
        }
    }
}

/// Quantizes every token of a multi-vector. Returns the concatenated
/// payload and the decoded multi-vector the payload scores as.
pub fn quantize_tokens(mv: &MultiVector, precision: Precision) -> Result<(Vec<u8>, MultiVector)> {
    let dim = mv.dim();
    if precision == Precision::Binary && !dim.is_multiple_of(8) {
        return Err(Error::BinaryDimNotByteAligned { dim });
    }
    let mut payload = Vec::with_capacity(mv.token_count() * precision.token_bytes(dim));
    let mut decoded = Vec::with_capacity(mv.token_count() * dim);
    for token in mv.tokens() {
        let bytes = quantize_token(token, precision)?;
        decoded.extend(dequantize_token(&bytes, dim, precision)?);
        payload.extend(bytes);
    }
    let decoded_mv = MultiVector::from_flat(mv.id(), dim, decoded)?;
    Ok((payload, decoded_mv))
}
