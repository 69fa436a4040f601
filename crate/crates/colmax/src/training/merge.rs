//! Weighted-average model merging ("souping") over named parameter sets.
//!
//! Tensors live in f64 in memory so merge order is irrelevant far below
//! test tolerances; the on-disk container stores fp32 little-endian blobs
//! behind a JSON manifest of names and shapes.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(Error::InvalidInput(format!(
                "tensor shape {shape:?} does not match {} elements",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "tensor contains non-finite values".to_string(),
            ));
        }
        Ok(Tensor { shape, data })
    }
}

/// A named set of parameter tensors, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    params: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::EmptyId);
        }
        self.params.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Writes `u64 LE manifest length | JSON manifest | fp32 LE blob`.
    /// Blob order follows the manifest, which lists tensors by name.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let manifest = Manifest {
            params: self
                .params
                .iter()
                .map(|(name, t)| ManifestEntry {
                    name: name.clone(),
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let manifest_json = serde_json::to_vec(&manifest)
            .map_err(|e| Error::format(path, format!("serialize manifest: {e}")))?;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        w.write_all(&(manifest_json.len() as u64).to_le_bytes())
            .and_then(|_| w.write_all(&manifest_json))
            .map_err(|e| Error::io(path, e))?;
        for t in self.params.values() {
            for &v in &t.data {
                w.write_all(&(v as f32).to_le_bytes())
                    .map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut len_bytes = [0u8; 8];
        file.read_exact(&mut len_bytes)
            .map_err(|e| Error::io(path, e))?;
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let mut manifest_json = vec![0u8; manifest_len];
        file.read_exact(&mut manifest_json)
            .map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_slice(&manifest_json)
            .map_err(|e| Error::format(path, format!("bad manifest: {e}")))?;
        let mut blob = Vec::new();
        file.read_to_end(&mut blob)
            .map_err(|e| Error::io(path, e))?;

        let mut set = ParamSet::new();
        let mut offset = 0usize;
        for entry in manifest.params {
            let count: usize = entry.shape.iter().product();
            let bytes = count * 4;
            if offset + bytes > blob.len() {
                return Err(Error::format(
                    path,
                    format!("blob too short for tensor `{}`", entry.name),
                ));
            }
            let data: Vec<f64> = blob[offset..offset + bytes]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            offset += bytes;
            set.insert(entry.name, Tensor::new(entry.shape, data)?)?;
        }
        if offset != blob.len() {
            return Err(Error::format(path, "trailing bytes after last tensor"));
        }
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    params: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

/// Members plus normalized non-negative weights.
#[derive(Debug, Clone)]
pub struct MergeSpec {
    members: Vec<ParamSet>,
    weights: Vec<f64>,
}

impl MergeSpec {
    /// `weights = None` means uniform. Weights must be non-negative with a
    /// positive sum; they are normalized to sum to 1 on construction.
    pub fn new(members: Vec<ParamSet>, weights: Option<Vec<f64>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput(
                "merge needs at least one member".to_string(),
            ));
        }
        let weights = match weights {
            None => vec![1.0 / members.len() as f64; members.len()],
            Some(w) => {
                if w.len() != members.len() {
                    return Err(Error::InvalidInput(format!(
                        "{} weights for {} members",
                        w.len(),
                        members.len()
                    )));
                }
                if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                    return Err(Error::InvalidInput(
                        "weights must be non-negative and finite".to_string(),
                    ));
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidInput("weights sum to zero".to_string()));
                }
                w.iter().map(|x| x / total).collect()
            }
        };
        Ok(MergeSpec { members, weights })
    }

    pub fn members(&self) -> &[ParamSet] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Elementwise weighted average across members. Zero-weight members are
/// skipped entirely, so a one-hot weighting returns that member exactly.
pub fn merge_models(spec: &MergeSpec) -> Result<ParamSet> {
    let first = &spec.members[0];
    for m in &spec.members[1..] {
        if m.len() != first.len() || !m.names().eq(first.names()) {
            return Err(Error::NameSetMismatch);
        }
        for (name, t) in m.iter() {
            if t.shape != first.get(name).expect("name checked").shape {
                return Err(Error::ShapeMismatch {
                    name: name.to_string(),
                });
            }
        }
    }

    let mut out = ParamSet::new();
    for (name, proto) in first.iter() {
        let mut acc = vec![0.0f64; proto.data.len()];
        for (member, &w) in spec.members.iter().zip(&spec.weights) {
            if w == 0.0 {
                continue;
            }
            let t = member.get(name).expect("name checked");
            for (a, &v) in acc.iter_mut().zip(&t.data) {
                *a += w * v;
            }
        }
        out.insert(name, Tensor::new(proto.shape.clone(), acc)?)?;
    }
    Ok(out)
}
