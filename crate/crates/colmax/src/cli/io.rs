//! Input readers shared by the subcommands. Token collections arrive either
//! as a CMX index or as JSONL with one {"id", "tokens"} record per line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{MultiVector, Vector};
use crate::store::Index;

#[derive(Deserialize)]
struct JsonDoc {
    id: String,
    tokens: Vec<Vec<f32>>,
}

/// Teacher similarity scores for one query, candidates keyed by doc id.
/// The positive must appear among the candidates.
#[derive(Deserialize)]
pub struct CandidateScores {
    pub query_id: String,
    pub positive_id: String,
    pub candidates: BTreeMap<String, f64>,
}

pub fn is_cmx(path: &Path) -> Result<bool> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    match file.read_exact(&mut magic) {
        Ok(()) => Ok(&magic == b"CMX1"),
        // Shorter than a magic header: not a CMX file.
        Err(_) => Ok(false),
    }
}

/// Reads documents from a CMX index (decoded values) or a JSONL file.
pub fn read_multivectors(path: &Path) -> Result<Vec<MultiVector>> {
    if is_cmx(path)? {
        return Ok(Index::read(path)?.to_multivectors());
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: JsonDoc = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
        let tokens: Vec<Vector> = doc.tokens.into_iter().map(Vector).collect();
        docs.push(MultiVector::new(&doc.id, tokens)?);
    }
    if docs.is_empty() {
        return Err(Error::format(path, "no documents"));
    }
    Ok(docs)
}

pub fn read_candidate_scores(path: &Path) -> Result<Vec<CandidateScores>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: CandidateScores = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "no score records"));
    }
    Ok(rows)
}
