//! Hard-negative mining with a positive-aware similarity ceiling.
//!
//! Candidates scoring at or above `threshold * sim(positive)` are too
//! close to the positive to be trustworthy negatives (they are often
//! unlabeled duplicates), so only candidates strictly below the cutoff
//! qualify.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NEGATIVE_THRESHOLD: f64 = 0.95;

/// One training example: a query, its positive, and mined negatives, with
/// the teacher similarity recorded for each retained document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTriplet {
    pub query_id: String,
    pub positive_id: String,
    pub negative_ids: Vec<String>,
    pub scores: BTreeMap<String, f64>,
}

/// Selects up to `k` hard negatives for one query from teacher
/// similarities. Keeps candidates with sim strictly below
/// `threshold * sim(positive)`, ranked by descending sim with ascending
/// doc id breaking ties.
pub fn mine_hard_negatives(
    query_id: &str,
    positive_id: &str,
    candidates: &BTreeMap<String, f64>,
    k: usize,
    threshold: f64,
) -> Result<TrainingTriplet> {
    if k == 0 {
        return Err(Error::NonPositiveK);
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "threshold must be in (0, 1], got {threshold}"
        )));
    }
    for (doc_id, &sim) in candidates {
        if !sim.is_finite() {
            return Err(Error::NonFiniteScore {
                doc_id: doc_id.clone(),
            });
        }
    }
    let positive_sim = *candidates
        .get(positive_id)
        .ok_or_else(|| Error::MissingPositiveScore {
            positive_id: positive_id.to_string(),
        })?;
    let cutoff = threshold * positive_sim;

    let mut eligible: Vec<(&String, f64)> = candidates
        .iter()
        .filter(|(doc_id, &sim)| doc_id.as_str() != positive_id && sim < cutoff)
        .map(|(doc_id, &sim)| (doc_id, sim))
        .collect();
    eligible.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    eligible.truncate(k);

    let mut scores = BTreeMap::new();
    scores.insert(positive_id.to_string(), positive_sim);
    let mut negative_ids = Vec::with_capacity(eligible.len());
    for (doc_id, sim) in eligible {
        scores.insert(doc_id.clone(), sim);
        negative_ids.push(doc_id.clone());
    }
    Ok(TrainingTriplet {
        query_id: query_id.to_string(),
        positive_id: positive_id.to_string(),
        negative_ids,
        scores,
    })
}

/// Writes triplets as JSON Lines, one triplet per line.
pub fn write_triplets_jsonl(path: impl AsRef<Path>, triplets: &[TrainingTriplet]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for t in triplets {
        let line = serde_json::to_string(t)
            .map_err(|e| Error::format(path, format!("serialize triplet: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_triplets_jsonl(path: impl AsRef<Path>) -> Result<Vec<TrainingTriplet>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut triplets = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TrainingTriplet = serde_json::from_str(&line)
            .map_err(|e| Error::format(path, format!("line {}: {e}", lineno + 1)))?;
        triplets.push(t);
    }
    Ok(triplets)
}
