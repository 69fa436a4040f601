//! NDCG@k against graded judgments, plus TREC-format qrels and run files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::maxsim::{ScoredDoc, SearchResult};

/// Graded relevance judgments. One grade per (query, doc) pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    rels: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one judgment. Duplicate (query, doc) pairs are rejected.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, rel: u32) -> Result<()> {
        if query_id.is_empty() || doc_id.is_empty() {
            return Err(Error::EmptyId);
        }
        let by_doc = self.rels.entry(query_id.to_string()).or_default();
        if by_doc.contains_key(doc_id) {
            return Err(Error::DuplicateId {
                id: format!("{query_id}/{doc_id}"),
            });
        }
        by_doc.insert(doc_id.to_string(), rel);
        Ok(())
    }

    /// Grade for a pair; unjudged pairs are grade 0.
    pub fn relevance(&self, query_id: &str, doc_id: &str) -> u32 {
        self.rels
            .get(query_id)
            .and_then(|m| m.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query_judgments(&self, query_id: &str) -> Option<&BTreeMap<String, u32>> {
        self.rels.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.rels.keys().map(String::as_str)
    }

    pub fn judgment_count(&self) -> usize {
        self.rels.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rels.is_empty()
    }
}

fn check_bare_token(token: &str, what: &str) -> Result<()> {
    if token.is_empty() {
        return Err(Error::EmptyId);
    }
    if token.chars().any(char::is_whitespace) {
        return Err(Error::InvalidInput(format!(
            "{what} {token:?} contains whitespace, not representable in TREC format"
        )));
    }
    Ok(())
}

/// Serializes qrels as TREC lines: `query_id 0 doc_id rel`, sorted by ids.
pub fn qrels_to_trec(qrels: &Qrels) -> Result<String> {
    let mut out = String::new();
    for (query_id, by_doc) in &qrels.rels {
        check_bare_token(query_id, "query id")?;
        for (doc_id, rel) in by_doc {
            check_bare_token(doc_id, "doc id")?;
            out.push_str(&format!("{query_id} 0 {doc_id} {rel}\n"));
        }
    }
    Ok(out)
}

/// Parses TREC qrels lines. `origin` names the source in errors.
pub fn qrels_from_trec(text: &str, origin: &str) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::format(
                origin,
                format!(
                    "qrels line {}: expected 4 fields, got {}",
                    lineno + 1,
                    fields.len()
                ),
            ));
        }
        let rel: u32 = fields[3].parse().map_err(|_| {
            Error::format(
                origin,
                format!("qrels line {}: bad relevance {:?}", lineno + 1, fields[3]),
            )
        })?;
        qrels
            .insert(fields[0], fields[2], rel)
            .map_err(|e| Error::format(origin, format!("qrels line {}: {e}", lineno + 1)))?;
    }
    Ok(qrels)
}

pub fn write_qrels_trec(path: &Path, qrels: &Qrels) -> Result<()> {
    fs::write(path, qrels_to_trec(qrels)?).map_err(|e| Error::io(path, e))
}

pub fn read_qrels_trec(path: &Path) -> Result<Qrels> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    qrels_from_trec(&text, &path.display().to_string())
}

/// Serializes ranked results as TREC run lines: `query_id Q0 doc_id rank score tag`.
pub fn run_to_trec(run: &[SearchResult], tag: &str) -> Result<String> {
    check_bare_token(tag, "run tag")?;
    let mut out = String::new();
    for result in run {
        check_bare_token(&result.query_id, "query id")?;
        for (i, hit) in result.hits.iter().enumerate() {
            check_bare_token(&hit.doc_id, "doc id")?;
            out.push_str(&format!(
                "{} Q0 {} {} {} {tag}\n",
                result.query_id,
                hit.doc_id,
                i + 1,
                hit.score,
            ));
        }
    }
    Ok(out)
}

/// Parses a TREC run. Queries keep first-appearance order; hits sort by rank.
pub fn run_from_trec(text: &str, origin: &str) -> Result<Vec<SearchResult>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_query: BTreeMap<String, Vec<(u32, ScoredDoc)>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::format(
                origin,
                format!(
                    "run line {}: expected 6 fields, got {}",
                    lineno + 1,
                    fields.len()
                ),
            ));
        }
        let rank: u32 = fields[3].parse().map_err(|_| {
            Error::format(
                origin,
                format!("run line {}: bad rank {:?}", lineno + 1, fields[3]),
            )
        })?;
        let score: f32 = fields[4].parse().map_err(|_| {
            Error::format(
                origin,
                format!("run line {}: bad score {:?}", lineno + 1, fields[4]),
            )
        })?;
        if !score.is_finite() {
            return Err(Error::NonFiniteScore {
                doc_id: fields[2].to_string(),
            });
        }
        let query_id = fields[0].to_string();
        if !by_query.contains_key(&query_id) {
            order.push(query_id.clone());
        }
        let hits = by_query.entry(query_id).or_default();
        if hits.iter().any(|(_, h)| h.doc_id == fields[2]) {
            return Err(Error::format(
                origin,
                format!(
                    "run line {}: duplicate doc {:?} for query {:?}",
                    lineno + 1,
                    fields[2],
                    fields[0]
                ),
            ));
        }
        if hits.iter().any(|(r, _)| *r == rank) {
            return Err(Error::format(
                origin,
                format!(
                    "run line {}: duplicate rank {} for query {:?}",
                    lineno + 1,
                    rank,
                    fields[0]
                ),
            ));
        }
        hits.push((
            rank,
            ScoredDoc {
                doc_id: fields[2].to_string(),
                score,
            },
        ));
    }
    let mut run = Vec::with_capacity(order.len());
    for query_id in order {
        let mut hits = by_query.remove(&query_id).unwrap();
        hits.sort_by_key(|(rank, _)| *rank);
        let hits: Vec<ScoredDoc> = hits.into_iter().map(|(_, h)| h).collect();
        run.push(SearchResult {
            query_id,
            k: hits.len(),
            hits,
        });
    }
    Ok(run)
}

pub fn write_run_trec(path: &Path, run: &[SearchResult], tag: &str) -> Result<()> {
    fs::write(path, run_to_trec(run, tag)?).map_err(|e| Error::io(path, e))
}

pub fn read_run_trec(path: &Path) -> Result<Vec<SearchResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    run_from_trec(&text, &path.display().to_string())
}

/// DCG@k with exponential gain 2^rel − 1 and discount log2(rank + 1).
pub fn dcg_at_k(rels: &[u32], k: usize) -> f64 {
    rels.iter()
        .take(k)
        .enumerate()
        .map(|(i, &rel)| (2f64.powi(rel as i32) - 1.0) / (i as f64 + 2.0).log2())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdcgReport {
    pub k: usize,
    /// Per-query NDCG, judged queries only.
    pub per_query: BTreeMap<String, f64>,
    /// Mean over judged queries.
    pub mean: f64,
    pub evaluated: usize,
    /// Queries in the run with no relevant document in the qrels.
    pub skipped: usize,
}

/// NDCG@k per query and mean. Queries without any relevant doc are excluded
/// from the mean; a run with no judged query at all is an error.
pub fn ndcg_at_k(run: &[SearchResult], qrels: &Qrels, k: usize) -> Result<NdcgReport> {
    if k == 0 {
        return Err(Error::NonPositiveK);
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = 0usize;
    for result in run {
        let mut seen: HashSet<&str> = HashSet::with_capacity(result.hits.len());
        for hit in &result.hits {
            if !seen.insert(&hit.doc_id) {
                return Err(Error::InvalidInput(format!(
                    "duplicate doc {:?} in ranking for query {:?}",
                    hit.doc_id, result.query_id
                )));
            }
        }
        let mut ideal: Vec<u32> = qrels
            .query_judgments(&result.query_id)
            .map(|m| m.values().copied().filter(|&r| r > 0).collect())
            .unwrap_or_default();
        if ideal.is_empty() {
            skipped += 1;
            continue;
        }
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg_at_k(&ideal, k);
        let got: Vec<u32> = result
            .hits
            .iter()
            .map(|h| qrels.relevance(&result.query_id, &h.doc_id))
            .collect();
        let value = dcg_at_k(&got, k) / idcg;
        if per_query.insert(result.query_id.clone(), value).is_some() {
            return Err(Error::DuplicateId {
                id: result.query_id.clone(),
            });
        }
    }
    if per_query.is_empty() {
        return Err(Error::NoJudgedQueries);
    }
    let evaluated = per_query.len();
    let mean = per_query.values().sum::<f64>() / evaluated as f64;
    Ok(NdcgReport {
        k,
        per_query,
        mean,
        evaluated,
        skipped,
    })
}
