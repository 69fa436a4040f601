//! Ablation sweep over embedding dimension and payload precision, with the
//! storage and NDCG percentage bookkeeping emitted as CSV or markdown.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::ndcg::{ndcg_at_k, Qrels};
use crate::maxsim::{search, SearchResult};
use crate::model::SimilarityKind;
use crate::model::{MultiVector, Precision, Vector};
use crate::seed::derive_seed;
use crate::store::{apply_projection, estimate_storage, fit_projection, storage_ratio, Index};

/// Cap on the token sample used to fit each projection.
const PROJECTION_SAMPLE_CAP: usize = 20_000;

pub const ABLATION_CSV_HEADER: &str = "label,dim,precision,storage_gib,storage_pct,ndcg,ndcg_pct";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub embed_dim: u32,
    pub precision: Precision,
    pub storage_gib: f64,
    /// Bytes as a percentage of the baseline row, rounded half up.
    pub storage_pct: u32,
    pub ndcg: f64,
    /// 100 · ndcg / baseline_ndcg, rounded to two decimals.
    pub ndcg_pct: f64,
}

/// Percentage of `baseline` retained by `value`, rounded to two decimals.
pub fn ndcg_pct(value: f64, baseline: f64) -> f64 {
    (100.0 * value / baseline * 100.0).round() / 100.0
}

pub(crate) fn sample_tokens(docs: &[MultiVector], cap: usize, seed: u64) -> Vec<Vector> {
    let mut coords: Vec<(usize, usize)> = docs
        .iter()
        .enumerate()
        .flat_map(|(di, d)| (0..d.token_count()).map(move |ti| (di, ti)))
        .collect();
    let take = coords.len().min(cap);
    if take < coords.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in 0..take {
            let swap = t + rng.random_range(0..coords.len() - t);
            coords.swap(t, swap);
        }
        coords.truncate(take);
        coords.sort_unstable();
    }
    coords
        .into_iter()
        .map(|(di, ti)| Vector(docs[di].token(ti).to_vec()))
        .collect()
}

/// Runs the full sweep: for each dim, fit and apply a projection (identity
/// at the source dim); for each precision, quantize, index, search, and
/// evaluate NDCG@k. The first (dim, precision) pair is the baseline both
/// percentage columns are measured against.
pub fn run_ablation(
    docs: &[MultiVector],
    queries: &[MultiVector],
    qrels: &Qrels,
    dims: &[u32],
    precisions: &[Precision],
    k: usize,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if docs.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if dims.is_empty() || precisions.is_empty() {
        return Err(Error::InvalidInput(
            "ablation needs at least one dim and one precision".to_string(),
        ));
    }
    let source_dim = docs[0].dim() as u32;
    for &dim in dims {
        if dim == 0 || dim > source_dim {
            return Err(Error::InvalidInput(format!(
                "ablation dim {dim} outside 1..={source_dim}"
            )));
        }
    }
    let mean_tokens =
        docs.iter().map(MultiVector::token_count).sum::<usize>() as f64 / docs.len() as f64;

    let mut rows = Vec::with_capacity(dims.len() * precisions.len());
    let mut baseline: Option<(u64, f64)> = None;
    for &dim in dims {
        let (pdocs, pqueries) = if dim == source_dim {
            (docs.to_vec(), queries.to_vec())
        } else {
            let sample = sample_tokens(docs, PROJECTION_SAMPLE_CAP, derive_seed(seed, dim as u64));
            let projection = fit_projection(&sample, dim as usize)?;
            let pd: Vec<MultiVector> = docs
                .par_iter()
                .map(|d| apply_projection(d, &projection, true))
                .collect::<Result<_>>()?;
            let pq: Vec<MultiVector> = queries
                .par_iter()
                .map(|q| apply_projection(q, &projection, true))
                .collect::<Result<_>>()?;
            (pd, pq)
        };
        for &precision in precisions {
            let index = Index::build(pdocs.iter().cloned(), precision, false)?;
            let run: Vec<SearchResult> = pqueries
                .iter()
                .map(|q| search(q, &index, k, SimilarityKind::Dot))
                .collect::<Result<_>>()?;
            let report = ndcg_at_k(&run, qrels, k)?;
            let estimate = estimate_storage(docs.len() as u64, mean_tokens, dim, precision)?;
            let (base_bytes, base_ndcg) =
                *baseline.get_or_insert((estimate.total_bytes, report.mean));
            if base_ndcg == 0.0 {
                return Err(Error::InvalidInput(
                    "baseline configuration scored NDCG 0, percentages undefined".to_string(),
                ));
            }
            let base_estimate =
                estimate_storage(docs.len() as u64, mean_tokens, dims[0], precisions[0])?;
            debug_assert_eq!(base_estimate.total_bytes, base_bytes);
            rows.push(AblationRow {
                label: format!("{dim}d-{precision}"),
                embed_dim: dim,
                precision,
                storage_gib: estimate.total_gib,
                storage_pct: storage_ratio(&estimate, &base_estimate),
                ndcg: report.mean,
                ndcg_pct: ndcg_pct(report.mean, base_ndcg),
            });
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{:.1},{},{:.4},{:.2}\n",
            row.label,
            row.embed_dim,
            row.precision,
            row.storage_gib,
            row.storage_pct,
            row.ndcg,
            row.ndcg_pct,
        ));
    }
    out
}

pub fn ablation_markdown(rows: &[AblationRow]) -> String {
    let mut out = String::from(
        "| label | dim | precision | storage (GiB) | storage % | ndcg | ndcg % |\n\
         |---|---|---|---|---|---|---|\n",
    );
    for row in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {:.1} | {} | {:.4} | {:.2} |\n",
            row.label,
            row.embed_dim,
            row.precision,
            row.storage_gib,
            row.storage_pct,
            row.ndcg,
            row.ndcg_pct,
        ));
    }
    out
}
