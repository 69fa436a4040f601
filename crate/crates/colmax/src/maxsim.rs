//! Late-interaction scoring: exhaustive MaxSim search and the pooled
//! single-vector fallback used for first-stage retrieval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MultiVector, SimilarityKind, Vector};
use crate::store::Index;

/// Sequential f32 dot product. Accumulation order is part of the scoring
/// contract: results must not depend on thread count or blocking.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Cosine similarity. A zero-norm operand yields 0.0 rather than NaN.
#[inline]
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let num = dot(a, b);
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    num / (na * nb)
}

#[inline]
pub fn token_similarity(a: &[f32], b: &[f32], sim: SimilarityKind) -> f32 {
    match sim {
        SimilarityKind::Dot => dot(a, b),
        SimilarityKind::Cosine => cosine(a, b),
    }
}

/// MaxSim over flat token-major buffers: for each query token, the maximum
/// similarity over doc tokens (first maximum wins on ties), summed in
/// sequence over query tokens.
pub(crate) fn maxsim_flat(query: &[f32], doc: &[f32], dim: usize, sim: SimilarityKind) -> f32 {
    let mut total = 0.0f32;
    for q in query.chunks_exact(dim) {
        let mut best = f32::NEG_INFINITY;
        for d in doc.chunks_exact(dim) {
            let s = token_similarity(q, d, sim);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

/// Late-interaction score of `query` against `doc`. Asymmetric: the sum
/// runs over query tokens, the max over doc tokens.
pub fn maxsim_score(query: &MultiVector, doc: &MultiVector, sim: SimilarityKind) -> Result<f32> {
    if query.dim() != doc.dim() {
        return Err(Error::DimMismatch {
            context: format!("maxsim `{}` vs `{}`", query.id(), doc.id()),
            expected: query.dim(),
            found: doc.dim(),
        });
    }
    Ok(maxsim_flat(query.flat(), doc.flat(), query.dim(), sim))
}

/// Mean of all tokens, L2-normalized. The single-vector summary used by
/// first-stage retrieval.
pub fn pooled_embedding(mv: &MultiVector) -> Result<Vector> {
    let dim = mv.dim();
    let mut mean = vec![0.0f64; dim];
    for token in mv.tokens() {
        for (m, &v) in mean.iter_mut().zip(token) {
            *m += v as f64;
        }
    }
    let n = mv.token_count() as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector {
            id: mv.id().to_string(),
        });
    }
    Ok(Vector(mean.iter().map(|m| (m / norm) as f32).collect()))
}

/// One ranked hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f32,
}

/// Ranked hits for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub query_id: String,
    pub k: usize,
    pub hits: Vec<ScoredDoc>,
}

/// Orders by score descending, then doc id ascending. NaN (only reachable
/// through f32 overflow on extreme inputs) sorts after every finite score.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

fn check_query(query: &MultiVector, index: &Index, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::NonPositiveK);
    }
    if query.dim() != index.dim() {
        return Err(Error::DimMismatch {
            context: format!("query `{}` vs index", query.id()),
            expected: index.dim(),
            found: query.dim(),
        });
    }
    Ok(())
}

/// Exhaustive MaxSim scan of the whole index, top `k` hits. Scoring fans
/// out across documents; each document is scored sequentially, so results
/// are identical for any worker count.
pub fn search(
    query: &MultiVector,
    index: &Index,
    k: usize,
    sim: SimilarityKind,
) -> Result<SearchResult> {
    check_query(query, index, k)?;
    let dim = index.dim();
    let mut hits: Vec<ScoredDoc> = (0..index.doc_count())
        .into_par_iter()
        .with_min_len(64)
        .map(|i| ScoredDoc {
            doc_id: index.doc_id(i).to_string(),
            score: maxsim_flat(query.flat(), index.doc_tokens(i), dim, sim),
        })
        .collect();
    hits.sort_unstable_by(rank_order);
    hits.truncate(k);
    Ok(SearchResult {
        query_id: query.id().to_string(),
        k,
        hits,
    })
}

/// Single-vector ranking: documents ordered by dot product of the query's
/// pooled embedding against each document's pooled embedding.
pub fn pooled_search(query: &MultiVector, index: &Index, k: usize) -> Result<SearchResult> {
    check_query(query, index, k)?;
    let pooled_query = pooled_embedding(query)?;
    let mut hits: Vec<ScoredDoc> = (0..index.doc_count())
        .into_par_iter()
        .with_min_len(256)
        .map(|i| ScoredDoc {
            doc_id: index.doc_id(i).to_string(),
            score: dot(&pooled_query, index.pooled(i)),
        })
        .collect();
    hits.sort_unstable_by(rank_order);
    hits.truncate(k);
    Ok(SearchResult {
        query_id: query.id().to_string(),
        k,
        hits,
    })
}

/// Two-stage retrieval: a cheap first stage ranks documents by dot product
/// of pooled embeddings, then MaxSim re-scores the top `first_stage_k` and
/// returns the best `final_k`.
pub fn retrieve_then_rerank(
    query: &MultiVector,
    index: &Index,
    first_stage_k: usize,
    final_k: usize,
    sim: SimilarityKind,
) -> Result<SearchResult> {
    if final_k == 0 {
        return Err(Error::NonPositiveK);
    }
    if final_k > first_stage_k {
        return Err(Error::InvalidInput(format!(
            "final_k {final_k} exceeds first_stage_k {first_stage_k}"
        )));
    }
    let stage1 = pooled_search(query, index, first_stage_k)?;

    let dim = index.dim();
    let mut hits: Vec<ScoredDoc> = stage1
        .hits
        .into_par_iter()
        .map(|hit| {
            // Candidate ids come from this index, so the lookup cannot miss.
            let i = index.doc_index(&hit.doc_id).unwrap();
            ScoredDoc {
                doc_id: hit.doc_id,
                score: maxsim_flat(query.flat(), index.doc_tokens(i), dim, sim),
            }
        })
        .collect();
    hits.sort_unstable_by(rank_order);
    hits.truncate(final_k);
    Ok(SearchResult {
        query_id: query.id().to_string(),
        k: final_k,
        hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mv(id: &str, tokens: &[&[f32]]) -> MultiVector {
        MultiVector::new(id, tokens.iter().map(|t| Vector(t.to_vec())).collect()).unwrap()
    }

    #[test]
    fn worked_two_token_example() {
        let q = mv("q", &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = mv("d", &[&[0.9, 0.1], &[0.2, 0.8], &[-0.5, 0.5]]);
        let s = maxsim_score(&q, &d, SimilarityKind::Dot).unwrap();
        assert!((s - 1.7).abs() <= 1e-6, "got {s}");
    }

    #[test]
    fn asymmetric_in_its_arguments() {
        let q = mv("q", &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = mv("d", &[&[0.9, 0.1], &[0.2, 0.8], &[-0.5, 0.5]]);
        let qd = maxsim_score(&q, &d, SimilarityKind::Dot).unwrap();
        let dq = maxsim_score(&d, &q, SimilarityKind::Dot).unwrap();
        assert!((qd - 1.7).abs() <= 1e-6);
        assert!((dq - 2.2).abs() <= 1e-6);
    }

    #[test]
    fn rejects_dim_mismatch() {
        let q = mv("q", &[&[1.0, 0.0, 0.0]]);
        let d = mv("d", &[&[1.0, 0.0]]);
        assert!(matches!(
            maxsim_score(&q, &d, SimilarityKind::Dot),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn single_token_reduces_to_plain_similarity() {
        let q = mv("q", &[&[0.6, 0.8]]);
        let d = mv("d", &[&[0.5, -0.5]]);
        let s = maxsim_score(&q, &d, SimilarityKind::Dot).unwrap();
        assert!((s - (0.6 * 0.5 - 0.8 * 0.5)).abs() <= 1e-7);
    }

    #[test]
    fn cosine_matches_normalized_dot() {
        let q = mv("q", &[&[3.0, 4.0]]);
        let d = mv("d", &[&[5.0, 12.0]]);
        let s = maxsim_score(&q, &d, SimilarityKind::Cosine).unwrap();
        let expected = (3.0 * 5.0 + 4.0 * 12.0) / (5.0 * 13.0);
        assert!((s - expected).abs() <= 1e-6);
    }

    #[test]
    fn cosine_zero_vector_scores_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn pooled_example_is_unit_diagonal() {
        let d = mv("d", &[&[2.0, 0.0], &[0.0, 2.0]]);
        let p = pooled_embedding(&d).unwrap();
        let inv_sqrt2 = std::f32::consts::FRAC_1_SQRT_2;
        assert!((p[0] - inv_sqrt2).abs() <= 1e-6);
        assert!((p[1] - inv_sqrt2).abs() <= 1e-6);
        let norm: f32 = p.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn pooled_zero_mean_errors() {
        let d = mv("d", &[&[1.0, -1.0], &[-1.0, 1.0]]);
        assert!(matches!(
            pooled_embedding(&d),
            Err(Error::ZeroVector { .. })
        ));
    }

    fn token_strategy(dim: usize) -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec(-1.0f32..1.0, dim)
    }

    fn tokens_strategy(dim: usize, max_tokens: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
        proptest::collection::vec(token_strategy(dim), 1..=max_tokens)
    }

    proptest! {
        /// Permuting document tokens permutes the set each max runs over,
        /// so the score is bit-identical.
        #[test]
        fn doc_token_order_is_irrelevant(
            q in tokens_strategy(4, 6),
            d in tokens_strategy(4, 8),
            perm_seed in 0u64..1000,
        ) {
            let query = MultiVector::new("q", q.into_iter().map(Vector).collect()).unwrap();
            let doc = MultiVector::new("d", d.clone().into_iter().map(Vector).collect()).unwrap();
            let mut shuffled = d;
            // Tiny deterministic Fisher-Yates driven by perm_seed.
            let mut state = perm_seed.wrapping_add(1);
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let doc2 = MultiVector::new("d", shuffled.into_iter().map(Vector).collect()).unwrap();
            let a = maxsim_score(&query, &doc, SimilarityKind::Dot).unwrap();
            let b = maxsim_score(&query, &doc2, SimilarityKind::Dot).unwrap();
            prop_assert_eq!(a, b);
        }

        /// Adding a document token can only raise each per-query-token max.
        #[test]
        fn extra_doc_token_never_lowers_score(
            q in tokens_strategy(4, 6),
            d in tokens_strategy(4, 8),
            extra in token_strategy(4),
        ) {
            let query = MultiVector::new("q", q.into_iter().map(Vector).collect()).unwrap();
            let doc = MultiVector::new("d", d.clone().into_iter().map(Vector).collect()).unwrap();
            let mut grown = d;
            grown.push(extra);
            let doc2 = MultiVector::new("d", grown.into_iter().map(Vector).collect()).unwrap();
            let a = maxsim_score(&query, &doc, SimilarityKind::Dot).unwrap();
            let b = maxsim_score(&query, &doc2, SimilarityKind::Dot).unwrap();
            prop_assert!(b >= a);
        }

        /// Cosine ignores positive rescaling of document tokens.
        #[test]
        fn cosine_scale_invariant(
            q in tokens_strategy(4, 4),
            d in tokens_strategy(4, 4),
            scale in 0.1f32..10.0,
        ) {
            let query = MultiVector::new("q", q.into_iter().map(Vector).collect()).unwrap();
            let doc = MultiVector::new("d", d.clone().into_iter().map(Vector).collect()).unwrap();
            let scaled: Vec<Vec<f32>> = d.iter()
                .map(|t| t.iter().map(|v| v * scale).collect())
                .collect();
            let doc2 = MultiVector::new("d", scaled.into_iter().map(Vector).collect()).unwrap();
            let a = maxsim_score(&query, &doc, SimilarityKind::Cosine).unwrap();
            let b = maxsim_score(&query, &doc2, SimilarityKind::Cosine).unwrap();
            prop_assert!((a - b).abs() <= 1e-4 * a.abs().max(1.0));
        }

        /// Pooled embeddings have unit norm whenever the token mean is nonzero.
        #[test]
        fn pooled_norm_is_one(d in tokens_strategy(5, 8)) {
            let doc = MultiVector::new("d", d.into_iter().map(Vector).collect()).unwrap();
            if let Ok(p) = pooled_embedding(&doc) {
                let norm: f32 = p.iter().map(|v| v * v).sum::<f32>().sqrt();
                prop_assert!((norm - 1.0).abs() <= 1e-6);
            }
        }
    }
}
