//! Training-data curation: hard-negative mining and cluster-based
//! corpus sampling.

pub mod cluster;
pub mod gap;
pub mod mining;

pub use cluster::{
    assign_ids, cluster_uniform_sample, kmeans, kmeans_monotone_step, kmeans_with_init,
    read_assignments_csv, write_assignments_csv, ClusterAssignment, KmeansResult,
    DEFAULT_MAX_ITERS,
};
pub use gap::{gap_select_and_cluster, gap_statistic_select_k, GapCurve};
pub use mining::{
    mine_hard_negatives, read_triplets_jsonl, write_triplets_jsonl, TrainingTriplet,
    DEFAULT_NEGATIVE_THRESHOLD,
};

use crate::error::Result;
use crate::model::Vector;
use crate::store::projection::{fit_projection, ProjectionMatrix};

/// Clustering runs in a PCA-reduced space of this many dimensions.
pub const CLUSTERING_DIM: usize = 50;

/// Projects corpus vectors down to `target_dim` for clustering. The same
/// fit/apply semantics as the store's PCA; returned alongside the matrix
/// so callers can project more vectors consistently.
pub fn reduce_for_clustering(
    corpus_vectors: &[Vector],
    target_dim: usize,
) -> Result<(Vec<Vector>, ProjectionMatrix)> {
    let projection = fit_projection(corpus_vectors, target_dim)?;
    let reduced = corpus_vectors
        .iter()
        .map(|v| projection.project_vector(v))
        .collect::<Result<Vec<_>>>()?;
    Ok((reduced, projection))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dim_fifty_corpus_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let corpus: Vec<Vector> = (0..80)
            .map(|_| Vector((0..50).map(|_| rng.random_range(-1.0f32..1.0)).collect()))
            .collect();
        assert!(matches!(
            reduce_for_clustering(&corpus, CLUSTERING_DIM),
            Err(Error::InsufficientTargetReduction { .. })
        ));
    }

    #[test]
    fn rank_deficient_corpus_is_rejected() {
        // Rank-3 data in dim 64 cannot support 50 components.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis: Vec<Vec<f32>> = (0..3)
            .map(|_| (0..64).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        let corpus: Vec<Vector> = (0..100)
            .map(|_| {
                let mut v = vec![0.0f32; 64];
                for b in &basis {
                    let w: f32 = rng.random_range(-1.0..1.0);
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi += w * bi;
                    }
                }
                Vector(v)
            })
            .collect();
        assert!(matches!(
            reduce_for_clustering(&corpus, CLUSTERING_DIM),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn blob_center_distance_ordering_survives_reduction() {
        // Four Gaussian blobs in dim 512; after PCA to 50 the pairwise
        // ordering of blob-centroid distances must be unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 512;
        let centers: Vec<Vec<f32>> = (0..4)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect();
        let scales = [1.0f32, 2.0, 4.0, 8.0];
        let mut corpus = Vec::new();
        let mut labels = Vec::new();
        for (b, center) in centers.iter().enumerate() {
            for _ in 0..60 {
                corpus.push(Vector(
                    center
                        .iter()
                        .map(|&c| c * scales[b] + rng.random_range(-0.05f32..0.05))
                        .collect(),
                ));
                labels.push(b);
            }
        }
        let (reduced, projection) = reduce_for_clustering(&corpus, CLUSTERING_DIM).unwrap();
        assert_eq!(projection.target_dim(), 50);
        assert!(reduced.iter().all(|v| v.dim() == 50));

        let centroid = |points: &[Vector], blob: usize, dim: usize| -> Vec<f64> {
            let mut c = vec![0.0f64; dim];
            let mut n = 0.0;
            for (v, &l) in points.iter().zip(&labels) {
                if l == blob {
                    for (ci, &vi) in c.iter_mut().zip(v.iter()) {
                        *ci += vi as f64;
                    }
                    n += 1.0;
                }
            }
            c.iter().map(|x| x / n).collect()
        };
        let d2 =
            |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };

        let mut before = Vec::new();
        let mut after = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                before.push(d2(&centroid(&corpus, i, dim), &centroid(&corpus, j, dim)));
                after.push(d2(&centroid(&reduced, i, 50), &centroid(&reduced, j, 50)));
            }
        }
        let order = |v: &[f64]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            idx
        };
        assert_eq!(order(&before), order(&after));
    }
}
