//! Lloyd k-means with kmeans++ seeding, plus cluster-stratified sampling
//! and the doc-to-cluster CSV format.
//!
//! Determinism contract: identical points, k, and seed give identical
//! results regardless of worker count. Assignment ties go to the lowest
//! centroid index; objective sums run in point order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write as _};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Vector;
use crate::seed::derive_seed;

pub const DEFAULT_MAX_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// Cluster label per input point, in input order.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vector>,
    /// Final within-cluster sum of squared distances.
    pub inertia: f64,
    pub iterations: usize,
    /// Objective after each assignment step; non-increasing.
    pub inertia_trace: Vec<f64>,
}

fn check_points(points: &[Vector]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to cluster".to_string()));
    }
    let dim = points[0].dim();
    for (i, p) in points.iter().enumerate() {
        if p.dim() != dim {
            return Err(Error::DimMismatch {
                context: format!("clustering point {i}"),
                expected: dim,
                found: p.dim(),
            });
        }
        if !p.is_finite() {
            return Err(Error::InvalidInput(format!(
                "clustering point {i} has non-finite values"
            )));
        }
    }
    Ok(dim)
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn to_f64(points: &[Vector], dim: usize) -> Vec<f64> {
    let mut flat = Vec::with_capacity(points.len() * dim);
    for p in points {
        flat.extend(p.iter().map(|&v| v as f64));
    }
    flat
}

/// kmeans++ seeding: first centroid uniform, later ones sampled with
/// probability proportional to squared distance from the nearest chosen
/// centroid. Falls back to uniform among unchosen points when all
/// remaining distances are zero (duplicate-heavy data).
fn kmeanspp_init(flat: &[f64], n: usize, dim: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let point = |i: usize| &flat[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(point(i), point(first))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > r {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| {
                // Floating-point edge: fall back to the last positive weight.
                d2.iter().rposition(|&w| w > 0.0).unwrap_or(0)
            })
        } else {
            // All remaining points coincide with chosen centroids.
            let unchosen: Vec<usize> = (0..n).filter(|&i| !is_chosen[i]).collect();
            unchosen[rng.random_range(0..unchosen.len())]
        };
        chosen.push(next);
        is_chosen[next] = true;
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = dist2(point(i), point(next));
            if d < *slot {
                *slot = d;
            }
        }
    }
    chosen.iter().map(|&i| point(i).to_vec()).collect()
}

/// Lloyd iterations from explicit starting centroids.
pub fn kmeans_with_init(
    points: &[Vector],
    init: Vec<Vec<f64>>,
    max_iters: usize,
) -> Result<KmeansResult> {
    let dim = check_points(points)?;
    let n = points.len();
    let k = init.len();
    if k == 0 {
        return Err(Error::NonPositiveK);
    }
    if k > n {
        return Err(Error::KTooLarge { k, points: n });
    }
    for c in &init {
        if c.len() != dim {
            return Err(Error::DimMismatch {
                context: "initial centroid".to_string(),
                expected: dim,
                found: c.len(),
            });
        }
    }
    let flat = to_f64(points, dim);
    Ok(lloyd(&flat, n, dim, init, max_iters))
}

fn lloyd(
    flat: &[f64],
    n: usize,
    dim: usize,
    mut centroids: Vec<Vec<f64>>,
    max_iters: usize,
) -> KmeansResult {
    let k = centroids.len();
    let point = |i: usize| &flat[i * dim..(i + 1) * dim];
    let mut assignments: Vec<usize> = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters.max(1) {
        iterations += 1;
        // Assignment: nearest centroid, lowest index on ties. Parallel per
        // point; the objective is summed sequentially afterwards.
        let new_assign: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .with_min_len(256)
            .map(|i| {
                let p = point(i);
                let mut best = 0usize;
                let mut best_d = dist2(p, &centroids[0]);
                for (c, centroid) in centroids.iter().enumerate().skip(1) {
                    let d = dist2(p, centroid);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                (best, best_d)
            })
            .collect();
        let objective: f64 = new_assign.iter().map(|&(_, d)| d).sum();
        trace.push(objective);
        let stable = new_assign
            .iter()
            .zip(&assignments)
            .all(|(&(a, _), &b)| a == b);
        for (i, &(a, _)) in new_assign.iter().enumerate() {
            assignments[i] = a;
        }
        if stable {
            break;
        }

        // Update: cluster means; empty clusters reseed at successive
        // farthest points (lowest index on ties).
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &(a, _)) in new_assign.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                for (cc, s) in centroids[c].iter_mut().zip(&sums[c]) {
                    *cc = s / counts[c] as f64;
                }
            } else {
                let mut far = None;
                let mut far_d = -1.0;
                for (i, &(_, d)) in new_assign.iter().enumerate() {
                    if !taken[i] && d > far_d {
                        far = Some(i);
                        far_d = d;
                    }
                }
                let i = far.expect("n >= k guarantees a reseed candidate");
                taken[i] = true;
                centroids[c] = point(i).to_vec();
            }
        }
    }

    KmeansResult {
        assignments,
        centroids: centroids
            .into_iter()
            .map(|c| Vector(c.iter().map(|&v| v as f32).collect()))
            .collect(),
        inertia: *trace.last().expect("at least one iteration runs"),
        iterations,
        inertia_trace: trace,
    }
}

/// k-means with kmeans++ seeding from `seed`.
pub fn kmeans(points: &[Vector], k: usize, seed: u64, max_iters: usize) -> Result<KmeansResult> {
    let dim = check_points(points)?;
    let n = points.len();
    if k == 0 {
        return Err(Error::NonPositiveK);
    }
    if k > n {
        return Err(Error::KTooLarge { k, points: n });
    }
    let flat = to_f64(points, dim);
    let init = kmeanspp_init(&flat, n, dim, k, seed);
    Ok(lloyd(&flat, n, dim, init, max_iters))
}

/// Best of one kmeans++ run and one warm start (previous centroids plus
/// the farthest point). Sweeping k upward through this function yields a
/// non-increasing objective: the warm start's first assignment already
/// scores no worse than the previous k's final objective.
pub fn kmeans_monotone_step(
    points: &[Vector],
    k: usize,
    seed: u64,
    max_iters: usize,
    previous: Option<&KmeansResult>,
) -> Result<KmeansResult> {
    let fresh = kmeans(points, k, seed, max_iters)?;
    let Some(prev) = previous else {
        return Ok(fresh);
    };
    debug_assert_eq!(prev.centroids.len() + 1, k);
    let mut init: Vec<Vec<f64>> = prev
        .centroids
        .iter()
        .map(|c| c.iter().map(|&v| v as f64).collect())
        .collect();
    // Farthest point from its assigned centroid becomes the new centroid.
    let mut far = 0usize;
    let mut far_d = -1.0;
    for (i, p) in points.iter().enumerate() {
        let c = &init[prev.assignments[i]];
        let d = p
            .iter()
            .zip(c)
            .map(|(&x, &y)| (x as f64 - y) * (x as f64 - y))
            .sum::<f64>();
        if d > far_d {
            far = i;
            far_d = d;
        }
    }
    init.push(points[far].iter().map(|&v| v as f64).collect());
    let warm = kmeans_with_init(points, init, max_iters)?;
    Ok(if warm.inertia <= fresh.inertia {
        warm
    } else {
        fresh
    })
}

/// One document's cluster label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub doc_id: String,
    pub cluster: usize,
}

pub fn assign_ids(doc_ids: &[String], assignments: &[usize]) -> Vec<ClusterAssignment> {
    debug_assert_eq!(doc_ids.len(), assignments.len());
    doc_ids
        .iter()
        .zip(assignments)
        .map(|(id, &cluster)| ClusterAssignment {
            doc_id: id.clone(),
            cluster,
        })
        .collect()
}

/// Samples up to `per_cluster_n` doc ids from each cluster, uniformly
/// without replacement, deterministically in `seed`. Output is ordered by
/// cluster, then by selection order within the cluster.
pub fn cluster_uniform_sample(
    assignments: &[ClusterAssignment],
    per_cluster_n: usize,
    seed: u64,
) -> Vec<String> {
    let mut by_cluster: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for a in assignments {
        by_cluster.entry(a.cluster).or_default().push(&a.doc_id);
    }
    let mut out = Vec::new();
    for (&cluster, ids) in by_cluster.iter_mut() {
        // Canonical base order, so input order cannot leak into the draw.
        ids.sort_unstable();
        let take = per_cluster_n.min(ids.len());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, cluster as u64));
        // Partial Fisher-Yates: the first `take` slots become the sample.
        for i in 0..take {
            let j = rng.random_range(i..ids.len());
            ids.swap(i, j);
        }
        out.extend(ids[..take].iter().map(|s| s.to_string()));
    }
    out
}

/// Writes `doc_id,cluster` CSV with a header line.
pub fn write_assignments_csv(
    path: impl AsRef<Path>,
    assignments: &[ClusterAssignment],
) -> Result<()> {
    let path = path.as_ref();
    for a in assignments {
        if a.doc_id.contains([',', '\n', '\r', '"']) {
            return Err(Error::InvalidInput(format!(
                "doc id `{}` cannot be written as CSV",
                a.doc_id
            )));
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "doc_id,cluster").map_err(|e| Error::io(path, e))?;
    for a in assignments {
        writeln!(w, "{},{}", a.doc_id, a.cluster).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_assignments_csv(path: impl AsRef<Path>) -> Result<Vec<ClusterAssignment>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if lineno == 0 {
            if trimmed != "doc_id,cluster" {
                return Err(Error::format(path, "expected header `doc_id,cluster`"));
            }
            continue;
        }
        let (doc_id, cluster) = trimmed
            .rsplit_once(',')
            .ok_or_else(|| Error::format(path, format!("line {}: no comma", lineno + 1)))?;
        let cluster: usize = cluster.trim().parse().map_err(|_| {
            Error::format(
                path,
                format!("line {}: bad cluster `{cluster}`", lineno + 1),
            )
        })?;
        out.push(ClusterAssignment {
            doc_id: doc_id.to_string(),
            cluster,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blob(center: &[f32], n: usize, spread: f32, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                Vector(
                    center
                        .iter()
                        .map(|&c| c + rng.random_range(-spread..spread))
                        .collect(),
                )
            })
            .collect()
    }

    #[test]
    fn separates_two_blobs() {
        let mut points = blob(&[0.0, 0.0], 20, 0.2, 1);
        points.extend(blob(&[10.0, 10.0], 20, 0.2, 2));
        let r = kmeans(&points, 2, 7, DEFAULT_MAX_ITERS).unwrap();
        let first = r.assignments[0];
        assert!(r.assignments[..20].iter().all(|&a| a == first));
        assert!(r.assignments[20..].iter().all(|&a| a == 1 - first));
        assert!(r.inertia < 20.0);
    }

    #[test]
    fn three_blobs_match_labels_up_to_permutation() {
        let mut points = blob(&[0.0, 0.0], 50, 0.5, 21);
        points.extend(blob(&[10.0, 0.0], 50, 0.5, 22));
        points.extend(blob(&[0.0, 10.0], 50, 0.5, 23));
        let truth: Vec<usize> = (0..150).map(|i| i / 50).collect();
        let r = kmeans(&points, 3, 17, DEFAULT_MAX_ITERS).unwrap();

        // Best label permutation, exhaustively over 3! candidates.
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let best = perms
            .iter()
            .map(|p| {
                r.assignments
                    .iter()
                    .zip(&truth)
                    .filter(|&(&a, &t)| p[a] == t)
                    .count()
            })
            .max()
            .unwrap();
        assert!(best * 100 >= 150 * 99, "only {best}/150 matched");
    }

    #[test]
    fn k_equals_n_reaches_zero_inertia() {
        let points: Vec<Vector> = (0..6)
            .map(|i| Vector(vec![i as f32 * 2.0, (i * i) as f32]))
            .collect();
        let r = kmeans(&points, 6, 3, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut labels = r.assignments.clone();
        labels.sort_unstable();
        labels.dedup();
        assert_eq!(labels.len(), 6);
    }

    #[test]
    fn k_one_centroid_is_the_mean() {
        let points = vec![
            Vector(vec![0.0, 0.0]),
            Vector(vec![2.0, 0.0]),
            Vector(vec![1.0, 3.0]),
        ];
        let r = kmeans(&points, 1, 5, DEFAULT_MAX_ITERS).unwrap();
        assert!((r.centroids[0][0] - 1.0).abs() < 1e-6);
        assert!((r.centroids[0][1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        let points = blob(&[0.0, 0.0], 5, 1.0, 4);
        assert!(matches!(
            kmeans(&points, 0, 1, 10),
            Err(Error::NonPositiveK)
        ));
        assert!(matches!(
            kmeans(&points, 6, 1, 10),
            Err(Error::KTooLarge { k: 6, points: 5 })
        ));
        assert!(kmeans(&[], 1, 1, 10).is_err());
        let ragged = vec![Vector(vec![0.0, 0.0]), Vector(vec![0.0])];
        assert!(matches!(
            kmeans(&ragged, 1, 1, 10),
            Err(Error::DimMismatch { .. })
        ));
        let nan = vec![Vector(vec![f32::NAN, 0.0])];
        assert!(kmeans(&nan, 1, 1, 10).is_err());
    }

    #[test]
    fn identical_points_converge_with_zero_inertia() {
        let points: Vec<Vector> = (0..5).map(|_| Vector(vec![1.0, 2.0])).collect();
        let r = kmeans(&points, 3, 9, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert!(r.assignments.iter().all(|&a| a < 3));
    }

    #[test]
    fn same_seed_same_result() {
        let points = blob(&[0.0, 0.0], 40, 2.0, 5);
        let a = kmeans(&points, 4, 11, DEFAULT_MAX_ITERS).unwrap();
        let b = kmeans(&points, 4, 11, DEFAULT_MAX_ITERS).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn monotone_step_never_increases_objective() {
        let mut points = blob(&[0.0, 0.0], 30, 1.0, 6);
        points.extend(blob(&[6.0, 0.0], 30, 1.0, 7));
        points.extend(blob(&[0.0, 6.0], 30, 1.0, 8));
        let mut prev: Option<KmeansResult> = None;
        let mut last_w = f64::INFINITY;
        for k in 1..=8 {
            let r = kmeans_monotone_step(&points, k, 13, DEFAULT_MAX_ITERS, prev.as_ref()).unwrap();
            assert!(
                r.inertia <= last_w + 1e-9,
                "W_{k} = {} exceeds W_{} = {last_w}",
                r.inertia,
                k - 1
            );
            last_w = r.inertia;
            prev = Some(r);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// The Lloyd objective never increases across iterations.
        #[test]
        fn objective_trace_non_increasing(
            seed in 0u64..500,
            k in 1usize..5,
            n in 8usize..40,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<Vector> = (0..n)
                .map(|_| Vector(vec![
                    rng.random_range(-5.0f32..5.0),
                    rng.random_range(-5.0f32..5.0),
                    rng.random_range(-5.0f32..5.0),
                ]))
                .collect();
            let r = kmeans(&points, k, seed, DEFAULT_MAX_ITERS).unwrap();
            for w in r.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "trace rose: {:?}", r.inertia_trace);
            }
            prop_assert!(r.assignments.iter().all(|&a| a < k));
        }
    }

    #[test]
    fn uniform_sample_is_deterministic_and_stratified() {
        let assignments: Vec<ClusterAssignment> = (0..30)
            .map(|i| ClusterAssignment {
                doc_id: format!("d{i:02}"),
                cluster: i % 3,
            })
            .collect();
        let a = cluster_uniform_sample(&assignments, 4, 42);
        let b = cluster_uniform_sample(&assignments, 4, 42);
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        // Each sampled id belongs to the cluster segment it was drawn for.
        for (i, id) in a.iter().enumerate() {
            let cluster = i / 4;
            let n: usize = id[1..].parse().unwrap();
            assert_eq!(n % 3, cluster);
        }
        // No duplicates.
        let mut dedup = a.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 12);

        let c = cluster_uniform_sample(&assignments, 4, 43);
        assert_ne!(a, c, "different seeds should draw different samples");
    }

    #[test]
    fn uniform_sample_caps_at_cluster_size() {
        let assignments = vec![
            ClusterAssignment {
                doc_id: "a".into(),
                cluster: 0,
            },
            ClusterAssignment {
                doc_id: "b".into(),
                cluster: 0,
            },
        ];
        let s = cluster_uniform_sample(&assignments, 10, 1);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn assignments_csv_round_trip() {
        let assignments: Vec<ClusterAssignment> = (0..5)
            .map(|i| ClusterAssignment {
                doc_id: format!("doc-{i}"),
                cluster: i % 2,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assign.csv");
        write_assignments_csv(&path, &assignments).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("doc_id,cluster\n"));
        let back = read_assignments_csv(&path).unwrap();
        assert_eq!(back, assignments);
    }

    #[test]
    fn csv_rejects_commas_in_ids() {
        let bad = vec![ClusterAssignment {
            doc_id: "a,b".into(),
            cluster: 0,
        }];
        let dir = tempfile::tempdir().unwrap();
        assert!(write_assignments_csv(dir.path().join("x.csv"), &bad).is_err());
    }
}
