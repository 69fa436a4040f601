//! Gap statistic for choosing the cluster count.
//!
//! Compares the within-cluster dispersion of the data against reference
//! datasets drawn uniformly over the data's bounding box. W_k values come
//! from a warm-started k sweep (see `kmeans_monotone_step`), which makes
//! the dispersion curve non-increasing in k by construction.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::curation::cluster::{kmeans_monotone_step, KmeansResult};
use crate::error::{Error, Result};
use crate::model::Vector;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct GapCurve {
    /// k = 1 ..= k_max, aligned with the per-k vectors below.
    pub k_values: Vec<usize>,
    /// Within-cluster sum of squared distances on the data, per k.
    pub within_dispersion: Vec<f64>,
    /// Gap(k) = mean_b log W_k(ref_b) - log W_k(data).
    pub gap: Vec<f64>,
    /// s_k = sd_b(log W_k(ref_b)) * sqrt(1 + 1/B).
    pub sd: Vec<f64>,
    /// Smallest k with Gap(k) >= Gap(k+1) - s_{k+1}; k_max if none.
    pub chosen_k: usize,
}

/// W_k for k = 1..=k_max via the warm-started sweep, optionally keeping
/// each k's full clustering result.
fn dispersion_sweep(
    points: &[Vector],
    k_max: usize,
    seed: u64,
    max_iters: usize,
    keep: bool,
) -> Result<(Vec<f64>, Vec<KmeansResult>)> {
    let mut w = Vec::with_capacity(k_max);
    let mut results = Vec::new();
    let mut prev: Option<KmeansResult> = None;
    for k in 1..=k_max {
        let r = kmeans_monotone_step(
            points,
            k,
            derive_seed(seed, k as u64),
            max_iters,
            prev.as_ref(),
        )?;
        w.push(r.inertia);
        if keep {
            results.push(r.clone());
        }
        prev = Some(r);
    }
    Ok((w, results))
}

/// Selects k in 1..=k_max by the gap statistic with `refs` reference
/// draws, and returns the curve plus the data clustering at the chosen k.
pub fn gap_select_and_cluster(
    points: &[Vector],
    k_max: usize,
    refs: usize,
    seed: u64,
    max_iters: usize,
) -> Result<(GapCurve, KmeansResult)> {
    if k_max < 2 {
        return Err(Error::InvalidInput(format!(
            "k_max must be at least 2, got {k_max}"
        )));
    }
    if refs < 5 {
        return Err(Error::InvalidInput(format!(
            "reference draw count must be at least 5, got {refs}"
        )));
    }
    if points.len() <= k_max {
        return Err(Error::KTooLarge {
            k: k_max,
            points: points.len(),
        });
    }
    let dim = points[0].dim();

    // Bounding box of the data; degenerate in every dimension means all
    // points are identical and the statistic is undefined.
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for (d, &v) in p.iter().enumerate() {
            lo[d] = lo[d].min(v as f64);
            hi[d] = hi[d].max(v as f64);
        }
    }
    if lo.iter().zip(&hi).all(|(a, b)| a == b) {
        return Err(Error::DegenerateData {
            reason: "all points identical".to_string(),
        });
    }

    let (w_data, results) = dispersion_sweep(points, k_max, derive_seed(seed, 0), max_iters, true)?;
    if w_data.iter().any(|&w| w <= 0.0) {
        return Err(Error::DegenerateData {
            reason: format!("zero dispersion below k_max = {k_max}; too few distinct points"),
        });
    }

    let n = points.len();
    let mut log_w_refs: Vec<Vec<f64>> = Vec::with_capacity(refs);
    for b in 0..refs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + b as u64));
        let ref_points: Vec<Vector> = (0..n)
            .map(|_| {
                Vector(
                    (0..dim)
                        .map(|d| {
                            if lo[d] == hi[d] {
                                lo[d] as f32
                            } else {
                                rng.random_range(lo[d]..hi[d]) as f32
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        let (w_ref, _) = dispersion_sweep(
            &ref_points,
            k_max,
            derive_seed(seed, 2000 + b as u64),
            max_iters,
            false,
        )?;
        log_w_refs.push(
            w_ref
                .iter()
                .map(|&w| w.max(f64::MIN_POSITIVE).ln())
                .collect(),
        );
    }

    let b_count = refs as f64;
    let mut gap = Vec::with_capacity(k_max);
    let mut sd = Vec::with_capacity(k_max);
    for ki in 0..k_max {
        let logs: Vec<f64> = log_w_refs.iter().map(|r| r[ki]).collect();
        let mean = logs.iter().sum::<f64>() / b_count;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / b_count;
        gap.push(mean - w_data[ki].ln());
        sd.push(var.sqrt() * (1.0 + 1.0 / b_count).sqrt());
    }

    let mut chosen_k = k_max;
    for ki in 0..k_max - 1 {
        if gap[ki] >= gap[ki + 1] - sd[ki + 1] {
            chosen_k = ki + 1;
            break;
        }
    }

    let result = results[chosen_k - 1].clone();
    Ok((
        GapCurve {
            k_values: (1..=k_max).collect(),
            within_dispersion: w_data,
            gap,
            sd,
            chosen_k,
        },
        result,
    ))
}

/// Gap-statistic selection alone; see [`gap_select_and_cluster`].
pub fn gap_statistic_select_k(
    points: &[Vector],
    k_max: usize,
    refs: usize,
    seed: u64,
    max_iters: usize,
) -> Result<GapCurve> {
    gap_select_and_cluster(points, k_max, refs, seed, max_iters).map(|(curve, _)| curve)
}
