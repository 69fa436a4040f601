//! PCA dimension reduction for token embeddings.
//!
//! Fitting is deterministic: principal axes come from a symmetric
//! eigendecomposition of the sample covariance (equivalent to the SVD of
//! the mean-centered sample), computed in f64, with each axis sign-fixed
//! so its largest-magnitude entry is positive.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{MultiVector, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    target_dim: usize,
    source_dim: usize,
    /// Row-major target_dim x source_dim; rows are orthonormal.
    entries: Vec<f64>,
    /// Sample mean subtracted before projecting.
    mean: Vec<f64>,
    /// Fingerprint of the sample this matrix was fitted on.
    fitted_on: String,
}

impl ProjectionMatrix {
    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.source_dim..(i + 1) * self.source_dim]
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn fitted_on(&self) -> &str {
        &self.fitted_on
    }

    /// Projects one vector: P * (x - mean), in f64.
    pub fn project(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.source_dim {
            return Err(Error::DimMismatch {
                context: "projection input".to_string(),
                expected: self.source_dim,
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .map(|(&v, &m)| v as f64 - m)
            .collect();
        Ok((0..self.target_dim)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(&centered)
                    .map(|(&p, &c)| p * c)
                    .sum()
            })
            .collect())
    }

    pub fn project_vector(&self, x: &Vector) -> Result<Vector> {
        Ok(Vector(self.project(x)?.iter().map(|&v| v as f32).collect()))
    }
}

/// FNV-1a over the sample shape and raw bytes; identifies what a
/// projection was fitted on.
fn sample_fingerprint(sample: &[Vector], dim: usize) -> String {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for byte in (sample.len() as u64).to_le_bytes() {
        eat(byte);
    }
    for byte in (dim as u64).to_le_bytes() {
        eat(byte);
    }
    for v in sample {
        for &value in v.iter() {
            for byte in value.to_le_bytes() {
                eat(byte);
            }
        }
    }
    format!("fnv1a:{h:016x}")
}

/// Fits a PCA projection onto the top `target_dim` principal axes of the
/// mean-centered sample.
pub fn fit_projection(sample: &[Vector], target_dim: usize) -> Result<ProjectionMatrix> {
    if target_dim == 0 {
        return Err(Error::InvalidInput(
            "projection target_dim must be at least 1".to_string(),
        ));
    }
    if sample.len() <= target_dim {
        return Err(Error::InsufficientSample {
            target_dim,
            got: sample.len(),
        });
    }
    let source_dim = sample[0].dim();
    if target_dim >= source_dim {
        return Err(Error::InsufficientTargetReduction {
            source_dim,
            target_dim,
        });
    }
    for (i, v) in sample.iter().enumerate() {
        if v.dim() != source_dim {
            return Err(Error::DimMismatch {
                context: format!("projection sample vector {i}"),
                expected: source_dim,
                found: v.dim(),
            });
        }
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "projection sample vector {i} has non-finite values"
            )));
        }
    }

    let n = sample.len();
    let mut mean = vec![0.0f64; source_dim];
    for v in sample {
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m += x as f64;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let centered = DMatrix::from_fn(n, source_dim, |r, c| sample[r][c] as f64 - mean[c]);
    let cov = centered.transpose() * &centered;
    let eigen = cov.symmetric_eigen();

    // Order axes by descending eigenvalue; singular values of the centered
    // sample are the square roots.
    let mut order: Vec<usize> = (0..source_dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let singular: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0).sqrt())
        .collect();
    // Rank test on the eigenvalue scale: zero eigenvalues of the Gram
    // matrix surface as numerical noise of order eps * sigma_max^2, so a
    // singular-value-scale cutoff would overcount.
    let tol = singular[0] * singular[0] * (n.max(source_dim) as f64) * f64::EPSILON;
    let rank = singular.iter().take_while(|&&s| s * s > tol).count();
    if rank < target_dim {
        return Err(Error::RankDeficient { rank, target_dim });
    }

    let mut entries = Vec::with_capacity(target_dim * source_dim);
    for &col in order.iter().take(target_dim) {
        let axis: DVector<f64> = eigen.eigenvectors.column(col).into();
        // Sign convention: largest-magnitude entry positive, first index
        // winning ties, so refitting the same sample is reproducible.
        let mut argmax = 0;
        for i in 1..source_dim {
            if axis[i].abs() > axis[argmax].abs() {
                argmax = i;
            }
        }
        let flip = if axis[argmax] < 0.0 { -1.0 } else { 1.0 };
        entries.extend(axis.iter().map(|&v| v * flip));
    }

    Ok(ProjectionMatrix {
        target_dim,
        source_dim,
        entries,
        mean,
        fitted_on: sample_fingerprint(sample, source_dim),
    })
}

/// Projects every token of a multi-vector; with `renormalize`, projected
/// tokens are L2-normalized (zero projections pass through unchanged).
pub fn apply_projection(
    mv: &MultiVector,
    projection: &ProjectionMatrix,
    renormalize: bool,
) -> Result<MultiVector> {
    if mv.dim() != projection.source_dim {
        return Err(Error::DimMismatch {
            context: format!("projecting `{}`", mv.id()),
            expected: projection.source_dim,
            found: mv.dim(),
        });
    }
    let mut data = Vec::with_capacity(mv.token_count() * projection.target_dim);
    for token in mv.tokens() {
        let mut y = projection.project(token)?;
        if renormalize {
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in y.iter_mut() {
                    *v /= norm;
                }
            }
        }
        data.extend(y.iter().map(|&v| v as f32));
    }
    MultiVector::from_flat(mv.id(), projection.target_dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rank_limited_sample(
        n: usize,
        dim: usize,
        rank: usize,
        scale: f32,
        seed: u64,
    ) -> Vec<Vector> {
        // Points in the span of `rank` fixed axis-aligned-ish directions.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis: Vec<Vec<f32>> = (0..rank)
            .map(|r| {
                (0..dim)
                    .map(|c| {
                        if c == r {
                            1.0
                        } else {
                            0.3 * ((r + c) as f32).sin()
                        }
                    })
                    .collect()
            })
            .collect();
        (0..n)
            .map(|_| {
                let mut v = vec![0.0f32; dim];
                for b in &basis {
                    let w: f32 = rng.random_range(-1.0..1.0) * scale;
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi += w * bi;
                    }
                }
                Vector(v)
            })
            .collect()
    }

    fn full_rank_sample(n: usize, dim: usize, scale: f32, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector((0..dim).map(|_| rng.random_range(-scale..scale)).collect()))
            .collect()
    }

    #[test]
    fn rows_are_orthonormal() {
        let sample = full_rank_sample(60, 8, 1.0, 1);
        let p = fit_projection(&sample, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = p.row(i).iter().zip(p.row(j)).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() <= 1e-8, "row {i} . row {j} = {dot}");
            }
        }
    }

    #[test]
    fn projection_never_expands_norms() {
        // Small magnitudes so f32 output rounding stays under the slack.
        let sample = full_rank_sample(80, 8, 0.02, 2);
        let p = fit_projection(&sample, 5).unwrap();
        for v in &sample {
            let centered_norm: f64 = v
                .iter()
                .zip(p.mean())
                .map(|(&x, &m)| (x as f64 - m).powi(2))
                .sum::<f64>()
                .sqrt();
            let y = p.project_vector(v).unwrap();
            let y_norm: f64 = y.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!(y_norm <= centered_norm + 1e-8);
        }
    }

    #[test]
    fn exact_rank_subspace_preserves_norms() {
        let sample = rank_limited_sample(50, 8, 3, 1.0, 3);
        let p = fit_projection(&sample, 3).unwrap();
        for v in &sample {
            let centered_norm2: f64 = v
                .iter()
                .zip(p.mean())
                .map(|(&x, &m)| (x as f64 - m).powi(2))
                .sum();
            let y = p.project(v).unwrap();
            let y_norm2: f64 = y.iter().map(|v| v * v).sum();
            assert!(
                (centered_norm2 - y_norm2).abs() <= 1e-8,
                "lost {} of {}",
                centered_norm2 - y_norm2,
                centered_norm2
            );
        }
    }

    #[test]
    fn rank_deficient_sample_is_rejected() {
        let sample = rank_limited_sample(40, 8, 3, 1.0, 4);
        match fit_projection(&sample, 5) {
            Err(Error::RankDeficient { rank, target_dim }) => {
                assert_eq!(rank, 3);
                assert_eq!(target_dim, 5);
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_all_identical_sample_is_rank_zero() {
        let sample: Vec<Vector> = (0..10).map(|_| Vector(vec![0.5, 0.5, 0.5, 0.5])).collect();
        match fit_projection(&sample, 2) {
            Err(Error::RankDeficient { rank, .. }) => assert_eq!(rank, 0),
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let sample = full_rank_sample(4, 8, 1.0, 5);
        assert!(matches!(
            fit_projection(&sample, 4),
            Err(Error::InsufficientSample { .. })
        ));
    }

    #[test]
    fn target_must_reduce() {
        let sample = full_rank_sample(20, 8, 1.0, 6);
        assert!(matches!(
            fit_projection(&sample, 8),
            Err(Error::InsufficientTargetReduction { .. })
        ));
    }

    #[test]
    fn sign_convention_and_determinism() {
        let sample = full_rank_sample(50, 6, 1.0, 7);
        let a = fit_projection(&sample, 3).unwrap();
        let b = fit_projection(&sample, 3).unwrap();
        assert_eq!(a, b);
        for i in 0..3 {
            let row = a.row(i);
            let mut argmax = 0;
            for j in 1..row.len() {
                if row[j].abs() > row[argmax].abs() {
                    argmax = j;
                }
            }
            assert!(row[argmax] > 0.0);
        }
    }

    #[test]
    fn projected_coordinate_variances_are_non_increasing() {
        let sample = full_rank_sample(200, 8, 1.0, 8);
        let p = fit_projection(&sample, 6).unwrap();
        let projected: Vec<Vec<f64>> = sample.iter().map(|v| p.project(v).unwrap()).collect();
        let n = projected.len() as f64;
        let variances: Vec<f64> = (0..6)
            .map(|c| {
                let mean: f64 = projected.iter().map(|y| y[c]).sum::<f64>() / n;
                projected.iter().map(|y| (y[c] - mean).powi(2)).sum::<f64>() / n
            })
            .collect();
        for w in variances.windows(2) {
            assert!(w[0] >= w[1] - 1e-9, "variances not sorted: {variances:?}");
        }
    }

    #[test]
    fn apply_projects_every_token_and_renormalizes() {
        let sample = full_rank_sample(60, 8, 1.0, 9);
        let p = fit_projection(&sample, 4).unwrap();
        let mv = MultiVector::new("d", full_rank_sample(5, 8, 1.0, 10)).unwrap();
        let projected = apply_projection(&mv, &p, true).unwrap();
        assert_eq!(projected.dim(), 4);
        assert_eq!(projected.token_count(), 5);
        for token in projected.tokens() {
            let norm: f64 = token
                .iter()
                .map(|&v| (v as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((norm - 1.0).abs() <= 1e-6);
        }
        let wrong_dim = MultiVector::new("q", full_rank_sample(2, 5, 1.0, 11)).unwrap();
        assert!(matches!(
            apply_projection(&wrong_dim, &p, false),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn fingerprint_tracks_sample_identity() {
        let a = full_rank_sample(30, 6, 1.0, 12);
        let mut b = a.clone();
        b[0].0[0] += 0.25;
        let pa = fit_projection(&a, 3).unwrap();
        let pb = fit_projection(&b, 3).unwrap();
        assert_ne!(pa.fitted_on(), pb.fitted_on());
        assert_eq!(pa.fitted_on(), fit_projection(&a, 3).unwrap().fitted_on());
    }
}
