//! Deterministic synthetic retrieval benchmark with planted positives.
//!
//! Corpus documents are bags of unit-norm tokens drawn from per-cluster and
//! shared vocabularies that live near a low-dimensional latent subspace,
//! plus a few fresh tokens unique to each document. Each query perturbs a
//! token subset of one planted positive document, so exhaustive MaxSim has
//! a strong planted signal while single-vector pooling does not.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::ndcg::Qrels;
use crate::model::{MultiVector, Vector};
use crate::seed::derive_seed;

pub const DEFAULT_BENCH_SEED: u64 = 42;

/// Spread of cluster centers in latent space.
const CLUSTER_SPREAD: f64 = 2.0;
/// Spread of shared-vocabulary latent points.
const SHARED_SPREAD: f64 = 2.0;
/// Spread of per-document unique-token latent points.
const UNIQUE_SPREAD: f64 = 2.0;
/// Out-of-subspace component mixed into every vocabulary token. Keeps the
/// token sample full rank so projection fitting never sees a rank deficit.
const VOCAB_SPILL: f64 = 0.15;
/// Out-of-subspace component of unique tokens.
const UNIQUE_SPILL: f64 = 0.4;
/// Probability that a non-unique token comes from the shared vocabulary.
const SHARED_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenCountDist {
    Fixed(usize),
    /// Inclusive bounds.
    Uniform {
        lo: usize,
        hi: usize,
    },
}

impl TokenCountDist {
    pub fn min(&self) -> usize {
        match *self {
            TokenCountDist::Fixed(n) => n,
            TokenCountDist::Uniform { lo, .. } => lo,
        }
    }

    pub fn max(&self) -> usize {
        match *self {
            TokenCountDist::Fixed(n) => n,
            TokenCountDist::Uniform { hi, .. } => hi,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TokenCountDist::Fixed(n) if n >= 1 => Ok(()),
            TokenCountDist::Uniform { lo, hi } if lo >= 1 && lo <= hi => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "token count distribution {self:?} must stay at or above 1"
            ))),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            TokenCountDist::Fixed(n) => n,
            TokenCountDist::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub n_docs: usize,
    pub n_queries: usize,
    pub dim: usize,
    pub n_clusters: usize,
    /// Dimension of the latent subspace the vocabularies live near.
    pub latent_dim: usize,
    /// Vocabulary tokens per cluster.
    pub cluster_vocab: usize,
    /// Corpus-wide vocabulary tokens shared across clusters.
    pub shared_vocab: usize,
    /// Fresh tokens per document, found nowhere else in the corpus.
    pub unique_tokens_per_doc: usize,
    pub doc_tokens: TokenCountDist,
    /// Tokens sampled from the positive document into each query.
    pub query_tokens: usize,
    /// Relative perturbation magnitude applied to query tokens.
    pub query_noise: f64,
    /// Relative perturbation when instantiating a vocabulary token in a doc.
    pub doc_jitter: f64,
    /// Relevance grade recorded for each planted positive.
    pub positive_grade: u32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: DEFAULT_BENCH_SEED,
            n_docs: 10_000,
            n_queries: 100,
            dim: 64,
            n_clusters: 10,
            latent_dim: 12,
            cluster_vocab: 120,
            shared_vocab: 240,
            unique_tokens_per_doc: 6,
            doc_tokens: TokenCountDist::Uniform { lo: 40, hi: 60 },
            query_tokens: 8,
            query_noise: 0.25,
            doc_jitter: 0.05,
            positive_grade: 1,
        }
    }
}

impl BenchConfig {
    /// Small corpus whose queries copy their positive document verbatim, so
    /// exhaustive MaxSim must rank every positive first.
    pub fn zero_noise(seed: u64) -> Self {
        BenchConfig {
            seed,
            n_docs: 500,
            n_queries: 50,
            dim: 32,
            n_clusters: 5,
            latent_dim: 8,
            cluster_vocab: 60,
            shared_vocab: 120,
            unique_tokens_per_doc: 3,
            doc_tokens: TokenCountDist::Uniform { lo: 10, hi: 16 },
            query_tokens: 16,
            query_noise: 0.0,
            doc_jitter: 0.02,
            positive_grade: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.doc_tokens.validate()?;
        let checks: [(bool, &str); 10] = [
            (self.n_docs >= 1, "n_docs must be at least 1"),
            (self.n_queries >= 1, "n_queries must be at least 1"),
            (
                self.n_docs >= self.n_queries,
                "n_docs must be at least n_queries",
            ),
            (self.dim >= 1, "dim must be at least 1"),
            (self.latent_dim >= 1, "latent_dim must be at least 1"),
            (
                self.latent_dim <= self.dim,
                "latent_dim must not exceed dim",
            ),
            (self.n_clusters >= 1, "n_clusters must be at least 1"),
            (self.cluster_vocab >= 1, "cluster_vocab must be at least 1"),
            (self.query_tokens >= 1, "query_tokens must be at least 1"),
            (
                self.positive_grade >= 1,
                "positive_grade must be at least 1",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidInput(msg.to_string()));
            }
        }
        for (value, name) in [
            (self.query_noise, "query_noise"),
            (self.doc_jitter, "doc_jitter"),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: BenchConfig,
    pub docs: Vec<MultiVector>,
    pub queries: Vec<MultiVector>,
    pub qrels: Qrels,
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

fn doc_id(i: usize, n_docs: usize) -> String {
    format!("d{i:0width$}", width = id_width(n_docs))
}

fn query_id(j: usize, n_queries: usize) -> String {
    format!("q{j:0width$}", width = id_width(n_queries))
}

/// Row-major dim × latent matrix with orthonormal columns.
fn orthonormal_basis(dim: usize, latent: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let g = DMatrix::<f64>::from_fn(dim, latent, |_, _| rng.sample(StandardNormal));
    let q = g.qr().q();
    let mut rows = Vec::with_capacity(dim * latent);
    for i in 0..dim {
        for k in 0..latent {
            rows.push(q[(i, k)]);
        }
    }
    rows
}

fn normalize_to_vector(raw: &[f64]) -> Vector {
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Gaussian draws make a zero vector unreachable; guard anyway.
    let scale = if norm > 0.0 { 1.0 / norm } else { 0.0 };
    Vector(raw.iter().map(|v| (v * scale) as f32).collect())
}

/// Unit token at basis·z plus an out-of-subspace spill component.
fn token_from_latent(
    basis: &[f64],
    dim: usize,
    latent: usize,
    z: &[f64],
    spill: f64,
    rng: &mut ChaCha8Rng,
) -> Vector {
    let mut raw = vec![0.0f64; dim];
    for (i, out) in raw.iter_mut().enumerate() {
        let row = &basis[i * latent..(i + 1) * latent];
        *out = row.iter().zip(z).map(|(w, zk)| w * zk).sum();
        if spill > 0.0 {
            *out += spill * rng.sample::<f64, _>(StandardNormal);
        }
    }
    normalize_to_vector(&raw)
}

fn latent_point(
    latent: usize,
    center: Option<&[f64]>,
    spread: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    (0..latent)
        .map(|k| {
            let base = center.map_or(0.0, |c| c[k]);
            base + spread * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Moves a unit vector by `magnitude` along a random direction, then
/// renormalizes. Zero magnitude returns the input bit for bit.
fn perturb(v: &[f32], magnitude: f64, rng: &mut ChaCha8Rng) -> Vector {
    if magnitude == 0.0 {
        return Vector(v.to_vec());
    }
    let dir: Vec<f64> = (0..v.len()).map(|_| rng.sample(StandardNormal)).collect();
    let dir_norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    let raw: Vec<f64> = v
        .iter()
        .zip(&dir)
        .map(|(&vi, di)| vi as f64 + magnitude * di / dir_norm)
        .collect();
    normalize_to_vector(&raw)
}

struct Vocab {
    clusters: Vec<Vec<Vector>>,
    shared: Vec<Vector>,
}

fn build_vocab(cfg: &BenchConfig, basis: &[f64], rng: &mut ChaCha8Rng) -> Vocab {
    let (dim, latent) = (cfg.dim, cfg.latent_dim);
    let centers: Vec<Vec<f64>> = (0..cfg.n_clusters)
        .map(|_| latent_point(latent, None, CLUSTER_SPREAD, rng))
        .collect();
    let clusters = centers
        .iter()
        .map(|center| {
            (0..cfg.cluster_vocab)
                .map(|_| {
                    let z = latent_point(latent, Some(center), 1.0, rng);
                    token_from_latent(basis, dim, latent, &z, VOCAB_SPILL, rng)
                })
                .collect()
        })
        .collect();
    let shared = (0..cfg.shared_vocab)
        .map(|_| {
            let z = latent_point(latent, None, SHARED_SPREAD, rng);
            token_from_latent(basis, dim, latent, &z, VOCAB_SPILL, rng)
        })
        .collect();
    Vocab { clusters, shared }
}

fn build_doc(cfg: &BenchConfig, basis: &[f64], vocab: &Vocab, i: usize) -> Result<MultiVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 3_000_000 + i as u64));
    let cluster = &vocab.clusters[i % cfg.n_clusters];
    let count = cfg.doc_tokens.sample(&mut rng);
    let unique = cfg.unique_tokens_per_doc.min(count);
    let mut tokens = Vec::with_capacity(count);
    for _ in 0..count - unique {
        let source = if !vocab.shared.is_empty() && rng.random::<f64>() < SHARED_FRACTION {
            &vocab.shared[rng.random_range(0..vocab.shared.len())]
        } else {
            &cluster[rng.random_range(0..cluster.len())]
        };
        tokens.push(perturb(source, cfg.doc_jitter, &mut rng));
    }
    for _ in 0..unique {
        let z = latent_point(cfg.latent_dim, None, UNIQUE_SPREAD, &mut rng);
        tokens.push(token_from_latent(
            basis,
            cfg.dim,
            cfg.latent_dim,
            &z,
            UNIQUE_SPILL,
            &mut rng,
        ));
    }
    MultiVector::new(doc_id(i, cfg.n_docs), tokens)
}

fn build_query(cfg: &BenchConfig, positive: &MultiVector, j: usize) -> Result<MultiVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 5_000_000 + j as u64));
    let count = positive.token_count();
    let picked: Vec<usize> = if cfg.query_tokens >= count {
        (0..count).collect()
    } else {
        // Partial Fisher-Yates; output keeps selection order.
        let mut idx: Vec<usize> = (0..count).collect();
        for t in 0..cfg.query_tokens {
            let swap = t + rng.random_range(0..count - t);
            idx.swap(t, swap);
        }
        idx.truncate(cfg.query_tokens);
        idx
    };
    let tokens: Vec<Vector> = picked
        .into_iter()
        .map(|ti| perturb(positive.token(ti), cfg.query_noise, &mut rng))
        .collect();
    MultiVector::new(query_id(j, cfg.n_queries), tokens)
}

/// Generates the corpus, queries, and qrels. Fully deterministic per seed
/// and independent of worker count.
pub fn generate_benchmark(cfg: &BenchConfig) -> Result<Benchmark> {
    cfg.validate()?;
    let mut basis_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let basis = orthonormal_basis(cfg.dim, cfg.latent_dim, &mut basis_rng);
    let mut vocab_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let vocab = build_vocab(cfg, &basis, &mut vocab_rng);

    let docs: Vec<MultiVector> = (0..cfg.n_docs)
        .into_par_iter()
        .map(|i| build_doc(cfg, &basis, &vocab, i))
        .collect::<Result<_>>()?;

    let mut assign_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 4));
    let positives: Vec<usize> = (0..cfg.n_queries)
        .map(|_| assign_rng.random_range(0..cfg.n_docs))
        .collect();

    let queries: Vec<MultiVector> = positives
        .par_iter()
        .enumerate()
        .map(|(j, &pi)| build_query(cfg, &docs[pi], j))
        .collect::<Result<_>>()?;

    let mut qrels = Qrels::new();
    for (j, &pi) in positives.iter().enumerate() {
        qrels.insert(
            &query_id(j, cfg.n_queries),
            docs[pi].id(),
            cfg.positive_grade,
        )?;
    }
    Ok(Benchmark {
        config: cfg.clone(),
        docs,
        queries,
        qrels,
    })
}

/// Planted positive doc ids keyed by query id, extracted from the qrels.
pub fn planted_positives(bench: &Benchmark) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for query in bench.qrels.queries() {
        if let Some(judged) = bench.qrels.query_judgments(query) {
            for (doc, &rel) in judged {
                if rel > 0 {
                    map.insert(query.to_string(), doc.clone());
                }
            }
        }
    }
    map
}
