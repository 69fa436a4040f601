//! Contrastive InfoNCE loss over late-interaction similarities, with
//! analytic gradients for verification.
//!
//! All arithmetic runs in f64 (inputs are lifted from f32) so gradients
//! can be checked against central finite differences at h = 1e-4.

use crate::error::{Error, Result};
use crate::model::{MultiVector, SimilarityKind};

#[derive(Debug, Clone)]
pub struct LossInput {
    pub query: MultiVector,
    pub positive: MultiVector,
    pub negatives: Vec<MultiVector>,
    pub tau: f64,
    pub sim: SimilarityKind,
}

impl LossInput {
    fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::NonPositiveTemperature { tau: self.tau });
        }
        let dim = self.query.dim();
        for doc in std::iter::once(&self.positive).chain(&self.negatives) {
            if doc.dim() != dim {
                return Err(Error::DimMismatch {
                    context: format!("loss doc `{}`", doc.id()),
                    expected: dim,
                    found: doc.dim(),
                });
            }
        }
        Ok(())
    }
}

fn dot_f64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

fn cosine_f64(a: &[f32], b: &[f32]) -> f64 {
    let na = dot_f64(a, a).sqrt();
    let nb = dot_f64(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot_f64(a, b) / (na * nb)
}

/// MaxSim in f64 with argmax routing: for each query token, the best doc
/// token index (lowest index wins ties) and the summed score.
fn maxsim_routed(query: &MultiVector, doc: &MultiVector, sim: SimilarityKind) -> (f64, Vec<usize>) {
    let mut total = 0.0f64;
    let mut routes = Vec::with_capacity(query.token_count());
    for q in query.tokens() {
        let mut best = f64::NEG_INFINITY;
        let mut best_j = 0usize;
        for (j, d) in doc.tokens().enumerate() {
            let s = match sim {
                SimilarityKind::Dot => dot_f64(q, d),
                SimilarityKind::Cosine => cosine_f64(q, d),
            };
            if s > best {
                best = s;
                best_j = j;
            }
        }
        total += best;
        routes.push(best_j);
    }
    (total, routes)
}

/// Softmax pieces shared by loss and gradient: scores s_d for
/// d = positive then negatives, the loss, and the softmax weights p_d.
struct Evaluated {
    loss: f64,
    softmax: Vec<f64>,
    routes: Vec<Vec<usize>>,
}

fn evaluate(input: &LossInput) -> Result<Evaluated> {
    input.validate()?;
    let mut scores = Vec::with_capacity(1 + input.negatives.len());
    let mut routes = Vec::with_capacity(1 + input.negatives.len());
    for doc in std::iter::once(&input.positive).chain(&input.negatives) {
        let (s, r) = maxsim_routed(&input.query, doc, input.sim);
        scores.push(s / input.tau);
        routes.push(r);
    }
    // Log-sum-exp with max shift; the positive is scores[0].
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = m - scores[0] + z.ln();
    let softmax = exps.iter().map(|&e| e / z).collect();
    Ok(Evaluated {
        loss,
        softmax,
        routes,
    })
}

/// InfoNCE with late-interaction similarity: the negative log probability
/// of the positive among {positive} and the negatives, at temperature tau.
/// Exactly 0 when there are no negatives.
pub fn info_nce_loss(input: &LossInput) -> Result<f64> {
    Ok(evaluate(input)?.loss)
}

/// Gradients of [`info_nce_loss`] with respect to every token coordinate.
/// Layout mirrors the inputs: per token, per coordinate, in f64.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients {
    pub loss: f64,
    pub query: Vec<Vec<f64>>,
    pub positive: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<Vec<f64>>>,
}

/// Analytic gradient, DOT similarity only. Each document's score routes
/// every query token to one doc token (the MaxSim argmax, lowest index on
/// ties); the chain rule then spreads the softmax coefficients
/// (p_d - [d = positive]) / tau along those routes.
pub fn info_nce_gradient(input: &LossInput) -> Result<LossGradients> {
    if input.sim != SimilarityKind::Dot {
        return Err(Error::GradientRequiresDot);
    }
    let ev = evaluate(input)?;
    let dim = input.query.dim();
    let q_tokens = input.query.token_count();

    let mut query_grad = vec![vec![0.0f64; dim]; q_tokens];
    let mut doc_grads: Vec<Vec<Vec<f64>>> = std::iter::once(&input.positive)
        .chain(&input.negatives)
        .map(|d| vec![vec![0.0f64; dim]; d.token_count()])
        .collect();

    for (d_idx, doc) in std::iter::once(&input.positive)
        .chain(&input.negatives)
        .enumerate()
    {
        let coeff = (ev.softmax[d_idx] - if d_idx == 0 { 1.0 } else { 0.0 }) / input.tau;
        if coeff == 0.0 {
            continue;
        }
        for (i, q) in input.query.tokens().enumerate() {
            let j = ev.routes[d_idx][i];
            let d = doc.token(j);
            for c in 0..dim {
                query_grad[i][c] += coeff * d[c] as f64;
                doc_grads[d_idx][j][c] += coeff * q[c] as f64;
            }
        }
    }

    let positive = doc_grads.remove(0);
    Ok(LossGradients {
        loss: ev.loss,
        query: query_grad,
        positive,
        negatives: doc_grads,
    })
}
