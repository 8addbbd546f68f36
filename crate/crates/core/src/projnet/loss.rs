//! Weighted contrastive losses over anchor/augmentation projections.
//!
//! Both losses average over the number of (anchor, augmentation) pairs in the
//! batch and return gradients with respect to every projection.

use serde::{Deserialize, Serialize};

/// Projections of one batch: anchor `i` has augmentations `augs[i]`, each
/// paired with its similarity weight in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedBatch {
    pub anchors: Vec<Vec<f64>>,
    pub augs: Vec<Vec<(Vec<f64>, f64)>>,
}

impl ProjectedBatch {
    pub fn pair_count(&self) -> usize {
        self.augs.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_anchors: Vec<Vec<f64>>,
    pub grad_augs: Vec<Vec<Vec<f64>>>,
}

impl LossOutput {
    fn zeros(batch: &ProjectedBatch) -> Self {
        Self {
            loss: 0.0,
            grad_anchors: batch.anchors.iter().map(|a| vec![0.0; a.len()]).collect(),
            grad_augs: batch
                .augs
                .iter()
                .map(|row| row.iter().map(|(q, _)| vec![0.0; q.len()]).collect())
                .collect(),
        }
    }
}

fn diff_and_distance(p: &[f64], q: &[f64]) -> (Vec<f64>, f64) {
    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let d = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    (diff, d)
}

/// `s d² + (1 − s) max(0, δ − d)²` per pair. The push term contributes no
/// gradient at `d = 0` or `d ≥ δ`.
pub fn loss_wscl(batch: &ProjectedBatch, margin: f64) -> LossOutput {
    let mut out = LossOutput::zeros(batch);
    let pairs = batch.pair_count();
    if pairs == 0 {
        return out;
    }
    let inv = 1.0 / pairs as f64;
    for (i, (p, row)) in batch.anchors.iter().zip(&batch.augs).enumerate() {
        for (j, (q, s)) in row.iter().enumerate() {
            let (diff, d) = diff_and_distance(p, q);
            let hinge = (margin - d).max(0.0);
            out.loss += inv * (s * d * d + (1.0 - s) * hinge * hinge);
            // dL/dp = [2s − 2(1−s)(δ−d)/d] (p − q)
            let push = if d > 0.0 && d < margin {
                2.0 * (1.0 - s) * hinge / d
            } else {
                0.0
            };
            let coef = inv * (2.0 * s - push);
            for (k, dk) in diff.iter().enumerate() {
                out.grad_anchors[i][k] += coef * dk;
                out.grad_augs[i][j][k] -= coef * dk;
            }
        }
    }
    out
}

/// Distance used inside the CWCL softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CwclDistance {
    /// `‖p − q‖₂`
    #[default]
    Euclidean,
    /// `−p·q`, i.e. negative cosine on unit vectors.
    NegCosine,
}

/// `−Σ_j s_ij log softmax_j(−d_ij / τ)` per anchor, softmax over that
/// anchor's own augmentations.
pub fn loss_cwcl(batch: &ProjectedBatch, temperature: f64, distance: CwclDistance) -> LossOutput {
    let mut out = LossOutput::zeros(batch);
    let pairs = batch.pair_count();
    if pairs == 0 {
        return out;
    }
    let inv = 1.0 / pairs as f64;
    for (i, (p, row)) in batch.anchors.iter().zip(&batch.augs).enumerate() {
        if row.is_empty() {
            continue;
        }
        let geo: Vec<(Vec<f64>, f64)> = row
            .iter()
            .map(|(q, _)| match distance {
                CwclDistance::Euclidean => diff_and_distance(p, q),
                CwclDistance::NegCosine => (Vec::new(), -p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>()),
            })
            .collect();
        let logits: Vec<f64> = geo.iter().map(|(_, d)| -d / temperature).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let weight_sum: f64 = row.iter().map(|(_, s)| s).sum();
        for (j, ((q, s), (diff, d))) in row.iter().zip(&geo).enumerate() {
            out.loss -= inv * s * (logits[j] - lse);
            // dL/dlogit_j = inv (S softmax_j − s_j); dlogit/dd = −1/τ
            let softmax = (logits[j] - lse).exp();
            let d_dist = -inv * (weight_sum * softmax - s) / temperature;
            if d_dist == 0.0 {
                continue;
            }
            match distance {
                CwclDistance::Euclidean => {
                    if *d > 0.0 {
                        for (k, dk) in diff.iter().enumerate() {
                            out.grad_anchors[i][k] += d_dist * dk / d;
                            out.grad_augs[i][j][k] -= d_dist * dk / d;
                        }
                    }
                }
                CwclDistance::NegCosine => {
                    for k in 0..p.len() {
                        out.grad_anchors[i][k] -= d_dist * q[k];
                        out.grad_augs[i][j][k] -= d_dist * p[k];
                    }
                }
            }
        }
    }
    out
}
