//! Label-density metrics of a labeled embedding set.
//!
//! All neighbor queries are exact Euclidean k-NN with the point itself
//! excluded and ties broken by ascending index. Metrics are computed from a
//! neighbor graph plus a label vector, so label-shuffling baselines reuse one
//! graph for every repeat.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augmentor::AugmentationAction;
use crate::corpus::MarketLabel;
use crate::embedding::{Embedder, UnitVector};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const KL_SMOOTHING: f64 = 1e-9;
pub const DEFAULT_BASELINE_REPEATS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub key: String,
    pub vector: UnitVector,
    pub label: MarketLabel,
}

/// Class probabilities over the classes present in a point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution(pub Vec<f64>);

impl LabelDistribution {
    pub fn from_counts(counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        Self(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self.0.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    /// Add `eps` to every entry and renormalize.
    pub fn smoothed(&self, eps: f64) -> Self {
        let total: f64 = self.0.iter().map(|p| p + eps).sum();
        Self(self.0.iter().map(|p| (p + eps) / total).collect())
    }

    /// KL(self ‖ other), natural log.
    pub fn kl(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| p * (p / q).ln())
            .sum::<f64>()
            .max(0.0)
    }

    /// Jensen–Shannon divergence, log base 2.
    pub fn jsd(&self, other: &Self) -> f64 {
        let m: Vec<f64> = self.0.iter().zip(&other.0).map(|(p, q)| 0.5 * (p + q)).collect();
        let half = |a: &[f64]| -> f64 {
            a.iter()
                .zip(&m)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, mi)| p * (p / mi).log2())
                .sum()
        };
        (0.5 * half(&self.0) + 0.5 * half(&other.0)).clamp(0.0, 1.0)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact k nearest neighbors of every vector, self excluded, ties by index.
pub fn knn_indices(vectors: &[&[f64]], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = vectors.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k must satisfy 1 ≤ k < n = {n}, got {k}")));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    Ok((0..n)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(vectors[i], vectors[j]), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    GKnn,
    KnnAccuracy,
    Kl,
    Jsd,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::GKnn, Metric::KnnAccuracy, Metric::Kl, Metric::Jsd];

    pub fn name(self) -> &'static str {
        match self {
            Metric::GKnn => "g-KNN",
            Metric::KnnAccuracy => "KNN",
            Metric::Kl => "KL",
            Metric::Jsd => "JSD",
        }
    }
}

/// Neighbor lists plus dense class indices for a labeled point set.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    pub k: usize,
    pub neighbors: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl NeighborGraph {
    pub fn build(points: &[LabeledPoint], k: usize) -> Result<Self> {
        let vectors: Vec<&[f64]> = points.iter().map(|p| p.vector.as_slice()).collect();
        let neighbors = knn_indices(&vectors, k)?;
        let (labels, n_classes) = dense_labels(points.iter().map(|p| p.label));
        Ok(Self {
            k,
            neighbors,
            labels,
            n_classes,
        })
    }

    fn counts(&self, labels: &[usize], idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0usize; self.n_classes];
        for &j in idx {
            c[labels[j]] += 1;
        }
        c
    }

    /// Metric value with `labels` (dense indices) in place of the stored ones.
    pub fn evaluate_with(&self, metric: Metric, labels: &[usize]) -> f64 {
        let n = labels.len();
        let all: Vec<usize> = (0..n).collect();
        let global = LabelDistribution::from_counts(&self.counts(labels, &all));
        let global_smoothed = global.smoothed(KL_SMOOTHING);
        let per_point = |i: usize| -> f64 {
            let nb = &self.neighbors[i];
            match metric {
                Metric::KnnAccuracy => nb.iter().filter(|&&j| labels[j] == labels[i]).count() as f64 / nb.len() as f64,
                Metric::GKnn => {
                    if self.n_classes < 2 {
                        1.0
                    } else {
                        let local = LabelDistribution::from_counts(&self.counts(labels, nb));
                        1.0 - local.entropy() / (self.n_classes as f64).ln()
                    }
                }
                Metric::Kl => LabelDistribution::from_counts(&self.counts(labels, nb))
                    .smoothed(KL_SMOOTHING)
                    .kl(&global_smoothed),
                Metric::Jsd => LabelDistribution::from_counts(&self.counts(labels, nb)).jsd(&global),
            }
        };
        (0..n).map(per_point).sum::<f64>() / n as f64
    }

    pub fn evaluate(&self, metric: Metric) -> f64 {
        self.evaluate_with(metric, &self.labels)
    }

    /// Mean Shannon entropy (nats) of the local label distributions.
    pub fn mean_entropy(&self) -> f64 {
        let n = self.labels.len();
        (0..n)
            .map(|i| LabelDistribution::from_counts(&self.counts(&self.labels, &self.neighbors[i])).entropy())
            .sum::<f64>()
            / n as f64
    }

    /// Mean and population std of `metric` over `repeats` uniform label
    /// permutations. Repeat `r` draws from its own ChaCha stream, so the
    /// result does not depend on the thread count.
    pub fn shuffled_baseline(&self, metric: Metric, repeats: usize, seed: u64) -> Result<BaselineStats> {
        if repeats == 0 {
            return Err(Error::invalid("baseline repeats must be ≥ 1"));
        }
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(repeats);
        let chunk = repeats.div_ceil(threads);
        let mut values = vec![0.0; repeats];
        std::thread::scope(|scope| {
            for (c, out) in values.chunks_mut(chunk).enumerate() {
                scope.spawn(move || {
                    let mut labels = self.labels.clone();
                    for (off, slot) in out.iter_mut().enumerate() {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream((c * chunk + off) as u64);
                        labels.copy_from_slice(&self.labels);
                        labels.shuffle(&mut rng);
                        *slot = self.evaluate_with(metric, &labels);
                    }
                });
            }
        });
        Ok(BaselineStats::from_values(&values))
    }
}

fn dense_labels<I: IntoIterator<Item = MarketLabel>>(labels: I) -> (Vec<usize>, usize) {
    let raw: Vec<usize> = labels.into_iter().map(MarketLabel::index).collect();
    let mut present = [false; 3];
    raw.iter().for_each(|&l| present[l] = true);
    let mut map = [usize::MAX; 3];
    let mut c = 0;
    for (l, p) in present.iter().enumerate() {
        if *p {
            map[l] = c;
            c += 1;
        }
    }
    (raw.into_iter().map(|l| map[l]).collect(), c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub mean: f64,
    pub std: f64,
    pub repeats: usize,
}

impl BaselineStats {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            repeats: values.len(),
        }
    }

    pub fn standard_error(&self) -> f64 {
        self.std / (self.repeats as f64).sqrt()
    }
}

pub fn g_knn(points: &[LabeledPoint], k: usize) -> Result<f64> {
    Ok(NeighborGraph::build(points, k)?.evaluate(Metric::GKnn))
}

pub fn knn_accuracy(points: &[LabeledPoint], k: usize) -> Result<f64> {
    Ok(NeighborGraph::build(points, k)?.evaluate(Metric::KnnAccuracy))
}

pub fn kl_local_global(points: &[LabeledPoint], k: usize) -> Result<f64> {
    Ok(NeighborGraph::build(points, k)?.evaluate(Metric::Kl))
}

pub fn jsd_local_global(points: &[LabeledPoint], k: usize) -> Result<f64> {
    Ok(NeighborGraph::build(points, k)?.evaluate(Metric::Jsd))
}

pub fn shuffled_baseline(
    points: &[LabeledPoint],
    metric: Metric,
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<BaselineStats> {
    NeighborGraph::build(points, k)?.shuffled_baseline(metric, repeats, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: Metric,
    pub value: f64,
    pub baseline_mean: Option<f64>,
    pub baseline_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceReport {
    pub k: usize,
    pub n_points: usize,
    pub n_classes: usize,
    pub g_knn: f64,
    pub g_knn_mean_entropy: f64,
    pub knn_acc: f64,
    pub kl: f64,
    pub jsd: f64,
    pub baseline_repeats: usize,
    pub rows: Vec<MetricRow>,
}

impl SpaceReport {
    pub fn value(&self, metric: Metric) -> f64 {
        match metric {
            Metric::GKnn => self.g_knn,
            Metric::KnnAccuracy => self.knn_acc,
            Metric::Kl => self.kl,
            Metric::Jsd => self.jsd,
        }
    }

    pub fn row(&self, metric: Metric) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}, classes = {}, k = {}", self.n_points, self.n_classes, self.k);
        let _ = writeln!(
            s,
            "{:<8} {:>10} {:>14} {:>13}",
            "metric", "value", "baseline_mean", "baseline_std"
        );
        let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<8} {:>10.4} {:>14} {:>13}",
                r.metric.name(),
                r.value,
                fmt(r.baseline_mean),
                fmt(r.baseline_std)
            );
        }
        s
    }
}

/// All four metrics, plus shuffled-label baselines when `repeats > 0`.
pub fn audit_space(points: &[LabeledPoint], k: usize, repeats: usize, seed: u64) -> Result<SpaceReport> {
    let graph = NeighborGraph::build(points, k)?;
    let mut rows = Vec::with_capacity(4);
    for metric in Metric::ALL {
        let value = graph.evaluate(metric);
        let base = if repeats > 0 {
            Some(graph.shuffled_baseline(metric, repeats, seed)?)
        } else {
            None
        };
        rows.push(MetricRow {
            metric,
            value,
            baseline_mean: base.map(|b| b.mean),
            baseline_std: base.map(|b| b.std),
        });
    }
    Ok(SpaceReport {
        k,
        n_points: points.len(),
        n_classes: graph.n_classes,
        g_knn: rows[0].value,
        g_knn_mean_entropy: graph.mean_entropy(),
        knn_acc: rows[1].value,
        kl: rows[2].value,
        jsd: rows[3].value,
        baseline_repeats: repeats,
        rows,
    })
}

/// One base headline, its augmentation, and a headline from another day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftPair {
    pub base: String,
    pub augmented: String,
    pub action: AugmentationAction,
    pub control: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionShift {
    pub action: AugmentationAction,
    pub mean_shift: f64,
    pub count: usize,
}

/// Per action, mean of cos(base, augmented) − cos(base, control). Actions
/// without pairs are omitted.
pub fn action_shift_analysis(pairs: &[ShiftPair], embedder: &dyn Embedder) -> Result<Vec<ActionShift>> {
    let mut sums = [(0.0f64, 0usize); 4];
    for (i, pair) in pairs.iter().enumerate() {
        let v = embedder
            .embed_batch(&[&pair.base, &pair.augmented, &pair.control])
            .map_err(|e| Error::Provider(format!("pair {i}: {e}")))?;
        if v.len() != 3 {
            return Err(Error::Provider(format!("pair {i}: short embedding batch")));
        }
        let shift = v[0].cosine(&v[1]) - v[0].cosine(&v[2]);
        let slot = AugmentationAction::ALL
            .iter()
            .position(|a| *a == pair.action)
            .expect("known action");
        sums[slot].0 += shift;
        sums[slot].1 += 1;
    }
    Ok(AugmentationAction::ALL
        .iter()
        .zip(sums)
        .filter(|(_, (_, n))| *n > 0)
        .map(|(a, (sum, n))| ActionShift {
            action: *a,
            mean_shift: sum / n as f64,
            count: n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::embedding::{normalize, HashEmbedder};

    fn pt(i: usize, v: &[f64], label: MarketLabel) -> LabeledPoint {
        LabeledPoint {
            key: i.to_string(),
            vector: normalize(v.to_vec()).unwrap(),
            label,
        }
    }

    fn circle(labels: &[MarketLabel]) -> Vec<LabeledPoint> {
        let n = labels.len() as f64;
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let t = std::f64::consts::TAU * i as f64 / n;
                pt(i, &[t.cos(), t.sin()], *l)
            })
            .collect()
    }

    use MarketLabel::{Fall as F, Neutral as N, Rise as R};

    #[test]
    fn two_points_list_each_other() {
        let p = [pt(0, &[1.0, 0.0], F), pt(1, &[0.0, 1.0], R)];
        let v: Vec<&[f64]> = p.iter().map(|x| x.vector.as_slice()).collect();
        assert_eq!(knn_indices(&v, 1).unwrap(), vec![vec![1], vec![0]]);
        assert_eq!(knn_accuracy(&p, 1).unwrap(), 0.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let a: [f64; 2] = [1.0, 0.0];
        let b: [f64; 2] = [0.0, 1.0];
        let c: [f64; 2] = [0.0, -1.0];
        let v: Vec<&[f64]> = vec![&a, &b, &c];
        assert_eq!(knn_indices(&v, 1).unwrap()[0], vec![1]);
    }

    #[test]
    fn k_must_be_below_n() {
        let p = circle(&[F, R, N]);
        assert!(g_knn(&p, 3).is_err());
        assert!(g_knn(&p, 0).is_err());
        assert!(g_knn(&p[..1], 1).is_err());
    }

    #[test]
    fn single_label_is_pure() {
        let p = circle(&[F, F, F, F]);
        assert_eq!(g_knn(&p, 2).unwrap(), 1.0);
        assert_eq!(kl_local_global(&p, 2).unwrap(), 0.0);
        let b = shuffled_baseline(&p, Metric::GKnn, 2, 50, 1).unwrap();
        assert_eq!((b.mean, b.std), (1.0, 0.0));
    }

    #[test]
    fn uniform_neighborhoods_give_zero() {
        // Alternating labels on a circle: each point's two neighbors differ
        // from each other.
        let p = circle(&[F, R, F, R, F, R]);
        // neighbors of i are i±1, both the other label: local = (0,1) or (1,0)
        assert_eq!(knn_accuracy(&p, 2).unwrap(), 0.0);
        assert_eq!(g_knn(&p, 2).unwrap(), 1.0);
        // k = 4: i±1, i±2 → two of each label
        let g = g_knn(&p, 4).unwrap();
        assert!(g.abs() < 1e-12, "{g}");
    }

    #[test]
    fn six_point_hand_entropy() {
        // circle labels F F F R R R, k = 2
        // point 0: nbrs 1 (F), 5 (R) → H = ln 2
        // point 1: nbrs 0, 2 (F, F) → 0
        // point 2: nbrs 1 (F), 3 (R) → ln 2
        // point 3: nbrs 2 (F), 4 (R) → ln 2
        // point 4: nbrs 3, 5 → 0
        // point 5: nbrs 4 (R), 0 (F) → ln 2
        let p = circle(&[F, F, F, R, R, R]);
        let expected = 1.0 - 4.0 / 6.0;
        assert!((g_knn(&p, 2).unwrap() - expected).abs() < 1e-12);
        // knn accuracy: 4 points at 1/2, 2 at 1 → 4/6
        assert!((knn_accuracy(&p, 2).unwrap() - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn four_point_kl_and_jsd() {
        // Two tight pairs on opposite sides, labels F F R R, k = 1.
        let p = [
            pt(0, &[1.0, 0.01], F),
            pt(1, &[1.0, -0.01], F),
            pt(2, &[-1.0, 0.01], R),
            pt(3, &[-1.0, -0.01], R),
        ];
        // local is a point mass, global (½, ½)
        let eps = KL_SMOOTHING;
        let hi = (1.0 + eps) / (1.0 + 2.0 * eps);
        let lo = eps / (1.0 + 2.0 * eps);
        let kl = hi * (hi / 0.5).ln() + lo * (lo / 0.5).ln();
        assert!((kl_local_global(&p, 1).unwrap() - kl).abs() < 1e-12);
        // JSD(point mass, uniform over 2) = 1 − ¾ log2(4/3)... computed directly
        let m = [0.75, 0.25];
        let jsd = 0.5 * (1.0f64 / m[0]).log2() + 0.5 * (0.5 * (0.5f64 / m[0]).log2() + 0.5 * (0.5f64 / m[1]).log2());
        assert!((jsd_local_global(&p, 1).unwrap() - jsd).abs() < 1e-12);
    }

    #[test]
    fn jsd_bounds() {
        let a = LabelDistribution(vec![1.0, 0.0]);
        let b = LabelDistribution(vec![0.0, 1.0]);
        assert!((a.jsd(&b) - 1.0).abs() < 1e-15);
        assert_eq!(a.jsd(&a), 0.0);
    }

    #[test]
    fn baseline_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<LabeledPoint> = (0..20)
            .map(|i| {
                let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                pt(i, &v, MarketLabel::ALL[i % 3])
            })
            .collect();
        let a = shuffled_baseline(&p, Metric::KnnAccuracy, 3, 200, 9).unwrap();
        let b = shuffled_baseline(&p, Metric::KnnAccuracy, 3, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(shuffled_baseline(&p, Metric::Kl, 3, 0, 9).is_err());
    }

    #[test]
    fn report_fields_agree() {
        let p = circle(&[F, F, R, R, N, N, F, R]);
        let r = audit_space(&p, 2, 20, 1).unwrap();
        for m in Metric::ALL {
            assert_eq!(r.value(m), r.row(m).unwrap().value);
        }
        assert!(r.to_table().contains("g-KNN"));
        let json = serde_json::to_string(&r).unwrap();
        let back: SpaceReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn shift_identities() {
        let e = HashEmbedder::new(1, 16).unwrap();
        let same = ShiftPair {
            base: "a b".into(),
            augmented: "a b".into(),
            action: AugmentationAction::Re,
            control: "c d".into(),
        };
        let ctrl = ShiftPair {
            base: "a b".into(),
            augmented: "x".into(),
            action: AugmentationAction::N,
            control: "x".into(),
        };
        let out = action_shift_analysis(&[same, ctrl], &e).unwrap();
        let vb = e.embed_batch(&["a b", "c d"]).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[0].mean_shift - (1.0 - vb[0].cosine(&vb[1]))).abs() < 1e-12);
        assert_eq!(out[1].mean_shift, 0.0);
    }
}
