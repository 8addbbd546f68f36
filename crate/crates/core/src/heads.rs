//! Market-direction classifier heads over projection features, encoder
//! features, or both.

use std::collections::BTreeMap;

use log::{debug, warn};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::MarketLabel;
use crate::embedding::{embed_dns, Embedder, HeadlineSet, UnitVector};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp};
use crate::projnet::ProjectionNet;

pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Proj,
    Enc,
    Both,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 3] = [FeatureSource::Proj, FeatureSource::Enc, FeatureSource::Both];

    pub fn dim(self, d_enc: usize, d_proj: usize) -> usize {
        match self {
            FeatureSource::Proj => d_proj,
            FeatureSource::Enc => d_enc,
            FeatureSource::Both => d_proj + d_enc,
        }
    }
}

/// Features from an encoder embedding. `Both` concatenates the projection
/// then the encoding, each already unit length.
pub fn features_from_embedding(e: &UnitVector, source: FeatureSource, net: Option<&ProjectionNet>) -> Result<Vec<f64>> {
    let proj = || -> Result<UnitVector> {
        net.ok_or_else(|| Error::invalid("projection parameters required for this feature source"))?
            .project(e)
    };
    Ok(match source {
        FeatureSource::Enc => e.as_slice().to_vec(),
        FeatureSource::Proj => proj()?.into_inner(),
        FeatureSource::Both => {
            let mut v = proj()?.into_inner();
            v.extend_from_slice(e.as_slice());
            v
        }
    })
}

pub fn make_features(
    dns: &dyn HeadlineSet,
    source: FeatureSource,
    net: Option<&ProjectionNet>,
    embedder: &dyn Embedder,
    joiner: &str,
) -> Result<Vec<f64>> {
    let e = embed_dns(embedder, dns, joiner)?;
    features_from_embedding(&e, source, net)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|x| x / sum).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub params: Mlp,
}

impl Classifier {
    pub fn input_dim(&self) -> usize {
        self.params.d_in
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.params.forward(x)?.output)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<MarketLabel> {
        let l = self.logits(x)?;
        Ok(MarketLabel::from_index(argmax(&l)).expect("three outputs"))
    }

    /// Mean softmax cross-entropy and, if requested, its parameter gradient.
    fn loss(&self, xs: &[&[f64]], ys: &[usize], grads: Option<&mut Mlp>) -> Result<f64> {
        let inv = 1.0 / xs.len() as f64;
        let mut total = 0.0;
        let mut grads = grads;
        for (x, &y) in xs.iter().zip(ys) {
            let trace = self.params.forward(x)?;
            let p = softmax(&trace.output);
            total -= inv * p[y].max(f64::MIN_POSITIVE).ln();
            if let Some(g) = grads.as_deref_mut() {
                let d: Vec<f64> = p
                    .iter()
                    .enumerate()
                    .map(|(c, pc)| inv * (pc - if c == y { 1.0 } else { 0.0 }))
                    .collect();
                self.params.backward(&trace, &d, g);
            }
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub lr: f64,
    pub betas: (f64, f64),
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr: 1e-3,
            betas: (0.9, 0.999),
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        if self.hidden == 0 {
            v.push(("hidden", "must be ≥ 1".to_string()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            v.push(("lr", "must be ≥ 0".to_string()));
        }
        for (key, b) in [("betas.0", self.betas.0), ("betas.1", self.betas.1)] {
            if !(b > 0.0 && b < 1.0) {
                v.push((key, "must lie in (0, 1)".to_string()));
            }
        }
        if self.batch_size == 0 {
            v.push(("batch_size", "must be ≥ 1".to_string()));
        }
        if self.max_epochs == 0 {
            v.push(("max_epochs", "must be ≥ 1".to_string()));
        }
        v
    }
}

/// Feature vector with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeatures {
    pub features: Vec<f64>,
    pub label: MarketLabel,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub classifier: Classifier,
    pub optimizer: AdamState,
    pub epochs_run: usize,
    pub steps: usize,
    pub best_epoch: usize,
    pub epoch_train_loss: Vec<f64>,
    pub epoch_valid_loss: Vec<f64>,
}

fn split_xy(data: &[LabeledFeatures]) -> (Vec<&[f64]>, Vec<usize>) {
    (
        data.iter().map(|d| d.features.as_slice()).collect(),
        data.iter().map(|d| d.label.index()).collect(),
    )
}

/// Minibatch Adam on softmax cross-entropy. With a validation set, training
/// stops after `patience` epochs without improvement and the best
/// parameters are returned.
pub fn train_classifier(
    train: &[LabeledFeatures],
    valid: &[LabeledFeatures],
    config: &ClassifierConfig,
) -> Result<TrainedClassifier> {
    if let Some((k, m)) = config.violations().first() {
        return Err(Error::invalid(format!("{k}: {m}")));
    }
    let first = train
        .first()
        .ok_or_else(|| Error::invalid("empty classifier training set"))?;
    let d_in = first.features.len();
    if let Some(bad) = train.iter().chain(valid).find(|d| d.features.len() != d_in) {
        return Err(Error::DimensionMismatch {
            expected: d_in,
            got: bad.features.len(),
        });
    }
    let mut classes: Vec<MarketLabel> = train.iter().map(|d| d.label).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        warn!("classifier training set has a single class; the head will be constant");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut clf = Classifier {
        params: Mlp::he_init(d_in, config.hidden, N_CLASSES, &mut rng)?,
    };
    let mut opt = AdamState::new(&clf.params, config.betas.0, config.betas.1);
    let (vx, vy) = split_xy(valid);
    let mut best: Option<(f64, Classifier, AdamState, usize)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut out = TrainedClassifier {
        classifier: clf.clone(),
        optimizer: opt.clone(),
        epochs_run: 0,
        steps: 0,
        best_epoch: 0,
        epoch_train_loss: Vec::new(),
        epoch_valid_loss: Vec::new(),
    };
    let mut since_best = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = chunk.iter().map(|&i| train[i].features.as_slice()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| train[i].label.index()).collect();
            let mut grads = clf.params.zeros_like();
            sum += clf.loss(&xs, &ys, Some(&mut grads))? * chunk.len() as f64;
            opt.step(&mut clf.params, &grads, config.lr)?;
            out.steps += 1;
        }
        out.epoch_train_loss.push(sum / train.len() as f64);
        out.epochs_run = epoch;
        if vx.is_empty() {
            continue;
        }
        let vloss = clf.loss(&vx, &vy, None)?;
        out.epoch_valid_loss.push(vloss);
        if best.as_ref().is_none_or(|b| vloss < b.0) {
            best = Some((vloss, clf.clone(), opt.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience > 0 && since_best >= config.patience {
                debug!("early stop at epoch {epoch}");
                break;
            }
        }
    }
    match best {
        Some((_, c, o, e)) => {
            out.classifier = c;
            out.optimizer = o;
            out.best_epoch = e;
        }
        None => {
            out.classifier = clf;
            out.optimizer = opt;
            out.best_epoch = out.epochs_run;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[truth][predicted]`
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
}

impl EvalResult {
    /// Macro-F1 averages over classes that occur in the truth or the
    /// predictions.
    pub fn from_predictions(truth: &[MarketLabel], predicted: &[MarketLabel]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::invalid("empty evaluation set"));
        }
        if truth.len() != predicted.len() {
            return Err(Error::invalid("prediction count differs from label count"));
        }
        let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
        for (t, p) in truth.iter().zip(predicted) {
            confusion[t.index()][p.index()] += 1;
        }
        let correct: usize = (0..N_CLASSES).map(|c| confusion[c][c]).sum();
        let mut f1s = Vec::new();
        for c in 0..N_CLASSES {
            let row: usize = confusion[c].iter().sum();
            let col: usize = (0..N_CLASSES).map(|r| confusion[r][c]).sum();
            if row == 0 && col == 0 {
                continue;
            }
            let tp = confusion[c][c] as f64;
            let precision = if col > 0 { tp / col as f64 } else { 0.0 };
            let recall = if row > 0 { tp / row as f64 } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            f1s.push(f1);
        }
        Ok(Self {
            accuracy: correct as f64 / truth.len() as f64,
            macro_f1: f1s.iter().sum::<f64>() / f1s.len() as f64,
            confusion,
        })
    }
}

pub fn evaluate(classifier: &Classifier, test: &[LabeledFeatures]) -> Result<EvalResult> {
    let predicted = test
        .iter()
        .map(|d| classifier.predict(&d.features))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<MarketLabel> = test.iter().map(|d| d.label).collect();
    EvalResult::from_predictions(&truth, &predicted)
}

/// Indices (ascending) of a class-balanced subsample: every present class
/// keeps as many items as the rarest present class.
pub fn balance_indices(labels: &[MarketLabel], seed: u64) -> Vec<usize> {
    let mut by_class: BTreeMap<MarketLabel, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    let Some(min) = by_class.values().map(Vec::len).min() else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = by_class
        .values()
        .flat_map(|idx| {
            index::sample(&mut rng, idx.len(), min)
                .into_iter()
                .map(|j| idx[j])
                .collect::<Vec<_>>()
        })
        .collect();
    keep.sort_unstable();
    keep
}

pub fn balance<T: Clone>(items: &[T], labels: &[MarketLabel], seed: u64) -> Vec<T> {
    balance_indices(labels, seed)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}

/// Mean accuracy and macro-F1 of uniformly random predictions over
/// `repeats` draws.
pub fn uniform_random_baseline(truth: &[MarketLabel], repeats: usize, seed: u64) -> Result<(f64, f64)> {
    if repeats == 0 {
        return Err(Error::invalid("baseline repeats must be ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut acc, mut f1) = (0.0, 0.0);
    for _ in 0..repeats {
        let pred: Vec<MarketLabel> = truth
            .iter()
            .map(|_| MarketLabel::ALL[rng.random_range(0..N_CLASSES)])
            .collect();
        let r = EvalResult::from_predictions(truth, &pred)?;
        acc += r.accuracy;
        f1 += r.macro_f1;
    }
    Ok((acc / repeats as f64, f1 / repeats as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub name: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn push(&mut self, name: impl Into<String>, accuracy: f64, macro_f1: f64, n_test: usize) {
        self.rows.push(EvalRow {
            name: name.into(),
            accuracy,
            macro_f1,
            n_test,
        });
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<16} {:>9} {:>9} {:>7}\n", "head", "accuracy", "macro_f1", "n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<16} {:>9.4} {:>9.4} {:>7}\n",
                r.name, r.accuracy, r.macro_f1, r.n_test
            ));
        }
        s
    }
}
