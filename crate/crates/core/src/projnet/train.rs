use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_cwcl, loss_wscl, CwclDistance, ProjectedBatch};
use super::{ProjectionCache, ProjectionNet, DEFAULT_HIDDEN, DEFAULT_PROJECTION_DIM};
use crate::augmentor::AugmentedSet;
use crate::corpus::DailyNewsSet;
use crate::embedding::{Embedder, HeadlineSet, UnitVector};
use crate::error::{Error, Result};
use crate::nn::{clip_gradients, cosine_lr, AdamState, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Wscl,
    Cwcl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_min: f64,
    pub betas: (f64, f64),
    pub epochs: usize,
    pub batch_anchors: usize,
    pub margin: f64,
    pub temperature: f64,
    pub clip_norm: f64,
    pub loss: LossKind,
    pub cwcl_distance: CwclDistance,
    pub hidden: usize,
    pub projection_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            lr_min: 0.0,
            betas: (0.9, 0.999),
            epochs: 50,
            batch_anchors: 2,
            margin: 1.0,
            temperature: 0.1,
            clip_norm: 1.0,
            loss: LossKind::Wscl,
            cwcl_distance: CwclDistance::Euclidean,
            hidden: DEFAULT_HIDDEN,
            projection_dim: DEFAULT_PROJECTION_DIM,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Constraint violations as `(key, message)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        // lr = 0 is allowed: it freezes the parameters.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            v.push(("lr", "must be ≥ 0".to_string()));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr.max(0.0)) {
            v.push(("lr_min", "must lie in [0, lr]".to_string()));
        }
        for (key, b) in [("betas.0", self.betas.0), ("betas.1", self.betas.1)] {
            if !(b > 0.0 && b < 1.0) {
                v.push((key, "must lie in (0, 1)".to_string()));
            }
        }
        if self.epochs == 0 {
            v.push(("epochs", "must be ≥ 1".to_string()));
        }
        if self.batch_anchors == 0 {
            v.push(("batch_anchors", "must be ≥ 1".to_string()));
        }
        if !(self.margin > 0.0) {
            v.push(("margin", "must be > 0".to_string()));
        }
        if !(self.temperature > 0.0) {
            v.push(("temperature", "must be > 0".to_string()));
        }
        if !(self.clip_norm > 0.0) {
            v.push(("clip_norm", "must be > 0".to_string()));
        }
        if self.hidden == 0 {
            v.push(("hidden", "must be ≥ 1".to_string()));
        }
        if self.projection_dim == 0 {
            v.push(("projection_dim", "must be ≥ 1".to_string()));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().first() {
            None => Ok(()),
            Some((k, m)) => Err(Error::invalid(format!("{k}: {m}"))),
        }
    }
}

/// An anchor embedding and its weighted augmentation embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub key: String,
    pub anchor: UnitVector,
    pub augmentations: Vec<(UnitVector, f64)>,
}

/// Resolve anchors and their augmented sets to embeddings. Anchors without
/// augmentations are skipped.
pub fn assemble_training_set(
    train: &[DailyNewsSet],
    augmented: &[AugmentedSet],
    embedder: &dyn Embedder,
    joiner: &str,
) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::with_capacity(train.len());
    for day in train {
        let augs: Vec<&AugmentedSet> = augmented.iter().filter(|a| a.base_date == day.date).collect();
        if augs.is_empty() {
            warn!("anchor {} has no augmentations; skipped", day.date);
            continue;
        }
        let mut texts = vec![day.joined_text(joiner)];
        texts.extend(augs.iter().map(|a| a.joined_text(joiner)));
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let mut vs = embedder
            .embed_batch(&refs)
            .map_err(|e| Error::Provider(format!("anchor {}: {e}", day.date)))?;
        if vs.len() != refs.len() {
            return Err(Error::Provider(format!("anchor {}: short embedding batch", day.date)));
        }
        let anchor = vs.remove(0);
        out.push(TrainingExample {
            key: day.date.to_string(),
            anchor,
            augmentations: vs.into_iter().zip(augs.iter().map(|a| a.s)).collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ProjectionNet,
    pub optimizer: AdamState,
    pub steps: Vec<StepLog>,
    pub epoch_loss: Vec<f64>,
}

/// Batch loss and its gradient with respect to the network parameters.
pub fn loss_and_gradients(net: &ProjectionNet, batch: &[&TrainingExample], config: &TrainConfig) -> Result<(f64, Mlp)> {
    let mut anchor_caches: Vec<ProjectionCache> = Vec::with_capacity(batch.len());
    let mut aug_caches: Vec<Vec<ProjectionCache>> = Vec::with_capacity(batch.len());
    let mut projected = ProjectedBatch {
        anchors: Vec::with_capacity(batch.len()),
        augs: Vec::with_capacity(batch.len()),
    };
    for ex in batch {
        for (_, s) in &ex.augmentations {
            if !(0.0..=1.0).contains(s) {
                return Err(Error::invalid(format!(
                    "{}: similarity weight {s} outside [0, 1]",
                    ex.key
                )));
            }
        }
        let (p, cache) = net.forward(ex.anchor.as_slice())?;
        projected.anchors.push(p.into_inner());
        anchor_caches.push(cache);
        let mut row = Vec::with_capacity(ex.augmentations.len());
        let mut caches = Vec::with_capacity(ex.augmentations.len());
        for (e, s) in &ex.augmentations {
            let (q, cache) = net.forward(e.as_slice())?;
            row.push((q.into_inner(), *s));
            caches.push(cache);
        }
        projected.augs.push(row);
        aug_caches.push(caches);
    }

    let out = match config.loss {
        LossKind::Wscl => loss_wscl(&projected, config.margin),
        LossKind::Cwcl => loss_cwcl(&projected, config.temperature, config.cwcl_distance),
    };
    if !out.loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }

    let mut grads: Mlp = net.params().zeros_like();
    for (i, cache) in anchor_caches.iter().enumerate() {
        net.backward(cache, &out.grad_anchors[i], &mut grads)?;
        for (j, c) in aug_caches[i].iter().enumerate() {
            net.backward(c, &out.grad_augs[i][j], &mut grads)?;
        }
    }
    Ok((out.loss, grads))
}

/// Forward, loss, backward, clip and Adam on one batch of examples. Returns
/// the batch loss computed before the update.
pub fn train_step(
    net: &mut ProjectionNet,
    optimizer: &mut AdamState,
    batch: &[&TrainingExample],
    config: &TrainConfig,
    lr: f64,
) -> Result<f64> {
    let (loss, mut grads) = loss_and_gradients(net, batch, config)?;
    clip_gradients(&mut grads, config.clip_norm);
    net.apply(optimizer, &grads, lr)?;
    Ok(loss)
}

/// Train a fresh projection network. `on_epoch` receives the epoch number
/// (from 1) and the current state after each epoch, e.g. for checkpointing.
pub fn train<F>(examples: &[TrainingExample], config: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, &ProjectionNet, &AdamState) -> Result<()>,
{
    config.validate()?;
    let first = examples.first().ok_or_else(|| Error::invalid("no training examples"))?;
    let d_in = first.anchor.dim();
    for ex in examples {
        if ex.augmentations.is_empty() {
            return Err(Error::invalid(format!("{}: anchor has no augmentations", ex.key)));
        }
        if ex.anchor.dim() != d_in || ex.augmentations.iter().any(|(e, _)| e.dim() != d_in) {
            return Err(Error::invalid(format!(
                "{}: embedding dimension differs from {d_in}",
                ex.key
            )));
        }
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut net = ProjectionNet::init(d_in, config.hidden, config.projection_dim, &mut init_rng)?;
    let mut optimizer = AdamState::new(net.params(), config.betas.0, config.betas.1);

    let steps_per_epoch = examples.len().div_ceil(config.batch_anchors);
    let total_steps = steps_per_epoch * config.epochs;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut steps = Vec::with_capacity(total_steps);
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_anchors) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let lr = cosine_lr(step, total_steps, config.lr, config.lr_min);
            let loss = train_step(&mut net, &mut optimizer, &batch, config, lr)?;
            steps.push(StepLog { epoch, step, lr, loss });
            sum += loss;
            step += 1;
        }
        let mean = sum / steps_per_epoch as f64;
        debug!("epoch {epoch}: mean loss {mean:.6}");
        epoch_loss.push(mean);
        on_epoch(epoch, &net, &optimizer)?;
    }
    Ok(TrainOutcome {
        net,
        optimizer,
        steps,
        epoch_loss,
    })
}
