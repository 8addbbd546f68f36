//! Projection network `p = normalize(W2 relu(W1 e + b1) + b2)` and its
//! training under the weighted contrastive losses.

mod loss;
mod train;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::{l2_norm, UnitVector, MIN_NORM};
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp, MlpTrace};

pub use loss::{loss_cwcl, loss_wscl, CwclDistance, LossOutput, ProjectedBatch};
pub use train::{
    assemble_training_set, loss_and_gradients, train, train_step, LossKind, StepLog, TrainConfig, TrainOutcome,
    TrainingExample,
};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_PROJECTION_DIM: usize = 128;

/// Intermediates kept for [`ProjectionNet::backward`].
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    trace: MlpTrace,
    norm: f64,
    projection: Vec<f64>,
    version: u64,
}

impl ProjectionCache {
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionNet {
    params: Mlp,
    version: u64,
}

impl ProjectionNet {
    pub fn from_params(params: Mlp) -> Result<Self> {
        params.check_shapes()?;
        Ok(Self { params, version: 0 })
    }

    /// He-normal weights, zero `b1`, and `b2` drawn from N(0, 1e-6) so the
    /// output is never exactly zero at initialization.
    pub fn init<R: Rng + ?Sized>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        let mut params = Mlp::he_init(d_in, hidden, d_out, rng)?;
        let noise = Normal::new(0.0, 1e-3).expect("valid std");
        params.b2.iter_mut().for_each(|b| *b = noise.sample(rng));
        Self::from_params(params)
    }

    pub fn params(&self) -> &Mlp {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.params.d_in
    }

    pub fn output_dim(&self) -> usize {
        self.params.d_out
    }

    pub fn forward(&self, e: &[f64]) -> Result<(UnitVector, ProjectionCache)> {
        let trace = self.params.forward(e)?;
        let norm = l2_norm(&trace.output);
        if !(norm >= MIN_NORM) {
            return Err(Error::ZeroNorm(norm));
        }
        let projection: Vec<f64> = trace.output.iter().map(|z| z / norm).collect();
        let p = UnitVector::from_stored(projection.clone())?;
        Ok((
            p,
            ProjectionCache {
                trace,
                norm,
                projection,
                version: self.version,
            },
        ))
    }

    pub fn project(&self, e: &UnitVector) -> Result<UnitVector> {
        self.forward(e.as_slice()).map(|(p, _)| p)
    }

    /// Chain rule through the output normalization and the MLP. Parameter
    /// gradients are accumulated into `grads`; the input gradient is returned.
    pub fn backward(&self, cache: &ProjectionCache, d_projection: &[f64], grads: &mut Mlp) -> Result<Vec<f64>> {
        if cache.version != self.version {
            return Err(Error::invalid("stale forward cache: parameters changed since forward"));
        }
        if d_projection.len() != self.params.d_out {
            return Err(Error::DimensionMismatch {
                expected: self.params.d_out,
                got: d_projection.len(),
            });
        }
        // d z = (I - p p^T) d p / |z|
        let p = &cache.projection;
        let radial: f64 = p.iter().zip(d_projection).map(|(a, b)| a * b).sum();
        let dz: Vec<f64> = d_projection
            .iter()
            .zip(p)
            .map(|(g, pi)| (g - radial * pi) / cache.norm)
            .collect();
        Ok(self.params.backward(&cache.trace, &dz, grads))
    }

    /// Apply an optimizer step. Invalidates outstanding caches.
    pub fn apply(&mut self, optimizer: &mut AdamState, grads: &Mlp, lr: f64) -> Result<()> {
        optimizer.step(&mut self.params, grads, lr)?;
        self.version += 1;
        Ok(())
    }
}
