//! Small dense networks with hand-written gradients, plus the optimizer
//! machinery shared by the projection network and the classifier heads.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One hidden ReLU layer: `z = W2 relu(W1 x + b1) + b2`.
/// Weight matrices are row-major, `w1` is `hidden × d_in`, `w2` is
/// `d_out × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Intermediates of a forward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub input: Vec<f64>,
    pub pre_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

/// Dot product with eight independent partial sums, combined in a fixed
/// order.
fn dot8(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += xa[i] * xb[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], bias: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| bias[r] + dot8(&w[r * cols..(r + 1) * cols], x))
        .collect()
}

impl Mlp {
    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            d_in,
            hidden,
            d_out,
            w1: vec![0.0; hidden * d_in],
            b1: vec![0.0; hidden],
            w2: vec![0.0; d_out * hidden],
            b2: vec![0.0; d_out],
        }
    }

    /// He-normal weights and zero biases.
    pub fn he_init<R: Rng + ?Sized>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Result<Self> {
        if d_in == 0 || hidden == 0 || d_out == 0 {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let mut m = Self::zeros(d_in, hidden, d_out);
        let n1 = Normal::new(0.0, (2.0 / d_in as f64).sqrt()).expect("valid std");
        let n2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid std");
        m.w1.iter_mut().for_each(|w| *w = n1.sample(rng));
        m.w2.iter_mut().for_each(|w| *w = n2.sample(rng));
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.d_in, self.hidden, self.d_out)
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.d_in == other.d_in && self.hidden == other.hidden && self.d_out == other.d_out
    }

    pub fn check_shapes(&self) -> Result<()> {
        let ok = self.w1.len() == self.hidden * self.d_in
            && self.b1.len() == self.hidden
            && self.w2.len() == self.d_out * self.hidden
            && self.b2.len() == self.d_out;
        if !ok {
            return Err(Error::invalid("parameter arrays do not match declared shapes"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn add_assign(&mut self, other: &Mlp) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<MlpTrace> {
        if x.len() != self.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.d_in,
                got: x.len(),
            });
        }
        let pre_hidden = matvec(&self.w1, self.hidden, self.d_in, x, &self.b1);
        let hidden: Vec<f64> = pre_hidden.iter().map(|&a| a.max(0.0)).collect();
        let output = matvec(&self.w2, self.d_out, self.hidden, &hidden, &self.b2);
        Ok(MlpTrace {
            input: x.to_vec(),
            pre_hidden,
            hidden,
            output,
        })
    }

    /// Accumulate parameter gradients for upstream gradient `d_out` into
    /// `grads` and return the gradient with respect to the input.
    pub fn backward(&self, trace: &MlpTrace, d_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        debug_assert_eq!(d_out.len(), self.d_out);
        let (h, d_in) = (self.hidden, self.d_in);
        let mut d_hidden = vec![0.0; h];
        for (o, &g) in d_out.iter().enumerate() {
            grads.b2[o] += g;
            if g == 0.0 {
                continue;
            }
            let grad_row = &mut grads.w2[o * h..(o + 1) * h];
            let w_row = &self.w2[o * h..(o + 1) * h];
            for k in 0..h {
                grad_row[k] += g * trace.hidden[k];
                d_hidden[k] += g * w_row[k];
            }
        }
        let mut d_input = vec![0.0; d_in];
        for k in 0..h {
            // ReLU derivative, taken as 0 at the kink.
            if trace.pre_hidden[k] <= 0.0 {
                continue;
            }
            let g = d_hidden[k];
            grads.b1[k] += g;
            let grad_row = &mut grads.w1[k * d_in..(k + 1) * d_in];
            let w_row = &self.w1[k * d_in..(k + 1) * d_in];
            for i in 0..d_in {
                grad_row[i] += g * trace.input[i];
                d_input[i] += g * w_row[i];
            }
        }
        d_input
    }
}

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Mlp,
    pub v: Mlp,
}

impl AdamState {
    pub fn new(params: &Mlp, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts the step
    /// before anything is modified.
    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp, lr: f64) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.m) {
            return Err(Error::invalid("gradient shape does not match parameters"));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        // lr·m̂/(√v̂ + ε) with the bias corrections folded into scalars.
        let step = lr / c1;
        let inv_sqrt_c2 = 1.0 / c2.sqrt();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= step * *m / (v.sqrt() * inv_sqrt_c2 + eps);
            }
        }
        Ok(())
    }
}

/// Rescale `grads` so their global L2 norm is at most `clip_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Mlp, clip_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}

/// Cosine-annealed learning rate at step `t` of `total`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    let total = total.max(1);
    let t = t.min(total) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * t / total as f64).cos())
}

pub const CHECKPOINT_FORMAT: &str = "contrasim-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Projection,
    Classifier,
}

/// JSON checkpoint shared by every network in the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: CheckpointKind,
    pub params: Mlp,
    pub optimizer: Option<AdamState>,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn new(
        kind: CheckpointKind,
        params: Mlp,
        optimizer: Option<AdamState>,
        seed: u64,
        config: serde_json::Value,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            kind,
            params,
            optimizer,
            seed,
            config,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path, kind: CheckpointKind) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "{}: unsupported checkpoint {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        if ckpt.kind != kind {
            return Err(Error::invalid(format!(
                "{}: expected a {kind:?} checkpoint, found {:?}",
                path.display(),
                ckpt.kind
            )));
        }
        ckpt.params.check_shapes()?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut p = Mlp::zeros(1, 1, 1);
        p.w1[0] = 1.0;
        let mut g = p.zeros_like();
        g.w1[0] = 0.3;
        g.b2[0] = -2.0;
        let mut st = AdamState::new(&p, 0.9, 0.999);
        st.step(&mut p, &g, 0.001).unwrap();
        assert!((p.w1[0] - (1.0 - 0.001 * 0.3 / (0.3 + 1e-8))).abs() < 1e-15);
        assert!((p.b2[0] - 0.001 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_only_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = Mlp::he_init(3, 4, 2, &mut rng).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p, 0.9, 0.999);
        let zero = p.zeros_like();
        st.step(&mut p, &zero, 0.01).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_two_steps_match_scalar_trace() {
        // Scalar oracle, written out independently.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.01f64);
        let gs = [0.5f64, -0.2f64];
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (i, g) in gs.iter().enumerate() {
            let t = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            x -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut p = Mlp::zeros(1, 1, 1);
        p.b1[0] = 1.0;
        let mut st = AdamState::new(&p, b1, b2);
        for g in gs {
            let mut grad = p.zeros_like();
            grad.b1[0] = g;
            st.step(&mut p, &grad, lr).unwrap();
        }
        assert!((p.b1[0] - x).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut p = Mlp::zeros(1, 1, 1);
        let mut g = p.zeros_like();
        g.w2[0] = f64::NAN;
        let mut st = AdamState::new(&p, 0.9, 0.999);
        assert!(st.step(&mut p, &g, 0.1).is_err());
        assert_eq!(st.t, 0);
    }

    #[test]
    fn clipping() {
        let mut g = Mlp::zeros(1, 1, 1);
        g.w1[0] = 0.3;
        g.b1[0] = 0.4;
        let before = g.clone();
        assert!((clip_gradients(&mut g, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(g, before);

        g.w1[0] = 1.2;
        g.b1[0] = 1.6;
        clip_gradients(&mut g, 1.0);
        assert!((g.w1[0] - 0.6).abs() < 1e-15 && (g.b1[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clipped_norm_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut g = Mlp::he_init(5, 7, 3, &mut rng).unwrap();
            let f: f64 = rng.random_range(0.01..100.0);
            g.scale(f);
            clip_gradients(&mut g, 1.0);
            assert!(g.global_norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(0, 100, 1e-3, 0.0), 1e-3);
        assert!(cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5 < 1e-18);
        assert!((cosine_lr(50, 100, 1e-3, 1e-5) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = Mlp::he_init(3, 5, 2, &mut rng).unwrap();
        let st = AdamState::new(&p, 0.9, 0.999);
        let ck = Checkpoint::new(
            CheckpointKind::Projection,
            p,
            Some(st),
            4,
            serde_json::json!({"lr": 0.001}),
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path, CheckpointKind::Projection).unwrap(), ck);
        assert!(Checkpoint::load(&path, CheckpointKind::Classifier).is_err());
    }
}
