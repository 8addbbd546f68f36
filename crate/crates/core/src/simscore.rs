//! Logarithmic similarity score of an augmented daily news set.
//!
//! Each slot of an augmented set contributes a per-action similarity; the sum
//! is normalized by the all-`Re` maximum and pushed through
//! `ln(1 + x (e - 1))`, which maps `[0, 1]` onto itself while giving
//! high-similarity actions a superlinear influence.

use std::f64::consts::E;

use crate::augmentor::AugmentationAction;
use crate::error::{Error, Result};

/// Similarity contributed by a single slot.
pub fn per_action_sim(action: AugmentationAction) -> f64 {
    match action {
        AugmentationAction::Re => 1.0,
        AugmentationAction::S => 0.5,
        AugmentationAction::N => 0.0,
        AugmentationAction::Ra => 0.0,
    }
}

/// Counts of each action in an augmented set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ActionCounts {
    pub re: u64,
    pub s: u64,
    pub n: u64,
    pub ra: u64,
}

impl ActionCounts {
    pub fn new(re: u64, s: u64, n: u64, ra: u64) -> Self {
        Self { re, s, n, ra }
    }

    pub fn from_actions<I>(actions: I) -> Self
    where
        I: IntoIterator<Item = AugmentationAction>,
    {
        let mut counts = Self::default();
        for a in actions {
            counts.add(a);
        }
        counts
    }

    pub fn add(&mut self, action: AugmentationAction) {
        match action {
            AugmentationAction::Re => self.re += 1,
            AugmentationAction::S => self.s += 1,
            AugmentationAction::N => self.n += 1,
            AugmentationAction::Ra => self.ra += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.re + self.s + self.n + self.ra
    }

    /// Sum of per-action similarities.
    pub fn raw(&self) -> f64 {
        self.re as f64 * per_action_sim(AugmentationAction::Re)
            + self.s as f64 * per_action_sim(AugmentationAction::S)
            + self.n as f64 * per_action_sim(AugmentationAction::N)
            + self.ra as f64 * per_action_sim(AugmentationAction::Ra)
    }
}

/// Similarity score in `[0, 1]`. The normalizer is the score an all-`Re` set
/// of the same size would reach, so the ratio is always within `[0, 1]`.
pub fn score(counts: &ActionCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::invalid("similarity score of an empty action set"));
    }
    let s_max = total as f64 * per_action_sim(AugmentationAction::Re);
    let ratio = counts.raw() / s_max;
    Ok((1.0 + ratio * (E - 1.0)).ln().clamp(0.0, 1.0))
}

/// Convenience wrapper over an action sequence.
pub fn score_actions<I>(actions: I) -> Result<f64>
where
    I: IntoIterator<Item = AugmentationAction>,
{
    score(&ActionCounts::from_actions(actions))
}
