use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DailyNewsSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Chronological,
    Random {
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("split fractions must lie in [0, 1]"));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<DailyNewsSet>,
    pub valid: Vec<DailyNewsSet>,
    pub test: Vec<DailyNewsSet>,
    pub mode: SplitMode,
}

/// Validation and test sizes round to the nearest integer but get at least
/// one element when their fraction is positive; training takes the rest.
fn piece_sizes(n: usize, f: &SplitFractions) -> (usize, usize, usize) {
    let size = |frac: f64| {
        let s = (n as f64 * frac).round() as usize;
        if frac > 0.0 {
            s.max(1)
        } else {
            s
        }
    };
    let test = size(f.test);
    let valid = size(f.valid).min(n - test);
    (n - valid - test, valid, test)
}

pub fn split_corpus(data: &[DailyNewsSet], fractions: SplitFractions, mode: SplitMode) -> Result<CorpusSplit> {
    fractions.validate()?;
    if data.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 days to split, got {}",
            data.len()
        )));
    }
    let mut ordered = data.to_vec();
    match mode {
        SplitMode::Chronological => ordered.sort_by_key(|d| d.date),
        SplitMode::Random { seed } => {
            // Canonical order first so the result depends only on the set.
            ordered.sort_by_key(|d| d.date);
            ordered.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
    }
    let (n_train, n_valid, _) = piece_sizes(ordered.len(), &fractions);
    let test = ordered.split_off(n_train + n_valid);
    let valid = ordered.split_off(n_train);
    Ok(CorpusSplit {
        train: ordered,
        valid,
        test,
        mode,
    })
}
