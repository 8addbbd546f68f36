//! Deterministic offline embedders.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{normalize, Embedder, UnitVector};
use crate::error::{Error, Result};

fn seeded_gaussian(seed: u64, domain: &[u8], text: &str, dim: usize) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(domain);
    hasher.update(text.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Maps each whole text to a hash-seeded Gaussian vector. Distinct texts are
/// unrelated; identical texts map to identical vectors.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
}

impl HashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(Self { seed, dim })
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<UnitVector>> {
        texts
            .iter()
            .map(|t| normalize(seeded_gaussian(self.seed, b"text\0", t, self.dim)))
            .collect()
    }
}

/// Bag-of-words embedder: the normalized sum of per-token hash-seeded Gaussian
/// vectors. Texts sharing words are correlated, which makes it usable for
/// synthetic experiments where topical overlap should be visible.
#[derive(Debug, Clone)]
pub struct LexicalEmbedder {
    seed: u64,
    dim: usize,
}

impl LexicalEmbedder {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(Self { seed, dim })
    }

    fn embed_one(&self, text: &str) -> Result<UnitVector> {
        let mut acc = vec![0.0; self.dim];
        let mut any = false;
        for token in text.split_whitespace() {
            let token = token.to_lowercase();
            for (a, x) in acc
                .iter_mut()
                .zip(seeded_gaussian(self.seed, b"token\0", &token, self.dim))
            {
                *a += x;
            }
            any = true;
        }
        if !any {
            return Err(Error::invalid("cannot embed text without tokens"));
        }
        normalize(acc)
    }
}

impl Embedder for LexicalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<UnitVector>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::embedding::{embed_text, l2_norm};

    #[test]
    fn hash_mock_is_deterministic() {
        let e = HashEmbedder::new(7, 64).unwrap();
        let a = embed_text(&e, "Stocks rally").unwrap();
        let b = embed_text(&e, "Stocks rally").unwrap();
        assert_eq!(a, b);
        assert!((l2_norm(a.as_slice()) - 1.0).abs() < 1e-9);
        let other_seed = HashEmbedder::new(8, 64).unwrap();
        assert_ne!(a, embed_text(&other_seed, "Stocks rally").unwrap());
    }

    #[test]
    fn hash_mock_no_exact_collisions() {
        let e = HashEmbedder::new(1, 16).unwrap();
        let texts: Vec<String> = (0..10_000).map(|i| format!("headline {i}")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let vs = e.embed_batch(&refs).unwrap();
        let distinct: HashSet<Vec<u64>> = vs
            .iter()
            .map(|v| v.as_slice().iter().map(|x| x.to_bits()).collect())
            .collect();
        assert_eq!(distinct.len(), texts.len());
    }

    #[test]
    fn lexical_mock_shares_words() {
        let e = LexicalEmbedder::new(3, 64).unwrap();
        let a = embed_text(&e, "oil prices surge").unwrap();
        let b = embed_text(&e, "Surge in oil prices").unwrap();
        let c = embed_text(&e, "tech earnings beat").unwrap();
        assert!(a.cosine(&b) > a.cosine(&c));
        assert!(embed_text(&e, "   ").is_err());
    }
}
