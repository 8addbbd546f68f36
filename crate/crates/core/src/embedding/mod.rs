//! Encoder embeddings as unit vectors, and the providers that produce them.

mod http;
mod mock;
mod store;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use http::HttpEmbedder;
pub use mock::{HashEmbedder, LexicalEmbedder};
pub use store::EmbeddingStore;

/// Norms below this are treated as zero.
pub const MIN_NORM: f64 = 1e-12;

/// Default joiner for concatenating the headlines of one day.
pub const DEFAULT_JOINER: &str = "\n";

/// An L2-normalized, finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Accept a vector that should already be unit length. Values within
    /// 1e-9 of unit norm are kept bit-for-bit; anything else is renormalized.
    pub fn from_stored(v: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&v);
        if !v.is_empty() && v.iter().all(|x| x.is_finite()) && (norm - 1.0).abs() <= 1e-9 {
            Ok(UnitVector(v))
        } else {
            normalize(v)
        }
    }

    /// Cosine similarity, which for unit vectors is the dot product.
    pub fn cosine(&self, other: &UnitVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

impl<'de> Deserialize<'de> for UnitVector {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        UnitVector::from_stored(raw).map_err(serde::de::Error::custom)
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scale `v` onto the unit sphere.
pub fn normalize(v: Vec<f64>) -> Result<UnitVector> {
    if v.is_empty() {
        return Err(Error::invalid("cannot normalize an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("embedding"));
    }
    let norm = l2_norm(&v);
    if norm < MIN_NORM {
        return Err(Error::ZeroNorm(norm));
    }
    Ok(UnitVector(v.into_iter().map(|x| x / norm).collect()))
}

/// Cosine similarity of two arbitrary (non-zero) vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (l2_norm(a) * l2_norm(b))
}

/// Store key of a text: lowercase hex SHA-256 of its exact bytes.
pub fn content_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A source of encoder embeddings.
pub trait Embedder: Send + Sync {
    /// Output dimension.
    fn dim(&self) -> usize;

    /// Embed a batch of texts. Output order matches input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<UnitVector>>;
}

pub fn embed_text(embedder: &dyn Embedder, text: &str) -> Result<UnitVector> {
    let mut out = embedder.embed_batch(&[text])?;
    let v = out
        .pop()
        .ok_or_else(|| Error::Provider("provider returned no embedding".into()))?;
    check_dim(embedder.dim(), &v)?;
    Ok(v)
}

/// Concatenate headline texts with `joiner`, in the given order.
pub fn join_headlines<'a, I>(texts: I, joiner: &str) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    texts.into_iter().collect::<Vec<_>>().join(joiner)
}

/// Anything that can be embedded as a single day of headlines.
pub trait HeadlineSet {
    fn headline_texts(&self) -> Vec<&str>;

    fn joined_text(&self, joiner: &str) -> String {
        join_headlines(self.headline_texts(), joiner)
    }
}

pub fn embed_dns(embedder: &dyn Embedder, set: &dyn HeadlineSet, joiner: &str) -> Result<UnitVector> {
    embed_text(embedder, &set.joined_text(joiner))
}

pub(crate) fn check_dim(expected: usize, v: &UnitVector) -> Result<()> {
    if v.dim() != expected {
        return Err(Error::DimensionMismatch { expected, got: v.dim() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_three_four() {
        let u = normalize(vec![3.0, 4.0]).unwrap();
        assert!((u.as_slice()[0] - 0.6).abs() < 1e-15);
        assert!((u.as_slice()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalize_is_idempotent() {
        let u = normalize(vec![0.3, -1.2, 2.5, 0.01]).unwrap();
        let again = normalize(u.as_slice().to_vec()).unwrap();
        for (a, b) in u.as_slice().iter().zip(again.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((l2_norm(again.as_slice()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_zero() {
        assert!(matches!(normalize(vec![0.0, 0.0]), Err(Error::ZeroNorm(_))));
        assert!(normalize(vec![]).is_err());
        assert!(normalize(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn content_key_is_lower_hex_sha256() {
        assert_eq!(
            content_key("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn deserialize_normalizes() {
        let u: UnitVector = serde_json::from_str("[0, 2]").unwrap();
        assert_eq!(u.as_slice(), &[0.0, 1.0]);
        assert!(serde_json::from_str::<UnitVector>("[0, 0]").is_err());
    }
}
