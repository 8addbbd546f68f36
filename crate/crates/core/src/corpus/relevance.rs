use std::path::Path;

use super::Headline;
use crate::embedding::{check_dim, Embedder, UnitVector};
use crate::error::{Error, Result};

pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 0.2;

/// Keep headlines whose best cosine against any reference reaches
/// `threshold`. Order is preserved.
pub fn relevance_filter(
    headlines: &[Headline],
    references: &[UnitVector],
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<Vec<Headline>> {
    let Some(first) = references.first() else {
        return Err(Error::invalid("relevance filter needs at least one reference"));
    };
    for r in references {
        check_dim(first.dim(), r)?;
    }
    check_dim(embedder.dim(), first)?;

    let mut kept = Vec::new();
    for h in headlines {
        let v = embedder
            .embed_batch(&[h.text.as_str()])
            .and_then(|mut vs| vs.pop().ok_or_else(|| Error::Provider("no embedding returned".into())))
            .map_err(|e| Error::Provider(format!("headline {}: {e}", h.id)))?;
        check_dim(first.dim(), &v)?;
        let best = references.iter().map(|r| v.cosine(r)).fold(f64::NEG_INFINITY, f64::max);
        if best >= threshold {
            kept.push(h.clone());
        }
    }
    Ok(kept)
}

/// One reference headline per non-blank line; `#` starts a comment line.
pub fn load_reference_headlines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;

    use super::*;
    use crate::corpus::Source;
    use crate::embedding::{embed_text, normalize, EmbeddingStore, HashEmbedder};

    fn headline(i: usize, text: &str) -> Headline {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        Headline::new(format!("h{i}"), d, text, Source::Other).unwrap()
    }

    fn store(entries: &[(&str, Vec<f64>)]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(3);
        for (t, v) in entries {
            s.insert_text(t, normalize(v.clone()).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn exact_reference_is_kept_and_orthogonal_dropped() {
        let s = store(&[("same", vec![1.0, 0.0, 0.0]), ("orth", vec![0.0, 0.0, 1.0])]);
        let refs = vec![
            normalize(vec![1.0, 0.0, 0.0]).unwrap(),
            normalize(vec![0.0, 1.0, 0.0]).unwrap(),
        ];
        let hs = vec![headline(0, "same"), headline(1, "orth")];
        let kept = relevance_filter(&hs, &refs, &s, 0.2).unwrap();
        assert_eq!(kept, vec![hs[0].clone()]);
    }

    #[test]
    fn mixed_batch_matches_cosine_oracle() {
        let e = HashEmbedder::new(11, 16).unwrap();
        let refs: Vec<UnitVector> = ["rates rise", "oil falls"]
            .iter()
            .map(|t| embed_text(&e, t).unwrap())
            .collect();
        let hs = vec![
            headline(0, "rates rise"),
            headline(1, "cat video"),
            headline(2, "market wrap"),
        ];
        let threshold = 0.1;
        let expected: Vec<Headline> = hs
            .iter()
            .filter(|h| {
                let v = embed_text(&e, &h.text).unwrap();
                refs.iter().any(|r| {
                    let c: f64 = v.as_slice().iter().zip(r.as_slice()).map(|(a, b)| a * b).sum();
                    c >= threshold
                })
            })
            .cloned()
            .collect();
        assert_eq!(relevance_filter(&hs, &refs, &e, threshold).unwrap(), expected);
        assert!(expected.contains(&hs[0]));
    }

    #[test]
    fn raising_threshold_never_adds() {
        let e = HashEmbedder::new(5, 16).unwrap();
        let refs = vec![embed_text(&e, "ref").unwrap()];
        let hs: Vec<Headline> = (0..40).map(|i| headline(i, &format!("headline {i}"))).collect();
        let mut prev = usize::MAX;
        for step in 0..20 {
            let t = -1.0 + step as f64 * 0.1;
            let n = relevance_filter(&hs, &refs, &e, t).unwrap().len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn provider_error_names_headline() {
        let s = EmbeddingStore::new(3);
        let refs = vec![normalize(vec![1.0, 0.0, 0.0]).unwrap()];
        let err = relevance_filter(&[headline(7, "unknown")], &refs, &s, 0.2).unwrap_err();
        assert!(err.to_string().contains("h7"));
    }

    #[test]
    fn empty_references_rejected() {
        let s = EmbeddingStore::new(3);
        assert!(relevance_filter(&[], &[], &s, 0.2).is_err());
    }
}
