//! tf-idf pruning of over-long day texts.
//!
//! Scores follow the common smoothed convention: raw term count in the
//! document times `ln((1 + N) / (1 + df)) + 1`, with the document's score
//! vector L2-normalized. Terms are lowercased whitespace-delimited words.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::DailyNewsSet;
use crate::error::{Error, Result};

pub const DEFAULT_TFIDF_THRESHOLD: f64 = 0.2;
pub const DEFAULT_MAX_WORDS: usize = 3000;

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn term(word: &str) -> String {
    word.to_lowercase()
}

/// Document frequencies fitted on the training days.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    n_docs: usize,
    df: HashMap<String, usize>,
}

impl TfIdfModel {
    pub fn fit<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut model = TfIdfModel::default();
        for doc in docs {
            model.n_docs += 1;
            let mut terms: Vec<String> = doc.split_whitespace().map(term).collect();
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *model.df.entry(t).or_default() += 1;
            }
        }
        model
    }

    pub fn is_fitted(&self) -> bool {
        self.n_docs > 0
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf(&self, t: &str) -> f64 {
        let df = self.df.get(t).copied().unwrap_or(0) as f64;
        ((1.0 + self.n_docs as f64) / (1.0 + df)).ln() + 1.0
    }

    /// Normalized tf-idf score of every distinct term of `text`.
    pub fn scores(&self, text: &str) -> HashMap<String, f64> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for w in text.split_whitespace() {
            *counts.entry(term(w)).or_default() += 1;
        }
        let mut raw: HashMap<String, f64> = counts
            .into_iter()
            .map(|(t, c)| {
                let v = c as f64 * self.idf(&t);
                (t, v)
            })
            .collect();
        let norm = raw.values().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in raw.values_mut() {
                *v /= norm;
            }
        }
        raw
    }
}

/// Shorten `text` when it has more than `max_words` words: drop words whose
/// tf-idf score is below `threshold`, then keep the first `max_words`
/// survivors. Shorter texts are returned unchanged.
pub fn tfidf_prune(text: &str, model: &TfIdfModel, threshold: f64, max_words: usize) -> Result<String> {
    if !model.is_fitted() {
        return Err(Error::invalid("tf-idf model is not fitted"));
    }
    if word_count(text) <= max_words {
        return Ok(text.to_string());
    }
    let scores = model.scores(text);
    let kept: Vec<&str> = text
        .split_whitespace()
        .filter(|w| scores.get(&term(w)).copied().unwrap_or(0.0) >= threshold)
        .take(max_words)
        .collect();
    Ok(kept.join(" "))
}

/// [`tfidf_prune`] over a whole day that keeps headline boundaries: words
/// are scored against the day's full text, filtered headline by headline,
/// and the word cap counts across headlines in order. Headlines left
/// without words are dropped; a day left without headlines is an error.
pub fn tfidf_prune_day(
    day: &DailyNewsSet,
    model: &TfIdfModel,
    threshold: f64,
    max_words: usize,
) -> Result<DailyNewsSet> {
    if !model.is_fitted() {
        return Err(Error::invalid("tf-idf model is not fitted"));
    }
    let texts: Vec<&str> = day.headlines.iter().map(|h| h.text.as_str()).collect();
    let full = texts.join(" ");
    if word_count(&full) <= max_words {
        return Ok(day.clone());
    }
    let scores = model.scores(&full);
    let mut budget = max_words;
    let mut out = day.clone();
    out.headlines.clear();
    for h in &day.headlines {
        let kept: Vec<&str> = h
            .text
            .split_whitespace()
            .filter(|w| scores.get(&term(w)).copied().unwrap_or(0.0) >= threshold)
            .take(budget)
            .collect();
        budget -= kept.len();
        if !kept.is_empty() {
            let mut h = h.clone();
            h.text = kept.join(" ");
            out.headlines.push(h);
        }
    }
    if out.headlines.is_empty() {
        return Err(Error::EmptyHeadlines);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> TfIdfModel {
        TfIdfModel::fit(["alpha beta gamma", "beta delta", "alpha alpha epsilon"])
    }

    #[test]
    fn idf_smoothing() {
        let m = model();
        assert!((m.idf("beta") - ((4.0f64 / 3.0).ln() + 1.0)).abs() < 1e-15);
        assert!((m.idf("unseen") - (4.0f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn short_text_unchanged() {
        let text = "one two three four five six seven eight nine ten";
        assert_eq!(tfidf_prune(text, &model(), 0.2, 3000).unwrap(), text);
    }

    #[test]
    fn truncation_only_when_all_scores_high() {
        let text = vec!["stock"; 3005].join(" ");
        let out = tfidf_prune(&text, &model(), 0.2, 3000).unwrap();
        assert_eq!(word_count(&out), 3000);
    }

    #[test]
    fn low_scoring_words_removed() {
        // "rare" scores high; 30 one-off filler words each score low.
        let mut words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        words.extend(std::iter::repeat("rare".to_string()).take(20));
        let text = words.join(" ");
        let m = TfIdfModel::fit(["w0 w1 w2", "w3 w4"]);
        let scores = m.scores(&text);
        assert!(scores["rare"] >= 0.2 && scores["w0"] < 0.2);
        let out = tfidf_prune(&text, &m, 0.2, 10).unwrap();
        assert_eq!(out, vec!["rare"; 10].join(" "));
    }

    #[test]
    fn empty_text() {
        assert_eq!(tfidf_prune("", &model(), 0.2, 3000).unwrap(), "");
    }

    #[test]
    fn unfitted_model_rejected() {
        assert!(tfidf_prune("x", &TfIdfModel::default(), 0.2, 3000).is_err());
    }

    proptest! {
        #[test]
        fn never_exceeds_cap(words in proptest::collection::vec("[a-e]{1,3}", 0..80), cap in 1usize..40) {
            let text = words.join(" ");
            let out = tfidf_prune(&text, &model(), 0.2, cap).unwrap();
            prop_assert!(word_count(&out) <= cap);
            if words.len() <= cap {
                prop_assert_eq!(out, text);
            }
        }
    }

    #[test]
    fn day_pruning_keeps_headline_boundaries() {
        use crate::corpus::Source;
        let m = model();
        let date = "2020-01-01".parse().unwrap();
        let day = DailyNewsSet::from_texts(date, &["alpha zeta zeta", "beta zeta"], Source::Other, None, None).unwrap();
        assert_eq!(tfidf_prune_day(&day, &m, 0.2, 10).unwrap(), day);

        // Joined text prunes to the same words, split back per headline.
        let flat = tfidf_prune("alpha zeta zeta beta zeta", &m, 0.2, 4).unwrap();
        let pruned = tfidf_prune_day(&day, &m, 0.2, 4).unwrap();
        let texts: Vec<&str> = pruned.headlines.iter().map(|h| h.text.as_str()).collect();
        assert_eq!(texts.join(" "), flat);
        assert!(pruned.headlines.iter().all(|h| h.id.starts_with("2020-01-01#")));
        assert!(word_count(&texts.join(" ")) <= 4);

        assert!(matches!(tfidf_prune_day(&day, &m, 2.0, 1), Err(Error::EmptyHeadlines)));
    }
}
