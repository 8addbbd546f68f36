//! Synthetic news world with latent topics.
//!
//! Every headline carries one topic word and a handful of filler words. The
//! topic of a day fixes its market label. [`TopicGenerator`] rewrites filler
//! while keeping topic words, and [`TopicDiscriminator`] scores pairs by topic
//! agreement, so augmentation similarity tracks topic preservation.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::augmentor::{AugmentationAction, Discriminator, Generator};
use crate::corpus::{DailyNewsSet, MarketLabel, Source};
use crate::embedding::{normalize, Embedder, UnitVector};
use crate::error::{Error, Result};

const TOPIC_WORDS: [&[&str]; 3] = [
    &[
        "rates",
        "fed",
        "inflation",
        "treasury",
        "yields",
        "bonds",
        "powell",
        "hike",
        "lending",
        "mortgage",
        "credit",
        "debt",
    ],
    &[
        "oil", "crude", "opec", "gas", "pipeline", "refinery", "barrel", "drilling", "energy", "brent", "shale", "fuel",
    ],
    &[
        "chips",
        "software",
        "cloud",
        "semiconductor",
        "startup",
        "ai",
        "smartphone",
        "apple",
        "nvidia",
        "data",
        "internet",
        "robotics",
    ],
];

const FILLER: &[&str] = &[
    "shares",
    "market",
    "investors",
    "report",
    "week",
    "analysts",
    "quarter",
    "outlook",
    "plan",
    "deal",
    "talks",
    "growth",
    "record",
    "pressure",
    "sector",
    "firms",
    "global",
    "early",
    "trading",
    "session",
    "index",
    "gains",
    "losses",
    "forecast",
    "demand",
    "supply",
    "prices",
    "costs",
    "profit",
    "revenue",
    "earnings",
    "estimates",
    "board",
    "chief",
    "executive",
    "company",
    "group",
    "unit",
    "stake",
    "merger",
    "bid",
    "review",
    "probe",
    "ruling",
    "court",
    "rules",
    "policy",
    "government",
    "officials",
    "lawmakers",
    "budget",
    "tax",
    "tariff",
    "exports",
    "imports",
    "trade",
    "china",
    "europe",
    "asia",
    "japan",
    "london",
    "york",
    "street",
    "wall",
    "banks",
    "funds",
    "hedge",
    "pension",
    "retail",
    "consumers",
    "jobs",
    "wages",
    "housing",
    "factory",
    "output",
    "orders",
    "survey",
    "confidence",
    "slowdown",
    "recovery",
    "rally",
    "slide",
    "surge",
    "drop",
    "rise",
    "fall",
    "steady",
    "mixed",
    "volatile",
    "cautious",
    "strong",
    "weak",
    "late",
    "new",
    "big",
    "small",
    "major",
    "top",
    "key",
    "second",
];

/// Token that marks a negated headline in the synthetic world.
pub const NEGATION_TOKEN: &str = "not";

fn label_for_topic(topic: usize) -> MarketLabel {
    MarketLabel::ALL[topic % 3]
}

#[derive(Debug, Clone)]
pub struct TopicWorld {
    pub n_topics: usize,
    pub filler: Vec<String>,
    pub filler_per_headline: usize,
    pub headlines_per_day: (usize, usize),
}

impl TopicWorld {
    /// `filler_vocab` words of filler; beyond the built-in list, numbered
    /// tokens are used.
    pub fn new(filler_vocab: usize, filler_per_headline: usize, headlines_per_day: (usize, usize)) -> Result<Self> {
        if filler_vocab == 0 || headlines_per_day.0 == 0 || headlines_per_day.0 > headlines_per_day.1 {
            return Err(Error::invalid("invalid synthetic world shape"));
        }
        let filler = (0..filler_vocab)
            .map(|i| match FILLER.get(i) {
                Some(w) => w.to_string(),
                None => format!("w{i:05}"),
            })
            .collect();
        Ok(Self {
            n_topics: TOPIC_WORDS.len(),
            filler,
            filler_per_headline,
            headlines_per_day,
        })
    }

    pub fn topic_words(topic: usize) -> &'static [&'static str] {
        TOPIC_WORDS[topic]
    }

    pub fn topic_of_word(word: &str) -> Option<usize> {
        TOPIC_WORDS.iter().position(|ws| ws.contains(&word))
    }

    /// Topic words of a headline, and whether it is negated.
    pub fn analyze(headline: &str) -> (BTreeSet<&'static str>, bool) {
        let mut negated = false;
        let mut words = BTreeSet::new();
        for (i, w) in headline.split_whitespace().enumerate() {
            if i == 0 && w == NEGATION_TOKEN {
                negated = true;
            }
            if let Some(t) = Self::topic_of_word(w) {
                let idx = TOPIC_WORDS[t].iter().position(|x| *x == w).expect("word in topic");
                words.insert(TOPIC_WORDS[t][idx]);
            }
        }
        (words, negated)
    }

    fn fill<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<String> {
        (0..self.filler_per_headline)
            .map(|_| self.filler.choose(rng).expect("non-empty filler").clone())
            .collect()
    }

    pub fn headline<R: Rng + ?Sized>(&self, topic: usize, rng: &mut R) -> String {
        let mut words = self.fill(rng);
        let t = TOPIC_WORDS[topic].choose(rng).expect("topic words").to_string();
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, t);
        words.join(" ")
    }

    /// One labeled day. The percentage change lies inside the label's band.
    pub fn day<R: Rng + ?Sized>(&self, date: NaiveDate, topic: usize, rng: &mut R) -> Result<DailyNewsSet> {
        let n = rng.random_range(self.headlines_per_day.0..=self.headlines_per_day.1);
        let texts: Vec<String> = (0..n).map(|_| self.headline(topic, rng)).collect();
        let label = label_for_topic(topic);
        let pct = match label {
            MarketLabel::Fall => -rng.random_range(0.6..2.5),
            MarketLabel::Neutral => rng.random_range(-0.45..0.45),
            MarketLabel::Rise => rng.random_range(0.6..2.5),
        };
        let pct = (pct * 100.0_f64).round() / 100.0;
        DailyNewsSet::from_texts(date, &texts, Source::Other, Some(label), Some(pct))
    }

    /// `n_days` consecutive days with topics as balanced as `n_days` allows,
    /// in shuffled order.
    pub fn corpus(&self, start: NaiveDate, n_days: usize, seed: u64) -> Result<Vec<DailyNewsSet>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut topics: Vec<usize> = (0..n_days).map(|i| i % self.n_topics).collect();
        topics.shuffle(&mut rng);
        topics
            .iter()
            .enumerate()
            .map(|(i, &t)| self.day(start + Duration::days(i as i64), t, &mut rng))
            .collect()
    }

    /// Topic of a generated day, read from its label.
    pub fn topic_of_day(day: &DailyNewsSet) -> Option<usize> {
        day.effective_label().map(MarketLabel::index)
    }
}

fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Rewrites headlines of the synthetic world. `Re` keeps the topic word and
/// redraws the filler, `S` also swaps the topic word for another word of the
/// same topic, `N` prefixes [`NEGATION_TOKEN`].
#[derive(Debug, Clone)]
pub struct TopicGenerator {
    world: TopicWorld,
    seed: u64,
}

impl TopicGenerator {
    pub fn new(world: TopicWorld, seed: u64) -> Self {
        Self { world, seed }
    }
}

impl Generator for TopicGenerator {
    fn generate(&self, action: AugmentationAction, headline: &str, attempt: u32) -> Result<String> {
        let tag: &[u8] = match action {
            AugmentationAction::Re => b"re",
            AugmentationAction::S => b"s",
            AugmentationAction::N => return Ok(format!("{NEGATION_TOKEN} {headline}")),
            AugmentationAction::Ra => return Err(Error::invalid("Ra is not generated")),
        };
        let mut rng = rng_for(self.seed, &[tag, headline.as_bytes(), &attempt.to_le_bytes()]);
        let (topics, _) = TopicWorld::analyze(headline);
        let mut words = self.world.fill(&mut rng);
        for w in topics {
            let word = if action == AugmentationAction::S {
                let t = TopicWorld::topic_of_word(w).expect("topic word");
                let others: Vec<&&str> = TOPIC_WORDS[t].iter().filter(|x| **x != w).collect();
                others.choose(&mut rng).map_or(w, |x| **x)
            } else {
                w
            };
            let pos = rng.random_range(0..=words.len());
            words.insert(pos, word.to_string());
        }
        Ok(words.join(" "))
    }
}

/// Scores by topic agreement: 0.9 for the same topic words, 0.5 for the
/// same topics with different words, 0 otherwise; a negation on exactly one
/// side gives 0.1.
#[derive(Debug, Clone, Copy, Default)]
pub struct TopicDiscriminator;

impl Discriminator for TopicDiscriminator {
    fn score(&self, base: &str, candidate: &str) -> Result<f64> {
        let (a, neg_a) = TopicWorld::analyze(base);
        let (b, neg_b) = TopicWorld::analyze(candidate);
        if neg_a != neg_b {
            return Ok(0.1);
        }
        let topics =
            |s: &BTreeSet<&str>| -> BTreeSet<usize> { s.iter().filter_map(|w| TopicWorld::topic_of_word(w)).collect() };
        Ok(if a == b {
            0.9
        } else if topics(&a) == topics(&b) {
            0.5
        } else {
            0.0
        })
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Bag-of-words embedder whose topic-word vectors share a per-topic
/// direction: a topic word maps to `g_word + strength · g_topic`, any other
/// token to `g_token`, all independent standard Gaussians. The text vector
/// is the normalized sum over tokens.
#[derive(Debug, Clone)]
pub struct TopicEmbedder {
    seed: u64,
    dim: usize,
    strength: f64,
}

impl TopicEmbedder {
    pub fn new(seed: u64, dim: usize, strength: f64) -> Result<Self> {
        if dim == 0 || !(strength >= 0.0) {
            return Err(Error::invalid("invalid topic embedder"));
        }
        Ok(Self { seed, dim, strength })
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut v = gaussian(&mut rng_for(self.seed, &[b"token", token.as_bytes()]), self.dim);
        if let Some(t) = TopicWorld::topic_of_word(token) {
            let dir = gaussian(
                &mut rng_for(self.seed, &[b"topic", &(t as u64).to_le_bytes()]),
                self.dim,
            );
            v.iter_mut().zip(dir).for_each(|(a, b)| *a += self.strength * b);
        }
        v
    }
}

impl Embedder for TopicEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<UnitVector>> {
        texts
            .iter()
            .map(|text| {
                let mut acc = vec![0.0; self.dim];
                for token in text.split_whitespace() {
                    acc.iter_mut()
                        .zip(self.token_vector(&token.to_lowercase()))
                        .for_each(|(a, b)| *a += b);
                }
                normalize(acc)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augmentor::QualityBands;

    fn world() -> TopicWorld {
        TopicWorld::new(200, 6, (3, 5)).unwrap()
    }

    #[test]
    fn days_carry_consistent_labels() {
        let days = world().corpus("2022-01-03".parse().unwrap(), 30, 1).unwrap();
        assert_eq!(days.len(), 30);
        for d in &days {
            d.validate().unwrap();
            let t = TopicWorld::topic_of_day(d).unwrap();
            for h in &d.headlines {
                let (words, neg) = TopicWorld::analyze(&h.text);
                assert!(!neg);
                assert!(words.iter().all(|w| TopicWorld::topic_of_word(w) == Some(t)));
                assert_eq!(words.len(), 1);
            }
        }
        let per_topic = |t| days.iter().filter(|d| TopicWorld::topic_of_day(d) == Some(t)).count();
        assert_eq!((per_topic(0), per_topic(1), per_topic(2)), (10, 10, 10));
    }

    #[test]
    fn generator_lands_in_bands() {
        let w = world();
        let g = TopicGenerator::new(w.clone(), 5);
        let bands = QualityBands::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let h = w.headline(rng.random_range(0..3), &mut rng);
            for a in [AugmentationAction::Re, AugmentationAction::S, AugmentationAction::N] {
                let out = g.generate(a, &h, 0).unwrap();
                let s = TopicDiscriminator.score(&h, &out).unwrap();
                assert!(bands.accepts(a, s), "{a:?} {h} -> {out}: {s}");
            }
        }
    }

    #[test]
    fn topic_embedder_correlates_topic_words() {
        let e = TopicEmbedder::new(1, 64, 1.0).unwrap();
        let v = e.embed_batch(&["fed", "rates", "oil", "fed"]).unwrap();
        assert!(v[0].cosine(&v[1]) > 0.2);
        assert!(v[0].cosine(&v[2]).abs() < 0.5);
        assert_eq!(v[0], v[3]);
        let flat = TopicEmbedder::new(1, 64, 0.0).unwrap();
        let w = flat.embed_batch(&["fed", "rates"]).unwrap();
        assert!(w[0].cosine(&w[1]).abs() < 0.5);
    }

    #[test]
    fn generation_is_deterministic() {
        let g = TopicGenerator::new(world(), 5);
        let h = "fed shares market week";
        assert_eq!(
            g.generate(AugmentationAction::S, h, 1).unwrap(),
            g.generate(AugmentationAction::S, h, 1).unwrap()
        );
    }
}
