//! Stochastic augmentation of daily news sets.
//!
//! An augmented set is built slot by slot: a length is drawn from the
//! training corpus, each slot draws an action, generative actions rewrite a
//! headline of the base day through a generation provider (quality-gated by a
//! discriminator), and `Ra` slots copy a headline from another day. The slot
//! order is shuffled and the set is scored with [`crate::simscore`].

mod dataset;
mod providers;

use std::thread;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DailyNewsSet;
use crate::embedding::HeadlineSet;
use crate::error::{Error, Result};
use crate::simscore;

pub use dataset::{build_augmented_dataset, read_augmented_dataset, record_checksum, AugmentConfig, AugmentedRecord};
pub use providers::{
    chat_request, clean_generation, ChatMessage, ChatRequest, Discriminator, Generator, HttpDiscriminator,
    HttpGenerator, MockDiscriminator, MockGenerator, PromptTemplates, MOCK_NEGATION_MARKER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentationAction {
    /// Reword, same meaning.
    Re,
    /// Semantic shift, related but different.
    S,
    /// Negation.
    N,
    /// Random headline from another day.
    Ra,
}

impl AugmentationAction {
    pub const ALL: [AugmentationAction; 4] = [
        AugmentationAction::Re,
        AugmentationAction::S,
        AugmentationAction::N,
        AugmentationAction::Ra,
    ];

    pub fn is_generative(self) -> bool {
        !matches!(self, AugmentationAction::Ra)
    }
}

/// Categorical distribution over actions, renormalized at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionDistribution {
    pub p_re: f64,
    pub p_s: f64,
    pub p_n: f64,
    pub p_ra: f64,
}

impl ActionDistribution {
    /// Validates non-negativity and rescales the weights to sum to one.
    pub fn new(p_re: f64, p_s: f64, p_n: f64, p_ra: f64) -> Result<Self> {
        let ps = [p_re, p_s, p_n, p_ra];
        if ps.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probability must be ≥ 0"));
        }
        let sum: f64 = ps.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("action probabilities sum to zero"));
        }
        Ok(Self {
            p_re: p_re / sum,
            p_s: p_s / sum,
            p_n: p_n / sum,
            p_ra: p_ra / sum,
        })
    }

    /// Weights (0.05, 0.025, 0.05, 0.775); they sum to 0.9 and are rescaled.
    pub fn default_weights() -> [f64; 4] {
        [0.05, 0.025, 0.05, 0.775]
    }

    pub fn probabilities(&self) -> [f64; 4] {
        [self.p_re, self.p_s, self.p_n, self.p_ra]
    }

    pub fn probability(&self, action: AugmentationAction) -> f64 {
        match action {
            AugmentationAction::Re => self.p_re,
            AugmentationAction::S => self.p_s,
            AugmentationAction::N => self.p_n,
            AugmentationAction::Ra => self.p_ra,
        }
    }
}

impl Default for ActionDistribution {
    fn default() -> Self {
        let [a, b, c, d] = Self::default_weights();
        Self::new(a, b, c, d).expect("default weights are valid")
    }
}

/// Discriminator bands: negated `[0, negated_upper)`, shifted
/// `[negated_upper, shifted_upper)`, reworded `[shifted_upper, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityBands {
    pub negated_upper: f64,
    pub shifted_upper: f64,
}

impl Default for QualityBands {
    fn default() -> Self {
        Self {
            negated_upper: 0.33,
            shifted_upper: 0.66,
        }
    }
}

impl QualityBands {
    pub fn new(negated_upper: f64, shifted_upper: f64) -> Result<Self> {
        let b = Self {
            negated_upper,
            shifted_upper,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.negated_upper && self.negated_upper < self.shifted_upper && self.shifted_upper < 1.0) {
            return Err(Error::invalid(
                "quality bands need 0 < negated_upper < shifted_upper < 1",
            ));
        }
        Ok(())
    }

    /// The band a score falls in, as the action it certifies.
    pub fn classify(&self, score: f64) -> Option<AugmentationAction> {
        if !(0.0..=1.0).contains(&score) {
            None
        } else if score < self.negated_upper {
            Some(AugmentationAction::N)
        } else if score < self.shifted_upper {
            Some(AugmentationAction::S)
        } else {
            Some(AugmentationAction::Re)
        }
    }

    pub fn accepts(&self, action: AugmentationAction, score: f64) -> bool {
        action.is_generative() && self.classify(score) == Some(action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSlot {
    pub action: AugmentationAction,
    pub source_id: Option<String>,
    pub text: String,
    pub disc_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSet {
    pub base_date: NaiveDate,
    pub slots: Vec<AugmentedSlot>,
    pub s: f64,
}

impl AugmentedSet {
    pub fn actions(&self) -> impl Iterator<Item = AugmentationAction> + '_ {
        self.slots.iter().map(|s| s.action)
    }

    pub fn recompute_score(&self) -> Result<f64> {
        simscore::score_actions(self.actions())
    }
}

impl HeadlineSet for AugmentedSet {
    fn headline_texts(&self) -> Vec<&str> {
        self.slots.iter().map(|s| s.text.as_str()).collect()
    }
}

/// Draw a set size from the empirical distribution of corpus set sizes.
pub fn sample_length<R: Rng + ?Sized>(corpus_lengths: &[usize], rng: &mut R) -> Result<usize> {
    if corpus_lengths.is_empty() {
        return Err(Error::invalid("no corpus lengths to sample from"));
    }
    let n = corpus_lengths[rng.random_range(0..corpus_lengths.len())];
    if n == 0 {
        return Err(Error::invalid("corpus contains a zero-length day"));
    }
    Ok(n)
}

pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> AugmentationAction {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for action in AugmentationAction::ALL {
        acc += dist.probability(action);
        if u < acc {
            return action;
        }
    }
    // u landed in the rounding gap above the cumulative sum.
    AugmentationAction::ALL
        .into_iter()
        .rev()
        .find(|a| dist.probability(*a) > 0.0)
        .unwrap_or(AugmentationAction::Ra)
}

/// Result of one quality-gated generation.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutcome {
    pub text: String,
    pub accepted: bool,
    pub score: f64,
    pub attempts: u32,
}

/// Generate a variant and gate it on the discriminator band for `action`.
/// Makes one attempt plus up to `max_retries` retries; the last candidate is
/// returned with `accepted = false` when none lands in band.
pub fn generate_variant(
    action: AugmentationAction,
    base_text: &str,
    generator: &dyn Generator,
    discriminator: &dyn Discriminator,
    bands: &QualityBands,
    max_retries: u32,
) -> Result<VariantOutcome> {
    if !action.is_generative() {
        return Err(Error::invalid("Ra is not a generative action"));
    }
    let mut last: Option<VariantOutcome> = None;
    for attempt in 0..=max_retries {
        let text = clean_generation(&generator.generate(action, base_text, attempt)?);
        if text.is_empty() {
            continue;
        }
        let score = discriminator.score(base_text, &text)?;
        let accepted = bands.accepts(action, score);
        let outcome = VariantOutcome {
            text,
            accepted,
            score,
            attempts: attempt + 1,
        };
        if accepted {
            return Ok(outcome);
        }
        last = Some(outcome);
    }
    last.ok_or_else(|| Error::Provider("generator returned only empty text".into()))
}

/// Providers and knobs used by [`transform`].
#[derive(Clone, Copy)]
pub struct Providers<'a> {
    pub generator: &'a dyn Generator,
    pub discriminator: &'a dyn Discriminator,
    pub bands: QualityBands,
    pub max_retries: u32,
    /// Upper bound on concurrent generation requests.
    pub max_concurrent: usize,
}

struct PlannedSlot {
    action: AugmentationAction,
    base_idx: Option<usize>,
    /// Pool index used for `Ra` slots and as fallback for failed generations.
    random_idx: usize,
}

/// Apply the stochastic transformation to `base`. `corpus` supplies the
/// length distribution and the pool for random replacements (its own copy of
/// `base`, if any, is excluded from the pool).
pub fn transform<R: Rng + ?Sized>(
    base: &DailyNewsSet,
    corpus: &[DailyNewsSet],
    dist: &ActionDistribution,
    providers: &Providers<'_>,
    rng: &mut R,
) -> Result<AugmentedSet> {
    base.validate()?;
    let pool: Vec<(&str, &str)> = corpus
        .iter()
        .filter(|d| d.date != base.date)
        .flat_map(|d| d.headlines.iter().map(|h| (h.id.as_str(), h.text.as_str())))
        .collect();
    if pool.is_empty() {
        return Err(Error::invalid("corpus has no headlines outside the base day"));
    }
    let lengths: Vec<usize> = corpus.iter().map(DailyNewsSet::len).collect();

    // All randomness is drawn before any provider call.
    let n = sample_length(&lengths, rng)?;
    let plan: Vec<PlannedSlot> = (0..n)
        .map(|_| {
            let action = sample_action(dist, rng);
            let base_idx = action
                .is_generative()
                .then(|| rng.random_range(0..base.headlines.len()));
            let random_idx = rng.random_range(0..pool.len());
            PlannedSlot {
                action,
                base_idx,
                random_idx,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let generative: Vec<usize> = plan
        .iter()
        .enumerate()
        .filter(|(_, p)| p.base_idx.is_some())
        .map(|(i, _)| i)
        .collect();
    let mut outcomes: Vec<Option<VariantOutcome>> = vec![None; n];
    for wave in generative.chunks(providers.max_concurrent.max(1)) {
        let results: Vec<Result<VariantOutcome>> = thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&i| {
                    let p = &plan[i];
                    let text = base.headlines[p.base_idx.unwrap()].text.as_str();
                    scope.spawn(move || {
                        generate_variant(
                            p.action,
                            text,
                            providers.generator,
                            providers.discriminator,
                            &providers.bands,
                            providers.max_retries,
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::Provider("generation worker panicked".into())))
                })
                .collect()
        });
        for (&i, r) in wave.iter().zip(results) {
            outcomes[i] = Some(r?);
        }
    }

    let slots: Vec<AugmentedSlot> = plan
        .iter()
        .zip(outcomes)
        .map(|(p, outcome)| match (p.base_idx, outcome) {
            (Some(bi), Some(o)) if o.accepted => AugmentedSlot {
                action: p.action,
                source_id: Some(base.headlines[bi].id.clone()),
                text: o.text,
                disc_score: Some(o.score),
            },
            _ => {
                let (id, text) = pool[p.random_idx];
                AugmentedSlot {
                    action: AugmentationAction::Ra,
                    source_id: Some(id.to_string()),
                    text: text.to_string(),
                    disc_score: None,
                }
            }
        })
        .collect();
    let mut slots: Vec<Option<AugmentedSlot>> = slots.into_iter().map(Some).collect();
    let slots: Vec<AugmentedSlot> = order.iter().map(|&i| slots[i].take().unwrap()).collect();
    let s = simscore::score_actions(slots.iter().map(|s| s.action))?;
    Ok(AugmentedSet {
        base_date: base.date,
        slots,
        s,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::Source;

    struct FixedScore(f64);
    impl Discriminator for FixedScore {
        fn score(&self, _: &str, _: &str) -> Result<f64> {
            Ok(self.0)
        }
    }

    struct NegGen;
    impl Generator for NegGen {
        fn generate(&self, _: AugmentationAction, h: &str, _: u32) -> Result<String> {
            Ok(format!("NEG:{h}"))
        }
    }

    struct CountingGen(AtomicU32);
    impl Generator for CountingGen {
        fn generate(&self, _: AugmentationAction, h: &str, attempt: u32) -> Result<String> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{h} v{attempt}"))
        }
    }

    struct AcceptAll;
    impl Discriminator for AcceptAll {
        fn score(&self, _: &str, _: &str) -> Result<f64> {
            Ok(0.9)
        }
    }

    fn day(date: &str, texts: &[&str]) -> DailyNewsSet {
        DailyNewsSet::from_texts(date.parse().unwrap(), texts, Source::Wsj, None, None).unwrap()
    }

    fn corpus() -> Vec<DailyNewsSet> {
        vec![
            day("2020-01-01", &["fed holds rates", "oil slips", "tech rallies"]),
            day("2020-01-02", &["banks gain", "gold steady"]),
            day(
                "2020-01-03",
                &["retail sales jump", "dollar weakens", "bond yields fall", "autos rise"],
            ),
        ]
    }

    #[test]
    fn renormalizes_default_weights() {
        let d = ActionDistribution::default();
        let expected = [0.05 / 0.9, 0.025 / 0.9, 0.05 / 0.9, 0.775 / 0.9];
        for (p, e) in d.probabilities().iter().zip(expected) {
            assert!((p - e).abs() < 1e-15);
        }
        assert!((d.p_ra - 0.8611).abs() < 1e-4);
        assert!(ActionDistribution::new(0.1, 0.1, 0.1, -0.1).is_err());
        assert!(ActionDistribution::new(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn band_boundaries() {
        let b = QualityBands::default();
        assert!(b.accepts(AugmentationAction::N, 0.0));
        assert!(b.accepts(AugmentationAction::N, 0.10));
        assert!(!b.accepts(AugmentationAction::N, 0.33));
        assert!(b.accepts(AugmentationAction::S, 0.33));
        assert!(!b.accepts(AugmentationAction::S, 0.66));
        assert!(b.accepts(AugmentationAction::Re, 0.66));
        assert!(b.accepts(AugmentationAction::Re, 1.0));
        assert!(!b.accepts(AugmentationAction::Re, 1.01));
        assert!(!b.accepts(AugmentationAction::Ra, 0.5));
        assert!(QualityBands::new(0.5, 0.4).is_err());
    }

    #[test]
    fn sample_length_point_mass_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_length(&[3], &mut rng).unwrap(), 3);
        }
        assert!(sample_length(&[], &mut rng).is_err());
    }

    #[test]
    fn sample_length_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| sample_length(&[1, 1, 9], &mut rng).unwrap() == 1)
            .count();
        assert!((ones as f64 / draws as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_action_distribution() {
        let d = ActionDistribution::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!((0..1000).all(|_| sample_action(&d, &mut rng) == AugmentationAction::Ra));
    }

    #[test]
    fn action_sequences_repeat_under_seed() {
        let d = ActionDistribution::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200).map(|_| sample_action(&d, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn negation_in_band_is_accepted() {
        let out = generate_variant(
            AugmentationAction::N,
            "stocks rise",
            &NegGen,
            &FixedScore(0.10),
            &QualityBands::default(),
            3,
        )
        .unwrap();
        assert!(out.accepted);
        assert_eq!(out.text, "NEG:stocks rise");
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn out_of_band_retries_then_gives_up() {
        let gen = CountingGen(AtomicU32::new(0));
        let out = generate_variant(
            AugmentationAction::Re,
            "stocks rise",
            &gen,
            &FixedScore(0.50),
            &QualityBands::default(),
            3,
        )
        .unwrap();
        assert!(!out.accepted);
        assert_eq!(gen.0.load(Ordering::SeqCst), 4);
        assert_eq!(out.text, "stocks rise v3");
    }

    #[test]
    fn lower_edge_of_reword_band_accepted() {
        let out = generate_variant(
            AugmentationAction::Re,
            "x",
            &NegGen,
            &FixedScore(0.66),
            &QualityBands::default(),
            0,
        )
        .unwrap();
        assert!(out.accepted);
    }

    fn providers<'a>(g: &'a dyn Generator, d: &'a dyn Discriminator) -> Providers<'a> {
        Providers {
            generator: g,
            discriminator: d,
            bands: QualityBands::default(),
            max_retries: 3,
            max_concurrent: 4,
        }
    }

    #[test]
    fn all_random_scores_zero() {
        let c = corpus();
        let d = ActionDistribution::new(0.0, 0.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = MockGenerator::new(0);
        let aug = transform(&c[0], &c, &d, &providers(&g, &MockDiscriminator), &mut rng).unwrap();
        assert_eq!(aug.s, 0.0);
        let base_ids: Vec<_> = c[0].headlines.iter().map(|h| h.id.clone()).collect();
        for slot in &aug.slots {
            assert_eq!(slot.action, AugmentationAction::Ra);
            assert!(!base_ids.contains(slot.source_id.as_ref().unwrap()));
        }
    }

    #[test]
    fn all_reword_scores_one() {
        let c = corpus();
        let d = ActionDistribution::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = CountingGen(AtomicU32::new(0));
        let aug = transform(&c[1], &c, &d, &providers(&g, &AcceptAll), &mut rng).unwrap();
        assert_eq!(aug.s, 1.0);
        assert!(aug.slots.iter().all(|s| s.action == AugmentationAction::Re));
    }

    #[test]
    fn failed_generation_degrades_to_random() {
        let c = corpus();
        let d = ActionDistribution::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = CountingGen(AtomicU32::new(0));
        let aug = transform(&c[1], &c, &d, &providers(&g, &FixedScore(0.1)), &mut rng).unwrap();
        assert_eq!(aug.s, 0.0);
        assert!(aug
            .slots
            .iter()
            .all(|s| s.action == AugmentationAction::Ra && s.disc_score.is_none()));
    }

    #[test]
    fn deterministic_under_seed() {
        let c = corpus();
        let d = ActionDistribution::new(0.3, 0.3, 0.2, 0.2).unwrap();
        let g = MockGenerator::new(1);
        let run = |max_concurrent| {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let p = Providers {
                max_concurrent,
                ..providers(&g, &MockDiscriminator)
            };
            (0..20)
                .map(|i| transform(&c[i % 3], &c, &d, &p, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        let a = run(4);
        assert_eq!(a, run(4));
        assert_eq!(a, run(1));
        for aug in &a {
            assert_eq!(aug.recompute_score().unwrap(), aug.s);
        }
    }

    #[test]
    fn corpus_without_other_days_rejected() {
        let c = corpus();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = MockGenerator::new(0);
        let err = transform(
            &c[0],
            &c[..1],
            &ActionDistribution::default(),
            &providers(&g, &MockDiscriminator),
            &mut rng,
        );
        assert!(err.is_err());
    }
}
