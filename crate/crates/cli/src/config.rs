//! Pipeline configuration: TOML, every key optional, unknown keys rejected.

use std::path::{Path, PathBuf};

use contrasim::augmentor::{ActionDistribution, PromptTemplates, QualityBands};
use contrasim::corpus::{
    SplitFractions, SplitMode, DEFAULT_MAX_WORDS, DEFAULT_RELEVANCE_THRESHOLD, DEFAULT_TFIDF_THRESHOLD,
};
use contrasim::heads::ClassifierConfig;
use contrasim::http::RetryPolicy;
use contrasim::metrics::{DEFAULT_BASELINE_REPEATS, DEFAULT_K};
use contrasim::projnet::TrainConfig;
use contrasim::retrieval::SearchSpace;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub corpus: CorpusConfig,
    pub providers: ProvidersConfig,
    pub augment: AugmentSection,
    pub projection: TrainConfig,
    pub metrics: MetricsConfig,
    pub heads: HeadsConfig,
    pub retrieval: RetrievalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/contrasim"),
            dataset: DatasetConfig::default(),
            corpus: CorpusConfig::default(),
            providers: ProvidersConfig::default(),
            augment: AugmentSection::default(),
            projection: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            heads: HeadsConfig::default(),
            retrieval: RetrievalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: DatasetFormat,
    /// Separator used when a day's headlines are embedded as one text.
    pub joiner: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/synthetic_20d.jsonl"),
            format: DatasetFormat::Jsonl,
            joiner: "\n".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    #[default]
    Chronological,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// `random` shuffles with the run seed.
    pub split: SplitKind,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub relevance_filter: bool,
    pub reference_headlines: PathBuf,
    pub relevance_threshold: f64,
    pub tfidf_threshold: f64,
    pub max_words: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        let f = SplitFractions::default();
        Self {
            split: SplitKind::Chronological,
            train_fraction: f.train,
            valid_fraction: f.valid,
            test_fraction: f.test,
            relevance_filter: false,
            reference_headlines: PathBuf::from("data/reference_headlines.txt"),
            relevance_threshold: DEFAULT_RELEVANCE_THRESHOLD,
            tfidf_threshold: DEFAULT_TFIDF_THRESHOLD,
            max_words: DEFAULT_MAX_WORDS,
        }
    }
}

impl CorpusConfig {
    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train_fraction,
            valid: self.valid_fraction,
            test: self.test_fraction,
        }
    }

    pub fn split_mode(&self, seed: u64) -> SplitMode {
        match self.split {
            SplitKind::Chronological => SplitMode::Chronological,
            SplitKind::Random => SplitMode::Random { seed },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProvidersConfig {
    /// Embedding source. Generation and discrimination use the HTTP
    /// endpoints only with `http`; otherwise the offline mocks.
    pub kind: ProviderKind,
    pub mock: MockProviderConfig,
    pub http: HttpProviderConfig,
    pub file: FileProviderConfig,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            mock: MockProviderConfig::default(),
            http: HttpProviderConfig::default(),
            file: FileProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockProviderConfig {
    pub seed: u64,
    pub dim: usize,
}

impl Default for MockProviderConfig {
    fn default() -> Self {
        Self { seed: 0, dim: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpProviderConfig {
    pub generator_url: String,
    pub generator_model: String,
    pub temperature: f64,
    pub discriminator_url: String,
    pub embeddings_url: String,
    pub embeddings_model: Option<String>,
    pub embedding_dim: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub retry: RetryPolicy,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        Self {
            generator_url: String::new(),
            generator_model: String::new(),
            temperature: 0.7,
            discriminator_url: String::new(),
            embeddings_url: String::new(),
            embeddings_model: None,
            embedding_dim: 4096,
            batch_size: 32,
            max_in_flight: 4,
            api_key_env: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileProviderConfig {
    /// Embedding store JSONL keyed by content hash.
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionWeights {
    pub p_re: f64,
    pub p_s: f64,
    pub p_n: f64,
    pub p_ra: f64,
}

impl Default for ActionWeights {
    fn default() -> Self {
        let [p_re, p_s, p_n, p_ra] = ActionDistribution::default_weights();
        Self { p_re, p_s, p_n, p_ra }
    }
}

impl ActionWeights {
    fn as_array(&self) -> [f64; 4] {
        [self.p_re, self.p_s, self.p_n, self.p_ra]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub per_anchor: usize,
    pub max_retries: u32,
    pub max_concurrent: usize,
    pub actions: ActionWeights,
    pub bands: QualityBands,
    pub prompts: PromptTemplates,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            per_anchor: 4,
            max_retries: 3,
            max_concurrent: 4,
            actions: ActionWeights::default(),
            bands: QualityBands::default(),
            prompts: PromptTemplates::default(),
        }
    }
}

impl AugmentSection {
    pub fn distribution(&self) -> ActionDistribution {
        let a = &self.actions;
        ActionDistribution::new(a.p_re, a.p_s, a.p_n, a.p_ra).expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Valid,
    Test,
    #[default]
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub k: usize,
    pub baseline_repeats: usize,
    /// Which ingested days are audited.
    pub split: SplitChoice,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            baseline_repeats: DEFAULT_BASELINE_REPEATS,
            split: SplitChoice::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadsConfig {
    /// Subsample every split to equal class counts.
    pub balance: bool,
    pub baseline_repeats: usize,
    pub classifier: ClassifierConfig,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        Self {
            balance: true,
            baseline_repeats: 1000,
            classifier: ClassifierConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub space: SearchSpace,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 5,
            space: SearchSpace::Projection,
        }
    }
}

/// A checked configuration plus informational notes produced while
/// normalizing it.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: PipelineConfig,
    pub notes: Vec<String>,
}

/// Parse, fill defaults, check every constraint and report all violations
/// at once as `key.path: message` lines.
pub fn validate_str(text: &str) -> Result<Validated, Vec<String>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| vec![format!("parse error: {e}")])?;
    let mut errors = Vec::new();
    for section in ["projection", "heads.classifier"] {
        let mut node = Some(&table);
        for part in section.split('.') {
            node = node.and_then(|t| t.get(part)).and_then(|v| v.as_table());
        }
        if node.is_some_and(|t| t.contains_key("seed")) {
            errors.push(format!("{section}.seed: not allowed here; set the top-level seed"));
        }
    }
    let config: PipelineConfig = match toml::Value::Table(table).try_into() {
        Ok(c) => c,
        Err(e) => {
            errors.push(format!("{e}").trim().to_string());
            return Err(errors);
        }
    };
    errors.extend(violations(&config));
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut notes = Vec::new();
    let sum: f64 = config.augment.actions.as_array().iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        notes.push(format!(
            "augment.actions: weights sum to {sum}; renormalized to {:?}",
            config.augment.distribution().probabilities()
        ));
    }
    Ok(Validated {
        config: normalized(config),
        notes,
    })
}

pub fn validate_file(path: &Path) -> Result<Validated, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    validate_str(&text)
}

/// Copy the run seed into the sections that carry their own.
pub fn normalized(mut config: PipelineConfig) -> PipelineConfig {
    config.projection.seed = config.seed;
    config.heads.classifier.seed = config.seed;
    config
}

fn violations(c: &PipelineConfig) -> Vec<String> {
    let mut v = Vec::new();
    let mut push = |key: &str, msg: &str| v.push(format!("{key}: {msg}"));

    if c.dataset.path.as_os_str().is_empty() {
        push("dataset.path", "must be set");
    }
    let cc = &c.corpus;
    for (key, f) in [
        ("corpus.train_fraction", cc.train_fraction),
        ("corpus.valid_fraction", cc.valid_fraction),
        ("corpus.test_fraction", cc.test_fraction),
    ] {
        if !(0.0..=1.0).contains(&f) {
            push(key, "must lie in [0, 1]");
        }
    }
    if ((cc.train_fraction + cc.valid_fraction + cc.test_fraction) - 1.0).abs() > 1e-9 {
        push("corpus", "train/valid/test fractions must sum to 1");
    }
    if !(-1.0..=1.0).contains(&cc.relevance_threshold) {
        push("corpus.relevance_threshold", "must lie in [-1, 1]");
    }
    if !(cc.tfidf_threshold >= 0.0) {
        push("corpus.tfidf_threshold", "must be ≥ 0");
    }
    if cc.max_words == 0 {
        push("corpus.max_words", "must be ≥ 1");
    }

    let p = &c.providers;
    if p.mock.dim == 0 {
        push("providers.mock.dim", "must be ≥ 1");
    }
    match p.kind {
        ProviderKind::Http => {
            for (key, val) in [
                ("providers.http.generator_url", &p.http.generator_url),
                ("providers.http.discriminator_url", &p.http.discriminator_url),
                ("providers.http.embeddings_url", &p.http.embeddings_url),
            ] {
                if val.is_empty() {
                    push(key, "required when providers.kind = \"http\"");
                }
            }
            if p.http.embedding_dim == 0 {
                push("providers.http.embedding_dim", "must be ≥ 1");
            }
        }
        ProviderKind::File => {
            if p.file.embeddings.as_os_str().is_empty() {
                push("providers.file.embeddings", "required when providers.kind = \"file\"");
            }
        }
        ProviderKind::Mock => {}
    }
    if !(p.http.temperature >= 0.0) {
        push("providers.http.temperature", "must be ≥ 0");
    }
    if p.http
        .api_key_env
        .as_deref()
        .is_some_and(|s| s.is_empty() || s.contains(char::is_whitespace))
    {
        push("providers.http.api_key_env", "must name an environment variable");
    }

    let a = &c.augment;
    if a.per_anchor == 0 {
        push("augment.per_anchor", "must be ≥ 1");
    }
    if a.max_concurrent == 0 {
        push("augment.max_concurrent", "must be ≥ 1");
    }
    let names = ["p_re", "p_s", "p_n", "p_ra"];
    let weights = a.actions.as_array();
    for (name, w) in names.iter().zip(weights) {
        if !(w.is_finite() && w >= 0.0) {
            push(&format!("augment.actions.{name}"), "probability must be ≥ 0");
        }
    }
    if weights.iter().all(|w| *w >= 0.0) && weights.iter().sum::<f64>() <= 0.0 {
        push("augment.actions", "weights sum to zero");
    }
    if a.bands.validate().is_err() {
        push("augment.bands", "need 0 < negated_upper < shifted_upper < 1");
    }

    for (key, msg) in c.projection.violations() {
        push(&format!("projection.{key}"), &msg);
    }
    if c.metrics.k == 0 {
        push("metrics.k", "must be ≥ 1");
    }
    for (key, msg) in c.heads.classifier.violations() {
        push(&format!("heads.classifier.{key}"), &msg);
    }
    if c.heads.baseline_repeats == 0 {
        push("heads.baseline_repeats", "must be ≥ 1");
    }
    if c.retrieval.k == 0 {
        push("retrieval.k", "must be ≥ 1");
    }
    v
}

/// Re-check after command-line overrides.
pub fn revalidate(config: PipelineConfig) -> Result<PipelineConfig, Vec<String>> {
    let errors = violations(&config);
    if errors.is_empty() {
        Ok(normalized(config))
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let v = validate_str("").unwrap();
        assert_eq!(v.config, normalized(PipelineConfig::default()));
        assert_eq!(v.config.projection.lr, 0.001);
        assert_eq!(v.config.projection.batch_anchors, 2);
        assert_eq!(v.config.projection.epochs, 50);
        assert_eq!(v.config.projection.hidden, 256);
        assert_eq!(v.config.projection.projection_dim, 128);
        assert_eq!(v.config.metrics.k, 5);
    }

    #[test]
    fn default_weights_are_renormalized_with_a_note() {
        let v = validate_str("").unwrap();
        assert_eq!(v.notes.len(), 1);
        assert!(v.notes[0].contains("renormalized"));
        let p = v.config.augment.distribution().probabilities();
        assert!((p[0] - 0.05 / 0.9).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_probability_reported() {
        let errs = validate_str("[augment.actions]\np_ra = -0.1\n").unwrap_err();
        assert_eq!(errs, vec!["augment.actions.p_ra: probability must be ≥ 0".to_string()]);
    }

    #[test]
    fn all_violations_reported_together() {
        let text = "[projection]\nlr = -1.0\nmargin = 0.0\n[metrics]\nk = 0\n[augment]\nper_anchor = 0\n";
        let errs = validate_str(text).unwrap_err();
        for key in ["projection.lr", "projection.margin", "metrics.k", "augment.per_anchor"] {
            assert!(errs.iter().any(|e| e.starts_with(key)), "{key} missing from {errs:?}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(validate_str("[projection]\nlearning_rate = 0.1\n").is_err());
        assert!(validate_str("colour = 1\n").is_err());
    }

    #[test]
    fn section_seeds_rejected() {
        let errs = validate_str("[projection]\nseed = 3\n").unwrap_err();
        assert!(errs[0].starts_with("projection.seed"));
    }

    #[test]
    fn http_requires_endpoints() {
        let errs = validate_str("[providers]\nkind = \"http\"\n").unwrap_err();
        assert_eq!(errs.len(), 3);
    }
}
