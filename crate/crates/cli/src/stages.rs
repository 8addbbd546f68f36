//! One function per pipeline command. Every stage reads its predecessors'
//! artifacts from the output directory and writes its own next to a
//! manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use contrasim::augmentor::{build_augmented_dataset, read_augmented_dataset, AugmentConfig, AugmentedSet, Providers};
use contrasim::corpus::{
    ingest_dataset, load_reference_headlines, relevance_filter, split_corpus, tfidf_prune_day, write_dataset,
    DailyNewsSet, MarketLabel, TfIdfModel,
};
use contrasim::embedding::{embed_dns, Embedder, EmbeddingStore, HeadlineSet};
use contrasim::heads::{
    balance_indices, evaluate, features_from_embedding, train_classifier, uniform_random_baseline, Classifier,
    EvalReport, EvalResult, FeatureSource, LabeledFeatures,
};
use contrasim::metrics::{action_shift_analysis, audit_space, LabeledPoint, ShiftPair, SpaceReport};
use contrasim::nn::{Checkpoint, CheckpointKind};
use contrasim::projnet::{assemble_training_set, train, ProjectionNet};
use contrasim::retrieval::{build_index, QueryResult, SearchSpace};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{PipelineConfig, SplitChoice};
use crate::manifest::{sha256_file, ManifestBuilder};
use crate::providers::{self, Resolved};

/// Bad invocation or missing predecessor; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub struct Run {
    pub config: PipelineConfig,
    pub out: PathBuf,
}

const SPLITS: [&str; 3] = ["train", "valid", "test"];

struct Split {
    train: Vec<DailyNewsSet>,
    valid: Vec<DailyNewsSet>,
    test: Vec<DailyNewsSet>,
}

impl Split {
    fn all(&self) -> Vec<DailyNewsSet> {
        let mut v: Vec<DailyNewsSet> = self
            .train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .cloned()
            .collect();
        v.sort_by_key(|d| d.date);
        v
    }

    fn choose(&self, which: SplitChoice) -> Vec<DailyNewsSet> {
        match which {
            SplitChoice::Train => self.train.clone(),
            SplitChoice::Valid => self.valid.clone(),
            SplitChoice::Test => self.test.clone(),
            SplitChoice::All => self.all(),
        }
    }
}

impl Run {
    fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.out.join(stage);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn artifact(&self, stage: &str, file: &str) -> PathBuf {
        self.out.join(stage).join(file)
    }

    /// Path of a predecessor artifact, or a usage error naming the command
    /// that produces it.
    fn require(&self, stage: &str, file: &str, command: &str) -> Result<PathBuf> {
        let p = self.artifact(stage, file);
        if !p.is_file() {
            return Err(usage(format!("{} not found; run {command} first", p.display())));
        }
        Ok(p)
    }

    fn split_paths(&self) -> Result<Vec<PathBuf>> {
        SPLITS
            .iter()
            .map(|s| self.require("ingest", &format!("{s}.jsonl"), "ingest"))
            .collect()
    }

    fn load_split(&self) -> Result<Split> {
        let p = self.split_paths()?;
        Ok(Split {
            train: ingest_dataset(&p[0])?,
            valid: ingest_dataset(&p[1])?,
            test: ingest_dataset(&p[2])?,
        })
    }

    fn joiner(&self) -> &str {
        &self.config.dataset.joiner
    }

    fn store_path(&self) -> Result<PathBuf> {
        self.require("embed", "embeddings.jsonl", "embed")
    }

    fn load_store(&self) -> Result<EmbeddingStore> {
        let p = self.store_path()?;
        EmbeddingStore::load(&p).with_context(|| format!("loading {}", p.display()))
    }

    fn resolved_embedder(&self) -> Result<Resolved> {
        Ok(Resolved {
            store: self.load_store()?,
            fallback: providers::embedder(&self.config)?,
        })
    }

    fn projection_path(&self) -> Result<PathBuf> {
        self.require("proj", "projection.json", "train-proj")
    }

    fn load_projection(&self) -> Result<(ProjectionNet, Checkpoint)> {
        let p = self.projection_path()?;
        let ckpt = Checkpoint::load(&p, CheckpointKind::Projection)?;
        Ok((ProjectionNet::from_params(ckpt.params.clone())?, ckpt))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn labeled(days: &[DailyNewsSet]) -> Vec<&DailyNewsSet> {
    days.iter().filter(|d| d.effective_label().is_some()).collect()
}

pub fn ingest(run: &Run) -> Result<()> {
    let c = &run.config;
    let src = &c.dataset.path;
    if !src.is_file() {
        return Err(usage(format!("dataset {} not found", src.display())));
    }
    let mut days = ingest_dataset(src)?;
    for d in &mut days {
        d.label = d.effective_label();
    }
    let mut manifest = ManifestBuilder::new(&run.out, "ingest");
    manifest.input(src);
    info!("ingested {} days from {}", days.len(), src.display());

    if c.corpus.relevance_filter {
        let ref_path = &c.corpus.reference_headlines;
        let refs = load_reference_headlines(ref_path).with_context(|| format!("reading {}", ref_path.display()))?;
        if refs.is_empty() {
            bail!("{} holds no reference headlines", ref_path.display());
        }
        manifest.input(ref_path);
        let emb = providers::embedder(c)?;
        let texts: Vec<&str> = refs.iter().map(String::as_str).collect();
        let ref_vecs = emb.embed_batch(&texts)?;
        let mut kept_days = Vec::with_capacity(days.len());
        for mut d in days {
            let kept = relevance_filter(&d.headlines, &ref_vecs, &*emb, c.corpus.relevance_threshold)?;
            if kept.is_empty() {
                warn!("{}: no headline passed the relevance filter; day dropped", d.date);
                continue;
            }
            d.headlines = kept;
            kept_days.push(d);
        }
        days = kept_days;
    }

    let split = split_corpus(&days, c.corpus.fractions(), c.corpus.split_mode(c.seed))?;
    let train_texts: Vec<String> = split.train.iter().map(|d| d.joined_text(" ")).collect();
    let model = TfIdfModel::fit(train_texts.iter().map(String::as_str));
    let prune = |part: &[DailyNewsSet]| -> Result<Vec<DailyNewsSet>> {
        let mut out = Vec::with_capacity(part.len());
        for d in part {
            match tfidf_prune_day(d, &model, c.corpus.tfidf_threshold, c.corpus.max_words) {
                Ok(p) => out.push(p),
                Err(contrasim::Error::EmptyHeadlines) => {
                    warn!("{}: nothing left after tf-idf pruning; day dropped", d.date)
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(out)
    };
    let parts = [prune(&split.train)?, prune(&split.valid)?, prune(&split.test)?];

    let dir = run.stage_dir("ingest")?;
    for (name, part) in SPLITS.iter().zip(&parts) {
        let p = dir.join(format!("{name}.jsonl"));
        write_dataset(&p, part)?;
        manifest.output(p);
    }
    manifest.write(&dir, c)?;
    println!(
        "ingest: {} train / {} valid / {} test days -> {}",
        parts[0].len(),
        parts[1].len(),
        parts[2].len(),
        dir.display()
    );
    Ok(())
}

pub fn augment(run: &Run) -> Result<()> {
    let c = &run.config;
    let split_paths = run.split_paths()?;
    let split = run.load_split()?;
    let dir = run.stage_dir("augment")?;
    let out = dir.join("augmented.jsonl");

    // A partial file may only be resumed by the run that started it.
    let params = json!({
        "seed": c.seed,
        "augment": c.augment,
        "providers": c.providers,
        "train_sha256": sha256_file(&split_paths[0])?,
    });
    let params_path = dir.join("params.json");
    let same_run = fs::read_to_string(&params_path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .is_some_and(|v| v == params);
    if !same_run && out.exists() {
        info!("{}: parameters changed; starting over", out.display());
        fs::remove_file(&out)?;
    }
    write_json(&params_path, &params)?;

    let gp = providers::generation(c)?;
    let providers = Providers {
        generator: &*gp.generator,
        discriminator: &*gp.discriminator,
        bands: c.augment.bands,
        max_retries: c.augment.max_retries,
        max_concurrent: c.augment.max_concurrent,
    };
    let cfg = AugmentConfig {
        per_anchor: c.augment.per_anchor,
        distribution: c.augment.distribution(),
        seed: c.seed,
    };
    let n = build_augmented_dataset(&split.train, &cfg, &providers, &out)?;
    let sets = read_augmented_dataset(&out)?;
    let mean_s = sets.iter().map(|s| s.s).sum::<f64>() / sets.len().max(1) as f64;

    let mut manifest = ManifestBuilder::new(&run.out, "augment");
    manifest.input(&split_paths[0]).output(&out);
    manifest.write(&dir, c)?;
    println!("augment: {n} augmented sets (mean s {mean_s:.4}) -> {}", out.display());
    Ok(())
}

pub fn embed(run: &Run) -> Result<()> {
    let c = &run.config;
    let split_paths = run.split_paths()?;
    let aug_path = run.require("augment", "augmented.jsonl", "augment")?;
    let split = run.load_split()?;
    let augmented = read_augmented_dataset(&aug_path)?;

    let mut texts: BTreeSet<String> = split.all().iter().map(|d| d.joined_text(run.joiner())).collect();
    texts.extend(augmented.iter().map(|a| a.joined_text(run.joiner())));
    let texts: Vec<String> = texts.into_iter().collect();

    let emb = providers::embedder(c)?;
    let mut store = EmbeddingStore::new(emb.dim());
    for chunk in texts.chunks(256) {
        let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
        let vs = emb.embed_batch(&refs)?;
        if vs.len() != refs.len() {
            bail!(
                "embedding provider returned {} vectors for {} texts",
                vs.len(),
                refs.len()
            );
        }
        for (t, v) in refs.iter().zip(vs) {
            store.insert_text(t, v)?;
        }
    }
    let dir = run.stage_dir("embed")?;
    let out = dir.join("embeddings.jsonl");
    store.save(&out)?;

    let mut manifest = ManifestBuilder::new(&run.out, "embed");
    for p in &split_paths {
        manifest.input(p);
    }
    manifest.input(&aug_path).output(&out);
    if c.providers.kind == crate::config::ProviderKind::File {
        manifest.input(&c.providers.file.embeddings);
    }
    manifest.write(&dir, c)?;
    println!("embed: {} texts, dim {} -> {}", store.len(), store.dim(), out.display());
    Ok(())
}

pub fn train_proj(run: &Run) -> Result<()> {
    let c = &run.config;
    let split_paths = run.split_paths()?;
    let aug_path = run.require("augment", "augmented.jsonl", "augment")?;
    let store_path = run.store_path()?;
    let split = run.load_split()?;
    let augmented = read_augmented_dataset(&aug_path)?;
    let store = run.load_store()?;
    let examples = assemble_training_set(&split.train, &augmented, &store, run.joiner())?;
    let dir = run.stage_dir("proj")?;

    let cfg = &c.projection;
    let cfg_json = serde_json::to_value(cfg)?;
    let last = dir.join("last_epoch.json");
    let outcome = train(&examples, cfg, |epoch, net, opt| {
        let mut meta = cfg_json.clone();
        meta["epoch"] = json!(epoch);
        Checkpoint::new(
            CheckpointKind::Projection,
            net.params().clone(),
            Some(opt.clone()),
            cfg.seed,
            meta,
        )
        .save(&last)
    })?;

    let ckpt_path = dir.join("projection.json");
    Checkpoint::new(
        CheckpointKind::Projection,
        outcome.net.params().clone(),
        Some(outcome.optimizer.clone()),
        cfg.seed,
        cfg_json,
    )
    .save(&ckpt_path)?;

    let log_path = dir.join("train_log.csv");
    let mut w = std::io::BufWriter::new(fs::File::create(&log_path)?);
    writeln!(w, "epoch,step,lr,loss")?;
    for s in &outcome.steps {
        writeln!(w, "{},{},{},{}", s.epoch, s.step, s.lr, s.loss)?;
    }
    w.flush()?;

    let mut manifest = ManifestBuilder::new(&run.out, "train-proj");
    manifest
        .input(&split_paths[0])
        .input(&aug_path)
        .input(&store_path)
        .output(&ckpt_path)
        .output(&log_path);
    manifest.write(&dir, c)?;
    let first = outcome.epoch_loss.first().copied().unwrap_or(f64::NAN);
    let final_loss = outcome.epoch_loss.last().copied().unwrap_or(f64::NAN);
    println!(
        "train-proj: {} anchors, {} epochs, {} loss {first:.6} -> {final_loss:.6} -> {}",
        examples.len(),
        cfg.epochs,
        cfg_name(&cfg.loss),
        ckpt_path.display()
    );
    Ok(())
}

fn cfg_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn points_for(
    days: &[&DailyNewsSet],
    embedder: &dyn Embedder,
    joiner: &str,
    net: Option<&ProjectionNet>,
) -> Result<Vec<LabeledPoint>> {
    days.iter()
        .map(|d| {
            let e = embed_dns(embedder, *d, joiner)?;
            let vector = match net {
                Some(n) => n.project(&e)?,
                None => e,
            };
            Ok(LabeledPoint {
                key: d.date.to_string(),
                vector,
                label: d.effective_label().expect("labeled"),
            })
        })
        .collect()
}

pub fn audit_space_cmd(run: &Run) -> Result<()> {
    let c = &run.config;
    let ckpt_path = run.projection_path()?;
    let store_path = run.store_path()?;
    let (net, _) = run.load_projection()?;
    let split = run.load_split()?;
    let emb = run.resolved_embedder()?;
    let days = split.choose(c.metrics.split);
    let days = labeled(&days);
    let k = c.metrics.k;
    if days.len() <= k {
        bail!(
            "audit-space needs more than k = {k} labeled days, the {:?} split has {}",
            c.metrics.split,
            days.len()
        );
    }
    let proj = points_for(&days, &emb, run.joiner(), Some(&net))?;
    let enc = points_for(&days, &emb, run.joiner(), None)?;
    let reports: BTreeMap<&str, SpaceReport> = [
        ("projection", audit_space(&proj, k, c.metrics.baseline_repeats, c.seed)?),
        ("encoder", audit_space(&enc, k, c.metrics.baseline_repeats, c.seed)?),
    ]
    .into_iter()
    .collect();

    let dir = run.stage_dir("audit")?;
    let json_path = dir.join("report.json");
    write_json(&json_path, &reports)?;
    let mut text = String::new();
    for (name, r) in &reports {
        text.push_str(&format!("[{name} space]\n{}\n", r.to_table()));
    }
    let txt_path = dir.join("report.txt");
    fs::write(&txt_path, &text)?;

    let mut manifest = ManifestBuilder::new(&run.out, "audit-space");
    manifest
        .input(&ckpt_path)
        .input(&store_path)
        .output(&json_path)
        .output(&txt_path);
    manifest.write(&dir, c)?;
    print!("{text}");
    Ok(())
}

struct HeadData {
    features: BTreeMap<FeatureSource, Vec<LabeledFeatures>>,
}

fn head_data(
    days: &[DailyNewsSet],
    embedder: &dyn Embedder,
    joiner: &str,
    net: &ProjectionNet,
    balance_seed: Option<u64>,
) -> Result<HeadData> {
    let mut days = labeled(days);
    if let Some(seed) = balance_seed {
        let labels: Vec<MarketLabel> = days.iter().map(|d| d.effective_label().expect("labeled")).collect();
        let keep = balance_indices(&labels, seed);
        days = keep.into_iter().map(|i| days[i]).collect();
    }
    let mut features: BTreeMap<FeatureSource, Vec<LabeledFeatures>> = BTreeMap::new();
    for d in days {
        let e = embed_dns(embedder, d, joiner)?;
        let label = d.effective_label().expect("labeled");
        for src in FeatureSource::ALL {
            features.entry(src).or_default().push(LabeledFeatures {
                features: features_from_embedding(&e, src, Some(net))?,
                label,
            });
        }
    }
    Ok(HeadData { features })
}

fn head_file(src: FeatureSource) -> String {
    format!("{}.json", cfg_name(&src))
}

fn head_name(src: FeatureSource, loss: &str) -> String {
    match src {
        FeatureSource::Proj => format!("proj ({loss})"),
        FeatureSource::Enc => "enc".to_string(),
        FeatureSource::Both => format!("both ({loss})"),
    }
}

pub fn train_heads(run: &Run) -> Result<()> {
    let c = &run.config;
    let split_paths = run.split_paths()?;
    let ckpt_path = run.projection_path()?;
    let store_path = run.store_path()?;
    let (net, _) = run.load_projection()?;
    let split = run.load_split()?;
    let emb = run.resolved_embedder()?;
    let balance = c.heads.balance.then_some(c.seed);
    let train_data = head_data(&split.train, &emb, run.joiner(), &net, balance)?;
    let valid_data = head_data(&split.valid, &emb, run.joiner(), &net, balance)?;
    if train_data.features.is_empty() {
        bail!("no labeled training days");
    }

    let dir = run.stage_dir("heads")?;
    let mut manifest = ManifestBuilder::new(&run.out, "train-heads");
    manifest
        .input(&split_paths[0])
        .input(&split_paths[1])
        .input(&ckpt_path)
        .input(&store_path);
    let mut summary = BTreeMap::new();
    for src in FeatureSource::ALL {
        let tr = &train_data.features[&src];
        let va = valid_data.features.get(&src).map(Vec::as_slice).unwrap_or(&[]);
        let trained = train_classifier(tr, va, &c.heads.classifier)?;
        let mut meta = serde_json::to_value(&c.heads.classifier)?;
        meta["source"] = serde_json::to_value(src)?;
        let path = dir.join(head_file(src));
        Checkpoint::new(
            CheckpointKind::Classifier,
            trained.classifier.params.clone(),
            Some(trained.optimizer.clone()),
            c.seed,
            meta,
        )
        .save(&path)?;
        manifest.output(&path);
        summary.insert(
            head_file(src),
            json!({
                "n_train": tr.len(),
                "n_valid": va.len(),
                "epochs_run": trained.epochs_run,
                "best_epoch": trained.best_epoch,
                "final_train_loss": trained.epoch_train_loss.last(),
                "best_valid_loss": trained.epoch_valid_loss.get(trained.best_epoch.saturating_sub(1)),
            }),
        );
        println!(
            "train-heads: {} head, {} examples, {} epochs (best {})",
            cfg_name(&src),
            tr.len(),
            trained.epochs_run,
            trained.best_epoch
        );
    }
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    manifest.output(&summary_path);
    manifest.write(&dir, c)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    report: EvalReport,
    confusion: BTreeMap<String, [[usize; 3]; 3]>,
}

pub fn eval_heads(run: &Run) -> Result<()> {
    let c = &run.config;
    let head_paths: Vec<(FeatureSource, PathBuf)> = FeatureSource::ALL
        .iter()
        .map(|&s| Ok((s, run.require("heads", &head_file(s), "train-heads")?)))
        .collect::<Result<_>>()?;
    let split_paths = run.split_paths()?;
    let (net, proj_ckpt) = run.load_projection()?;
    let loss = proj_ckpt.config["loss"].as_str().unwrap_or("wscl").to_string();
    let split = run.load_split()?;
    let emb = run.resolved_embedder()?;
    let test = head_data(&split.test, &emb, run.joiner(), &net, c.heads.balance.then_some(c.seed))?;
    let Some(first) = test.features.values().next() else {
        bail!("no labeled test days");
    };
    let truth: Vec<MarketLabel> = first.iter().map(|f| f.label).collect();

    let mut report = EvalReport::default();
    let mut confusion = BTreeMap::new();
    let (acc, f1) = uniform_random_baseline(&truth, c.heads.baseline_repeats, c.seed)?;
    report.push("baseline", acc, f1, truth.len());
    let mut manifest = ManifestBuilder::new(&run.out, "eval-heads");
    manifest.input(&split_paths[2]);
    for (src, path) in &head_paths {
        let ckpt = Checkpoint::load(path, CheckpointKind::Classifier)?;
        let clf = Classifier { params: ckpt.params };
        let r: EvalResult = evaluate(&clf, &test.features[src])?;
        let name = head_name(*src, &loss);
        report.push(name.clone(), r.accuracy, r.macro_f1, truth.len());
        confusion.insert(name, r.confusion);
        manifest.input(path);
    }
    let dir = run.stage_dir("eval")?;
    let json_path = dir.join("report.json");
    write_json(
        &json_path,
        &EvalOutput {
            report: report.clone(),
            confusion,
        },
    )?;
    let txt_path = dir.join("report.txt");
    fs::write(&txt_path, report.to_table())?;
    manifest.output(&json_path).output(&txt_path);
    manifest.write(&dir, c)?;
    print!("{}", report.to_table());
    Ok(())
}

pub fn baseline(run: &Run) -> Result<()> {
    let c = &run.config;
    let split_paths = run.split_paths()?;
    let split = run.load_split()?;
    let days = labeled(&split.test);
    let mut labels: Vec<MarketLabel> = days.iter().map(|d| d.effective_label().expect("labeled")).collect();
    if c.heads.balance {
        labels = balance_indices(&labels, c.seed)
            .into_iter()
            .map(|i| labels[i])
            .collect();
    }
    if labels.is_empty() {
        bail!("no labeled test days");
    }
    let (acc, f1) = uniform_random_baseline(&labels, c.heads.baseline_repeats, c.seed)?;
    let mut counts = BTreeMap::new();
    for l in &labels {
        *counts.entry(format!("{l:?}")).or_insert(0usize) += 1;
    }
    let dir = run.stage_dir("baseline")?;
    let path = dir.join("report.json");
    write_json(
        &path,
        &json!({
            "accuracy": acc,
            "macro_f1": f1,
            "repeats": c.heads.baseline_repeats,
            "n_test": labels.len(),
            "class_counts": counts,
        }),
    )?;
    let mut manifest = ManifestBuilder::new(&run.out, "baseline");
    manifest.input(&split_paths[2]).output(&path);
    manifest.write(&dir, c)?;
    println!(
        "baseline: uniform random accuracy {acc:.4}, macro-F1 {f1:.4} over {} test days",
        labels.len()
    );
    Ok(())
}

pub enum Query {
    Date(NaiveDate),
    Text(Vec<String>),
}

pub fn query_similar(run: &Run, query: &Query) -> Result<()> {
    let c = &run.config;
    let space = c.retrieval.space;
    let split_paths = run.split_paths()?;
    let store_path = run.store_path()?;
    let mut manifest = ManifestBuilder::new(&run.out, "query-similar");
    for p in &split_paths {
        manifest.input(p);
    }
    manifest.input(&store_path);
    let net = match space {
        SearchSpace::Projection => {
            manifest.input(run.projection_path()?);
            Some(run.load_projection()?.0)
        }
        SearchSpace::Encoder => None,
    };
    let days = run.load_split()?.all();
    let emb = run.resolved_embedder()?;
    let index = build_index(&days, net.as_ref(), &emb, run.joiner(), space)?;
    let dir = run.stage_dir("query")?;
    let index_path = dir.join("index.jsonl");
    index.save(&index_path)?;

    let k = c.retrieval.k;
    let result: QueryResult = match query {
        Query::Date(date) => {
            let Some(day) = days.iter().find(|d| d.date == *date) else {
                return Err(usage(format!("no ingested day dated {date}")));
            };
            index.query_day(day, k, net.as_ref(), &emb, run.joiner())?
        }
        Query::Text(lines) => index.query_text(lines, k, net.as_ref(), &emb, run.joiner())?,
    };
    let result_path = dir.join("result.json");
    write_json(&result_path, &result)?;
    manifest.output(&index_path).output(&result_path);
    manifest.write(&dir, c)?;
    print!("{}", result.to_table());
    Ok(())
}

pub fn shift_analysis(run: &Run) -> Result<()> {
    let c = &run.config;
    let split_paths = run.split_paths()?;
    let aug_path = run.require("augment", "augmented.jsonl", "augment")?;
    let split = run.load_split()?;
    let augmented: Vec<AugmentedSet> = read_augmented_dataset(&aug_path)?;

    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let by_date: BTreeMap<NaiveDate, &DailyNewsSet> = split.train.iter().map(|d| (d.date, d)).collect();
    let mut pairs = Vec::new();
    for set in &augmented {
        let Some(base) = by_date.get(&set.base_date) else {
            warn!("augmented set for {} has no training day; skipped", set.base_date);
            continue;
        };
        let others: Vec<&str> = split
            .train
            .iter()
            .filter(|d| d.date != set.base_date)
            .flat_map(|d| d.headlines.iter().map(|h| h.text.as_str()))
            .collect();
        if others.is_empty() {
            bail!("shift analysis needs at least two training days");
        }
        for slot in set.slots.iter().filter(|s| s.disc_score.is_some()) {
            let Some(h) = base.headlines.iter().find(|h| Some(&h.id) == slot.source_id.as_ref()) else {
                continue;
            };
            pairs.push(ShiftPair {
                base: h.text.clone(),
                augmented: slot.text.clone(),
                action: slot.action,
                control: others[rng.random_range(0..others.len())].to_string(),
            });
        }
    }
    let emb = providers::embedder(c)?;
    let shifts = action_shift_analysis(&pairs, &*emb)?;

    let dir = run.stage_dir("shift")?;
    let path = dir.join("report.json");
    write_json(&path, &json!({ "pairs": pairs.len(), "shifts": shifts }))?;
    let mut manifest = ManifestBuilder::new(&run.out, "shift-analysis");
    manifest.input(&split_paths[0]).input(&aug_path).output(&path);
    manifest.write(&dir, c)?;
    println!("{:<8} {:>11} {:>7}", "action", "mean shift", "pairs");
    for s in &shifts {
        println!(
            "{:<8} {:>+11.4} {:>7}",
            format!("{:?}", s.action),
            s.mean_shift,
            s.count
        );
    }
    Ok(())
}
