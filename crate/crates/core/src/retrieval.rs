//! Exact similar-day search over projected day embeddings.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::DailyNewsSet;
use crate::embedding::{embed_dns, Embedder, EmbeddingStore, HeadlineSet, UnitVector};
use crate::error::{Error, Result};
use crate::projnet::ProjectionNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchSpace {
    #[default]
    Projection,
    Encoder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub vector: UnitVector,
    pub preview: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    pub space: SearchSpace,
    pub entries: BTreeMap<NaiveDate, IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarDayHit {
    pub date: NaiveDate,
    pub score: f64,
    pub preview: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<SimilarDayHit>,
    /// Set when fewer than `k` candidates were available.
    pub truncated: bool,
}

impl QueryResult {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:>4}  {:<10}  {:>9}  {}\n", "rank", "date", "cosine", "first headline");
        for (i, h) in self.hits.iter().enumerate() {
            s.push_str(&format!("{:>4}  {}  {:>9.6}  {}\n", i + 1, h.date, h.score, h.preview));
        }
        if self.truncated {
            s.push_str("(fewer candidates than requested)\n");
        }
        s
    }
}

fn first_preview(day: &DailyNewsSet) -> String {
    day.headlines.first().map(|h| h.text.clone()).unwrap_or_default()
}

/// Map an encoder embedding into the search space.
pub fn to_space(e: UnitVector, space: SearchSpace, net: Option<&ProjectionNet>) -> Result<UnitVector> {
    match space {
        SearchSpace::Encoder => Ok(e),
        SearchSpace::Projection => net
            .ok_or_else(|| Error::invalid("projection parameters required for projection-space search"))?
            .project(&e),
    }
}

/// Embed and project every day. Days whose embedding cannot be resolved are
/// skipped with a warning.
pub fn build_index(
    days: &[DailyNewsSet],
    net: Option<&ProjectionNet>,
    embedder: &dyn Embedder,
    joiner: &str,
    space: SearchSpace,
) -> Result<RetrievalIndex> {
    if days.is_empty() {
        return Err(Error::invalid("cannot build an index from zero days"));
    }
    let mut entries = BTreeMap::new();
    for day in days {
        let e = match embed_dns(embedder, day, joiner) {
            Ok(e) => e,
            Err(err @ (Error::MissingEmbedding(_) | Error::Provider(_))) => {
                warn!("{}: skipped ({err})", day.date);
                continue;
            }
            Err(err) => return Err(err),
        };
        entries.insert(
            day.date,
            IndexEntry {
                vector: to_space(e, space, net)?,
                preview: first_preview(day),
            },
        );
    }
    if entries.is_empty() {
        return Err(Error::invalid("no day could be embedded"));
    }
    Ok(RetrievalIndex { space, entries })
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Vectors as an embedding store keyed by ISO date.
    pub fn to_store(&self) -> Result<EmbeddingStore> {
        let dim = self.entries.values().next().map_or(0, |e| e.vector.dim());
        let mut store = EmbeddingStore::new(dim);
        for (date, e) in &self.entries {
            store.insert(date.to_string(), e.vector.clone())?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_store()?.save(path)
    }

    /// Load vectors saved by [`RetrievalIndex::save`]; previews come from
    /// `days` where available.
    pub fn load(path: &Path, space: SearchSpace, days: &[DailyNewsSet]) -> Result<Self> {
        let store = EmbeddingStore::load(path)?;
        let previews: BTreeMap<NaiveDate, String> = days.iter().map(|d| (d.date, first_preview(d))).collect();
        let mut entries = BTreeMap::new();
        for (key, v) in store.iter() {
            let date: NaiveDate = key
                .parse()
                .map_err(|_| Error::invalid(format!("{}: index key {key:?} is not a date", path.display())))?;
            entries.insert(
                date,
                IndexEntry {
                    vector: v.clone(),
                    preview: previews.get(&date).cloned().unwrap_or_default(),
                },
            );
        }
        if entries.is_empty() {
            return Err(Error::invalid(format!("{}: empty index", path.display())));
        }
        Ok(Self { space, entries })
    }

    /// Top-k days by cosine, ties by ascending date, `exclude` never returned.
    pub fn query(&self, vector: &UnitVector, k: usize, exclude: Option<NaiveDate>) -> Result<QueryResult> {
        if k == 0 {
            return Err(Error::invalid("k must be ≥ 1"));
        }
        let mut hits: Vec<SimilarDayHit> = Vec::with_capacity(self.entries.len());
        for (date, e) in &self.entries {
            if Some(*date) == exclude {
                continue;
            }
            if e.vector.dim() != vector.dim() {
                return Err(Error::DimensionMismatch {
                    expected: e.vector.dim(),
                    got: vector.dim(),
                });
            }
            hits.push(SimilarDayHit {
                date: *date,
                score: e.vector.cosine(vector),
                preview: e.preview.clone(),
            });
        }
        // Stable sort keeps ascending date order among equal scores.
        hits.sort_by(|a, b| b.score.total_cmp(&a.score));
        let truncated = hits.len() < k;
        hits.truncate(k);
        Ok(QueryResult { hits, truncated })
    }

    /// Query with a day of headlines; its date is excluded from the results.
    pub fn query_day(
        &self,
        day: &DailyNewsSet,
        k: usize,
        net: Option<&ProjectionNet>,
        embedder: &dyn Embedder,
        joiner: &str,
    ) -> Result<QueryResult> {
        let v = to_space(embed_dns(embedder, day, joiner)?, self.space, net)?;
        self.query(&v, k, Some(day.date))
    }

    /// Query with raw headlines that belong to no date.
    pub fn query_text(
        &self,
        headlines: &[String],
        k: usize,
        net: Option<&ProjectionNet>,
        embedder: &dyn Embedder,
        joiner: &str,
    ) -> Result<QueryResult> {
        struct Raw<'a>(&'a [String]);
        impl HeadlineSet for Raw<'_> {
            fn headline_texts(&self) -> Vec<&str> {
                self.0.iter().map(String::as_str).collect()
            }
        }
        let v = to_space(embed_dns(embedder, &Raw(headlines), joiner)?, self.space, net)?;
        self.query(&v, k, None)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::corpus::Source;
    use crate::embedding::HashEmbedder;

    fn days(n: usize) -> Vec<DailyNewsSet> {
        (0..n)
            .map(|i| {
                let date = NaiveDate::from_ymd_opt(2021, 3, 1 + i as u32).unwrap();
                DailyNewsSet::from_texts(
                    date,
                    &[format!("headline {i} alpha"), format!("second {i}")],
                    Source::Wsj,
                    None,
                    None,
                )
                .unwrap()
            })
            .collect()
    }

    fn net() -> ProjectionNet {
        ProjectionNet::init(16, 8, 4, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn builds_one_entry_per_day() {
        let e = HashEmbedder::new(0, 16).unwrap();
        let idx = build_index(&days(5), Some(&net()), &e, "\n", SearchSpace::Projection).unwrap();
        assert_eq!(idx.len(), 5);
        assert!(build_index(&[], Some(&net()), &e, "\n", SearchSpace::Projection).is_err());
    }

    #[test]
    fn rebuild_gives_identical_file() {
        let dir = tempfile::tempdir().unwrap();
        let e = HashEmbedder::new(0, 16).unwrap();
        let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        build_index(&days(5), Some(&net()), &e, "\n", SearchSpace::Projection)
            .unwrap()
            .save(&a)
            .unwrap();
        build_index(&days(5), Some(&net()), &e, "\n", SearchSpace::Projection)
            .unwrap()
            .save(&b)
            .unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let loaded = RetrievalIndex::load(&a, SearchSpace::Projection, &days(5)).unwrap();
        assert_eq!(
            loaded,
            build_index(&days(5), Some(&net()), &e, "\n", SearchSpace::Projection).unwrap()
        );
    }

    #[test]
    fn own_text_ranks_first() {
        let e = HashEmbedder::new(0, 16).unwrap();
        let n = net();
        let ds = days(6);
        let idx = build_index(&ds, Some(&n), &e, "\n", SearchSpace::Projection).unwrap();
        let texts: Vec<String> = ds[3].headlines.iter().map(|h| h.text.clone()).collect();
        let r = idx.query_text(&texts, 6, Some(&n), &e, "\n").unwrap();
        assert_eq!(r.hits[0].date, ds[3].date);
        assert!((r.hits[0].score - 1.0).abs() < 1e-9);
        let mut dates: Vec<NaiveDate> = r.hits.iter().map(|h| h.date).collect();
        dates.sort();
        assert_eq!(dates, ds.iter().map(|d| d.date).collect::<Vec<_>>());
        assert!(!r.truncated);
    }

    #[test]
    fn query_day_excludes_itself_and_flags_short_lists() {
        let e = HashEmbedder::new(0, 16).unwrap();
        let ds = days(4);
        let idx = build_index(&ds, None, &e, "\n", SearchSpace::Encoder).unwrap();
        let r = idx.query_day(&ds[0], 10, None, &e, "\n").unwrap();
        assert_eq!(r.hits.len(), 3);
        assert!(r.truncated);
        assert!(r.hits.iter().all(|h| h.date != ds[0].date));
        assert!(r.hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn ties_break_by_date() {
        let v = UnitVector::from_stored(vec![1.0, 0.0]).unwrap();
        let entries = (1..=3)
            .map(|d| {
                (
                    NaiveDate::from_ymd_opt(2020, 1, d).unwrap(),
                    IndexEntry {
                        vector: v.clone(),
                        preview: String::new(),
                    },
                )
            })
            .collect();
        let idx = RetrievalIndex {
            space: SearchSpace::Encoder,
            entries,
        };
        let r = idx.query(&v, 3, None).unwrap();
        let days: Vec<u32> = r.hits.iter().map(|h| chrono::Datelike::day(&h.date)).collect();
        assert_eq!(days, vec![1, 2, 3]);
    }
}
