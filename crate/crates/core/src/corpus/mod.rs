//! Daily news sets: ingestion, market labels, filtering and splitting.

mod label;
mod relevance;
mod split;
mod tfidf;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::embedding::HeadlineSet;
use crate::error::{Error, Result};

pub use label::{derive_label, label_from_pct, label_from_stars, MarketLabel, StarBreakpoints, NEUTRAL_BAND_PCT};
pub use relevance::{load_reference_headlines, relevance_filter, DEFAULT_RELEVANCE_THRESHOLD};
pub use split::{split_corpus, CorpusSplit, SplitFractions, SplitMode};
pub use tfidf::{tfidf_prune, tfidf_prune_day, word_count, TfIdfModel, DEFAULT_MAX_WORDS, DEFAULT_TFIDF_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Wsj,
    Tweet,
    Review,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Headline {
    pub id: String,
    pub date: NaiveDate,
    pub text: String,
    pub source: Source,
}

impl Headline {
    pub fn new(id: impl Into<String>, date: NaiveDate, text: impl Into<String>, source: Source) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::invalid("headline text is empty"));
        }
        Ok(Self {
            id: id.into(),
            date,
            text,
            source,
        })
    }
}

/// All headlines of one calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyNewsSet {
    pub date: NaiveDate,
    pub headlines: Vec<Headline>,
    pub label: Option<MarketLabel>,
    pub pct_change: Option<f64>,
}

/// Stable id of the `idx`-th headline of a day.
pub fn headline_id(date: NaiveDate, idx: usize) -> String {
    format!("{date}#{idx}")
}

impl DailyNewsSet {
    /// Build a day from raw texts; headline ids are `<date>#<index>`.
    pub fn from_texts<S: AsRef<str>>(
        date: NaiveDate,
        texts: &[S],
        source: Source,
        label: Option<MarketLabel>,
        pct_change: Option<f64>,
    ) -> Result<Self> {
        let headlines = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Headline::new(headline_id(date, i), date, t.as_ref(), source))
            .collect::<Result<Vec<_>>>()?;
        let dns = Self {
            date,
            headlines,
            label,
            pct_change,
        };
        dns.validate()?;
        Ok(dns)
    }

    pub fn validate(&self) -> Result<()> {
        if self.headlines.is_empty() {
            return Err(Error::EmptyHeadlines);
        }
        for h in &self.headlines {
            if h.date != self.date {
                return Err(Error::invalid(format!(
                    "headline {} dated {} inside day {}",
                    h.id, h.date, self.date
                )));
            }
            if h.text.trim().is_empty() {
                return Err(Error::invalid(format!("headline {} is empty", h.id)));
            }
        }
        if let (Some(label), Some(pct)) = (self.label, self.pct_change) {
            if !pct.is_finite() {
                return Err(Error::NonFinite("pct_change"));
            }
            if label_from_pct(pct) != label {
                return Err(Error::invalid(format!(
                    "label {label:?} inconsistent with pct_change {pct}"
                )));
            }
        }
        Ok(())
    }

    /// Label from the file, else derived from `pct_change`.
    pub fn effective_label(&self) -> Option<MarketLabel> {
        self.label.or_else(|| self.pct_change.map(label_from_pct))
    }

    pub fn len(&self) -> usize {
        self.headlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headlines.is_empty()
    }
}

impl HeadlineSet for DailyNewsSet {
    fn headline_texts(&self) -> Vec<&str> {
        self.headlines.iter().map(|h| h.text.as_str()).collect()
    }
}

/// One line of the dataset JSONL format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub date: NaiveDate,
    pub headlines: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<MarketLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pct_change: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
}

impl DatasetRecord {
    pub fn into_dns(self) -> Result<DailyNewsSet> {
        if self.headlines.is_empty() {
            return Err(Error::EmptyHeadlines);
        }
        DailyNewsSet::from_texts(
            self.date,
            &self.headlines,
            self.source.unwrap_or_default(),
            self.label,
            self.pct_change,
        )
    }
}

impl From<&DailyNewsSet> for DatasetRecord {
    fn from(dns: &DailyNewsSet) -> Self {
        let source = dns.headlines.first().map(|h| h.source);
        Self {
            date: dns.date,
            headlines: dns.headlines.iter().map(|h| h.text.clone()).collect(),
            label: dns.label,
            pct_change: dns.pct_change,
            source,
        }
    }
}

/// Read a dataset JSONL file, one day per line, in file order.
pub fn ingest_dataset(path: &Path) -> Result<Vec<DailyNewsSet>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let date = rec.date;
        let dns = rec.into_dns().map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(date) {
            return Err(parse_err(Error::DuplicateDate(date).to_string()));
        }
        out.push(dns);
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, days: &[DailyNewsSet]) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    for dns in days {
        serde_json::to_writer(&mut w, &DatasetRecord::from(dns))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn single_line() {
        let f = write(r#"{"date":"2020-01-02","headlines":["A","B"],"label":"Rise","source":"wsj"}"#);
        let days = ingest_dataset(f.path()).unwrap();
        assert_eq!(days.len(), 1);
        assert_eq!(days[0].headlines[1].id, "2020-01-02#1");
        assert_eq!(days[0].headlines[0].source, Source::Wsj);
        assert_eq!(days[0].label, Some(MarketLabel::Rise));
    }

    #[test]
    fn empty_file() {
        let f = write("");
        assert!(ingest_dataset(f.path()).unwrap().is_empty());
    }

    #[test]
    fn empty_headlines_rejected_with_line() {
        let f = write("{\"date\":\"2020-01-02\",\"headlines\":[\"x\"]}\n{\"date\":\"2020-01-03\",\"headlines\":[]}\n");
        let err = ingest_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
        assert!(err.contains("empty headline list"), "{err}");
    }

    #[test]
    fn duplicate_date_rejected() {
        let f =
            write("{\"date\":\"2020-01-02\",\"headlines\":[\"x\"]}\n{\"date\":\"2020-01-02\",\"headlines\":[\"y\"]}\n");
        let err = ingest_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains("duplicate date"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write("{\"date\":\"2020-01-02\",\"headlines\":[\"x\"]}\n\n{not json\n");
        let err = ingest_dataset(f.path()).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");
        let f = write("{\"date\":\"2020-02-30\",\"headlines\":[\"x\"]}\n");
        assert!(ingest_dataset(f.path()).is_err());
    }

    #[test]
    fn whitespace_headline_rejected() {
        let f = write("{\"date\":\"2020-01-02\",\"headlines\":[\"  \"]}\n");
        assert!(ingest_dataset(f.path()).is_err());
    }

    #[test]
    fn inconsistent_label_rejected() {
        let f = write("{\"date\":\"2020-01-02\",\"headlines\":[\"x\"],\"label\":\"Fall\",\"pct_change\":1.0}\n");
        assert!(ingest_dataset(f.path()).is_err());
        let f = write("{\"date\":\"2020-01-02\",\"headlines\":[\"x\"],\"pct_change\":-0.7}\n");
        let days = ingest_dataset(f.path()).unwrap();
        assert_eq!(days[0].effective_label(), Some(MarketLabel::Fall));
    }

    #[test]
    fn write_then_ingest() {
        let d = NaiveDate::from_ymd_opt(2021, 5, 4).unwrap();
        let days = vec![DailyNewsSet::from_texts(d, &["one", "two"], Source::Tweet, None, Some(0.1)).unwrap()];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dataset(f.path(), &days).unwrap();
        assert_eq!(ingest_dataset(f.path()).unwrap(), days);
    }
}
