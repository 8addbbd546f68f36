//! Augmented dataset file: one checksummed JSON record per line.
//!
//! Each record is generated from its own RNG, derived from the run seed, the
//! anchor date and the record's index under that anchor. This lets an
//! interrupted run resume from the last intact record and still produce the
//! same file as an uninterrupted run.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{transform, ActionDistribution, AugmentedSet, AugmentedSlot, Providers};
use crate::corpus::DailyNewsSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub per_anchor: usize,
    pub distribution: ActionDistribution,
    pub seed: u64,
}

/// On-disk record: an augmented set plus a checksum over its other fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentedRecord {
    pub base_date: NaiveDate,
    pub slots: Vec<AugmentedSlot>,
    pub s: f64,
    pub checksum: String,
}

#[derive(Serialize)]
struct Unsigned<'a> {
    base_date: &'a NaiveDate,
    slots: &'a [AugmentedSlot],
    s: f64,
}

/// Hex SHA-256 of the record's canonical JSON without the checksum field.
pub fn record_checksum(set: &AugmentedSet) -> String {
    let body = serde_json::to_vec(&Unsigned {
        base_date: &set.base_date,
        slots: &set.slots,
        s: set.s,
    })
    .expect("record serializes");
    hex::encode(Sha256::digest(&body))
}

impl AugmentedRecord {
    pub fn seal(set: AugmentedSet) -> Self {
        let checksum = record_checksum(&set);
        Self {
            base_date: set.base_date,
            slots: set.slots,
            s: set.s,
            checksum,
        }
    }

    pub fn into_set(self) -> AugmentedSet {
        AugmentedSet {
            base_date: self.base_date,
            slots: self.slots,
            s: self.s,
        }
    }

    fn verify(&self) -> std::result::Result<(), String> {
        let set = AugmentedSet {
            base_date: self.base_date,
            slots: self.slots.clone(),
            s: self.s,
        };
        if record_checksum(&set) != self.checksum {
            return Err("checksum mismatch".into());
        }
        let s = set.recompute_score().map_err(|e| e.to_string())?;
        if s != self.s {
            return Err(format!("stored score {} but actions give {s}", self.s));
        }
        Ok(())
    }
}

fn record_rng(seed: u64, date: NaiveDate, index: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(date.to_string().as_bytes());
    h.update((index as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Read and verify every record. Fails on the first bad line.
pub fn read_augmented_dataset(path: &Path) -> Result<Vec<AugmentedSet>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AugmentedRecord = serde_json::from_str(&line).map_err(|e| Error::Corrupt {
            line: idx + 1,
            message: e.to_string(),
        })?;
        rec.verify()
            .map_err(|message| Error::Corrupt { line: idx + 1, message })?;
        out.push(rec.into_set());
    }
    Ok(out)
}

/// Count the intact records at the head of an existing file and truncate
/// whatever follows them. A broken record followed by intact ones means the
/// file was not produced by an interrupted write, which is an error.
fn intact_prefix(path: &Path, expected: &[NaiveDate]) -> Result<usize> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e.into()),
    };
    let mut good = 0usize;
    let mut good_bytes = 0usize;
    let mut broken_at: Option<usize> = None;
    let mut offset = 0usize;
    for (idx, raw) in text.split_inclusive('\n').enumerate() {
        offset += raw.len();
        let complete = raw.ends_with('\n');
        let parsed = serde_json::from_str::<AugmentedRecord>(raw.trim_end())
            .map_err(|e| e.to_string())
            .and_then(|r| r.verify().map(|_| r));
        match (parsed, broken_at) {
            (Ok(rec), None) if complete => {
                if expected.get(good) != Some(&rec.base_date) {
                    return Err(Error::Corrupt {
                        line: idx + 1,
                        message: "record does not match this configuration; use a fresh output file".into(),
                    });
                }
                good += 1;
                good_bytes = offset;
            }
            (Ok(_), Some(line)) => {
                return Err(Error::Corrupt {
                    line,
                    message: "invalid record followed by valid ones".into(),
                });
            }
            (Ok(_), None) | (Err(_), None) => broken_at = Some(idx + 1),
            (Err(_), Some(_)) => {}
        }
    }
    if good_bytes < text.len() {
        warn!(
            "{}: discarding {} trailing bytes of an incomplete record",
            path.display(),
            text.len() - good_bytes
        );
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(good_bytes as u64)?;
    }
    Ok(good)
}

/// Write `per_anchor` augmented sets for every day of `train`, anchor by
/// anchor, to `path`. Random replacements are drawn from `train`. An existing
/// file is resumed after its last intact record. Returns the total number of
/// records in the file.
pub fn build_augmented_dataset(
    train: &[DailyNewsSet],
    config: &AugmentConfig,
    providers: &Providers<'_>,
    path: &Path,
) -> Result<usize> {
    if config.per_anchor == 0 {
        return Err(Error::invalid("per-anchor augmentation count must be at least 1"));
    }
    if train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let expected: Vec<NaiveDate> = train
        .iter()
        .flat_map(|d| std::iter::repeat(d.date).take(config.per_anchor))
        .collect();
    let done = intact_prefix(path, &expected)?;
    if done > 0 {
        info!("{}: resuming after {done} intact records", path.display());
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    for k in done..expected.len() {
        let anchor = &train[k / config.per_anchor];
        let mut rng = record_rng(config.seed, anchor.date, k % config.per_anchor);
        let set = transform(anchor, train, &config.distribution, providers, &mut rng)?;
        serde_json::to_writer(&mut w, &AugmentedRecord::seal(set))?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    Ok(expected.len())
}
