//! Append-only JSONL stores for predictions, summaries, and sentiment
//! scores.
//!
//! Every row carries enough identity (resume key or scope/month/digest)
//! for reruns to skip work already done: the runner checks these stores
//! before issuing any gateway call, which is what makes a 75k-query grid
//! resumable.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::PredictionRecord;
use crate::news::{NewsScope, SentimentScore, Summary};
use crate::prompting::MethodKind;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub const PREDICTION_SCHEMA_VERSION: u32 = 1;

/// Terminal state of one prediction cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionStatus {
    /// Parsed and date-verified.
    Ok,
    /// Failed the target-date verification even after retry; excluded from
    /// evaluation.
    DateMismatch,
    /// Response unparsable even after retry; excluded from evaluation.
    Malformed,
}

/// One persisted prediction cell (schema-versioned JSONL row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredPrediction {
    pub schema_version: u32,
    /// Resume key: digest of (config sans output dir, company, date).
    pub key: String,
    pub config_digest: String,
    pub company_id: String,
    pub rating_date: NaiveDate,
    pub method: MethodKind,
    pub status: PredictionStatus,
    /// Gateway round trips spent on this cell (1 or 2 with the CoVE retry).
    pub attempts: u32,
    pub input_digest: String,
    /// Latest data date across all prompt inputs; must precede rating_date.
    pub max_input_date: Option<NaiveDate>,
    /// (company, sector) sentiment scores fed into the prompt, when the
    /// method takes them — kept for sentiment/rating correlations.
    pub input_sentiment: Option<(i8, i8)>,
    pub record: Option<PredictionRecord>,
    /// Mismatched horizons when status is `DateMismatch`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cove_mismatch: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The prediction store: one JSONL row per attempted cell, append-only,
/// idempotent by resume key.
pub struct PredictionStore {
    path: PathBuf,
    rows: Vec<StoredPrediction>,
    keys: BTreeSet<String>,
    file: File,
}

impl PredictionStore {
    /// Opens (or creates) the store, loading existing rows for resume.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let rows = if path.exists() {
            read_jsonl(path)?
        } else {
            Vec::new()
        };
        let keys = rows
            .iter()
            .map(|r: &StoredPrediction| r.key.clone())
            .collect();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            rows,
            keys,
            file,
        })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.keys.contains(key)
    }

    pub fn rows(&self) -> &[StoredPrediction] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn append(&mut self, row: StoredPrediction) -> Result<(), StoreError> {
        let line = serde_json::to_string(&row).expect("row serializes");
        writeln!(self.file, "{line}").map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))?;
        self.keys.insert(row.key.clone());
        self.rows.push(row);
        Ok(())
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| StoreError::MalformedRow {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Keyed JSONL store for per-(scope, month) artifacts (summaries and
/// sentiment scores).
pub struct ScopedStore<T> {
    path: PathBuf,
    rows: BTreeMap<(String, String), T>,
    file: File,
}

pub trait ScopedRow {
    fn store_key(&self) -> (String, String);
    /// Digest of the inputs this row was derived from.
    fn source_digest(&self) -> &str;
}

impl ScopedRow for Summary {
    fn store_key(&self) -> (String, String) {
        (self.scope.to_string(), self.month.to_string())
    }
    fn source_digest(&self) -> &str {
        &self.source_digest
    }
}

impl ScopedRow for SentimentScore {
    fn store_key(&self) -> (String, String) {
        (self.scope.to_string(), self.month.to_string())
    }
    fn source_digest(&self) -> &str {
        &self.source_digest
    }
}

impl<T: ScopedRow + Serialize + serde::de::DeserializeOwned + Clone> ScopedStore<T> {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let mut rows = BTreeMap::new();
        if path.exists() {
            for row in read_jsonl::<T>(path)? {
                rows.insert(row.store_key(), row);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            rows,
            file,
        })
    }

    pub fn get(&self, scope: &NewsScope, month: &str) -> Option<&T> {
        self.rows.get(&(scope.to_string(), month.to_string()))
    }

    /// True when a row for the key exists with the same source digest —
    /// i.e. the work is already done for these exact inputs.
    pub fn is_current(&self, scope: &NewsScope, month: &str, source_digest: &str) -> bool {
        self.get(scope, month)
            .is_some_and(|row| row.source_digest() == source_digest)
    }

    pub fn append(&mut self, row: T) -> Result<(), StoreError> {
        let line = serde_json::to_string(&row).expect("row serializes");
        writeln!(self.file, "{line}").map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))?;
        self.rows.insert(row.store_key(), row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.rows.values()
    }
}

pub type SummaryStore = ScopedStore<Summary>;
pub type SentimentStore = ScopedStore<SentimentScore>;
