//! The five-level ordinal rating scale and analyst-rating ingestion.
//!
//! Ratings live on {-2, -1, 0, 1, 2} where -2 = Strong Sell and
//! 2 = Strong Buy. Vendor feeds use a wider vocabulary ("Outperform",
//! "Equal-Weight", ...), so term normalization goes through a
//! config-extensible synonym table; unknown terms are quarantined with the
//! original text rather than silently defaulted.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RatingsError {
    #[error("unknown rating term `{0}`")]
    UnknownTerm(String),
    #[error("rating value {0} outside [-2, 2]")]
    OutOfRange(i64),
    #[error("unknown rating action `{0}`")]
    UnknownAction(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// An ordinal stock rating in {-2, -1, 0, 1, 2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct OrdinalRating(i8);

impl OrdinalRating {
    pub const STRONG_SELL: Self = Self(-2);
    pub const MODERATE_SELL: Self = Self(-1);
    pub const HOLD: Self = Self(0);
    pub const MODERATE_BUY: Self = Self(1);
    pub const STRONG_BUY: Self = Self(2);

    pub const ALL: [Self; 5] = [
        Self::STRONG_SELL,
        Self::MODERATE_SELL,
        Self::HOLD,
        Self::MODERATE_BUY,
        Self::STRONG_BUY,
    ];

    pub fn new(value: i8) -> Result<Self, RatingsError> {
        if (-2..=2).contains(&value) {
            Ok(Self(value))
        } else {
            Err(RatingsError::OutOfRange(value as i64))
        }
    }

    pub fn value(self) -> i8 {
        self.0
    }

    /// Canonical term for the level ("Strong Sell" ... "Strong Buy").
    pub fn canonical_term(self) -> &'static str {
        match self.0 {
            -2 => "Strong Sell",
            -1 => "Moderate Sell",
            0 => "Hold",
            1 => "Moderate Buy",
            _ => "Strong Buy",
        }
    }

    /// |self - other|, the ordinal distance used by MAE.
    pub fn distance(self, other: Self) -> u8 {
        (self.0 - other.0).unsigned_abs()
    }
}

impl fmt::Display for OrdinalRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical_term())
    }
}

impl TryFrom<i64> for OrdinalRating {
    type Error = RatingsError;
    fn try_from(v: i64) -> Result<Self, Self::Error> {
        if (-2..=2).contains(&v) {
            Ok(Self(v as i8))
        } else {
            Err(RatingsError::OutOfRange(v))
        }
    }
}

impl From<OrdinalRating> for i64 {
    fn from(r: OrdinalRating) -> i64 {
        r.0 as i64
    }
}

/// Synonym table mapping vendor rating terms onto the ordinal scale.
///
/// Lookups are case-insensitive and ignore surrounding/internal whitespace
/// runs and hyphen/underscore variants, so "Equal Weight", "equal-weight"
/// and "EQUAL_WEIGHT" all resolve identically.
#[derive(Debug, Clone)]
pub struct RatingVocabulary {
    terms: BTreeMap<String, OrdinalRating>,
}

impl Default for RatingVocabulary {
    fn default() -> Self {
        let mut vocab = Self {
            terms: BTreeMap::new(),
        };
        let defaults: [(&str, i8); 16] = [
            ("strong buy", 2),
            ("buy", 2),
            ("moderate buy", 1),
            ("outperform", 1),
            ("overweight", 1),
            ("accumulate", 1),
            ("hold", 0),
            ("neutral", 0),
            ("equal-weight", 0),
            ("market perform", 0),
            ("moderate sell", -1),
            ("underperform", -1),
            ("underweight", -1),
            ("reduce", -1),
            ("strong sell", -2),
            ("sell", -2),
        ];
        for (term, value) in defaults {
            vocab.insert(term, OrdinalRating(value));
        }
        vocab
    }
}

impl RatingVocabulary {
    /// Adds (or overrides) a synonym.
    pub fn insert(&mut self, term: &str, rating: OrdinalRating) {
        self.terms.insert(canonicalize_term(term), rating);
    }

    /// Extends the table from config entries (term -> ordinal value).
    pub fn extend<'a, I: IntoIterator<Item = (&'a str, i8)>>(
        &mut self,
        entries: I,
    ) -> Result<(), RatingsError> {
        for (term, value) in entries {
            self.insert(term, OrdinalRating::new(value)?);
        }
        Ok(())
    }

    /// Normalizes a vendor term onto the ordinal scale.
    pub fn normalize(&self, term: &str) -> Result<OrdinalRating, RatingsError> {
        self.terms
            .get(&canonicalize_term(term))
            .copied()
            .ok_or_else(|| RatingsError::UnknownTerm(term.trim().to_string()))
    }

    /// All known terms, longest first — used by free-text response parsing
    /// so "strong buy" wins over "buy".
    pub fn terms_longest_first(&self) -> Vec<(&str, OrdinalRating)> {
        let mut terms: Vec<_> = self.terms.iter().map(|(t, r)| (t.as_str(), *r)).collect();
        terms.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        terms
    }

    /// Human-readable scale description for system prompts: each level with
    /// its synonyms.
    pub fn scale_description(&self) -> String {
        let mut lines = Vec::new();
        for rating in OrdinalRating::ALL {
            let mut synonyms: Vec<&str> = self
                .terms
                .iter()
                .filter(|(_, r)| **r == rating)
                .map(|(t, _)| t.as_str())
                .collect();
            synonyms.sort_unstable();
            lines.push(format!(
                "{:>2} = {} (accepted terms: {})",
                rating.value(),
                rating.canonical_term(),
                synonyms.join(", ")
            ));
        }
        lines.join("\n")
    }
}

fn canonicalize_term(term: &str) -> String {
    term.trim()
        .to_lowercase()
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// What the issuing firm did with its coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingAction {
    Maintain,
    Reiterate,
    Upgrade,
    Downgrade,
    Initiate,
}

impl RatingAction {
    pub const ALL: [Self; 5] = [
        Self::Maintain,
        Self::Reiterate,
        Self::Upgrade,
        Self::Downgrade,
        Self::Initiate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Maintain => "maintain",
            Self::Reiterate => "reiterate",
            Self::Upgrade => "upgrade",
            Self::Downgrade => "downgrade",
            Self::Initiate => "initiate",
        }
    }
}

impl FromStr for RatingAction {
    type Err = RatingsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "maintain" | "maintains" | "maintained" => Ok(Self::Maintain),
            "reiterate" | "reiterates" | "reiterated" => Ok(Self::Reiterate),
            "upgrade" | "upgrades" | "upgraded" => Ok(Self::Upgrade),
            "downgrade" | "downgrades" | "downgraded" => Ok(Self::Downgrade),
            "initiate" | "initiates" | "initiated" => Ok(Self::Initiate),
            other => Err(RatingsError::UnknownAction(other.to_string())),
        }
    }
}

/// A single analyst rating as published by a firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalystRatingEvent {
    pub firm: String,
    pub company_id: String,
    pub date: NaiveDate,
    pub action: RatingAction,
    /// Original vendor term, kept verbatim for audit.
    pub term: String,
    pub rating: OrdinalRating,
}

/// A raw input row that could not become an event, with the reason.
#[derive(Debug, Clone, Serialize)]
pub struct FailedRow {
    pub line: usize,
    pub raw: String,
    pub reason: String,
}

/// Per-action / per-firm shares of the accepted events, in the shape of the
/// skew statistics reported for real feeds (e.g. the maintain share).
#[derive(Debug, Clone, Serialize)]
pub struct ActionDistribution {
    pub total: usize,
    pub by_action: BTreeMap<String, usize>,
    pub action_share: BTreeMap<String, f64>,
    pub by_firm: BTreeMap<String, usize>,
    pub firm_share: BTreeMap<String, f64>,
}

impl ActionDistribution {
    fn from_events(events: &[AnalystRatingEvent]) -> Self {
        let mut by_action: BTreeMap<String, usize> = BTreeMap::new();
        let mut by_firm: BTreeMap<String, usize> = BTreeMap::new();
        for action in RatingAction::ALL {
            by_action.insert(action.as_str().to_string(), 0);
        }
        for event in events {
            *by_action
                .entry(event.action.as_str().to_string())
                .or_default() += 1;
            *by_firm.entry(event.firm.clone()).or_default() += 1;
        }
        let total = events.len();
        let share = |count: usize| {
            if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            }
        };
        let action_share = by_action
            .iter()
            .map(|(k, v)| (k.clone(), share(*v)))
            .collect();
        let firm_share = by_firm
            .iter()
            .map(|(k, v)| (k.clone(), share(*v)))
            .collect();
        Self {
            total,
            by_action,
            action_share,
            by_firm,
            firm_share,
        }
    }
}

/// Result of ingesting an analyst ratings feed.
///
/// Rows are conserved: `events.len() + quarantined.len() + rejected.len()`
/// equals the number of input rows. Quarantined rows parsed cleanly except
/// for an unknown rating term; rejected rows were malformed.
#[derive(Debug, Clone)]
pub struct AnalystIngest {
    pub events: Vec<AnalystRatingEvent>,
    pub quarantined: Vec<FailedRow>,
    pub rejected: Vec<FailedRow>,
    pub distribution: ActionDistribution,
}

/// Reads an analyst feed (CSV `firm,ticker,date,action,term`) and normalizes
/// every term through `vocab`. Multiple same-day ratings for one company are
/// all retained.
pub fn ingest_analyst_ratings<R: Read>(
    reader: R,
    vocab: &RatingVocabulary,
) -> Result<AnalystIngest, RatingsError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);

    let mut events = Vec::new();
    let mut quarantined = Vec::new();
    let mut rejected = Vec::new();

    for (idx, row) in csv_reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push(FailedRow {
                    line,
                    raw: String::new(),
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let raw = record.iter().collect::<Vec<_>>().join(",");
        let reject = |reason: String, rejected: &mut Vec<FailedRow>| {
            rejected.push(FailedRow {
                line,
                raw: raw.clone(),
                reason,
            });
        };

        let fields: Vec<&str> = record.iter().map(str::trim).collect();
        if fields.len() != 5 {
            reject(
                format!("expected 5 fields, got {}", fields.len()),
                &mut rejected,
            );
            continue;
        }
        let (firm, ticker, date_s, action_s, term) =
            (fields[0], fields[1], fields[2], fields[3], fields[4]);
        if firm.is_empty() || ticker.is_empty() {
            reject("empty firm or ticker".to_string(), &mut rejected);
            continue;
        }
        let date = match NaiveDate::from_str(date_s) {
            Ok(d) => d,
            Err(_) => {
                reject(format!("invalid date `{date_s}`"), &mut rejected);
                continue;
            }
        };
        let action = match action_s.parse::<RatingAction>() {
            Ok(a) => a,
            Err(_) => {
                reject(format!("unknown action `{action_s}`"), &mut rejected);
                continue;
            }
        };
        match vocab.normalize(term) {
            Ok(rating) => events.push(AnalystRatingEvent {
                firm: firm.to_string(),
                company_id: ticker.to_string(),
                date,
                action,
                term: term.to_string(),
                rating,
            }),
            Err(RatingsError::UnknownTerm(t)) => quarantined.push(FailedRow {
                line,
                raw,
                reason: format!("unknown rating term `{t}`"),
            }),
            Err(e) => return Err(e),
        }
    }

    let distribution = ActionDistribution::from_events(&events);
    Ok(AnalystIngest {
        events,
        quarantined,
        rejected,
        distribution,
    })
}

/// Writes quarantined/rejected rows as CSV (`line,reason,raw`).
pub fn write_failed_rows_csv<W: std::io::Write>(
    rows: &[FailedRow],
    writer: W,
) -> Result<(), RatingsError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["line", "reason", "raw"])?;
    for row in rows {
        w.write_record([row.line.to_string().as_str(), &row.reason, &row.raw])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
