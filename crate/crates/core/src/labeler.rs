//! Quintile ground-truth labeling of cross-sectional forward returns.
//!
//! For a rating date and horizon we compute every company's forward return,
//! rank the cross-section, and bucket it into quintiles; the bucket index
//! maps directly onto the ordinal rating scale (bottom quintile = Strong
//! Sell). Absolute-return quantiles are already market-relative because the
//! ranking is cross-sectional; the sector-relative mode subtracts each
//! company's sector index return first.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{compute_relative_return, compute_return, MarketError, PriceStore, Universe};
use crate::ratings::OrdinalRating;

/// Bucket count matching the five-level rating scale; the CLI pins
/// this, the library takes `k`.
pub const QUINTILES: usize = 5;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("too few companies: need at least {needed}, got {got}")]
    TooFewCompanies { needed: usize, got: usize },
    #[error("quantile bucket {0} outside 0..{QUINTILES}")]
    OutOfRange(usize),
    #[error("key mismatch: {0}")]
    KeyMismatch(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Which return feeds the cross-sectional ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// Raw forward returns; cross-sectional ranking makes these
    /// market-relative automatically.
    Absolute,
    /// Company return minus its sector index return.
    SectorRelative,
}

impl LabelMode {
    pub const ALL: [Self; 2] = [Self::Absolute, Self::SectorRelative];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Absolute => "absolute",
            Self::SectorRelative => "sector-relative",
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground truth for one (company, rating date, horizon, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileLabel {
    pub company_id: String,
    pub rating_date: NaiveDate,
    pub horizon_months: u32,
    pub mode: LabelMode,
    pub quintile: usize,
    pub ground_truth: OrdinalRating,
}

/// Rank-based bucketing: sort ascending by (value, company id) and give the
/// company at 0-based rank `r` of `n` the bucket `floor(r * k / n)`.
/// Bucket sizes differ by at most one and higher values never get a lower
/// bucket.
pub fn assign_quantiles(
    returns: &BTreeMap<String, f64>,
    k: usize,
) -> Result<BTreeMap<String, usize>, LabelError> {
    assert!(k >= 1, "bucket count must be at least 1");
    let n = returns.len();
    if n < k {
        return Err(LabelError::TooFewCompanies { needed: k, got: n });
    }
    let mut ranked: Vec<(&String, f64)> = returns.iter().map(|(id, r)| (id, *r)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (id, _))| (id.clone(), rank * k / n))
        .collect())
}

/// Quintile index to ordinal rating: 0 -> Strong Sell ... 4 -> Strong Buy.
pub fn quantile_to_rating(quintile: usize) -> Result<OrdinalRating, LabelError> {
    if quintile >= QUINTILES {
        return Err(LabelError::OutOfRange(quintile));
    }
    Ok(OrdinalRating::new(quintile as i8 - 2).expect("quintile maps into ordinal range"))
}

/// Companies dropped from a cross-section, with the data error that
/// excluded them.
#[derive(Debug, Clone, Serialize)]
pub struct ExcludedCompany {
    pub company_id: String,
    pub reason: String,
}

/// Labels for one (rating date, horizon, mode) cross-section.
#[derive(Debug, Clone)]
pub struct LabelSet {
    pub labels: Vec<QuantileLabel>,
    pub excluded: Vec<ExcludedCompany>,
}

impl LabelSet {
    pub fn by_company(&self) -> BTreeMap<&str, &QuantileLabel> {
        self.labels
            .iter()
            .map(|l| (l.company_id.as_str(), l))
            .collect()
    }
}

/// Labels the whole universe at one rating date and horizon. Companies
/// lacking a price at either endpoint are excluded and reported, never
/// defaulted.
pub fn label_universe(
    prices: &PriceStore,
    universe: &Universe,
    rating_date: NaiveDate,
    horizon_months: u32,
    mode: LabelMode,
    max_roll_days: i64,
) -> Result<LabelSet, LabelError> {
    let mut returns: BTreeMap<String, f64> = BTreeMap::new();
    let mut excluded: Vec<ExcludedCompany> = Vec::new();
    // Sector index returns are shared across a sector; compute lazily once.
    let mut sector_returns: BTreeMap<&str, Result<f64, String>> = BTreeMap::new();

    for entry in &universe.companies {
        let company_return = prices
            .get(&entry.ticker)
            .and_then(|series| compute_return(series, rating_date, horizon_months, max_roll_days));
        let company_return = match company_return {
            Ok(r) if r.is_finite() => r,
            Ok(r) => {
                excluded.push(ExcludedCompany {
                    company_id: entry.ticker.clone(),
                    reason: format!("non-finite return {r}"),
                });
                continue;
            }
            Err(e) => {
                excluded.push(ExcludedCompany {
                    company_id: entry.ticker.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let value = match mode {
            LabelMode::Absolute => company_return,
            LabelMode::SectorRelative => {
                let sector_return =
                    sector_returns
                        .entry(entry.sector.as_str())
                        .or_insert_with(|| {
                            universe
                                .sector_index_id(&entry.sector)
                                .and_then(|id| prices.get(id))
                                .and_then(|series| {
                                    compute_return(
                                        series,
                                        rating_date,
                                        horizon_months,
                                        max_roll_days,
                                    )
                                })
                                .map_err(|e| e.to_string())
                        });
                match sector_return {
                    Ok(r) => compute_relative_return(company_return, *r),
                    Err(reason) => {
                        excluded.push(ExcludedCompany {
                            company_id: entry.ticker.clone(),
                            reason: format!("sector index: {reason}"),
                        });
                        continue;
                    }
                }
            }
        };
        returns.insert(entry.ticker.clone(), value);
    }

    let buckets = assign_quantiles(&returns, QUINTILES)?;
    let labels = buckets
        .into_iter()
        .map(|(company_id, quintile)| {
            let ground_truth = quantile_to_rating(quintile).expect("bucket in range");
            QuantileLabel {
                company_id,
                rating_date,
                horizon_months,
                mode,
                quintile,
                ground_truth,
            }
        })
        .collect();
    Ok(LabelSet { labels, excluded })
}

/// A rating carrying its cell identity, so correctness checks can verify
/// the join keys.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedRating {
    pub company_id: String,
    pub rating_date: NaiveDate,
    pub horizon_months: u32,
    pub rating: OrdinalRating,
}

/// The correctness indicator: true iff the rating equals the ground-truth
/// rating for the same (company, date, horizon).
pub fn rating_correct(rating: &KeyedRating, label: &QuantileLabel) -> Result<bool, LabelError> {
    if rating.company_id != label.company_id
        || rating.rating_date != label.rating_date
        || rating.horizon_months != label.horizon_months
    {
        return Err(LabelError::KeyMismatch(format!(
            "rating ({}, {}, {}m) vs label ({}, {}, {}m)",
            rating.company_id,
            rating.rating_date,
            rating.horizon_months,
            label.company_id,
            label.rating_date,
            label.horizon_months,
        )));
    }
    Ok(rating.rating == label.ground_truth)
}

/// Writes labels as CSV:
/// `company,rating_date,horizon_months,mode,quintile,truth_rating`.
pub fn write_labels_csv<W: std::io::Write>(
    labels: &[QuantileLabel],
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "company",
        "rating_date",
        "horizon_months",
        "mode",
        "quintile",
        "truth_rating",
    ])?;
    for label in labels {
        w.write_record([
            label.company_id.as_str(),
            &label.rating_date.to_string(),
            &label.horizon_months.to_string(),
            label.mode.as_str(),
            &label.quintile.to_string(),
            &label.ground_truth.value().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
