//! Price series ingestion, forward/trailing returns, and the technical
//! snapshot fed to every prompt method.
//!
//! Conventions (fixed across the whole pipeline):
//! - "p months" means calendar-month addition (day clamped to month end),
//!   then roll-forward to the next trading day within a max-roll window.
//! - Trailing windows for the snapshot resolve backwards: the price "at"
//!   a calendar date is the last observation on or before it.
//! - 90-day volatility is the sample standard deviation (n-1) of daily
//!   simple returns over the trailing 90 calendar days, unannualized.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::add_months;

/// Default number of calendar days a date may roll forward to find a
/// trading day before we give up.
pub const DEFAULT_MAX_ROLL_DAYS: i64 = 7;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("no trading date within {max_roll_days} days of {date} for `{instrument}`")]
    NoTradingDate {
        instrument: String,
        date: NaiveDate,
        max_roll_days: i64,
    },
    #[error("insufficient history for `{instrument}` as of {as_of}: {} window(s) failed: {}", windows.len(), windows.join(", "))]
    InsufficientHistory {
        instrument: String,
        as_of: NaiveDate,
        windows: Vec<String>,
    },
    #[error("invalid price series `{instrument}`: {reason}")]
    InvalidSeries { instrument: String, reason: String },
    #[error("unknown instrument `{0}`")]
    UnknownInstrument(String),
    #[error("invalid universe: {0}")]
    InvalidUniverse(String),
    #[error("price csv, line {line}: {reason}")]
    MalformedPriceRow { line: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("universe file: {0}")]
    UniverseParse(#[from] toml::de::Error),
}

/// Dated adjusted-close prices for one instrument. Dates are strictly
/// increasing and every price is positive; construction enforces both.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    instrument_id: String,
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(
        instrument_id: impl Into<String>,
        observations: Vec<(NaiveDate, f64)>,
    ) -> Result<Self, MarketError> {
        let instrument_id = instrument_id.into();
        let invalid = |reason: String| MarketError::InvalidSeries {
            instrument: instrument_id.clone(),
            reason,
        };
        if observations.is_empty() {
            return Err(invalid("empty series".to_string()));
        }
        let mut dates = Vec::with_capacity(observations.len());
        let mut prices = Vec::with_capacity(observations.len());
        for (date, price) in observations {
            if let Some(&last) = dates.last() {
                if date <= last {
                    return Err(invalid(format!(
                        "dates not strictly increasing at {date} (previous {last})"
                    )));
                }
            }
            if !(price.is_finite() && price > 0.0) {
                return Err(invalid(format!("non-positive price {price} at {date}")));
            }
            dates.push(date);
            prices.push(price);
        }
        Ok(Self {
            instrument_id,
            dates,
            prices,
        })
    }

    pub fn instrument_id(&self) -> &str {
        &self.instrument_id
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        *self.dates.last().unwrap()
    }

    pub fn observations(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.dates.iter().copied().zip(self.prices.iter().copied())
    }

    /// Price on an exact trading date.
    pub fn price_on(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.prices[i])
    }

    /// Last observation on or before `date` (backward resolution).
    pub fn at_or_before(&self, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        let idx = self.dates.partition_point(|d| *d <= date);
        idx.checked_sub(1).map(|i| (self.dates[i], self.prices[i]))
    }

    /// First observation on or after `date` (forward resolution).
    pub fn at_or_after(&self, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        let idx = self.dates.partition_point(|d| *d < date);
        (idx < self.dates.len()).then(|| (self.dates[idx], self.prices[idx]))
    }

    /// Observations with date in `[from, to]`.
    pub fn window(
        &self,
        from: NaiveDate,
        to: NaiveDate,
    ) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        let start = self.dates.partition_point(|d| *d < from);
        let end = self.dates.partition_point(|d| *d <= to);
        self.dates[start..end]
            .iter()
            .copied()
            .zip(self.prices[start..end].iter().copied())
    }
}

/// Roll-forward alignment of a calendar date onto the series' trading
/// calendar.
///
/// Returns the first observation date on or after `calendar_date`, provided
/// it falls within `max_roll_days`. When `calendar_date` is past the end of
/// the series by at most `max_roll_days`, the last observation date is
/// returned so "as of today"-style queries keep working over weekends.
pub fn resolve_trading_date(
    calendar_date: NaiveDate,
    series: &PriceSeries,
    max_roll_days: i64,
) -> Result<NaiveDate, MarketError> {
    let no_date = || MarketError::NoTradingDate {
        instrument: series.instrument_id.clone(),
        date: calendar_date,
        max_roll_days,
    };
    if let Some((date, _)) = series.at_or_after(calendar_date) {
        if (date - calendar_date).num_days() <= max_roll_days {
            return Ok(date);
        }
        return Err(no_date());
    }
    let last = series.last_date();
    if (calendar_date - last).num_days() <= max_roll_days {
        return Ok(last);
    }
    Err(no_date())
}

/// Forward return over `horizon_months` starting at calendar date `t`:
/// (P(t+p) - P(t)) / P(t), with both endpoints rolled onto trading days.
pub fn compute_return(
    series: &PriceSeries,
    t: NaiveDate,
    horizon_months: u32,
    max_roll_days: i64,
) -> Result<f64, MarketError> {
    let start = resolve_trading_date(t, series, max_roll_days)?;
    let end_calendar = add_months(t, horizon_months as i32);
    let end = resolve_trading_date(end_calendar, series, max_roll_days)?;
    let p_start = series.price_on(start).expect("resolved date is in series");
    let p_end = series.price_on(end).expect("resolved date is in series");
    Ok((p_end - p_start) / p_start)
}

/// Company return minus benchmark return. Serves both the sector-relative
/// and market-relative variants.
pub fn compute_relative_return(company_return: f64, benchmark_return: f64) -> f64 {
    company_return - benchmark_return
}

/// The 13 numbers every prompt method receives for one company/date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechnicalSnapshot {
    pub current_price: f64,
    pub week52_min: f64,
    pub week52_max: f64,
    /// Sample std. dev. of daily simple returns over the trailing 90
    /// calendar days, unannualized.
    pub volatility_90d: f64,
    pub returns_1m: f64,
    pub returns_3m: f64,
    pub returns_12m: f64,
    pub market_relative_1m: f64,
    pub market_relative_3m: f64,
    pub market_relative_12m: f64,
    pub sector_relative_1m: f64,
    pub sector_relative_3m: f64,
    pub sector_relative_12m: f64,
    /// Date of the last price observation used; always <= the as-of date.
    pub price_date: NaiveDate,
}

impl TechnicalSnapshot {
    /// The snapshot as (label, value) rows, in prompt order. Exactly 13.
    pub fn rows(&self) -> [(&'static str, f64); 13] {
        [
            ("Current price", self.current_price),
            ("52-week low", self.week52_min),
            ("52-week high", self.week52_max),
            (
                "90-day volatility (std. dev. of daily returns)",
                self.volatility_90d,
            ),
            ("Return, 1-month", self.returns_1m),
            ("Return, 3-month", self.returns_3m),
            ("Return, 12-month", self.returns_12m),
            ("Market-relative return, 1-month", self.market_relative_1m),
            ("Market-relative return, 3-month", self.market_relative_3m),
            ("Market-relative return, 12-month", self.market_relative_12m),
            ("Sector-relative return, 1-month", self.sector_relative_1m),
            ("Sector-relative return, 3-month", self.sector_relative_3m),
            ("Sector-relative return, 12-month", self.sector_relative_12m),
        ]
    }
}

/// Trailing return over `months` calendar months ending at `as_of`, both
/// endpoints resolved backwards (last observation on or before the date).
fn trailing_return(series: &PriceSeries, as_of: NaiveDate, months: u32) -> Option<f64> {
    let (_, p_end) = series.at_or_before(as_of)?;
    let start_calendar = add_months(as_of, -(months as i32));
    let (_, p_start) = series.at_or_before(start_calendar)?;
    Some((p_end - p_start) / p_start)
}

/// Builds the 13-number snapshot as of `as_of` (using only observations on
/// or before it). `market` and `sector` are the benchmark index series.
pub fn build_technical_snapshot(
    company: &PriceSeries,
    market: &PriceSeries,
    sector: &PriceSeries,
    as_of: NaiveDate,
) -> Result<TechnicalSnapshot, MarketError> {
    let mut failed: Vec<String> = Vec::new();

    let current = company.at_or_before(as_of);
    if current.is_none() {
        failed.push("current-price".to_string());
    }

    let mut returns = [0.0f64; 3];
    let mut market_rel = [0.0f64; 3];
    let mut sector_rel = [0.0f64; 3];
    for (i, months) in [1u32, 3, 12].into_iter().enumerate() {
        match trailing_return(company, as_of, months) {
            Some(r) => {
                returns[i] = r;
                match trailing_return(market, as_of, months) {
                    Some(b) => market_rel[i] = compute_relative_return(r, b),
                    None => failed.push(format!("market-{months}m")),
                }
                match trailing_return(sector, as_of, months) {
                    Some(b) => sector_rel[i] = compute_relative_return(r, b),
                    None => failed.push(format!("sector-{months}m")),
                }
            }
            None => failed.push(format!("{months}m")),
        }
    }

    let week52: Vec<f64> = company
        .window(as_of - Duration::days(365), as_of)
        .map(|(_, p)| p)
        .collect();
    if week52.is_empty() {
        failed.push("52w-range".to_string());
    }

    // Daily simple returns whose later observation falls inside the window.
    let vol_window: Vec<(NaiveDate, f64)> =
        company.window(as_of - Duration::days(90), as_of).collect();
    let daily_returns: Vec<f64> = vol_window
        .windows(2)
        .map(|pair| pair[1].1 / pair[0].1 - 1.0)
        .collect();
    if daily_returns.len() < 2 {
        failed.push("90d-volatility".to_string());
    }

    if !failed.is_empty() {
        return Err(MarketError::InsufficientHistory {
            instrument: company.instrument_id.clone(),
            as_of,
            windows: failed,
        });
    }

    let (price_date, current_price) = current.unwrap();
    let mean = daily_returns.iter().sum::<f64>() / daily_returns.len() as f64;
    let variance = daily_returns
        .iter()
        .map(|r| (r - mean).powi(2))
        .sum::<f64>()
        / (daily_returns.len() - 1) as f64;

    Ok(TechnicalSnapshot {
        current_price,
        week52_min: week52.iter().copied().fold(f64::INFINITY, f64::min),
        week52_max: week52.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        volatility_90d: variance.sqrt(),
        returns_1m: returns[0],
        returns_3m: returns[1],
        returns_12m: returns[2],
        market_relative_1m: market_rel[0],
        market_relative_3m: market_rel[1],
        market_relative_12m: market_rel[2],
        sector_relative_1m: sector_rel[0],
        sector_relative_3m: sector_rel[1],
        sector_relative_12m: sector_rel[2],
        price_date,
    })
}

/// One company in the experiment universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniverseEntry {
    pub ticker: String,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub sector: String,
}

/// The set of companies under study plus the benchmark index declarations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Universe {
    /// Instrument id of the market index series; empty means "synthesize an
    /// equal-weight composite of the universe".
    #[serde(default)]
    pub market_index: String,
    /// sector id -> instrument id of that sector's index series.
    pub sector_indexes: BTreeMap<String, String>,
    pub companies: Vec<UniverseEntry>,
}

impl Universe {
    /// Validates ticker uniqueness and sector-index coverage.
    pub fn validate(&self) -> Result<(), MarketError> {
        let mut seen = BTreeSet::new();
        for entry in &self.companies {
            if !seen.insert(entry.ticker.as_str()) {
                return Err(MarketError::InvalidUniverse(format!(
                    "duplicate ticker `{}`",
                    entry.ticker
                )));
            }
            if !self.sector_indexes.contains_key(&entry.sector) {
                return Err(MarketError::InvalidUniverse(format!(
                    "sector `{}` of `{}` has no index mapping",
                    entry.sector, entry.ticker
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, MarketError> {
        let universe: Universe = toml::from_str(text)?;
        universe.validate()?;
        Ok(universe)
    }

    pub fn load(path: &Path) -> Result<Self, MarketError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn sector_index_id(&self, sector: &str) -> Result<&str, MarketError> {
        self.sector_indexes
            .get(sector)
            .map(String::as_str)
            .ok_or_else(|| MarketError::InvalidUniverse(format!("unknown sector `{sector}`")))
    }
}

/// All loaded price series, keyed by instrument id.
#[derive(Debug, Clone, Default)]
pub struct PriceStore {
    series: BTreeMap<String, PriceSeries>,
}

impl PriceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, series: PriceSeries) {
        self.series.insert(series.instrument_id.clone(), series);
    }

    pub fn get(&self, instrument_id: &str) -> Result<&PriceSeries, MarketError> {
        self.series
            .get(instrument_id)
            .ok_or_else(|| MarketError::UnknownInstrument(instrument_id.to_string()))
    }

    pub fn contains(&self, instrument_id: &str) -> bool {
        self.series.contains_key(instrument_id)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn instrument_ids(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    /// Reads `date,ticker,adj_close` CSV rows into per-instrument series.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, MarketError> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let mut grouped: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
        for (idx, row) in csv_reader.records().enumerate() {
            let line = idx + 2;
            let record = row?;
            let bad = |reason: String| MarketError::MalformedPriceRow { line, reason };
            if record.len() != 3 {
                return Err(bad(format!("expected 3 fields, got {}", record.len())));
            }
            let date: NaiveDate = record[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid date `{}`", &record[0])))?;
            let ticker = record[1].trim().to_string();
            let price: f64 = record[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("invalid price `{}`", &record[2])))?;
            grouped.entry(ticker).or_default().push((date, price));
        }
        let mut store = Self::new();
        for (ticker, mut observations) in grouped {
            observations.sort_by_key(|(d, _)| *d);
            store.insert(PriceSeries::new(ticker, observations)?);
        }
        Ok(store)
    }

    pub fn load_csv(path: &Path) -> Result<Self, MarketError> {
        Self::from_csv(std::fs::File::open(path)?)
    }
}

/// Chains the mean of constituents' daily simple returns into an
/// equal-weight composite index (base 100). Used as the market benchmark
/// when no market index series is configured.
pub fn equal_weight_composite(
    instrument_id: impl Into<String>,
    constituents: &[&PriceSeries],
) -> Result<PriceSeries, MarketError> {
    let instrument_id = instrument_id.into();
    if constituents.is_empty() {
        return Err(MarketError::InvalidSeries {
            instrument: instrument_id,
            reason: "no constituents".to_string(),
        });
    }
    let mut all_dates: BTreeSet<NaiveDate> = BTreeSet::new();
    for series in constituents {
        all_dates.extend(series.dates.iter().copied());
    }
    let mut observations: Vec<(NaiveDate, f64)> = Vec::with_capacity(all_dates.len());
    let mut level = 100.0;
    let mut prev_date: Option<NaiveDate> = None;
    for date in all_dates {
        if let Some(prev) = prev_date {
            let mut sum = 0.0;
            let mut n = 0usize;
            for series in constituents {
                if let (Some(p0), Some(p1)) = (series.price_on(prev), series.price_on(date)) {
                    sum += p1 / p0 - 1.0;
                    n += 1;
                }
            }
            if n > 0 {
                level *= 1.0 + sum / n as f64;
            }
        }
        observations.push((date, level));
        prev_date = Some(date);
    }
    PriceSeries::new(instrument_id, observations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    /// Weekday-only series from `start`, prices from the closure.
    fn weekday_series(
        id: &str,
        start: NaiveDate,
        days: usize,
        price: impl Fn(usize) -> f64,
    ) -> PriceSeries {
        let mut observations = Vec::new();
        let mut date = start;
        let mut i = 0;
        while observations.len() < days {
            if date.weekday().num_days_from_monday() < 5 {
                observations.push((date, price(i)));
                i += 1;
            }
            date += Duration::days(1);
        }
        PriceSeries::new(id, observations).unwrap()
    }

    use chrono::Datelike;

    #[test]
    fn series_rejects_unsorted_and_nonpositive() {
        assert!(PriceSeries::new("X", vec![]).is_err());
        assert!(
            PriceSeries::new("X", vec![(d("2022-01-03"), 10.0), (d("2022-01-03"), 11.0)]).is_err()
        );
        assert!(
            PriceSeries::new("X", vec![(d("2022-01-04"), 10.0), (d("2022-01-03"), 11.0)]).is_err()
        );
        assert!(PriceSeries::new("X", vec![(d("2022-01-03"), 0.0)]).is_err());
        assert!(PriceSeries::new("X", vec![(d("2022-01-03"), -1.0)]).is_err());
    }

    #[test]
    fn resolve_rolls_weekend_forward() {
        let series =
            PriceSeries::new("X", vec![(d("2022-01-03"), 10.0), (d("2022-01-04"), 11.0)]).unwrap();
        // Sat 2022-01-01 rolls to Mon 2022-01-03.
        assert_eq!(
            resolve_trading_date(d("2022-01-01"), &series, DEFAULT_MAX_ROLL_DAYS).unwrap(),
            d("2022-01-03")
        );
        // A trading date resolves to itself.
        assert_eq!(
            resolve_trading_date(d("2022-01-03"), &series, DEFAULT_MAX_ROLL_DAYS).unwrap(),
            d("2022-01-03")
        );
    }

    #[test]
    fn resolve_is_idempotent_on_trading_dates() {
        let series = weekday_series("X", d("2022-01-03"), 40, |_| 10.0);
        for (date, _) in series.observations() {
            let resolved = resolve_trading_date(date, &series, DEFAULT_MAX_ROLL_DAYS).unwrap();
            assert_eq!(resolved, date);
        }
    }

    #[test]
    fn resolve_errors_beyond_max_roll() {
        let series = PriceSeries::new("X", vec![(d("2024-06-28"), 10.0)]).unwrap();
        let err = resolve_trading_date(d("2030-01-01"), &series, DEFAULT_MAX_ROLL_DAYS);
        assert!(matches!(err, Err(MarketError::NoTradingDate { .. })));
        // Just past the end but within the roll window: last observation.
        assert_eq!(
            resolve_trading_date(d("2024-06-29"), &series, DEFAULT_MAX_ROLL_DAYS).unwrap(),
            d("2024-06-28")
        );
        // Gap wider than the roll window inside the series.
        let gappy =
            PriceSeries::new("Y", vec![(d("2022-01-03"), 10.0), (d("2022-03-01"), 11.0)]).unwrap();
        assert!(matches!(
            resolve_trading_date(d("2022-01-10"), &gappy, DEFAULT_MAX_ROLL_DAYS),
            Err(MarketError::NoTradingDate { .. })
        ));
    }

    #[test]
    fn compute_return_matches_formula() {
        let series = PriceSeries::new(
            "X",
            vec![(d("2022-01-03"), 100.0), (d("2022-02-01"), 110.0)],
        )
        .unwrap();
        let r = compute_return(&series, d("2022-01-01"), 1, DEFAULT_MAX_ROLL_DAYS).unwrap();
        assert!((r - 0.10).abs() < 1e-12);

        let flat = PriceSeries::new(
            "Y",
            vec![(d("2022-01-03"), 100.0), (d("2022-02-01"), 100.0)],
        )
        .unwrap();
        let r = compute_return(&flat, d("2022-01-01"), 1, DEFAULT_MAX_ROLL_DAYS).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn relative_return_is_subtraction_and_antisymmetric() {
        assert!((compute_relative_return(0.10, 0.04) - 0.06).abs() < 1e-15);
        assert_eq!(compute_relative_return(0.07, 0.07), 0.0);
        let (a, b) = (0.123, -0.456);
        assert_eq!(
            compute_relative_return(a, b),
            -compute_relative_return(b, a)
        );
    }

    #[test]
    fn sector_index_relative_to_itself_is_zero() {
        let series = weekday_series("IDX", d("2021-06-01"), 300, |i| 50.0 + i as f64 * 0.1);
        let snapshot =
            build_technical_snapshot(&series, &series, &series, d("2022-06-01")).unwrap();
        assert_eq!(snapshot.sector_relative_1m, 0.0);
        assert_eq!(snapshot.sector_relative_3m, 0.0);
        assert_eq!(snapshot.sector_relative_12m, 0.0);
    }

    #[test]
    fn flat_series_snapshot_is_degenerate() {
        let flat = weekday_series("X", d("2021-01-04"), 400, |_| 42.0);
        let as_of = d("2022-06-01");
        let snapshot = build_technical_snapshot(&flat, &flat, &flat, as_of).unwrap();
        assert_eq!(snapshot.returns_1m, 0.0);
        assert_eq!(snapshot.returns_3m, 0.0);
        assert_eq!(snapshot.returns_12m, 0.0);
        assert_eq!(snapshot.market_relative_12m, 0.0);
        assert_eq!(snapshot.volatility_90d, 0.0);
        assert_eq!(snapshot.week52_min, 42.0);
        assert_eq!(snapshot.week52_max, 42.0);
        assert_eq!(snapshot.current_price, 42.0);
        assert_eq!(snapshot.rows().len(), 13);
    }

    #[test]
    fn snapshot_respects_52_week_bounds() {
        let series = weekday_series("X", d("2021-01-04"), 400, |i| 100.0 + (i % 37) as f64);
        let as_of = d("2022-06-01");
        let snap = build_technical_snapshot(&series, &series, &series, as_of).unwrap();
        assert!(snap.week52_min <= snap.current_price);
        assert!(snap.current_price <= snap.week52_max);
        assert!(snap.price_date <= as_of);
    }

    #[test]
    fn snapshot_insufficient_history_names_windows() {
        let short = weekday_series("X", d("2022-01-03"), 30, |i| 10.0 + i as f64);
        let err = build_technical_snapshot(&short, &short, &short, d("2022-02-15"));
        match err {
            Err(MarketError::InsufficientHistory { windows, .. }) => {
                assert!(windows.contains(&"3m".to_string()), "windows: {windows:?}");
                assert!(windows.contains(&"12m".to_string()));
                assert!(!windows.contains(&"1m".to_string()));
            }
            other => panic!("expected InsufficientHistory, got {other:?}"),
        }
    }

    #[test]
    fn price_store_roundtrips_csv() {
        let csv = "date,ticker,adj_close\n\
                   2022-01-03,AAA,10.5\n\
                   2022-01-04,AAA,10.7\n\
                   2022-01-03,BBB,20.0\n";
        let store = PriceStore::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get("AAA").unwrap().len(), 2);
        assert_eq!(
            store.get("BBB").unwrap().price_on(d("2022-01-03")),
            Some(20.0)
        );
        assert!(matches!(
            store.get("CCC"),
            Err(MarketError::UnknownInstrument(_))
        ));
    }

    #[test]
    fn price_store_rejects_duplicate_rows() {
        let csv = "date,ticker,adj_close\n\
                   2022-01-03,AAA,10.5\n\
                   2022-01-03,AAA,10.6\n";
        assert!(PriceStore::from_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn universe_validation() {
        let toml_text = r#"
            market_index = "MKT"
            [sector_indexes]
            tech = "IDX_TECH"
            [[companies]]
            ticker = "AAA"
            name = "Alpha Inc."
            aliases = ["Alpha"]
            sector = "tech"
            [[companies]]
            ticker = "BBB"
            name = "Beta Corp"
            sector = "tech"
        "#;
        let universe = Universe::from_toml(toml_text).unwrap();
        assert_eq!(universe.companies.len(), 2);
        assert_eq!(universe.sector_index_id("tech").unwrap(), "IDX_TECH");

        let dup = toml_text.replace("BBB", "AAA");
        assert!(Universe::from_toml(&dup).is_err());

        let missing_sector = toml_text.replace("sector = \"tech\"", "sector = \"energy\"");
        assert!(Universe::from_toml(&missing_sector).is_err());
    }

    #[test]
    fn composite_single_period_return_is_mean_of_constituents() {
        let a = PriceSeries::new(
            "A",
            vec![(d("2022-01-03"), 100.0), (d("2022-01-04"), 110.0)],
        )
        .unwrap();
        let b =
            PriceSeries::new("B", vec![(d("2022-01-03"), 50.0), (d("2022-01-04"), 45.0)]).unwrap();
        let composite = equal_weight_composite("EW", &[&a, &b]).unwrap();
        let r = composite.price_on(d("2022-01-04")).unwrap()
            / composite.price_on(d("2022-01-03")).unwrap()
            - 1.0;
        // mean(+10%, -10%) = 0
        assert!(r.abs() < 1e-12);
    }
}
