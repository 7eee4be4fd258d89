//! Deterministic synthetic dataset generation: price series with
//! persistent per-company drift, a universe file, company news, analyst
//! ratings, and quarterly fundamentals.
//!
//! Real market/news/filing feeds are proprietary, so the end-to-end
//! pipeline ships with a generator instead: same seed, same bytes, on any
//! platform. Companies get evenly spaced drifts so momentum actually
//! predicts the forward-return quintiles, which makes the generated world
//! useful for calibration tests.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::market::{equal_weight_composite, PriceSeries, PriceStore, Universe, UniverseEntry};
use crate::news::Article;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub companies: usize,
    pub sectors: usize,
    /// First and last calendar dates of the generated price history.
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Per-company monthly drifts are evenly spaced in ±this.
    pub monthly_drift_spread: f64,
    pub daily_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            companies: 10,
            sectors: 2,
            start: NaiveDate::from_ymd_opt(2021, 12, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2024, 9, 30).unwrap(),
            monthly_drift_spread: 0.04,
            daily_noise: 0.004,
        }
    }
}

/// A generated dataset, in memory.
pub struct SyntheticDataset {
    pub universe: Universe,
    pub prices: PriceStore,
    pub articles: Vec<Article>,
    pub analyst_csv: String,
    pub fundamentals_csv: String,
}

/// Paths of the files [`write_to_dir`] produced.
pub struct SyntheticFiles {
    pub universe: PathBuf,
    pub prices: PathBuf,
    pub news: PathBuf,
    pub analyst: PathBuf,
    pub fundamentals: PathBuf,
}

pub fn ticker(index: usize) -> String {
    format!("C{index:02}")
}

pub fn company_name(index: usize) -> String {
    format!("Acme{index:02} Corporation")
}

fn sector_id(index: usize) -> String {
    format!("sector{index}")
}

fn sector_index_id(index: usize) -> String {
    format!("IDX_S{index}")
}

pub const MARKET_INDEX_ID: &str = "IDX_MKT";

fn weekdays(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut dates = Vec::new();
    let mut date = start;
    while date <= end {
        if date.weekday().num_days_from_monday() < 5 {
            dates.push(date);
        }
        date += Duration::days(1);
    }
    dates
}

pub fn generate(config: &SyntheticConfig) -> SyntheticDataset {
    assert!(config.companies >= 1 && config.sectors >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dates = weekdays(config.start, config.end);

    // Universe: companies round-robin across sectors.
    let companies: Vec<UniverseEntry> = (0..config.companies)
        .map(|i| UniverseEntry {
            ticker: ticker(i),
            name: company_name(i),
            aliases: vec![format!("Acme{i:02}"), ticker(i)],
            sector: sector_id(i % config.sectors),
        })
        .collect();
    let sector_indexes = (0..config.sectors)
        .map(|s| (sector_id(s), sector_index_id(s)))
        .collect();
    let universe = Universe {
        market_index: MARKET_INDEX_ID.to_string(),
        sector_indexes,
        companies,
    };
    universe.validate().expect("generated universe is valid");

    // Price walks with evenly spaced persistent drifts.
    let mut prices = PriceStore::new();
    let mut company_series: Vec<PriceSeries> = Vec::new();
    for i in 0..config.companies {
        let fraction = if config.companies == 1 {
            0.0
        } else {
            i as f64 / (config.companies - 1) as f64 * 2.0 - 1.0
        };
        let daily_drift = config.monthly_drift_spread * fraction / 21.0;
        let mut level = 40.0 + 10.0 * i as f64;
        let mut observations = Vec::with_capacity(dates.len());
        for date in &dates {
            observations.push((*date, level));
            let shock = config.daily_noise * (rng.gen::<f64>() * 2.0 - 1.0);
            level *= (1.0 + daily_drift + shock).max(0.01);
        }
        let series = PriceSeries::new(ticker(i), observations).expect("valid walk");
        company_series.push(series);
    }

    for s in 0..config.sectors {
        let constituents: Vec<&PriceSeries> = company_series
            .iter()
            .enumerate()
            .filter(|(i, _)| i % config.sectors == s)
            .map(|(_, series)| series)
            .collect();
        let index =
            equal_weight_composite(sector_index_id(s), &constituents).expect("sector composite");
        prices.insert(index);
    }
    let all: Vec<&PriceSeries> = company_series.iter().collect();
    prices.insert(equal_weight_composite(MARKET_INDEX_ID, &all).expect("market composite"));
    for series in company_series {
        prices.insert(series);
    }

    let articles = generate_articles(config, &universe, &mut rng);
    let analyst_csv = generate_analyst_csv(config, &universe, &mut rng);
    let fundamentals_csv = generate_fundamentals_csv(config, &universe, &mut rng);

    SyntheticDataset {
        universe,
        prices,
        articles,
        analyst_csv,
        fundamentals_csv,
    }
}

fn months_between(start: NaiveDate, end: NaiveDate) -> Vec<crate::dates::YearMonth> {
    crate::dates::YearMonth::of(start).through(crate::dates::YearMonth::of(end))
}

fn generate_articles(
    config: &SyntheticConfig,
    universe: &Universe,
    rng: &mut ChaCha8Rng,
) -> Vec<Article> {
    let themes = [
        "reported quarterly results ahead of expectations",
        "announced a new product line",
        "faced supply chain pressure",
        "expanded into new markets",
        "named a new chief financial officer",
        "settled a regulatory inquiry",
    ];
    let mut articles = Vec::new();
    for month in months_between(config.start, config.end) {
        for entry in &universe.companies {
            let count = 2 + (rng.gen::<u32>() % 3) as usize;
            for k in 0..count {
                let day = 2 + (rng.gen::<u32>() % 25);
                let published =
                    NaiveDate::from_ymd_opt(month.year, month.month, day).expect("valid day");
                let theme = themes[rng.gen::<u32>() as usize % themes.len()];
                let missing = rng.gen::<f64>() < 0.1;
                let body = if missing {
                    String::new()
                } else {
                    format!(
                        "{} {theme} this month. Analysts watching {} noted trading volumes \
                         and sector positioning.",
                        entry.name, entry.ticker
                    )
                };
                articles.push(Article {
                    ticker_hint: Some(entry.ticker.clone()),
                    published,
                    url: format!("https://news.example.com/{}/{}/{}", entry.ticker, month, k),
                    title: format!("{} {}", entry.name, theme),
                    body,
                });
            }
        }
        // One macro piece per month that names no company; relevance
        // filtering should drop it from every bundle.
        let day = 2 + (rng.gen::<u32>() % 25);
        articles.push(Article {
            ticker_hint: None,
            published: NaiveDate::from_ymd_opt(month.year, month.month, day).expect("valid day"),
            url: format!("https://news.example.com/macro/{month}"),
            title: "Rates and macro outlook".to_string(),
            body: "Central bank commentary dominated the tape this week.".to_string(),
        });
    }
    articles.sort_by(|a, b| (a.published, &a.url).cmp(&(b.published, &b.url)));
    articles
}

fn generate_analyst_csv(
    config: &SyntheticConfig,
    universe: &Universe,
    rng: &mut ChaCha8Rng,
) -> String {
    let firms = [
        "Morgan Stanley",
        "Barclays",
        "Wells Fargo",
        "Citigroup",
        "RBC Capital",
        "Goldman Sachs",
        "UBS",
        "Jefferies",
    ];
    // Buy-heavy vocabulary, matching how real feeds skew.
    let terms = [
        "Buy",
        "Overweight",
        "Outperform",
        "Moderate Buy",
        "Strong Buy",
        "Hold",
        "Neutral",
        "Market Perform",
        "Underweight",
        "Sell",
    ];
    let term_weights = [18u32, 16, 16, 12, 10, 14, 8, 3, 2, 1];
    let total_weight: u32 = term_weights.iter().sum();
    let mut csv = String::from("firm,ticker,date,action,term\n");
    for month in months_between(config.start, config.end) {
        for entry in &universe.companies {
            let events = 1 + (rng.gen::<u32>() % 2) as usize;
            for _ in 0..events {
                let day = 2 + (rng.gen::<u32>() % 24);
                let date =
                    NaiveDate::from_ymd_opt(month.year, month.month, day).expect("valid day");
                let firm = firms[rng.gen::<u32>() as usize % firms.len()];
                let action = match rng.gen::<u32>() % 100 {
                    0..=75 => "maintain",
                    76..=82 => "reiterate",
                    83..=88 => "downgrade",
                    89..=94 => "upgrade",
                    _ => "initiate",
                };
                let mut pick = rng.gen::<u32>() % total_weight;
                let mut term = terms[0];
                for (t, w) in terms.iter().zip(term_weights) {
                    if pick < w {
                        term = t;
                        break;
                    }
                    pick -= w;
                }
                csv.push_str(&format!("{firm},{},{date},{action},{term}\n", entry.ticker));
            }
        }
    }
    csv
}

fn quarter_ends(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut ends = Vec::new();
    let mut year = start.year();
    let mut quarter = (start.month0() / 3) + 1;
    loop {
        let (month, day) = match quarter {
            1 => (3, 31),
            2 => (6, 30),
            3 => (9, 30),
            _ => (12, 31),
        };
        let date = NaiveDate::from_ymd_opt(year, month, day).expect("valid quarter end");
        if date > end {
            break;
        }
        if date >= start {
            ends.push(date);
        }
        quarter += 1;
        if quarter > 4 {
            quarter = 1;
            year += 1;
        }
    }
    ends
}

fn generate_fundamentals_csv(
    config: &SyntheticConfig,
    universe: &Universe,
    rng: &mut ChaCha8Rng,
) -> String {
    let mut csv = String::from("ticker,period_end,filing_date,metric,value\n");
    let shares = 1.0e8;
    for (i, entry) in universe.companies.iter().enumerate() {
        let base_revenue = 1.0e9 * (1.0 + i as f64);
        for (q, period_end) in quarter_ends(config.start, config.end).iter().enumerate() {
            let filing_date = *period_end + Duration::days(33 + (rng.gen::<i64>() % 7).abs());
            let growth = (1.0 + 0.02 + 0.01 * (rng.gen::<f64>() - 0.5)).powi(q as i32);
            let revenue = base_revenue * growth;
            let margin = 0.42 + 0.02 * (rng.gen::<f64>() - 0.5);
            let net_income = revenue * 0.10;
            let assets = revenue * 10.0;
            let liabilities = revenue * 5.5;
            let rows: [(&str, f64); 10] = [
                ("revenue", revenue),
                ("net_income", net_income),
                ("eps", net_income / shares),
                ("operating_cash_flow", revenue * 0.12),
                ("total_assets", assets),
                ("total_liabilities", liabilities),
                ("stockholders_equity", assets - liabilities),
                ("shares_outstanding", shares),
                ("return_on_assets", net_income / assets),
                ("gross_margin", margin),
            ];
            for (metric, value) in rows {
                csv.push_str(&format!(
                    "{},{period_end},{filing_date},{metric},{value:.6}\n",
                    entry.ticker
                ));
            }
        }
    }
    csv
}

/// Writes the dataset as the file set the CLI ingests.
pub fn write_to_dir(dataset: &SyntheticDataset, dir: &Path) -> std::io::Result<SyntheticFiles> {
    std::fs::create_dir_all(dir)?;
    let files = SyntheticFiles {
        universe: dir.join("universe.toml"),
        prices: dir.join("prices.csv"),
        news: dir.join("news.jsonl"),
        analyst: dir.join("analyst.csv"),
        fundamentals: dir.join("fundamentals.csv"),
    };

    let universe_toml = toml::to_string_pretty(&dataset.universe).map_err(std::io::Error::other)?;
    std::fs::write(&files.universe, universe_toml)?;

    let mut prices = std::io::BufWriter::new(std::fs::File::create(&files.prices)?);
    writeln!(prices, "date,ticker,adj_close")?;
    for instrument in dataset.prices.instrument_ids() {
        let series = dataset.prices.get(instrument).expect("listed instrument");
        for (date, price) in series.observations() {
            writeln!(prices, "{date},{instrument},{price:.6}")?;
        }
    }
    prices.flush()?;

    let mut news = std::io::BufWriter::new(std::fs::File::create(&files.news)?);
    for article in &dataset.articles {
        serde_json::to_writer(&mut news, article).map_err(std::io::Error::other)?;
        news.write_all(b"\n")?;
    }
    news.flush()?;

    std::fs::write(&files.analyst, &dataset.analyst_csv)?;
    std::fs::write(&files.fundamentals, &dataset.fundamentals_csv)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let config = SyntheticConfig {
            companies: 4,
            sectors: 2,
            ..Default::default()
        };
        let a = generate(&config);
        let b = generate(&config);
        assert_eq!(a.analyst_csv, b.analyst_csv);
        assert_eq!(a.fundamentals_csv, b.fundamentals_csv);
        assert_eq!(a.articles, b.articles);
        let series_a = a.prices.get("C00").unwrap();
        let series_b = b.prices.get("C00").unwrap();
        assert_eq!(
            series_a.observations().collect::<Vec<_>>(),
            series_b.observations().collect::<Vec<_>>()
        );

        let different = generate(&SyntheticConfig { seed: 7, ..config });
        assert_ne!(a.analyst_csv, different.analyst_csv);
    }

    #[test]
    fn dataset_has_expected_shape() {
        let config = SyntheticConfig {
            companies: 6,
            sectors: 2,
            ..Default::default()
        };
        let data = generate(&config);
        assert_eq!(data.universe.companies.len(), 6);
        // 6 companies + 2 sector indexes + 1 market index.
        assert_eq!(data.prices.len(), 9);
        assert!(data.prices.contains(MARKET_INDEX_ID));
        assert!(data.prices.contains("IDX_S0"));
        // Everything the universe references has prices.
        for entry in &data.universe.companies {
            assert!(data.prices.contains(&entry.ticker));
        }
        // Drift ordering: the last company should end well above its start
        // relative to the first (persistent momentum).
        let first = data.prices.get("C00").unwrap();
        let last = data.prices.get("C05").unwrap();
        let growth = |s: &PriceSeries| {
            let (_, p0) = s.observations().next().unwrap();
            (s.observations().last().unwrap().1) / p0
        };
        assert!(growth(last) > growth(first));
    }

    #[test]
    fn files_roundtrip_through_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let config = SyntheticConfig {
            companies: 4,
            sectors: 2,
            end: NaiveDate::from_ymd_opt(2022, 6, 30).unwrap(),
            ..Default::default()
        };
        let data = generate(&config);
        let files = write_to_dir(&data, dir.path()).unwrap();

        let universe = Universe::load(&files.universe).unwrap();
        assert_eq!(universe.companies.len(), 4);
        let prices = PriceStore::load_csv(&files.prices).unwrap();
        assert_eq!(prices.len(), 7);
        let articles =
            crate::news::load_articles_jsonl(std::fs::File::open(&files.news).unwrap()).unwrap();
        assert!(!articles.is_empty());
        let ingest = crate::ratings::ingest_analyst_ratings(
            data.analyst_csv.as_bytes(),
            &crate::ratings::RatingVocabulary::default(),
        )
        .unwrap();
        assert!(ingest.rejected.is_empty());
        assert!(ingest.quarantined.is_empty());
        assert!(ingest.distribution.action_share["maintain"] > 0.5);
        let fundamentals = crate::fundamentals::ingest_fundamentals(
            data.fundamentals_csv.as_bytes(),
            "C01",
            NaiveDate::from_ymd_opt(2022, 6, 1).unwrap(),
            &crate::fundamentals::MetricCatalog::default(),
        )
        .unwrap();
        assert!(!fundamentals.table.quarters.is_empty());
        assert!(fundamentals.skipped_metrics.is_empty());
    }
}
