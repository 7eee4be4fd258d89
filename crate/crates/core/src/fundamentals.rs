//! Point-in-time quarterly filing metrics and their HTML rendering for
//! Fundamentals prompts.
//!
//! Visibility is gated by the filing date, not the fiscal period end: a
//! quarter's numbers are unknown until filed, so only filings with
//! filing_date strictly before the as-of date are eligible, and at most the
//! four most recent are kept. Missing metrics stay absent — never
//! zero-filled.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FundamentalsError {
    #[error("no filings for `{ticker}` before {as_of}")]
    NoFilings { ticker: String, as_of: NaiveDate },
    #[error("fundamentals csv, line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("metric catalog: {0}")]
    CatalogParse(#[from] toml::de::Error),
}

/// One metric's identity and one-line description (shown to the model in
/// the system prompt).
#[derive(Debug, Clone, Deserialize)]
pub struct MetricDef {
    pub name: String,
    pub display: String,
    pub description: String,
}

/// The configured metric set, in presentation order.
#[derive(Debug, Clone)]
pub struct MetricCatalog {
    metrics: Vec<MetricDef>,
    index: BTreeMap<String, usize>,
}

pub fn canonical_metric_name(name: &str) -> String {
    name.trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

impl Default for MetricCatalog {
    fn default() -> Self {
        let defaults = [
            (
                "revenue",
                "Revenue",
                "Total revenue recognized in the quarter.",
            ),
            (
                "net_income",
                "Net income",
                "Profit after all expenses and taxes for the quarter.",
            ),
            (
                "eps",
                "Earnings per share",
                "Net income divided by weighted average shares outstanding.",
            ),
            (
                "operating_cash_flow",
                "Operating cash flow",
                "Cash generated by core operations during the quarter.",
            ),
            (
                "total_assets",
                "Total assets",
                "Book value of everything the company owns at quarter end.",
            ),
            (
                "total_liabilities",
                "Total liabilities",
                "Book value of everything the company owes at quarter end.",
            ),
            (
                "stockholders_equity",
                "Stockholders' equity",
                "Total assets minus total liabilities at quarter end.",
            ),
            (
                "shares_outstanding",
                "Shares outstanding",
                "Common shares outstanding at quarter end.",
            ),
            (
                "return_on_assets",
                "Return on assets",
                "Net income divided by total assets, as a fraction.",
            ),
            (
                "gross_margin",
                "Gross margin",
                "Gross profit divided by revenue, as a fraction.",
            ),
        ];
        let metrics = defaults
            .into_iter()
            .map(|(name, display, description)| MetricDef {
                name: name.to_string(),
                display: display.to_string(),
                description: description.to_string(),
            })
            .collect();
        Self::from_metrics(metrics)
    }
}

#[derive(Deserialize)]
struct CatalogFile {
    metrics: Vec<MetricDef>,
}

impl MetricCatalog {
    pub fn from_metrics(metrics: Vec<MetricDef>) -> Self {
        let index = metrics
            .iter()
            .enumerate()
            .map(|(i, m)| (canonical_metric_name(&m.name), i))
            .collect();
        Self { metrics, index }
    }

    /// Loads a catalog from TOML (`[[metrics]] name/display/description`).
    pub fn from_toml(text: &str) -> Result<Self, FundamentalsError> {
        let file: CatalogFile = toml::from_str(text)?;
        Ok(Self::from_metrics(file.metrics))
    }

    pub fn load(path: &Path) -> Result<Self, FundamentalsError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, name: &str) -> Option<&MetricDef> {
        self.index
            .get(&canonical_metric_name(name))
            .map(|i| &self.metrics[*i])
    }

    pub fn order(&self, name: &str) -> Option<usize> {
        self.index.get(&canonical_metric_name(name)).copied()
    }

    pub fn metrics(&self) -> &[MetricDef] {
        &self.metrics
    }

    /// One definition per line, for embedding into system prompts.
    pub fn definitions_text(&self) -> String {
        self.metrics
            .iter()
            .map(|m| format!("- {}: {}", m.display, m.description))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// One selected quarterly filing.
#[derive(Debug, Clone, PartialEq)]
pub struct Quarter {
    /// Fiscal period label derived from the period end ("Q1 2024").
    pub label: String,
    pub period_end: NaiveDate,
    pub filing_date: NaiveDate,
    /// Canonical metric name -> value; absent metrics simply missing.
    pub metrics: BTreeMap<String, f64>,
}

/// Up to four quarters of fundamentals visible as of a date, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalsTable {
    pub ticker: String,
    pub as_of: NaiveDate,
    pub quarters: Vec<Quarter>,
    /// Canonical metric name -> one-line description, covering every metric
    /// present in any quarter.
    pub definitions: BTreeMap<String, String>,
}

impl FundamentalsTable {
    /// Latest filing date among the selected quarters; the table's maximum
    /// input data date for temporal audits.
    pub fn max_filing_date(&self) -> Option<NaiveDate> {
        self.quarters.iter().map(|q| q.filing_date).max()
    }

    /// Point-in-time invariants: at most 4 quarters, all strictly before
    /// as-of by both period end and filing date, definitions complete.
    fn check_invariants(&self) {
        assert!(self.quarters.len() <= 4, "more than 4 quarters selected");
        for quarter in &self.quarters {
            assert!(
                quarter.filing_date < self.as_of && quarter.period_end < self.as_of,
                "quarter {} postdates as-of {}",
                quarter.label,
                self.as_of
            );
            for metric in quarter.metrics.keys() {
                assert!(
                    self.definitions.contains_key(metric),
                    "metric `{metric}` has no definition entry"
                );
            }
        }
    }
}

fn quarter_label(period_end: NaiveDate) -> String {
    format!("Q{} {}", period_end.month().div_ceil(3), period_end.year())
}

#[derive(Debug, Deserialize)]
struct FilingRow {
    ticker: String,
    period_end: NaiveDate,
    filing_date: NaiveDate,
    metric: String,
    value: f64,
}

/// Result of [`ingest_fundamentals`]: the table plus any metric names that
/// were dropped for lacking a catalog definition.
#[derive(Debug)]
pub struct FundamentalsIngest {
    pub table: FundamentalsTable,
    pub skipped_metrics: Vec<String>,
}

/// Reads `ticker,period_end,filing_date,metric,value` rows and selects the
/// four most recent filings for `ticker` whose filing date precedes
/// `as_of`.
pub fn ingest_fundamentals<R: Read>(
    reader: R,
    ticker: &str,
    as_of: NaiveDate,
    catalog: &MetricCatalog,
) -> Result<FundamentalsIngest, FundamentalsError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    // (period_end, filing_date) identifies a filing.
    let mut filings: BTreeMap<(NaiveDate, NaiveDate), BTreeMap<String, f64>> = BTreeMap::new();
    let mut skipped: Vec<String> = Vec::new();

    for (idx, row) in csv_reader.deserialize::<FilingRow>().enumerate() {
        let row = row.map_err(|e| FundamentalsError::MalformedRow {
            line: idx + 2,
            reason: e.to_string(),
        })?;
        if row.ticker != ticker {
            continue;
        }
        // Filing-date gating prevents lookahead into unfiled quarters.
        if row.filing_date >= as_of || row.period_end >= as_of {
            continue;
        }
        let name = canonical_metric_name(&row.metric);
        if catalog.get(&name).is_none() {
            skipped.push(name);
            continue;
        }
        filings
            .entry((row.period_end, row.filing_date))
            .or_default()
            .insert(name, row.value);
    }

    if filings.is_empty() {
        return Err(FundamentalsError::NoFilings {
            ticker: ticker.to_string(),
            as_of,
        });
    }

    let mut selected: Vec<((NaiveDate, NaiveDate), BTreeMap<String, f64>)> =
        filings.into_iter().collect();
    // Most recently filed first, then keep the newest four.
    selected.sort_by_key(|((period_end, filing_date), _)| {
        std::cmp::Reverse((*filing_date, *period_end))
    });
    selected.truncate(4);
    selected.sort_by_key(|((period_end, _), _)| *period_end);

    let quarters: Vec<Quarter> = selected
        .into_iter()
        .map(|((period_end, filing_date), metrics)| Quarter {
            label: quarter_label(period_end),
            period_end,
            filing_date,
            metrics,
        })
        .collect();

    let mut definitions = BTreeMap::new();
    for quarter in &quarters {
        for name in quarter.metrics.keys() {
            let def = catalog.get(name).expect("uncataloged metrics were skipped");
            definitions.insert(name.clone(), def.description.clone());
        }
    }

    skipped.sort_unstable();
    skipped.dedup();

    let table = FundamentalsTable {
        ticker: ticker.to_string(),
        as_of,
        quarters,
        definitions,
    };
    table.check_invariants();
    Ok(FundamentalsIngest {
        table,
        skipped_metrics: skipped,
    })
}

/// Thousands-separated formatting; integral values lose the fraction,
/// others keep up to four fractional digits with trailing zeros trimmed.
pub fn format_metric_value(value: f64) -> String {
    let rounded = (value * 10_000.0).round() / 10_000.0;
    let negative = rounded < 0.0;
    let abs = rounded.abs();
    let int_part = abs.trunc() as u128;
    let mut int_str = int_part.to_string();
    let mut grouped = String::new();
    while int_str.len() > 3 {
        let tail = int_str.split_off(int_str.len() - 3);
        grouped = format!(",{tail}{grouped}");
    }
    grouped = format!("{int_str}{grouped}");
    let frac = abs.fract();
    let frac_str = if frac < 1e-9 {
        String::new()
    } else {
        let digits = format!("{:.4}", frac);
        let trimmed = digits.trim_start_matches("0.").trim_end_matches('0');
        format!(".{trimmed}")
    };
    format!("{}{grouped}{frac_str}", if negative { "-" } else { "" })
}

fn html_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Renders the table as deterministic HTML: metrics as rows in catalog
/// order, quarters as columns oldest to newest, absent cells as "N/A".
/// Identical tables render to identical bytes.
pub fn render_fundamentals_html(table: &FundamentalsTable, catalog: &MetricCatalog) -> String {
    table.check_invariants();

    // Metrics present in at least one quarter, in catalog order.
    let mut present: Vec<&str> = Vec::new();
    for quarter in &table.quarters {
        for name in quarter.metrics.keys() {
            if !present.contains(&name.as_str()) {
                present.push(name);
            }
        }
    }
    present.sort_by_key(|name| catalog.order(name).unwrap_or(usize::MAX));

    let mut html = String::new();
    html.push_str("<table>\n");
    html.push_str(&format!(
        "  <caption>Quarterly fundamentals: {} (as of {})</caption>\n",
        html_escape(&table.ticker),
        table.as_of
    ));
    html.push_str("  <thead>\n    <tr><th>Metric</th>");
    for quarter in &table.quarters {
        html.push_str(&format!("<th>{}</th>", html_escape(&quarter.label)));
    }
    html.push_str("</tr>\n  </thead>\n  <tbody>\n");
    for name in present {
        let display = catalog
            .get(name)
            .map(|m| m.display.clone())
            .unwrap_or_else(|| name.to_string());
        html.push_str(&format!("    <tr><td>{}</td>", html_escape(&display)));
        for quarter in &table.quarters {
            let cell = quarter
                .metrics
                .get(name)
                .map(|v| format_metric_value(*v))
                .unwrap_or_else(|| "N/A".to_string());
            html.push_str(&format!("<td>{cell}</td>"));
        }
        html.push_str("</tr>\n");
    }
    html.push_str("  </tbody>\n</table>");
    html
}
