//! Config-driven orchestration: plan the experiment grid, produce monthly
//! summaries and sentiment scores, run a method end to end against the
//! gateway, evaluate against quintile labels, and emit reports.
//!
//! Temporal hygiene is enforced here: snapshots are taken as of the day
//! before the rating date, news comes from the previous calendar month,
//! and fundamentals are gated by filing date — and a prompt whose maximum
//! input date reaches the rating date is refused before any gateway call.
//! Every persisted record stores that maximum input date so the discipline
//! is auditable after the fact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::{YearMonth, HORIZONS_MONTHS};
use crate::evaluation::{
    build_report, CorrelationPair, EvaluationReport, MethodEvaluationInput, ScoredPrediction,
};
use crate::fundamentals::{ingest_fundamentals, FundamentalsError, MetricCatalog};
use crate::gateway::{
    sha256_hex, verify_dates_cove, ChatBackend, CoveOutcome, Gateway, GatewayError, HttpBackend,
    HttpBackendConfig, PredictionRecord, RequestParams, SeededBackend,
};
use crate::labeler::{label_universe, LabelError, LabelMode, LabelSet};
use crate::market::{
    build_technical_snapshot, equal_weight_composite, MarketError, PriceSeries, PriceStore,
    Universe,
};
use crate::news::{
    aggregate_monthly, filter_relevant_articles, load_articles_jsonl, score_sentiment, summarize,
    Article, NewsError, NewsScope,
};
use crate::prompting::{
    MethodKind, NewsInput, PromptBuilder, PromptContext, PromptError, PromptTemplates,
    SentimentInput,
};
use crate::ratings::{
    ingest_analyst_ratings, AnalystIngest, OrdinalRating, RatingVocabulary, RatingsError,
};
use crate::store::{
    PredictionStatus, PredictionStore, SentimentStore, StoreError, StoredPrediction, SummaryStore,
    PREDICTION_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config: {0}")]
    Config(String),
    #[error("empty universe")]
    EmptyUniverse,
    #[error("empty date range")]
    EmptyDateRange,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Ratings(#[from] RatingsError),
    #[error(transparent)]
    News(#[from] NewsError),
    #[error(transparent)]
    Fundamentals(#[from] FundamentalsError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataPaths {
    pub universe: PathBuf,
    pub prices: PathBuf,
    #[serde(default)]
    pub news: Option<PathBuf>,
    #[serde(default)]
    pub analyst_ratings: Option<PathBuf>,
    #[serde(default)]
    pub fundamentals: Option<PathBuf>,
    #[serde(default)]
    pub metric_definitions: Option<PathBuf>,
}

fn default_horizons() -> Vec<u32> {
    HORIZONS_MONTHS.to_vec()
}

fn default_true() -> bool {
    true
}

fn default_max_roll_days() -> i64 {
    crate::market::DEFAULT_MAX_ROLL_DAYS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub method: MethodKind,
    pub start_month: YearMonth,
    pub end_month: YearMonth,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<u32>,
    #[serde(default = "default_true")]
    pub few_shot: bool,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_max_roll_days")]
    pub max_roll_days: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

fn default_model_id() -> String {
    "gpt-4-32k".to_string()
}

fn default_max_output_tokens() -> u32 {
    1024
}

fn default_max_retries() -> u32 {
    3
}

fn default_concurrency() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_context_budget() -> usize {
    28_000
}

fn default_api_key_env() -> String {
    "LLM_API_KEY".to_string()
}

fn default_cove_retries() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewaySettings {
    pub backend: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default = "default_model_id")]
    pub model_id: String,
    /// Sampling temperature; 0 keeps runs as deterministic as the backend
    /// allows.
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_context_budget")]
    pub context_budget_tokens: usize,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Extra round trips allowed when a response fails parsing or the
    /// date verification, before the cell is excluded.
    #[serde(default = "default_cove_retries")]
    pub cove_retries: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawConfig {
    data: DataPaths,
    experiment: ExperimentSettings,
    gateway: GatewaySettings,
    #[serde(default)]
    vocabulary: BTreeMap<String, i8>,
    #[serde(default)]
    prompts: PromptsSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct PromptsSection {
    #[serde(default)]
    template_dir: Option<PathBuf>,
}

/// A loaded, validated experiment configuration. The resume digest is
/// computed over the config as written (minus the output directory), so
/// identical config files agree on it regardless of where they live.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: DataPaths,
    pub experiment: ExperimentSettings,
    pub gateway: GatewaySettings,
    pub vocabulary_extra: BTreeMap<String, i8>,
    pub template_dir: Option<PathBuf>,
    digest: String,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, RunnerError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        Self::from_raw(raw, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    fn from_raw(raw: RawConfig, base_dir: &Path) -> Result<Self, RunnerError> {
        let experiment = &raw.experiment;
        if experiment.start_month > experiment.end_month {
            return Err(RunnerError::Config(format!(
                "start_month {} after end_month {}",
                experiment.start_month, experiment.end_month
            )));
        }
        if experiment.horizons.is_empty() {
            return Err(RunnerError::Config(
                "horizons must be non-empty".to_string(),
            ));
        }
        for h in &experiment.horizons {
            if !HORIZONS_MONTHS.contains(h) {
                return Err(RunnerError::Config(format!(
                    "horizon {h} not in supported set {HORIZONS_MONTHS:?}"
                )));
            }
        }
        if raw.gateway.backend == BackendKind::Http && raw.gateway.base_url.is_none() {
            return Err(RunnerError::Config(
                "http backend requires base_url".to_string(),
            ));
        }

        // Digest over the config as written, minus the output directory.
        let digest = {
            let mut for_digest = raw.clone();
            for_digest.experiment.output_dir = PathBuf::new();
            sha256_hex(&serde_json::to_vec(&for_digest).expect("config serializes"))
        };

        let rebase = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base_dir.join(p)
            }
        };
        let mut data = raw.data;
        data.universe = rebase(&data.universe);
        data.prices = rebase(&data.prices);
        data.news = data.news.as_ref().map(rebase);
        data.analyst_ratings = data.analyst_ratings.as_ref().map(rebase);
        data.fundamentals = data.fundamentals.as_ref().map(rebase);
        data.metric_definitions = data.metric_definitions.as_ref().map(rebase);
        let mut experiment = raw.experiment;
        experiment.output_dir = rebase(&experiment.output_dir);
        let template_dir = raw.prompts.template_dir.as_ref().map(rebase);

        Ok(Self {
            data,
            experiment,
            gateway: raw.gateway,
            vocabulary_extra: raw.vocabulary,
            template_dir,
            digest,
        })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Rating months, first to last.
    pub fn months(&self) -> Vec<YearMonth> {
        self.experiment
            .start_month
            .through(self.experiment.end_month)
    }

    /// Resume key for one (company, rating date) cell.
    pub fn cell_key(&self, company_id: &str, rating_date: NaiveDate) -> String {
        sha256_hex(format!("{}|{company_id}|{rating_date}", self.digest).as_bytes())
    }

    pub fn request_params(&self) -> RequestParams {
        RequestParams {
            model_id: self.gateway.model_id.clone(),
            temperature: self.gateway.temperature,
            max_output_tokens: self.gateway.max_output_tokens,
        }
    }
}

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

/// One planned query cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedCell {
    pub company_id: String,
    /// First calendar day of the rating month.
    pub rating_date: NaiveDate,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub cells: Vec<PlannedCell>,
    /// cells x horizons: the rating count the grid will produce.
    pub expected_ratings: usize,
}

/// Cartesian product of universe tickers and first-of-month dates in the
/// configured range.
pub fn plan_experiment(
    config: &ExperimentConfig,
    universe: &Universe,
) -> Result<ExperimentPlan, RunnerError> {
    if universe.companies.is_empty() {
        return Err(RunnerError::EmptyUniverse);
    }
    let months = config.months();
    if months.is_empty() {
        return Err(RunnerError::EmptyDateRange);
    }
    let mut cells = Vec::with_capacity(months.len() * universe.companies.len());
    for month in &months {
        for entry in &universe.companies {
            cells.push(PlannedCell {
                company_id: entry.ticker.clone(),
                rating_date: month.first_day(),
            });
        }
    }
    let expected_ratings = cells.len() * config.experiment.horizons.len();
    Ok(ExperimentPlan {
        cells,
        expected_ratings,
    })
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// What a predict run did, cell by cell. Deliberately free of wall-clock
/// data so identical runs produce identical manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config_digest: String,
    pub method: String,
    pub planned_cells: usize,
    pub expected_ratings: usize,
    /// Cells skipped because a persisted row already existed.
    pub resumed_cells: usize,
    pub completed_ok: usize,
    pub excluded_date_mismatch: usize,
    pub excluded_malformed: usize,
    /// Non-persisted per-cell failures by category; retried on rerun.
    pub failed_cells: BTreeMap<String, usize>,
    pub gateway_calls: u64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| RunnerError::Config(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

/// Loaded inputs plus the prompt machinery for one experiment.
pub struct Runner {
    pub config: ExperimentConfig,
    pub universe: Universe,
    pub prices: PriceStore,
    articles: Vec<Article>,
    analyst: Option<AnalystIngest>,
    /// Per-ticker fundamentals CSV slices (header included), split once.
    fundamentals_by_ticker: BTreeMap<String, String>,
    builder: PromptBuilder,
    market_series: PriceSeries,
}

/// Outcome of one cell attempt that is not persisted; the category keys
/// the manifest's failure counts.
struct CellSkip {
    category: &'static str,
    detail: String,
}

enum CellResult {
    Persist(Box<StoredPrediction>),
    Skip(CellSkip),
}

impl Runner {
    pub fn load(config: ExperimentConfig) -> Result<Self, RunnerError> {
        let universe = Universe::load(&config.data.universe)?;
        if universe.companies.is_empty() {
            return Err(RunnerError::EmptyUniverse);
        }
        let prices = PriceStore::load_csv(&config.data.prices)?;
        for entry in &universe.companies {
            // Sector indexes must resolve; companies without prices fail
            // per cell, not fatally.
            universe.sector_index_id(&entry.sector)?;
        }

        let articles = match &config.data.news {
            Some(path) => {
                let file = std::fs::File::open(path).map_err(io_err(path))?;
                load_articles_jsonl(file)?
            }
            None => Vec::new(),
        };

        let mut vocabulary = RatingVocabulary::default();
        vocabulary.extend(
            config
                .vocabulary_extra
                .iter()
                .map(|(k, v)| (k.as_str(), *v)),
        )?;

        let analyst = match &config.data.analyst_ratings {
            Some(path) => {
                let file = std::fs::File::open(path).map_err(io_err(path))?;
                Some(ingest_analyst_ratings(file, &vocabulary)?)
            }
            None => None,
        };

        let fundamentals_by_ticker = match &config.data.fundamentals {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                split_fundamentals_by_ticker(&text)
            }
            None => BTreeMap::new(),
        };

        let catalog = match &config.data.metric_definitions {
            Some(path) => MetricCatalog::load(path)?,
            None => MetricCatalog::default(),
        };
        let templates = match &config.template_dir {
            Some(dir) => PromptTemplates::load_overrides(dir)?,
            None => PromptTemplates::default(),
        };
        let builder = PromptBuilder::new(templates, vocabulary, catalog);

        let market_series =
            if universe.market_index.is_empty() || !prices.contains(&universe.market_index) {
                // No market index series: equal-weight composite of the
                // universe stands in.
                let constituents: Vec<&PriceSeries> = universe
                    .companies
                    .iter()
                    .filter_map(|e| prices.get(&e.ticker).ok())
                    .collect();
                equal_weight_composite("EW_MARKET", &constituents)?
            } else {
                prices.get(&universe.market_index)?.clone()
            };

        Ok(Self {
            config,
            universe,
            prices,
            articles,
            analyst,
            fundamentals_by_ticker,
            builder,
            market_series,
        })
    }

    pub fn analyst(&self) -> Option<&AnalystIngest> {
        self.analyst.as_ref()
    }

    pub fn builder(&self) -> &PromptBuilder {
        &self.builder
    }

    pub fn plan(&self) -> Result<ExperimentPlan, RunnerError> {
        plan_experiment(&self.config, &self.universe)
    }

    fn output_path(&self, name: &str) -> PathBuf {
        self.config.experiment.output_dir.join(name)
    }

    fn ensure_output_dir(&self) -> Result<(), RunnerError> {
        let dir = &self.config.experiment.output_dir;
        std::fs::create_dir_all(dir).map_err(io_err(dir))
    }

    /// The gateway the config describes, with transcripts appended under
    /// the output directory.
    pub fn default_gateway(&self) -> Result<Gateway, RunnerError> {
        self.ensure_output_dir()?;
        let backend: Box<dyn ChatBackend> = match self.config.gateway.backend {
            BackendKind::Mock => Box::new(SeededBackend::new(self.config.experiment.seed)),
            BackendKind::Http => {
                let settings = &self.config.gateway;
                let api_key = std::env::var(&settings.api_key_env).ok();
                Box::new(HttpBackend::new(HttpBackendConfig {
                    base_url: settings.base_url.clone().expect("validated at load"),
                    api_key,
                    timeout: std::time::Duration::from_secs(settings.timeout_secs),
                    max_retries: settings.max_retries,
                    ..HttpBackendConfig::default()
                }))
            }
        };
        let path = self.output_path("transcripts.jsonl");
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        Ok(Gateway::new(backend).with_transcript(Box::new(file)))
    }

    /// Months whose news feeds the configured rating months (each rating
    /// month reads the previous month's summaries).
    fn summary_months(&self) -> Vec<YearMonth> {
        self.config
            .experiment
            .start_month
            .prev()
            .through(self.config.experiment.end_month.prev())
    }

    fn relevant_company_articles(&self, entry: &crate::market::UniverseEntry) -> Vec<Article> {
        // Articles attributed to another ticker are excluded up front;
        // unattributed ones go through relevance matching like the rest.
        let candidates: Vec<Article> = self
            .articles
            .iter()
            .filter(|a| match &a.ticker_hint {
                Some(hint) => hint == &entry.ticker,
                None => true,
            })
            .cloned()
            .collect();
        filter_relevant_articles(&candidates, &entry.name, &entry.aliases)
    }

    /// Produces company and sector summaries for every month the
    /// experiment needs. Idempotent: bundles already summarized (same
    /// digest) are skipped.
    pub fn summarize_all(&self, gateway: &Gateway) -> Result<SummarizeOutcome, RunnerError> {
        self.ensure_output_dir()?;
        let mut store = SummaryStore::open(&self.output_path("summaries.jsonl"))?;
        let params = self.config.request_params();
        let budget = self.config.gateway.context_budget_tokens;
        let mut outcome = SummarizeOutcome::default();

        let months = self.summary_months();
        // Company bundles, then sector bundles pooling constituents.
        let mut sector_articles: BTreeMap<(String, YearMonth), Vec<Article>> = BTreeMap::new();
        for entry in &self.universe.companies {
            let relevant = self.relevant_company_articles(entry);
            for month in &months {
                let bundle =
                    aggregate_monthly(&relevant, NewsScope::Company(entry.ticker.clone()), *month);
                sector_articles
                    .entry((entry.sector.clone(), *month))
                    .or_default()
                    .extend(bundle.articles.iter().cloned());
                if bundle.articles.is_empty() {
                    outcome.empty_bundles += 1;
                    continue;
                }
                if store.is_current(&bundle.scope, &month.to_string(), &bundle.digest()) {
                    outcome.skipped += 1;
                    continue;
                }
                let summary = summarize(&bundle, gateway, &params, budget)?;
                store.append(summary)?;
                outcome.summarized += 1;
            }
        }
        for ((sector, month), articles) in sector_articles {
            let bundle = aggregate_monthly(&articles, NewsScope::Sector(sector), month);
            if bundle.articles.is_empty() {
                outcome.empty_bundles += 1;
                continue;
            }
            if store.is_current(&bundle.scope, &month.to_string(), &bundle.digest()) {
                outcome.skipped += 1;
                continue;
            }
            let summary = summarize(&bundle, gateway, &params, budget)?;
            store.append(summary)?;
            outcome.summarized += 1;
        }
        Ok(outcome)
    }

    /// Scores sentiment for every stored summary the experiment months
    /// need. Idempotent by summary digest.
    pub fn score_sentiment_all(&self, gateway: &Gateway) -> Result<SummarizeOutcome, RunnerError> {
        self.ensure_output_dir()?;
        let summaries = SummaryStore::open(&self.output_path("summaries.jsonl"))?;
        let mut store = SentimentStore::open(&self.output_path("sentiment.jsonl"))?;
        let params = self.config.request_params();
        let mut outcome = SummarizeOutcome::default();
        for summary in summaries.values() {
            if store.is_current(
                &summary.scope,
                &summary.month.to_string(),
                &summary.source_digest,
            ) {
                outcome.skipped += 1;
                continue;
            }
            let score = score_sentiment(summary, gateway, &params)?;
            store.append(score)?;
            outcome.summarized += 1;
        }
        Ok(outcome)
    }

    fn snapshot_for(
        &self,
        company_id: &str,
        sector: &str,
        rating_date: NaiveDate,
    ) -> Result<crate::market::TechnicalSnapshot, RunnerError> {
        let company = self.prices.get(company_id)?;
        let sector_series = self.prices.get(self.universe.sector_index_id(sector)?)?;
        // Day before the rating date: the latest close available when the
        // rating is issued at the start of that day.
        let as_of = rating_date - Duration::days(1);
        Ok(build_technical_snapshot(
            company,
            &self.market_series,
            sector_series,
            as_of,
        )?)
    }

    fn cell_context(
        &self,
        entry: &crate::market::UniverseEntry,
        rating_date: NaiveDate,
        summaries: &Option<SummaryStore>,
        sentiment: &Option<SentimentStore>,
    ) -> Result<PromptContext, CellSkip> {
        let method = self.config.experiment.method;
        let prev_month = YearMonth::of(rating_date).prev().to_string();
        let mut context = PromptContext {
            few_shot: self.config.experiment.few_shot,
            ..Default::default()
        };

        if method.takes_news_summaries() {
            let store = summaries.as_ref().ok_or(CellSkip {
                category: "missing_summary",
                detail: "summaries store not available".to_string(),
            })?;
            let company_scope = NewsScope::Company(entry.ticker.clone());
            let sector_scope = NewsScope::Sector(entry.sector.clone());
            let company = store.get(&company_scope, &prev_month).cloned();
            let sector = store.get(&sector_scope, &prev_month).cloned();
            match (company, sector) {
                (Some(company), Some(sector)) => {
                    context.news = Some(NewsInput { company, sector });
                }
                _ => {
                    return Err(CellSkip {
                        category: "missing_summary",
                        detail: format!("{} or {} for {prev_month}", entry.ticker, entry.sector),
                    })
                }
            }
        }
        if method.takes_sentiment_scores() {
            let store = sentiment.as_ref().ok_or(CellSkip {
                category: "missing_sentiment",
                detail: "sentiment store not available".to_string(),
            })?;
            let company_scope = NewsScope::Company(entry.ticker.clone());
            let sector_scope = NewsScope::Sector(entry.sector.clone());
            let company = store.get(&company_scope, &prev_month).cloned();
            let sector = store.get(&sector_scope, &prev_month).cloned();
            match (company, sector) {
                (Some(company), Some(sector)) => {
                    context.sentiment = Some(SentimentInput { company, sector });
                }
                _ => {
                    return Err(CellSkip {
                        category: "missing_sentiment",
                        detail: format!("{} or {} for {prev_month}", entry.ticker, entry.sector),
                    })
                }
            }
        }
        if method.takes_fundamentals() {
            let csv = self
                .fundamentals_by_ticker
                .get(&entry.ticker)
                .ok_or(CellSkip {
                    category: "missing_fundamentals",
                    detail: format!("no filings for {}", entry.ticker),
                })?;
            let ingest = ingest_fundamentals(
                csv.as_bytes(),
                &entry.ticker,
                rating_date,
                self.builder.catalog(),
            )
            .map_err(|e| CellSkip {
                category: "missing_fundamentals",
                detail: e.to_string(),
            })?;
            context.fundamentals = Some(ingest.table);
        }
        Ok(context)
    }

    fn run_cell(
        &self,
        gateway: &Gateway,
        cell: &PlannedCell,
        summaries: &Option<SummaryStore>,
        sentiment: &Option<SentimentStore>,
    ) -> CellResult {
        let entry = self
            .universe
            .companies
            .iter()
            .find(|e| e.ticker == cell.company_id)
            .expect("planned cells come from the universe");
        let method = self.config.experiment.method;

        let snapshot = match self.snapshot_for(&cell.company_id, &entry.sector, cell.rating_date) {
            Ok(s) => s,
            Err(e) => {
                let category = match &e {
                    RunnerError::Market(MarketError::InsufficientHistory { .. }) => {
                        "insufficient_history"
                    }
                    RunnerError::Market(MarketError::NoTradingDate { .. }) => "no_trading_date",
                    RunnerError::Market(MarketError::UnknownInstrument(_)) => "missing_prices",
                    _ => "market_error",
                };
                return CellResult::Skip(CellSkip {
                    category,
                    detail: e.to_string(),
                });
            }
        };

        let context = match self.cell_context(entry, cell.rating_date, summaries, sentiment) {
            Ok(c) => c,
            Err(skip) => return CellResult::Skip(skip),
        };

        let bundle = match self.builder.build_user_prompt(
            method,
            &cell.company_id,
            cell.rating_date,
            &snapshot,
            &context,
        ) {
            Ok(b) => b,
            Err(e) => {
                return CellResult::Skip(CellSkip {
                    category: "prompt_error",
                    detail: e.to_string(),
                })
            }
        };

        // Hard temporal gate: nothing dated on/after the rating date may
        // reach the backend.
        if let Some(max_date) = bundle.max_input_date {
            if max_date >= cell.rating_date {
                return CellResult::Skip(CellSkip {
                    category: "temporal_hygiene",
                    detail: format!(
                        "max input date {max_date} not before rating date {}",
                        cell.rating_date
                    ),
                });
            }
        }

        let params = self.config.request_params();
        let request = match params.request(&bundle.system_text, &bundle.user_text) {
            Ok(r) => r,
            Err(e) => {
                return CellResult::Skip(CellSkip {
                    category: "prompt_error",
                    detail: e.to_string(),
                })
            }
        };

        let input_sentiment = context
            .sentiment
            .as_ref()
            .map(|s| (s.company.score, s.sector.score));
        let mut row = StoredPrediction {
            schema_version: PREDICTION_SCHEMA_VERSION,
            key: self.config.cell_key(&cell.company_id, cell.rating_date),
            config_digest: self.config.digest().to_string(),
            company_id: cell.company_id.clone(),
            rating_date: cell.rating_date,
            method,
            status: PredictionStatus::Ok,
            attempts: 0,
            input_digest: bundle.input_digest.clone(),
            max_input_date: bundle.max_input_date,
            input_sentiment,
            record: None,
            cove_mismatch: None,
            error: None,
        };

        let attempts_allowed = 1 + self.config.gateway.cove_retries;
        for _ in 0..attempts_allowed {
            row.attempts += 1;
            let response = match gateway.complete(&request) {
                Ok(r) => r,
                Err(e) => {
                    return CellResult::Skip(CellSkip {
                        category: "gateway_error",
                        detail: e.to_string(),
                    })
                }
            };
            match crate::gateway::parse_prediction(
                &response,
                &cell.company_id,
                cell.rating_date,
                &bundle.expected_horizon_dates,
                self.builder.vocabulary(),
            ) {
                Ok(record) => match verify_dates_cove(&record, cell.rating_date) {
                    CoveOutcome::Ok => {
                        row.status = PredictionStatus::Ok;
                        row.record = Some(record);
                        row.cove_mismatch = None;
                        row.error = None;
                        return CellResult::Persist(Box::new(row));
                    }
                    CoveOutcome::DateMismatch(horizons) => {
                        row.status = PredictionStatus::DateMismatch;
                        row.record = Some(record);
                        row.cove_mismatch = Some(horizons);
                        row.error = None;
                    }
                },
                Err(e) => {
                    row.status = PredictionStatus::Malformed;
                    row.record = None;
                    row.cove_mismatch = None;
                    row.error = Some(e.to_string());
                }
            }
        }
        // Out of retries: persist the flagged row so reruns do not repeat
        // the spend; evaluation excludes it.
        CellResult::Persist(Box::new(row))
    }

    /// Runs the experiment grid: one gateway query per (company, month)
    /// cell not already in the prediction store. Results are appended in
    /// planned order regardless of worker interleaving.
    pub fn predict(&self, gateway: &Gateway) -> Result<RunManifest, RunnerError> {
        self.ensure_output_dir()?;
        let plan = self.plan()?;
        let method = self.config.experiment.method;

        let summaries = if method.takes_news_summaries() {
            Some(SummaryStore::open(&self.output_path("summaries.jsonl"))?)
        } else {
            None
        };
        let sentiment = if method.takes_sentiment_scores() {
            Some(SentimentStore::open(&self.output_path("sentiment.jsonl"))?)
        } else {
            None
        };

        let mut store = PredictionStore::open(&self.output_path("predictions.jsonl"))?;
        let mut manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            config_digest: self.config.digest().to_string(),
            method: method.as_str().to_string(),
            planned_cells: plan.cells.len(),
            expected_ratings: plan.expected_ratings,
            ..Default::default()
        };

        // Batch by rating month: deterministic append order with
        // incremental persistence.
        let mut by_month: BTreeMap<NaiveDate, Vec<&PlannedCell>> = BTreeMap::new();
        for cell in &plan.cells {
            by_month.entry(cell.rating_date).or_default().push(cell);
        }

        for (_, cells) in by_month {
            let pending: Vec<&PlannedCell> = cells
                .into_iter()
                .filter(|cell| {
                    let key = self.config.cell_key(&cell.company_id, cell.rating_date);
                    if store.contains(&key) {
                        manifest.resumed_cells += 1;
                        false
                    } else {
                        true
                    }
                })
                .collect();
            if pending.is_empty() {
                continue;
            }
            let results = self.run_batch(gateway, &pending, &summaries, &sentiment);
            for result in results {
                match result {
                    CellResult::Persist(row) => {
                        match row.status {
                            PredictionStatus::Ok => manifest.completed_ok += 1,
                            PredictionStatus::DateMismatch => manifest.excluded_date_mismatch += 1,
                            PredictionStatus::Malformed => manifest.excluded_malformed += 1,
                        }
                        store.append(*row)?;
                    }
                    CellResult::Skip(skip) => {
                        log::warn!("cell skipped ({}): {}", skip.category, skip.detail);
                        *manifest
                            .failed_cells
                            .entry(skip.category.to_string())
                            .or_default() += 1;
                    }
                }
            }
        }

        manifest.gateway_calls = gateway.calls();
        let manifest_path = self.output_path("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&manifest_path, text + "\n").map_err(io_err(&manifest_path))?;
        Ok(manifest)
    }

    /// Runs one batch of cells across up to `concurrency` workers; the
    /// returned results are in input order.
    fn run_batch(
        &self,
        gateway: &Gateway,
        pending: &[&PlannedCell],
        summaries: &Option<SummaryStore>,
        sentiment: &Option<SentimentStore>,
    ) -> Vec<CellResult> {
        let workers = self.config.gateway.concurrency.clamp(1, pending.len());
        if workers == 1 {
            return pending
                .iter()
                .map(|cell| self.run_cell(gateway, cell, summaries, sentiment))
                .collect();
        }
        let slots: Vec<Mutex<Option<CellResult>>> =
            (0..pending.len()).map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= pending.len() {
                        break;
                    }
                    let result = self.run_cell(gateway, pending[i], summaries, sentiment);
                    *slots[i].lock().expect("slot lock") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().expect("slot lock").expect("slot filled"))
            .collect()
    }

    /// Scores the persisted predictions (and analyst events, when a feed
    /// is configured) against quintile labels at every configured horizon
    /// and mode.
    pub fn evaluate(&self) -> Result<EvaluationReport, RunnerError> {
        let store = PredictionStore::open(&self.output_path("predictions.jsonl"))?;
        let mut labels = LabelCache::new(self);

        let mut scored = Vec::new();
        let mut issued: Vec<OrdinalRating> = Vec::new();
        let mut exclusions: BTreeMap<String, u64> = BTreeMap::new();
        let mut sentiment_pairs = SentimentPairMap::new();

        for row in store.rows() {
            if row.config_digest != self.config.digest() {
                *exclusions.entry("other_config".to_string()).or_default() += 1;
                continue;
            }
            match row.status {
                PredictionStatus::Ok => {}
                PredictionStatus::DateMismatch => {
                    *exclusions.entry("date_mismatch".to_string()).or_default() += 1;
                    continue;
                }
                PredictionStatus::Malformed => {
                    *exclusions.entry("malformed".to_string()).or_default() += 1;
                    continue;
                }
            }
            let record = row.record.as_ref().expect("ok rows carry a record");
            for &horizon in &self.config.experiment.horizons {
                let Some(entry) = record.entry(horizon) else {
                    *exclusions
                        .entry("missing_horizon_entry".to_string())
                        .or_default() += 1;
                    continue;
                };
                issued.push(entry.rating);
                self.collect_sentiment_pairs(row, record, horizon, &mut sentiment_pairs);
                for mode in LabelMode::ALL {
                    match labels.get(row.rating_date, horizon, mode) {
                        Some(set) => match set.by_company().get(row.company_id.as_str()) {
                            Some(label) => scored.push(ScoredPrediction {
                                company_id: row.company_id.clone(),
                                rating_month: YearMonth::of(row.rating_date),
                                horizon_months: horizon,
                                mode,
                                predicted: entry.rating,
                                truth: label.ground_truth,
                            }),
                            None => {
                                *exclusions
                                    .entry("company_unlabeled".to_string())
                                    .or_default() += 1;
                            }
                        },
                        None => {
                            *exclusions
                                .entry("label_cross_section_unavailable".to_string())
                                .or_default() += 1;
                        }
                    }
                }
            }
        }

        let correlation_pairs: Vec<CorrelationPair> = sentiment_pairs
            .into_iter()
            .map(|((pair, horizon_months), (xs, ys))| CorrelationPair {
                pair,
                horizon_months,
                xs,
                ys,
            })
            .collect();

        let mut inputs = vec![MethodEvaluationInput {
            method: self.config.experiment.method.as_str().to_string(),
            scored,
            issued_ratings: issued,
            correlation_pairs,
            exclusions,
        }];
        if let Some(analyst) = &self.analyst {
            inputs.push(self.evaluate_analyst(analyst, &mut labels));
        }
        Ok(build_report(inputs))
    }

    fn collect_sentiment_pairs(
        &self,
        row: &StoredPrediction,
        record: &PredictionRecord,
        horizon: u32,
        pairs: &mut SentimentPairMap,
    ) {
        let rating = record.entry(horizon).map(|e| e.rating.value() as f64);
        let Some(rating) = rating else { return };
        if let Some((company_score, sector_score)) = row.input_sentiment {
            let entry = pairs
                .entry(("company_sentiment_vs_rating".to_string(), horizon))
                .or_default();
            entry.0.push(company_score as f64);
            entry.1.push(rating);
            let entry = pairs
                .entry(("sector_sentiment_vs_rating".to_string(), horizon))
                .or_default();
            entry.0.push(sector_score as f64);
            entry.1.push(rating);
        }
        if let Some(assessment) = record.sentiment_assessment {
            let entry = pairs
                .entry(("assessed_sentiment_vs_rating".to_string(), horizon))
                .or_default();
            entry.0.push(assessment.numeric());
            entry.1.push(rating);
        }
    }

    /// Analyst events lack target dates, so each event is scored at every
    /// configured horizon, exactly like the model's ratings.
    fn evaluate_analyst(
        &self,
        analyst: &AnalystIngest,
        labels: &mut LabelCache<'_>,
    ) -> MethodEvaluationInput {
        let window_start = self.config.experiment.start_month.first_day();
        let window_end = self.config.experiment.end_month.next().first_day();
        let mut scored = Vec::new();
        let mut issued = Vec::new();
        let mut exclusions: BTreeMap<String, u64> = BTreeMap::new();
        for event in &analyst.events {
            if event.date < window_start || event.date >= window_end {
                continue;
            }
            issued.push(event.rating);
            for &horizon in &self.config.experiment.horizons {
                for mode in LabelMode::ALL {
                    match labels.get(event.date, horizon, mode) {
                        Some(set) => match set.by_company().get(event.company_id.as_str()) {
                            Some(label) => scored.push(ScoredPrediction {
                                company_id: event.company_id.clone(),
                                rating_month: YearMonth::of(event.date),
                                horizon_months: horizon,
                                mode,
                                predicted: event.rating,
                                truth: label.ground_truth,
                            }),
                            None => {
                                *exclusions
                                    .entry("company_unlabeled".to_string())
                                    .or_default() += 1;
                            }
                        },
                        None => {
                            *exclusions
                                .entry("label_cross_section_unavailable".to_string())
                                .or_default() += 1;
                        }
                    }
                }
            }
        }
        *exclusions
            .entry("quarantined_terms".to_string())
            .or_default() += analyst.quarantined.len() as u64;
        *exclusions.entry("rejected_rows".to_string()).or_default() +=
            analyst.rejected.len() as u64;
        MethodEvaluationInput {
            method: "analyst".to_string(),
            scored,
            issued_ratings: issued,
            correlation_pairs: Vec::new(),
            exclusions,
        }
    }

    /// Writes evaluation.json under the output directory.
    pub fn write_evaluation(&self, report: &EvaluationReport) -> Result<PathBuf, RunnerError> {
        self.ensure_output_dir()?;
        let path = self.output_path("evaluation.json");
        let text = serde_json::to_string_pretty(report).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn read_evaluation(&self) -> Result<EvaluationReport, RunnerError> {
        let path = self.output_path("evaluation.json");
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RunnerError::Config(e.to_string()))
    }
}

fn split_fundamentals_by_ticker(csv_text: &str) -> BTreeMap<String, String> {
    let mut lines = csv_text.lines();
    let Some(header) = lines.next() else {
        return BTreeMap::new();
    };
    let mut by_ticker: BTreeMap<String, String> = BTreeMap::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let ticker = line
            .split(',')
            .next()
            .unwrap_or_default()
            .trim()
            .to_string();
        by_ticker
            .entry(ticker)
            .or_insert_with(|| format!("{header}\n"))
            .push_str(&format!("{line}\n"));
    }
    by_ticker
}

/// (x series, y series) per (pair name, horizon), accumulated for rank
/// correlation.
type SentimentPairMap = BTreeMap<(String, u32), (Vec<f64>, Vec<f64>)>;

/// Outcome counters for the summarize / score-sentiment passes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SummarizeOutcome {
    pub summarized: usize,
    pub skipped: usize,
    pub empty_bundles: usize,
}

/// Lazily computed label cross-sections keyed by (date, horizon, mode);
/// None marks a cross-section that could not be labeled (too few
/// companies with data).
struct LabelCache<'a> {
    runner: &'a Runner,
    cells: BTreeMap<(NaiveDate, u32, LabelMode), Option<LabelSet>>,
}

impl<'a> LabelCache<'a> {
    fn new(runner: &'a Runner) -> Self {
        Self {
            runner,
            cells: BTreeMap::new(),
        }
    }

    fn get(&mut self, date: NaiveDate, horizon: u32, mode: LabelMode) -> Option<&LabelSet> {
        let runner = self.runner;
        self.cells
            .entry((date, horizon, mode))
            .or_insert_with(|| {
                label_universe(
                    &runner.prices,
                    &runner.universe,
                    date,
                    horizon,
                    mode,
                    runner.config.experiment.max_roll_days,
                )
                .ok()
            })
            .as_ref()
    }
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

/// Writes the four report files into `dir`:
/// - `report.json` — the full evaluation report
/// - `monthly_mae.csv` — `method,month,horizon_months,mode,mae,n`
/// - `rating_distribution.csv` — `method,rating,count,proportion`
/// - `correlations.csv` — `method,pair,horizon_months,rho,n,note`
pub fn emit_report(report: &EvaluationReport, dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;
    written.push(json_path);

    let monthly_path = dir.join("monthly_mae.csv");
    {
        let mut out = String::from("method,month,horizon_months,mode,mae,n\n");
        for method in &report.methods {
            for cell in &method.monthly {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    method.method, cell.month, cell.horizon_months, cell.mode, cell.mae, cell.n
                ));
            }
        }
        std::fs::write(&monthly_path, out).map_err(io_err(&monthly_path))?;
    }
    written.push(monthly_path);

    let dist_path = dir.join("rating_distribution.csv");
    {
        let mut out = String::from("method,rating,count,proportion\n");
        for method in &report.methods {
            for (rating, count) in &method.distribution.counts {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    method.method, rating, count, method.distribution.proportions[rating]
                ));
            }
        }
        std::fs::write(&dist_path, out).map_err(io_err(&dist_path))?;
    }
    written.push(dist_path);

    let corr_path = dir.join("correlations.csv");
    {
        let mut out = String::from("method,pair,horizon_months,rho,n,note\n");
        for method in &report.methods {
            for corr in &method.correlations {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    method.method,
                    corr.pair,
                    corr.horizon_months,
                    corr.rho.map(|r| r.to_string()).unwrap_or_default(),
                    corr.n,
                    corr.note.clone().unwrap_or_default()
                ));
            }
        }
        std::fs::write(&corr_path, out).map_err(io_err(&corr_path))?;
    }
    written.push(corr_path);

    Ok(written)
}

// ---------------------------------------------------------------------------
// Ingest report
// ---------------------------------------------------------------------------

/// Validation summary of all configured inputs.
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub instruments: usize,
    pub companies: usize,
    pub articles: usize,
    pub analyst_events: usize,
    pub analyst_quarantined: usize,
    pub analyst_rejected: usize,
    pub analyst_action_share: BTreeMap<String, f64>,
    pub fundamentals_tickers: usize,
}

impl Runner {
    /// Validates inputs and writes ingest-report.json plus analyst
    /// quarantine/reject CSVs when an analyst feed is configured.
    pub fn ingest(&self) -> Result<IngestReport, RunnerError> {
        self.ensure_output_dir()?;
        let report = IngestReport {
            instruments: self.prices.len(),
            companies: self.universe.companies.len(),
            articles: self.articles.len(),
            analyst_events: self.analyst.as_ref().map_or(0, |a| a.events.len()),
            analyst_quarantined: self.analyst.as_ref().map_or(0, |a| a.quarantined.len()),
            analyst_rejected: self.analyst.as_ref().map_or(0, |a| a.rejected.len()),
            analyst_action_share: self
                .analyst
                .as_ref()
                .map(|a| a.distribution.action_share.clone())
                .unwrap_or_default(),
            fundamentals_tickers: self.fundamentals_by_ticker.len(),
        };
        let path = self.output_path("ingest-report.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
        if let Some(analyst) = &self.analyst {
            let quarantine_path = self.output_path("analyst-quarantine.csv");
            let file = std::fs::File::create(&quarantine_path).map_err(io_err(&quarantine_path))?;
            crate::ratings::write_failed_rows_csv(&analyst.quarantined, file)?;
            let rejects_path = self.output_path("analyst-rejects.csv");
            let file = std::fs::File::create(&rejects_path).map_err(io_err(&rejects_path))?;
            crate::ratings::write_failed_rows_csv(&analyst.rejected, file)?;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_text(method: &str) -> String {
        format!(
            r#"
            [data]
            universe = "universe.toml"
            prices = "prices.csv"

            [experiment]
            method = "{method}"
            start_month = "2023-01"
            end_month = "2023-06"
            output_dir = "out"

            [gateway]
            backend = "mock"
            "#
        )
    }

    #[test]
    fn config_defaults_and_validation() {
        let config =
            ExperimentConfig::from_toml(&config_text("vanilla"), Path::new("/base")).unwrap();
        assert_eq!(config.experiment.horizons, vec![1, 3, 6, 12, 18]);
        assert!(config.experiment.few_shot);
        assert_eq!(config.gateway.concurrency, 4);
        assert_eq!(config.gateway.timeout_secs, 120);
        assert_eq!(config.gateway.cove_retries, 1);
        assert_eq!(config.data.prices, Path::new("/base/prices.csv"));
        assert_eq!(config.months().len(), 6);

        let bad = config_text("vanilla").replace("2023-06", "2022-06");
        assert!(ExperimentConfig::from_toml(&bad, Path::new("/")).is_err());

        let bad = config_text("vanilla").replace("[gateway]", "[experiment.extra]\n[gateway]");
        let _ = bad; // unknown sections under experiment are a toml error anyway

        let bad = config_text("nonsense");
        assert!(ExperimentConfig::from_toml(&bad, Path::new("/")).is_err());
    }

    #[test]
    fn config_digest_ignores_output_dir_and_base_path() {
        let a = ExperimentConfig::from_toml(&config_text("vanilla"), Path::new("/x")).unwrap();
        let b = ExperimentConfig::from_toml(&config_text("vanilla"), Path::new("/y")).unwrap();
        assert_eq!(a.digest(), b.digest());

        let other_out = config_text("vanilla").replace("\"out\"", "\"elsewhere\"");
        let c = ExperimentConfig::from_toml(&other_out, Path::new("/x")).unwrap();
        assert_eq!(a.digest(), c.digest());

        let other_method = config_text("news");
        let d = ExperimentConfig::from_toml(&other_method, Path::new("/x")).unwrap();
        assert_ne!(a.digest(), d.digest());
    }

    #[test]
    fn http_backend_requires_base_url() {
        let text = config_text("vanilla").replace("backend = \"mock\"", "backend = \"http\"");
        assert!(ExperimentConfig::from_toml(&text, Path::new("/")).is_err());
        let with_url = text + "base_url = \"http://localhost:9000/v1\"\n";
        assert!(ExperimentConfig::from_toml(&with_url, Path::new("/")).is_ok());
    }

    fn universe_of(n: usize) -> Universe {
        Universe {
            market_index: "MKT".to_string(),
            sector_indexes: [("s".to_string(), "IDX".to_string())].into(),
            companies: (0..n)
                .map(|i| crate::market::UniverseEntry {
                    ticker: format!("T{i:03}"),
                    name: format!("T{i:03} Corp"),
                    aliases: vec![],
                    sector: "s".to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn plan_grid_matches_product_arithmetic() {
        let text = config_text("vanilla")
            .replace("2023-01", "2022-01")
            .replace("2023-06", "2024-06"); // 30 months
        let config = ExperimentConfig::from_toml(&text, Path::new("/")).unwrap();
        let plan = plan_experiment(&config, &universe_of(500)).unwrap();
        assert_eq!(plan.cells.len(), 15_000);
        assert_eq!(plan.expected_ratings, 75_000);

        // Small product: 5 companies x 3 months x 5 horizons.
        let text = config_text("vanilla").replace("2023-06", "2023-03");
        let config = ExperimentConfig::from_toml(&text, Path::new("/")).unwrap();
        let plan = plan_experiment(&config, &universe_of(5)).unwrap();
        assert_eq!(plan.cells.len(), 15);
        assert_eq!(plan.expected_ratings, 75);

        assert!(matches!(
            plan_experiment(&config, &universe_of(0)),
            Err(RunnerError::EmptyUniverse)
        ));
    }

    #[test]
    fn planned_cells_are_first_of_month_in_order() {
        let config = ExperimentConfig::from_toml(&config_text("vanilla"), Path::new("/")).unwrap();
        let plan = plan_experiment(&config, &universe_of(2)).unwrap();
        assert_eq!(
            plan.cells[0].rating_date,
            NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
        );
        assert_eq!(plan.cells[0].company_id, "T000");
        assert_eq!(plan.cells[1].company_id, "T001");
        assert_eq!(
            plan.cells[2].rating_date,
            NaiveDate::from_ymd_opt(2023, 2, 1).unwrap()
        );
    }

    #[test]
    fn fundamentals_splitter_keeps_header_per_ticker() {
        let csv = "ticker,period_end,filing_date,metric,value\n\
                   AAA,2022-03-31,2022-05-04,revenue,10\n\
                   BBB,2022-03-31,2022-05-05,revenue,20\n\
                   AAA,2022-06-30,2022-08-03,revenue,11\n";
        let split = split_fundamentals_by_ticker(csv);
        assert_eq!(split.len(), 2);
        assert!(split["AAA"].starts_with("ticker,"));
        assert_eq!(split["AAA"].lines().count(), 3);
        assert_eq!(split["BBB"].lines().count(), 2);
    }
}
