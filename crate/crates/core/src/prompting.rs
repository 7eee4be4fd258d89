//! Prompt assembly for the five rating methods.
//!
//! Every user prompt follows the same block order: task statement with the
//! five target dates, then the worked example (if enabled), then textual
//! context (news summaries or sentiment scores), then the fundamentals HTML
//! table, and finally the technical snapshot — textual information first,
//! numerical tables last. Templates are plain-text files with `{name}`
//! placeholders; the embedded defaults can be overridden per file from a
//! directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::{horizon_dates, HORIZONS_MONTHS};
use crate::fundamentals::{render_fundamentals_html, FundamentalsTable, MetricCatalog};
use crate::gateway::sha256_hex;
use crate::market::TechnicalSnapshot;
use crate::news::{estimate_tokens, SentimentScore, Summary};
use crate::ratings::RatingVocabulary;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("method {method} is missing required input: {input}")]
    MissingInput {
        method: MethodKind,
        input: &'static str,
    },
    #[error("method {method} does not take input: {input}")]
    ExtraInput {
        method: MethodKind,
        input: &'static str,
    },
    #[error("template `{template}` references unknown placeholder `{placeholder}`")]
    UnresolvedPlaceholder {
        template: &'static str,
        placeholder: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The five experiment methods; each decides which input blocks the user
/// prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Vanilla,
    News,
    Sentiment,
    Fundamentals,
    FundamentalsSentiment,
}

impl MethodKind {
    pub const ALL: [Self; 5] = [
        Self::Vanilla,
        Self::News,
        Self::Sentiment,
        Self::Fundamentals,
        Self::FundamentalsSentiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::News => "news",
            Self::Sentiment => "sentiment",
            Self::Fundamentals => "fundamentals",
            Self::FundamentalsSentiment => "fundamentals-sentiment",
        }
    }

    pub fn takes_news_summaries(self) -> bool {
        self == Self::News
    }

    pub fn takes_sentiment_scores(self) -> bool {
        matches!(self, Self::Sentiment | Self::FundamentalsSentiment)
    }

    pub fn takes_fundamentals(self) -> bool {
        matches!(self, Self::Fundamentals | Self::FundamentalsSentiment)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "vanilla" => Ok(Self::Vanilla),
            "news" => Ok(Self::News),
            "sentiment" => Ok(Self::Sentiment),
            "fundamentals" => Ok(Self::Fundamentals),
            "fundamentals-sentiment" | "fundamentals+sentiment" => Ok(Self::FundamentalsSentiment),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// The template set, one entry per file. Defaults are compiled in.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub system_base: String,
    pub system_sentiment_scale: String,
    pub system_fundamentals_definitions: String,
    pub user_main: String,
    pub output_instructions: String,
    pub few_shot_example: String,
    pub section_example: String,
    pub section_news: String,
    pub section_sentiment: String,
    pub section_fundamentals: String,
    pub section_snapshot: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system_base: include_str!("../templates/system_base.txt").to_string(),
            system_sentiment_scale: include_str!("../templates/system_sentiment_scale.txt")
                .to_string(),
            system_fundamentals_definitions: include_str!(
                "../templates/system_fundamentals_definitions.txt"
            )
            .to_string(),
            user_main: include_str!("../templates/user_main.txt").to_string(),
            output_instructions: include_str!("../templates/output_instructions.txt").to_string(),
            few_shot_example: include_str!("../templates/few_shot_example.txt").to_string(),
            section_example: include_str!("../templates/section_example.txt").to_string(),
            section_news: include_str!("../templates/section_news.txt").to_string(),
            section_sentiment: include_str!("../templates/section_sentiment.txt").to_string(),
            section_fundamentals: include_str!("../templates/section_fundamentals.txt").to_string(),
            section_snapshot: include_str!("../templates/section_snapshot.txt").to_string(),
        }
    }
}

impl PromptTemplates {
    /// Overrides any template for which a same-named `.txt` file exists in
    /// `dir`; the rest keep their defaults.
    pub fn load_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = Self::default();
        let mut slots: [(&str, &mut String); 11] = [
            ("system_base", &mut templates.system_base),
            (
                "system_sentiment_scale",
                &mut templates.system_sentiment_scale,
            ),
            (
                "system_fundamentals_definitions",
                &mut templates.system_fundamentals_definitions,
            ),
            ("user_main", &mut templates.user_main),
            ("output_instructions", &mut templates.output_instructions),
            ("few_shot_example", &mut templates.few_shot_example),
            ("section_example", &mut templates.section_example),
            ("section_news", &mut templates.section_news),
            ("section_sentiment", &mut templates.section_sentiment),
            ("section_fundamentals", &mut templates.section_fundamentals),
            ("section_snapshot", &mut templates.section_snapshot),
        ];
        for (name, slot) in slots.iter_mut() {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                **slot = std::fs::read_to_string(&path)?;
            }
        }
        Ok(templates)
    }
}

/// Single-pass placeholder substitution; unknown placeholders error and
/// substituted values are never re-scanned.
fn render(
    template_name: &'static str,
    template: &str,
    vars: &BTreeMap<&str, String>,
) -> Result<String, PromptError> {
    let re = Regex::new(r"\{([a-z0-9_]+)\}").expect("valid regex");
    let mut missing: Option<String> = None;
    let rendered = re.replace_all(template, |caps: &regex::Captures<'_>| {
        match vars.get(&caps[1]) {
            Some(value) => value.clone(),
            None => {
                missing.get_or_insert_with(|| caps[1].to_string());
                String::new()
            }
        }
    });
    match missing {
        Some(placeholder) => Err(PromptError::UnresolvedPlaceholder {
            template: template_name,
            placeholder,
        }),
        None => Ok(rendered.into_owned()),
    }
}

/// Company and sector news summaries for the News method.
#[derive(Debug, Clone)]
pub struct NewsInput {
    pub company: Summary,
    pub sector: Summary,
}

/// The company/sector sentiment score pair for the Sentiment methods.
#[derive(Debug, Clone)]
pub struct SentimentInput {
    pub company: SentimentScore,
    pub sector: SentimentScore,
}

/// Everything a user prompt may carry besides the always-required
/// snapshot. Blocks not taken by the method must be `None`.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub news: Option<NewsInput>,
    pub sentiment: Option<SentimentInput>,
    pub fundamentals: Option<FundamentalsTable>,
    pub few_shot: bool,
}

/// An assembled prompt pair plus the metadata the runner persists.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    /// rating date + {1, 3, 6, 12, 18} calendar months.
    pub expected_horizon_dates: [NaiveDate; 5],
    pub token_estimate: usize,
    /// Digest binding the bundle to its exact inputs.
    pub input_digest: String,
    /// Latest data date among all input blocks, for temporal audits.
    pub max_input_date: Option<NaiveDate>,
}

/// Renders the snapshot as the two-column table embedded in prompts.
pub fn render_snapshot_table(snapshot: &TechnicalSnapshot) -> String {
    let mut table = String::from("| Metric | Value |\n| --- | --- |\n");
    for (label, value) in snapshot.rows() {
        table.push_str(&format!("| {label} | {value:.4} |\n"));
    }
    table.push_str(&format!("\nPrices as of {}.", snapshot.price_date));
    table
}

/// Assembles system and user prompts; holds the vocabulary, metric catalog,
/// and template set they draw from.
pub struct PromptBuilder {
    templates: PromptTemplates,
    vocabulary: RatingVocabulary,
    catalog: MetricCatalog,
}

impl PromptBuilder {
    pub fn new(
        templates: PromptTemplates,
        vocabulary: RatingVocabulary,
        catalog: MetricCatalog,
    ) -> Self {
        Self {
            templates,
            vocabulary,
            catalog,
        }
    }

    pub fn catalog(&self) -> &MetricCatalog {
        &self.catalog
    }

    pub fn vocabulary(&self) -> &RatingVocabulary {
        &self.vocabulary
    }

    /// The system prompt: analyst persona and rating scale, plus the
    /// sentiment scale for score-taking methods and metric definitions for
    /// fundamentals-taking methods.
    pub fn build_system_prompt(&self, method: MethodKind) -> Result<String, PromptError> {
        let vars = BTreeMap::from([("rating_scale", self.vocabulary.scale_description())]);
        let mut text = render("system_base", &self.templates.system_base, &vars)?;
        if method.takes_sentiment_scores() {
            text.push('\n');
            text.push_str(&render(
                "system_sentiment_scale",
                &self.templates.system_sentiment_scale,
                &BTreeMap::new(),
            )?);
        }
        if method.takes_fundamentals() {
            let vars = BTreeMap::from([("metric_definitions", self.catalog.definitions_text())]);
            text.push('\n');
            text.push_str(&render(
                "system_fundamentals_definitions",
                &self.templates.system_fundamentals_definitions,
                &vars,
            )?);
        }
        Ok(text)
    }

    fn check_inputs(&self, method: MethodKind, context: &PromptContext) -> Result<(), PromptError> {
        let missing = |input| PromptError::MissingInput { method, input };
        let extra = |input| PromptError::ExtraInput { method, input };
        match (method.takes_news_summaries(), context.news.is_some()) {
            (true, false) => return Err(missing("news summaries")),
            (false, true) => return Err(extra("news summaries")),
            _ => {}
        }
        match (method.takes_sentiment_scores(), context.sentiment.is_some()) {
            (true, false) => return Err(missing("sentiment scores")),
            (false, true) => return Err(extra("sentiment scores")),
            _ => {}
        }
        match (method.takes_fundamentals(), context.fundamentals.is_some()) {
            (true, false) => return Err(missing("fundamentals table")),
            (false, true) => return Err(extra("fundamentals table")),
            _ => {}
        }
        Ok(())
    }

    /// Assembles the user prompt for one (company, rating date) query.
    pub fn build_user_prompt(
        &self,
        method: MethodKind,
        company_id: &str,
        rating_date: NaiveDate,
        snapshot: &TechnicalSnapshot,
        context: &PromptContext,
    ) -> Result<PromptBundle, PromptError> {
        self.check_inputs(method, context)?;

        let expected = horizon_dates(rating_date);
        let target_dates = HORIZONS_MONTHS
            .iter()
            .zip(expected.iter())
            .map(|(months, date)| {
                format!(
                    "- {months} month{}: {date}",
                    if *months == 1 { "" } else { "s" }
                )
            })
            .collect::<Vec<_>>()
            .join("\n");

        let mut sections = String::new();
        let mut max_input_date = Some(snapshot.price_date);
        let mut bump = |date: Option<NaiveDate>| {
            if let Some(d) = date {
                max_input_date = Some(max_input_date.map_or(d, |m| m.max(d)));
            }
        };

        if context.few_shot {
            let vars = BTreeMap::from([("example", self.templates.few_shot_example.clone())]);
            sections.push_str(&render(
                "section_example",
                &self.templates.section_example,
                &vars,
            )?);
            sections.push('\n');
        }
        if let Some(news) = &context.news {
            let vars = BTreeMap::from([
                ("month", news.company.month.to_string()),
                ("company_summary", news.company.text.clone()),
                ("sector_summary", news.sector.text.clone()),
            ]);
            sections.push_str(&render(
                "section_news",
                &self.templates.section_news,
                &vars,
            )?);
            sections.push('\n');
            bump(news.company.max_published);
            bump(news.sector.max_published);
        }
        if let Some(sentiment) = &context.sentiment {
            let vars = BTreeMap::from([
                ("month", sentiment.company.month.to_string()),
                ("company_score", sentiment.company.score.to_string()),
                ("sector_score", sentiment.sector.score.to_string()),
            ]);
            sections.push_str(&render(
                "section_sentiment",
                &self.templates.section_sentiment,
                &vars,
            )?);
            sections.push('\n');
            bump(sentiment.company.max_published);
            bump(sentiment.sector.max_published);
        }
        let fundamentals_html = match &context.fundamentals {
            Some(table) => {
                let html = render_fundamentals_html(table, &self.catalog);
                let vars = BTreeMap::from([("fundamentals_html", html.clone())]);
                sections.push_str(&render(
                    "section_fundamentals",
                    &self.templates.section_fundamentals,
                    &vars,
                )?);
                sections.push('\n');
                bump(table.max_filing_date());
                html
            }
            None => String::new(),
        };
        let snapshot_table = render_snapshot_table(snapshot);
        {
            let vars = BTreeMap::from([("snapshot_table", snapshot_table.clone())]);
            sections.push_str(&render(
                "section_snapshot",
                &self.templates.section_snapshot,
                &vars,
            )?);
            sections.push('\n');
        }

        let (sentiment_request, sentiment_line) = if method.takes_news_summaries() {
            (
                " Also assess the overall sentiment of the provided news summaries as \
                 positive, negative, neutral, or mixed."
                    .to_string(),
                "sentiment: <positive|negative|neutral|mixed>\n".to_string(),
            )
        } else {
            (String::new(), String::new())
        };
        let output_instructions = render(
            "output_instructions",
            &self.templates.output_instructions,
            &BTreeMap::from([
                ("sentiment_request", sentiment_request),
                ("sentiment_line", sentiment_line),
            ]),
        )?;

        let user_text = render(
            "user_main",
            &self.templates.user_main,
            &BTreeMap::from([
                ("company_id", company_id.to_string()),
                ("rating_date", rating_date.to_string()),
                ("target_dates", target_dates),
                ("sections", sections),
                ("output_instructions", output_instructions),
            ]),
        )?;
        let system_text = self.build_system_prompt(method)?;

        let input_digest = {
            #[derive(Serialize)]
            struct DigestInputs<'a> {
                method: &'a str,
                company_id: &'a str,
                rating_date: NaiveDate,
                snapshot: &'a TechnicalSnapshot,
                news: Option<(&'a Summary, &'a Summary)>,
                sentiment: Option<(&'a SentimentScore, &'a SentimentScore)>,
                fundamentals_html: &'a str,
                few_shot: bool,
            }
            let inputs = DigestInputs {
                method: method.as_str(),
                company_id,
                rating_date,
                snapshot,
                news: context.news.as_ref().map(|n| (&n.company, &n.sector)),
                sentiment: context.sentiment.as_ref().map(|s| (&s.company, &s.sector)),
                fundamentals_html: &fundamentals_html,
                few_shot: context.few_shot,
            };
            sha256_hex(&serde_json::to_vec(&inputs).expect("inputs serialize"))
        };

        let token_estimate =
            estimate_tokens(system_text.chars().count() + user_text.chars().count());

        Ok(PromptBundle {
            system_text,
            user_text,
            expected_horizon_dates: expected,
            token_estimate,
            input_digest,
            max_input_date,
        })
    }
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self::new(
            PromptTemplates::default(),
            RatingVocabulary::default(),
            MetricCatalog::default(),
        )
    }
}
