//! Company-relevance filtering, monthly aggregation, and LLM-driven
//! summarization and sentiment scoring of news articles.
//!
//! The default relevance matcher is lexical whole-token matching over the
//! company name and aliases; it is deliberately a pluggable interface so a
//! proper NER model can replace it (the lexical matcher will happily keep
//! an "apple pie recipe" article for Apple Inc.).

use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dates::YearMonth;
use crate::gateway::{sha256_hex, Gateway, GatewayError, RequestParams};

#[derive(Debug, Error)]
pub enum NewsError {
    #[error("empty news bundle for {0}")]
    EmptyBundle(String),
    #[error("sentiment reply unparsable after {attempts} attempt(s); last reply: {last_reply:?}")]
    UnparsableSentiment { attempts: u32, last_reply: String },
    #[error("backend returned an empty summary for {0}")]
    EmptySummaryReply(String),
    #[error("sentiment score {0} outside [-5, 5]")]
    ScoreOutOfRange(i64),
    #[error("articles jsonl, line {line}: {reason}")]
    MalformedArticle { line: usize, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A raw news article. An empty body still counts as an article (tracked
/// as "missing" in bundle stats).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    #[serde(default, rename = "ticker")]
    pub ticker_hint: Option<String>,
    pub published: NaiveDate,
    #[serde(default)]
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub body: String,
}

impl Article {
    fn char_count(&self) -> usize {
        self.title.chars().count() + self.body.chars().count()
    }
}

/// chars/4, rounded up — the documented token-count heuristic.
pub fn estimate_tokens(chars: usize) -> usize {
    chars.div_ceil(4)
}

/// Reads articles from JSONL
/// (`{"ticker","published","url","title","body"}`).
pub fn load_articles_jsonl<R: Read>(reader: R) -> Result<Vec<Article>, NewsError> {
    let mut articles = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article =
            serde_json::from_str(&line).map_err(|e| NewsError::MalformedArticle {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        articles.push(article);
    }
    Ok(articles)
}

/// What a bundle/summary/score is about.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NewsScope {
    Company(String),
    Sector(String),
}

impl NewsScope {
    pub fn is_sector(&self) -> bool {
        matches!(self, Self::Sector(_))
    }

    pub fn id(&self) -> &str {
        match self {
            Self::Company(id) | Self::Sector(id) => id,
        }
    }
}

impl fmt::Display for NewsScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Company(id) => write!(f, "company:{id}"),
            Self::Sector(id) => write!(f, "sector:{id}"),
        }
    }
}

impl FromStr for NewsScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("company", id)) => Ok(Self::Company(id.to_string())),
            Some(("sector", id)) => Ok(Self::Sector(id.to_string())),
            _ => Err(format!("bad scope `{s}`")),
        }
    }
}

impl Serialize for NewsScope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NewsScope {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Relevance decision for one article against one company.
pub trait RelevanceMatcher {
    fn is_relevant(&self, article: &Article, company_name: &str, aliases: &[String]) -> bool;
}

/// Whole-token, case-insensitive phrase matching over title and body.
#[derive(Debug, Default, Clone)]
pub struct LexicalMatcher;

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > haystack.len() {
        return false;
    }
    haystack.windows(phrase.len()).any(|w| w == phrase)
}

impl RelevanceMatcher for LexicalMatcher {
    fn is_relevant(&self, article: &Article, company_name: &str, aliases: &[String]) -> bool {
        let title_tokens = tokens(&article.title);
        let body_tokens = tokens(&article.body);
        std::iter::once(company_name)
            .chain(aliases.iter().map(String::as_str))
            .map(tokens)
            .any(|phrase| {
                contains_phrase(&title_tokens, &phrase) || contains_phrase(&body_tokens, &phrase)
            })
    }
}

/// Keeps articles relevant to the company under the default lexical
/// matcher.
pub fn filter_relevant_articles(
    articles: &[Article],
    company_name: &str,
    aliases: &[String],
) -> Vec<Article> {
    filter_relevant_articles_with(&LexicalMatcher, articles, company_name, aliases)
}

pub fn filter_relevant_articles_with<M: RelevanceMatcher + ?Sized>(
    matcher: &M,
    articles: &[Article],
    company_name: &str,
    aliases: &[String],
) -> Vec<Article> {
    articles
        .iter()
        .filter(|a| matcher.is_relevant(a, company_name, aliases))
        .cloned()
        .collect()
}

/// Per-bundle corpus statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleStats {
    pub article_count: usize,
    pub char_count: usize,
    pub token_estimate: usize,
    pub url_count: usize,
    /// Articles with an empty body.
    pub missing_count: usize,
}

/// One scope's articles for one calendar month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewsBundle {
    pub scope: NewsScope,
    pub month: YearMonth,
    pub articles: Vec<Article>,
    pub stats: BundleStats,
}

impl NewsBundle {
    /// Content digest binding downstream summaries to these exact inputs.
    pub fn digest(&self) -> String {
        let mut canonical = format!("{}\n{}\n", self.scope, self.month);
        for article in &self.articles {
            canonical.push_str(&format!(
                "{}\x1f{}\x1f{}\x1f{}\n",
                article.published, article.url, article.title, article.body
            ));
        }
        sha256_hex(canonical.as_bytes())
    }

    /// Latest published date among the articles, for temporal audits.
    pub fn max_published(&self) -> Option<NaiveDate> {
        self.articles.iter().map(|a| a.published).max()
    }
}

/// Partitions articles into the given month, computing stats. Articles
/// outside the month are dropped; order is made deterministic.
pub fn aggregate_monthly(articles: &[Article], scope: NewsScope, month: YearMonth) -> NewsBundle {
    let mut kept: Vec<Article> = articles
        .iter()
        .filter(|a| month.contains(a.published))
        .cloned()
        .collect();
    kept.sort_by(|a, b| (a.published, &a.url, &a.title).cmp(&(b.published, &b.url, &b.title)));
    kept.dedup();
    let stats = BundleStats {
        article_count: kept.len(),
        char_count: kept.iter().map(Article::char_count).sum(),
        token_estimate: estimate_tokens(kept.iter().map(Article::char_count).sum()),
        url_count: kept.iter().filter(|a| !a.url.is_empty()).count(),
        missing_count: kept.iter().filter(|a| a.body.is_empty()).count(),
    };
    NewsBundle {
        scope,
        month,
        articles: kept,
        stats,
    }
}

/// A monthly news summary bound to its exact source bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub scope: NewsScope,
    pub month: YearMonth,
    pub text: String,
    pub source_digest: String,
    /// Latest published date among the source articles.
    pub max_published: Option<NaiveDate>,
}

/// An integer sentiment score in [-5, 5] for one scope/month summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentScore {
    pub scope: NewsScope,
    pub month: YearMonth,
    pub score: i8,
    pub source_digest: String,
    pub max_published: Option<NaiveDate>,
}

impl SentimentScore {
    pub fn new_checked(
        scope: NewsScope,
        month: YearMonth,
        score: i64,
        source_digest: String,
        max_published: Option<NaiveDate>,
    ) -> Result<Self, NewsError> {
        if !(-5..=5).contains(&score) {
            return Err(NewsError::ScoreOutOfRange(score));
        }
        Ok(Self {
            scope,
            month,
            score: score as i8,
            source_digest,
            max_published,
        })
    }
}

pub const SUMMARIZER_SYSTEM_PROMPT: &str = "You are an expert news summarizer. Your task is to \
condense news articles into concise summaries that highlight key events and important \
information, while excluding irrelevant content.";

pub const SENTIMENT_SYSTEM_PROMPT: &str = "You are an expert in news sentiment scoring, \
particularly for financial markets. You score the sentiment of news summaries on an integer \
scale from -5 to 5, where -5 is extremely negative, 0 is neutral, and 5 is extremely positive.";

fn render_article(article: &Article) -> String {
    if article.body.is_empty() {
        format!(
            "[{}] {}\n(article body unavailable)",
            article.published, article.title
        )
    } else {
        format!(
            "[{}] {}\n{}",
            article.published, article.title, article.body
        )
    }
}

fn summarize_user_prompt(
    scope: &NewsScope,
    month: YearMonth,
    pieces: &[String],
    partial: bool,
) -> String {
    let material = if partial {
        "partial summaries of news"
    } else {
        "news articles"
    };
    let instruction = match scope {
        NewsScope::Company(id) => format!(
            "Summarize the following {material} about company {id} from {month}. \
             Highlight key events and important information for an investor; exclude \
             irrelevant content."
        ),
        NewsScope::Sector(id) => format!(
            "Summarize the following {material} covering the {id} sector from {month}. \
             Identify general themes and trends across the sector; exclude irrelevant \
             content."
        ),
    };
    let mut prompt = instruction;
    prompt.push_str("\n\n");
    for (i, piece) in pieces.iter().enumerate() {
        prompt.push_str(&format!("--- item {} ---\n{}\n\n", i + 1, piece));
    }
    prompt
}

/// Greedy packing of pieces into chunks whose token estimate stays within
/// the budget; a single oversized piece still gets its own chunk.
fn pack_chunks(pieces: &[String], budget_tokens: usize) -> Vec<Vec<String>> {
    let mut chunks: Vec<Vec<String>> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut current_tokens = 0usize;
    for piece in pieces {
        let cost = estimate_tokens(piece.chars().count());
        if !current.is_empty() && current_tokens + cost > budget_tokens {
            chunks.push(std::mem::take(&mut current));
            current_tokens = 0;
        }
        current_tokens += cost;
        current.push(piece.clone());
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

/// Summarizes a monthly bundle. When the bundle exceeds the context
/// budget, articles are chunked and summarized hierarchically: summaries
/// of chunks, then a summary of summaries.
pub fn summarize(
    bundle: &NewsBundle,
    gateway: &Gateway,
    params: &RequestParams,
    context_budget_tokens: usize,
) -> Result<Summary, NewsError> {
    if bundle.articles.is_empty() {
        return Err(NewsError::EmptyBundle(bundle.scope.to_string()));
    }
    let mut pieces: Vec<String> = bundle.articles.iter().map(render_article).collect();
    let mut partial = false;
    for _level in 0..8 {
        let chunks = pack_chunks(&pieces, context_budget_tokens);
        if chunks.len() == 1 {
            let user = summarize_user_prompt(&bundle.scope, bundle.month, &chunks[0], partial);
            let text = gateway.complete(&params.request(SUMMARIZER_SYSTEM_PROMPT, &user)?)?;
            if text.trim().is_empty() {
                return Err(NewsError::EmptySummaryReply(bundle.scope.to_string()));
            }
            return Ok(Summary {
                scope: bundle.scope.clone(),
                month: bundle.month,
                text,
                source_digest: bundle.digest(),
                max_published: bundle.max_published(),
            });
        }
        let mut next = Vec::with_capacity(chunks.len());
        for chunk in &chunks {
            let user = summarize_user_prompt(&bundle.scope, bundle.month, chunk, partial);
            next.push(gateway.complete(&params.request(SUMMARIZER_SYSTEM_PROMPT, &user)?)?);
        }
        pieces = next;
        partial = true;
    }
    // Each level shrinks the piece count, so this is unreachable in
    // practice; treat it as a budget too small to merge anything.
    Err(NewsError::EmptyBundle(format!(
        "{}: context budget {context_budget_tokens} too small to merge summaries",
        bundle.scope
    )))
}

fn sentiment_user_prompt(summary: &Summary) -> String {
    let what = match &summary.scope {
        NewsScope::Company(id) => format!("news summary for company {id}"),
        NewsScope::Sector(id) => format!("news summary for the {id} sector"),
    };
    format!(
        "Score the sentiment of the following {what} from {}. Respond with a single \
         integer between -5 and 5 and nothing else.\n\n{}",
        summary.month, summary.text
    )
}

fn extract_score(reply: &str) -> Option<i64> {
    let re = Regex::new(r"-?\d+").expect("valid regex");
    let score = re
        .find_iter(reply)
        .filter_map(|m| m.as_str().parse::<i64>().ok())
        .find(|v| (-5..=5).contains(v));
    score
}

/// Scores a summary's sentiment. Out-of-range or non-integer replies are
/// retried once, then surface as an error — never clamped.
pub fn score_sentiment(
    summary: &Summary,
    gateway: &Gateway,
    params: &RequestParams,
) -> Result<SentimentScore, NewsError> {
    if summary.text.trim().is_empty() {
        return Err(NewsError::EmptyBundle(summary.scope.to_string()));
    }
    let request = params.request(SENTIMENT_SYSTEM_PROMPT, &sentiment_user_prompt(summary))?;
    let mut last_reply = String::new();
    for _attempt in 0..2 {
        last_reply = gateway.complete(&request)?;
        if let Some(score) = extract_score(&last_reply) {
            return SentimentScore::new_checked(
                summary.scope.clone(),
                summary.month,
                score,
                summary.source_digest.clone(),
                summary.max_published,
            );
        }
    }
    Err(NewsError::UnparsableSentiment {
        attempts: 2,
        last_reply,
    })
}
