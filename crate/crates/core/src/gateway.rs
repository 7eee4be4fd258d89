//! Chat-completion gateway: a uniform backend interface with an HTTP
//! implementation (standard chat-completions wire format, exponential
//! backoff on transient failures) and two deterministic mocks, plus the
//! response parser and the chain-of-verification date check.
//!
//! The gateway never mutates prompts; every call is logged to an optional
//! JSONL transcript keyed by the request digest.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::NaiveDate;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dates::HORIZONS_MONTHS;
use crate::ratings::{OrdinalRating, RatingVocabulary};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("context overflow: {0}")]
    ContextOverflow(String),
    #[error("malformed response ({reason}); raw response digest {response_digest}")]
    MalformedResponse {
        reason: String,
        response_digest: String,
    },
    #[error("transcript io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// A chat-completion request. The first message is always the system
/// message and no message is empty; construction enforces both.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    pub fn new(
        model_id: impl Into<String>,
        temperature: f64,
        max_output_tokens: u32,
        messages: Vec<Message>,
    ) -> Result<Self, GatewayError> {
        if messages.is_empty() || messages[0].role != Role::System {
            return Err(GatewayError::InvalidRequest(
                "first message must be a system message".to_string(),
            ));
        }
        if messages.iter().any(|m| m.content.trim().is_empty()) {
            return Err(GatewayError::InvalidRequest(
                "empty message content".to_string(),
            ));
        }
        Ok(Self {
            model_id: model_id.into(),
            temperature,
            max_output_tokens,
            messages,
        })
    }

    pub fn system(&self) -> &str {
        &self.messages[0].content
    }

    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Stable content digest identifying this exact request.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("request serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Model/sampling settings shared by every request a run issues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl RequestParams {
    pub fn request(&self, system: &str, user: &str) -> Result<ChatRequest, GatewayError> {
        ChatRequest::new(
            &self.model_id,
            self.temperature,
            self.max_output_tokens,
            vec![
                Message {
                    role: Role::System,
                    content: system.to_string(),
                },
                Message {
                    role: Role::User,
                    content: user.to_string(),
                },
            ],
        )
    }
}

/// Anything that can answer a chat request with assistant text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
    fn name(&self) -> &'static str;
}

/// Backend wrapper that counts calls and persists request/response
/// transcripts. Shared across concurrent callers.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    transcript: Option<Mutex<Box<dyn Write + Send>>>,
    calls: AtomicU64,
}

#[derive(Serialize)]
struct TranscriptRow<'a> {
    request_digest: &'a str,
    backend: &'a str,
    model_id: &'a str,
    messages: &'a [Message],
    response: &'a str,
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend,
            transcript: None,
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_transcript(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.transcript = Some(Mutex::new(sink));
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let response = self.backend.complete(request)?;
        if let Some(sink) = &self.transcript {
            let digest = request.digest();
            let row = TranscriptRow {
                request_digest: &digest,
                backend: self.backend.name(),
                model_id: &request.model_id,
                messages: &request.messages,
                response: &response,
            };
            let mut sink = sink.lock().expect("transcript lock");
            serde_json::to_writer(&mut *sink, &row).map_err(std::io::Error::other)?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        Ok(response)
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Base URL; requests POST to `{base_url}/chat/completions`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8080/v1".to_string(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

/// Exponential backoff schedule: `initial * 2^attempt`, capped.
pub fn backoff_delay(config: &HttpBackendConfig, attempt: u32) -> Duration {
    let factor = 2u32.saturating_pow(attempt);
    config
        .initial_backoff
        .saturating_mul(factor)
        .min(config.max_backoff)
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// Speaks the standard chat-completions JSON wire format (messages array
/// in, choices array out). Transient failures (connect/timeout, 429, 5xx)
/// are retried with exponential backoff up to the configured cap; token-
/// limit rejections surface as [`GatewayError::ContextOverflow`].
pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    sleeper: Sleeper,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .expect("http client");
        Self {
            config,
            client,
            sleeper: Box::new(std::thread::sleep),
        }
    }

    /// Replaces the between-retry sleep; tests inject a recorder.
    pub fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, AttemptError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = WireRequest {
            model: &request.model_id,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let mut builder = self.client.post(&url).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(AttemptError::Transient(format!("http status {status}")));
        }
        let text = response
            .text()
            .map_err(|e| AttemptError::Transient(e.to_string()))?;
        if status.is_client_error() {
            let lowered = text.to_lowercase();
            if lowered.contains("context_length_exceeded")
                || lowered.contains("maximum context length")
            {
                return Err(AttemptError::Fatal(GatewayError::ContextOverflow(text)));
            }
            return Err(AttemptError::Fatal(GatewayError::InvalidRequest(format!(
                "http status {status}: {text}"
            ))));
        }
        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Transient(format!("bad response body: {e}")))?;
        wire.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| AttemptError::Transient("no choices in response".to_string()))
    }
}

enum AttemptError {
    Transient(String),
    Fatal(GatewayError),
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                (self.sleeper)(backoff_delay(&self.config, attempt - 1));
            }
            match self.attempt(request) {
                Ok(content) => return Ok(content),
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(AttemptError::Transient(e)) => {
                    log::warn!("chat attempt {} failed: {e}", attempt + 1);
                    last_error = e;
                }
            }
        }
        Err(GatewayError::BackendUnavailable {
            attempts: self.config.max_retries + 1,
            last_error,
        })
    }

    fn name(&self) -> &'static str {
        "http"
    }
}

// ---------------------------------------------------------------------------
// Mock backends
// ---------------------------------------------------------------------------

/// Returns canned replies in order; erroring once the script runs dry.
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(replies: I) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("script lock").len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, _request: &ChatRequest) -> Result<String, GatewayError> {
        self.replies.lock().expect("script lock").pop_front().ok_or(
            GatewayError::BackendUnavailable {
                attempts: 1,
                last_error: "mock script exhausted".to_string(),
            },
        )
    }

    fn name(&self) -> &'static str {
        "scripted-mock"
    }
}

/// Deterministic mock: (seed, request) -> response is a pure function.
///
/// Rating prompts are answered with a momentum heuristic — the sign and
/// size of the trailing 3-month return in the prompt's snapshot table
/// decide the rating direction — echoing the prompt's own target dates so
/// the response passes date verification. Summarizer and sentiment-scorer
/// prompts get digest-derived deterministic text.
pub struct SeededBackend {
    seed: u64,
}

/// Marker phrases used to classify prompts; the prompt builder embeds the
/// same personas.
pub const SUMMARIZER_MARKER: &str = "expert news summarizer";
pub const SENTIMENT_MARKER: &str = "expert in news sentiment scoring";

impl SeededBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn digest_bytes(&self, request: &ChatRequest) -> Vec<u8> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(serde_json::to_vec(request).expect("request serializes"));
        hasher.finalize().to_vec()
    }

    fn momentum_rating(r3m: f64) -> OrdinalRating {
        let value = if r3m >= 0.05 {
            2
        } else if r3m >= 0.01 {
            1
        } else if r3m > -0.01 {
            0
        } else if r3m > -0.05 {
            -1
        } else {
            -2
        };
        OrdinalRating::new(value).expect("in range")
    }

    fn answer_rating_prompt(&self, user: &str) -> String {
        let date_re = Regex::new(r"(?m)^\s*-\s*(\d+)\s+months?:\s*(\d{4}-\d{2}-\d{2})\s*$")
            .expect("valid regex");
        let dates: Vec<(u32, String)> = date_re
            .captures_iter(user)
            .map(|c| (c[1].parse().unwrap_or(0), c[2].to_string()))
            .collect();
        let value_of = |label: &str| -> Option<f64> {
            let re = Regex::new(&format!(
                r"\|\s*{}\s*\|\s*(-?[0-9]+(?:\.[0-9]+)?)\s*\|",
                regex::escape(label)
            ))
            .expect("valid regex");
            re.captures_iter(user)
                .last()
                .and_then(|c| c[1].parse().ok())
        };
        let r3m = value_of("Return, 3-month").unwrap_or(0.0);
        let current = value_of("Current price").unwrap_or(100.0);
        let rating = Self::momentum_rating(r3m);

        let mut block =
            String::from("Reviewing the trailing momentum before rating.\n\n```ratings\n");
        block.push_str("horizon_months | target_date | rating | price_target\n");
        for (horizon, date) in &dates {
            let target = current * (1.0 + r3m * (*horizon as f64) / 3.0);
            block.push_str(&format!(
                "{horizon} | {date} | {} | {target:.2}\n",
                rating.canonical_term()
            ));
        }
        block.push_str(&format!(
            "explanation: Momentum continuation from a trailing 3-month return of {r3m:.4}.\n"
        ));
        if user.contains("positive, negative, neutral, or mixed") {
            let assessment = if r3m >= 0.01 {
                "positive"
            } else if r3m <= -0.01 {
                "negative"
            } else {
                "neutral"
            };
            block.push_str(&format!("sentiment: {assessment}\n"));
        }
        block.push_str("```\n");
        block
    }
}

impl ChatBackend for SeededBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let system = request.system().to_lowercase();
        let digest = self.digest_bytes(request);
        if system.contains(SUMMARIZER_MARKER) {
            let tone = ["constructive", "cautious", "mixed"][(digest[2] % 3) as usize];
            let items = digest[1] % 9 + 1;
            return Ok(format!(
                "Monthly brief {}: {items} notable items; overall tone {tone}.",
                hex::encode(&digest[..4])
            ));
        }
        if system.contains(SENTIMENT_MARKER) {
            let score = (digest[0] % 11) as i64 - 5;
            return Ok(format!("Sentiment: {score}"));
        }
        let user = request.last_user().unwrap_or_default();
        Ok(self.answer_rating_prompt(user))
    }

    fn name(&self) -> &'static str {
        "seeded-mock"
    }
}

// ---------------------------------------------------------------------------
// Response parsing
// ---------------------------------------------------------------------------

/// The LLM's sentiment read of the provided news summaries (News method).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentAssessment {
    Positive,
    Negative,
    Neutral,
    Mixed,
}

impl SentimentAssessment {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_lowercase().as_str() {
            "positive" => Some(Self::Positive),
            "negative" => Some(Self::Negative),
            "neutral" => Some(Self::Neutral),
            "mixed" => Some(Self::Mixed),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Mixed => "mixed",
        }
    }

    /// Numeric stand-in used for rank correlations.
    pub fn numeric(self) -> f64 {
        match self {
            Self::Positive => 1.0,
            Self::Negative => -1.0,
            Self::Neutral | Self::Mixed => 0.0,
        }
    }
}

/// One horizon's parsed prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonPrediction {
    pub horizon_months: u32,
    /// The date the model claims this horizon lands on; checked by CoVE.
    pub target_date: NaiveDate,
    pub rating: OrdinalRating,
    pub price_target: Option<f64>,
}

/// A fully parsed model response for one (company, rating date) query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub company_id: String,
    pub rating_date: NaiveDate,
    /// Exactly one entry per horizon in {1, 3, 6, 12, 18}, sorted.
    pub entries: Vec<HorizonPrediction>,
    pub explanation: String,
    pub sentiment_assessment: Option<SentimentAssessment>,
    pub response_digest: String,
}

impl PredictionRecord {
    pub fn entry(&self, horizon_months: u32) -> Option<&HorizonPrediction> {
        self.entries
            .iter()
            .find(|e| e.horizon_months == horizon_months)
    }
}

/// Renders a record as the canonical fenced answer block. Also used to
/// build few-shot example answers, so the model sees exactly the format
/// the parser expects.
pub fn format_prediction_block(
    entries: &[HorizonPrediction],
    explanation: &str,
    sentiment: Option<SentimentAssessment>,
) -> String {
    let mut out =
        String::from("```ratings\nhorizon_months | target_date | rating | price_target\n");
    for entry in entries {
        let price = entry
            .price_target
            .map(|p| format!("{p:.2}"))
            .unwrap_or_else(|| "-".to_string());
        out.push_str(&format!(
            "{} | {} | {} | {}\n",
            entry.horizon_months,
            entry.target_date,
            entry.rating.canonical_term(),
            price
        ));
    }
    out.push_str(&format!("explanation: {explanation}\n"));
    if let Some(s) = sentiment {
        out.push_str(&format!("sentiment: {}\n", s.as_str()));
    }
    out.push_str("```");
    out
}

fn malformed(reason: impl Into<String>, digest: &str) -> GatewayError {
    GatewayError::MalformedResponse {
        reason: reason.into(),
        response_digest: digest.to_string(),
    }
}

/// Parses a model response into a [`PredictionRecord`].
///
/// The fenced `ratings` block is the primary path; when absent, a
/// free-text fallback matches rating terms near date/horizon mentions.
/// All five horizons must be present.
pub fn parse_prediction(
    response: &str,
    company_id: &str,
    rating_date: NaiveDate,
    expected_dates: &[NaiveDate; 5],
    vocab: &RatingVocabulary,
) -> Result<PredictionRecord, GatewayError> {
    let digest = sha256_hex(response.as_bytes());
    let parsed = match extract_block(response) {
        Some(block) => parse_block(&block, vocab, &digest)?,
        None => parse_free_text(response, expected_dates, vocab, &digest)?,
    };
    let (mut entries, explanation, sentiment) = parsed;
    entries.sort_by_key(|e| e.horizon_months);

    for horizon in HORIZONS_MONTHS {
        let count = entries
            .iter()
            .filter(|e| e.horizon_months == horizon)
            .count();
        if count == 0 {
            return Err(malformed(format!("missing horizon {horizon}"), &digest));
        }
        if count > 1 {
            return Err(malformed(format!("duplicate horizon {horizon}"), &digest));
        }
    }
    if entries.len() != HORIZONS_MONTHS.len() {
        return Err(malformed(
            format!(
                "expected {} horizon entries, got {}",
                HORIZONS_MONTHS.len(),
                entries.len()
            ),
            &digest,
        ));
    }

    Ok(PredictionRecord {
        company_id: company_id.to_string(),
        rating_date,
        entries,
        explanation,
        sentiment_assessment: sentiment,
        response_digest: digest,
    })
}

/// The last fenced ```ratings block in the response, if any.
fn extract_block(response: &str) -> Option<String> {
    let re = Regex::new(r"(?s)```ratings\s*\n(.*?)```").expect("valid regex");
    re.captures_iter(response).last().map(|c| c[1].to_string())
}

type ParsedBody = (Vec<HorizonPrediction>, String, Option<SentimentAssessment>);

fn parse_block(
    block: &str,
    vocab: &RatingVocabulary,
    digest: &str,
) -> Result<ParsedBody, GatewayError> {
    let mut entries = Vec::new();
    let mut explanation = String::new();
    let mut sentiment = None;

    for line in block.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("horizon_months") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("explanation:") {
            explanation = rest.trim().to_string();
            continue;
        }
        if let Some(rest) = line.strip_prefix("sentiment:") {
            sentiment = Some(
                SentimentAssessment::parse(rest)
                    .ok_or_else(|| malformed(format!("bad sentiment `{rest}`"), digest))?,
            );
            continue;
        }
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(malformed(format!("bad entry line `{line}`"), digest));
        }
        let horizon_months: u32 = fields[0]
            .parse()
            .map_err(|_| malformed(format!("bad horizon `{}`", fields[0]), digest))?;
        let target_date: NaiveDate = fields[1]
            .parse()
            .map_err(|_| malformed(format!("bad target date `{}`", fields[1]), digest))?;
        let rating = vocab
            .normalize(fields[2])
            .map_err(|e| malformed(e.to_string(), digest))?;
        let price_target = match fields[3] {
            "-" | "" | "N/A" | "n/a" => None,
            value => Some(
                value
                    .parse()
                    .map_err(|_| malformed(format!("bad price target `{value}`"), digest))?,
            ),
        };
        entries.push(HorizonPrediction {
            horizon_months,
            target_date,
            rating,
            price_target,
        });
    }
    Ok((entries, explanation, sentiment))
}

/// Free-text fallback: real backends sometimes ignore format instructions.
/// Scans each line for a rating term next to either an explicit
/// "N-month"/"N months" horizon or one of the expected target dates.
fn parse_free_text(
    response: &str,
    expected_dates: &[NaiveDate; 5],
    vocab: &RatingVocabulary,
    digest: &str,
) -> Result<ParsedBody, GatewayError> {
    let horizon_re = Regex::new(r"(?i)\b(\d{1,2})[\s-]*months?\b").expect("valid regex");
    let date_re = Regex::new(r"\b(\d{4}-\d{2}-\d{2})\b").expect("valid regex");
    let terms = vocab.terms_longest_first();

    let mut entries: Vec<HorizonPrediction> = Vec::new();
    for line in response.lines() {
        let lowered = line.to_lowercase();
        let Some(rating) = terms
            .iter()
            .find(|(term, _)| lowered.contains(term))
            .map(|(_, rating)| *rating)
        else {
            continue;
        };
        let date_in_line = date_re
            .captures(line)
            .and_then(|c| c[1].parse::<NaiveDate>().ok());
        let horizon_in_line = horizon_re
            .captures(line)
            .and_then(|c| c[1].parse::<u32>().ok())
            .filter(|h| HORIZONS_MONTHS.contains(h));

        let (horizon_months, target_date) = match (horizon_in_line, date_in_line) {
            (Some(h), Some(d)) => (h, d),
            (Some(h), None) => {
                let idx = HORIZONS_MONTHS
                    .iter()
                    .position(|x| *x == h)
                    .expect("validated");
                (h, expected_dates[idx])
            }
            (None, Some(d)) => {
                let Some(idx) = expected_dates.iter().position(|x| *x == d) else {
                    continue;
                };
                (HORIZONS_MONTHS[idx], d)
            }
            (None, None) => continue,
        };
        if entries.iter().any(|e| e.horizon_months == horizon_months) {
            continue; // first mention wins
        }
        entries.push(HorizonPrediction {
            horizon_months,
            target_date,
            rating,
            price_target: None,
        });
    }
    if entries.is_empty() {
        return Err(malformed(
            "no ratings block and no parsable free text",
            digest,
        ));
    }
    Ok((entries, response.trim().to_string(), None))
}

// ---------------------------------------------------------------------------
// Chain of verification
// ---------------------------------------------------------------------------

/// Outcome of the target-date verification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoveOutcome {
    Ok,
    /// Horizons whose claimed target date is wrong.
    DateMismatch(Vec<u32>),
}

/// Checks that every claimed target date equals rating date + horizon
/// calendar months — the same convention the prompt states.
pub fn verify_dates_cove(record: &PredictionRecord, rating_date: NaiveDate) -> CoveOutcome {
    let mut bad: Vec<u32> = Vec::new();
    for entry in &record.entries {
        let expected = crate::dates::add_months(rating_date, entry.horizon_months as i32);
        if entry.target_date != expected {
            bad.push(entry.horizon_months);
        }
    }
    if bad.is_empty() {
        CoveOutcome::Ok
    } else {
        CoveOutcome::DateMismatch(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::horizon_dates;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn request(system: &str, user: &str) -> ChatRequest {
        ChatRequest::new(
            "test-model",
            0.0,
            512,
            vec![
                Message {
                    role: Role::System,
                    content: system.to_string(),
                },
                Message {
                    role: Role::User,
                    content: user.to_string(),
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::new("m", 0.0, 10, vec![]).is_err());
        assert!(ChatRequest::new(
            "m",
            0.0,
            10,
            vec![Message {
                role: Role::User,
                content: "hi".to_string()
            }]
        )
        .is_err());
        assert!(ChatRequest::new(
            "m",
            0.0,
            10,
            vec![Message {
                role: Role::System,
                content: "  ".to_string()
            }]
        )
        .is_err());
    }

    #[test]
    fn scripted_mock_returns_replies_verbatim_then_errors() {
        let backend = ScriptedBackend::new(["first", "second"]);
        let req = request("sys", "user");
        assert_eq!(backend.complete(&req).unwrap(), "first");
        assert_eq!(backend.complete(&req).unwrap(), "second");
        assert!(matches!(
            backend.complete(&req),
            Err(GatewayError::BackendUnavailable { .. })
        ));
    }

    #[test]
    fn seeded_mock_is_deterministic() {
        let user = "Target dates:\n- 1 month: 2022-04-01\n- 3 months: 2022-06-01\n\
                    - 6 months: 2022-09-01\n- 12 months: 2023-03-01\n- 18 months: 2023-09-01\n\
                    | Current price | 150.0000 |\n| Return, 3-month | 0.0600 |\n";
        let req = request("You are a seasoned financial analyst.", user);
        let a = SeededBackend::new(7).complete(&req).unwrap();
        let b = SeededBackend::new(7).complete(&req).unwrap();
        assert_eq!(a, b);
        let c = SeededBackend::new(8).complete(&req).unwrap();
        // Rating path depends on prompt content, not seed; summaries differ.
        assert_eq!(a, c);

        let record = parse_prediction(
            &a,
            "AAA",
            d("2022-03-01"),
            &horizon_dates(d("2022-03-01")),
            &RatingVocabulary::default(),
        )
        .unwrap();
        assert_eq!(record.entries.len(), 5);
        // +6% trailing 3-month return -> Strong Buy under the momentum rule.
        assert_eq!(record.entries[0].rating, OrdinalRating::STRONG_BUY);
        assert_eq!(verify_dates_cove(&record, d("2022-03-01")), CoveOutcome::Ok);
    }

    #[test]
    fn seeded_mock_summary_and_sentiment_are_deterministic() {
        let sum_req = request(
            &format!("You are an {SUMMARIZER_MARKER}."),
            "Summarize the month.",
        );
        let backend = SeededBackend::new(42);
        assert_eq!(
            backend.complete(&sum_req).unwrap(),
            backend.complete(&sum_req).unwrap()
        );

        let sent_req = request(
            &format!("You are an {SENTIMENT_MARKER}, for financial markets."),
            "Score this summary.",
        );
        let reply = backend.complete(&sent_req).unwrap();
        let score: i64 = reply
            .trim_start_matches("Sentiment:")
            .trim()
            .parse()
            .unwrap();
        assert!((-5..=5).contains(&score));
    }

    #[test]
    fn backoff_schedule_doubles_and_caps() {
        let config = HttpBackendConfig {
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(450),
            ..Default::default()
        };
        assert_eq!(backoff_delay(&config, 0), Duration::from_millis(100));
        assert_eq!(backoff_delay(&config, 1), Duration::from_millis(200));
        assert_eq!(backoff_delay(&config, 2), Duration::from_millis(400));
        assert_eq!(backoff_delay(&config, 3), Duration::from_millis(450));
    }

    fn block_response() -> String {
        "Reasoning first.\n\
         ```ratings\n\
         horizon_months | target_date | rating | price_target\n\
         1 | 2022-04-01 | Moderate Buy | 152.30\n\
         3 | 2022-06-01 | Hold | 150.00\n\
         6 | 2022-09-01 | Outperform | 161.00\n\
         12 | 2023-03-01 | Strong Buy | 175.00\n\
         18 | 2023-09-01 | Strong Buy | -\n\
         explanation: Steady momentum.\n\
         sentiment: mixed\n\
         ```\n"
            .to_string()
    }

    #[test]
    fn parses_well_formed_block() {
        let record = parse_prediction(
            &block_response(),
            "AAA",
            d("2022-03-01"),
            &horizon_dates(d("2022-03-01")),
            &RatingVocabulary::default(),
        )
        .unwrap();
        assert_eq!(record.entries.len(), 5);
        assert_eq!(record.entry(1).unwrap().rating.value(), 1);
        // "Outperform" normalizes to Moderate Buy.
        assert_eq!(record.entry(6).unwrap().rating.value(), 1);
        assert_eq!(record.entry(18).unwrap().price_target, None);
        assert_eq!(record.entry(12).unwrap().price_target, Some(175.00));
        assert_eq!(record.explanation, "Steady momentum.");
        assert_eq!(
            record.sentiment_assessment,
            Some(SentimentAssessment::Mixed)
        );
    }

    #[test]
    fn missing_horizon_names_it() {
        let response = block_response().replace("18 | 2023-09-01 | Strong Buy | -\n", "");
        let err = parse_prediction(
            &response,
            "AAA",
            d("2022-03-01"),
            &horizon_dates(d("2022-03-01")),
            &RatingVocabulary::default(),
        )
        .unwrap_err();
        match err {
            GatewayError::MalformedResponse { reason, .. } => {
                assert!(reason.contains("missing horizon 18"), "reason: {reason}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_term_in_block_is_malformed() {
        let response = block_response().replace("Hold", "Lukewarm");
        let err = parse_prediction(
            &response,
            "AAA",
            d("2022-03-01"),
            &horizon_dates(d("2022-03-01")),
            &RatingVocabulary::default(),
        )
        .unwrap_err();
        assert!(matches!(err, GatewayError::MalformedResponse { .. }));
    }

    #[test]
    fn free_text_fallback_extracts_all_horizons() {
        let response = "\
            For the 1-month outlook I rate this a Moderate Buy.\n\
            Over 3 months: Hold.\n\
            The 6-month view (2022-09-01) is Outperform.\n\
            At 12 months I see Strong Buy.\n\
            By 2023-09-01 this is a Strong Buy.\n";
        let record = parse_prediction(
            response,
            "AAA",
            d("2022-03-01"),
            &horizon_dates(d("2022-03-01")),
            &RatingVocabulary::default(),
        )
        .unwrap();
        assert_eq!(record.entries.len(), 5);
        assert_eq!(record.entry(3).unwrap().rating.value(), 0);
        assert_eq!(record.entry(18).unwrap().target_date, d("2023-09-01"));
        // Dates not stated fall back to the expected ones (CoVE still checks).
        assert_eq!(record.entry(1).unwrap().target_date, d("2022-04-01"));
    }

    #[test]
    fn block_roundtrips_through_parser() {
        let entries: Vec<HorizonPrediction> = HORIZONS_MONTHS
            .iter()
            .enumerate()
            .map(|(i, h)| HorizonPrediction {
                horizon_months: *h,
                target_date: horizon_dates(d("2022-03-01"))[i],
                rating: OrdinalRating::ALL[i % 5],
                price_target: if i % 2 == 0 {
                    Some(100.25 + i as f64)
                } else {
                    None
                },
            })
            .collect();
        let block =
            format_prediction_block(&entries, "Round trip.", Some(SentimentAssessment::Positive));
        let record = parse_prediction(
            &block,
            "AAA",
            d("2022-03-01"),
            &horizon_dates(d("2022-03-01")),
            &RatingVocabulary::default(),
        )
        .unwrap();
        assert_eq!(record.entries, entries);
        assert_eq!(record.explanation, "Round trip.");
    }

    #[test]
    fn cove_flags_wrong_dates() {
        let rating_date = d("2022-03-01");
        let mut record = parse_prediction(
            &block_response(),
            "AAA",
            rating_date,
            &horizon_dates(rating_date),
            &RatingVocabulary::default(),
        )
        .unwrap();
        assert_eq!(verify_dates_cove(&record, rating_date), CoveOutcome::Ok);

        // 12-month entry dated 2023-04-01 for a 2022-03-01 rating date.
        record
            .entries
            .iter_mut()
            .find(|e| e.horizon_months == 12)
            .unwrap()
            .target_date = d("2023-04-01");
        assert_eq!(
            verify_dates_cove(&record, rating_date),
            CoveOutcome::DateMismatch(vec![12])
        );
    }

    #[test]
    fn gateway_counts_calls_and_writes_transcripts() {
        struct SharedBuf(std::sync::Arc<Mutex<Vec<u8>>>);
        impl Write for SharedBuf {
            fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(buf);
                Ok(buf.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let buf = std::sync::Arc::new(Mutex::new(Vec::new()));
        let gateway = Gateway::new(Box::new(ScriptedBackend::new(["pong"])))
            .with_transcript(Box::new(SharedBuf(buf.clone())));
        let reply = gateway.complete(&request("sys", "ping")).unwrap();
        assert_eq!(reply, "pong");
        assert_eq!(gateway.calls(), 1);
        let text = String::from_utf8(buf.lock().unwrap().clone()).unwrap();
        let row: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(row["response"], "pong");
        assert_eq!(row["backend"], "scripted-mock");
        assert!(row["request_digest"].as_str().unwrap().len() == 64);
    }
}
