//! ratebench-core: generate multi-horizon stock ratings through an
//! interchangeable chat-completion backend and score them (alongside real
//! analyst ratings) against quantile-ranked forward returns.
//!
//! The pipeline, end to end:
//!
//! 1. [`market`] ingests price series and computes returns, relative returns,
//!    and the 13-number technical snapshot every prompt method receives.
//! 2. [`news`] filters articles for relevance, aggregates them monthly, and
//!    drives LLM summarization and sentiment scoring.
//! 3. [`fundamentals`] holds point-in-time quarterly filing metrics and
//!    renders them as the HTML table embedded in Fundamentals prompts.
//! 4. [`prompting`] assembles system/user prompts for the five methods
//!    (Vanilla, News, Sentiment, Fundamentals, Fundamentals + Sentiment).
//! 5. [`gateway`] talks to the chat backend (HTTP or deterministic mock),
//!    parses rating responses, and verifies target dates (CoVE).
//! 6. [`labeler`] turns cross-sectional forward returns into quintile
//!    ground-truth ratings.
//! 7. [`evaluation`] scores predictions: MAE +/- std, composite error,
//!    monthly breakdowns, rating distributions, Spearman correlations.
//! 8. [`runner`] plans the experiment grid, orchestrates the above with
//!    resumable persistence ([`store`]), and emits machine-readable reports.
//!
//! [`synthetic`] generates deterministic synthetic datasets so the whole
//! pipeline can run and be tested without proprietary market data.

pub mod dates;
pub mod evaluation;
pub mod fundamentals;
pub mod gateway;
pub mod labeler;
pub mod market;
pub mod news;
pub mod prompting;
pub mod ratings;
pub mod runner;
pub mod store;
pub mod synthetic;

pub use ratings::OrdinalRating;
