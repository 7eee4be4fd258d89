//! Shared fixture plumbing for the integration suites: a deterministic
//! synthetic dataset plus a config file written into a caller-owned
//! directory.

use std::path::{Path, PathBuf};

use ratebench_core::synthetic::{generate, write_to_dir, SyntheticConfig};

pub const FIXTURE_START_MONTH: &str = "2023-01";
pub const FIXTURE_END_MONTH: &str = "2023-06";

/// Writes the standard 10-company fixture (prices, universe, news, analyst
/// ratings, fundamentals) plus a config for `method`, returning the config
/// path. Identical inputs produce byte-identical files.
pub fn write_fixture(dir: &Path, method: &str, seed: u64) -> PathBuf {
    write_fixture_with(dir, method, seed, 10, |_| {})
}

pub fn write_fixture_with(
    dir: &Path,
    method: &str,
    seed: u64,
    companies: usize,
    tweak_config: impl FnOnce(&mut String),
) -> PathBuf {
    let dataset = generate(&SyntheticConfig {
        companies,
        sectors: 2,
        ..Default::default()
    });
    write_to_dir(&dataset, dir).expect("fixture files");

    let mut config = format!(
        r#"[data]
universe = "universe.toml"
prices = "prices.csv"
news = "news.jsonl"
analyst_ratings = "analyst.csv"
fundamentals = "fundamentals.csv"

[experiment]
method = "{method}"
start_month = "{FIXTURE_START_MONTH}"
end_month = "{FIXTURE_END_MONTH}"
seed = {seed}
output_dir = "out"

[gateway]
backend = "mock"
concurrency = 2
"#
    );
    tweak_config(&mut config);
    let path = dir.join("config.toml");
    std::fs::write(&path, config).expect("config file");
    path
}
