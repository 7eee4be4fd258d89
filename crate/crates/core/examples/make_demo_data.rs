//! Regenerates the bundled demo dataset under `fixtures/demo/`.
//!
//! The generator is fully deterministic, so running this is only needed
//! after changing generation parameters:
//!
//! ```bash
//! cargo run -p ratebench-core --example make_demo_data
//! ```

use std::path::Path;

use ratebench_core::synthetic::{generate, write_to_dir, SyntheticConfig};

fn main() -> std::io::Result<()> {
    let dir = Path::new("fixtures/demo");
    let dataset = generate(&SyntheticConfig::default());
    let files = write_to_dir(&dataset, dir)?;

    let config = r#"# Demo experiment: ten synthetic companies, six rating months,
# deterministic mock backend. Paths resolve relative to this file.

[data]
universe = "universe.toml"
prices = "prices.csv"
news = "news.jsonl"
analyst_ratings = "analyst.csv"
fundamentals = "fundamentals.csv"

[experiment]
method = "fundamentals-sentiment"
start_month = "2023-01"
end_month = "2023-06"
seed = 42
output_dir = "../../out/demo"

[gateway]
backend = "mock"
concurrency = 2
"#;
    std::fs::write(dir.join("config.toml"), config)?;

    for path in [
        files.universe,
        files.prices,
        files.news,
        files.analyst,
        files.fundamentals,
    ] {
        println!("wrote {}", path.display());
    }
    println!("wrote {}", dir.join("config.toml").display());
    Ok(())
}
