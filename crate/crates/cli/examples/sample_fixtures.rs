//! Regenerates the bundled sample dataset and mock responses:
//!
//! ```text
//! cargo run -p fewl-cli --example sample_fixtures -- crates/cli/fixtures/sample
//! cargo run -p fewl-cli -- --config crates/cli/fixtures/sample/config.toml --mode mock \
//!     --cache-dir crates/cli/fixtures/sample/replay score \
//!     --dataset crates/cli/fixtures/sample/dataset.jsonl --out /tmp/sample-scores
//! ```
//!
//! The second command records every provider call into `replay/`.

use std::path::PathBuf;

use fewl::synthetic::SyntheticSpec;

fn main() -> std::io::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "crates/cli/fixtures/sample".into()).into();
    let spec = SyntheticSpec { topics: 2, per_topic: 5, seed: 11, ..SyntheticSpec::default() };
    spec.build().write_files(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}
