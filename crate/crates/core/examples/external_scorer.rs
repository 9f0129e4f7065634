//! Ranks candidates with an external scorer process.
//!
//! `cargo run --example external_scorer -- [command...]`
//!
//! The scorer reads one JSON request per line on stdin,
//! `{"id":N,"shape":[224,224],"dtype":"f32le","data":"<base64>"}`, and writes
//! `{"id":N,"probs":[p0,...,p5]}` or `{"id":N,"error":"..."}` per line on stdout.
//! Without a command a small sh scorer returning fixed probabilities is used.

use ionmorph::fixtures::{write_fixture, FixtureConfig};
use ionmorph::peaks::{enumerate_candidates, rank_peaks, CandidateStrategy, RankOptions};
use ionmorph::scoring::ScorerSpec;
use ionmorph::DatasetHandle;

const DEMO_SCORER: &str = r#"#!/bin/sh
while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/^{"id":\([0-9]*\).*/\1/')
  printf '{"id":%s,"probs":[0.3,0.1,0.2,0.1,0.2,0.1]}\n' "$id"
done
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let info = write_fixture(tmp.path(), &FixtureConfig::default())?;
    let ds = DatasetHandle::open(&info.dataset)?;

    let args: Vec<String> = std::env::args().skip(1).collect();
    let command = if args.is_empty() {
        let script = tmp.path().join("scorer.sh");
        std::fs::write(&script, DEMO_SCORER)?;
        format!("sh {}", script.display())
    } else {
        args.join(" ")
    };

    let candidates = enumerate_candidates(&ds, &CandidateStrategy::Exhaustive { stride: 9 })?;
    let spec = ScorerSpec::external(&command)?;
    let ranked = rank_peaks(&ds, &candidates, &spec, &RankOptions { ppm: 10.0, workers: 2 })?;
    println!("scorer: {}", ranked.scorer);
    print!("{}", ranked.to_csv());
    Ok(())
}
