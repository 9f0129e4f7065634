//! Enumerates candidates and ranks them with the PCA and Moran's I baselines.
//!
//! `cargo run --example pick_peaks -- [path.imzML] [top_n]`

use ionmorph::fixtures::{write_fixture, FixtureConfig};
use ionmorph::peaks::{enumerate_candidates, rank_peaks, select_top_n, CandidateStrategy, RankOptions};
use ionmorph::scoring::{ScorerKind, ScorerSpec};
use ionmorph::DatasetHandle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let mut args = std::env::args().skip(1);
    let path = match args.next() {
        Some(p) => p.into(),
        None => write_fixture(tmp.path(), &FixtureConfig::default())?.dataset,
    };
    let top_n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(5);

    let ds = DatasetHandle::open(&path)?;
    let candidates = enumerate_candidates(&ds, &CandidateStrategy::default())?;
    println!("{} candidates from mean-spectrum maxima", candidates.len());

    let options = RankOptions { ppm: 10.0, workers: 4 };
    for kind in [ScorerKind::PcaReference, ScorerKind::MoransI] {
        let ranked = rank_peaks(&ds, &candidates, &ScorerSpec::new(kind), &options)?;
        println!("\n{}: top {top_n}", ranked.scorer);
        for e in ranked.entries.iter().take(top_n) {
            println!("  #{:<3} {:>10.4}  {:.4}", e.rank, e.mz, e.score);
        }
        let picked = select_top_n(&ranked, top_n);
        println!("  selected (ascending): {:?}", picked.mzs);
    }
    Ok(())
}
