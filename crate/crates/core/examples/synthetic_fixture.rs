//! Writes a synthetic dataset with planted structured channels.
//!
//! `cargo run --example synthetic_fixture -- [out_dir] [seed]`

use ionmorph::fixtures::{write_fixture, FixtureConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "fixture-out".into());
    let mut cfg = FixtureConfig::default();
    if let Some(seed) = args.next() {
        cfg.seed = seed.parse()?;
    }
    let info = write_fixture(&out, &cfg)?;
    println!("dataset  {}", info.dataset.display());
    println!("mask     {}", info.mask.display());
    println!("grid     {}x{}, {} channels", cfg.width, cfg.height, cfg.channels);
    println!("planted  {:?}", info.planted_mzs);
    Ok(())
}
