//! Scores a peak selection against a segmentation mask with mSCF1.

use ionmorph::eval::{ground_truth, mscf1, EvalConfig};
use ionmorph::fixtures::{write_fixture, FixtureConfig};
use ionmorph::msi_io::load_mask;
use ionmorph::peaks::{enumerate_candidates, rank_peaks, select_top_n, CandidateStrategy, PeakList, RankOptions};
use ionmorph::scoring::{ScorerKind, ScorerSpec};
use ionmorph::DatasetHandle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let info = write_fixture(tmp.path(), &FixtureConfig::default())?;
    let ds = DatasetHandle::open(&info.dataset)?;
    let mask = load_mask(&info.mask)?;

    let candidates = enumerate_candidates(&ds, &CandidateStrategy::default())?;
    let config = EvalConfig::default();
    let gt = ground_truth(&ds, &mask, &candidates, 10.0, config.region_mode)?;
    println!("ground truth PCC per candidate:");
    for (mz, r) in &gt.entries {
        println!("  {mz:>8.2}  {r:+.3}");
    }

    let ranked = rank_peaks(&ds, &candidates, &ScorerSpec::new(ScorerKind::PcaReference), &RankOptions::default())?;
    let picked = select_top_n(&ranked, info.planted_mzs.len());
    let report = mscf1(&picked, &gt, &config)?;
    print!("\npca top-{}\n{}", picked.len(), report.to_csv());

    let random = PeakList::from_mzs(info.channel_mzs.iter().step_by(4).copied().collect(), "every 4th");
    let report = mscf1(&random, &gt, &config)?;
    println!("\nevery 4th channel: mSCF1 {:.3}", report.mscf1);
    Ok(())
}
