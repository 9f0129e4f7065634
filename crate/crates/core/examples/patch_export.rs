//! Cuts labeled patch cubes around mask pixels and writes an `.iop` file.
//!
//! `cargo run --example patch_export -- [p] [out.iop]`

use ionmorph::fixtures::{write_fixture, FixtureConfig};
use ionmorph::msi_io::load_mask;
use ionmorph::patches::{export_patches, extract_patches, read_patches};
use ionmorph::peaks::PeakList;
use ionmorph::DatasetHandle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let p: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(11);
    let tmp = tempfile::tempdir()?;
    let out = args.map(Into::into).next().unwrap_or_else(|| tmp.path().join("patches.iop"));

    let info = write_fixture(tmp.path(), &FixtureConfig::default())?;
    let ds = DatasetHandle::open(&info.dataset)?;
    let mask = load_mask(&info.mask)?;
    let peaks = PeakList::from_mzs(info.planted_mzs.clone(), "planted");

    let stream = extract_patches(&ds, &peaks, &mask, p, 10.0)?;
    let header = stream.header().clone();
    println!("{} cubes of {p}x{p}x{}", header.record_count, header.channels);
    let summary = export_patches(&header, stream, &out)?;
    println!("wrote {} ({} records, per label {:?})", out.display(), summary.record_count, summary.per_label);

    let back = read_patches(&out)?;
    let first = &back.records[0];
    println!("first record: label {} at {:?}, center spectrum {:?}", first.label, first.center, first.center_spectrum());
    Ok(())
}
