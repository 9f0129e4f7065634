//! Opens an imzML dataset and prints its layout and one spectrum.
//!
//! `cargo run --example read_dataset -- [path.imzML]`
//! Without a path a synthetic dataset is written to a temp dir first.

use ionmorph::fixtures::{write_fixture, FixtureConfig};
use ionmorph::msi_io::{write_dataset, DatasetHandle};
use ionmorph::{Mode, Spectrum};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => write_fixture(tmp.path(), &FixtureConfig::default())?.dataset,
    };

    let ds = DatasetHandle::open(&path)?;
    println!("{}: {:?} mode, {}x{} grid, {} spectra", ds.dataset_id(), ds.mode(), ds.width(), ds.height(), ds.spectrum_count());
    let uuid: String = ds.uuid().iter().map(|b| format!("{b:02x}")).collect();
    println!("uuid {uuid}");
    if let Some(axis) = ds.mz_axis() {
        println!("shared axis: {} points, {:.4}..{:.4}", axis.len(), axis[0], axis[axis.len() - 1]);
    }

    let s = ds.read_spectrum(0)?;
    let (apex, top) = s
        .mzs
        .iter()
        .zip(&s.intensities)
        .fold((0.0, f64::MIN), |acc, (&m, &v)| if v > acc.1 { (m, v) } else { acc });
    println!("pixel ({}, {}): {} points, apex {apex:.4} at {top:.3}", s.x, s.y, s.mzs.len());

    // a processed-mode dataset, written and read back
    let spectra = vec![
        Spectrum::new(0, 0, vec![100.0, 150.5], vec![1.0, 2.0]),
        Spectrum::new(1, 0, vec![120.25], vec![4.0]),
    ];
    let out = tmp.path().join("tiny.imzML");
    write_dataset(&spectra, Mode::Processed, &out)?;
    let back = DatasetHandle::open(&out)?;
    for i in 0..back.spectrum_count() {
        println!("tiny[{i}] = {:?}", back.read_spectrum(i)?);
    }
    Ok(())
}
