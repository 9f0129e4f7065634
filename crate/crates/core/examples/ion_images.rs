//! Extracts an ion image, runs the preprocessing chain and writes PNGs.
//!
//! `cargo run --example ion_images -- [mz] [ppm] [out_dir]`

use ionmorph::fixtures::{write_fixture, FixtureConfig};
use ionmorph::ion_image::{extract_ion_image, flip_h, hotspot_clip, normalize_p99, preprocess, rot90};
use ionmorph::DatasetHandle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mz: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300.0);
    let ppm: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10.0);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "ion-images-out".into()));
    std::fs::create_dir_all(&out)?;

    let tmp = tempfile::tempdir()?;
    let info = write_fixture(tmp.path(), &FixtureConfig::default())?;
    let ds = DatasetHandle::open(&info.dataset)?;

    let img = extract_ion_image(&ds, mz, ppm)?;
    let (lo, hi) = img.window;
    let max = img.pixels.iter().cloned().fold(f64::MIN, f64::max);
    println!("m/z {mz} ± {ppm} ppm -> [{lo:.5}, {hi:.5}], {}x{}, max {max:.3}", img.width, img.height);

    let clipped = hotspot_clip(&img, 0.99);
    let norm = normalize_p99(&clipped);
    println!("after clip+normalize: max {:.3}", norm.pixels.iter().cloned().fold(f64::MIN, f64::max));

    let model_input = preprocess(&img);
    println!("model input {} pixels", model_input.pixels().len());
    std::fs::write(out.join("input.png"), model_input.to_png())?;
    std::fs::write(out.join("flip_h.png"), flip_h(&model_input).to_png())?;
    std::fs::write(out.join("rot90.png"), rot90(&model_input, 1).to_png())?;
    println!("wrote {}/{{input,flip_h,rot90}}.png", out.display());
    Ok(())
}
