//! Synthetic datasets with a known answer: a few channels follow a mask
//! template, the rest are spatial noise.

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::msi_io::{write_dataset, Mode, MsiError, SegmentationMask};
use crate::Spectrum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub planted: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise on planted channels.
    pub noise_sigma: f64,
    /// Upper bound of the uniform noise channels.
    pub noise_max: f64,
    pub first_mz: f64,
    pub mz_spacing: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            width: 16,
            height: 16,
            channels: 20,
            planted: 5,
            seed: 7,
            noise_sigma: 0.1,
            noise_max: 1.5,
            first_mz: 200.0,
            mz_spacing: 50.0,
        }
    }
}

/// Profile sample offsets around each peak apex, in ppm.
const PROFILE_PPM: [f64; 7] = [-6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0];
/// Zero-intensity baseline samples separating neighbouring peaks, in ppm.
const BASELINE_PPM: [f64; 2] = [-30.0, 30.0];
const PROFILE_SIGMA_PPM: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureInfo {
    pub config: FixtureConfig,
    pub dataset: PathBuf,
    pub mask: PathBuf,
    /// Apex m/z of every channel, ascending.
    pub channel_mzs: Vec<f64>,
    /// Apex m/z of the planted channels, ascending.
    pub planted_mzs: Vec<f64>,
}

pub struct Fixture {
    pub spectra: Vec<Spectrum>,
    pub mask: SegmentationMask,
    pub channel_mzs: Vec<f64>,
    pub planted_mzs: Vec<f64>,
    /// Per-channel window-free pixel values, `values[channel][y·w + x]`.
    pub values: Vec<Vec<f64>>,
}

/// An elliptical region centered in the grid, covering roughly a third of it.
pub fn template_mask(width: u32, height: u32) -> SegmentationMask {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let (rx, ry) = (width as f64 * 0.38, height as f64 * 0.3);
    let labels = (0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            u8::from(dx * dx + dy * dy <= 1.0)
        })
        .collect();
    SegmentationMask::new(width, height, labels).expect("mask dimensions")
}

pub fn generate(config: &FixtureConfig) -> Fixture {
    assert!(config.planted <= config.channels, "more planted channels than channels");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = (config.width * config.height) as usize;
    let mask = template_mask(config.width, config.height);
    let template = mask.foreground();
    let mut planted: Vec<usize> = index::sample(&mut rng, config.channels, config.planted).into_vec();
    planted.sort_unstable();

    let normal = Normal::new(0.0, config.noise_sigma).expect("sigma is finite");
    let values: Vec<Vec<f64>> = (0..config.channels)
        .map(|ch| {
            if planted.binary_search(&ch).is_ok() {
                template
                    .iter()
                    .map(|t| (0.5 + t + normal.sample(&mut rng)).max(0.0))
                    .collect()
            } else {
                (0..n).map(|_| rng.random_range(0.0..config.noise_max)).collect()
            }
        })
        .collect();

    let channel_mzs: Vec<f64> = (0..config.channels)
        .map(|j| config.first_mz + config.mz_spacing * j as f64)
        .collect();
    let mut axis = Vec::new();
    // (channel, shape) for each axis sample; baseline samples carry no channel
    let mut shape = Vec::new();
    for (ch, &apex) in channel_mzs.iter().enumerate() {
        axis.push(apex * (1.0 + BASELINE_PPM[0] * 1e-6));
        shape.push(None);
        for &o in &PROFILE_PPM {
            axis.push(apex * (1.0 + o * 1e-6));
            shape.push(Some((ch, (-0.5 * (o / PROFILE_SIGMA_PPM).powi(2)).exp())));
        }
        axis.push(apex * (1.0 + BASELINE_PPM[1] * 1e-6));
        shape.push(None);
    }

    let spectra = (0..n)
        .map(|i| {
            let intensities = shape
                .iter()
                .map(|s| s.map_or(0.0, |(ch, w)| w * values[ch][i]))
                .collect();
            Spectrum::new(i as u32 % config.width, i as u32 / config.width, axis.clone(), intensities)
        })
        .collect();
    let planted_mzs = planted.iter().map(|&ch| channel_mzs[ch]).collect();
    Fixture {
        spectra,
        mask,
        channel_mzs,
        planted_mzs,
        values,
    }
}

/// Writes `fixture.imzML`/`.ibd`, `mask.pgm` and `fixture.json` into `dir`.
pub fn write_fixture(dir: impl AsRef<Path>, config: &FixtureConfig) -> Result<FixtureInfo, MsiError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| MsiError::io(dir, e))?;
    let fx = generate(config);
    let dataset = dir.join("fixture.imzML");
    let mask = dir.join("mask.pgm");
    write_dataset(&fx.spectra, Mode::Continuous, &dataset)?;
    std::fs::write(&mask, fx.mask.to_pgm()).map_err(|e| MsiError::io(&mask, e))?;
    let info = FixtureInfo {
        config: config.clone(),
        dataset,
        mask,
        channel_mzs: fx.channel_mzs,
        planted_mzs: fx.planted_mzs,
    };
    let json_path = dir.join("fixture.json");
    let json = serde_json::to_string_pretty(&info).expect("fixture info serializes");
    std::fs::write(&json_path, json + "\n").map_err(|e| MsiError::io(&json_path, e))?;
    log::info!("fixture seed {} planted {:?}", config.seed, info.planted_mzs);
    Ok(info)
}
