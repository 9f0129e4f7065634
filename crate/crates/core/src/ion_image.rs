//! Ion image extraction and preprocessing.
//!
//! An ion image sums each pixel's intensities inside the symmetric window
//! `[mz·(1 − ppm·1e-6), mz·(1 + ppm·1e-6)]`. The preprocessing chain is
//! hotspot clipping, division by the 99th percentile with clamping to
//! `[0, 1]`, and a bilinear stretch to 224×224.

use rayon::prelude::*;

use crate::msi_io::{DatasetHandle, MsiError};
use crate::stats;

/// Side length of a [`PreprocessedImage`].
pub const MODEL_SIZE: usize = 224;

/// Default hotspot clipping quantile.
pub const HOTSPOT_QUANTILE: f64 = 0.99;

/// Row-major 2D grid of intensities.
pub trait PixelGrid: Sized {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixels(&self) -> &[f64];
    /// Same metadata, new pixel data of the given shape.
    fn with_pixels(&self, width: usize, height: usize, pixels: Vec<f64>) -> Self;
}

#[derive(Debug, Clone, PartialEq)]
pub struct IonImage {
    pub width: usize,
    pub height: usize,
    /// Row-major; unmeasured pixels are 0.
    pub pixels: Vec<f64>,
    pub target_mz: f64,
    pub ppm: f64,
    pub window: (f64, f64),
    pub dataset_id: String,
}

impl IonImage {
    /// Wraps an existing grid, computing the window from `target_mz` and `ppm`.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>, target_mz: f64, ppm: f64) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count does not match shape");
        IonImage {
            width,
            height,
            pixels,
            target_mz,
            ppm,
            window: mz_window(target_mz, ppm),
            dataset_id: String::new(),
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

impl PixelGrid for IonImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[f64] {
        &self.pixels
    }
    fn with_pixels(&self, width: usize, height: usize, pixels: Vec<f64>) -> Self {
        IonImage {
            width,
            height,
            pixels,
            target_mz: self.target_mz,
            ppm: self.ppm,
            window: self.window,
            dataset_id: self.dataset_id.clone(),
        }
    }
}

/// Model input: 224×224 values in `[0, 1]` plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedImage {
    pixels: Vec<f64>,
    pub target_mz: f64,
    pub ppm: f64,
    pub dataset_id: String,
}

impl PreprocessedImage {
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * MODEL_SIZE + x]
    }

    /// Little-endian float32 row-major bytes, as sent to external scorers.
    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
    }

    /// 8-bit grayscale: `value·255`, rounded half up.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| to_gray_level(v)).collect()
    }

    pub fn to_png(&self) -> Vec<u8> {
        crate::msi_io::mask::encode_gray_png(MODEL_SIZE as u32, MODEL_SIZE as u32, &self.to_gray8())
    }
}

pub(crate) fn to_gray_level(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor().min(255.0) as u8
}

impl PixelGrid for PreprocessedImage {
    fn width(&self) -> usize {
        MODEL_SIZE
    }
    fn height(&self) -> usize {
        MODEL_SIZE
    }
    fn pixels(&self) -> &[f64] {
        &self.pixels
    }
    fn with_pixels(&self, width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert!(width == MODEL_SIZE && height == MODEL_SIZE);
        PreprocessedImage {
            pixels,
            target_mz: self.target_mz,
            ppm: self.ppm,
            dataset_id: self.dataset_id.clone(),
        }
    }
}

/// Symmetric ppm window around `mz`.
pub fn mz_window(mz: f64, ppm: f64) -> (f64, f64) {
    let delta = ppm * 1e-6;
    (mz * (1.0 - delta), mz * (1.0 + delta))
}

/// Sum of intensities whose m/z lies in `[lo, hi]`. `mzs` must be ascending.
pub fn window_sum(mzs: &[f64], intensities: &[f64], lo: f64, hi: f64) -> f64 {
    let start = mzs.partition_point(|&m| m < lo);
    let end = mzs.partition_point(|&m| m <= hi);
    if start >= end {
        return 0.0;
    }
    intensities[start..end].iter().sum()
}

pub fn extract_ion_image(handle: &DatasetHandle, mz: f64, ppm: f64) -> Result<IonImage, MsiError> {
    Ok(extract_ion_images(handle, &[mz], ppm)?.pop().expect("one image per m/z"))
}

/// Extracts one ion image per target m/z, reading every spectrum once.
/// Runs on the current rayon pool; output does not depend on its size.
pub fn extract_ion_images(handle: &DatasetHandle, mzs: &[f64], ppm: f64) -> Result<Vec<IonImage>, MsiError> {
    let windows: Vec<(f64, f64)> = mzs.iter().map(|&mz| mz_window(mz, ppm)).collect();
    let per_spectrum: Vec<Vec<f64>> = (0..handle.spectrum_count())
        .into_par_iter()
        .map(|i| {
            let spec_mzs = handle.read_mzs(i)?;
            let ints = handle.read_intensities(i)?;
            if spec_mzs.len() != ints.len() {
                return Err(MsiError::MalformedXml(format!(
                    "spectrum {i}: {} m/z values but {} intensities",
                    spec_mzs.len(),
                    ints.len()
                )));
            }
            Ok(windows.iter().map(|&(lo, hi)| window_sum(&spec_mzs, &ints, lo, hi)).collect())
        })
        .collect::<Result<_, MsiError>>()?;

    let (w, h) = (handle.width() as usize, handle.height() as usize);
    let dataset_id = handle.dataset_id();
    let mut images: Vec<IonImage> = mzs
        .iter()
        .map(|&mz| IonImage {
            dataset_id: dataset_id.clone(),
            ..IonImage::from_pixels(w, h, vec![0.0; w * h], mz, ppm)
        })
        .collect();
    for (entry, sums) in handle.pixel_index().iter().zip(per_spectrum) {
        let pos = entry.y as usize * w + entry.x as usize;
        for (img, v) in images.iter_mut().zip(sums) {
            img.pixels[pos] = v;
        }
    }
    Ok(images)
}

/// Caps values above the `q`-quantile of the strictly positive pixels.
pub fn hotspot_clip(img: &IonImage, q: f64) -> IonImage {
    let positive: Vec<f64> = img.pixels.iter().copied().filter(|&v| v > 0.0).collect();
    let Some(cap) = stats::quantile(&positive, q) else {
        return img.clone();
    };
    let pixels = img.pixels.iter().map(|&v| v.min(cap)).collect();
    img.with_pixels(img.width, img.height, pixels)
}

/// Divides by the image's 99th percentile and clamps to `[0, 1]`; a zero
/// percentile yields an all-zero image.
pub fn normalize_p99(img: &IonImage) -> IonImage {
    let p99 = stats::quantile(&img.pixels, 0.99).unwrap_or(0.0);
    let pixels = if p99 > 0.0 {
        img.pixels.iter().map(|&v| (v / p99).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; img.pixels.len()]
    };
    img.with_pixels(img.width, img.height, pixels)
}

/// Hotspot clipping followed by percentile normalization, at native size.
pub fn normalize_intensity(img: &IonImage) -> IonImage {
    normalize_p99(&hotspot_clip(img, HOTSPOT_QUANTILE))
}

/// Per-axis interpolation taps: `(lower index, upper index, upper weight)`.
fn bilinear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear resampling of a row-major grid with half-pixel-centred sampling
/// (`src = (dst + 0.5)·scale − 0.5`, clamped to the edge).
pub fn resize_bilinear(pixels: &[f64], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    assert!(width >= 1 && height >= 1, "cannot resize an empty image");
    let xs = bilinear_taps(width, out_w);
    let ys = bilinear_taps(height, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, ty) in &ys {
        let r0 = &pixels[y0 * width..(y0 + 1) * width];
        let r1 = &pixels[y1 * width..(y1 + 1) * width];
        for &(x0, x1, tx) in &xs {
            let top = r0[x0] + tx * (r0[x1] - r0[x0]);
            let bottom = r1[x0] + tx * (r1[x1] - r1[x0]);
            out.push(top + ty * (bottom - top));
        }
    }
    out
}

/// Stretches to 224×224 without preserving aspect ratio.
pub fn resize_224(img: &IonImage) -> PreprocessedImage {
    let pixels = resize_bilinear(&img.pixels, img.width, img.height, MODEL_SIZE, MODEL_SIZE);
    PreprocessedImage {
        pixels,
        target_mz: img.target_mz,
        ppm: img.ppm,
        dataset_id: img.dataset_id.clone(),
    }
}

/// `hotspot_clip(0.99)`, then `normalize_p99`, then `resize_224`.
pub fn preprocess(img: &IonImage) -> PreprocessedImage {
    let mut out = resize_224(&normalize_intensity(img));
    // interpolation of values in [0, 1] stays in range up to rounding
    for v in &mut out.pixels {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

pub fn flip_h<G: PixelGrid>(img: &G) -> G {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let pixels = (0..h)
        .flat_map(|y| (0..w).rev().map(move |x| src[y * w + x]))
        .collect();
    img.with_pixels(w, h, pixels)
}

pub fn flip_v<G: PixelGrid>(img: &G) -> G {
    let (w, h) = (img.width(), img.height());
    let src = img.pixels();
    let pixels = (0..h)
        .rev()
        .flat_map(|y| src[y * w..(y + 1) * w].iter().copied())
        .collect();
    img.with_pixels(w, h, pixels)
}

/// Rotates by `k` quarter turns. One quarter turn maps `[[1,2],[3,4]]` to
/// `[[3,1],[4,2]]`: clockwise as displayed with row 0 on top, which is
/// counter-clockwise in y-up image coordinates.
pub fn rot90<G: PixelGrid>(img: &G, k: i32) -> G {
    let turns = k.rem_euclid(4);
    let (mut w, mut h) = (img.width(), img.height());
    let mut data = img.pixels().to_vec();
    for _ in 0..turns {
        // new grid is h wide and w tall; out[r][c] = in[h-1-c][r]
        let mut next = Vec::with_capacity(data.len());
        for r in 0..w {
            for c in 0..h {
                next.push(data[(h - 1 - c) * w + r]);
            }
        }
        data = next;
        std::mem::swap(&mut w, &mut h);
    }
    img.with_pixels(w, h, data)
}
