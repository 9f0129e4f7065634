//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ionmorph::{Mode, Spectrum};
use rand::Rng;

/// Linear interpolation between closest ranks over a fully sorted copy.
pub fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Pearson correlation from all pairwise differences:
/// `Σ_ij (a_i−a_j)(b_i−b_j) / sqrt(Σ_ij (a_i−a_j)² · Σ_ij (b_i−b_j)²)`.
pub fn pcc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in 0..a.len() {
            let da = a[i] - a[j];
            let db = b[i] - b[j];
            sab += da * db;
            saa += da * da;
            sbb += db * db;
        }
    }
    sab / (saa * sbb).sqrt()
}

/// Moran's I with binary rook weights, as a double sum over all pixel pairs.
pub fn moran_oracle(pixels: &[f64], width: usize, height: usize) -> f64 {
    let n = pixels.len();
    let mean = pixels.iter().sum::<f64>() / n as f64;
    let (mut num, mut w_sum) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (xi, yi) = ((i % width) as i64, (i / width) as i64);
            let (xj, yj) = ((j % width) as i64, (j / width) as i64);
            if (xi - xj).abs() + (yi - yj).abs() == 1 {
                num += (pixels[i] - mean) * (pixels[j] - mean);
                w_sum += 1.0;
            }
        }
    }
    let den: f64 = pixels.iter().map(|v| (v - mean) * (v - mean)).sum();
    assert!(height > 0);
    (n as f64 / w_sum) * num / den
}

/// Bilinear sample at output pixel `(ox, oy)` with half-pixel centers and
/// edge clamping, written out per output pixel.
pub fn bilinear_oracle(pixels: &[f64], w: usize, h: usize, ow: usize, oh: usize, ox: usize, oy: usize) -> f64 {
    let sx = ((ox as f64 + 0.5) * w as f64 / ow as f64 - 0.5).clamp(0.0, (w - 1) as f64);
    let sy = ((oy as f64 + 0.5) * h as f64 / oh as f64 - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let at = |x: usize, y: usize| pixels[y * w + x];
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Window sum over a spectrum by linear scan.
pub fn window_sum_oracle(mzs: &[f64], intensities: &[f64], mz: f64, ppm: f64) -> f64 {
    let lo = mz * (1.0 - ppm * 1e-6);
    let hi = mz * (1.0 + ppm * 1e-6);
    mzs.iter()
        .zip(intensities)
        .filter(|(m, _)| **m >= lo && **m <= hi)
        .map(|(_, v)| *v)
        .sum()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

fn random_axis(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut m = rng.random_range(50.0..500.0);
    (0..len)
        .map(|_| {
            m += rng.random_range(1e-4..5.0);
            m
        })
        .collect()
}

/// A random dataset over a random grid with some pixels left unmeasured.
pub fn random_spectra(rng: &mut impl Rng, mode: Mode) -> (Vec<Spectrum>, u32, u32) {
    let w = rng.random_range(1..=7u32);
    let h = rng.random_range(1..=7u32);
    let len = rng.random_range(0..40);
    let shared = random_axis(rng, len);
    let mut spectra = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if rng.random_bool(0.2) && !(x == w - 1 && y == h - 1) {
                continue;
            }
            let mzs = match mode {
                Mode::Continuous => shared.clone(),
                Mode::Processed => {
                    let n = rng.random_range(0..40);
                    random_axis(rng, n)
                }
            };
            let intensities = mzs
                .iter()
                .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1e6) })
                .collect();
            spectra.push(Spectrum::new(x, y, mzs, intensities));
        }
    }
    (spectra, w, h)
}

/// Writes an executable POSIX sh scorer answering every request with `probs`.
pub fn constant_scorer_script(dir: &Path, name: &str, probs: &str) -> PathBuf {
    write_script(
        dir,
        name,
        &format!(
            "#!/bin/sh\nwhile IFS= read -r line; do\n  id=$(printf '%s' \"$line\" | sed 's/^{{\"id\":\\([0-9]*\\).*/\\1/')\n  printf '{{\"id\":%s,\"probs\":[{probs}]}}\\n' \"$id\"\ndone\n"
        ),
    )
}

pub fn write_script(dir: &Path, name: &str, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}
