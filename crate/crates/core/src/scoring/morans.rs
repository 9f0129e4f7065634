//! Global Moran's I with rook (4-neighbour) adjacency and binary weights.

use super::ScoreError;

/// `I = (N / W) · Σ_i Σ_{j ∈ rook(i)} z_i z_j / Σ_i z_i²` with `z = x − mean(x)`
/// and `W` the number of ordered neighbour pairs.
pub fn morans_i(pixels: &[f64], width: usize, height: usize) -> Result<f64, ScoreError> {
    let n = width * height;
    if pixels.len() != n {
        return Err(ScoreError::ShapeMismatch(format!(
            "{} pixels for a {width}x{height} grid",
            pixels.len()
        )));
    }
    if n < 2 {
        return Err(ScoreError::TooFewPixels);
    }
    let mean = pixels.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = pixels.iter().map(|v| v - mean).collect();
    let denom: f64 = z.iter().map(|v| v * v).sum();
    if denom == 0.0 || pixels.iter().all(|&v| v == pixels[0]) {
        return Err(ScoreError::ConstantImage);
    }
    // each unordered edge counted once, then doubled
    let mut cross = 0.0;
    let mut edges = 0usize;
    for y in 0..height {
        let row = &z[y * width..(y + 1) * width];
        for x in 0..width {
            if x + 1 < width {
                cross += row[x] * row[x + 1];
                edges += 1;
            }
            if y + 1 < height {
                cross += row[x] * z[(y + 1) * width + x];
                edges += 1;
            }
        }
    }
    let total_weight = 2.0 * edges as f64;
    Ok(n as f64 / total_weight * (2.0 * cross) / denom)
}
