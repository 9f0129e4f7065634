//! Order statistics and correlation shared by preprocessing, scoring and
//! evaluation.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("input is constant, correlation is undefined")]
    ConstantInput,
    #[error("shape mismatch: {0} vs {1} values")]
    ShapeMismatch(usize, usize),
    #[error("input is empty")]
    Empty,
}

/// `q`-quantile (`0 ≤ q ≤ 1`) with linear interpolation between the closest
/// ranks: position `h = (n-1)·q` on the sorted values, interpolated between
/// `floor(h)` and `floor(h)+1`. Returns `None` for an empty slice.
///
/// Works on a scratch copy with two partial selections, so it is `O(n)`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let mut scratch = values.to_vec();
    Some(quantile_in_place(&mut scratch, q))
}

/// Same as [`quantile`] but reorders `values`. `values` must be nonempty.
pub fn quantile_in_place(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    assert!(n > 0, "quantile of an empty slice");
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let (_, &mut lo_val, right) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || right.is_empty() {
        return lo_val;
    }
    let hi_val = right.iter().copied().fold(f64::INFINITY, f64::min);
    lo_val + frac * (hi_val - lo_val)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Pearson product-moment correlation of two equally long sequences,
/// computed in two passes (means first, then centered sums).
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::ShapeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(StatsError::ConstantInput);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn is_constant(values: &[f64]) -> bool {
    match values.first() {
        Some(&first) => values.iter().all(|&v| v == first),
        None => true,
    }
}
