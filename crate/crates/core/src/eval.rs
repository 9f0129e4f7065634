//! mSCF1: F1 of a peak selection against mask-derived ground truth,
//! averaged over several correlation thresholds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ion_image;
use crate::msi_io::{DatasetHandle, MsiError, SegmentationMask};
use crate::peaks::{CandidateList, PeakList};
use crate::stats::{self, StatsError};

/// Ground-truth score given to ion images without spatial variation.
pub const DEGENERATE_GT: f64 = -1.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Msi(#[from] MsiError),
    #[error("every threshold has an empty ground truth set")]
    AllThresholdsEmpty,
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegionMode {
    /// Best correlation with any single region indicator.
    #[default]
    PerRegionMax,
    /// Correlation with the indicator of all labeled pixels.
    WholeForeground,
}

impl std::str::FromStr for RegionMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "perregionmax" | "perregion" => Ok(RegionMode::PerRegionMax),
            "wholeforeground" | "foreground" => Ok(RegionMode::WholeForeground),
            _ => Err(EvalError::InvalidConfig(format!("unknown region mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    pub match_ppm: f64,
    pub region_mode: RegionMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: vec![0.4, 0.5, 0.6, 0.7, 0.8],
            match_ppm: 10.0,
            region_mode: RegionMode::PerRegionMax,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.thresholds.is_empty() {
            return bad("no thresholds".into());
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return bad(format!("threshold {t} outside (0, 1)"));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad("thresholds must be strictly ascending".into());
        }
        if !(self.match_ppm >= 0.0 && self.match_ppm.is_finite()) {
            return bad(format!("match ppm {} must be a finite non-negative number", self.match_ppm));
        }
        Ok(())
    }
}

/// Parses a comma list of thresholds.
pub fn parse_thresholds(s: &str) -> Result<Vec<f64>, EvalError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| EvalError::InvalidConfig(format!("threshold {t:?} is not a number")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruthScores {
    /// `(mz, gt_pcc)`, ascending m/z, one entry per candidate.
    pub entries: Vec<(f64, f64)>,
    pub region_mode: RegionMode,
}

impl GroundTruthScores {
    pub fn positives(&self, t: f64) -> Vec<f64> {
        self.entries.iter().filter(|(_, s)| *s >= t).map(|(m, _)| *m).collect()
    }

    pub fn get(&self, mz: f64) -> Option<f64> {
        self.entries.iter().find(|(m, _)| *m == mz).map(|(_, s)| *s)
    }
}

/// PCC of an image with each reference; the best value, or
/// [`DEGENERATE_GT`] for a constant image.
fn best_pcc(pixels: &[f64], references: &[Vec<f64>]) -> f64 {
    let mut best = DEGENERATE_GT;
    for r in references {
        match stats::pearson(pixels, r) {
            Ok(v) => best = best.max(v),
            Err(StatsError::ConstantInput) => {}
            Err(e) => panic!("reference and image disagree in size: {e}"),
        }
    }
    best
}

pub fn ground_truth(
    handle: &DatasetHandle,
    mask: &SegmentationMask,
    candidates: &CandidateList,
    ppm: f64,
    region_mode: RegionMode,
) -> Result<GroundTruthScores, EvalError> {
    mask.check_dims(handle)?;
    let references: Vec<Vec<f64>> = match region_mode {
        RegionMode::PerRegionMax => (1..=mask.region_count()).map(|k| mask.indicator(k)).collect(),
        RegionMode::WholeForeground => vec![mask.foreground()],
    };
    let references: Vec<Vec<f64>> = references.into_iter().filter(|r| !stats::is_constant(r)).collect();
    if references.is_empty() {
        log::warn!("mask has no non-constant region indicator; every ground truth score is {DEGENERATE_GT}");
    }
    let mut entries = Vec::with_capacity(candidates.len());
    for chunk in candidates.mzs.chunks(256) {
        let images = ion_image::extract_ion_images(handle, chunk, ppm)?;
        let scores: Vec<f64> = images.par_iter().map(|img| best_pcc(&img.pixels, &references)).collect();
        entries.extend(chunk.iter().copied().zip(scores));
    }
    Ok(GroundTruthScores { entries, region_mode })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gt_size: usize,
    pub true_positives: usize,
}

/// Greedy one-to-one matching, closest pairs first, within
/// `ppm · 1e-6 · gt m/z`. Returns the number of matched pairs.
pub fn match_count(selected: &[f64], positives: &[f64], match_ppm: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &s) in selected.iter().enumerate() {
        for (j, &g) in positives.iter().enumerate() {
            let d = (s - g).abs();
            if d <= match_ppm * 1e-6 * g {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_s = vec![false; selected.len()];
    let mut used_g = vec![false; positives.len()];
    let mut n = 0;
    for (_, i, j) in pairs {
        if !used_s[i] && !used_g[j] {
            used_s[i] = true;
            used_g[j] = true;
            n += 1;
        }
    }
    n
}

pub fn f1_at(selected: &PeakList, gt: &GroundTruthScores, t: f64, match_ppm: f64) -> ThresholdResult {
    let positives = gt.positives(t);
    let tp = match_count(&selected.mzs, &positives, match_ppm);
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, selected.len());
    let recall = ratio(tp, positives.len());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ThresholdResult {
        threshold: t,
        precision,
        recall,
        f1,
        gt_size: positives.len(),
        true_positives: tp,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub selected_count: usize,
    pub candidate_count: usize,
    pub thresholds: Vec<ThresholdResult>,
    pub skipped_thresholds: Vec<f64>,
    pub mscf1: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per evaluated threshold, then a `mean` summary row. The
    /// config is echoed on a leading `#` line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# config: {}", serde_json::to_string(&self.config).expect("config serializes"));
        out.push_str("threshold,precision,recall,f1,gt_size\n");
        for r in &self.thresholds {
            let _ = writeln!(out, "{},{},{},{},{}", r.threshold, r.precision, r.recall, r.f1, r.gt_size);
        }
        let _ = writeln!(out, "mean,,,{},", self.mscf1);
        out
    }
}

pub fn mscf1(selected: &PeakList, gt: &GroundTruthScores, config: &EvalConfig) -> Result<EvalReport, EvalError> {
    config.validate()?;
    let mut thresholds = Vec::new();
    let mut skipped = Vec::new();
    for &t in &config.thresholds {
        let r = f1_at(selected, gt, t, config.match_ppm);
        if r.gt_size == 0 {
            log::info!("threshold {t}: ground truth is empty, skipped");
            skipped.push(t);
        } else {
            thresholds.push(r);
        }
    }
    if thresholds.is_empty() {
        return Err(EvalError::AllThresholdsEmpty);
    }
    let mscf1 = thresholds.iter().map(|r| r.f1).sum::<f64>() / thresholds.len() as f64;
    Ok(EvalReport {
        config: config.clone(),
        selected_count: selected.len(),
        candidate_count: gt.entries.len(),
        thresholds,
        skipped_thresholds: skipped,
        mscf1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(entries: &[(f64, f64)]) -> GroundTruthScores {
        GroundTruthScores {
            entries: entries.to_vec(),
            region_mode: RegionMode::PerRegionMax,
        }
    }

    #[test]
    fn three_of_five_plus_one_negative() {
        let g = gt(&[(100.0, 0.9), (200.0, 0.9), (300.0, 0.9), (400.0, 0.9), (500.0, 0.9), (600.0, 0.1)]);
        let sel = PeakList::from_mzs(vec![100.0, 200.0, 300.0, 600.0], "t");
        let r = f1_at(&sel, &g, 0.5, 5.0);
        assert_eq!(r.gt_size, 5);
        assert!((r.precision - 0.75).abs() < 1e-15);
        assert!((r.recall - 0.6).abs() < 1e-15);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_and_disjoint() {
        let g = gt(&[(100.0, 0.9), (200.0, 0.2)]);
        let r = f1_at(&PeakList::from_mzs(vec![100.0], "t"), &g, 0.5, 5.0);
        assert_eq!(r.f1, 1.0);
        let r = f1_at(&PeakList::from_mzs(vec![200.0], "t"), &g, 0.5, 5.0);
        assert_eq!(r.f1, 0.0);
        let r = f1_at(&PeakList::from_mzs(vec![], "t"), &g, 0.5, 5.0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn matching_is_one_to_one_and_nearest_first() {
        // two selections within tolerance of one positive: only one counts
        assert_eq!(match_count(&[100.0, 100.0001], &[100.0], 10.0), 1);
        // the closer selection takes the nearer positive, leaving the other free
        assert_eq!(match_count(&[100.0004, 100.0012], &[100.0, 100.0008], 10.0), 2);
        assert_eq!(match_count(&[100.01], &[100.0], 10.0), 0);
    }

    #[test]
    fn skipped_thresholds_and_mean() {
        let g = gt(&[(100.0, 0.95), (200.0, 0.55)]);
        let cfg = EvalConfig::default();
        let rep = mscf1(&PeakList::from_mzs(vec![100.0], "t"), &g, &cfg).unwrap();
        assert_eq!(rep.skipped_thresholds, Vec::<f64>::new());
        let mean = rep.thresholds.iter().map(|r| r.f1).sum::<f64>() / rep.thresholds.len() as f64;
        assert_eq!(rep.mscf1, mean);

        let g = gt(&[(100.0, 0.45)]);
        let rep = mscf1(&PeakList::from_mzs(vec![100.0], "t"), &g, &cfg).unwrap();
        assert_eq!(rep.skipped_thresholds, vec![0.5, 0.6, 0.7, 0.8]);
        assert_eq!(rep.mscf1, 1.0);

        let g = gt(&[(100.0, 0.1)]);
        assert!(matches!(
            mscf1(&PeakList::from_mzs(vec![100.0], "t"), &g, &cfg),
            Err(EvalError::AllThresholdsEmpty)
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = EvalConfig::default();
        assert!(c.validate().is_ok());
        c.thresholds = vec![0.5, 0.5];
        assert!(c.validate().is_err());
        c.thresholds = vec![0.0, 0.5];
        assert!(c.validate().is_err());
        c.thresholds = vec![];
        assert!(c.validate().is_err());
        assert_eq!(parse_thresholds("0.4, 0.6").unwrap(), vec![0.4, 0.6]);
    }

    #[test]
    fn csv_has_summary_row() {
        let g = gt(&[(100.0, 0.95)]);
        let rep = mscf1(&PeakList::from_mzs(vec![100.0], "t"), &g, &EvalConfig::default()).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# config: "));
        assert_eq!(lines[1], "threshold,precision,recall,f1,gt_size");
        assert_eq!(lines.len(), 2 + 5 + 1);
        assert_eq!(*lines.last().unwrap(), "mean,,,1,");
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(v["mscf1"], 1.0);
        assert_eq!(v["config"]["region_mode"], "per_region_max");
    }
}
