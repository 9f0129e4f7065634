//! Candidate enumeration, ranking by structure score, top-n selection and
//! merging of peak lists across tissue sections.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::classes::TargetSet;
use crate::ion_image::{self, IonImage};
use crate::msi_io::{DatasetHandle, MsiError};
use crate::scoring::{self, aggregate_score, ExternalScorer, ScoreError, ScorerKind, ScorerSpec};

/// Default prominence fraction for mean-spectrum maxima.
pub const DEFAULT_PROMINENCE_FRACTION: f64 = 0.01;

/// Bin width used to build a mean spectrum for processed-mode datasets.
pub const PROCESSED_BIN_PPM: f64 = 5.0;

/// Number of ion images extracted per pass over the dataset.
const EXTRACTION_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum PeakError {
    #[error(transparent)]
    Msi(#[from] MsiError),
    #[error("scoring m/z {mz}: {source}")]
    Scorer {
        mz: f64,
        #[source]
        source: ScoreError,
    },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("no candidate m/z values")]
    EmptyCandidates,
    #[error("candidate strategy does not fit the dataset: {0}")]
    StrategyModeMismatch(String),
    #[error("invalid candidate strategy: {0}")]
    InvalidStrategy(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateStrategy {
    /// Every `stride`-th entry of the continuous m/z axis.
    Exhaustive { stride: usize },
    /// Local maxima of the pixel-mean spectrum with prominence at least
    /// `min_prominence_fraction · (max − min)` of that spectrum.
    MeanSpectrumMaxima { min_prominence_fraction: f64 },
    /// One m/z per line, `#` comments allowed.
    Explicit(PathBuf),
}

impl Default for CandidateStrategy {
    fn default() -> Self {
        CandidateStrategy::MeanSpectrumMaxima {
            min_prominence_fraction: DEFAULT_PROMINENCE_FRACTION,
        }
    }
}

impl FromStr for CandidateStrategy {
    type Err = PeakError;

    /// `exhaustive[:<stride>]`, `maxima[:<fraction>]` or `file:<path>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let bad = |m: String| PeakError::InvalidStrategy(m);
        match head {
            "exhaustive" => {
                let stride = match arg {
                    Some(a) => a.parse::<usize>().map_err(|e| bad(format!("stride {a:?}: {e}")))?,
                    None => 1,
                };
                if stride == 0 {
                    return Err(bad("stride must be at least 1".into()));
                }
                Ok(CandidateStrategy::Exhaustive { stride })
            }
            "maxima" => {
                let frac = match arg {
                    Some(a) => a.parse::<f64>().map_err(|e| bad(format!("fraction {a:?}: {e}")))?,
                    None => DEFAULT_PROMINENCE_FRACTION,
                };
                if !(0.0..=1.0).contains(&frac) {
                    return Err(bad(format!("prominence fraction {frac} outside [0, 1]")));
                }
                Ok(CandidateStrategy::MeanSpectrumMaxima {
                    min_prominence_fraction: frac,
                })
            }
            "file" => match arg {
                Some(p) if !p.is_empty() => Ok(CandidateStrategy::Explicit(PathBuf::from(p))),
                _ => Err(bad("file: needs a path".into())),
            },
            other => Err(bad(format!(
                "unknown strategy {other:?} (expected exhaustive, maxima:<frac> or file:<path>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    /// Strictly ascending, nonempty.
    pub mzs: Vec<f64>,
    pub strategy: CandidateStrategy,
}

impl CandidateList {
    /// Sorts and deduplicates `mzs`.
    pub fn new(mut mzs: Vec<f64>, strategy: CandidateStrategy) -> Result<Self, PeakError> {
        mzs.retain(|m| m.is_finite() && *m > 0.0);
        mzs.sort_by(f64::total_cmp);
        mzs.dedup();
        if mzs.is_empty() {
            return Err(PeakError::EmptyCandidates);
        }
        Ok(CandidateList { mzs, strategy })
    }

    pub fn len(&self) -> usize {
        self.mzs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mzs.is_empty()
    }
}

/// Reads a candidate file keeping its line order.
pub fn read_mz_file(path: impl AsRef<Path>) -> Result<Vec<f64>, PeakError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MsiError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mz: f64 = content.parse().map_err(|_| PeakError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("{content:?} is not an m/z value"),
        })?;
        out.push(mz);
    }
    Ok(out)
}

pub fn enumerate_candidates(handle: &DatasetHandle, strategy: &CandidateStrategy) -> Result<CandidateList, PeakError> {
    let mzs = match strategy {
        CandidateStrategy::Exhaustive { stride } => {
            let axis = handle.mz_axis().ok_or_else(|| {
                PeakError::StrategyModeMismatch("exhaustive candidates need a continuous-mode dataset".into())
            })?;
            axis.iter().step_by((*stride).max(1)).copied().collect()
        }
        CandidateStrategy::MeanSpectrumMaxima {
            min_prominence_fraction,
        } => {
            let (mzs, mean) = mean_spectrum(handle)?;
            prominent_maxima(&mean, *min_prominence_fraction)
                .into_iter()
                .map(|i| mzs[i])
                .collect()
        }
        CandidateStrategy::Explicit(path) => read_mz_file(path)?,
    };
    CandidateList::new(mzs, strategy.clone())
}

/// Pixel-mean spectrum: on the shared axis in continuous mode, on a
/// geometric grid of [`PROCESSED_BIN_PPM`]-wide bins in processed mode.
pub fn mean_spectrum(handle: &DatasetHandle) -> Result<(Vec<f64>, Vec<f64>), MsiError> {
    let n = handle.spectrum_count().max(1) as f64;
    if let Some(axis) = handle.mz_axis() {
        let mut sum = vec![0.0; axis.len()];
        for i in 0..handle.spectrum_count() {
            for (acc, v) in sum.iter_mut().zip(handle.read_intensities(i)?) {
                *acc += v;
            }
        }
        return Ok((axis.to_vec(), sum.into_iter().map(|s| s / n).collect()));
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..handle.spectrum_count() {
        let mzs = handle.read_mzs(i)?;
        if let (Some(&a), Some(&b)) = (mzs.first(), mzs.last()) {
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0) {
        return Ok((Vec::new(), Vec::new()));
    }
    let step = (1.0 + PROCESSED_BIN_PPM * 1e-6f64).ln();
    let bins = ((hi / lo).ln() / step).floor() as usize + 1;
    let mut sum = vec![0.0; bins];
    for i in 0..handle.spectrum_count() {
        let mzs = handle.read_mzs(i)?;
        let ints = handle.read_intensities(i)?;
        for (&m, v) in mzs.iter().zip(ints) {
            let b = (((m / lo).ln() / step).floor() as usize).min(bins - 1);
            sum[b] += v;
        }
    }
    let centers = (0..bins).map(|b| lo * ((b as f64 + 0.5) * step).exp()).collect();
    Ok((centers, sum.into_iter().map(|s| s / n).collect()))
}

/// Indices of local maxima whose topographic prominence is at least
/// `fraction · (max − min)`. A flat top reports its middle sample; the two
/// end samples are never maxima.
pub fn prominent_maxima(values: &[f64], fraction: f64) -> Vec<usize> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = fraction * (max - min);
    if max == min {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut i = 1;
    while i < n - 1 {
        if values[i - 1] < values[i] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                let peak = values[i];
                // lowest point on each side before reaching higher ground
                let mut left_min = peak;
                for &v in values[..i].iter().rev() {
                    if v > peak {
                        break;
                    }
                    left_min = left_min.min(v);
                }
                let mut right_min = peak;
                for &v in &values[j + 1..] {
                    if v > peak {
                        break;
                    }
                    right_min = right_min.min(v);
                }
                let prominence = peak - left_min.max(right_min);
                if prominence >= threshold && prominence > 0.0 {
                    out.push((i + j) / 2);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedEntry {
    pub mz: f64,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPeaks {
    /// Ordered by rank: score descending, ties by ascending m/z.
    pub entries: Vec<RankedEntry>,
    pub scorer: String,
    pub target_set: TargetSet,
}

impl RankedPeaks {
    /// Ranks `(mz, score)` pairs.
    pub fn from_scores(mzs: &[f64], scores: &[f64], scorer: String, target_set: TargetSet) -> Self {
        assert_eq!(mzs.len(), scores.len());
        let mut order: Vec<usize> = (0..mzs.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(mzs[a].total_cmp(&mzs[b])));
        let entries = order
            .into_iter()
            .enumerate()
            .map(|(r, i)| RankedEntry {
                mz: mzs[i],
                score: scores[i],
                rank: r + 1,
            })
            .collect();
        RankedPeaks {
            entries,
            scorer,
            target_set,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `mz,score,rank` CSV in rank order.
    pub fn to_csv(&self) -> String {
        entries_to_csv(&self.entries)
    }
}

pub fn entries_to_csv(entries: &[RankedEntry]) -> String {
    let mut out = String::from("mz,score,rank\n");
    for e in entries {
        let _ = writeln!(out, "{},{},{}", e.mz, e.score, e.rank);
    }
    out
}

/// Parses an `mz,score,rank` CSV.
pub fn read_peaks_csv(path: impl AsRef<Path>) -> Result<Vec<RankedEntry>, PeakError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MsiError::io(path, e))?;
    let err = |line: usize, message: String| PeakError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == "mz,score,rank" => {}
        Some((i, header)) => return Err(err(i + 1, format!("expected header mz,score,rank, found {header:?}"))),
        None => return Err(err(1, "empty peak list".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(err(i + 1, format!("expected 3 columns, found {}", cols.len())));
        }
        let mz = cols[0].parse().map_err(|_| err(i + 1, format!("bad m/z {:?}", cols[0])))?;
        let score = cols[1].parse().map_err(|_| err(i + 1, format!("bad score {:?}", cols[1])))?;
        let rank = cols[2].parse().map_err(|_| err(i + 1, format!("bad rank {:?}", cols[2])))?;
        out.push(RankedEntry { mz, score, rank });
    }
    Ok(out)
}

/// The m/z column of a peak list CSV whose header starts with `mz`
/// (ranked lists, merged lists), in file order.
pub fn read_peak_mzs(path: impl AsRef<Path>) -> Result<Vec<f64>, PeakError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MsiError::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.split(',').next().map(str::trim) == Some("mz") => {}
        _ => {
            return Err(PeakError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected a header whose first column is mz".into(),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let first = line.split(',').next().unwrap_or("").trim();
            first.parse().map_err(|_| PeakError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("bad m/z {first:?}"),
            })
        })
        .collect()
}

impl PeakList {
    /// `mz,support` CSV, ascending m/z.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mz,support\n");
        for (m, s) in self.mzs.iter().zip(&self.support) {
            let _ = writeln!(out, "{m},{s}");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RankOptions {
    /// Extraction tolerance.
    pub ppm: f64,
    /// Worker threads (and external scorer processes).
    pub workers: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions { ppm: 10.0, workers: 1 }
    }
}

/// Scores every candidate's ion image and ranks them.
///
/// Probabilistic scorers see the 224×224 preprocessed image and are reduced
/// to the probability mass on `scorer.target_set`. The PCA and Moran's I
/// baselines work on the intensity-normalized image at native resolution.
/// The result depends only on the inputs, never on `workers`.
pub fn rank_peaks(
    handle: &DatasetHandle,
    candidates: &CandidateList,
    scorer: &ScorerSpec,
    options: &RankOptions,
) -> Result<RankedPeaks, PeakError> {
    if candidates.is_empty() {
        return Err(PeakError::EmptyCandidates);
    }
    let workers = options.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let mzs = &candidates.mzs;
    let ppm = options.ppm;
    let scores: Vec<f64> = match &scorer.kind {
        ScorerKind::Constant(p) => vec![aggregate_score(p, scorer.target_set).value; mzs.len()],
        ScorerKind::PcaReference => pool.install(|| -> Result<Vec<f64>, PeakError> {
            let mut stack = Vec::with_capacity(mzs.len());
            for chunk in mzs.chunks(EXTRACTION_CHUNK) {
                for img in ion_image::extract_ion_images(handle, chunk, ppm)? {
                    stack.push(ion_image::normalize_intensity(&img).pixels);
                }
            }
            Ok(scoring::pca_reference_scores(&stack)?)
        })?,
        ScorerKind::MoransI => pool.install(|| -> Result<Vec<f64>, PeakError> {
            let mut out = Vec::with_capacity(mzs.len());
            for chunk in mzs.chunks(EXTRACTION_CHUNK) {
                for img in ion_image::extract_ion_images(handle, chunk, ppm)? {
                    out.push(morans_score(&img)?);
                }
            }
            Ok(out)
        })?,
        ScorerKind::ExternalProcess {
            command,
            timeout,
            batch_size,
        } => pool.install(|| score_external_parallel(handle, mzs, ppm, command, *timeout, *batch_size, scorer.target_set, workers))?,
    };
    Ok(RankedPeaks::from_scores(mzs, &scores, scorer.to_string(), scorer.target_set))
}

/// Moran's I of the normalized image; constant images rank last.
fn morans_score(img: &IonImage) -> Result<f64, PeakError> {
    let norm = ion_image::normalize_intensity(img);
    match scoring::morans_i(&norm.pixels, norm.width, norm.height) {
        Ok(v) => Ok(v),
        Err(ScoreError::ConstantImage) => Ok(f64::NEG_INFINITY),
        Err(source) => Err(PeakError::Scorer {
            mz: img.target_mz,
            source,
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn score_external_parallel(
    handle: &DatasetHandle,
    mzs: &[f64],
    ppm: f64,
    command: &[String],
    timeout: std::time::Duration,
    batch_size: usize,
    targets: TargetSet,
    workers: usize,
) -> Result<Vec<f64>, PeakError> {
    let batch_size = batch_size.max(1);
    let per_worker = mzs.len().div_ceil(workers);
    let groups: Vec<&[f64]> = mzs.chunks(per_worker.max(1)).collect();
    let results: Vec<Result<Vec<f64>, PeakError>> = std::thread::scope(|s| {
        let handles: Vec<_> = groups
            .iter()
            .map(|group| {
                s.spawn(move || -> Result<Vec<f64>, PeakError> {
                    let mut scorer = ExternalScorer::spawn(command, timeout)
                        .map_err(|source| PeakError::Scorer { mz: group[0], source })?;
                    let mut out = Vec::with_capacity(group.len());
                    for batch in group.chunks(batch_size) {
                        let images: Vec<_> = ion_image::extract_ion_images(handle, batch, ppm)?
                            .iter()
                            .map(ion_image::preprocess)
                            .collect();
                        let probs = scorer.score_batch(&images).map_err(|source| PeakError::Scorer {
                            mz: batch[0],
                            source,
                        })?;
                        out.extend(probs.iter().map(|p| aggregate_score(p, targets).value));
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring worker panicked")).collect()
    });
    let mut scores = Vec::with_capacity(mzs.len());
    for r in results {
        scores.extend(r?);
    }
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakList {
    /// Ascending.
    pub mzs: Vec<f64>,
    /// How many input peaks each entry stands for (1 unless merged).
    pub support: Vec<usize>,
    /// Requested count.
    pub n: usize,
    pub source: String,
}

impl PeakList {
    pub fn from_mzs(mut mzs: Vec<f64>, source: impl Into<String>) -> Self {
        mzs.sort_by(f64::total_cmp);
        let n = mzs.len();
        PeakList {
            support: vec![1; n],
            mzs,
            n,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.mzs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mzs.is_empty()
    }
}

/// The `n` best-ranked m/z values, returned in ascending m/z.
pub fn select_top_n(ranked: &RankedPeaks, n: usize) -> PeakList {
    let mut mzs: Vec<f64> = ranked.entries.iter().take(n).map(|e| e.mz).collect();
    mzs.sort_by(f64::total_cmp);
    PeakList {
        support: vec![1; mzs.len()],
        mzs,
        n,
        source: format!("{} top {n}", ranked.scorer),
    }
}

/// Single-linkage merge of all lists: neighbours closer than
/// `merge_ppm · 1e-6 · lower m/z` join one cluster, represented by the
/// support-weighted mean m/z.
pub fn union_peaklists(lists: &[PeakList], merge_ppm: f64) -> PeakList {
    let mut points: Vec<(f64, usize)> = lists
        .iter()
        .flat_map(|l| l.mzs.iter().copied().zip(l.support.iter().copied()))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut mzs = Vec::new();
    let mut support = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let mut j = i;
        while j + 1 < points.len() && points[j + 1].0 - points[j].0 <= merge_ppm * 1e-6 * points[j].0 {
            j += 1;
        }
        let cluster = &points[i..=j];
        let weight: usize = cluster.iter().map(|p| p.1).sum();
        let mean = cluster.iter().map(|p| p.0 * p.1 as f64).sum::<f64>() / weight as f64;
        mzs.push(mean);
        support.push(weight);
        i = j + 1;
    }
    PeakList {
        n: mzs.len(),
        mzs,
        support,
        source: format!("union of {} lists at {merge_ppm} ppm", lists.len()),
    }
}
