//! The `ionmorph` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 scorer error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::annotate::{AnnotateConfig, AnnotateError, AnnotationServer};
use crate::classes::TargetSet;
use crate::eval::{self, EvalConfig, EvalError, RegionMode};
use crate::fixtures::{self, FixtureConfig};
use crate::ion_image;
use crate::msi_io::{self, DatasetHandle, LabelManifest, MsiError, Split};
use crate::patches::{self, PatchError};
use crate::peaks::{self, CandidateList, CandidateStrategy, PeakError, PeakList, RankOptions};
use crate::scoring::{ScoreError, ScorerKind, ScorerSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_SCORER: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ionmorph", version, about = "Spatially informed peak picking for MSI data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print dataset geometry and acquisition mode as JSON.
    Info {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Render ion images as 224×224 grayscale PNGs.
    Extract(ExtractArgs),
    /// Rank candidate m/z values by structure score and keep the top n.
    Pick(PickArgs),
    /// Evaluate a peak list with mSCF1 against a segmentation mask.
    Eval(EvalArgs),
    /// Export labeled patch cubes to an `.iop` container.
    Patches(PatchArgs),
    /// Write a synthetic dataset with planted structured channels.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = FixtureConfig::default().seed)]
        seed: u64,
    },
    /// Serve the labeling HTTP API.
    Annotate(AnnotateArgs),
    /// Merge peak lists from several sections into one.
    Union {
        #[arg(long = "peaks", required = true)]
        peaks: Vec<PathBuf>,
        #[arg(long, default_value_t = 5.0)]
        merge_ppm: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge several annotators' manifests into consensus labels.
    Consensus {
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct CandidateArgs {
    /// exhaustive[:<stride>] | maxima[:<fraction>] | file:<path>
    #[arg(long, default_value = "maxima:0.01", value_parser = parse_strategy)]
    candidates: CandidateStrategy,
    /// Ion image window half-width.
    #[arg(long, default_value_t = 10.0)]
    ppm: f64,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long = "mz", required = true)]
    mzs: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    ppm: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the raw window sums as CSV.
    #[arg(long)]
    raw: bool,
}

#[derive(Args, Debug)]
struct PickArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// pca | moransi | external:<cmd> | const:<p0,...,p5>
    #[arg(long, value_parser = parse_scorer)]
    scorer: ScorerSpec,
    /// Classes counted as informative.
    #[arg(long, default_value = "structured,negative,localized", value_parser = parse_targets)]
    targets: TargetSet,
    #[command(flatten)]
    candidates: CandidateArgs,
    /// Number of peaks to keep; all ranked candidates when absent.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Seconds an external scorer may take per batch.
    #[arg(long, default_value_t = 30.0)]
    scorer_timeout: f64,
    #[arg(long, default_value_t = crate::scoring::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Peak list CSV whose first column is mz.
    #[arg(long)]
    peaks: PathBuf,
    #[command(flatten)]
    candidates: CandidateArgs,
    #[arg(long, default_value = "0.4,0.5,0.6,0.7,0.8", value_parser = parse_thresholds)]
    thresholds: Thresholds,
    #[arg(long, default_value_t = 10.0)]
    match_ppm: f64,
    #[arg(long, default_value = "per-region-max", value_parser = parse_region_mode)]
    region_mode: RegionMode,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PatchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    peaks: PathBuf,
    #[arg(long, default_value_t = 11)]
    patch_size: usize,
    #[arg(long, default_value_t = 10.0)]
    ppm: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnnotateArgs {
    #[arg(long = "dataset", required = true)]
    datasets: Vec<PathBuf>,
    #[command(flatten)]
    candidates: CandidateArgs,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, default_value = "annotator")]
    annotator: String,
    #[arg(long, default_value = "train", value_parser = parse_split)]
    split: Split,
}

#[derive(Debug, Clone)]
struct Thresholds(Vec<f64>);

fn parse_strategy(s: &str) -> Result<CandidateStrategy, String> {
    s.parse().map_err(|e: PeakError| e.to_string())
}

fn parse_scorer(s: &str) -> Result<ScorerSpec, String> {
    s.parse().map_err(|e: ScoreError| e.to_string())
}

fn parse_targets(s: &str) -> Result<TargetSet, String> {
    TargetSet::parse_list(s).map_err(|e| e.to_string())
}

fn parse_thresholds(s: &str) -> Result<Thresholds, String> {
    eval::parse_thresholds(s).map(Thresholds).map_err(|e| e.to_string())
}

fn parse_region_mode(s: &str) -> Result<RegionMode, String> {
    s.parse().map_err(|e: EvalError| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Scorer(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Scorer(_) => EXIT_SCORER,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Scorer(m) => m,
        }
    }
}

impl From<MsiError> for Failure {
    fn from(e: MsiError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<PeakError> for Failure {
    fn from(e: PeakError) -> Self {
        match e {
            PeakError::Scorer { .. } | PeakError::Score(_) => Failure::Scorer(e.to_string()),
            PeakError::InvalidStrategy(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidConfig(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<PatchError> for Failure {
    fn from(e: PatchError) -> Self {
        match e {
            PatchError::EvenPatchSize(_) | PatchError::ZeroPatchSize => Failure::Usage(format!("--patch-size: {e}")),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<AnnotateError> for Failure {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::Peaks(p) => p.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| MsiError::io(path, e).into()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Data(format!("stdout: {e}")))
        }
    }
}

fn candidate_list(handle: &DatasetHandle, args: &CandidateArgs) -> Result<CandidateList, Failure> {
    Ok(peaks::enumerate_candidates(handle, &args.candidates)?)
}

fn info(dataset: &Path) -> Result<(), Failure> {
    let h = DatasetHandle::open(dataset)?;
    let uuid: String = h.uuid().iter().map(|b| format!("{b:02x}")).collect();
    let mut report = json!({
        "dataset_id": h.dataset_id(),
        "mode": h.mode(),
        "width": h.width(),
        "height": h.height(),
        "spectra": h.spectrum_count(),
        "uuid": uuid,
    });
    if let Some(axis) = h.mz_axis() {
        report["axis_length"] = json!(axis.len());
        report["mz_range"] = json!([axis.first(), axis.last()]);
    }
    write_output(None, &(serde_json::to_string_pretty(&report).expect("json") + "\n"))
}

fn extract(a: &ExtractArgs) -> Result<(), Failure> {
    let h = DatasetHandle::open(&a.dataset)?;
    std::fs::create_dir_all(&a.out).map_err(|e| MsiError::io(&a.out, e))?;
    let images = ion_image::extract_ion_images(&h, &a.mzs, a.ppm)?;
    for img in &images {
        let stem = format!("{}_{}", h.dataset_id(), img.target_mz);
        let png = a.out.join(format!("{stem}.png"));
        std::fs::write(&png, ion_image::preprocess(img).to_png()).map_err(|e| MsiError::io(&png, e))?;
        println!("{}", png.display());
        if a.raw {
            let csv = a.out.join(format!("{stem}.csv"));
            let mut text = String::new();
            for row in img.pixels.chunks(img.width) {
                let cells: Vec<String> = row.iter().map(f64::to_string).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            std::fs::write(&csv, text).map_err(|e| MsiError::io(&csv, e))?;
            println!("{}", csv.display());
        }
    }
    Ok(())
}

fn pick(a: &PickArgs) -> Result<(), Failure> {
    if a.workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let mut scorer = a.scorer.clone().with_targets(a.targets);
    if let ScorerKind::ExternalProcess { timeout, batch_size, .. } = &mut scorer.kind {
        if !(a.scorer_timeout > 0.0 && a.scorer_timeout.is_finite()) {
            return Err(Failure::Usage("--scorer-timeout must be a positive number of seconds".into()));
        }
        *timeout = Duration::from_secs_f64(a.scorer_timeout);
        *batch_size = a.batch_size.max(1);
    }
    let h = DatasetHandle::open(&a.dataset)?;
    let candidates = candidate_list(&h, &a.candidates)?;
    log::info!("{} candidates, scorer {scorer}, {} workers", candidates.len(), a.workers);
    let ranked = peaks::rank_peaks(
        &h,
        &candidates,
        &scorer,
        &RankOptions {
            ppm: a.candidates.ppm,
            workers: a.workers,
        },
    )?;
    let n = a.n.unwrap_or(ranked.len());
    let keep: Vec<_> = ranked.entries.iter().take(n).copied().collect();
    write_output(a.out.as_deref(), &peaks::entries_to_csv(&keep))
}

fn evaluate(a: &EvalArgs) -> Result<(), Failure> {
    let config = EvalConfig {
        thresholds: a.thresholds.0.clone(),
        match_ppm: a.match_ppm,
        region_mode: a.region_mode,
    };
    config.validate()?;
    let h = DatasetHandle::open(&a.dataset)?;
    let mask = msi_io::load_mask(&a.mask)?;
    let selected = PeakList::from_mzs(peaks::read_peak_mzs(&a.peaks)?, a.peaks.display().to_string());
    let candidates = candidate_list(&h, &a.candidates)?;
    let gt = eval::ground_truth(&h, &mask, &candidates, a.candidates.ppm, config.region_mode)?;
    let report = eval::mscf1(&selected, &gt, &config)?;
    if let Some(csv) = &a.csv {
        std::fs::write(csv, report.to_csv()).map_err(|e| MsiError::io(csv, e))?;
    }
    write_output(a.out.as_deref(), &report.to_json())
}

fn export_patches(a: &PatchArgs) -> Result<(), Failure> {
    let h = DatasetHandle::open(&a.dataset)?;
    let mask = msi_io::load_mask(&a.mask)?;
    let peak_list = PeakList::from_mzs(peaks::read_peak_mzs(&a.peaks)?, a.peaks.display().to_string());
    let stream = patches::extract_patches(&h, &peak_list, &mask, a.patch_size, a.ppm)?;
    let header = stream.header().clone();
    let summary = patches::export_patches(&header, stream, &a.out)?;
    write_output(None, &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))
}

fn make_fixtures(out: &Path, seed: u64) -> Result<(), Failure> {
    let info = fixtures::write_fixture(out, &FixtureConfig { seed, ..FixtureConfig::default() })?;
    write_output(None, &(serde_json::to_string_pretty(&info).expect("json") + "\n"))
}

fn annotate(a: &AnnotateArgs) -> Result<(), Failure> {
    let config = AnnotateConfig {
        datasets: a.datasets.clone(),
        candidates: a.candidates.candidates.clone(),
        manifest: a.manifest.clone(),
        ppm: a.candidates.ppm,
        annotator: a.annotator.clone(),
        split: a.split,
    };
    let server = AnnotationServer::bind(&config, &a.bind)?;
    eprintln!("serving on http://{}", server.local_addr());
    Ok(server.run()?)
}

fn union(lists: &[PathBuf], merge_ppm: f64, out: Option<&Path>) -> Result<(), Failure> {
    let lists = lists
        .iter()
        .map(|p| Ok(PeakList::from_mzs(peaks::read_peak_mzs(p)?, p.display().to_string())))
        .collect::<Result<Vec<_>, Failure>>()?;
    write_output(out, &peaks::union_peaklists(&lists, merge_ppm).to_csv())
}

fn consensus(paths: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let manifests = paths.iter().map(LabelManifest::load).collect::<Result<Vec<_>, _>>()?;
    let merged = msi_io::manifest::merge_consensus(&manifests);
    let mut text = String::new();
    for e in &merged.entries {
        text.push_str(&serde_json::to_string(e).expect("json"));
        text.push('\n');
    }
    write_output(out, &text)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("IONMORPH_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging();
    let result = match &cli.command {
        Command::Info { dataset } => info(dataset),
        Command::Extract(a) => extract(a),
        Command::Pick(a) => pick(a),
        Command::Eval(a) => evaluate(a),
        Command::Patches(a) => export_patches(a),
        Command::Fixtures { out, seed } => make_fixtures(out, *seed),
        Command::Annotate(a) => annotate(a),
        Command::Union { peaks, merge_ppm, out } => union(peaks, *merge_ppm, out.as_deref()),
        Command::Consensus { manifests, out } => consensus(manifests, out.as_deref()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}
