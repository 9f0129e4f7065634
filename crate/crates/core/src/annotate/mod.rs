//! Annotation session: an ordered task queue over candidate ion images and
//! a single appender for the label manifest.
//!
//! The HTTP layer lives in [`http`]; everything here is synchronous.

mod http;

pub use http::{router, AnnotationServer};

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classes::StructuralClass;
use crate::ion_image;
use crate::msi_io::{self, DatasetHandle, LabelManifest, ManifestEntry, ManifestWriter, MsiError, Split};
use crate::peaks::{self, CandidateStrategy, PeakError};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error(transparent)]
    Msi(#[from] MsiError),
    #[error(transparent)]
    Peaks(#[from] PeakError),
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no datasets given")]
    NoDatasets,
    #[error("unknown image id {0:?}")]
    UnknownImage(String),
}

#[derive(Debug, Clone)]
pub struct AnnotateConfig {
    pub datasets: Vec<PathBuf>,
    pub candidates: CandidateStrategy,
    pub manifest: PathBuf,
    pub ppm: f64,
    pub annotator: String,
    pub split: Split,
}

impl AnnotateConfig {
    pub fn new(datasets: Vec<PathBuf>, manifest: impl Into<PathBuf>) -> Self {
        AnnotateConfig {
            datasets,
            candidates: CandidateStrategy::default(),
            manifest: manifest.into(),
            ppm: 10.0,
            annotator: "annotator".into(),
            split: Split::Train,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Labeled(StructuralClass),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationTask {
    pub image_id: String,
    pub dataset_id: String,
    pub mz: f64,
    pub ppm: f64,
    /// Base64 of the 8-bit grayscale PNG.
    pub png: String,
    pub status: TaskStatus,
    /// Position in the queue, 0-based.
    pub position: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Progress {
    /// Indexed like [`StructuralClass::ALL`].
    pub counts: [usize; StructuralClass::COUNT],
    pub by_class: Vec<(StructuralClass, usize)>,
    pub labeled: usize,
    pub pending: usize,
    pub total: usize,
    pub manifest_lines: usize,
}

/// Outcome of a label submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelOutcome {
    pub image_id: String,
    pub class: StructuralClass,
    /// A new manifest line was written.
    pub appended: bool,
    /// The image had a different class before.
    pub revision: bool,
}

#[derive(Debug, Clone)]
struct TaskRef {
    dataset: usize,
    mz: f64,
    image_id: String,
}

struct LabelState {
    writer: ManifestWriter,
    latest: HashMap<String, StructuralClass>,
    lines: usize,
}

pub struct AnnotationSession {
    handles: Vec<DatasetHandle>,
    tasks: Vec<TaskRef>,
    by_id: HashMap<String, usize>,
    ppm: f64,
    annotator: String,
    split: Split,
    state: Mutex<LabelState>,
}

impl AnnotationSession {
    /// Opens every dataset, builds the queue and takes the manifest lock.
    ///
    /// Candidates from a `file:` list keep the file's order; other
    /// strategies yield ascending m/z. Datasets are queued in the given order.
    pub fn open(config: &AnnotateConfig) -> Result<Self, AnnotateError> {
        if config.datasets.is_empty() {
            return Err(AnnotateError::NoDatasets);
        }
        let handles = config
            .datasets
            .iter()
            .map(DatasetHandle::open)
            .collect::<Result<Vec<_>, _>>()?;
        let mut tasks = Vec::new();
        let mut by_id = HashMap::new();
        for (d, handle) in handles.iter().enumerate() {
            let mzs = match &config.candidates {
                CandidateStrategy::Explicit(path) => peaks::read_mz_file(path)?,
                s => peaks::enumerate_candidates(handle, s)?.mzs,
            };
            let dataset_id = handle.dataset_id();
            for mz in mzs {
                let image_id = msi_io::image_id(&dataset_id, mz, config.ppm);
                if by_id.contains_key(&image_id) {
                    continue;
                }
                by_id.insert(image_id.clone(), tasks.len());
                tasks.push(TaskRef { dataset: d, mz, image_id });
            }
        }
        let writer = ManifestWriter::open(&config.manifest)?;
        let manifest = LabelManifest::load(&config.manifest)?;
        let latest = manifest
            .latest()
            .into_iter()
            .map(|(id, e)| (id, e.class))
            .collect();
        log::info!(
            "{} tasks over {} datasets, {} manifest lines",
            tasks.len(),
            handles.len(),
            manifest.entries.len()
        );
        Ok(AnnotationSession {
            handles,
            tasks,
            by_id,
            ppm: config.ppm,
            annotator: config.annotator.clone(),
            split: config.split,
            state: Mutex::new(LabelState {
                writer,
                latest,
                lines: manifest.entries.len(),
            }),
        })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.lock().writer.path().to_path_buf()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LabelState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn status(&self, image_id: &str) -> Option<TaskStatus> {
        self.by_id.get(image_id)?;
        Some(match self.lock().latest.get(image_id) {
            Some(&c) => TaskStatus::Labeled(c),
            None => TaskStatus::Pending,
        })
    }

    /// Queue position of the first unlabeled task.
    pub fn next_pending(&self) -> Option<usize> {
        let state = self.lock();
        self.tasks.iter().position(|t| !state.latest.contains_key(&t.image_id))
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.by_id.get(image_id).copied()
    }

    /// Extracts, preprocesses and renders the task at `position`.
    pub fn render(&self, position: usize) -> Result<AnnotationTask, AnnotateError> {
        use base64::Engine;
        let task = &self.tasks[position];
        let handle = &self.handles[task.dataset];
        let img = ion_image::extract_ion_image(handle, task.mz, self.ppm)?;
        let png = ion_image::preprocess(&img).to_png();
        let status = self.status(&task.image_id).unwrap_or(TaskStatus::Pending);
        Ok(AnnotationTask {
            image_id: task.image_id.clone(),
            dataset_id: handle.dataset_id(),
            mz: task.mz,
            ppm: self.ppm,
            png: base64::engine::general_purpose::STANDARD.encode(png),
            status,
            position,
            total: self.tasks.len(),
        })
    }

    /// Records a label. Repeating the current class writes nothing; a
    /// different class is appended as a revision. Returns after the line is
    /// synced to disk.
    pub fn label(&self, image_id: &str, class: StructuralClass) -> Result<LabelOutcome, AnnotateError> {
        let &pos = self
            .by_id
            .get(image_id)
            .ok_or_else(|| AnnotateError::UnknownImage(image_id.to_string()))?;
        let task = &self.tasks[pos];
        let mut state = self.lock();
        let previous = state.latest.get(image_id).copied();
        if previous == Some(class) {
            return Ok(LabelOutcome {
                image_id: image_id.to_string(),
                class,
                appended: false,
                revision: false,
            });
        }
        let entry = ManifestEntry {
            dataset_id: self.handles[task.dataset].dataset_id(),
            mz: task.mz,
            ppm: self.ppm,
            class,
            annotator: self.annotator.clone(),
            split: self.split,
            timestamp: msi_io::now_timestamp(),
        };
        state.writer.append(&entry)?;
        state.latest.insert(image_id.to_string(), class);
        state.lines += 1;
        Ok(LabelOutcome {
            image_id: image_id.to_string(),
            class,
            appended: true,
            revision: previous.is_some(),
        })
    }

    pub fn progress(&self) -> Progress {
        let state = self.lock();
        let mut counts = [0usize; StructuralClass::COUNT];
        for c in state.latest.values() {
            counts[c.index()] += 1;
        }
        let labeled_tasks = self.tasks.iter().filter(|t| state.latest.contains_key(&t.image_id)).count();
        Progress {
            counts,
            by_class: StructuralClass::ALL.iter().map(|&c| (c, counts[c.index()])).collect(),
            labeled: state.latest.len(),
            pending: self.tasks.len() - labeled_tasks,
            total: self.tasks.len(),
            manifest_lines: state.lines,
        }
    }

    /// The manifest file as written so far.
    pub fn export(&self) -> Result<Vec<u8>, AnnotateError> {
        let state = self.lock();
        let path: &Path = state.writer.path();
        match std::fs::read(path) {
            Ok(b) => Ok(b),
            Err(e) => Err(MsiError::io(path, e).into()),
        }
    }
}

/// Body of a label submission.
#[derive(Debug, Clone, Deserialize)]
pub struct LabelRequest {
    pub image_id: String,
    pub class: String,
}
