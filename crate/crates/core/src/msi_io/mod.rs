//! Dataset ingestion: imzML/ibd files, segmentation masks and label manifests.
//!
//! Pixel coordinates are 1-based inside imzML files and 0-based everywhere in
//! this crate; the conversion happens only in [`imzml`].

pub mod imzml;
pub mod manifest;
pub mod mask;

use std::path::PathBuf;

use thiserror::Error;

pub use imzml::{write_dataset, write_dataset_with, DatasetHandle, Mode, Precision, WriteOptions};
pub use manifest::{image_id, merge_consensus, now_timestamp, LabelManifest, ManifestEntry, ManifestWriter, Split};
pub use mask::{load_mask, SegmentationMask};

/// One pixel's spectrum. `x` is the column and `y` the row, both 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub x: u32,
    pub y: u32,
    pub mzs: Vec<f64>,
    pub intensities: Vec<f64>,
}

impl Spectrum {
    pub fn new(x: u32, y: u32, mzs: Vec<f64>, intensities: Vec<f64>) -> Self {
        Spectrum { x, y, mzs, intensities }
    }

    /// Checks equal lengths, strictly ascending m/z and non-negative intensities.
    pub fn validate(&self) -> Result<(), MsiError> {
        if self.mzs.len() != self.intensities.len() {
            return Err(MsiError::InvalidSpectrum(format!(
                "pixel ({}, {}): {} m/z values but {} intensities",
                self.x,
                self.y,
                self.mzs.len(),
                self.intensities.len()
            )));
        }
        if !is_strictly_ascending(&self.mzs) {
            return Err(MsiError::InvalidSpectrum(format!(
                "pixel ({}, {}): m/z array is not strictly ascending",
                self.x, self.y
            )));
        }
        if let Some(v) = self.intensities.iter().find(|v| !(**v >= 0.0)) {
            return Err(MsiError::InvalidSpectrum(format!(
                "pixel ({}, {}): intensity {v} is negative or NaN",
                self.x, self.y
            )));
        }
        Ok(())
    }
}

pub(crate) fn is_strictly_ascending(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

#[derive(Debug, Error)]
pub enum MsiError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("binary file {0} not found next to the imzML descriptor")]
    MissingBinary(PathBuf),
    #[error("uuid mismatch: descriptor has {xml}, binary file has {binary}")]
    UuidMismatch { xml: String, binary: String },
    #[error("malformed imzML: {0}")]
    MalformedXml(String),
    #[error("unsupported array encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("spectrum index {index} out of range (dataset has {count} spectra)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("binary file truncated: needed {needed} bytes at offset {offset}")]
    TruncatedBinary { offset: u64, needed: usize },
    #[error("continuous mode requires one shared m/z axis: {0}")]
    InconsistentAxis(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("unparsable mask: {0}")]
    UnparsableMask(String),
    #[error("dimension mismatch: mask is {mask_w}x{mask_h}, dataset is {data_w}x{data_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        data_w: u32,
        data_h: u32,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("dataset {dataset_id} appears in splits {first:?} and {second:?}")]
    SplitInconsistent {
        dataset_id: String,
        first: Split,
        second: Split,
    },
    #[error("manifest {0} is locked by another writer")]
    ManifestLocked(PathBuf),
}

impl MsiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MsiError::Io {
            path: path.into(),
            source,
        }
    }
}
