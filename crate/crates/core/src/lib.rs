//! Spatially informed peak picking for mass spectrometry imaging (MSI).
//!
//! The crate reads imzML/ibd datasets, extracts ion images inside symmetric
//! ppm windows, scores how spatially structured each ion image is, ranks
//! candidate m/z values by that score and evaluates a selection with the
//! mean spatial correlation F1 score (mSCF1) against a segmentation mask.
//! Selected peaks can be turned into labeled `p×p×C` patch cubes for
//! downstream spatio-spectral classifiers, and an HTTP annotation service
//! supports labeling ion images with the six structural classes.
//!
//! Module map:
//!
//! - [`msi_io`]: imzML reading/writing, segmentation masks, label manifests
//! - [`ion_image`]: ion image extraction and the preprocessing chain
//! - [`scoring`]: softmax, class-subset aggregation and baseline scorers
//! - [`peaks`]: candidate enumeration, ranking, top-n selection, peak list union
//! - [`eval`]: mSCF1 ground truth, per-threshold F1 and reports
//! - [`patches`]: patch cube extraction and the `.iop` container
//! - [`annotate`]: the labeling HTTP service
//! - [`fixtures`]: synthetic datasets with planted structured channels
//! - [`cli`]: the `ionmorph` command line

pub mod annotate;
pub mod classes;
pub mod cli;
pub mod eval;
pub mod fixtures;
pub mod ion_image;
pub mod msi_io;
pub mod patches;
pub mod peaks;
pub mod scoring;
pub mod stats;

pub use classes::{StructuralClass, TargetSet};
pub use ion_image::{IonImage, PreprocessedImage};
pub use msi_io::{DatasetHandle, Mode, SegmentationMask, Spectrum};
