//! Dataset-level reference image from the first principal component of an
//! ion image stack, and per-image |PCC| scores against it.
//!
//! Images are the variables and pixels the observations. The reference image
//! is the stack's projection onto the leading eigenvector of the channel
//! covariance, with its sign chosen so that it correlates non-negatively
//! with the mean image.

use nalgebra::{DMatrix, SymmetricEigen};

use super::ScoreError;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaReference {
    /// Reference image, same pixel order as the inputs.
    pub reference: Vec<f64>,
    /// `|PCC(image_i, reference)|`; constant images score 0.
    pub scores: Vec<f64>,
}

pub fn pca_reference_scores<S: AsRef<[f64]>>(images: &[S]) -> Result<Vec<f64>, ScoreError> {
    Ok(pca_reference(images)?.scores)
}

pub fn pca_reference<S: AsRef<[f64]>>(images: &[S]) -> Result<PcaReference, ScoreError> {
    let channels = images.len();
    if channels < 2 {
        return Err(ScoreError::TooFewImages(channels));
    }
    let pixels = images[0].as_ref().len();
    if let Some(bad) = images.iter().find(|im| im.as_ref().len() != pixels) {
        return Err(ScoreError::ShapeMismatch(format!(
            "{} vs {} pixels in the stack",
            bad.as_ref().len(),
            pixels
        )));
    }
    if pixels == 0 || images.iter().all(|im| stats::is_constant(im.as_ref())) {
        return Err(ScoreError::DegenerateStack);
    }

    // pixels × channels, each channel mean-centred
    let mut centered = DMatrix::<f64>::zeros(pixels, channels);
    for (c, img) in images.iter().enumerate() {
        let img = img.as_ref();
        let mean = stats::mean(img);
        for (p, &v) in img.iter().enumerate() {
            centered[(p, c)] = v - mean;
        }
    }

    // work on whichever Gram matrix is smaller; both give the same
    // reference image up to scale
    let mut reference: Vec<f64> = if channels <= pixels {
        let cov = centered.transpose() * &centered;
        let v = leading_eigenvector(cov);
        (&centered * v).iter().copied().collect()
    } else {
        let gram = &centered * centered.transpose();
        leading_eigenvector(gram).iter().copied().collect()
    };
    if stats::is_constant(&reference) {
        return Err(ScoreError::DegenerateStack);
    }

    let mean_image: Vec<f64> = (0..pixels)
        .map(|p| images.iter().map(|im| im.as_ref()[p]).sum::<f64>() / channels as f64)
        .collect();
    let flip = match stats::pearson(&reference, &mean_image) {
        Ok(r) => r < 0.0,
        // constant mean image: make the largest-magnitude entry positive
        Err(_) => {
            let peak = reference
                .iter()
                .copied()
                .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            peak < 0.0
        }
    };
    if flip {
        reference.iter_mut().for_each(|v| *v = -*v);
    }

    let scores = images
        .iter()
        .map(|im| stats::pearson(im.as_ref(), &reference).map(f64::abs).unwrap_or(0.0))
        .collect();
    Ok(PcaReference { reference, scores })
}

fn leading_eigenvector(m: DMatrix<f64>) -> nalgebra::DVector<f64> {
    let eig = SymmetricEigen::new(m);
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    eig.eigenvectors.column(best).into_owned()
}
