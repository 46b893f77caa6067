//! Reconstruction post-processing and compression metrics.
//!
//! The inverse transform returns raw pixel values that have lost the global
//! brightness of the original (projection without mean subtraction keeps
//! block structure but not absolute level once components are truncated).
//! Compression therefore stores, per channel, the mean brightness gap
//! between the original and its raw reconstruction. Decompression adds the
//! gap back, clamps to the displayable range, and flattens the value
//! histogram, yielding a viewable image.
//!
//! Also here: the percent-deviation loss used to score reconstructions and
//! the coefficient-count compression ratio.

use crate::cuboid::Cuboid;
use crate::pipeline::{self, FeatureVector, PipelineError, PipelineSpec, TransformModel};
use thiserror::Error;

/// Output levels used by [`equalize_histogram`].
pub const DEFAULT_LEVELS: usize = 256;

/// Errors from reconstruction post-processing.
#[derive(Debug, Error)]
pub enum ReconError {
    #[error("cuboid dims {found:?} do not match {expected:?}")]
    DimMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("expected {expected} brightness gaps, got {found}")]
    GapCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Everything needed to rebuild a viewable image without the original:
/// final-stage coefficients plus one brightness gap per channel.
///
/// The pipeline hash ties a record to the model that produced it. It is set
/// when a record is created in-process and `None` for records read back from
/// files, whose format does not carry it.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedRecord {
    features: FeatureVector,
    brightness_gaps: Vec<f64>,
    pipeline_hash: Option<u64>,
}

impl CompressedRecord {
    pub fn new(
        features: FeatureVector,
        brightness_gaps: Vec<f64>,
        pipeline_hash: Option<u64>,
    ) -> Result<Self, ReconError> {
        if brightness_gaps.len() != features.channels() {
            return Err(ReconError::GapCountMismatch {
                expected: features.channels(),
                found: brightness_gaps.len(),
            });
        }
        Ok(Self { features, brightness_gaps, pipeline_hash })
    }

    pub fn features(&self) -> &FeatureVector {
        &self.features
    }

    pub fn brightness_gaps(&self) -> &[f64] {
        &self.brightness_gaps
    }

    pub fn pipeline_hash(&self) -> Option<u64> {
        self.pipeline_hash
    }
}

/// Mean brightness difference between an original and its raw
/// reconstruction, the value stored per channel in a [`CompressedRecord`].
pub fn brightness_gap(original: &Cuboid, raw_recon: &Cuboid) -> Result<f64, ReconError> {
    if original.dims() != raw_recon.dims() {
        return Err(ReconError::DimMismatch {
            expected: original.dims(),
            found: raw_recon.dims(),
        });
    }
    let n = original.len() as f64;
    let sum: f64 = original
        .data()
        .iter()
        .zip(raw_recon.data())
        .map(|(a, b)| a - b)
        .sum();
    Ok(sum / n)
}

/// Histogram equalization with the default 256 output levels.
pub fn equalize_histogram(img: &Cuboid) -> Cuboid {
    equalize_histogram_with_levels(img, DEFAULT_LEVELS)
}

/// Rank-based histogram equalization onto `levels` output bins in [0, 255].
///
/// Every value maps to `255 * ceil(cdf * levels) / levels` where `cdf` is
/// the fraction of pixels less than or equal to it, so equal inputs always
/// map to equal outputs and the mapping is nondecreasing in input rank. A
/// constant image maps to a constant 255 (its single bin's CDF is 1).
pub fn equalize_histogram_with_levels(img: &Cuboid, levels: usize) -> Cuboid {
    assert!(levels > 0, "levels must be positive");
    let n = img.len();
    if n == 0 {
        return img.clone();
    }
    let mut sorted: Vec<f64> = img.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    // Distinct values paired with the count of pixels <= each value.
    let mut cumulative: Vec<(f64, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        let mut j = i + 1;
        while j < n && sorted[j] == v {
            j += 1;
        }
        cumulative.push((v, j));
        i = j;
    }
    let total = n as f64;
    let lv = levels as f64;
    let (di, dj, dk) = img.dims();
    let mut out = Cuboid::zeros(di, dj, dk);
    for (dst, &v) in out.data_mut().iter_mut().zip(img.data()) {
        let idx = cumulative.partition_point(|&(d, _)| d.total_cmp(&v).is_lt());
        let cdf = cumulative[idx].1 as f64 / total;
        *dst = 255.0 * (cdf * lv).ceil() / lv;
    }
    out
}

/// Turns one channel of raw inverse-transform output into a viewable image:
/// add the stored brightness gap, clamp to [0, 255], equalize the histogram.
pub fn finalize_reconstruction(raw: &Cuboid, gap: f64) -> Cuboid {
    let (i, j, k) = raw.dims();
    let mut shifted = Cuboid::zeros(i, j, k);
    for (dst, &v) in shifted.data_mut().iter_mut().zip(raw.data()) {
        *dst = (v + gap).clamp(0.0, 255.0);
    }
    equalize_histogram(&shifted)
}

/// Reconstruction loss: root of the summed squared intensity differences
/// (intensities taken on a [0, 1] scale) divided by the pixel count,
/// reported as a percentage.
pub fn percent_deviation(original: &Cuboid, recovered: &Cuboid) -> Result<f64, ReconError> {
    if original.dims() != recovered.dims() {
        return Err(ReconError::DimMismatch {
            expected: original.dims(),
            found: recovered.dims(),
        });
    }
    let sum_sq: f64 = original
        .data()
        .iter()
        .zip(recovered.data())
        .map(|(a, b)| {
            let d = (a - b) / 255.0;
            d * d
        })
        .sum();
    Ok(100.0 * sum_sq.sqrt() / original.len() as f64)
}

/// Per-channel compression ratio: input pixels per retained coefficient.
pub fn compression_ratio(spec: &PipelineSpec) -> f64 {
    let pixels = (spec.input_dims.0 * spec.input_dims.1) as f64;
    pixels / spec.final_retained() as f64
}

/// Compresses one image: forward transform plus per-channel brightness gaps
/// measured against the raw reconstruction.
pub fn compress(model: &TransformModel, image: &[Cuboid]) -> Result<CompressedRecord, ReconError> {
    let features = pipeline::forward(model, image)?;
    let raw = pipeline::inverse(model, &features)?;
    let mut gaps = Vec::with_capacity(image.len());
    for (orig, rec) in image.iter().zip(&raw) {
        gaps.push(brightness_gap(orig, rec)?);
    }
    CompressedRecord::new(features, gaps, Some(model.spec().identity_hash()))
}

/// Decompresses a record into finalized per-channel images.
pub fn decompress(model: &TransformModel, record: &CompressedRecord) -> Result<Vec<Cuboid>, ReconError> {
    let raw = pipeline::inverse(model, record.features())?;
    Ok(raw
        .iter()
        .zip(record.brightness_gaps())
        .map(|(channel, &gap)| finalize_reconstruction(channel, gap))
        .collect())
}

/// Decompresses a record without histogram equalization: raw inverse output
/// plus the brightness gap, clamped to [0, 255]. Useful for measuring
/// transform fidelity in isolation.
pub fn decompress_raw(
    model: &TransformModel,
    record: &CompressedRecord,
) -> Result<Vec<Cuboid>, ReconError> {
    let raw = pipeline::inverse(model, record.features())?;
    Ok(raw
        .iter()
        .zip(record.brightness_gaps())
        .map(|(channel, &gap)| {
            let (i, j, k) = channel.dims();
            let mut out = Cuboid::zeros(i, j, k);
            for (dst, &v) in out.data_mut().iter_mut().zip(channel.data()) {
                *dst = (v + gap).clamp(0.0, 255.0);
            }
            out
        })
        .collect())
}
