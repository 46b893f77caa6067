//! Dataset ingestion and serialization: manifest listings, image
//! loading/preprocessing/augmentation, and the binary model and feature
//! file formats.

mod format;
mod image;
mod manifest;

pub use format::{
    load_features, load_model, save_features, save_model, FileFormatError, ModelBundle,
};
pub use image::{
    augment_flips, flip_horizontal, load_dataset, load_image, preprocess, save_image,
    ImageLoadError,
};
pub use manifest::{load_manifest, Manifest, ManifestEntry, ManifestError};

use crate::cuboid::Cuboid;
use thiserror::Error;

/// Error from constructing a [`LabeledImage`] out of contract.
#[derive(Debug, Error)]
pub enum LabeledImageError {
    #[error("images must have 1 or 3 channels, got {channels}")]
    BadChannelCount { channels: usize },
    #[error("channel {channel} has dims {found:?}, expected {expected:?}")]
    ChannelDimMismatch {
        channel: usize,
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("channel {channel} holds value {value} outside [0, 255]")]
    ValueOutOfRange { channel: usize, value: f64 },
    #[error("label must not be empty")]
    EmptyLabel,
}

/// A class-labeled image as the pipeline consumes it: 1 or 3 single-depth
/// channel planes with values in [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    label: String,
    channels: Vec<Cuboid>,
}

impl LabeledImage {
    pub fn new(label: String, channels: Vec<Cuboid>) -> Result<Self, LabeledImageError> {
        if label.is_empty() {
            return Err(LabeledImageError::EmptyLabel);
        }
        if channels.len() != 1 && channels.len() != 3 {
            return Err(LabeledImageError::BadChannelCount { channels: channels.len() });
        }
        let (i, j, _) = channels[0].dims();
        let expected = (i, j, 1);
        for (idx, ch) in channels.iter().enumerate() {
            if ch.dims() != expected {
                return Err(LabeledImageError::ChannelDimMismatch {
                    channel: idx,
                    expected,
                    found: ch.dims(),
                });
            }
            if let Some(&value) = ch.data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
                return Err(LabeledImageError::ValueOutOfRange { channel: idx, value });
            }
        }
        Ok(Self { label, channels })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn channels(&self) -> &[Cuboid] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Spatial dims `(I, J)` shared by all channels.
    pub fn dims(&self) -> (usize, usize) {
        let (i, j, _) = self.channels[0].dims();
        (i, j)
    }

    pub fn into_channels(self) -> Vec<Cuboid> {
        self.channels
    }
}
