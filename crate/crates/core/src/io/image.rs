//! Image loading, preprocessing, and training-set augmentation.
//!
//! Images come in as PNG or PGM/PPM files, are bilinearly resized to the
//! pipeline's input dims (skipped when they already match), and split into
//! per-channel planes with values in [0, 255]. Preprocessing equalizes each
//! channel's histogram; augmentation doubles a training set with horizontal
//! mirrors.

use super::{LabeledImage, LabeledImageError, Manifest};
use crate::cuboid::Cuboid;
use crate::recon;
use image::imageops::FilterType;
use image::{ColorType, GrayImage, RgbImage};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors from reading or writing image files.
#[derive(Debug, Error)]
pub enum ImageLoadError {
    #[error("cannot open image {path}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unsupported image format for {path}: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("cannot encode image {path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("image {path} violates the image contract")]
    Invalid {
        path: PathBuf,
        source: LabeledImageError,
    },
}

fn map_image_error(path: &Path, error: image::ImageError) -> ImageLoadError {
    match error {
        image::ImageError::IoError(source) => ImageLoadError::Open {
            path: path.to_path_buf(),
            source,
        },
        image::ImageError::Unsupported(e) => ImageLoadError::UnsupportedFormat {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
        other => ImageLoadError::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    }
}

/// Loads a PNG or PGM/PPM file and returns its channel planes at the target
/// spatial dims `(I, J)`.
///
/// Grayscale sources yield one plane, color sources three (R, G, B).
/// Off-size images are bilinearly resized; images already at the target
/// dims pass through untouched.
pub fn load_image(path: &Path, target_dims: (usize, usize)) -> Result<Vec<Cuboid>, ImageLoadError> {
    let img = image::open(path).map_err(|e| map_image_error(path, e))?;
    let (i, j) = target_dims;
    let img = if img.width() as usize == j && img.height() as usize == i {
        img
    } else {
        img.resize_exact(j as u32, i as u32, FilterType::Triangle)
    };
    let grayscale = matches!(
        img.color(),
        ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16
    );
    if grayscale {
        let plane = img.to_luma8();
        let mut data = vec![0.0; i * j];
        for (x, y, px) in plane.enumerate_pixels() {
            data[y as usize * j + x as usize] = px.0[0] as f64;
        }
        Ok(vec![Cuboid::new(i, j, 1, data).expect("plane matches target dims")])
    } else {
        let rgb = img.to_rgb8();
        let mut planes = vec![vec![0.0; i * j]; 3];
        for (x, y, px) in rgb.enumerate_pixels() {
            for (c, plane) in planes.iter_mut().enumerate() {
                plane[y as usize * j + x as usize] = px.0[c] as f64;
            }
        }
        Ok(planes
            .into_iter()
            .map(|data| Cuboid::new(i, j, 1, data).expect("plane matches target dims"))
            .collect())
    }
}

/// Loads every manifest entry at the target dims, attaching labels.
pub fn load_dataset(
    manifest: &Manifest,
    target_dims: (usize, usize),
) -> Result<Vec<LabeledImage>, ImageLoadError> {
    manifest
        .entries
        .iter()
        .map(|entry| {
            let channels = load_image(&entry.path, target_dims)?;
            LabeledImage::new(entry.label.clone(), channels).map_err(|source| {
                ImageLoadError::Invalid { path: entry.path.clone(), source }
            })
        })
        .collect()
}

/// Writes channel planes as an image file; 1 plane encodes grayscale,
/// 3 encode RGB. Values are rounded and clamped to bytes. The format comes
/// from the file extension (`.png`, `.pgm`, `.ppm`).
pub fn save_image(path: &Path, channels: &[Cuboid]) -> Result<(), ImageLoadError> {
    let encode_err = |message: String| ImageLoadError::Encode {
        path: path.to_path_buf(),
        message,
    };
    if channels.is_empty() || (channels.len() != 1 && channels.len() != 3) {
        return Err(encode_err(format!(
            "expected 1 or 3 channel planes, got {}",
            channels.len()
        )));
    }
    let (i, j, k) = channels[0].dims();
    if k != 1 || channels.iter().any(|c| c.dims() != (i, j, 1)) {
        return Err(encode_err("channel planes must share dims IxJx1".into()));
    }
    let byte = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let result = if channels.len() == 1 {
        let buffer = GrayImage::from_fn(j as u32, i as u32, |x, y| {
            image::Luma([byte(channels[0].data()[y as usize * j + x as usize])])
        });
        buffer.save(path)
    } else {
        let buffer = RgbImage::from_fn(j as u32, i as u32, |x, y| {
            let at = y as usize * j + x as usize;
            image::Rgb([
                byte(channels[0].data()[at]),
                byte(channels[1].data()[at]),
                byte(channels[2].data()[at]),
            ])
        });
        buffer.save(path)
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(source) => ImageLoadError::Open {
            path: path.to_path_buf(),
            source,
        },
        other => encode_err(other.to_string()),
    })
}

/// Equalizes each channel's histogram independently; the label carries over.
pub fn preprocess(img: &LabeledImage) -> LabeledImage {
    let channels = img
        .channels()
        .iter()
        .map(recon::equalize_histogram)
        .collect();
    LabeledImage::new(img.label().to_string(), channels)
        .expect("equalization preserves dims and range")
}

/// Mirrors an image along its horizontal axis (columns reversed).
pub fn flip_horizontal(img: &LabeledImage) -> LabeledImage {
    let channels = img
        .channels()
        .iter()
        .map(|ch| {
            let (i, j, _) = ch.dims();
            let mut out = Cuboid::zeros(i, j, 1);
            for row in 0..i {
                for col in 0..j {
                    out.data_mut()[row * j + col] = ch.data()[row * j + (j - 1 - col)];
                }
            }
            out
        })
        .collect();
    LabeledImage::new(img.label().to_string(), channels).expect("flip preserves dims and range")
}

/// Doubles a training set: all originals in order, then their horizontal
/// mirrors in the same order, labels preserved.
pub fn augment_flips(set: &[LabeledImage]) -> Vec<LabeledImage> {
    let mut out = Vec::with_capacity(set.len() * 2);
    out.extend(set.iter().cloned());
    out.extend(set.iter().map(flip_horizontal));
    out
}
