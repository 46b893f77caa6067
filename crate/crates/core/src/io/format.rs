//! Binary file formats for fitted models and compressed images.
//!
//! Model files (`ICCM` v1) hold a whole trained bundle: the pipeline spec,
//! every kernel block of every channel and stage, and the classifier. The
//! payload is covered by a CRC-32. Feature files (`ICCF` v1) hold one
//! compressed image: per channel, a brightness gap and the final-stage
//! coefficients.
//!
//! All multi-byte values are little-endian; floats are IEEE-754 doubles
//! written bit-for-bit, so save/load roundtrips are exact.

use crate::lda::LdaModel;
use crate::pca::KernelBlock;
use crate::pipeline::{FeatureVector, PipelineSpec, StageSpec, TransformModel};
use crate::recon::CompressedRecord;
use faer::Mat;
use std::path::{Path, PathBuf};
use thiserror::Error;

const MODEL_MAGIC: &[u8; 4] = b"ICCM";
const FEATURE_MAGIC: &[u8; 4] = b"ICCF";
const FORMAT_VERSION: u16 = 1;

/// Errors from reading or writing the binary formats.
#[derive(Debug, Error)]
pub enum FileFormatError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} is not an {expected} file (bad magic bytes)")]
    BadMagic { path: PathBuf, expected: String },
    #[error("{path} uses format version {found}, this build reads version {supported}")]
    VersionUnsupported {
        path: PathBuf,
        found: u16,
        supported: u16,
    },
    #[error("{path} is corrupted: checksum mismatch")]
    ChecksumMismatch { path: PathBuf },
    #[error("{path} ends early: needed {needed} more bytes at offset {offset}")]
    TruncatedFile {
        path: PathBuf,
        offset: usize,
        needed: usize,
    },
    #[error("{path} holds an inconsistent model: {reason}")]
    Inconsistent { path: PathBuf, reason: String },
}

/// A trained transform and its classifier, saved and loaded together.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub transform: TransformModel,
    pub classifier: LdaModel,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }
}

struct Reader<'a> {
    data: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(data: &'a [u8], path: &'a Path) -> Self {
        Self { data, offset: 0, path }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], FileFormatError> {
        if self.offset + len > self.data.len() {
            return Err(FileFormatError::TruncatedFile {
                path: self.path.to_path_buf(),
                offset: self.offset,
                needed: self.offset + len - self.data.len(),
            });
        }
        let slice = &self.data[self.offset..self.offset + len];
        self.offset += len;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, FileFormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FileFormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FileFormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize32(&mut self) -> Result<usize, FileFormatError> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64, FileFormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, len: usize) -> Result<Vec<f64>, FileFormatError> {
        let bytes = self.take(len * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn inconsistent(&self, reason: impl Into<String>) -> FileFormatError {
        FileFormatError::Inconsistent {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FileFormatError> {
    std::fs::write(path, bytes).map_err(|source| FileFormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, FileFormatError> {
    std::fs::read(path).map_err(|source| FileFormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_header(
    reader: &mut Reader<'_>,
    magic: &[u8; 4],
    path: &Path,
) -> Result<(), FileFormatError> {
    let found = reader.take(4)?;
    if found != magic {
        return Err(FileFormatError::BadMagic {
            path: path.to_path_buf(),
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let version = reader.u16()?;
    if version != FORMAT_VERSION {
        return Err(FileFormatError::VersionUnsupported {
            path: path.to_path_buf(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    Ok(())
}

fn write_kernel(w: &mut Writer, kernel: &KernelBlock) {
    let v = kernel.input_dim();
    let k = kernel.retained_dim();
    w.u32(v as u32);
    w.u32(k as u32);
    for &idx in kernel.selected_indices() {
        w.u32(idx as u32);
    }
    for &m in kernel.mean() {
        w.f64(m);
    }
    for &ev in kernel.eigenvalues() {
        w.f64(ev);
    }
    for col in 0..k {
        for row in 0..v {
            w.f64(kernel.basis()[(row, col)]);
        }
    }
}

fn read_kernel(r: &mut Reader<'_>) -> Result<KernelBlock, FileFormatError> {
    let v = r.usize32()?;
    let k = r.usize32()?;
    let mut selected = Vec::with_capacity(k);
    for _ in 0..k {
        selected.push(r.usize32()?);
    }
    let mean = r.f64_vec(v)?;
    let eigenvalues = r.f64_vec(k)?;
    let flat = r.f64_vec(v * k)?;
    let basis = Mat::from_fn(v, k, |row, col| flat[col * v + row]);
    KernelBlock::from_parts(v, k, mean, eigenvalues, basis, selected)
        .map_err(|e| r.inconsistent(format!("kernel block: {e}")))
}

/// Saves a trained bundle as an `ICCM` v1 file.
pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<(), FileFormatError> {
    let spec = bundle.transform.spec();
    let mut payload = Writer::new();
    payload.u8(spec.channels as u8);
    payload.u32(spec.stages.len() as u32);
    for stage in &spec.stages {
        payload.u32(stage.l_i as u32);
        payload.u32(stage.l_j as u32);
        payload.u32(stage.retained as u32);
    }
    for channel in 0..spec.channels {
        for stage in 0..spec.stages.len() {
            for kernel in bundle.transform.stage_kernels(channel, stage) {
                write_kernel(&mut payload, kernel);
            }
        }
    }

    let classifier = &bundle.classifier;
    let d = classifier.feature_dim();
    let m = classifier.class_count();
    payload.u32(d as u32);
    payload.u32(m as u32);
    for label in classifier.labels() {
        payload.u32(label.len() as u32);
        payload.bytes(label.as_bytes());
    }
    payload.u32(classifier.n_total() as u32);
    for (count, mean) in classifier.counts().iter().zip(classifier.means()) {
        payload.u32(*count as u32);
        for &v in mean {
            payload.f64(v);
        }
    }
    for row in 0..d {
        for col in 0..d {
            payload.f64(classifier.pooled_cov()[(row, col)]);
        }
    }
    for row in 0..m {
        for col in 0..d {
            payload.f64(classifier.weights()[(row, col)]);
        }
    }
    for &b in classifier.biases() {
        payload.f64(b);
    }

    let mut file = Writer::new();
    file.bytes(MODEL_MAGIC);
    file.u16(FORMAT_VERSION);
    file.u32(crc32fast::hash(&payload.buf));
    file.bytes(&payload.buf);
    write_file(path, &file.buf)
}

/// Loads an `ICCM` v1 file back into a [`ModelBundle`]. Every matrix is
/// restored bit-identical to what was saved.
pub fn load_model(path: &Path) -> Result<ModelBundle, FileFormatError> {
    let data = read_file(path)?;
    let mut r = Reader::new(&data, path);
    check_header(&mut r, MODEL_MAGIC, path)?;
    let stored_crc = r.u32()?;
    let payload = &data[r.offset..];
    if crc32fast::hash(payload) != stored_crc {
        return Err(FileFormatError::ChecksumMismatch { path: path.to_path_buf() });
    }

    let channels = r.u8()? as usize;
    let stage_count = r.usize32()?;
    let mut stages = Vec::with_capacity(stage_count);
    for _ in 0..stage_count {
        let l_i = r.usize32()?;
        let l_j = r.usize32()?;
        let retained = r.usize32()?;
        stages.push(StageSpec::new(l_i, l_j, retained));
    }
    // The format stores block sides only; the input dims are their products,
    // since a valid spec collapses both spatial axes completely.
    let input_dims = (
        stages.iter().map(|s| s.l_i).product(),
        stages.iter().map(|s| s.l_j).product(),
    );
    let spec = PipelineSpec { input_dims, channels, stages };

    let dims = spec.stage_dims();
    let mut kernels = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut per_channel = Vec::with_capacity(spec.stages.len());
        for stage in 0..spec.stages.len() {
            let (rows, cols, _) = dims[stage + 1];
            let mut stage_kernels = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                stage_kernels.push(read_kernel(&mut r)?);
            }
            per_channel.push(stage_kernels);
        }
        kernels.push(per_channel);
    }
    let transform = TransformModel::from_parts(spec, kernels)
        .map_err(|e| r.inconsistent(e.to_string()))?;

    let d = r.usize32()?;
    let m = r.usize32()?;
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let len = r.usize32()?;
        let bytes = r.take(len)?;
        let label = std::str::from_utf8(bytes)
            .map_err(|_| r.inconsistent("class label is not valid UTF-8"))?;
        labels.push(label.to_string());
    }
    let n_total = r.usize32()?;
    let mut counts = Vec::with_capacity(m);
    let mut means = Vec::with_capacity(m);
    for _ in 0..m {
        counts.push(r.usize32()?);
        means.push(r.f64_vec(d)?);
    }
    let pooled_flat = r.f64_vec(d * d)?;
    let pooled = Mat::from_fn(d, d, |row, col| pooled_flat[row * d + col]);
    let weights_flat = r.f64_vec(m * d)?;
    let weights = Mat::from_fn(m, d, |row, col| weights_flat[row * d + col]);
    let biases = r.f64_vec(m)?;

    if counts.iter().sum::<usize>() != n_total {
        return Err(r.inconsistent("class counts do not sum to the stored total"));
    }
    let classifier = LdaModel::from_parts(labels, counts, means, pooled, weights, biases)
        .map_err(|e| r.inconsistent(e.to_string()))?;
    if classifier.feature_dim() != transform.feature_len() {
        return Err(r.inconsistent(format!(
            "classifier dimension {} does not match the transform's feature length {}",
            classifier.feature_dim(),
            transform.feature_len()
        )));
    }
    Ok(ModelBundle { transform, classifier })
}

/// Saves a compressed image as an `ICCF` v1 file.
pub fn save_features(record: &CompressedRecord, path: &Path) -> Result<(), FileFormatError> {
    let features = record.features();
    let mut w = Writer::new();
    w.bytes(FEATURE_MAGIC);
    w.u16(FORMAT_VERSION);
    w.u8(features.channels() as u8);
    w.u32(features.per_channel_len() as u32);
    for (channel, &gap) in record.brightness_gaps().iter().enumerate() {
        w.f64(gap);
        for &coeff in features.channel(channel) {
            w.f64(coeff);
        }
    }
    write_file(path, &w.buf)
}

/// Loads an `ICCF` v1 file. The record's pipeline hash is `None`; the format
/// does not record which model produced it, so compatibility is checked at
/// use time against the model's feature length.
pub fn load_features(path: &Path) -> Result<CompressedRecord, FileFormatError> {
    let data = read_file(path)?;
    let mut r = Reader::new(&data, path);
    check_header(&mut r, FEATURE_MAGIC, path)?;
    let channels = r.u8()? as usize;
    let per_channel = r.usize32()?;
    let mut gaps = Vec::with_capacity(channels);
    let mut coefficients = Vec::with_capacity(channels * per_channel);
    for _ in 0..channels {
        gaps.push(r.f64()?);
        coefficients.extend(r.f64_vec(per_channel)?);
    }
    let features = FeatureVector::new(channels, per_channel, coefficients)
        .map_err(|e| r.inconsistent(e.to_string()))?;
    CompressedRecord::new(features, gaps, None).map_err(|e| r.inconsistent(e.to_string()))
}
