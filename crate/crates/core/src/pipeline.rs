//! The multi-stage transform: spec validation, kernel fitting, the forward
//! pass to feature vectors, and its exact linear inverse.
//!
//! A pipeline is described by a [`PipelineSpec`]: input dims, channel count,
//! and an ordered list of [`StageSpec`]s. At stage `p` the current global
//! cuboid is partitioned into `l_i x l_j` blocks spanning the full spectral
//! depth (which is always the previous stage's retained count), every block is
//! flattened and projected onto its own fitted PCA basis, and the coefficient
//! vectors are restacked along the spectral axis to form the next global
//! cuboid. A valid spec collapses the spatial axes completely, so the final
//! cuboid is `1 x 1 x K` per channel and the feature vector is the channel
//! concatenation of those `K` coefficients.
//!
//! Channels never mix: each color plane gets an independent set of kernels,
//! fitted on that plane only.
//!
//! The inverse runs the stages in reverse, back-projecting coefficients with
//! the transpose basis (its pseudo-inverse, since columns are orthonormal)
//! and reassembling blocks. With every stage at full rank the inverse is the
//! identity up to roundoff.

use crate::cuboid::Cuboid;
use crate::pca::{self, KernelBlock, PcaError};
use faer::Mat;
use std::fmt;
use thiserror::Error;

/// One transform stage: block side lengths and the number of retained
/// components. The spectral side length is not free; it always equals the
/// previous stage's retained count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSpec {
    pub l_i: usize,
    pub l_j: usize,
    pub retained: usize,
}

impl StageSpec {
    pub fn new(l_i: usize, l_j: usize, retained: usize) -> Self {
        Self { l_i, l_j, retained }
    }
}

/// Full pipeline description: input spatial dims, channel count (1 or 3), and
/// the stage list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineSpec {
    pub input_dims: (usize, usize),
    pub channels: usize,
    pub stages: Vec<StageSpec>,
}

/// A single rule violation found by [`validate_spec`].
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecViolation {
    #[error("stage {stage}: block side {block} does not divide side {side} on axis {axis}")]
    NonDivisible {
        stage: usize,
        axis: char,
        side: usize,
        block: usize,
    },
    #[error("stage {stage}: retained count {retained} exceeds block volume {volume}")]
    RetainedTooLarge {
        stage: usize,
        retained: usize,
        volume: usize,
    },
    #[error("stage {stage}: stage parameters must be positive")]
    NonPositiveStage { stage: usize },
    #[error("spec must contain at least one stage")]
    Empty,
    #[error("channel count must be 1 or 3, got {channels}")]
    BadChannels { channels: usize },
    #[error("input dims must be positive, got {i}x{j}")]
    BadInputDims { i: usize, j: usize },
    #[error("stages do not collapse axis {axis}: {remaining} remains after the final stage")]
    IncompleteCollapse { axis: char, remaining: usize },
}

fn format_violations(violations: &[SpecViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Errors from fitting and running pipelines.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline spec: {}", format_violations(.0))]
    SpecInvalid(Vec<SpecViolation>),
    #[error("fitting requires at least 2 images, got {n}")]
    TooFewSamples { n: usize },
    #[error("expected {expected} channel cuboids per image, got {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("image cuboid dims {found:?} do not match the spec's {expected:?}")]
    ImageDimMismatch {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("feature vector length {found} does not match the model's {expected}")]
    FeatureLenMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error("inconsistent model: {reason}")]
    InvalidModel { reason: String },
}

/// Error from parsing the stage-spec text format.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("spec file line {line}: {message}")]
pub struct SpecParseError {
    pub line: usize,
    pub message: String,
}

impl PipelineSpec {
    /// Parses the stage-spec text format.
    ///
    /// The first significant line is the header `dims I J channels C`; each
    /// following line holds one stage as `l_i l_j retained`. Blank lines and
    /// lines starting with `#` are ignored. The parsed spec is not validated
    /// here; run [`validate_spec`] on it.
    pub fn parse(text: &str) -> Result<Self, SpecParseError> {
        let mut header: Option<((usize, usize), usize)> = None;
        let mut stages = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if header.is_none() {
                if tokens.len() != 5 || tokens[0] != "dims" || tokens[3] != "channels" {
                    return Err(SpecParseError {
                        line: line_no,
                        message: format!("expected header `dims I J channels C`, got `{line}`"),
                    });
                }
                let i = parse_int(tokens[1], line_no)?;
                let j = parse_int(tokens[2], line_no)?;
                let c = parse_int(tokens[4], line_no)?;
                header = Some(((i, j), c));
            } else {
                if tokens.len() != 3 {
                    return Err(SpecParseError {
                        line: line_no,
                        message: format!("expected `l_i l_j retained`, got `{line}`"),
                    });
                }
                stages.push(StageSpec::new(
                    parse_int(tokens[0], line_no)?,
                    parse_int(tokens[1], line_no)?,
                    parse_int(tokens[2], line_no)?,
                ));
            }
        }
        let (input_dims, channels) = header.ok_or(SpecParseError {
            line: 0,
            message: "missing header `dims I J channels C`".into(),
        })?;
        Ok(Self { input_dims, channels, stages })
    }

    /// Renders the spec in the text format accepted by [`PipelineSpec::parse`].
    pub fn to_spec_string(&self) -> String {
        let mut out = format!(
            "dims {} {} channels {}\n",
            self.input_dims.0, self.input_dims.1, self.channels
        );
        for s in &self.stages {
            out.push_str(&format!("{} {} {}\n", s.l_i, s.l_j, s.retained));
        }
        out
    }

    /// Retained count of the final stage.
    pub fn final_retained(&self) -> usize {
        self.stages.last().map(|s| s.retained).unwrap_or(0)
    }

    /// Total feature length, channels times the final retained count.
    pub fn feature_len(&self) -> usize {
        self.channels * self.final_retained()
    }

    /// Per-stage global cuboid dims after each stage, starting from the
    /// input. Entry `p` holds `(I^p, J^p, K^p)`; entry 0 is the input with
    /// spectral depth 1. Meaningful only for valid specs.
    pub fn stage_dims(&self) -> Vec<(usize, usize, usize)> {
        let mut dims = vec![(self.input_dims.0, self.input_dims.1, 1)];
        let (mut i, mut j) = self.input_dims;
        for s in &self.stages {
            i /= s.l_i.max(1);
            j /= s.l_j.max(1);
            dims.push((i, j, s.retained));
        }
        dims
    }

    /// Stable identifier of the pipeline shape (FNV-1a over dims, channels,
    /// and stages). Used to tag in-memory compressed records with the model
    /// that produced them.
    pub fn identity_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        let mut absorb = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        absorb(self.input_dims.0 as u64);
        absorb(self.input_dims.1 as u64);
        absorb(self.channels as u64);
        for s in &self.stages {
            absorb(s.l_i as u64);
            absorb(s.l_j as u64);
            absorb(s.retained as u64);
        }
        h
    }
}

fn parse_int(token: &str, line: usize) -> Result<usize, SpecParseError> {
    token.parse().map_err(|_| SpecParseError {
        line,
        message: format!("`{token}` is not a positive integer"),
    })
}

/// Checks every pipeline rule, returning all violations found: positive
/// parameters, per-stage divisibility of both spatial axes, retained counts
/// within block volume, and complete spatial collapse by the final stage.
pub fn validate_spec(spec: &PipelineSpec) -> Result<(), Vec<SpecViolation>> {
    let mut violations = Vec::new();
    if spec.channels != 1 && spec.channels != 3 {
        violations.push(SpecViolation::BadChannels { channels: spec.channels });
    }
    let (i0, j0) = spec.input_dims;
    if i0 == 0 || j0 == 0 {
        violations.push(SpecViolation::BadInputDims { i: i0, j: j0 });
    }
    if spec.stages.is_empty() {
        violations.push(SpecViolation::Empty);
        return Err(violations);
    }
    let mut cur_i = i0;
    let mut cur_j = j0;
    let mut k_prev = 1usize;
    for (idx, s) in spec.stages.iter().enumerate() {
        let stage = idx + 1;
        if s.l_i == 0 || s.l_j == 0 || s.retained == 0 {
            violations.push(SpecViolation::NonPositiveStage { stage });
            k_prev = s.retained.max(1);
            continue;
        }
        if cur_i % s.l_i != 0 {
            violations.push(SpecViolation::NonDivisible {
                stage,
                axis: 'i',
                side: cur_i,
                block: s.l_i,
            });
        }
        if cur_j % s.l_j != 0 {
            violations.push(SpecViolation::NonDivisible {
                stage,
                axis: 'j',
                side: cur_j,
                block: s.l_j,
            });
        }
        let volume = s.l_i * s.l_j * k_prev;
        if s.retained > volume {
            violations.push(SpecViolation::RetainedTooLarge {
                stage,
                retained: s.retained,
                volume,
            });
        }
        cur_i = (cur_i / s.l_i).max(1);
        cur_j = (cur_j / s.l_j).max(1);
        k_prev = s.retained;
    }
    if cur_i != 1 {
        violations.push(SpecViolation::IncompleteCollapse { axis: 'i', remaining: cur_i });
    }
    if cur_j != 1 {
        violations.push(SpecViolation::IncompleteCollapse { axis: 'j', remaining: cur_j });
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Final-stage coefficients of one image: `channels` blocks of `per_channel`
/// values, concatenated in channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    channels: usize,
    per_channel: usize,
    data: Vec<f64>,
}

impl FeatureVector {
    pub fn new(channels: usize, per_channel: usize, data: Vec<f64>) -> Result<Self, PipelineError> {
        if data.len() != channels * per_channel {
            return Err(PipelineError::FeatureLenMismatch {
                expected: channels * per_channel,
                found: data.len(),
            });
        }
        Ok(Self { channels, per_channel, data })
    }

    pub fn from_channels(parts: Vec<Vec<f64>>) -> Self {
        let channels = parts.len();
        let per_channel = parts.first().map(|p| p.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(channels * per_channel);
        for p in &parts {
            assert_eq!(p.len(), per_channel, "channel feature lengths must agree");
            data.extend_from_slice(p);
        }
        Self { channels, per_channel, data }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn per_channel_len(&self) -> usize {
        self.per_channel
    }

    /// Coefficients of one channel.
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.per_channel..(c + 1) * self.per_channel]
    }

    /// Concatenated coefficients, channel-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Fitted multi-stage transform: the spec plus one kernel grid per (channel,
/// stage).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformModel {
    spec: PipelineSpec,
    // kernels[channel][stage] holds the stage's blocks in row-major order.
    kernels: Vec<Vec<Vec<KernelBlock>>>,
}

impl TransformModel {
    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    /// Grid dimensions `(rows, cols)` of stage `p` (0-based).
    pub fn stage_grid_dims(&self, stage: usize) -> (usize, usize) {
        let dims = self.spec.stage_dims();
        (dims[stage + 1].0, dims[stage + 1].1)
    }

    /// Kernels of one stage in row-major grid order.
    pub fn stage_kernels(&self, channel: usize, stage: usize) -> &[KernelBlock] {
        &self.kernels[channel][stage]
    }

    /// Kernel for a single block position.
    pub fn kernel(&self, channel: usize, stage: usize, row: usize, col: usize) -> &KernelBlock {
        let (_, cols) = self.stage_grid_dims(stage);
        &self.kernels[channel][stage][row * cols + col]
    }

    /// Final per-channel coefficient count.
    pub fn final_retained(&self) -> usize {
        self.spec.final_retained()
    }

    /// Total feature length.
    pub fn feature_len(&self) -> usize {
        self.spec.feature_len()
    }

    /// Assembles a model from a spec and kernel grids, validating every
    /// block's dimensions against the spec.
    pub fn from_parts(
        spec: PipelineSpec,
        kernels: Vec<Vec<Vec<KernelBlock>>>,
    ) -> Result<Self, PipelineError> {
        validate_spec(&spec).map_err(PipelineError::SpecInvalid)?;
        if kernels.len() != spec.channels {
            return Err(PipelineError::InvalidModel {
                reason: format!("expected {} channel kernel sets, got {}", spec.channels, kernels.len()),
            });
        }
        let dims = spec.stage_dims();
        for (c, per_channel) in kernels.iter().enumerate() {
            if per_channel.len() != spec.stages.len() {
                return Err(PipelineError::InvalidModel {
                    reason: format!(
                        "channel {c}: expected {} stages, got {}",
                        spec.stages.len(),
                        per_channel.len()
                    ),
                });
            }
            for (p, stage_kernels) in per_channel.iter().enumerate() {
                let (rows, cols, _) = dims[p + 1];
                let v = spec.stages[p].l_i * spec.stages[p].l_j * dims[p].2;
                if stage_kernels.len() != rows * cols {
                    return Err(PipelineError::InvalidModel {
                        reason: format!(
                            "channel {c} stage {p}: expected {} blocks, got {}",
                            rows * cols,
                            stage_kernels.len()
                        ),
                    });
                }
                for (b, kb) in stage_kernels.iter().enumerate() {
                    if kb.input_dim() != v || kb.retained_dim() != spec.stages[p].retained {
                        return Err(PipelineError::InvalidModel {
                            reason: format!(
                                "channel {c} stage {p} block {b}: kernel is {}->{}, spec requires {}->{}",
                                kb.input_dim(),
                                kb.retained_dim(),
                                v,
                                spec.stages[p].retained
                            ),
                        });
                    }
                }
            }
        }
        Ok(Self { spec, kernels })
    }
}

fn check_image(spec: &PipelineSpec, image: &[Cuboid]) -> Result<(), PipelineError> {
    if image.len() != spec.channels {
        return Err(PipelineError::ChannelMismatch {
            expected: spec.channels,
            found: image.len(),
        });
    }
    let expected = (spec.input_dims.0, spec.input_dims.1, 1);
    for ch in image {
        if ch.dims() != expected {
            return Err(PipelineError::ImageDimMismatch { expected, found: ch.dims() });
        }
    }
    Ok(())
}

/// Copies block `(a, b)` of every state cuboid into the columns of a
/// `V x N` matrix, in flatten order.
fn gather_block(state: &[Cuboid], a: usize, b: usize, l_i: usize, l_j: usize) -> Mat<f64> {
    let (_, j_len, k_len) = state[0].dims();
    let v = l_i * l_j * k_len;
    let mut x = Mat::zeros(v, state.len());
    for (img, cuboid) in state.iter().enumerate() {
        let data = cuboid.data();
        for i in 0..l_i {
            let src = ((a * l_i + i) * j_len + b * l_j) * k_len;
            let dst = i * l_j * k_len;
            for offset in 0..l_j * k_len {
                x[(dst + offset, img)] = data[src + offset];
            }
        }
    }
    x
}

/// Writes per-image coefficient columns into position `(a, b)` of the next
/// stage's cuboids.
fn scatter_coefficients(next: &mut [Cuboid], g: &Mat<f64>, a: usize, b: usize) {
    let (_, cols, k_len) = next[0].dims();
    let base = (a * cols + b) * k_len;
    for (img, cuboid) in next.iter_mut().enumerate() {
        let data = cuboid.data_mut();
        for t in 0..k_len {
            data[base + t] = g[(t, img)];
        }
    }
}

/// Reverse of [`gather_block`]: copies reconstructed block columns back into
/// the previous stage's cuboids.
fn scatter_block(prev: &mut [Cuboid], f: &Mat<f64>, a: usize, b: usize, l_i: usize, l_j: usize) {
    let (_, j_len, k_len) = prev[0].dims();
    for (img, cuboid) in prev.iter_mut().enumerate() {
        let data = cuboid.data_mut();
        for i in 0..l_i {
            let dst = ((a * l_i + i) * j_len + b * l_j) * k_len;
            let src = i * l_j * k_len;
            for offset in 0..l_j * k_len {
                data[dst + offset] = f[(src + offset, img)];
            }
        }
    }
}

/// Reverse of [`scatter_coefficients`]: reads position `(a, b)` of every
/// state cuboid into coefficient columns.
fn gather_coefficients(state: &[Cuboid], a: usize, b: usize) -> Mat<f64> {
    let (_, cols, k_len) = state[0].dims();
    let base = (a * cols + b) * k_len;
    let mut g = Mat::zeros(k_len, state.len());
    for (img, cuboid) in state.iter().enumerate() {
        let data = cuboid.data();
        for t in 0..k_len {
            g[(t, img)] = data[base + t];
        }
    }
    g
}

/// Fits transform kernels for every stage, block, and channel on the given
/// training images. Each image is a slice of `channels` cuboids of dims
/// `I x J x 1`.
pub fn fit(images: &[Vec<Cuboid>], spec: &PipelineSpec) -> Result<TransformModel, PipelineError> {
    validate_spec(spec).map_err(PipelineError::SpecInvalid)?;
    if images.len() < 2 {
        return Err(PipelineError::TooFewSamples { n: images.len() });
    }
    for image in images {
        check_image(spec, image)?;
    }

    let mut kernels: Vec<Vec<Vec<KernelBlock>>> = Vec::with_capacity(spec.channels);
    for c in 0..spec.channels {
        let mut state: Vec<Cuboid> = images.iter().map(|img| img[c].clone()).collect();
        let mut channel_kernels = Vec::with_capacity(spec.stages.len());
        for stage in &spec.stages {
            let (cur_i, cur_j, _) = state[0].dims();
            let rows = cur_i / stage.l_i;
            let cols = cur_j / stage.l_j;
            let mut stage_kernels = Vec::with_capacity(rows * cols);
            let mut next: Vec<Cuboid> =
                (0..state.len()).map(|_| Cuboid::zeros(rows, cols, stage.retained)).collect();
            for a in 0..rows {
                for b in 0..cols {
                    let x = gather_block(&state, a, b, stage.l_i, stage.l_j);
                    let kernel = pca::fit_block_cols(x.as_ref(), stage.retained)?;
                    let g = kernel.project_batch(x.as_ref())?;
                    scatter_coefficients(&mut next, &g, a, b);
                    stage_kernels.push(kernel);
                }
            }
            channel_kernels.push(stage_kernels);
            state = next;
        }
        kernels.push(channel_kernels);
    }
    Ok(TransformModel { spec: spec.clone(), kernels })
}

/// Runs the forward transform on one image.
pub fn forward(model: &TransformModel, image: &[Cuboid]) -> Result<FeatureVector, PipelineError> {
    let owned: Vec<Cuboid> = image.to_vec();
    let mut batch = forward_batch(model, std::slice::from_ref(&owned))?;
    Ok(batch.pop().expect("batch of one"))
}

/// Runs the forward transform on a batch of images; one matrix product per
/// (stage, block) covers the whole batch.
pub fn forward_batch(
    model: &TransformModel,
    images: &[Vec<Cuboid>],
) -> Result<Vec<FeatureVector>, PipelineError> {
    let spec = &model.spec;
    for image in images {
        check_image(spec, image)?;
    }
    if images.is_empty() {
        return Ok(Vec::new());
    }

    let n = images.len();
    let kp = spec.final_retained();
    let mut features: Vec<Vec<f64>> = vec![Vec::with_capacity(spec.channels * kp); n];
    for c in 0..spec.channels {
        let mut state: Vec<Cuboid> = images.iter().map(|img| img[c].clone()).collect();
        for (p, stage) in spec.stages.iter().enumerate() {
            let (cur_i, cur_j, _) = state[0].dims();
            let rows = cur_i / stage.l_i;
            let cols = cur_j / stage.l_j;
            let mut next: Vec<Cuboid> =
                (0..n).map(|_| Cuboid::zeros(rows, cols, stage.retained)).collect();
            for a in 0..rows {
                for b in 0..cols {
                    let x = gather_block(&state, a, b, stage.l_i, stage.l_j);
                    let kernel = model.kernel(c, p, a, b);
                    let g = kernel.project_batch(x.as_ref())?;
                    scatter_coefficients(&mut next, &g, a, b);
                }
            }
            state = next;
        }
        for (img, cuboid) in state.iter().enumerate() {
            features[img].extend_from_slice(cuboid.data());
        }
    }
    Ok(features
        .into_iter()
        .map(|data| FeatureVector {
            channels: spec.channels,
            per_channel: kp,
            data,
        })
        .collect())
}

/// Runs the exact inverse transform, returning the raw per-channel
/// reconstruction (before any post-processing).
pub fn inverse(model: &TransformModel, features: &FeatureVector) -> Result<Vec<Cuboid>, PipelineError> {
    let mut batch = inverse_batch(model, std::slice::from_ref(features))?;
    Ok(batch.pop().expect("batch of one"))
}

/// Inverse transform over a batch of feature vectors.
pub fn inverse_batch(
    model: &TransformModel,
    features: &[FeatureVector],
) -> Result<Vec<Vec<Cuboid>>, PipelineError> {
    let spec = &model.spec;
    let kp = spec.final_retained();
    for f in features {
        if f.len() != spec.feature_len() || f.channels() != spec.channels {
            return Err(PipelineError::FeatureLenMismatch {
                expected: spec.feature_len(),
                found: f.len(),
            });
        }
    }
    if features.is_empty() {
        return Ok(Vec::new());
    }

    let n = features.len();
    let dims = spec.stage_dims();
    let mut recon: Vec<Vec<Cuboid>> = vec![Vec::with_capacity(spec.channels); n];
    for c in 0..spec.channels {
        let mut state: Vec<Cuboid> = features
            .iter()
            .map(|f| {
                Cuboid::new(1, 1, kp, f.channel(c).to_vec()).expect("feature length checked above")
            })
            .collect();
        for (p, stage) in spec.stages.iter().enumerate().rev() {
            let (rows, cols, _) = dims[p + 1];
            let (prev_i, prev_j, prev_k) = dims[p];
            let mut prev: Vec<Cuboid> = (0..n).map(|_| Cuboid::zeros(prev_i, prev_j, prev_k)).collect();
            for a in 0..rows {
                for b in 0..cols {
                    let g = gather_coefficients(&state, a, b);
                    let kernel = model.kernel(c, p, a, b);
                    let f = kernel.backproject_batch(g.as_ref())?;
                    scatter_block(&mut prev, &f, a, b, stage.l_i, stage.l_j);
                }
            }
            state = prev;
        }
        for (img, cuboid) in state.into_iter().enumerate() {
            recon[img].push(cuboid);
        }
    }
    Ok(recon)
}

impl fmt::Display for PipelineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} x{}ch, stages",
            self.input_dims.0, self.input_dims.1, self.channels
        )?;
        for s in &self.stages {
            write!(f, " ({},{},{})", s.l_i, s.l_j, s.retained)?;
        }
        Ok(())
    }
}
