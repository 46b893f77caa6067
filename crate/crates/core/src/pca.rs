//! Per-block PCA: covariance estimation, symmetric eigendecomposition,
//! top-K truncation, projection, and back-projection.
//!
//! A [`KernelBlock`] is the trained transform kernel for one block position:
//! the sample mean, the leading eigenvalues of the biased (1/N) sample
//! covariance, and the matching orthonormal eigenvector basis. Projection is
//! `g = Bᵀ f` on the raw vector (no mean subtraction); back-projection is
//! `f̂ = B g`, which equals the pseudo-inverse of `Bᵀ` because the columns of
//! `B` are orthonormal.
//!
//! Two fitting strategies produce identical results up to roundoff:
//!
//! - **Dense**: form the `V x V` covariance and decompose it directly.
//! - **Gram**: when there are fewer samples than dimensions, decompose the
//!   `N x N` Gram matrix instead and map its eigenvectors back up. Covariance
//!   and Gram matrix share nonzero eigenvalues, and `u = Xc v / sqrt(N λ)`
//!   recovers the covariance eigenvector for Gram eigenpair `(λ, v)`. When
//!   more components are requested than the sample rank supports, the basis
//!   is completed with an orthonormal null-space complement (eigenvalue 0)
//!   taken from a full QR of the mapped eigenvectors.
//!
//! Determinism conventions, applied identically on both paths:
//! eigenvalues sorted descending with ties keeping solver order; each basis
//! column's first component with magnitude above `1e-12` made positive;
//! eigenvalues clamped to be nonnegative; the covariance (or Gram matrix)
//! symmetrized as `(R + Rᵀ)/2` before decomposition.

use faer::{Mat, MatRef, Side};
use thiserror::Error;

/// Magnitude threshold for the first-nonzero sign convention.
const SIGN_EPS: f64 = 1e-12;

/// Errors from kernel fitting and application.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PcaError {
    /// Fitting needs at least two samples.
    #[error("fitting requires at least 2 samples, got {n}")]
    TooFewSamples { n: usize },
    /// Retained dimension exceeds the input dimension.
    #[error("retained dimension {k} exceeds input dimension {v}")]
    KTooLarge { k: usize, v: usize },
    /// Retained dimension must be at least one.
    #[error("retained dimension must be at least 1")]
    ZeroRetainedDim,
    /// The eigensolver did not converge.
    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,
    /// Vector length does not match the kernel.
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
}

/// How [`fit_block_cols_with`] computes the eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStrategy {
    /// Dense when `V <= N`, Gram otherwise.
    Auto,
    /// Always decompose the `V x V` covariance.
    Dense,
    /// Always decompose the `N x N` Gram matrix.
    Gram,
}

/// Truncated PCA kernel for one block: mean, leading eigenpairs, and the
/// orthonormal projection basis.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBlock {
    input_dim: usize,
    retained_dim: usize,
    mean: Vec<f64>,
    eigenvalues: Vec<f64>,
    basis: Mat<f64>,
    selected_indices: Vec<usize>,
    total_variance: Option<f64>,
}

impl KernelBlock {
    /// Input dimension `V`.
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Retained dimension `K`.
    pub fn retained_dim(&self) -> usize {
        self.retained_dim
    }

    /// Sample mean of the fitting set.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Retained eigenvalues, descending and nonnegative.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `V x K` basis with orthonormal columns, ordered by descending
    /// eigenvalue.
    pub fn basis(&self) -> MatRef<'_, f64> {
        self.basis.as_ref()
    }

    /// Positions of the retained eigenpairs in the descending full spectrum.
    pub fn selected_indices(&self) -> &[usize] {
        &self.selected_indices
    }

    /// Trace of the sample covariance (sum of all `V` eigenvalues), available
    /// only on freshly fitted kernels; deserialized kernels return `None`.
    pub fn total_variance(&self) -> Option<f64> {
        self.total_variance
    }

    /// Rebuilds a kernel from stored parts, validating shapes.
    pub fn from_parts(
        input_dim: usize,
        retained_dim: usize,
        mean: Vec<f64>,
        eigenvalues: Vec<f64>,
        basis: Mat<f64>,
        selected_indices: Vec<usize>,
    ) -> Result<Self, PcaError> {
        if retained_dim == 0 {
            return Err(PcaError::ZeroRetainedDim);
        }
        if retained_dim > input_dim {
            return Err(PcaError::KTooLarge { k: retained_dim, v: input_dim });
        }
        if mean.len() != input_dim {
            return Err(PcaError::DimMismatch { expected: input_dim, found: mean.len() });
        }
        if eigenvalues.len() != retained_dim {
            return Err(PcaError::DimMismatch { expected: retained_dim, found: eigenvalues.len() });
        }
        if basis.nrows() != input_dim || basis.ncols() != retained_dim {
            return Err(PcaError::DimMismatch {
                expected: input_dim * retained_dim,
                found: basis.nrows() * basis.ncols(),
            });
        }
        if selected_indices.len() != retained_dim {
            return Err(PcaError::DimMismatch {
                expected: retained_dim,
                found: selected_indices.len(),
            });
        }
        Ok(Self {
            input_dim,
            retained_dim,
            mean,
            eigenvalues,
            basis,
            selected_indices,
            total_variance: None,
        })
    }

    /// Projects one `V`-vector to its `K` PCA coefficients, `g = Bᵀ f`.
    pub fn project(&self, f: &[f64]) -> Result<Vec<f64>, PcaError> {
        if f.len() != self.input_dim {
            return Err(PcaError::DimMismatch { expected: self.input_dim, found: f.len() });
        }
        let mut g = vec![0.0; self.retained_dim];
        for (t, gt) in g.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (v, fv) in f.iter().enumerate() {
                acc += self.basis[(v, t)] * fv;
            }
            *gt = acc;
        }
        Ok(g)
    }

    /// Projects a `V x N` matrix of sample columns in one pass, returning
    /// `K x N` coefficients.
    pub fn project_batch(&self, f: MatRef<'_, f64>) -> Result<Mat<f64>, PcaError> {
        if f.nrows() != self.input_dim {
            return Err(PcaError::DimMismatch { expected: self.input_dim, found: f.nrows() });
        }
        Ok(self.basis.transpose() * f)
    }

    /// Back-projects `K` coefficients to the input space, `f̂ = B g`.
    pub fn backproject(&self, g: &[f64]) -> Result<Vec<f64>, PcaError> {
        if g.len() != self.retained_dim {
            return Err(PcaError::DimMismatch { expected: self.retained_dim, found: g.len() });
        }
        let mut f = vec![0.0; self.input_dim];
        for (t, gt) in g.iter().enumerate() {
            for (v, fv) in f.iter_mut().enumerate() {
                *fv += self.basis[(v, t)] * gt;
            }
        }
        Ok(f)
    }

    /// Back-projects a `K x N` coefficient matrix in one pass, returning
    /// `V x N` reconstructions.
    pub fn backproject_batch(&self, g: MatRef<'_, f64>) -> Result<Mat<f64>, PcaError> {
        if g.nrows() != self.retained_dim {
            return Err(PcaError::DimMismatch { expected: self.retained_dim, found: g.nrows() });
        }
        Ok(&self.basis * g)
    }

    /// Sum of the retained eigenvalues.
    pub fn retained_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Largest absolute deviation of `BᵀB` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.basis.transpose() * &self.basis;
        let mut err: f64 = 0.0;
        for i in 0..self.retained_dim {
            for j in 0..self.retained_dim {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        err
    }
}

/// Fits a kernel from a slice of `V`-vectors, retaining `k` components.
pub fn fit_block<S: AsRef<[f64]>>(samples: &[S], k: usize) -> Result<KernelBlock, PcaError> {
    if samples.len() < 2 {
        return Err(PcaError::TooFewSamples { n: samples.len() });
    }
    let v = samples[0].as_ref().len();
    for s in samples {
        if s.as_ref().len() != v {
            return Err(PcaError::DimMismatch { expected: v, found: s.as_ref().len() });
        }
    }
    let x = Mat::from_fn(v, samples.len(), |row, col| samples[col].as_ref()[row]);
    fit_block_cols(x.as_ref(), k)
}

/// Fits a kernel from a `V x N` matrix whose columns are the samples.
pub fn fit_block_cols(samples: MatRef<'_, f64>, k: usize) -> Result<KernelBlock, PcaError> {
    fit_block_cols_with(samples, k, FitStrategy::Auto)
}

/// Fits a kernel with an explicit strategy choice; `Auto` picks Gram when
/// there are fewer samples than dimensions.
pub fn fit_block_cols_with(
    samples: MatRef<'_, f64>,
    k: usize,
    strategy: FitStrategy,
) -> Result<KernelBlock, PcaError> {
    let v = samples.nrows();
    let n = samples.ncols();
    if n < 2 {
        return Err(PcaError::TooFewSamples { n });
    }
    if k == 0 {
        return Err(PcaError::ZeroRetainedDim);
    }
    if k > v {
        return Err(PcaError::KTooLarge { k, v });
    }

    let mut mean = vec![0.0; v];
    for col in 0..n {
        for (row, m) in mean.iter_mut().enumerate() {
            *m += samples[(row, col)];
        }
    }
    let inv_n = 1.0 / n as f64;
    for m in &mut mean {
        *m *= inv_n;
    }

    let xc = Mat::from_fn(v, n, |row, col| samples[(row, col)] - mean[row]);
    let mut total = 0.0;
    for col in 0..n {
        for row in 0..v {
            let x = xc[(row, col)];
            total += x * x;
        }
    }
    let total_variance = total * inv_n;

    let use_dense = match strategy {
        FitStrategy::Dense => true,
        FitStrategy::Gram => false,
        FitStrategy::Auto => v <= n,
    };

    let (eigenvalues, basis) = if use_dense {
        fit_dense(&xc, k)?
    } else {
        fit_gram(&xc, k)?
    };

    let mut block = KernelBlock {
        input_dim: v,
        retained_dim: k,
        mean,
        eigenvalues,
        basis,
        selected_indices: (0..k).collect(),
        total_variance: Some(total_variance),
    };
    apply_sign_convention(&mut block.basis);
    Ok(block)
}

/// Dense path: eigendecomposition of the `V x V` covariance.
fn fit_dense(xc: &Mat<f64>, k: usize) -> Result<(Vec<f64>, Mat<f64>), PcaError> {
    let v = xc.nrows();
    let inv_n = 1.0 / xc.ncols() as f64;
    let mut r = xc * xc.transpose();
    for i in 0..v {
        for j in 0..=i {
            let sym = 0.5 * (r[(i, j)] + r[(j, i)]) * inv_n;
            r[(i, j)] = sym;
            r[(j, i)] = sym;
        }
    }
    let (values, vectors) = eigen_descending(r.as_ref())?;
    let eigenvalues: Vec<f64> = values[..k].iter().map(|&e| e.max(0.0)).collect();
    let basis = vectors.get(.., ..k).to_owned();
    Ok((eigenvalues, basis))
}

/// Gram path: eigendecomposition of the `N x N` Gram matrix, eigenvectors
/// mapped back to input space, basis completed past the sample rank with an
/// orthonormal null-space complement.
fn fit_gram(xc: &Mat<f64>, k: usize) -> Result<(Vec<f64>, Mat<f64>), PcaError> {
    let v = xc.nrows();
    let n = xc.ncols();
    let inv_n = 1.0 / n as f64;
    let mut gram = xc.transpose() * xc;
    for i in 0..n {
        for j in 0..=i {
            let sym = 0.5 * (gram[(i, j)] + gram[(j, i)]) * inv_n;
            gram[(i, j)] = sym;
            gram[(j, i)] = sym;
        }
    }
    let (values, vectors) = eigen_descending(gram.as_ref())?;

    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = top * v.max(n) as f64 * f64::EPSILON;
    let rank = values.iter().take_while(|&&g| g > tol).count();
    let mapped = rank.min(k);

    let mut basis = Mat::zeros(v, k);
    if mapped > 0 {
        // u_t = Xc v_t / sqrt(N * lambda_t), computed for all retained
        // columns in one product, then re-orthonormalized to push the
        // elementwise Gram error down to machine precision.
        let u = xc * vectors.get(.., ..mapped);
        for t in 0..mapped {
            let scale = 1.0 / (n as f64 * values[t]).sqrt();
            for row in 0..v {
                basis[(row, t)] = u[(row, t)] * scale;
            }
        }
        gram_schmidt(&mut basis, mapped);
    }

    if k > mapped {
        complete_basis(xc, &mut basis, mapped, k);
    }

    // Columns past the sample rank carry exactly zero variance.
    let mut eigenvalues: Vec<f64> = values.iter().take(mapped).map(|e| e.max(0.0)).collect();
    eigenvalues.resize(k, 0.0);
    Ok((eigenvalues, basis))
}

/// Fills columns `from..k` of `basis` with an orthonormal complement of the
/// leading `from` columns.
fn complete_basis(xc: &Mat<f64>, basis: &mut Mat<f64>, from: usize, k: usize) {
    let v = xc.nrows();
    if from == 0 {
        for t in 0..k {
            basis[(t, t)] = 1.0;
        }
        return;
    }
    let qr = basis.get(.., ..from).qr();
    let q = qr.compute_Q();
    for t in from..k {
        for row in 0..v {
            basis[(row, t)] = q[(row, t)];
        }
    }
}

/// Two-pass modified Gram-Schmidt over the leading `cols` columns.
///
/// The columns are already near-orthonormal eigenvectors; this only strips
/// roundoff-level cross terms, keeping every column within fp noise of its
/// input direction.
fn gram_schmidt(basis: &mut Mat<f64>, cols: usize) {
    let v = basis.nrows();
    for _pass in 0..2 {
        for t in 0..cols {
            for s in 0..t {
                let mut dot = 0.0;
                for row in 0..v {
                    dot += basis[(row, s)] * basis[(row, t)];
                }
                for row in 0..v {
                    let correction = dot * basis[(row, s)];
                    basis[(row, t)] -= correction;
                }
            }
            let mut norm = 0.0;
            for row in 0..v {
                norm += basis[(row, t)] * basis[(row, t)];
            }
            let norm = norm.sqrt();
            if norm > 0.0 {
                let inv = 1.0 / norm;
                for row in 0..v {
                    basis[(row, t)] *= inv;
                }
            }
        }
    }
}

/// Symmetric eigendecomposition with eigenpairs reordered to descending
/// eigenvalue; ties keep the solver's ascending order, so the result is
/// deterministic for identical input bits.
fn eigen_descending(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>), PcaError> {
    let eigen = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| PcaError::EigenFailure)?;
    let dim = m.nrows();
    let s = eigen.S();
    let u = eigen.U();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let vectors = Mat::from_fn(dim, dim, |row, col| u[(row, order[col])]);
    Ok((values, vectors))
}

/// Flips each column so its first component with magnitude above `1e-12` is
/// positive.
fn apply_sign_convention(basis: &mut Mat<f64>) {
    let (v, k) = (basis.nrows(), basis.ncols());
    for t in 0..k {
        let mut flip = false;
        for row in 0..v {
            let x = basis[(row, t)];
            if x.abs() > SIGN_EPS {
                flip = x < 0.0;
                break;
            }
        }
        if flip {
            for row in 0..v {
                basis[(row, t)] = -basis[(row, t)];
            }
        }
    }
}
