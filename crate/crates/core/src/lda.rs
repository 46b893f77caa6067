//! Gaussian MAP linear discriminant classifier.
//!
//! Classes are modeled as Gaussians sharing a pooled covariance, so the
//! log-joint `ln P(x | C_m) + ln P(C_m)` reduces, after dropping terms that
//! do not depend on the class, to the linear score
//!
//! ```text
//! s_m(x) = w_m . x + b_m,   w_m = Sigma~^-1 mu_m,
//! b_m = -1/2 mu_m . w_m + ln(n_m / N)
//! ```
//!
//! where `Sigma~` is the pooled covariance plus a small ridge. Because only
//! class-independent terms are dropped, argmax over scores equals the exact
//! MAP decision, and softmax over scores equals the exact posterior.
//!
//! The ridge is `lambda = 1e-6 * trace(Sigma) / D`, applied before the
//! factorization only; the model keeps the raw pooled covariance, so the
//! regularization is reproducible from the stored fields. The solve goes
//! through a Cholesky factorization; an explicit inverse is never formed.
//!
//! Class order is first appearance in the training labels, and all ties
//! break toward the earlier class, so results are reproducible across runs.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use thiserror::Error;

/// Relative ridge strength applied to the pooled covariance trace.
const RIDGE_SCALE: f64 = 1e-6;
/// Condition-number estimate above which fitting warns about instability.
const CONDITION_LIMIT: f64 = 1e12;

/// Errors from fitting or applying the classifier.
#[derive(Debug, Error)]
pub enum LdaError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("sample {sample} has an empty class label")]
    EmptyClass { sample: usize },
    #[error("got {features} feature vectors but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("expected feature dimension {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("k must be in 1..={classes}, got {k}")]
    KOutOfRange { k: usize, classes: usize },
    #[error("no training samples")]
    NoSamples,
}

/// Per-class first and second moments.
#[derive(Debug, Clone)]
pub struct ClassStats {
    pub label: String,
    pub count: usize,
    pub mean: Vec<f64>,
    pub covariance: Mat<f64>,
}

/// Fitted discriminant: class statistics reduced to linear score weights.
///
/// `pooled_cov` is stored without the ridge; refitting the ridge and solve
/// from the stored means and covariance reproduces `weights` and `biases`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    labels: Vec<String>,
    counts: Vec<usize>,
    means: Vec<Vec<f64>>,
    pooled_cov: Mat<f64>,
    weights: Mat<f64>,
    biases: Vec<f64>,
    n_total: usize,
    feature_dim: usize,
}

impl LdaModel {
    /// Class labels in first-appearance order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Training sample count per class.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Class priors `n_m / N`.
    pub fn priors(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&n| n as f64 / self.n_total as f64)
            .collect()
    }

    /// Per-class mean vectors.
    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Pooled covariance before regularization.
    pub fn pooled_cov(&self) -> MatRef<'_, f64> {
        self.pooled_cov.as_ref()
    }

    /// Score weights, one row per class.
    pub fn weights(&self) -> MatRef<'_, f64> {
        self.weights.as_ref()
    }

    /// Score biases, one per class.
    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    /// Rebuilds a model from stored fields, validating shape consistency.
    /// Weights and biases are taken as given rather than re-solved, so a
    /// serialized model round-trips bit for bit.
    pub fn from_parts(
        labels: Vec<String>,
        counts: Vec<usize>,
        means: Vec<Vec<f64>>,
        pooled_cov: Mat<f64>,
        weights: Mat<f64>,
        biases: Vec<f64>,
    ) -> Result<Self, LdaError> {
        let m = labels.len();
        if m < 2 {
            return Err(LdaError::SingleClass);
        }
        if counts.len() != m || means.len() != m || biases.len() != m || weights.nrows() != m {
            return Err(LdaError::LengthMismatch { features: means.len(), labels: m });
        }
        let d = weights.ncols();
        if pooled_cov.nrows() != d || pooled_cov.ncols() != d {
            return Err(LdaError::DimMismatch { expected: d, found: pooled_cov.nrows() });
        }
        for mean in &means {
            if mean.len() != d {
                return Err(LdaError::DimMismatch { expected: d, found: mean.len() });
            }
        }
        let n_total = counts.iter().sum();
        if n_total == 0 {
            return Err(LdaError::NoSamples);
        }
        Ok(Self { labels, counts, means, pooled_cov, weights, biases, n_total, feature_dim: d })
    }

    /// Linear scores `w_m . x + b_m` for every class.
    pub fn score(&self, x: &[f64]) -> Result<Vec<f64>, LdaError> {
        if x.len() != self.feature_dim {
            return Err(LdaError::DimMismatch { expected: self.feature_dim, found: x.len() });
        }
        Ok((0..self.labels.len())
            .map(|m| {
                let dot: f64 = (0..self.feature_dim)
                    .map(|d| self.weights[(m, d)] * x[d])
                    .sum();
                dot + self.biases[m]
            })
            .collect())
    }

    /// MAP class label: argmax of the scores, ties to the earliest class.
    pub fn predict(&self, x: &[f64]) -> Result<&str, LdaError> {
        let scores = self.score(x)?;
        let best = argmax_first(&scores);
        Ok(&self.labels[best])
    }

    /// Class posteriors: softmax of the scores with max-subtraction.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>, LdaError> {
        let scores = self.score(x)?;
        Ok(softmax(&scores))
    }

    /// The `k` best classes by descending score, paired with posteriors.
    /// Ties keep class order, matching [`LdaModel::predict`].
    pub fn top_k(&self, x: &[f64], k: usize) -> Result<Vec<(String, f64)>, LdaError> {
        let m = self.labels.len();
        if k == 0 || k > m {
            return Err(LdaError::KOutOfRange { k, classes: m });
        }
        let scores = self.score(x)?;
        let probs = softmax(&scores);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        Ok(order
            .into_iter()
            .take(k)
            .map(|idx| (self.labels[idx].clone(), probs[idx]))
            .collect())
    }
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (idx, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = idx;
        }
    }
    best
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Per-class moments of the training set, classes in first-appearance order.
pub fn class_stats<S, L>(features: &[S], labels: &[L]) -> Result<Vec<ClassStats>, LdaError>
where
    S: AsRef<[f64]>,
    L: AsRef<str>,
{
    if features.len() != labels.len() {
        return Err(LdaError::LengthMismatch { features: features.len(), labels: labels.len() });
    }
    if features.is_empty() {
        return Err(LdaError::NoSamples);
    }
    let d = features[0].as_ref().len();
    for f in features {
        if f.as_ref().len() != d {
            return Err(LdaError::DimMismatch { expected: d, found: f.as_ref().len() });
        }
    }
    let mut order: Vec<&str> = Vec::new();
    let mut assignment: Vec<usize> = Vec::with_capacity(labels.len());
    for (sample, label) in labels.iter().enumerate() {
        let name = label.as_ref();
        if name.is_empty() {
            return Err(LdaError::EmptyClass { sample });
        }
        let idx = match order.iter().position(|&l| l == name) {
            Some(idx) => idx,
            None => {
                order.push(name);
                order.len() - 1
            }
        };
        assignment.push(idx);
    }

    let mut stats = Vec::with_capacity(order.len());
    for (class_idx, label) in order.iter().enumerate() {
        let members: Vec<usize> = assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == class_idx)
            .map(|(s, _)| s)
            .collect();
        let n_m = members.len();
        let mut mean = vec![0.0; d];
        for &s in &members {
            for (acc, &v) in mean.iter_mut().zip(features[s].as_ref()) {
                *acc += v;
            }
        }
        for acc in &mut mean {
            *acc /= n_m as f64;
        }
        let xc = Mat::from_fn(d, n_m, |row, col| {
            features[members[col]].as_ref()[row] - mean[row]
        });
        let outer = &xc * xc.transpose();
        let cov = Mat::from_fn(d, d, |r, c| {
            (outer[(r, c)] + outer[(c, r)]) / 2.0 / n_m as f64
        });
        stats.push(ClassStats {
            label: label.to_string(),
            count: n_m,
            mean,
            covariance: cov,
        });
    }
    Ok(stats)
}

/// Fits the discriminant: class moments, pooled covariance, ridge, and the
/// Cholesky solve for weights and biases.
///
/// If the regularized covariance still looks ill-conditioned (estimated
/// condition number above 1e12) a warning is logged and fitting proceeds.
pub fn fit_lda<S, L>(features: &[S], labels: &[L]) -> Result<LdaModel, LdaError>
where
    S: AsRef<[f64]>,
    L: AsRef<str>,
{
    let stats = class_stats(features, labels)?;
    if stats.len() < 2 {
        return Err(LdaError::SingleClass);
    }
    let d = stats[0].mean.len();
    let n_total: usize = stats.iter().map(|s| s.count).sum();

    let mut pooled = Mat::zeros(d, d);
    for s in &stats {
        let weight = s.count as f64 / n_total as f64;
        for r in 0..d {
            for c in 0..d {
                pooled[(r, c)] += weight * s.covariance[(r, c)];
            }
        }
    }

    let trace: f64 = (0..d).map(|i| pooled[(i, i)]).sum();
    let lambda = RIDGE_SCALE * trace / d as f64;
    let regularized = Mat::from_fn(d, d, |r, c| {
        pooled[(r, c)] + if r == c { lambda } else { 0.0 }
    });

    let mu = Mat::from_fn(d, stats.len(), |row, col| stats[col].mean[row]);
    let solved = match regularized.llt(Side::Lower) {
        Ok(llt) => {
            let diag: Vec<f64> = (0..d).map(|i| llt.L()[(i, i)]).collect();
            let max = diag.iter().copied().fold(f64::MIN, f64::max);
            let min = diag.iter().copied().fold(f64::MAX, f64::min);
            let cond = (max / min).powi(2);
            if !cond.is_finite() || cond > CONDITION_LIMIT {
                log::warn!(
                    "pooled covariance is ill-conditioned (estimate {cond:.3e}); \
                     scores may be unstable"
                );
            }
            llt.solve(&mu)
        }
        Err(_) => {
            log::warn!(
                "pooled covariance is singular even after regularization; \
                 falling back to a pseudo-inverse solve"
            );
            pseudo_solve(regularized.as_ref(), mu.as_ref())
        }
    };

    let weights = Mat::from_fn(stats.len(), d, |m, row| solved[(row, m)]);
    let biases: Vec<f64> = stats
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let quad: f64 = (0..d).map(|row| s.mean[row] * solved[(row, m)]).sum();
            let prior = s.count as f64 / n_total as f64;
            -0.5 * quad + prior.ln()
        })
        .collect();

    Ok(LdaModel {
        labels: stats.iter().map(|s| s.label.clone()).collect(),
        counts: stats.iter().map(|s| s.count).collect(),
        means: stats.iter().map(|s| s.mean.clone()).collect(),
        pooled_cov: pooled,
        weights,
        biases,
        n_total,
        feature_dim: d,
    })
}

/// Least-squares solve through an eigendecomposition, dropping near-null
/// directions. Only reached when Cholesky fails outright.
fn pseudo_solve(a: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let eigen = match a.self_adjoint_eigen(Side::Lower) {
        Ok(e) => e,
        Err(_) => return Mat::zeros(a.nrows(), rhs.ncols()),
    };
    let d = a.nrows();
    let s = eigen.S();
    let max_abs = (0..d).map(|i| s[i].abs()).fold(0.0, f64::max);
    let tol = max_abs * d as f64 * f64::EPSILON;
    let ut_rhs = eigen.U().transpose() * rhs;
    let scaled = Mat::from_fn(d, rhs.ncols(), |r, c| {
        if s[r].abs() > tol {
            ut_rhs[(r, c)] / s[r]
        } else {
            0.0
        }
    });
    eigen.U() * scaled
}
