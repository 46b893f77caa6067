//! Empirical checks on fitted transforms and their features: correlation
//! structure, per-feature Gaussianity summaries, and eigen-spectrum reports.
//!
//! These are reporting tools, not gates. The transform's value rests on its
//! features being decorrelated and near-Gaussian per class; this module
//! measures both so the claims can be inspected on real data. Reports render
//! to CSV for external plotting.

use crate::pca::KernelBlock;
use crate::pipeline::{FeatureVector, TransformModel};
use faer::Mat;
use std::fmt::Write as _;
use thiserror::Error;

/// Bin count used by every histogram in this module.
pub const HISTOGRAM_BINS: usize = 64;
/// Moment statistics further than this many standard errors from the
/// Gaussian expectation fall outside the report's bands.
pub const BAND_WIDTH: f64 = 4.0;

/// Errors from building diagnostics reports.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("need at least 2 samples, got {n}")]
    TooFewSamples { n: usize },
    #[error("group `{group}` has {count} samples; need at least 8")]
    GroupTooSmall { group: String, count: usize },
    #[error("row {row} has {found} features, expected {expected}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("got {rows} feature rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("feature matrix is empty")]
    Empty,
}

/// Sample-by-feature matrix the reports operate on.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    data: Mat<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from per-sample feature rows.
    pub fn from_rows<S: AsRef<[f64]>>(rows: &[S]) -> Result<Self, DiagnosticsError> {
        if rows.is_empty() {
            return Err(DiagnosticsError::Empty);
        }
        let d = rows[0].as_ref().len();
        if d == 0 {
            return Err(DiagnosticsError::Empty);
        }
        for (idx, row) in rows.iter().enumerate() {
            if row.as_ref().len() != d {
                return Err(DiagnosticsError::RaggedRows {
                    row: idx,
                    expected: d,
                    found: row.as_ref().len(),
                });
            }
        }
        let data = Mat::from_fn(rows.len(), d, |r, c| rows[r].as_ref()[c]);
        Ok(Self { data })
    }

    /// Builds a matrix from full feature vectors (all channels concatenated).
    pub fn from_feature_vectors(features: &[FeatureVector]) -> Result<Self, DiagnosticsError> {
        let rows: Vec<&[f64]> = features.iter().map(|f| f.data()).collect();
        Self::from_rows(&rows)
    }

    /// Builds a matrix from one channel of each feature vector.
    pub fn from_feature_channel(
        features: &[FeatureVector],
        channel: usize,
    ) -> Result<Self, DiagnosticsError> {
        let rows: Vec<&[f64]> = features.iter().map(|f| f.channel(channel)).collect();
        Self::from_rows(&rows)
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn get(&self, sample: usize, feature: usize) -> f64 {
        self.data[(sample, feature)]
    }

    fn column(&self, feature: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&r| self.data[(r, feature)]).collect()
    }
}

/// Correlation coefficients between features, with degenerate
/// (zero-variance) columns flagged rather than failing the whole report.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// D x D coefficient matrix; entries touching a degenerate column are NaN.
    pub matrix: Mat<f64>,
    /// Columns whose values are all identical; their correlations are undefined.
    pub degenerate_columns: Vec<usize>,
    /// Largest |entry| off the diagonal, degenerate columns excluded.
    pub max_abs_off_diagonal: f64,
}

/// Correlation coefficient matrix of the features: the biased sample
/// covariance normalized by the per-column standard deviations.
///
/// Columns whose values are all identical have no defined correlation; they
/// are listed in `degenerate_columns`, their matrix entries are NaN, and
/// they are excluded from `max_abs_off_diagonal`. Finite entries are clamped
/// to [-1, 1] to absorb roundoff.
pub fn correlation_matrix(fm: &FeatureMatrix) -> Result<CorrelationReport, DiagnosticsError> {
    let n = fm.n_samples();
    if n < 2 {
        return Err(DiagnosticsError::TooFewSamples { n });
    }
    let d = fm.feature_dim();
    let mut means = vec![0.0; d];
    for (c, mean) in means.iter_mut().enumerate() {
        for r in 0..n {
            *mean += fm.data[(r, c)];
        }
        *mean /= n as f64;
    }
    let degenerate: Vec<usize> = (0..d)
        .filter(|&c| {
            let first = fm.data[(0, c)];
            (1..n).all(|r| fm.data[(r, c)] == first)
        })
        .collect();
    let xc = Mat::from_fn(n, d, |r, c| fm.data[(r, c)] - means[c]);
    let cov = xc.transpose() * &xc;
    let stds: Vec<f64> = (0..d).map(|c| (cov[(c, c)] / n as f64).sqrt()).collect();
    let is_degenerate = |c: usize| degenerate.binary_search(&c).is_ok();
    let mut max_off = 0.0f64;
    let matrix = Mat::from_fn(d, d, |r, c| {
        if is_degenerate(r) || is_degenerate(c) {
            return f64::NAN;
        }
        let value = (cov[(r, c)] / n as f64 / (stds[r] * stds[c])).clamp(-1.0, 1.0);
        if r != c {
            max_off = max_off.max(value.abs());
        }
        value
    });
    Ok(CorrelationReport {
        matrix,
        degenerate_columns: degenerate,
        max_abs_off_diagonal: max_off,
    })
}

impl CorrelationReport {
    /// One CSV line per matrix entry: `row,col,correlation`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,correlation\n");
        for r in 0..self.matrix.nrows() {
            for c in 0..self.matrix.ncols() {
                let _ = writeln!(out, "{r},{c},{}", self.matrix[(r, c)]);
            }
        }
        out
    }
}

/// Fixed-width histogram over a value range.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<u32>,
}

impl Histogram {
    fn build(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0u32; HISTOGRAM_BINS];
        let width = max - min;
        for &v in values {
            let bin = if width == 0.0 {
                0
            } else {
                (((v - min) / width) * HISTOGRAM_BINS as f64).floor() as usize
            };
            counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
        Self { min, max, counts }
    }

    /// One CSV line per bin: `bin,low,high,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,low,high,count\n");
        let width = (self.max - self.min) / HISTOGRAM_BINS as f64;
        for (bin, &count) in self.counts.iter().enumerate() {
            let low = self.min + bin as f64 * width;
            let high = self.min + (bin + 1) as f64 * width;
            let _ = writeln!(out, "{bin},{low},{high},{count}");
        }
        out
    }
}

/// Moment summary of one feature within one group of samples.
#[derive(Debug, Clone)]
pub struct FeatureGaussianity {
    /// Class label for per-class reports, `None` for the global report.
    pub group: Option<String>,
    pub feature: usize,
    pub count: usize,
    /// Gaussian-overlay fit parameters: sample mean and (biased) std dev.
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub skewness_se: f64,
    pub kurtosis_se: f64,
    /// Both moment statistics within `BAND_WIDTH` standard errors of zero.
    pub within_bands: bool,
    /// Constant column: moments undefined, no Gaussian fit emitted.
    pub degenerate: bool,
    pub histogram: Histogram,
}

/// Gaussianity summary of every feature over all samples.
pub fn gaussianity_report(fm: &FeatureMatrix) -> Result<Vec<FeatureGaussianity>, DiagnosticsError> {
    let rows: Vec<usize> = (0..fm.n_samples()).collect();
    group_report(fm, None, &rows)
}

/// Gaussianity summary of every feature within every class. Classes are
/// reported in first-appearance order; each needs at least 8 samples.
pub fn gaussianity_report_by_class<L: AsRef<str>>(
    fm: &FeatureMatrix,
    labels: &[L],
) -> Result<Vec<FeatureGaussianity>, DiagnosticsError> {
    if labels.len() != fm.n_samples() {
        return Err(DiagnosticsError::LengthMismatch {
            rows: fm.n_samples(),
            labels: labels.len(),
        });
    }
    let mut order: Vec<&str> = Vec::new();
    for label in labels {
        let name = label.as_ref();
        if !order.contains(&name) {
            order.push(name);
        }
    }
    let mut report = Vec::new();
    for group in order {
        let rows: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_ref() == group)
            .map(|(idx, _)| idx)
            .collect();
        report.extend(group_report(fm, Some(group.to_string()), &rows)?);
    }
    Ok(report)
}

fn group_report(
    fm: &FeatureMatrix,
    group: Option<String>,
    rows: &[usize],
) -> Result<Vec<FeatureGaussianity>, DiagnosticsError> {
    let n = rows.len();
    if n < 8 {
        return Err(DiagnosticsError::GroupTooSmall {
            group: group.unwrap_or_else(|| "all".into()),
            count: n,
        });
    }
    let nf = n as f64;
    // Standard errors of sample skewness and excess kurtosis under a
    // Gaussian population.
    let skew_se = (6.0 * (nf - 2.0) / ((nf + 1.0) * (nf + 3.0))).sqrt();
    let kurt_se = (24.0 * nf * (nf - 2.0) * (nf - 3.0)
        / ((nf + 1.0) * (nf + 1.0) * (nf + 3.0) * (nf + 5.0)))
        .sqrt();
    let mut out = Vec::with_capacity(fm.feature_dim());
    for feature in 0..fm.feature_dim() {
        let values = fm.column(feature, rows);
        let mean = values.iter().sum::<f64>() / nf;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let constant = values.iter().all(|&v| v == values[0]);
        if constant || m2 == 0.0 {
            out.push(FeatureGaussianity {
                group: group.clone(),
                feature,
                count: n,
                mean,
                std_dev: 0.0,
                skewness: f64::NAN,
                excess_kurtosis: f64::NAN,
                skewness_se: skew_se,
                kurtosis_se: kurt_se,
                within_bands: false,
                degenerate: true,
                histogram: Histogram::build(&values),
            });
            continue;
        }
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
        let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
        let skewness = m3 / m2.powf(1.5);
        let excess_kurtosis = m4 / (m2 * m2) - 3.0;
        out.push(FeatureGaussianity {
            group: group.clone(),
            feature,
            count: n,
            mean,
            std_dev: m2.sqrt(),
            skewness,
            excess_kurtosis,
            skewness_se: skew_se,
            kurtosis_se: kurt_se,
            within_bands: skewness.abs() <= BAND_WIDTH * skew_se
                && excess_kurtosis.abs() <= BAND_WIDTH * kurt_se,
            degenerate: false,
            histogram: Histogram::build(&values),
        });
    }
    Ok(out)
}

/// One CSV line per (group, feature) moment summary, histograms omitted.
pub fn gaussianity_csv(report: &[FeatureGaussianity]) -> String {
    let mut out = String::from(
        "group,feature,count,mean,std_dev,skewness,excess_kurtosis,\
         skewness_se,kurtosis_se,within_bands,degenerate\n",
    );
    for item in report {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            item.group.as_deref().unwrap_or("all"),
            item.feature,
            item.count,
            item.mean,
            item.std_dev,
            item.skewness,
            item.excess_kurtosis,
            item.skewness_se,
            item.kurtosis_se,
            item.within_bands,
            item.degenerate,
        );
    }
    out
}

/// Retained spectrum of one kernel block.
#[derive(Debug, Clone)]
pub struct BlockSpectrum {
    pub channel: usize,
    pub stage: usize,
    pub row: usize,
    pub col: usize,
    /// Retained eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Sum of the retained eigenvalues.
    pub retained_variance: f64,
    /// Retained share of the block's total variance. `None` when the block
    /// no longer carries its fit-time total (models loaded from file) or the
    /// total is zero.
    pub variance_fraction: Option<f64>,
}

/// Per-block eigenvalue report over a whole fitted model.
#[derive(Debug, Clone)]
pub struct EigenspectrumReport {
    pub blocks: Vec<BlockSpectrum>,
}

/// Collects every block's retained eigenvalues and variance fractions.
pub fn eigenspectrum_report(model: &TransformModel) -> EigenspectrumReport {
    let mut blocks = Vec::new();
    for channel in 0..model.spec().channels {
        for stage in 0..model.spec().stages.len() {
            let (_, cols) = model.stage_grid_dims(stage);
            for (idx, kernel) in model.stage_kernels(channel, stage).iter().enumerate() {
                blocks.push(block_spectrum(kernel, channel, stage, idx / cols, idx % cols));
            }
        }
    }
    EigenspectrumReport { blocks }
}

fn block_spectrum(
    kernel: &KernelBlock,
    channel: usize,
    stage: usize,
    row: usize,
    col: usize,
) -> BlockSpectrum {
    let retained_variance: f64 = kernel.eigenvalues().iter().sum();
    let variance_fraction = kernel.total_variance().and_then(|total| {
        if total > 0.0 {
            Some((retained_variance / total).min(1.0))
        } else {
            None
        }
    });
    BlockSpectrum {
        channel,
        stage,
        row,
        col,
        eigenvalues: kernel.eigenvalues().to_vec(),
        retained_variance,
        variance_fraction,
    }
}

impl EigenspectrumReport {
    /// One CSV line per retained eigenvalue:
    /// `channel,stage,row,col,index,eigenvalue`.
    pub fn values_csv(&self) -> String {
        let mut out = String::from("channel,stage,row,col,index,eigenvalue\n");
        for b in &self.blocks {
            for (index, ev) in b.eigenvalues.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{index},{ev}",
                    b.channel, b.stage, b.row, b.col
                );
            }
        }
        out
    }

    /// One CSV line per block:
    /// `channel,stage,row,col,retained_count,retained_variance,variance_fraction`.
    /// The fraction field is empty when unknown.
    pub fn summary_csv(&self) -> String {
        let mut out =
            String::from("channel,stage,row,col,retained_count,retained_variance,variance_fraction\n");
        for b in &self.blocks {
            let fraction = b
                .variance_fraction
                .map(|f| f.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{fraction}",
                b.channel,
                b.stage,
                b.row,
                b.col,
                b.eigenvalues.len(),
                b.retained_variance,
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cuboid::Cuboid;
    use crate::pca;
    use crate::pipeline::{self, PipelineSpec, StageSpec};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    #[test]
    fn identical_columns_are_perfectly_correlated() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let v = (i as f64).sin() * 10.0;
                vec![v, v, -v]
            })
            .collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let report = correlation_matrix(&fm).unwrap();
        assert!((report.matrix[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((report.matrix[(0, 2)] + 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((report.matrix[(i, i)] - 1.0).abs() < 1e-12);
            for j in 0..3 {
                assert_eq!(report.matrix[(i, j)], report.matrix[(j, i)]);
                assert!(report.matrix[(i, j)].abs() <= 1.0);
            }
        }
        assert!(report.degenerate_columns.is_empty());
    }

    #[test]
    fn independent_columns_decorrelate_at_sampling_noise_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let report = correlation_matrix(&fm).unwrap();
        assert!(
            report.max_abs_off_diagonal < 0.05,
            "independent columns correlate at {}",
            report.max_abs_off_diagonal
        );
    }

    #[test]
    fn constant_columns_are_flagged_not_fatal() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64, 7.5, (i as f64).cos()])
            .collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let report = correlation_matrix(&fm).unwrap();
        assert_eq!(report.degenerate_columns, vec![1]);
        assert!(report.matrix[(0, 1)].is_nan());
        assert!(report.matrix[(1, 1)].is_nan());
        assert!(report.matrix[(0, 2)].is_finite());
        assert!(report.max_abs_off_diagonal.is_finite());
    }

    #[test]
    fn correlation_needs_two_samples() {
        let fm = FeatureMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            correlation_matrix(&fm),
            Err(DiagnosticsError::TooFewSamples { n: 1 })
        ));
    }

    #[test]
    fn feature_matrix_rejects_ragged_rows() {
        let rows = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            FeatureMatrix::from_rows(&rows),
            Err(DiagnosticsError::RaggedRows { row: 1, expected: 2, found: 1 })
        ));
    }

    #[test]
    fn training_features_decorrelate_within_each_channel() {
        let spec = PipelineSpec {
            input_dims: (8, 8),
            channels: 1,
            stages: vec![StageSpec::new(4, 4, 8), StageSpec::new(2, 2, 12)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let images: Vec<Vec<Cuboid>> = (0..100)
            .map(|_| {
                let data = (0..64).map(|_| rng.random_range(0.0..255.0)).collect();
                vec![Cuboid::new(8, 8, 1, data).unwrap()]
            })
            .collect();
        let model = pipeline::fit(&images, &spec).unwrap();
        let features = pipeline::forward_batch(&model, &images).unwrap();
        let fm = FeatureMatrix::from_feature_channel(&features, 0).unwrap();
        let report = correlation_matrix(&fm).unwrap();
        assert!(
            report.max_abs_off_diagonal < 1e-5,
            "training features correlate at {}",
            report.max_abs_off_diagonal
        );
    }

    #[test]
    fn gaussian_column_sits_within_moment_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..2000).map(|_| vec![gaussian(&mut rng)]).collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let report = gaussianity_report(&fm).unwrap();
        assert_eq!(report.len(), 1);
        let item = &report[0];
        assert!(item.within_bands, "skew {} kurt {}", item.skewness, item.excess_kurtosis);
        assert!(!item.degenerate);
        assert_eq!(item.histogram.counts.iter().sum::<u32>(), 2000);
        assert_eq!(item.histogram.counts.len(), HISTOGRAM_BINS);
    }

    #[test]
    fn moment_bands_are_calibrated_across_seeds() {
        let mut passes = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..500).map(|_| vec![gaussian(&mut rng)]).collect();
            let fm = FeatureMatrix::from_rows(&rows).unwrap();
            if gaussianity_report(&fm).unwrap()[0].within_bands {
                passes += 1;
            }
        }
        assert!(passes >= 49, "only {passes}/50 Gaussian samples passed the bands");
    }

    #[test]
    fn uniform_column_reports_platykurtic_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..5000).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let item = &gaussianity_report(&fm).unwrap()[0];
        assert!(
            (item.excess_kurtosis + 1.2).abs() < 0.1,
            "uniform kurtosis {}",
            item.excess_kurtosis
        );
        assert!(item.skewness.abs() < 0.1);
        assert!(!item.within_bands, "a uniform column must fail the Gaussian bands");
    }

    #[test]
    fn constant_column_is_degenerate_without_fit() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![3.0, i as f64]).collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let report = gaussianity_report(&fm).unwrap();
        assert!(report[0].degenerate);
        assert!(report[0].skewness.is_nan());
        assert!(!report[0].within_bands);
        assert_eq!(report[0].std_dev, 0.0);
        assert!(!report[1].degenerate);
    }

    #[test]
    fn per_class_report_groups_in_first_appearance_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..30 {
            let class = if i % 2 == 0 { "even" } else { "odd" };
            let shift = if i % 2 == 0 { 0.0 } else { 100.0 };
            rows.push(vec![shift + gaussian(&mut rng)]);
            labels.push(class);
        }
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let report = gaussianity_report_by_class(&fm, &labels).unwrap();
        assert_eq!(report.len(), 2);
        assert_eq!(report[0].group.as_deref(), Some("even"));
        assert_eq!(report[1].group.as_deref(), Some("odd"));
        assert_eq!(report[0].count, 15);
        assert!((report[0].mean - 0.0).abs() < 2.0);
        assert!((report[1].mean - 100.0).abs() < 2.0);
    }

    #[test]
    fn small_groups_are_rejected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<&str> = (0..10).map(|i| if i < 7 { "small" } else { "tiny" }).collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        assert!(matches!(
            gaussianity_report_by_class(&fm, &labels),
            Err(DiagnosticsError::GroupTooSmall { count: 7, .. })
        ));
        let fm7 = FeatureMatrix::from_rows(&rows[..7]).unwrap();
        assert!(matches!(
            gaussianity_report(&fm7),
            Err(DiagnosticsError::GroupTooSmall { count: 7, .. })
        ));
    }

    #[test]
    fn histogram_covers_range_and_counts_every_sample() {
        let values: Vec<f64> = (0..128).map(|i| i as f64).collect();
        let h = Histogram::build(&values);
        assert_eq!(h.min, 0.0);
        assert_eq!(h.max, 127.0);
        assert_eq!(h.counts.iter().sum::<u32>(), 128);
        assert!(h.counts.iter().all(|&c| c == 2));
    }

    #[test]
    fn worked_example_block_retains_eight_tenths_of_variance() {
        let samples = [[3.0, 1.0], [1.0, 3.0], [-3.0, -1.0], [-1.0, -3.0]];
        let kernel = pca::fit_block(&samples, 1).unwrap();
        let spectrum = block_spectrum(&kernel, 0, 0, 0, 0);
        let fraction = spectrum.variance_fraction.unwrap();
        assert!((fraction - 0.8).abs() < 1e-10, "fraction {fraction}");
    }

    #[test]
    fn model_spectrum_reports_every_block_with_valid_fractions() {
        let spec = PipelineSpec {
            input_dims: (8, 8),
            channels: 1,
            stages: vec![StageSpec::new(2, 2, 4), StageSpec::new(4, 4, 30)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let images: Vec<Vec<Cuboid>> = (0..60)
            .map(|_| {
                let data = (0..64).map(|_| rng.random_range(0.0..255.0)).collect();
                vec![Cuboid::new(8, 8, 1, data).unwrap()]
            })
            .collect();
        let model = pipeline::fit(&images, &spec).unwrap();
        let report = eigenspectrum_report(&model);
        assert_eq!(report.blocks.len(), 16 + 1);
        for b in &report.blocks {
            let f = b.variance_fraction.expect("fresh fits carry totals");
            assert!(f > 0.0 && f <= 1.0, "fraction {f}");
            for w in b.eigenvalues.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
        // The first stage keeps all 4 components of 2x2x1 blocks, so its
        // blocks retain everything.
        for b in report.blocks.iter().filter(|b| b.stage == 0) {
            assert!((b.variance_fraction.unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_outputs_have_expected_shape() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let fm = FeatureMatrix::from_rows(&rows).unwrap();
        let corr = correlation_matrix(&fm).unwrap();
        let csv = corr.to_csv();
        assert_eq!(csv.lines().count(), 1 + 4);
        assert!(csv.starts_with("row,col,correlation"));

        let gauss = gaussianity_report(&fm).unwrap();
        let csv = gaussianity_csv(&gauss);
        assert_eq!(csv.lines().count(), 1 + 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("all,0,10,"));

        let h = Histogram::build(&[0.0, 1.0]);
        assert_eq!(h.to_csv().lines().count(), 1 + HISTOGRAM_BINS);
    }
}
