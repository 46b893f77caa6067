//! Command-line front door for the multi-stage PCA toolkit: train a
//! transform + classifier bundle, evaluate it on a labeled manifest,
//! compress single images to coefficient files, reconstruct them back,
//! and inspect a fitted model.
//!
//! Machine-readable CSV goes to standard output (or `--out` files);
//! diagnostics and errors go to standard error. Each CSV table is preceded
//! by a `# report: <name>` line so multiple tables can be split apart.
//! Exit codes: 0 success, 1 invalid pipeline spec, 2 data or I/O error.
//!
//! ```bash
//! mspca train --manifest faces.csv --spec setting3.spec --out model.iccm
//! mspca eval --manifest holdout.csv --model model.iccm --top 1,3,5
//! mspca compress --image face.png --model model.iccm --out face.iccf
//! mspca reconstruct --features face.iccf --model model.iccm --out rec.png
//! mspca inspect --model model.iccm --features-from faces.csv
//! ```

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mspca::cuboid::Cuboid;
use mspca::diagnostics::{
    correlation_matrix, eigenspectrum_report, gaussianity_csv, gaussianity_report, FeatureMatrix,
};
use mspca::io::{
    augment_flips, load_dataset, load_features, load_image, load_manifest, load_model, save_features,
    save_image, save_model, LabeledImage, Manifest, ModelBundle,
};
use mspca::lda::fit_lda;
use mspca::pipeline::{fit, forward_batch, validate_spec, PipelineError, PipelineSpec};
use mspca::recon::{compress, compression_ratio, decompress, decompress_raw, percent_deviation};

const EXIT_SPEC_INVALID: u8 = 1;
const EXIT_DATA_ERROR: u8 = 2;

/// Rec. 709 luma weights, matching the grayscale conversion applied when a
/// color file is loaded for a single-channel model.
const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

#[derive(Parser)]
#[command(name = "mspca", version, about = "Invertible multi-stage PCA compression and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the transform and classifier on a labeled dataset and write the model file
    Train(TrainArgs),
    /// Classify every manifest entry with a trained model and report top-k accuracy
    Eval(EvalArgs),
    /// Transform one image into a coefficient file
    Compress(CompressArgs),
    /// Rebuild an image from a coefficient file
    Reconstruct(ReconstructArgs),
    /// Report the eigenvalue spectrum of a model, plus feature statistics for a dataset
    Inspect(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest CSV with a `path,label` header
    #[arg(long)]
    manifest: PathBuf,

    /// Stage-spec text file: `dims I J channels C` header, then one
    /// `l_i l_j retained` line per stage
    #[arg(long)]
    spec: PathBuf,

    /// Output model file
    #[arg(long)]
    out: PathBuf,

    /// Double the training set with horizontally mirrored copies
    #[arg(long)]
    augment: bool,

    /// Override the channel count from the spec file (1 grayscale, 3 RGB)
    #[arg(long, value_parser = parse_channels)]
    channels: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset manifest CSV with a `path,label` header
    #[arg(long)]
    manifest: PathBuf,

    /// Trained model file
    #[arg(long)]
    model: PathBuf,

    /// Candidate-list depths to score, comma separated
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = [1, 3, 5])]
    top: Vec<usize>,

    /// Also write per-image ranked candidates to this CSV file
    #[arg(long)]
    candidates: Option<PathBuf>,
}

#[derive(Args)]
struct CompressArgs {
    /// Image to compress
    #[arg(long)]
    image: PathBuf,

    /// Trained model file
    #[arg(long)]
    model: PathBuf,

    /// Output coefficient file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Coefficient file produced by `compress`
    #[arg(long)]
    features: PathBuf,

    /// Trained model file
    #[arg(long)]
    model: PathBuf,

    /// Output image file (`.png`, `.pgm`, or `.ppm`)
    #[arg(long)]
    out: PathBuf,

    /// Print the percent deviation of the reconstruction from this original
    /// image. The `percent_deviation` row measures the brightness-compensated
    /// reconstruction as stored; `percent_deviation_finalized` measures the
    /// written (histogram-equalized) image.
    #[arg(long, value_name = "ORIGINAL")]
    report_deviation: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Trained model file
    #[arg(long)]
    model: PathBuf,

    /// Manifest of images to extract features from for correlation and
    /// gaussianity reports
    #[arg(long, value_name = "MANIFEST")]
    features_from: Option<PathBuf>,
}

fn parse_channels(value: &str) -> Result<usize, String> {
    match value {
        "1" => Ok(1),
        "3" => Ok(3),
        _ => Err(format!("channel count must be 1 or 3, got `{value}`")),
    }
}

/// A command failure carrying the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn spec_invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_SPEC_INVALID, error: error.into() }
}

fn data_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_DATA_ERROR, error: error.into() }
}

/// Pipeline errors split by exit code: spec problems exit 1, everything
/// else is a data error.
fn pipeline_failure(error: PipelineError) -> Failure {
    match error {
        PipelineError::SpecInvalid(_) => spec_invalid(error),
        _ => data_error(error),
    }
}

fn recon_failure(error: mspca::recon::ReconError) -> Failure {
    match error {
        mspca::recon::ReconError::Pipeline(inner) => pipeline_failure(inner),
        _ => data_error(error),
    }
}

fn main() -> ExitCode {
    // Let a closed stdout pipe (`mspca inspect | head`) end the process
    // quietly instead of panicking.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Compress(args) => cmd_compress(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading spec file {}", args.spec.display()))
        .map_err(data_error)?;
    let mut spec = PipelineSpec::parse(&text).map_err(spec_invalid)?;
    if let Some(channels) = args.channels {
        spec.channels = channels;
    }
    validate_spec(&spec).map_err(|violations| {
        let mut message = String::from("invalid pipeline spec:");
        for v in &violations {
            message.push_str("\n  - ");
            message.push_str(&v.to_string());
        }
        spec_invalid(anyhow::anyhow!(message))
    })?;

    let manifest = read_manifest(&args.manifest)?;
    let mut images = load_labeled(&manifest, spec.input_dims, spec.channels)?;
    if args.augment {
        images = augment_flips(&images);
    }
    let n_train = images.len();
    let (labels, channel_sets): (Vec<String>, Vec<Vec<Cuboid>>) = images
        .into_iter()
        .map(|img| {
            let label = img.label().to_string();
            (label, img.into_channels())
        })
        .unzip();

    let transform = fit(&channel_sets, &spec).map_err(pipeline_failure)?;
    let features = forward_batch(&transform, &channel_sets).map_err(pipeline_failure)?;
    let rows: Vec<&[f64]> = features.iter().map(|f| f.data()).collect();
    let classifier = fit_lda(&rows, &labels).map_err(data_error)?;

    let feature_dim = transform.feature_len();
    let classes = classifier.class_count();
    let bundle = ModelBundle { transform, classifier };
    save_model(&bundle, &args.out)
        .with_context(|| format!("writing model to {}", args.out.display()))
        .map_err(data_error)?;
    log::info!("wrote model to {}", args.out.display());

    println!("# report: summary");
    println!("metric,value");
    println!("train_seconds,{:.3}", started.elapsed().as_secs_f64());
    println!("training_images,{n_train}");
    println!("feature_dim,{feature_dim}");
    println!("classes,{classes}");
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let bundle = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))
        .map_err(data_error)?;
    let spec = bundle.transform.spec().clone();
    let manifest = read_manifest(&args.manifest)?;
    let images = load_labeled(&manifest, spec.input_dims, spec.channels)?;
    if images.is_empty() {
        return Err(data_error(anyhow::anyhow!("manifest has no entries to evaluate")));
    }
    for k in &args.top {
        if *k == 0 {
            return Err(data_error(anyhow::anyhow!("--top ranks must be at least 1")));
        }
    }

    let (labels, channel_sets): (Vec<String>, Vec<Vec<Cuboid>>) = images
        .into_iter()
        .map(|img| {
            let label = img.label().to_string();
            (label, img.into_channels())
        })
        .unzip();
    let features = forward_batch(&bundle.transform, &channel_sets).map_err(pipeline_failure)?;

    // Candidate lists never exceed the class count; deeper requests saturate.
    let k_max = args
        .top
        .iter()
        .copied()
        .max()
        .unwrap_or(1)
        .min(bundle.classifier.class_count());
    let mut ranked_all = Vec::with_capacity(features.len());
    for f in &features {
        let ranked = bundle.classifier.top_k(f.data(), k_max).map_err(data_error)?;
        ranked_all.push(ranked);
    }

    let hits_within = |depth: usize| -> usize {
        ranked_all
            .iter()
            .zip(&labels)
            .filter(|(ranked, label)| {
                ranked.iter().take(depth).any(|(cand, _)| cand == *label)
            })
            .count()
    };
    let n = labels.len();
    let top1 = hits_within(1) as f64 / n as f64;

    if let Some(path) = &args.candidates {
        write_candidates(path, &manifest, &ranked_all)?;
    }

    println!("# report: summary");
    println!("metric,value");
    println!("test_seconds,{:.3}", started.elapsed().as_secs_f64());
    println!("images,{n}");
    println!("accuracy,{top1:.6}");
    println!("# report: top_k");
    println!("rank,accuracy");
    for &k in &args.top {
        let acc = hits_within(k.min(k_max)) as f64 / n as f64;
        println!("{k},{acc:.6}");
    }
    Ok(())
}

fn cmd_compress(args: CompressArgs) -> Result<(), Failure> {
    let bundle = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))
        .map_err(data_error)?;
    let spec = bundle.transform.spec();
    let planes = load_image(&args.image, spec.input_dims)
        .with_context(|| format!("loading image {}", args.image.display()))
        .map_err(data_error)?;
    let planes = coerce_planes(planes, spec.channels);

    let record = compress(&bundle.transform, &planes).map_err(recon_failure)?;
    save_features(&record, &args.out)
        .with_context(|| format!("writing coefficients to {}", args.out.display()))
        .map_err(data_error)?;
    log::info!("wrote coefficients to {}", args.out.display());

    println!("# report: summary");
    println!("metric,value");
    println!("compression_ratio,{:.2}:1", compression_ratio(spec));
    println!("coefficients_per_channel,{}", spec.final_retained());
    println!("channels,{}", spec.channels);
    for (c, gap) in record.brightness_gaps().iter().enumerate() {
        println!("brightness_gap_{c},{gap}");
    }
    Ok(())
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), Failure> {
    let bundle = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))
        .map_err(data_error)?;
    let record = load_features(&args.features)
        .with_context(|| format!("loading coefficients {}", args.features.display()))
        .map_err(data_error)?;

    let finalized = decompress(&bundle.transform, &record).map_err(recon_failure)?;
    save_image(&args.out, &finalized)
        .with_context(|| format!("writing image to {}", args.out.display()))
        .map_err(data_error)?;
    log::info!("wrote image to {}", args.out.display());

    if let Some(orig_path) = &args.report_deviation {
        let spec = bundle.transform.spec();
        let original = load_image(orig_path, spec.input_dims)
            .with_context(|| format!("loading original {}", orig_path.display()))
            .map_err(data_error)?;
        let original = coerce_planes(original, spec.channels);
        let raw = decompress_raw(&bundle.transform, &record).map_err(recon_failure)?;
        println!("# report: summary");
        println!("metric,value");
        println!("percent_deviation,{}", mean_deviation(&original, &raw)?);
        println!("percent_deviation_finalized,{}", mean_deviation(&original, &finalized)?);
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> Result<(), Failure> {
    let bundle = load_model(&args.model)
        .with_context(|| format!("loading model {}", args.model.display()))
        .map_err(data_error)?;
    let spectrum = eigenspectrum_report(&bundle.transform);
    println!("# report: eigenspectrum_summary");
    print!("{}", spectrum.summary_csv());
    println!("# report: eigenspectrum_values");
    print!("{}", spectrum.values_csv());

    let Some(manifest_path) = &args.features_from else {
        return Ok(());
    };
    let spec = bundle.transform.spec();
    let manifest = read_manifest(manifest_path)?;
    let images = load_labeled(&manifest, spec.input_dims, spec.channels)?;
    let channel_sets: Vec<Vec<Cuboid>> = images.into_iter().map(|img| img.into_channels()).collect();
    let features = forward_batch(&bundle.transform, &channel_sets).map_err(pipeline_failure)?;

    // Features decorrelate within a channel; cross-channel correlations are
    // not driven to zero, so the summary is computed per channel.
    let mut per_channel = Vec::with_capacity(spec.channels);
    let mut degenerate_total = 0usize;
    for c in 0..spec.channels {
        let fm = FeatureMatrix::from_feature_channel(&features, c).map_err(data_error)?;
        let report = correlation_matrix(&fm).map_err(data_error)?;
        degenerate_total += report.degenerate_columns.len();
        per_channel.push(report.max_abs_off_diagonal);
    }
    let overall = per_channel.iter().cloned().fold(0.0_f64, f64::max);
    println!("# report: correlation_summary");
    println!("metric,value");
    println!("max_abs_off_diagonal,{overall}");
    for (c, value) in per_channel.iter().enumerate() {
        println!("max_abs_off_diagonal_channel{c},{value}");
    }
    println!("degenerate_columns,{degenerate_total}");

    let fm = FeatureMatrix::from_feature_vectors(&features).map_err(data_error)?;
    let gauss = gaussianity_report(&fm).map_err(data_error)?;
    println!("# report: gaussianity");
    print!("{}", gaussianity_csv(&gauss));
    Ok(())
}

fn read_manifest(path: &Path) -> Result<Manifest, Failure> {
    load_manifest(path)
        .with_context(|| format!("reading manifest {}", path.display()))
        .map_err(data_error)
}

/// Loads, channel-coerces, and preprocesses every manifest entry.
fn load_labeled(
    manifest: &Manifest,
    dims: (usize, usize),
    channels: usize,
) -> Result<Vec<LabeledImage>, Failure> {
    let images = load_dataset(manifest, dims).map_err(data_error)?;
    Ok(images
        .into_iter()
        .map(|img| {
            let label = img.label().to_string();
            let planes = coerce_planes(img.into_channels(), channels);
            let img = LabeledImage::new(label, planes).expect("coerced planes stay valid");
            mspca::io::preprocess(&img)
        })
        .collect())
}

/// Adapts loaded planes to the model's channel count: grayscale is
/// replicated up to RGB, color is reduced with Rec. 709 luma weights.
fn coerce_planes(planes: Vec<Cuboid>, want: usize) -> Vec<Cuboid> {
    match (planes.len(), want) {
        (have, want) if have == want => planes,
        (1, 3) => vec![planes[0].clone(), planes[0].clone(), planes[0].clone()],
        (3, 1) => {
            let (i, j, _) = planes[0].dims();
            let data: Vec<f64> = (0..i * j)
                .map(|idx| {
                    planes
                        .iter()
                        .zip(LUMA_WEIGHTS)
                        .map(|(plane, w)| w * plane.data()[idx])
                        .sum()
                })
                .collect();
            vec![Cuboid::new(i, j, 1, data).expect("luma plane matches dims")]
        }
        (have, want) => unreachable!("no conversion from {have} to {want} channels"),
    }
}

/// Mean percent deviation across channel planes.
fn mean_deviation(original: &[Cuboid], recovered: &[Cuboid]) -> Result<f64, Failure> {
    let mut total = 0.0;
    for (orig, rec) in original.iter().zip(recovered) {
        total += percent_deviation(orig, rec).map_err(recon_failure)?;
    }
    Ok(total / original.len() as f64)
}

fn write_candidates(
    path: &Path,
    manifest: &Manifest,
    ranked_all: &[Vec<(String, f64)>],
) -> Result<(), Failure> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating candidates file {}", path.display()))
        .map_err(data_error)?;
    writer
        .write_record(["image", "rank", "label", "score"])
        .map_err(data_error)?;
    for (entry, ranked) in manifest.entries.iter().zip(ranked_all) {
        for (rank, (label, score)) in ranked.iter().enumerate() {
            writer
                .write_record([
                    entry.path.display().to_string(),
                    (rank + 1).to_string(),
                    label.clone(),
                    score.to_string(),
                ])
                .map_err(data_error)?;
        }
    }
    writer.flush().map_err(data_error)?;
    log::info!("wrote candidates to {}", path.display());
    Ok(())
}
