//! Randomized invariant checks over the public API: transform bijectivity
//! at full rank, kernel orthonormality, linearity, text and binary
//! serialization roundtrips, histogram-equalization algebra, and
//! classifier ordering guarantees.

use proptest::prelude::*;

use mspca::cuboid::Cuboid;
use mspca::io::{load_model, save_model, ModelBundle};
use mspca::lda::fit_lda;
use mspca::pipeline::{
    fit, forward, forward_batch, inverse, validate_spec, FeatureVector, PipelineSpec, StageSpec,
};
use mspca::recon::{
    brightness_gap, compress, compression_ratio, equalize_histogram, percent_deviation,
};

/// A geometrically valid spec built from per-stage factors, with each
/// stage's retained count within its block size. `full_rank` forces
/// retained = block size everywhere.
fn valid_spec(full_rank: bool) -> impl Strategy<Value = PipelineSpec> {
    let stage = (1usize..=3, 1usize..=3, 1usize..=64);
    (prop::collection::vec(stage, 1..=3), prop::sample::select(vec![1usize, 3]))
        .prop_map(move |(raw, channels)| {
            let mut stages = Vec::new();
            let mut depth = 1usize;
            for (l_i, l_j, pick) in raw {
                let v = l_i * l_j * depth;
                let retained = if full_rank { v } else { (pick % v) + 1 };
                stages.push(StageSpec::new(l_i, l_j, retained));
                depth = retained;
            }
            let input_dims = (
                stages.iter().map(|s| s.l_i).product(),
                stages.iter().map(|s| s.l_j).product(),
            );
            PipelineSpec { input_dims, channels, stages }
        })
}

fn images_for(spec: &PipelineSpec, n: usize) -> impl Strategy<Value = Vec<Vec<Cuboid>>> {
    let (i, j) = spec.input_dims;
    let channels = spec.channels;
    prop::collection::vec(
        prop::collection::vec(prop::collection::vec(0.0..255.0f64, i * j), channels),
        n,
    )
    .prop_map(move |sets| {
        sets.into_iter()
            .map(|planes| {
                planes
                    .into_iter()
                    .map(|data| Cuboid::new(i, j, 1, data).unwrap())
                    .collect()
            })
            .collect()
    })
}

fn plane(i: usize, j: usize) -> impl Strategy<Value = Cuboid> {
    prop::collection::vec(0.0..255.0f64, i * j)
        .prop_map(move |data| Cuboid::new(i, j, 1, data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn full_rank_pipelines_invert_exactly(
        (spec, images) in valid_spec(true).prop_flat_map(|spec| {
            let imgs = images_for(&spec, 5);
            (Just(spec), imgs)
        })
    ) {
        prop_assert!(validate_spec(&spec).is_ok());
        let model = fit(&images, &spec).unwrap();
        for image in &images {
            let f = forward(&model, image).unwrap();
            let recon = inverse(&model, &f).unwrap();
            for (orig, rec) in image.iter().zip(&recon) {
                for (a, b) in orig.data().iter().zip(rec.data()) {
                    prop_assert!((a - b).abs() < 1e-8, "roundtrip error {}", (a - b).abs());
                }
            }
        }
    }

    #[test]
    fn fitted_kernels_are_orthonormal(
        (spec, images) in valid_spec(false).prop_flat_map(|spec| {
            let imgs = images_for(&spec, 6);
            (Just(spec), imgs)
        })
    ) {
        let model = fit(&images, &spec).unwrap();
        for channel in 0..spec.channels {
            for stage in 0..spec.stages.len() {
                for kernel in model.stage_kernels(channel, stage) {
                    let b = kernel.basis();
                    let gram = b.transpose() * b;
                    for r in 0..gram.nrows() {
                        for c in 0..gram.ncols() {
                            let target = if r == c { 1.0 } else { 0.0 };
                            prop_assert!(
                                (gram[(r, c)] - target).abs() <= 1e-10,
                                "gram defect {} at ({r}, {c})",
                                (gram[(r, c)] - target).abs()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn forward_is_linear(
        (spec, images) in valid_spec(false).prop_flat_map(|spec| {
            let imgs = images_for(&spec, 6);
            (Just(spec), imgs)
        }),
        alpha in -2.0..2.0f64,
        beta in -2.0..2.0f64,
    ) {
        let model = fit(&images, &spec).unwrap();
        let (i, j) = spec.input_dims;
        let combo: Vec<Cuboid> = (0..spec.channels)
            .map(|c| {
                let data: Vec<f64> = images[0][c]
                    .data()
                    .iter()
                    .zip(images[1][c].data())
                    .map(|(x, y)| alpha * x + beta * y)
                    .collect();
                Cuboid::new(i, j, 1, data).unwrap()
            })
            .collect();
        let fx = forward(&model, &images[0]).unwrap();
        let fy = forward(&model, &images[1]).unwrap();
        let fc = forward(&model, &combo).unwrap();
        let scale: f64 = fx
            .data()
            .iter()
            .chain(fy.data())
            .fold(1.0f64, |a, &v| a.max(v.abs()));
        for ((x, y), c) in fx.data().iter().zip(fy.data()).zip(fc.data()) {
            prop_assert!(
                (alpha * x + beta * y - c).abs() <= 1e-9 * scale,
                "linearity breaks: {} vs {}",
                alpha * x + beta * y,
                c
            );
        }
    }

    #[test]
    fn spec_text_roundtrips(
        dims in (1usize..100, 1usize..100),
        channels in prop::sample::select(vec![1usize, 3]),
        stages in prop::collection::vec((1usize..10, 1usize..10, 1usize..200), 1..5),
    ) {
        let spec = PipelineSpec {
            input_dims: dims,
            channels,
            stages: stages
                .into_iter()
                .map(|(l_i, l_j, k)| StageSpec::new(l_i, l_j, k))
                .collect(),
        };
        let parsed = PipelineSpec::parse(&spec.to_spec_string()).unwrap();
        prop_assert_eq!(parsed, spec);
    }

    #[test]
    fn ratio_times_retained_stays_within_two_ulps(
        (spec, _) in valid_spec(false).prop_flat_map(|spec| (Just(spec), Just(()))),
    ) {
        let pixels = (spec.input_dims.0 * spec.input_dims.1) as f64;
        let product = compression_ratio(&spec) * spec.final_retained() as f64;
        prop_assert!((product - pixels).abs() <= 2.0 * f64::EPSILON * pixels);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn model_files_roundtrip_bit_identically(
        (spec, images) in valid_spec(false).prop_flat_map(|spec| {
            let imgs = images_for(&spec, 8);
            (Just(spec), imgs)
        })
    ) {
        let transform = fit(&images, &spec).unwrap();
        let features = forward_batch(&transform, &images).unwrap();
        let rows: Vec<&[f64]> = features.iter().map(|f| f.data()).collect();
        let labels: Vec<String> = (0..rows.len()).map(|s| format!("c{}", s % 2)).collect();
        let classifier = fit_lda(&rows, &labels).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("m.iccm");
        let path_b = dir.path().join("m2.iccm");
        let bundle = ModelBundle { transform, classifier };
        save_model(&bundle, &path_a).unwrap();
        let loaded = load_model(&path_a).unwrap();
        save_model(&loaded, &path_b).unwrap();
        prop_assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());

        let before = forward(&bundle.transform, &images[0]).unwrap();
        let after = forward(&loaded.transform, &images[0]).unwrap();
        for (x, y) in before.data().iter().zip(after.data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        let score_before = bundle.classifier.score(before.data()).unwrap();
        let score_after = loaded.classifier.score(after.data()).unwrap();
        for (x, y) in score_before.iter().zip(&score_after) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn compressed_records_roundtrip_bit_identically(
        (spec, images) in valid_spec(false).prop_flat_map(|spec| {
            let imgs = images_for(&spec, 5);
            (Just(spec), imgs)
        })
    ) {
        let transform = fit(&images, &spec).unwrap();
        let record = compress(&transform, &images[0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.iccf");
        mspca::io::save_features(&record, &path).unwrap();
        let loaded = mspca::io::load_features(&path).unwrap();
        prop_assert_eq!(loaded.features().channels(), record.features().channels());
        for (x, y) in record.features().data().iter().zip(loaded.features().data()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in record.brightness_gaps().iter().zip(loaded.brightness_gaps()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equalization_is_idempotent_and_order_preserving(img in plane(6, 7)) {
        let once = equalize_histogram(&img);
        let twice = equalize_histogram(&once);
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        for (x, ex) in img.data().iter().zip(once.data()) {
            prop_assert!((0.0..=255.0).contains(ex));
            for (y, ey) in img.data().iter().zip(once.data()) {
                if x < y {
                    prop_assert!(ex <= ey, "order violated: {x} -> {ex}, {y} -> {ey}");
                }
            }
        }
    }

    #[test]
    fn brightness_gap_centers_the_residual(a in plane(5, 4), b in plane(5, 4)) {
        let gap = brightness_gap(&a, &b).unwrap();
        let mean_residual: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| x - (y + gap))
            .sum::<f64>()
            / a.data().len() as f64;
        prop_assert!(mean_residual.abs() < 1e-9);
    }

    #[test]
    fn percent_deviation_is_a_symmetric_premetric(a in plane(4, 4), b in plane(4, 4)) {
        let self_dev = percent_deviation(&a, &a).unwrap();
        prop_assert_eq!(self_dev, 0.0);
        let ab = percent_deviation(&a, &b).unwrap();
        let ba = percent_deviation(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
    }

    #[test]
    fn horizontal_flip_is_an_involution(img in plane(5, 6)) {
        let labeled = mspca::io::LabeledImage::new("x".into(), vec![img.clone()]).unwrap();
        let back = mspca::io::flip_horizontal(&mspca::io::flip_horizontal(&labeled));
        for (a, b) in img.data().iter().zip(back.channels()[0].data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn feature_vector_channel_views_partition_the_data(
        parts in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 4), 1..4),
    ) {
        let fv = FeatureVector::from_channels(parts.clone());
        prop_assert_eq!(fv.channels(), parts.len());
        for (c, part) in parts.iter().enumerate() {
            prop_assert_eq!(fv.channel(c), part.as_slice());
        }
        let flat: Vec<f64> = parts.concat();
        prop_assert_eq!(fv.data(), flat.as_slice());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn top_k_lists_are_prefix_consistent_and_posteriors_normalize(
        d in 1usize..5,
        m in 2usize..5,
        seed_rows in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 40),
        x in prop::collection::vec(-3.0..3.0f64, 4),
    ) {
        let rows: Vec<Vec<f64>> = seed_rows
            .iter()
            .enumerate()
            .map(|(s, noise)| {
                let class = s % m;
                (0..d).map(|c| 3.0 * class as f64 + noise[c % 4] + c as f64).collect()
            })
            .collect();
        let labels: Vec<String> = (0..rows.len()).map(|s| format!("c{}", s % m)).collect();
        let model = fit_lda(&rows, &labels).unwrap();
        let query: Vec<f64> = (0..d).map(|c| x[c % 4]).collect();

        let posterior = model.posterior(&query).unwrap();
        let sum: f64 = posterior.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "posterior mass {sum}");
        prop_assert!(posterior.iter().all(|p| (0.0..=1.0).contains(p)));

        let full = model.top_k(&query, m).unwrap();
        for k in 1..m {
            let partial = model.top_k(&query, k).unwrap();
            for (a, b) in partial.iter().zip(&full) {
                prop_assert_eq!(&a.0, &b.0);
                prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
            }
        }
        for pair in full.windows(2) {
            prop_assert!(pair[0].1 >= pair[1].1, "scores not descending");
        }
    }
}
