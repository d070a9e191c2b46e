#![allow(clippy::needless_range_loop)]

use asc_core::augment::{
    feature_augment, fit_spectrum_profiles, mixup_with_lambda, spec_augment, spectrum_correct,
    wave_augment, AugmentConfig, LabeledBatch, FEATURE_AUGMENTS, WAVE_AUGMENTS,
};
use asc_core::dsp::{
    apply_scale01, assemble_tensor, deltas, fit_scale01, mel_filterbank, stft, AudioClip,
    FeatureTensor, ScaleStats, SpectroConfig, StftParams,
};
use asc_core::eval::{evaluate, prediction_overlap, DatasetManifest, ManifestRow};
use asc_core::fusion::{argmax, average_ensemble, two_stage_fuse, ClassHierarchy, SCENE_CLASSES};
use asc_core::nn::{GraphBuilder, LayerSpec, Mode, Model, Tensor4};
use asc_core::quant::quantize_tensor;
use asc_core::rng::{seeded, Rng};
use asc_core::zoo::{builder, ArchConfig, ARCHITECTURES};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

fn uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn prob_vector(rng: &mut Rng, n: usize) -> Vec<f32> {
    let raw = uniform(rng, n, 0.0, 1.0);
    let s: f64 = raw.iter().sum::<f64>().max(1e-9);
    raw.iter().map(|v| (v / s) as f32).collect()
}

fn random_tensor(rng: &mut Rng, t: usize, f: usize, c: usize) -> FeatureTensor {
    let data = uniform(rng, t * f * c, 0.0, 1.0)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    FeatureTensor::new(Array3::from_shape_vec((t, f, c), data).unwrap()).unwrap()
}

fn random_map(rng: &mut Rng, t: usize, f: usize) -> Array2<f64> {
    Array2::from_shape_vec((t, f), uniform(rng, t * f, -5.0, 5.0)).unwrap()
}

fn random_clip(rng: &mut Rng, len: usize, channels: usize) -> AudioClip {
    let chans = (0..channels)
        .map(|_| {
            uniform(rng, len, -0.5, 0.5)
                .into_iter()
                .map(|v| v as f32)
                .collect()
        })
        .collect();
    AudioClip::new(chans, 16_000).unwrap()
}

// ---- features ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_count_law(len in 40usize..5000, hop_pow in 3u32..7) {
        let hop = 1 << hop_pow;
        let p = StftParams::new(64, hop);
        let x = vec![0.1; len];
        prop_assert_eq!(stft(&x, &p).unwrap().len(), len / hop + 1);
    }

    #[test]
    fn delta_shrinkage(t in 9usize..40, f in 1usize..12, channels in 1usize..3, seed: u64) {
        let mut rng = seeded(seed);
        let statics: Vec<_> = (0..channels).map(|_| random_map(&mut rng, t, f)).collect();
        let out = assemble_tensor(&statics).unwrap();
        prop_assert_eq!(out.dims(), (t - 8, f, 3 * channels));
    }

    #[test]
    fn deltas_of_constant_vanish(t in 5usize..30, f in 1usize..8, c in -10.0f64..10.0) {
        let d = deltas(&Array2::from_elem((t, f), c)).unwrap();
        prop_assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn deltas_are_linear(t in 5usize..30, f in 1usize..8, a in -3.0f64..3.0, b in -3.0f64..3.0, seed: u64) {
        let mut rng = seeded(seed);
        let x = random_map(&mut rng, t, f);
        let y = random_map(&mut rng, t, f);
        let lhs = deltas(&(&x * a + &y * b)).unwrap();
        let rhs = deltas(&x).unwrap() * a + deltas(&y).unwrap() * b;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() <= 1e-9, "{l} vs {r}");
        }
    }

    #[test]
    fn filterbank_covers_every_interior_bin(
        sr_idx in 0usize..4,
        fft_pow in 9u32..12,
        n_mels in 8usize..129,
    ) {
        let sr = [16_000u32, 22_050, 44_100, 48_000][sr_idx];
        let n_fft = 1usize << fft_pow;
        let cfg = SpectroConfig { n_fft, win_length: n_fft, hop: n_fft / 2, n_mels, ..Default::default() };
        // dense banks on short FFTs are a configuration error, not a gap
        let Ok(bank) = mel_filterbank(&cfg, sr) else { return Ok(()) };
        let fmax = cfg.fmax_for(sr);
        let w = bank.weights();
        for k in 0..bank.n_bins() {
            let hz = k as f64 * f64::from(sr) / n_fft as f64;
            if hz > cfg.fmin && hz < fmax {
                prop_assert!(w.column(k).sum() > 0.0, "bin {k} ({hz} Hz) uncovered");
            }
        }
    }

    #[test]
    fn scale01_is_stable_on_scaled_data(t in 1usize..10, f in 1usize..10, c in 1usize..4, seed: u64) {
        let mut rng = seeded(seed);
        let fit: Vec<_> = (0..3).map(|_| random_tensor(&mut rng, t, f, c)).collect();
        let stats = fit_scale01(&fit).unwrap();
        let probe = random_tensor(&mut rng, t, f, c).into_inner() * 3.0 - 1.0;
        let probe = FeatureTensor::new(probe).unwrap();
        let once = apply_scale01(&probe, &stats).unwrap();
        prop_assert!(once.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        // already in range: a unit-range pass is the identity
        let unit = ScaleStats { min: vec![0.0; c], max: vec![1.0; c] };
        prop_assert_eq!(apply_scale01(&once, &unit).unwrap(), once.clone());
        // clamping into the fitted range first changes nothing
        let mut clamped = probe.into_inner();
        for (ch, mut lane) in clamped.axis_iter_mut(ndarray::Axis(2)).enumerate() {
            lane.mapv_inplace(|v| v.clamp(stats.min[ch], stats.max[ch]));
        }
        let again = apply_scale01(&FeatureTensor::new(clamped).unwrap(), &stats).unwrap();
        prop_assert_eq!(again, once);
    }
}

// ---- augmentation ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wave_augments_keep_shape_and_are_deterministic(
        len in 2000usize..6000,
        channels in 1usize..3,
        seed: u64,
    ) {
        let mut rng = seeded(seed);
        let clip = random_clip(&mut rng, len, channels);
        let partner = random_clip(&mut rng, len, channels);
        let other = random_clip(&mut rng, len, channels);
        let profiles =
            fit_spectrum_profiles([("a", &clip), ("b", &other)], "a", 256).unwrap();
        let cfg = AugmentConfig { rt60_range: (0.05, 0.1), ..Default::default() };
        for name in WAVE_AUGMENTS {
            let aug = wave_augment(name, &cfg, Some(&profiles)).unwrap();
            let p = aug.needs_partner().then_some(&partner);
            let a = aug.apply(&clip, p, &mut seeded(seed ^ 1)).unwrap();
            let b = aug.apply(&clip, p, &mut seeded(seed ^ 1)).unwrap();
            prop_assert_eq!(a.len(), clip.len(), "{} changed length", name);
            prop_assert_eq!(a.n_channels(), clip.n_channels());
            prop_assert_eq!(a.sample_rate(), clip.sample_rate());
            prop_assert_eq!(a, b, "{} is not deterministic", name);
        }
    }

    #[test]
    fn feature_augments_keep_shape_and_are_deterministic(
        t in 20usize..40,
        crop in 10usize..20,
        n in 2usize..5,
        seed: u64,
    ) {
        let mut rng = seeded(seed);
        let tensors: Vec<_> = (0..n).map(|_| random_tensor(&mut rng, t, 16, 6)).collect();
        let labels: Vec<_> = (0..n).map(|_| prob_vector(&mut rng, 3)).collect();
        let cfg = AugmentConfig { crop_len: crop, ..Default::default() };
        for name in FEATURE_AUGMENTS {
            let aug = feature_augment(name, &cfg).unwrap();
            let run = || {
                let mut b = LabeledBatch::new(tensors.clone(), labels.clone()).unwrap();
                aug.apply(&mut b, &mut seeded(seed ^ 2)).unwrap();
                b
            };
            let (a, b) = (run(), run());
            prop_assert_eq!(&a.tensors, &b.tensors, "{} is not deterministic", name);
            prop_assert_eq!(&a.labels, &b.labels);
            let want = if *name == "random_crop" { (crop, 16, 6) } else { (t, 16, 6) };
            prop_assert!(a.tensors.iter().all(|x| x.dims() == want), "{} shape", name);
            for l in &a.labels {
                prop_assert!((l.iter().sum::<f32>() - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn spec_augment_touches_only_the_masks(
        t in 10usize..24,
        f in 10usize..24,
        seed: u64,
    ) {
        let mut rng = seeded(seed);
        // strictly positive so every masked cell visibly changes
        let data = uniform(&mut rng, t * f * 2, 0.1, 1.0).into_iter().map(|v| v as f32).collect();
        let x = FeatureTensor::new(Array3::from_shape_vec((t, f, 2), data).unwrap()).unwrap();
        let (y, (t0, f0)) = spec_augment(&x, 0.1, 0.1, &mut rng).unwrap();
        let tw = ((t as f64 * 0.1) + 0.5).floor() as usize;
        let fw = ((f as f64 * 0.1) + 0.5).floor() as usize;
        for ((i, j, c), &v) in y.data().indexed_iter() {
            let masked = (t0..t0 + tw).contains(&i) || (f0..f0 + fw).contains(&j);
            if masked {
                prop_assert_eq!(v, 0.0);
            } else {
                prop_assert_eq!(v, x.data()[[i, j, c]]);
            }
        }
    }

    #[test]
    fn mixup_is_convex(n in 2usize..6, lambda in 0.0f32..=1.0, seed: u64) {
        let mut rng = seeded(seed);
        let tensors: Vec<_> = (0..n).map(|_| random_tensor(&mut rng, 4, 4, 1)).collect();
        let labels: Vec<_> = (0..n).map(|_| prob_vector(&mut rng, 10)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let batch = LabeledBatch::new(tensors, labels).unwrap();
        let out = mixup_with_lambda(&batch, lambda, &perm).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            for ((&m, &a), &b) in out.tensors[i].as_slice().iter()
                .zip(batch.tensors[i].as_slice())
                .zip(batch.tensors[j].as_slice())
            {
                let want = lambda * a + (1.0 - lambda) * b;
                prop_assert!((m - want).abs() <= 1e-6);
                prop_assert!(m >= a.min(b) - 1e-6 && m <= a.max(b) + 1e-6);
            }
            prop_assert!((out.labels[i].iter().sum::<f32>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn spectrum_correction_toward_itself_is_identity(len in 2000usize..5000, seed: u64) {
        let mut rng = seeded(seed);
        let clip = random_clip(&mut rng, len, 1);
        // the reference device has the same spectrum as the target
        let profiles = fit_spectrum_profiles([("a", &clip), ("b", &clip)], "a", 256).unwrap();
        let y = spectrum_correct(&clip, &profiles).unwrap();
        for (a, b) in y.channel(0).iter().zip(clip.channel(0)) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

// ---- engine ----

fn dense_softmax(inputs: [usize; 3], units: usize, seed: u64) -> Model<f64> {
    let mut b = GraphBuilder::new(inputs);
    let d = b.then(0, LayerSpec::Dense { units });
    b.then(d, LayerSpec::Softmax);
    Model::init(b.finish().unwrap(), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_outputs_are_distributions(batch in 1usize..5, units in 2usize..11, scale in 0.1f64..50.0, seed: u64) {
        let mut rng = seeded(seed);
        let m = dense_softmax([3, 4, 2], units, seed);
        let x = Tensor4::from_vec([batch, 3, 4, 2], uniform(&mut rng, batch * 24, -scale, scale)).unwrap();
        let y = m.predict(&x).unwrap();
        for b in 0..batch {
            let row = y.sample(b);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_eval_is_affine(c in 1usize..5, a in -2.0f64..2.0, seed: u64) {
        let mut rng = seeded(seed);
        let mut b = GraphBuilder::new([2, 3, c]);
        b.then(0, LayerSpec::batchnorm());
        let mut m = Model::<f64>::init(b.finish().unwrap(), seed).unwrap();
        m.params[1][0].data = uniform(&mut rng, c, -2.0, 2.0);
        m.params[1][1].data = uniform(&mut rng, c, -2.0, 2.0);
        m.params[1][2].data = uniform(&mut rng, c, -2.0, 2.0);
        m.params[1][3].data = uniform(&mut rng, c, 0.1, 3.0);
        let n = 6 * c;
        let x = Tensor4::from_vec([1, 2, 3, c], uniform(&mut rng, n, -3.0, 3.0)).unwrap();
        let y = Tensor4::from_vec([1, 2, 3, c], uniform(&mut rng, n, -3.0, 3.0)).unwrap();
        let mix: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + (1.0 - a) * q).collect();
        let mix = Tensor4::from_vec([1, 2, 3, c], mix).unwrap();
        let (fx, fy, fm) = (m.predict(&x).unwrap(), m.predict(&y).unwrap(), m.predict(&mix).unwrap());
        for i in 0..n {
            let want = a * fx.data()[i] + (1.0 - a) * fy.data()[i];
            prop_assert!((fm.data()[i] - want).abs() < 1e-9);
        }
        prop_assert_eq!(m.predict(&x).unwrap(), fx);
    }

    #[test]
    fn batchnorm_train_uses_batch_statistics(batch in 2usize..5, c in 1usize..4, seed: u64) {
        let mut rng = seeded(seed);
        let mut b = GraphBuilder::new([3, 2, c]);
        b.then(0, LayerSpec::batchnorm());
        let m = Model::<f64>::init(b.finish().unwrap(), seed).unwrap();
        let n = batch * 6 * c;
        let x = Tensor4::from_vec([batch, 3, 2, c], uniform(&mut rng, n, -4.0, 4.0)).unwrap();
        let y = m.forward(&x, Mode::Train, &mut seeded(0)).unwrap();
        let out = y.output();
        for ch in 0..c {
            let xs: Vec<f64> = x.data().iter().skip(ch).step_by(c).copied().collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            for (k, &v) in xs.iter().enumerate() {
                let want = (v - mean) / (var + 1e-3).sqrt();
                prop_assert!((out.data()[k * c + ch] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pooling_halves_the_right_axes(h in 2usize..40, w in 4usize..40) {
        let mut b = GraphBuilder::new([h, w, 1]);
        let p1 = b.then(0, LayerSpec::MaxPool { pool: [1, 2] });
        b.then(p1, LayerSpec::MaxPool { pool: [2, 2] });
        let shapes = b.finish().unwrap().validate().unwrap();
        prop_assert_eq!(shapes[1], [h, w / 2, 1]);
        prop_assert_eq!(shapes[2], [h / 2, w / 4, 1]);
    }

    #[test]
    fn residual_add_needs_equal_shapes(c in 1usize..5, f in 1usize..5) {
        let mut b = GraphBuilder::new([4, 4, c]);
        let conv = b.then(0, LayerSpec::conv(f, 3));
        b.add(LayerSpec::ResidualAdd, &[conv, 0]);
        prop_assert_eq!(b.finish().is_ok(), c == f);
    }
}

// ---- architectures ----

#[test]
fn builders_validate_on_full_scale_inputs_and_are_pure() {
    for name in ARCHITECTURES {
        for input in [[423, 128, 3], [400, 128, 3], [461, 128, 6]] {
            for classes in [3, 10] {
                let cfg = ArchConfig::new(name, classes, input);
                let a = builder(name).unwrap().build(&cfg).unwrap();
                let b = builder(name).unwrap().build(&cfg).unwrap();
                assert_eq!(a, b, "{name} is not pure");
                let shapes = a.validate().unwrap();
                assert_eq!(shapes.last().unwrap(), &[1, 1, classes], "{name} {input:?}");
            }
        }
    }
}

// ---- fusion ----

fn brute_force(f1: &[f32], f2: &[f32], h: &ClassHierarchy) -> usize {
    let mut best = (f32::NEG_INFINITY, 0);
    for p in 0..h.n_superclasses() {
        for q in h.children(p) {
            let s = f1[p] * f2[q];
            if s > best.0 {
                best = (s, q);
            }
        }
    }
    best.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fusion_matches_enumeration(seed: u64) {
        let h = ClassHierarchy::builtin();
        let mut rng = seeded(seed);
        let f1 = prob_vector(&mut rng, 3);
        let f2 = prob_vector(&mut rng, 10);
        let (fused, q) = two_stage_fuse(&f1, &f2, &h).unwrap();
        prop_assert_eq!(q, brute_force(&f1, &f2, &h));
        prop_assert_eq!(q, argmax(&fused));
        // sub-probability mass
        prop_assert!(fused.iter().sum::<f32>() <= 1.0 + 1e-6);
    }

    #[test]
    fn fusion_is_scale_invariant(seed: u64, c1 in 0.01f32..100.0, c2 in 0.01f32..100.0) {
        let h = ClassHierarchy::builtin();
        let mut rng = seeded(seed);
        let f1 = prob_vector(&mut rng, 3);
        let f2 = prob_vector(&mut rng, 10);
        let (_, q) = two_stage_fuse(&f1, &f2, &h).unwrap();
        let s1: Vec<f32> = f1.iter().map(|v| v * c1).collect();
        let s2: Vec<f32> = f2.iter().map(|v| v * c2).collect();
        prop_assert_eq!(two_stage_fuse(&s1, &f2, &h).unwrap().1, q);
        prop_assert_eq!(two_stage_fuse(&f1, &s2, &h).unwrap().1, q);
    }

    #[test]
    fn average_of_distributions_is_a_distribution(members in 1usize..6, seed: u64) {
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f32>> = (0..members).map(|_| prob_vector(&mut rng, 10)).collect();
        let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
        let avg = average_ensemble(&refs).unwrap();
        prop_assert!(avg.iter().all(|&p| p >= 0.0));
        prop_assert!((avg.iter().sum::<f32>() - 1.0).abs() <= 1e-5);
    }
}

// ---- quantization ----

proptest! {
    #[test]
    fn quantization_round_trip_within_half_step(
        w in prop::collection::vec(-1000.0f32..1000.0, 1..300),
    ) {
        let q = quantize_tensor(vec![w.len()], &w).unwrap();
        let back = q.dequantize();
        for (a, b) in w.iter().zip(&back) {
            // half a step, plus one f32 ulp of a value up to 127 steps
            let bound = q.scale * (0.5 + 127.0 * f32::EPSILON);
            prop_assert!((a - b).abs() <= bound, "{a} {b} {}", q.scale);
        }
    }
}

// ---- evaluation ----

const DEVICES: [&str; 8] = ["a", "b", "c", "s1", "s2", "s4", "s6", "s9"];

fn random_eval(rng: &mut Rng, n: usize) -> (Vec<Vec<f32>>, DatasetManifest, Vec<String>) {
    let classes: Vec<String> = SCENE_CLASSES.iter().map(|s| s.to_string()).collect();
    let rows = (0..n)
        .map(|i| ManifestRow {
            filename: format!("clip{i}.wav"),
            scene_label: classes[rng.random_range(0..10)].clone(),
            source_label: DEVICES[rng.random_range(0..DEVICES.len())].into(),
            split: None,
        })
        .collect();
    let probs = (0..n).map(|_| prob_vector(rng, 10)).collect();
    (probs, DatasetManifest::new(rows), classes)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn overall_accuracy_is_the_weighted_group_mean(n in 1usize..60, seed: u64) {
        let (probs, m, classes) = random_eval(&mut seeded(seed), n);
        let r = evaluate(&probs, &m, &classes).unwrap();
        let items: usize = r.groups.iter().map(|g| g.items).sum();
        let weighted: f64 = r.groups.iter()
            .filter_map(|g| g.accuracy.map(|a| a * g.items as f64))
            .sum::<f64>() / items as f64;
        prop_assert_eq!(items, n);
        prop_assert!((weighted - r.accuracy).abs() < 1e-9);
    }

    #[test]
    fn evaluation_ignores_row_order(n in 1usize..60, seed: u64) {
        let mut rng = seeded(seed);
        let (probs, m, classes) = random_eval(&mut rng, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let p2: Vec<_> = order.iter().map(|&i| probs[i].clone()).collect();
        let m2 = DatasetManifest::new(order.iter().map(|&i| m.rows()[i].clone()).collect());
        let a = evaluate(&probs, &m, &classes).unwrap();
        let b = evaluate(&p2, &m2, &classes).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(evaluate(&probs, &m, &classes).unwrap().to_json(), a.to_json());
    }

    #[test]
    fn overlap_is_symmetric(a in prop::collection::vec(0usize..10, 1..100), seed: u64) {
        let mut rng = seeded(seed);
        let b: Vec<usize> = a.iter().map(|&v| if rng.random_bool(0.5) { v } else { rng.random_range(0..10) }).collect();
        let ab = prediction_overlap(&a, &b).unwrap();
        prop_assert_eq!(ab, prediction_overlap(&b, &a).unwrap());
        prop_assert!((0.0..=100.0).contains(&ab));
        prop_assert_eq!(prediction_overlap(&a, &a).unwrap(), 100.0);
    }
}
