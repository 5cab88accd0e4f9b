use acdc::drift::{apply_drift, make_schedule, synth_streams, SynthSpec};
use acdc::evolving::InputMoments;
use acdc::io::{read_all, read_checkpoint, read_metrics, write_checkpoint, write_metrics, write_samples, DatasetManifest, Format};
use acdc::net::AcdcModel;
use acdc::stream::{
    iter_samples, next_sample_domain, pair_permute, prequential_run, Domain, EngineConfig, Sample, ThroughputState,
};
use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_streams(seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let spec = SynthSpec {
        u: 5,
        m: 2,
        n_source: 700,
        n_target: 300,
        seed,
        ..Default::default()
    };
    synth_streams(&spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pairing_covers_both_sides(a in 1usize..40, b in 1usize..40, seed: u64) {
        let pairs = pair_permute(a, b, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(pairs.len(), a.max(b));
        let mut uses_s = vec![0usize; a];
        let mut uses_t = vec![0usize; b];
        for &(s, t) in &pairs {
            uses_s[s] += 1;
            uses_t[t] += 1;
        }
        for uses in [&uses_s, &uses_t] {
            let lo = *uses.iter().min().unwrap();
            let hi = *uses.iter().max().unwrap();
            prop_assert!(lo >= 1 && hi - lo <= 1);
        }
    }

    #[test]
    fn throughput_exhausts_exactly(ns in 0u64..300, nt in 0u64..300, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = ThroughputState::new(ns, nt);
        let (mut s, mut t) = (0, 0);
        while let Some(d) = next_sample_domain(&st, &mut rng) {
            match d {
                Domain::Source => s += 1,
                Domain::Target => t += 1,
            }
            st.record(d);
        }
        prop_assert_eq!((s, t), (ns, nt));
        prop_assert!(st.exhausted());
    }

    #[test]
    fn moments_match_two_pass(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..60)) {
        let mut m = InputMoments::new(3);
        for r in &rows {
            m.update(r).unwrap();
        }
        let n = rows.len() as f64;
        for j in 0..3 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sq = rows.iter().map(|r| r[j] * r[j]).sum::<f64>() / n;
            prop_assert!((m.mean()[j] - mean).abs() < 1e-9);
            prop_assert!((m.variance()[j] - var).abs() < 1e-9);
            prop_assert!((m.raw_second()[j] - sq).abs() < 1e-9);
        }
    }

    #[test]
    fn drift_scales_to_vector_norm(x in prop::collection::vec(0.01f64..3.0, 6), seed: u64, idx in 0u64..1000) {
        let sched = make_schedule(6, 4, 1000, seed).unwrap();
        let y = apply_drift(&x, &sched, idx);
        let c = sched.concept(idx);
        if c == 0 {
            prop_assert_eq!(y, x);
        } else {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..6 {
                prop_assert!((y[j] - sched.vectors[c][j] * x[j] / norm).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn schedule_boundaries_split_evenly() {
    let s = make_schedule(3, 4, 1000, 1).unwrap();
    assert_eq!(s.boundaries, vec![250, 500, 750]);
    assert_eq!(s.concept(249), 0);
    assert_eq!(s.concept(250), 1);
    assert_eq!(s.concept(999), 3);
    assert!(make_schedule(3, 0, 10, 1).is_err());
}

#[test]
fn initial_throughput_ratio() {
    let p = ThroughputState::new(70_000, 9_298).source_probability().unwrap();
    assert_relative_eq!(p, 70_000.0 / 79_298.0);
}

#[test]
fn cumulative_accuracy_counts_every_target_sample() {
    let (src, tgt) = small_streams(3);
    let model = AcdcModel::new(5, 2, Default::default(), Default::default(), 3).unwrap();
    let config = EngineConfig {
        window_size: 100,
        ..Default::default()
    };
    let (_, trace) = prequential_run(model, iter_samples(&src), iter_samples(&tgt), (700, 300), config, 3).unwrap();
    let total: usize = trace.rows.iter().map(|r| r.target_count).sum();
    assert_eq!(total, 300);
    assert_eq!(trace.rows.iter().map(|r| r.source_count).sum::<usize>(), 700);
    let last = trace.last().unwrap();
    let weighted: f64 = trace
        .rows
        .iter()
        .filter_map(|r| r.target_accuracy.map(|a| a * r.target_count as f64))
        .sum();
    assert_relative_eq!(last.cumulative_target_accuracy.unwrap(), weighted / 300.0, epsilon = 1e-12);
}

#[test]
fn epochs_do_not_change_window_count() {
    let (src, tgt) = small_streams(4);
    let windows = |epochs| {
        let model = AcdcModel::new(5, 2, Default::default(), Default::default(), 4).unwrap();
        let config = EngineConfig {
            window_size: 100,
            epochs,
            ..Default::default()
        };
        let (_, trace) = prequential_run(model, iter_samples(&src), iter_samples(&tgt), (700, 300), config, 4).unwrap();
        trace.rows.len()
    };
    assert_eq!(windows(1), windows(3));
}

#[test]
fn samples_round_trip_through_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let (src, _) = small_streams(5);
    for (format, file) in [(Format::Csv, "s.csv"), (Format::Binary, "s.bin")] {
        let path = dir.path().join(file);
        write_samples(&src, &path, format, true, 2).unwrap();
        let manifest = DatasetManifest {
            name: "s".into(),
            role: Domain::Source,
            feature_dim: 5,
            classes: 2,
            path,
            format,
            labeled: true,
            samples: src.len() as u64,
        };
        let back = read_all(&manifest).unwrap();
        assert_eq!(back.len(), src.len());
        for (a, b) in back.iter().zip(&src) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.label, b.label);
            assert_eq!(a.index, b.index);
        }
    }
}

#[test]
fn short_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (src, _) = small_streams(6);
    let path = dir.path().join("s.csv");
    write_samples(&src[..10], &path, Format::Csv, true, 2).unwrap();
    let manifest = DatasetManifest {
        name: "s".into(),
        role: Domain::Source,
        feature_dim: 5,
        classes: 2,
        path,
        format: Format::Csv,
        labeled: true,
        samples: 20,
    };
    assert!(read_all(&manifest).is_err());
}

#[test]
fn metrics_and_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (src, tgt) = small_streams(7);
    let model = AcdcModel::new(5, 2, Default::default(), Default::default(), 7).unwrap();
    let config = EngineConfig {
        window_size: 200,
        ..Default::default()
    };
    let (model, trace) = prequential_run(model, iter_samples(&src), iter_samples(&tgt), (700, 300), config, 7).unwrap();
    let metrics = dir.path().join("m.csv");
    write_metrics(&trace.rows, &metrics, Some(&dir.path().join("t.csv"))).unwrap();
    let rows = read_metrics(&metrics).unwrap();
    assert_eq!(rows.len(), trace.rows.len());
    let last = trace.last().unwrap();
    assert_eq!(rows.last().unwrap().r_dae, last.widths.dae);

    let ckpt = dir.path().join("model.ckpt");
    write_checkpoint(&model, &ckpt).unwrap();
    assert_eq!(read_checkpoint(&ckpt).unwrap(), model);
    std::fs::write(&ckpt, "not a checkpoint").unwrap();
    assert!(read_checkpoint(&ckpt).is_err());
}
