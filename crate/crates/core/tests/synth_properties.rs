use dsta_core::eval::IntervalAnnotation;
use dsta_core::synth::{
    decode_intervals, focal_loss, frame_probabilities, generate_dataset, run_experiment, ExperimentConfig,
    FrozenStem, Head, Model, ModelConfig, SynthClass, SyntheticConfig, TrainSet,
};
use dsta_core::{Adapter, Tensor4, Variant};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gradient_energy(clip: &Tensor4, a: &IntervalAnnotation) -> (f64, f64) {
    let d = clip.dims();
    let (mut eh, mut ew) = (0.0, 0.0);
    for c in 0..d.c {
        for t in a.start as usize..=a.end as usize {
            for h in 0..d.h {
                for w in 0..d.w {
                    let v = clip.get(c, t, h, w);
                    if h + 1 < d.h {
                        eh += (clip.get(c, t, h + 1, w) - v).powi(2);
                    }
                    if w + 1 < d.w {
                        ew += (clip.get(c, t, h, w + 1) - v).powi(2);
                    }
                }
            }
        }
    }
    (eh, ew)
}

#[test]
fn motion_classes_carry_directional_gradient_energy() {
    for seed in 0..4 {
        let data = generate_dataset(&SyntheticConfig { seed, noise: 0.0, ..Default::default() }).unwrap();
        let (mut vertical, mut horizontal) = ((0.0, 0.0), (0.0, 0.0));
        for (i, clip) in data.clips.iter().enumerate() {
            for a in data.annotations_for(i) {
                let (eh, ew) = gradient_energy(clip, a);
                if a.label == SynthClass::VerticalMotion.name() {
                    vertical.0 += eh;
                    vertical.1 += ew;
                } else if a.label == SynthClass::HorizontalMotion.name() {
                    horizontal.0 += eh;
                    horizontal.1 += ew;
                }
            }
        }
        assert!(vertical.0 > vertical.1, "seed {seed}: {vertical:?}");
        assert!(horizontal.1 > horizontal.0, "seed {seed}: {horizontal:?}");
    }
}

#[test]
fn zero_scale_gives_identical_initial_predictions_across_variants() {
    let cfg = ModelConfig::default();
    let data = generate_dataset(&SyntheticConfig { clips: 4, ..Default::default() }).unwrap();
    let stem = FrozenStem::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let set = TrainSet::new(&stem, &data).unwrap();
    let probs: Vec<Vec<Vec<f64>>> = Variant::ALL
        .iter()
        .map(|&v| {
            let adapter = Adapter::init(cfg.adapter(v, 0.5), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let head = Head::init(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
            let model = Model::new(stem.clone(), Some(adapter), head).unwrap();
            set.features.iter().flat_map(|f| frame_probabilities(&model, f).unwrap()).collect()
        })
        .collect();
    for p in &probs[1..] {
        assert_eq!(p, &probs[0]);
    }
}

#[test]
fn variants_in_one_experiment_share_data_and_stem() {
    let mut cfg = ExperimentConfig {
        variants: Variant::ALL.to_vec(),
        alpha_sweep: vec![],
        seeds: vec![0, 1],
        eval_clips: 2,
        ..Default::default()
    };
    cfg.data.clips = 4;
    cfg.train.epochs = 1;
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.runs.len(), 8);
    for seed in [0, 1] {
        let runs: Vec<_> = result.runs.iter().filter(|r| r.key.seed == seed).collect();
        assert_eq!(runs.len(), 4);
        for r in &runs[1..] {
            assert_eq!(r.stem_checksum, runs[0].stem_checksum);
            assert_eq!(r.data_checksum, runs[0].data_checksum);
            // β starts at zero, so the untrained loss is the same for every variant.
            assert_eq!(r.outcome.initial_loss, runs[0].outcome.initial_loss);
        }
    }
    let first = |s: u64| result.runs.iter().find(|r| r.key.seed == s).unwrap();
    assert_ne!(first(0).data_checksum, first(1).data_checksum);
    assert_ne!(first(0).stem_checksum, first(1).stem_checksum);
}

#[test]
fn focal_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-6;
    for case in 0..200 {
        let n = rng.random_range(1..12);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
        let gamma = [0.0, 0.5, 1.0, 2.0, 3.0][case % 5];
        let weight = rng.random_range(0.05..0.95);
        let grad = focal_loss(&logits, &targets, gamma, weight).grad;
        // The loss is a mean of per-entry terms, so entry i's gradient is its
        // own term's derivative over n. Differencing the lone term keeps the
        // roundoff of the other entries out of the estimate.
        for i in 0..n {
            let term = |z: f64| focal_loss(&[z], &targets[i..=i], gamma, weight).loss;
            let numeric = (term(logits[i] + h) - term(logits[i] - h)) / (2.0 * h) / n as f64;
            let rel = (grad[i] - numeric).abs() / (grad[i].abs() + numeric.abs()).max(1e-8);
            assert!(rel < 1e-4, "case {case} entry {i}: {} vs {numeric}", grad[i]);
        }
    }
}

proptest! {
    #[test]
    fn raising_threshold_only_shrinks_proposals(
        probs in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 30), 1..4),
        lo in 0.05f64..0.9,
        step in 0.0f64..0.5,
        gap in 0usize..4,
    ) {
        let hi = (lo + step).min(0.99);
        let labels = ["a", "b", "c"];
        let loose = decode_intervals(&probs, "v", &labels[..probs.len()], lo, gap);
        let strict = decode_intervals(&probs, "v", &labels[..probs.len()], hi, gap);
        for p in &strict {
            prop_assert!(
                loose.iter().any(|q| q.label == p.label && q.start <= p.start && p.end <= q.end),
                "{p:?} not inside any of {loose:?}"
            );
        }
    }
}
