use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dsta_core::eval::{evaluate, IntervalAnnotation, Proposal, DEFAULT_THRESHOLDS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(per_class: usize) -> (Vec<IntervalAnnotation>, Vec<Proposal>) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels = ["smash", "clear", "drop", "lift"];
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    for label in labels {
        for i in 0..per_class {
            let video = format!("v{}", i % 8);
            let s = rng.random_range(0..5000u64);
            let e = s + rng.random_range(5..40);
            gts.push(IntervalAnnotation::new(&video, s, e, label));
            for _ in 0..3 {
                let jitter = rng.random_range(-5.0..5.0);
                preds.push(Proposal {
                    video_id: video.clone(),
                    start: (s as f64 + jitter).max(0.0),
                    end: e as f64 + jitter,
                    label: label.to_owned(),
                    score: rng.random_range(0.0..1.0),
                });
            }
        }
    }
    (gts, preds)
}

fn bench_evaluate(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluate");
    for n in [10, 100, 1000] {
        let (gts, preds) = instance(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &(gts, preds), |b, (gts, preds)| {
            b.iter(|| evaluate(black_box(gts), black_box(preds), &DEFAULT_THRESHOLDS).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_evaluate);
criterion_main!(benches);
