//! A deliberately naive evaluator shared by the oracle and acceptance tests.

use dsta_core::eval::{IntervalAnnotation, Proposal};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn oracle_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let lo = if a.0 > b.0 { a.0 } else { b.0 };
    let hi = if a.1 < b.1 { a.1 } else { b.1 };
    let inter = if hi > lo { hi - lo } else { 0.0 };
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union > 0.0 {
        inter / union
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

/// AP as the mean, over ground truths, of the best precision reachable at or
/// after the rank where each one is recalled.
fn oracle_ap(gts: &[&IntervalAnnotation], preds: &[&Proposal], thr: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    // Selection sort on (score desc, start asc, input index asc).
    let mut remaining: Vec<usize> = (0..preds.len()).collect();
    let mut order = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            let (i, j) = (remaining[k], remaining[best]);
            let (pi, pj) = (preds[i], preds[j]);
            if pi.score > pj.score || (pi.score == pj.score && pi.start < pj.start) {
                best = k;
            }
        }
        order.push(remaining.remove(best));
    }
    let mut used = vec![false; gts.len()];
    let mut hits = Vec::new();
    for &i in &order {
        let p = preds[i];
        let mut chosen: Option<usize> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] || gt.video_id != p.video_id {
                continue;
            }
            let iou = oracle_iou((p.start, p.end), (gt.start as f64, gt.end as f64));
            let better = match chosen {
                None => true,
                Some(c) => iou > oracle_iou((p.start, p.end), (gts[c].start as f64, gts[c].end as f64)),
            };
            if better {
                chosen = Some(g);
            }
        }
        let hit = chosen.is_some_and(|g| {
            oracle_iou((p.start, p.end), (gts[g].start as f64, gts[g].end as f64)) >= thr
        });
        if hit {
            used[chosen.unwrap()] = true;
        }
        hits.push(hit);
    }
    let precision_at = |k: usize| hits[..=k].iter().filter(|&&h| h).count() as f64 / (k + 1) as f64;
    let mut total = 0.0;
    for k in 0..hits.len() {
        if hits[k] {
            total += (k..hits.len()).map(precision_at).fold(0.0, f64::max);
        }
    }
    total / gts.len() as f64
}

pub fn oracle_map(gts: &[IntervalAnnotation], preds: &[Proposal], thr: f64) -> f64 {
    let mut labels: Vec<&str> = gts.iter().map(|g| g.label.as_str()).collect();
    labels.extend(preds.iter().map(|p| p.label.as_str()));
    labels.sort();
    labels.dedup();
    let sum: f64 = labels
        .iter()
        .map(|l| {
            let g: Vec<&IntervalAnnotation> = gts.iter().filter(|x| x.label == *l).collect();
            let p: Vec<&Proposal> = preds.iter().filter(|x| x.label == *l).collect();
            oracle_ap(&g, &p, thr)
        })
        .sum();
    sum / labels.len() as f64
}

pub fn micro_instance(rng: &mut ChaCha8Rng) -> (Vec<IntervalAnnotation>, Vec<Proposal>) {
    let labels = ["a", "b"];
    let videos = ["v0", "v1"];
    let mut gts = Vec::new();
    let mut preds = Vec::new();
    for label in labels {
        for _ in 0..rng.random_range(0..=4) {
            let s = rng.random_range(0..20u64);
            gts.push(IntervalAnnotation::new(
                videos[rng.random_range(0..2)],
                s,
                s + rng.random_range(0..8u64),
                label,
            ));
        }
        for _ in 0..rng.random_range(0..=4) {
            let s = rng.random_range(0..20) as f64;
            preds.push(Proposal {
                video_id: videos[rng.random_range(0..2)].to_owned(),
                start: s,
                end: s + rng.random_range(0..8) as f64,
                label: label.to_owned(),
                // Few distinct scores so that ties occur.
                score: rng.random_range(1..4) as f64 / 4.0,
            });
        }
    }
    (gts, preds)
}
