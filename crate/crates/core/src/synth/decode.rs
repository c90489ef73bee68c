use crate::eval::Proposal;

/// Turns per-frame probabilities into proposals.
///
/// `probs[k][t]` is the probability of class `labels[k]` at frame `t`. Frames
/// with `p >= threshold` form runs; runs separated by at most `merge_gap`
/// frames are merged, and each run is scored by its mean probability.
pub fn decode_intervals(
    probs: &[Vec<f64>],
    video_id: &str,
    labels: &[&str],
    threshold: f64,
    merge_gap: usize,
) -> Vec<Proposal> {
    let mut out = Vec::new();
    for (k, p) in probs.iter().enumerate() {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        let mut t = 0;
        while t < p.len() {
            if p[t] >= threshold {
                let s = t;
                while t + 1 < p.len() && p[t + 1] >= threshold {
                    t += 1;
                }
                match runs.last_mut() {
                    Some(last) if s - last.1 - 1 <= merge_gap => last.1 = t,
                    _ => runs.push((s, t)),
                }
            }
            t += 1;
        }
        for (s, e) in runs {
            let score = p[s..=e].iter().sum::<f64>() / (e - s + 1) as f64;
            out.push(Proposal {
                video_id: video_id.to_owned(),
                start: s as f64,
                end: e as f64,
                label: labels[k].to_owned(),
                score,
            });
        }
    }
    out
}
