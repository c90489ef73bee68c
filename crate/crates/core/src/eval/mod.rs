//! Temporal action localization scoring.
//!
//! Predictions are ranked by score (ties: earlier start, then input order).
//! Each one claims the not-yet-matched ground truth of the same video and
//! class with the highest tIoU; it is a true positive when that tIoU reaches
//! the threshold. AP integrates the all-point interpolated precision envelope
//! over recall. mAP averages classes; the average mAP averages thresholds.

mod report;

pub use report::{write_report_csv, write_report_json, EvalReport, REPORT_COLUMNS};

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::label_from_any;

/// Thresholds of the standard protocol.
pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

/// Display frame rate; frame intervals are divided by this to get seconds.
pub const DISPLAY_FPS: f64 = 25.0;

/// One ground-truth action, in frames (inclusive indices).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntervalAnnotation {
    pub video_id: String,
    pub start: u64,
    pub end: u64,
    #[serde(deserialize_with = "label_from_any")]
    pub label: String,
}

impl IntervalAnnotation {
    pub fn new(video_id: impl Into<String>, start: u64, end: u64, label: impl Into<String>) -> Self {
        Self {
            video_id: video_id.into(),
            start,
            end,
            label: label.into(),
        }
    }

    /// Inclusive frame count.
    pub fn frames(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn segment(&self) -> (f64, f64) {
        (self.start as f64, self.end as f64)
    }
}

/// One predicted action instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub video_id: String,
    pub start: f64,
    pub end: f64,
    #[serde(deserialize_with = "label_from_any")]
    pub label: String,
    pub score: f64,
}

impl Proposal {
    pub fn segment(&self) -> (f64, f64) {
        (self.start, self.end)
    }
}

/// Temporal IoU of two closed segments `[start, end]`.
///
/// Zero-length segments give 1 only when both are the same point.
pub fn tiou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Result of scoring one class at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAp {
    /// `None` when the class has neither ground truth nor predictions.
    pub ap: Option<f64>,
    /// Ground truth exists but nothing was predicted.
    pub no_predictions: bool,
}

/// Indices of `preds` in evaluation order.
pub fn ranking(preds: &[Proposal]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&i, &j| {
        preds[j]
            .score
            .partial_cmp(&preds[i].score)
            .unwrap_or(Ordering::Equal)
            .then(preds[i].start.partial_cmp(&preds[j].start).unwrap_or(Ordering::Equal))
    });
    order
}

/// Greedy matching plus all-point interpolated AP for a single class.
pub fn match_and_ap(gts: &[IntervalAnnotation], preds: &[Proposal], threshold: f64) -> ClassAp {
    if gts.is_empty() {
        return ClassAp {
            ap: (!preds.is_empty()).then_some(0.0),
            no_predictions: false,
        };
    }
    if preds.is_empty() {
        return ClassAp {
            ap: Some(0.0),
            no_predictions: true,
        };
    }
    let mut by_video: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_video.entry(g.video_id.as_str()).or_default().push(i);
    }
    let mut taken = vec![false; gts.len()];
    let mut tp_flags = Vec::with_capacity(preds.len());
    for i in ranking(preds) {
        let p = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        for &g in by_video.get(p.video_id.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            if taken[g] {
                continue;
            }
            let iou = tiou(p.segment(), gts[g].segment());
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        match best {
            Some((g, iou)) if iou >= threshold => {
                taken[g] = true;
                tp_flags.push(true);
            }
            _ => tp_flags.push(false),
        }
    }
    ClassAp {
        ap: Some(interpolated_ap(&tp_flags, gts.len())),
        no_predictions: false,
    }
}

/// All-point interpolated AP from ranked TP/FP flags.
pub fn interpolated_ap(tp_flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut recall = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (rank, &hit) in tp_flags.iter().enumerate() {
        tp += hit as usize;
        precision.push(tp as f64 / (rank + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &hit) in tp_flags.iter().enumerate() {
        if hit {
            ap += (recall[i] - prev_recall) * precision[i];
            prev_recall = recall[i];
        }
    }
    ap
}

fn validate(gts: &[IntervalAnnotation], preds: &[Proposal]) -> Result<()> {
    for (i, g) in gts.iter().enumerate() {
        if g.start > g.end {
            return Err(Error::Record {
                source_name: "ground truth".into(),
                index: i,
                reason: format!("start {} after end {}", g.start, g.end),
            });
        }
    }
    for (i, p) in preds.iter().enumerate() {
        let reason = if !(p.score.is_finite() && p.start.is_finite() && p.end.is_finite()) {
            Some("non-finite field".to_owned())
        } else if p.start > p.end {
            Some(format!("start {} after end {}", p.start, p.end))
        } else if p.start < 0.0 {
            Some(format!("negative start {}", p.start))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(Error::Record {
                source_name: "predictions".into(),
                index: i,
                reason,
            });
        }
    }
    Ok(())
}

/// Scores `preds` against `gts` at each threshold.
pub fn evaluate(gts: &[IntervalAnnotation], preds: &[Proposal], thresholds: &[f64]) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::Eval("no ground-truth annotations".into()));
    }
    if thresholds.is_empty() || thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config(format!(
            "tIoU thresholds must be a non-empty list within [0, 1], got {thresholds:?}"
        )));
    }
    validate(gts, preds)?;

    let labels: BTreeSet<&str> = gts
        .iter()
        .map(|g| g.label.as_str())
        .chain(preds.iter().map(|p| p.label.as_str()))
        .collect();
    let mut per_class_ap = BTreeMap::new();
    let mut missing_predictions = Vec::new();
    for label in labels {
        let g: Vec<IntervalAnnotation> = gts.iter().filter(|x| x.label == label).cloned().collect();
        let p: Vec<Proposal> = preds.iter().filter(|x| x.label == label).cloned().collect();
        let mut aps = Vec::with_capacity(thresholds.len());
        let mut flagged = false;
        for &thr in thresholds {
            let r = match_and_ap(&g, &p, thr);
            flagged |= r.no_predictions;
            if let Some(ap) = r.ap {
                aps.push(ap);
            }
        }
        if flagged {
            missing_predictions.push(label.to_owned());
        }
        if aps.len() == thresholds.len() {
            per_class_ap.insert(label.to_owned(), aps);
        }
    }
    let map_per_threshold: Vec<f64> = (0..thresholds.len())
        .map(|t| per_class_ap.values().map(|aps| aps[t]).sum::<f64>() / per_class_ap.len() as f64)
        .collect();
    let average_map = map_per_threshold.iter().sum::<f64>() / map_per_threshold.len() as f64;
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        per_class_ap,
        map_per_threshold,
        average_map,
        gt_count: gts.len(),
        prediction_count: preds.len(),
        missing_predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(s: u64, e: u64) -> IntervalAnnotation {
        IntervalAnnotation::new("v", s, e, "smash")
    }

    fn pred(s: f64, e: f64, score: f64) -> Proposal {
        Proposal {
            video_id: "v".into(),
            start: s,
            end: e,
            label: "smash".into(),
            score,
        }
    }

    #[test]
    fn tiou_examples() {
        assert_eq!(tiou((10.0, 20.0), (10.0, 20.0)), 1.0);
        assert!((tiou((10.0, 20.0), (15.0, 25.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(tiou((0.0, 5.0), (10.0, 20.0)), 0.0);
        assert_eq!(tiou((3.0, 3.0), (3.0, 3.0)), 1.0);
        assert_eq!(tiou((3.0, 3.0), (4.0, 4.0)), 0.0);
        assert_eq!(tiou((3.0, 3.0), (0.0, 10.0)), 0.0);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(match_and_ap(&[gt(10, 20)], &[pred(10.0, 20.0, 0.9)], 0.5).ap, Some(1.0));
        let two = [pred(10.0, 20.0, 0.9), pred(11.0, 21.0, 0.8)];
        assert_eq!(match_and_ap(&[gt(10, 20)], &two, 0.5).ap, Some(1.0));
        assert_eq!(match_and_ap(&[gt(10, 20)], &[pred(15.0, 25.0, 0.9)], 0.4).ap, Some(0.0));
    }

    #[test]
    fn empty_sides() {
        assert_eq!(match_and_ap(&[], &[pred(0.0, 1.0, 0.5)], 0.5).ap, Some(0.0));
        let r = match_and_ap(&[gt(0, 1)], &[], 0.5);
        assert_eq!(r.ap, Some(0.0));
        assert!(r.no_predictions);
        assert_eq!(match_and_ap(&[], &[], 0.5).ap, None);
    }

    #[test]
    fn false_positive_first_halves_precision() {
        // FP at rank 1, TP at rank 2 -> precision 0.5 at recall 1
        let preds = [pred(50.0, 60.0, 0.9), pred(10.0, 20.0, 0.8)];
        assert_eq!(match_and_ap(&[gt(10, 20)], &preds, 0.5).ap, Some(0.5));
    }

    #[test]
    fn ties_prefer_earlier_start() {
        // Both overlap the GT enough; the earlier one wins the tie and is the TP.
        let preds = [pred(12.0, 22.0, 0.5), pred(10.0, 20.0, 0.5)];
        assert_eq!(ranking(&preds), vec![1, 0]);
    }

    #[test]
    fn matching_is_per_video() {
        let mut p = pred(10.0, 20.0, 0.9);
        p.video_id = "other".into();
        assert_eq!(match_and_ap(&[gt(10, 20)], &[p], 0.5).ap, Some(0.0));
    }

    #[test]
    fn evaluate_worked_rows() {
        let r = evaluate(&[gt(10, 20)], &[pred(15.0, 25.0, 0.9)], &DEFAULT_THRESHOLDS).unwrap();
        assert_eq!(r.map_per_threshold, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((r.average_map - 0.2).abs() < 1e-15);

        let mut g2 = gt(5, 9);
        g2.label = "lift".into();
        let r = evaluate(&[gt(10, 20), g2], &[pred(10.0, 20.0, 1.0)], &DEFAULT_THRESHOLDS).unwrap();
        assert!(r.map_per_threshold.iter().all(|&m| m == 0.5));
        assert_eq!(r.missing_predictions, vec!["lift".to_owned()]);
    }

    #[test]
    fn evaluate_errors() {
        assert!(matches!(evaluate(&[], &[], &DEFAULT_THRESHOLDS), Err(Error::Eval(_))));
        assert!(evaluate(&[gt(1, 2)], &[pred(3.0, 1.0, 0.5)], &DEFAULT_THRESHOLDS).is_err());
        assert!(evaluate(&[gt(1, 2)], &[], &[]).is_err());
    }

    #[test]
    fn prediction_only_class_counts_as_zero() {
        let mut p = pred(10.0, 20.0, 0.9);
        p.label = "ghost".into();
        let r = evaluate(&[gt(10, 20)], &[pred(10.0, 20.0, 0.9), p], &[0.5]).unwrap();
        assert_eq!(r.per_class_ap["ghost"], vec![0.0]);
        assert_eq!(r.map_per_threshold, vec![0.5]);
    }
}
