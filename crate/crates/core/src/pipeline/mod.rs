//! Annotation preprocessing for badminton match videos.
//!
//! Point annotations (a stroke at frame `t`) become fixed windows
//! `[t - 9, t + 9]`, frame indices are rescaled to a common frame rate, and
//! videos are cut into clips wherever two consecutive actions are more than
//! 150 frames apart, keeping 10 frames of context on either side.

mod stats;

pub use stats::{compute_stats, export_plot_data, DatasetStats, FrequencyGroup};

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::IntervalAnnotation;
use crate::jsonl::label_from_any;

pub const DEFAULT_WINDOW: u64 = 9;
pub const DEFAULT_FPS: f64 = 25.0;
pub const DEFAULT_GAP_THRESHOLD: u64 = 150;
pub const DEFAULT_CONTEXT: u64 = 10;
/// Intervals with fewer inclusive frames than this are dropped after clipping.
pub const MIN_INTERVAL_FRAMES: u64 = 3;

/// A single stroke annotated at one frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrokeEvent {
    pub video_id: String,
    pub t: i64,
    #[serde(deserialize_with = "label_from_any")]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: u64,
}

/// A contiguous excerpt of a source video with annotations in clip-local frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipManifest {
    pub clip_id: String,
    pub video_id: String,
    pub source_start: u64,
    pub source_end: u64,
    pub annotations: Vec<IntervalAnnotation>,
}

impl ClipManifest {
    pub fn frames(&self) -> u64 {
        self.source_end - self.source_start + 1
    }
}

/// Window of `±window` frames around a stroke, clipped to `[0, video_len - 1]`.
pub fn point_to_interval(e: &StrokeEvent, video_len: u64, window: u64) -> Result<IntervalAnnotation> {
    if e.t < 0 || e.t as u64 >= video_len {
        return Err(Error::Config(format!(
            "stroke frame {} is outside video {} of {} frames",
            e.t, e.video_id, video_len
        )));
    }
    let t = e.t as u64;
    Ok(IntervalAnnotation::new(
        e.video_id.clone(),
        t.saturating_sub(window),
        (t + window).min(video_len - 1),
        e.label.clone(),
    ))
}

/// `round(frame * dst / src)` with halves rounded up.
pub fn resample_frame(frame: u64, fps_src: f64, fps_dst: f64) -> u64 {
    if fps_src == fps_dst {
        return frame;
    }
    (frame as f64 * fps_dst / fps_src + 0.5).floor() as u64
}

fn check_fps(fps_src: f64, fps_dst: f64) -> Result<()> {
    if !(fps_src > 0.0 && fps_dst > 0.0 && fps_src.is_finite() && fps_dst.is_finite()) {
        return Err(Error::Config(format!(
            "frame rates must be positive, got {fps_src} -> {fps_dst}"
        )));
    }
    Ok(())
}

/// Records whose frame indices can be moved to another frame rate.
pub trait Retime: Sized {
    fn retime(&self, f: &dyn Fn(u64) -> u64) -> Self;
}

impl Retime for StrokeEvent {
    fn retime(&self, f: &dyn Fn(u64) -> u64) -> Self {
        Self {
            t: if self.t < 0 { self.t } else { f(self.t as u64) as i64 },
            ..self.clone()
        }
    }
}

impl Retime for IntervalAnnotation {
    fn retime(&self, f: &dyn Fn(u64) -> u64) -> Self {
        Self {
            start: f(self.start),
            end: f(self.end),
            ..self.clone()
        }
    }
}

pub fn resample_timestamps<T: Retime>(records: &[T], fps_src: f64, fps_dst: f64) -> Result<Vec<T>> {
    check_fps(fps_src, fps_dst)?;
    let f = move |x| resample_frame(x, fps_src, fps_dst);
    Ok(records.iter().map(|r| r.retime(&f)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvertOptions {
    pub window: u64,
    pub fps: f64,
    pub min_frames: u64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            fps: DEFAULT_FPS,
            min_frames: MIN_INTERVAL_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conversion {
    pub intervals: Vec<IntervalAnnotation>,
    /// Per-video metadata rescaled to the target frame rate.
    pub videos: Vec<VideoMeta>,
    pub rejected: Vec<Rejection>,
    pub dropped_degenerate: usize,
}

/// Converts point annotations to intervals on the target frame-rate timeline.
///
/// Strokes are validated against the source frame count, rescaled, then
/// windowed against the rescaled video length.
pub fn convert_strokes(events: &[StrokeEvent], videos: &[VideoMeta], opts: ConvertOptions) -> Result<Conversion> {
    let by_id: HashMap<&str, &VideoMeta> = videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut out = Conversion {
        intervals: Vec::new(),
        videos: Vec::new(),
        rejected: Vec::new(),
        dropped_degenerate: 0,
    };
    for v in videos {
        check_fps(v.fps, opts.fps)?;
        out.videos.push(VideoMeta {
            video_id: v.video_id.clone(),
            fps: opts.fps,
            frame_count: resample_frame(v.frame_count, v.fps, opts.fps),
        });
    }
    for (index, e) in events.iter().enumerate() {
        let Some(meta) = by_id.get(e.video_id.as_str()) else {
            out.rejected.push(Rejection {
                index,
                reason: format!("no metadata for video {}", e.video_id),
            });
            continue;
        };
        if e.t < 0 || e.t as u64 >= meta.frame_count {
            out.rejected.push(Rejection {
                index,
                reason: format!(
                    "stroke frame {} is outside video {} of {} frames",
                    e.t, e.video_id, meta.frame_count
                ),
            });
            continue;
        }
        let len = resample_frame(meta.frame_count, meta.fps, opts.fps).max(1);
        let mut ev = e.retime(&|f| resample_frame(f, meta.fps, opts.fps));
        ev.t = ev.t.min(len as i64 - 1);
        let iv = point_to_interval(&ev, len, opts.window)?;
        if iv.frames() < opts.min_frames {
            out.dropped_degenerate += 1;
            continue;
        }
        out.intervals.push(iv);
    }
    if out.dropped_degenerate > 0 {
        log::info!("dropped {} degenerate intervals", out.dropped_degenerate);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentOptions {
    pub gap_threshold: u64,
    pub context: u64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            context: DEFAULT_CONTEXT,
        }
    }
}

/// Cuts one video's annotations into clips wherever
/// `next.start - prev.end > gap_threshold`.
///
/// Each clip covers `[first.start - context, last.end + context]`, clamped to
/// `[0, video_len - 1]` when the length is known. Annotations are sorted by
/// start first; `prev.end` is the furthest end seen so far in the clip.
pub fn segment_by_inactivity(
    annotations: &[IntervalAnnotation],
    video_len: Option<u64>,
    opts: SegmentOptions,
) -> Vec<ClipManifest> {
    if annotations.is_empty() {
        return Vec::new();
    }
    let mut sorted = annotations.to_vec();
    sorted.sort_by_key(|a| (a.start, a.end));
    let video_id = sorted[0].video_id.clone();

    let mut groups: Vec<Vec<IntervalAnnotation>> = Vec::new();
    let mut reach = 0u64;
    for a in sorted {
        match groups.last_mut() {
            Some(g) if a.start <= reach || a.start - reach <= opts.gap_threshold => {
                reach = reach.max(a.end);
                g.push(a);
            }
            _ => {
                reach = a.end;
                groups.push(vec![a]);
            }
        }
    }

    groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let first = g.iter().map(|a| a.start).min().unwrap_or(0);
            let last = g.iter().map(|a| a.end).max().unwrap_or(0);
            let start = first.saturating_sub(opts.context);
            let mut end = last + opts.context;
            if let Some(len) = video_len {
                end = end.min(len.saturating_sub(1)).max(last);
            }
            ClipManifest {
                clip_id: format!("{video_id}_clip{i:03}"),
                video_id: video_id.clone(),
                source_start: start,
                source_end: end,
                annotations: g
                    .into_iter()
                    .map(|a| IntervalAnnotation {
                        start: a.start - start,
                        end: a.end - start,
                        ..a
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Segments every video independently; output is ordered by video id.
pub fn segment_dataset(
    annotations: &[IntervalAnnotation],
    videos: &[VideoMeta],
    opts: SegmentOptions,
) -> Vec<ClipManifest> {
    let lens: HashMap<&str, u64> = videos.iter().map(|v| (v.video_id.as_str(), v.frame_count)).collect();
    let mut by_video: BTreeMap<&str, Vec<IntervalAnnotation>> = BTreeMap::new();
    for a in annotations {
        by_video.entry(a.video_id.as_str()).or_default().push(a.clone());
    }
    let per_video: Vec<Vec<ClipManifest>> = by_video
        .into_par_iter()
        .map(|(vid, anns)| segment_by_inactivity(&anns, lens.get(vid).copied(), opts))
        .collect();
    per_video.into_iter().flatten().collect()
}
