use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ClipManifest;
use crate::error::{Error, Result};

/// Frequency band of a class by its standardized instance count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyGroup {
    High,
    Intermediate,
    Low,
    Rare,
}

impl FrequencyGroup {
    /// `σ ≥ 0.7` high, `[0, 0.7)` intermediate, `[-0.7, 0)` low, `< -0.7` rare.
    pub fn classify(sigma: f64) -> Self {
        if sigma >= 0.7 {
            FrequencyGroup::High
        } else if sigma >= 0.0 {
            FrequencyGroup::Intermediate
        } else if sigma >= -0.7 {
            FrequencyGroup::Low
        } else {
            FrequencyGroup::Rare
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyGroup::High => "high",
            FrequencyGroup::Intermediate => "intermediate",
            FrequencyGroup::Low => "low",
            FrequencyGroup::Rare => "rare",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub class_counts: BTreeMap<String, usize>,
    pub class_sigma: BTreeMap<String, f64>,
    pub class_group: BTreeMap<String, FrequencyGroup>,
    /// Inclusive annotation length in frames -> number of annotations.
    pub duration_histogram: BTreeMap<u64, usize>,
    /// Annotations per clip -> number of clips.
    pub labels_per_clip: BTreeMap<usize, usize>,
    pub warnings: Vec<String>,
}

impl DatasetStats {
    pub fn total_annotations(&self) -> usize {
        self.class_counts.values().sum()
    }
}

pub fn compute_stats(clips: &[ClipManifest]) -> Result<DatasetStats> {
    let mut s = DatasetStats::default();
    for clip in clips {
        *s.labels_per_clip.entry(clip.annotations.len()).or_default() += 1;
        for a in &clip.annotations {
            *s.class_counts.entry(a.label.clone()).or_default() += 1;
            *s.duration_histogram.entry(a.frames()).or_default() += 1;
        }
    }
    if s.class_counts.is_empty() {
        return Err(Error::Config("dataset has no annotations".into()));
    }
    let k = s.class_counts.len() as f64;
    let mean = s.class_counts.values().sum::<usize>() as f64 / k;
    let var = s
        .class_counts
        .values()
        .map(|&c| (c as f64 - mean).powi(2))
        .sum::<f64>()
        / k;
    let std = var.sqrt();
    if std == 0.0 {
        let msg = "class counts have zero spread; every class is grouped as intermediate".to_owned();
        log::warn!("{msg}");
        s.warnings.push(msg);
    }
    for (label, &count) in &s.class_counts {
        let sigma = if std == 0.0 { 0.0 } else { (count as f64 - mean) / std };
        s.class_sigma.insert(label.clone(), sigma);
        s.class_group.insert(label.clone(), FrequencyGroup::classify(sigma));
    }
    Ok(s)
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    w.write_record(header).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `durations.csv`, `labels_per_clip.csv` and `class_counts.csv` into `dir`.
pub fn export_plot_data(stats: &DatasetStats, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let durations = dir.join("durations.csv");
    write_csv(
        &durations,
        &["duration_frames", "count"],
        stats
            .duration_histogram
            .iter()
            .map(|(d, n)| vec![d.to_string(), n.to_string()])
            .collect(),
    )?;
    let per_clip = dir.join("labels_per_clip.csv");
    write_csv(
        &per_clip,
        &["labels", "clips"],
        stats
            .labels_per_clip
            .iter()
            .map(|(l, n)| vec![l.to_string(), n.to_string()])
            .collect(),
    )?;
    let classes = dir.join("class_counts.csv");
    write_csv(
        &classes,
        &["label", "count", "sigma", "group"],
        stats
            .class_counts
            .iter()
            .map(|(label, n)| {
                vec![
                    label.clone(),
                    n.to_string(),
                    format!("{:.6}", stats.class_sigma.get(label).copied().unwrap_or(0.0)),
                    stats
                        .class_group
                        .get(label)
                        .map(|g| g.as_str())
                        .unwrap_or("")
                        .to_owned(),
                ]
            })
            .collect(),
    )?;
    Ok(vec![durations, per_clip, classes])
}
