use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CSV header of one mAP row: one column per threshold plus the average.
pub const REPORT_COLUMNS: [&str; 6] = ["mAP@0.3", "mAP@0.4", "mAP@0.5", "mAP@0.6", "mAP@0.7", "Avg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// AP per threshold for every class that entered the mean.
    pub per_class_ap: BTreeMap<String, Vec<f64>>,
    pub map_per_threshold: Vec<f64>,
    pub average_map: f64,
    pub gt_count: usize,
    pub prediction_count: usize,
    /// Classes with ground truth but no predictions at all.
    pub missing_predictions: Vec<String>,
}

impl EvalReport {
    /// Column names for this report's thresholds.
    pub fn columns(&self) -> Vec<String> {
        self.thresholds
            .iter()
            .map(|t| format!("mAP@{t}"))
            .chain(std::iter::once("Avg".to_owned()))
            .collect()
    }

    /// The mAP row followed by the average.
    pub fn row(&self) -> Vec<f64> {
        let mut r = self.map_per_threshold.clone();
        r.push(self.average_map);
        r
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str("class,");
        s.push_str(&self.columns().join(","));
        s.push('\n');
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(",");
        for (label, aps) in &self.per_class_ap {
            let avg = aps.iter().sum::<f64>() / aps.len() as f64;
            let mut row = aps.clone();
            row.push(avg);
            s.push_str(&format!("{},{}\n", csv_field(label), fmt(&row)));
        }
        s.push_str(&format!("mAP,{}\n", fmt(&self.row())));
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    crate::jsonl::write_json(path, report)
}

pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(report.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
}
