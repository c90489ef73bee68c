use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{generate_dataset, SyntheticConfig};
use super::derive_seed;
use super::model::{FrozenStem, Head, Model, ModelConfig};
use super::train::{predict_proposals, train, TrainConfig, TrainOutcome, TrainSet};
use crate::adapter::{save_checkpoint, Adapter, Variant};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, IntervalAnnotation, DEFAULT_THRESHOLDS};
use crate::tensor::io::write_param;

pub const DEFAULT_ALPHA_SWEEP: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variants: Vec<Variant>,
    pub alpha: f64,
    /// Split ratios trained with `sweep_variant`; empty disables the sweep.
    pub alpha_sweep: Vec<f64>,
    pub sweep_variant: Variant,
    pub seeds: Vec<u64>,
    /// Training data; `seed` is replaced per experiment seed.
    pub data: SyntheticConfig,
    /// Clips in the held-out evaluation set generated alongside each seed.
    pub eval_clips: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub thresholds: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            alpha: 0.5,
            alpha_sweep: DEFAULT_ALPHA_SWEEP.to_vec(),
            sweep_variant: Variant::ConvTHW,
            seeds: vec![0, 1, 2],
            data: SyntheticConfig::default(),
            eval_clips: 32,
            model: ModelConfig::default(),
            train: TrainConfig {
                lr: 1e-2,
                epochs: 100,
                ..Default::default()
            },
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub variant: Variant,
    pub alpha: f64,
    pub seed: u64,
}

impl RunKey {
    fn id(&self) -> (Variant, u64, u64) {
        (self.variant, self.alpha.to_bits(), self.seed)
    }

    /// File-name stem, e.g. `thw_a0.5_s2`.
    pub fn slug(&self) -> String {
        format!("{}_a{}_s{}", self.variant.short_name(), self.alpha, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub key: RunKey,
    pub report: EvalReport,
    pub outcome: TrainOutcome,
    pub adapter: Adapter,
    pub head: Head,
    /// Frozen stem weights this run trained against.
    pub stem_checksum: u64,
    /// Train and eval features plus targets this run saw.
    pub data_checksum: u64,
}

/// One table row: mean and sample standard deviation over seeds, in mAP
/// percent, for each threshold followed by the average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub seeds: usize,
}

impl SummaryRow {
    pub fn average(&self) -> f64 {
        *self.mean.last().expect("non-empty row")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    /// One row per variant at `config.alpha`.
    pub variant_table: Vec<SummaryRow>,
    /// One row per swept α.
    pub alpha_table: Vec<SummaryRow>,
    pub elapsed_secs: f64,
}

impl ExperimentResult {
    pub fn row(&self, variant: Variant) -> Option<&SummaryRow> {
        self.variant_table.iter().find(|r| r.label == variant.label())
    }
}

struct SeedContext {
    seed: u64,
    stem: FrozenStem,
    train: TrainSet,
    eval: TrainSet,
    eval_gts: Vec<IntervalAnnotation>,
}

fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedContext> {
    let data = generate_dataset(&SyntheticConfig {
        seed: derive_seed(seed, "data"),
        ..cfg.data
    })?;
    let held_out = generate_dataset(&SyntheticConfig {
        seed: derive_seed(seed, "eval-data"),
        clips: cfg.eval_clips,
        ..cfg.data
    })?;
    let model = ModelConfig {
        in_channels: cfg.data.channels,
        ..cfg.model
    };
    let mut stem = FrozenStem::init(&model, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "stem")))?;
    let train = TrainSet::new(&stem, &data)?;
    stem.calibrate(&train.features)?;
    Ok(SeedContext {
        seed,
        train,
        eval: TrainSet::new(&stem, &held_out)?,
        eval_gts: held_out.annotations,
        stem,
    })
}

fn run_one(cfg: &ExperimentConfig, ctx: &SeedContext, key: RunKey) -> Result<RunResult> {
    let model_cfg = ModelConfig {
        in_channels: cfg.data.channels,
        ..cfg.model
    };
    let adapter = Adapter::init(
        model_cfg.adapter(key.variant, key.alpha),
        &mut ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, "adapter")),
    )?;
    let head = Head::init(&model_cfg, &mut ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, "head")));
    let mut model = Model::new(ctx.stem.clone(), Some(adapter), head)?;
    let tcfg = TrainConfig {
        seed: derive_seed(ctx.seed, "train"),
        ..cfg.train
    };
    let outcome = train(&mut model, &ctx.train, &tcfg)?;
    let preds = predict_proposals(&model, &ctx.eval, tcfg.threshold, tcfg.merge_gap)?;
    let report = evaluate(&ctx.eval_gts, &preds, &cfg.thresholds)?;
    log::info!("{}: avg mAP {:.4}", key.slug(), report.average_map);
    Ok(RunResult {
        key,
        report,
        outcome,
        adapter: model.adapter.expect("adapter present"),
        head: model.head,
        stem_checksum: model.stem.checksum(),
        data_checksum: ctx.train.checksum() ^ ctx.eval.checksum().rotate_left(1),
    })
}

fn summarize(label: String, runs: &[&RunResult]) -> SummaryRow {
    let cols = runs[0].report.map_per_threshold.len() + 1;
    let n = runs.len() as f64;
    let mut mean = vec![0.0; cols];
    let mut std = vec![0.0; cols];
    for c in 0..cols {
        let vals: Vec<f64> = runs.iter().map(|r| 100.0 * r.report.row()[c]).collect();
        let m = vals.iter().sum::<f64>() / n;
        mean[c] = m;
        if runs.len() > 1 {
            std[c] = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        }
    }
    SummaryRow {
        label,
        mean,
        std,
        seeds: runs.len(),
    }
}

/// Trains and scores every (variant, seed) pair at `cfg.alpha`, plus every
/// swept α for `cfg.sweep_variant`. All runs of one seed share data and stem.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.variants.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("experiment needs at least one variant and one seed".into()));
    }
    let start = Instant::now();
    let contexts: Vec<SeedContext> = cfg
        .seeds
        .par_iter()
        .map(|&s| prepare_seed(cfg, s))
        .collect::<Result<_>>()?;

    let mut keys = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let main = cfg.variants.iter().map(|&v| (v, cfg.alpha));
        let sweep = cfg.alpha_sweep.iter().map(|&a| (cfg.sweep_variant, a));
        for (variant, alpha) in main.chain(sweep) {
            let key = RunKey { variant, alpha, seed };
            if seen.insert(key.id()) {
                keys.push((i, key));
            }
        }
    }
    let runs: Vec<RunResult> = keys
        .par_iter()
        .map(|&(i, key)| run_one(cfg, &contexts[i], key))
        .collect::<Result<_>>()?;

    let select = |variant: Variant, alpha: f64| -> Vec<&RunResult> {
        runs.iter()
            .filter(|r| r.key.variant == variant && r.key.alpha.to_bits() == alpha.to_bits())
            .collect()
    };
    let variant_table = cfg
        .variants
        .iter()
        .map(|&v| summarize(v.label().to_owned(), &select(v, cfg.alpha)))
        .collect();
    let alpha_table = cfg
        .alpha_sweep
        .iter()
        .map(|&a| summarize(format!("{a}"), &select(cfg.sweep_variant, a)))
        .collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        runs,
        variant_table,
        alpha_table,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

fn table_csv(first: &str, thresholds: &[f64], rows: &[SummaryRow]) -> String {
    let mut s = String::from(first);
    for t in thresholds {
        write!(s, ",mAP@{t}").unwrap();
    }
    s.push_str(",Avg\n");
    for r in rows {
        s.push_str(&r.label);
        for (m, d) in r.mean.iter().zip(&r.std) {
            write!(s, ",{m:.2}±{d:.2}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `table_iv.csv`, `table_v.csv` (when swept), `runs.csv`, per-run
/// loss curves under `loss_curves/` and checkpoints under `checkpoints/`.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    let th = &result.config.thresholds;
    let curves = dir.join("loss_curves");
    let ckpts = dir.join("checkpoints");
    for d in [dir, &curves, &ckpts] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut written = Vec::new();

    let p = dir.join("table_iv.csv");
    write_text(&p, &table_csv("adapter", th, &result.variant_table))?;
    written.push(p);
    if !result.alpha_table.is_empty() {
        let p = dir.join("table_v.csv");
        write_text(&p, &table_csv("alpha", th, &result.alpha_table))?;
        written.push(p);
    }

    let mut runs = String::from("variant,alpha,seed");
    for t in th {
        write!(runs, ",mAP@{t}").unwrap();
    }
    runs.push_str(",Avg,initial_loss,final_loss\n");
    for r in &result.runs {
        write!(runs, "{},{},{}", r.key.variant.short_name(), r.key.alpha, r.key.seed).unwrap();
        for v in r.report.row() {
            write!(runs, ",{v:.6}").unwrap();
        }
        let last = r.outcome.epoch_losses.last().copied().unwrap_or(r.outcome.initial_loss);
        writeln!(runs, ",{:.8},{:.8}", r.outcome.initial_loss, last).unwrap();

        let mut curve = String::from("epoch,loss\n");
        writeln!(curve, "0,{:.10}", r.outcome.initial_loss).unwrap();
        for (e, l) in r.outcome.epoch_losses.iter().enumerate() {
            writeln!(curve, "{},{l:.10}", e + 1).unwrap();
        }
        let p = curves.join(format!("{}.csv", r.key.slug()));
        write_text(&p, &curve)?;
        written.push(p);

        let p = ckpts.join(format!("{}.ckpt", r.key.slug()));
        save_checkpoint(&p, r.adapter.config(), &r.adapter.params)?;
        written.push(p);
        let p = ckpts.join(format!("{}_head.t4f8", r.key.slug()));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
        write_param(&mut f, &r.head.w)
            .and_then(|_| write_param(&mut f, &r.head.b))
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    let p = dir.join("runs.csv");
    write_text(&p, &runs)?;
    written.push(p);
    Ok(written)
}
