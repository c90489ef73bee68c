//! `dsta`: command-line entry point for the adapter library, the annotation
//! pipeline, the evaluator and the synthetic experiment.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use dsta_core::adapter::{count_flops, count_params};
use dsta_core::eval::{evaluate, write_report_csv, write_report_json, DEFAULT_THRESHOLDS};
use dsta_core::gradcheck::{gradcheck, Parameterized};
use dsta_core::jsonl::{read_json_records, read_jsonl, write_json, write_jsonl};
use dsta_core::pipeline::{
    compute_stats, convert_strokes, export_plot_data, segment_dataset, ClipManifest, ConvertOptions,
    SegmentOptions, StrokeEvent, VideoMeta, DEFAULT_CONTEXT, DEFAULT_FPS, DEFAULT_GAP_THRESHOLD,
    DEFAULT_WINDOW, MIN_INTERVAL_FRAMES,
};
use dsta_core::synth::{run_experiment, write_experiment, ExperimentConfig, SyntheticConfig, TrainConfig};
use dsta_core::{Adapter, AdapterConfig, Dims4, Error, IntervalAnnotation, Proposal, Tensor4, Variant};

#[derive(Debug, Parser, Serialize)]
#[command(name = "dsta", version, about = "Decoupled spatio-temporal adapters for action localization")]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Seed for every random stream; always echoed in the resolved config.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent runs and per-video work.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Convert stroke points to fixed-window intervals at the target frame rate.
    Convert(ConvertArgs),
    /// Split annotated videos into clips at long inactive gaps.
    Segment(SegmentArgs),
    /// Class frequency groups and plot data for a clip manifest.
    Stats(StatsArgs),
    /// Score predictions with mAP over tIoU thresholds.
    Eval(EvalArgs),
    /// Check analytic adapter gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Trainable parameter count of one adapter.
    CountParams(AdapterArgs),
    /// Forward FLOPs of one adapter on a (T, H, W) input.
    CountFlops(FlopArgs),
    /// Train one adapter on synthetic directional clips.
    Train(TrainArgs),
    /// Variant ladder and split-ratio sweep on synthetic directional clips.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Serialize)]
struct ConvertArgs {
    /// Stroke events, one JSON object per line: {video_id, t, label}.
    #[arg(long)]
    strokes: PathBuf,
    /// Video metadata: JSON array or lines of {video_id, fps, frame_count}.
    #[arg(long)]
    meta: PathBuf,
    /// Output intervals (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Output metadata rescaled to the target frame rate.
    #[arg(long)]
    meta_out: Option<PathBuf>,
    /// Half-width of the window placed around each stroke.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: u64,
    /// Target frame rate.
    #[arg(long, default_value_t = DEFAULT_FPS)]
    fps: f64,
    /// Intervals shorter than this many frames are dropped.
    #[arg(long, default_value_t = MIN_INTERVAL_FRAMES)]
    min_frames: u64,
}

#[derive(Debug, Args, Serialize)]
struct SegmentArgs {
    /// Interval annotations (JSON lines).
    #[arg(long)]
    intervals: PathBuf,
    /// Video metadata used to clamp clips to the video length.
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Output clip manifest (JSON array).
    #[arg(long)]
    out: PathBuf,
    /// A gap strictly longer than this many frames starts a new clip.
    #[arg(long, default_value_t = DEFAULT_GAP_THRESHOLD)]
    gap_threshold: u64,
    /// Frames of context kept on each side of a clip.
    #[arg(long, default_value_t = DEFAULT_CONTEXT)]
    context: u64,
}

#[derive(Debug, Args, Serialize)]
struct StatsArgs {
    /// Clip manifest written by `segment`.
    #[arg(long)]
    clips: PathBuf,
    /// Directory for the plot CSVs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Ground truth (JSON lines of {video_id, start, end, label}).
    #[arg(long)]
    gt: PathBuf,
    /// Predictions (JSON lines of {video_id, start, end, label, score}).
    #[arg(long)]
    pred: PathBuf,
    /// tIoU thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    thresholds: Vec<f64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Clone, Copy)]
struct AdapterArgs {
    /// External channel width C.
    #[arg(long = "C", value_name = "C")]
    channels: usize,
    /// Bottleneck width N.
    #[arg(long = "N", value_name = "N")]
    bottleneck: usize,
    /// Split ratio α.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Temporal dwconv kernel length.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Temporal dwconv groups; defaults to N (depthwise).
    #[arg(long)]
    m: Option<usize>,
    /// tia, t, th or thw.
    #[arg(long, default_value = "thw")]
    variant: Variant,
}

impl AdapterArgs {
    fn config(&self) -> AdapterConfig {
        let mut cfg = AdapterConfig::new(self.channels, self.bottleneck, self.variant).with_alpha(self.alpha);
        cfg.kernel = self.k;
        cfg.groups = self.m.unwrap_or(self.bottleneck);
        cfg
    }
}

#[derive(Debug, Args, Serialize)]
struct FlopArgs {
    #[command(flatten)]
    adapter: AdapterArgs,
    /// Frames.
    #[arg(long = "T", value_name = "T", default_value_t = 768)]
    frames: usize,
    #[arg(long = "H", value_name = "H", default_value_t = 14)]
    height: usize,
    #[arg(long = "W", value_name = "W", default_value_t = 14)]
    width: usize,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    /// Variants to check (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = Variant::ALL.to_vec())]
    variants: Vec<Variant>,
    /// Random configurations per variant.
    #[arg(long, default_value_t = 12)]
    configs: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Debug, Args, Serialize, Clone)]
struct SynthArgs {
    /// Training clips per seed.
    #[arg(long, default_value_t = 64)]
    clips: usize,
    /// Held-out evaluation clips per seed.
    #[arg(long, default_value_t = 32)]
    eval_clips: usize,
    /// Frames per clip.
    #[arg(long, default_value_t = 64)]
    frames: usize,
    /// Spatial side length.
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// Background noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    /// Focal loss focusing parameter γ.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Focal loss weight on positives.
    #[arg(long, default_value_t = 0.25)]
    focal_weight: f64,
    /// Decode threshold on per-frame probabilities.
    #[arg(long, default_value_t = 0.3)]
    threshold: f64,
    /// Runs separated by at most this many frames are merged.
    #[arg(long, default_value_t = 2)]
    merge_gap: usize,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long, default_value = "thw")]
    variant: Variant,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    synth: SynthArgs,
    /// Output directory for the checkpoint, loss curve and report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ExperimentArgs {
    #[arg(long, value_delimiter = ',', default_values_t = Variant::ALL.to_vec())]
    variants: Vec<Variant>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Split ratios for the sweep; pass `none` to skip it.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9", value_parser = parse_sweep)]
    alpha_sweep: Vec<Option<f64>>,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse_sweep(s: &str) -> Result<Option<f64>, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| format!("{s:?}: {e}"))
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn require_file(flag: &str, path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("--{flag}: {} does not exist or is not a file", path.display())))
    }
}

fn require_parent(flag: &str, path: &Path) -> CliResult {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Failure::Validation(format!(
            "--{flag}: directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn emit(json_mode: bool, value: Value, text: impl FnOnce() -> String) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
    } else {
        print!("{}", text());
    }
}

fn fmt_row(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("  ")
}

fn convert(cli: &Cli, a: &ConvertArgs) -> CliResult {
    require_file("strokes", &a.strokes)?;
    require_file("meta", &a.meta)?;
    require_parent("out", &a.out)?;
    if let Some(p) = &a.meta_out {
        require_parent("meta-out", p)?;
    }
    let strokes: Vec<StrokeEvent> = read_jsonl(&a.strokes)?;
    let meta: Vec<VideoMeta> = read_json_records(&a.meta)?;
    let opts = ConvertOptions {
        window: a.window,
        fps: a.fps,
        min_frames: a.min_frames,
    };
    let conv = convert_strokes(&strokes, &meta, opts)?;
    write_jsonl(&a.out, &conv.intervals)?;
    if let Some(p) = &a.meta_out {
        write_json(p, &conv.videos)?;
    }
    for r in &conv.rejected {
        log::warn!("stroke {} rejected: {}", r.index, r.reason);
    }
    emit(
        cli.json,
        json!({
            "intervals": conv.intervals.len(),
            "rejected": conv.rejected,
            "dropped_degenerate": conv.dropped_degenerate,
        }),
        || {
            format!(
                "intervals: {}\nrejected: {}\ndropped (shorter than {} frames): {}\n",
                conv.intervals.len(),
                conv.rejected.len(),
                a.min_frames,
                conv.dropped_degenerate
            )
        },
    );
    Ok(())
}

fn segment(cli: &Cli, a: &SegmentArgs) -> CliResult {
    require_file("intervals", &a.intervals)?;
    if let Some(m) = &a.meta {
        require_file("meta", m)?;
    }
    require_parent("out", &a.out)?;
    let anns: Vec<IntervalAnnotation> = read_jsonl(&a.intervals)?;
    let meta: Vec<VideoMeta> = match &a.meta {
        Some(m) => read_json_records(m)?,
        None => Vec::new(),
    };
    let opts = SegmentOptions {
        gap_threshold: a.gap_threshold,
        context: a.context,
    };
    let clips = segment_dataset(&anns, &meta, opts);
    write_json(&a.out, &clips)?;
    let summary: Vec<Value> = clips
        .iter()
        .map(|c| json!({"clip_id": c.clip_id, "source_start": c.source_start, "source_end": c.source_end, "annotations": c.annotations.len()}))
        .collect();
    emit(cli.json, json!({ "clips": summary }), || {
        let mut s = format!("clips: {}\n", clips.len());
        for c in &clips {
            s.push_str(&format!(
                "{}  [{}, {}]  {} annotations\n",
                c.clip_id,
                c.source_start,
                c.source_end,
                c.annotations.len()
            ));
        }
        s
    });
    Ok(())
}

fn stats(cli: &Cli, a: &StatsArgs) -> CliResult {
    require_file("clips", &a.clips)?;
    let clips: Vec<ClipManifest> = read_json_records(&a.clips)?;
    let s = compute_stats(&clips)?;
    let written = match &a.out_dir {
        Some(d) => export_plot_data(&s, d)?,
        None => Vec::new(),
    };
    emit(cli.json, json!({ "stats": s, "written": written }), || {
        let mut out = format!("annotations: {}\n", s.total_annotations());
        for (label, n) in &s.class_counts {
            out.push_str(&format!(
                "{label}: {n}  sigma {:+.3}  {}\n",
                s.class_sigma[label],
                s.class_group[label].as_str()
            ));
        }
        for w in &s.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    });
    Ok(())
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> CliResult {
    require_file("gt", &a.gt)?;
    require_file("pred", &a.pred)?;
    for (flag, p) in [("out-json", &a.out_json), ("out-csv", &a.out_csv)] {
        if let Some(p) = p {
            require_parent(flag, p)?;
        }
    }
    let gts: Vec<IntervalAnnotation> = read_jsonl(&a.gt)?;
    let preds: Vec<Proposal> = read_jsonl(&a.pred)?;
    let report = evaluate(&gts, &preds, &a.thresholds)?;
    if let Some(p) = &a.out_json {
        write_report_json(p, &report)?;
    }
    if let Some(p) = &a.out_csv {
        write_report_csv(p, &report)?;
    }
    for label in &report.missing_predictions {
        log::warn!("class {label} has ground truth but no predictions");
    }
    emit(cli.json, serde_json::to_value(&report).expect("serializable"), || {
        format!("{}\n{}\n", report.columns().join("  "), fmt_row(&report.row()))
    });
    Ok(())
}

fn gradcheck_cmd(cli: &Cli, a: &GradcheckArgs) -> CliResult {
    use rand::Rng;
    if a.configs == 0 || !(a.step > 0.0) {
        return Err(Failure::Validation("--configs and --step must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let mut results = Vec::new();
    let mut worst = 0.0f64;
    for &variant in &a.variants {
        for _ in 0..a.configs {
            let c = rng.random_range(2..=6);
            let n = rng.random_range(1..c);
            let mut cfg = AdapterConfig::new(c, n, variant).with_alpha(rng.random_range(0.0..=1.0));
            cfg.kernel = [1, 3, 5][rng.random_range(0..3)];
            let divisors: Vec<usize> = (1..=n).filter(|d| n % d == 0).collect();
            cfg.groups = divisors[rng.random_range(0..divisors.len())];
            let dims = Dims4::new(c, rng.random_range(1..=5), rng.random_range(1..=4), rng.random_range(1..=4));
            let mut adapter = Adapter::init(cfg, &mut rng)?;
            adapter.for_each_param_mut(&mut |_, p| {
                for v in &mut p.value {
                    *v = rng.random_range(-1.0..1.0);
                }
            });
            let x = Tensor4::random_normal(dims, 1.0, &mut rng);
            let w = Tensor4::random_normal(dims, 1.0, &mut rng);
            let r = gradcheck(
                &mut adapter,
                a.step,
                |m| Ok(m.forward(&x)?.dot(&w)),
                |m| {
                    let y = m.forward_train(&x)?;
                    m.backward(&w)?;
                    Ok(y.dot(&w))
                },
            )?;
            worst = worst.max(r.max_rel_error);
            results.push(json!({
                "variant": variant,
                "config": cfg,
                "dims": dims,
                "max_rel_error": r.max_rel_error,
                "worst": r.worst,
            }));
        }
    }
    let pass = worst < a.tolerance;
    emit(
        cli.json,
        json!({ "checks": results, "max_rel_error": worst, "tolerance": a.tolerance, "pass": pass }),
        || {
            format!(
                "{} configurations, max relative error {worst:.3e} (tolerance {:.0e}): {}\n",
                results.len(),
                a.tolerance,
                if pass { "pass" } else { "FAIL" }
            )
        },
    );
    if pass {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("gradient check failed: max relative error {worst:.3e}")))
    }
}

fn count_params_cmd(cli: &Cli, a: &AdapterArgs) -> CliResult {
    let pc = count_params(&a.config())?;
    emit(cli.json, serde_json::to_value(pc).expect("serializable"), || {
        format!(
            "down {}\nmid {}\ndwconv {}\nbranches {}\nup {}\nscale {}\ntotal {}\n",
            pc.down, pc.mid, pc.dwconv, pc.branches, pc.up, pc.scale, pc.total
        )
    });
    Ok(())
}

fn count_flops_cmd(cli: &Cli, a: &FlopArgs) -> CliResult {
    let fc = count_flops(&a.adapter.config(), a.frames, a.height, a.width)?;
    emit(cli.json, serde_json::to_value(fc).expect("serializable"), || {
        let mut s = String::new();
        for (name, v) in fc.components() {
            s.push_str(&format!("{name} {v}\n"));
        }
        s.push_str(&format!("total {} ({:.3} GFLOPs)\n", fc.total, fc.total as f64 * 1e-9));
        s
    });
    Ok(())
}

fn experiment_config(cli: &Cli, s: &SynthArgs) -> ExperimentConfig {
    ExperimentConfig {
        data: SyntheticConfig {
            clips: s.clips,
            frames: s.frames,
            height: s.size,
            width: s.size,
            noise: s.noise,
            ..Default::default()
        },
        eval_clips: s.eval_clips,
        train: TrainConfig {
            lr: s.lr,
            epochs: s.epochs,
            batch_size: s.batch_size,
            gamma: s.gamma,
            focal_weight: s.focal_weight,
            threshold: s.threshold,
            merge_gap: s.merge_gap,
            seed: cli.seed,
            ..Default::default()
        },
        seeds: vec![cli.seed],
        ..Default::default()
    }
}

fn summary_json(r: &dsta_core::synth::ExperimentResult) -> Value {
    json!({
        "variants": r.variant_table,
        "alpha_sweep": r.alpha_table,
        "runs": r.runs.iter().map(|run| json!({
            "variant": run.key.variant,
            "alpha": run.key.alpha,
            "seed": run.key.seed,
            "map": run.report.row(),
            "initial_loss": run.outcome.initial_loss,
            "final_loss": run.outcome.epoch_losses.last(),
        })).collect::<Vec<_>>(),
    })
}

fn table_text(columns: &[String], rows: &[dsta_core::synth::SummaryRow]) -> String {
    let mut s = format!("{:18}{}\n", "", columns.join("  "));
    for r in rows {
        let cells: Vec<String> = r.mean.iter().zip(&r.std).map(|(m, d)| format!("{m:.2}±{d:.2}")).collect();
        s.push_str(&format!("{:18}{}\n", r.label, cells.join("  ")));
    }
    s
}

fn run_and_write(cli: &Cli, cfg: &ExperimentConfig, out: &Path) -> CliResult {
    if out.exists() && !out.is_dir() {
        return Err(Failure::Validation(format!("--out: {} is not a directory", out.display())));
    }
    let start = Instant::now();
    let result = run_experiment(cfg)?;
    write_experiment(&result, out)?;
    log::info!("{} runs in {:.1}s", result.runs.len(), start.elapsed().as_secs_f64());
    let columns: Vec<String> = cfg
        .thresholds
        .iter()
        .map(|t| format!("mAP@{t}"))
        .chain(["Avg".to_owned()])
        .collect();
    emit(cli.json, summary_json(&result), || {
        let mut s = table_text(&columns, &result.variant_table);
        if !result.alpha_table.is_empty() {
            s.push_str("\nsplit ratio sweep\n");
            s.push_str(&table_text(&columns, &result.alpha_table));
        }
        s
    });
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> CliResult {
    let cfg = ExperimentConfig {
        variants: vec![a.variant],
        alpha: a.alpha,
        alpha_sweep: Vec::new(),
        ..experiment_config(cli, &a.synth)
    };
    run_and_write(cli, &cfg, &a.out)
}

fn experiment_cmd(cli: &Cli, a: &ExperimentArgs) -> CliResult {
    if a.seeds == 0 {
        return Err(Failure::Validation("--seeds must be at least 1".into()));
    }
    let sweep: Vec<f64> = a.alpha_sweep.iter().flatten().copied().collect();
    let cfg = ExperimentConfig {
        variants: a.variants.clone(),
        alpha: a.alpha,
        alpha_sweep: sweep,
        seeds: (cli.seed..cli.seed + a.seeds).collect(),
        ..experiment_config(cli, &a.synth)
    };
    run_and_write(cli, &cfg, &a.out)
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Convert(a) => convert(cli, a),
        Command::Segment(a) => segment(cli, a),
        Command::Stats(a) => stats(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Gradcheck(a) => gradcheck_cmd(cli, a),
        Command::CountParams(a) => count_params_cmd(cli, a),
        Command::CountFlops(a) => count_flops_cmd(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Experiment(a) => experiment_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(1);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(2);
    }
    eprintln!("config: {}", serde_json::to_string(&cli).expect("serializable"));

    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
