//! `posedtw`: ingest keypoint JSONL, match, evaluate, benchmark and generate
//! synthetic data.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod report;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pose_dtw::cost::{measure_workload, ordering_verdict, StrategySet};
use pose_dtw::dataset::{read_records, write_jsonl, AnyRecord, NormalizedRecord};
use pose_dtw::dtw::DEFAULT_ABANDON_THRESHOLD;
use pose_dtw::keypoints::DEFAULT_CONFIDENCE_FLOOR;
use pose_dtw::retrieval::{
    build_gallery, evaluate_detailed, reference_sweep_points, run_sweep, split_by_condition, EvalOptions,
    MatchConfig, SweepGrid, DEFAULT_EPSILON,
};
use pose_dtw::synthetic::{build_benchmark, default_conditions, BenchmarkConfig};
use pose_dtw::{match_query, DtwConfig, PoseSequence, Window};

use report::*;

#[derive(Parser)]
#[command(name = "posedtw", version, about = "Constrained DTW matching of skeleton keypoint sequences")]
struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize raw 17-joint records into 12-joint body sequences.
    Ingest(IngestArgs),
    /// Rank a gallery against each query sequence.
    Match(MatchArgs),
    /// CMC and mAP over a condition split of one dataset.
    Evaluate(EvaluateArgs),
    /// Measured vs predicted DP cell counts per strategy set.
    Bench(BenchArgs),
    /// Generate a synthetic benchmark with a guaranteed separation margin.
    Synth(SynthArgs),
    /// Rank-1/Rank-5/mAP and cost over a hyperparameter grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_FLOOR)]
    confidence_floor: f64,
}

#[derive(Args, Clone)]
struct Thresholds {
    /// Warping window half-width in frames; `none` disables the band.
    #[arg(long = "w", value_name = "FRAMES", default_value = "30")]
    w: WindowArg,
    /// Window as a fraction of the longer sequence (overrides --w).
    #[arg(long, value_name = "RATIO", conflicts_with = "w")]
    window_ratio: Option<f64>,
    /// Early-abandon threshold υ; `inf` disables abandoning.
    #[arg(long, default_value_t = DEFAULT_ABANDON_THRESHOLD)]
    upsilon: f64,
    /// Per-frame LB_Kim / distance cut-off ε; `inf` disables the prefilter.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Condition tag of the query sequences.
    #[arg(long, default_value = "clothesA-RGB")]
    query_condition: String,
    /// Comma-separated gallery condition tags (default: every other tag).
    #[arg(long, value_delimiter = ',')]
    gallery_conditions: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_FLOOR)]
    confidence_floor: f64,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[command(flatten)]
    thresholds: Thresholds,
    /// Keep only the best k entries per query.
    #[arg(long)]
    top_k: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_FLOOR)]
    confidence_floor: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    thresholds: Thresholds,
    /// Score same-identity gallery entries that share the query's condition tag.
    #[arg(long)]
    keep_same_condition: bool,
    /// JSON sidecar path (default: `<dataset>.eval.json`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    thresholds: Thresholds,
    /// Strategy sets to measure, e.g. `none`, `GC`, `GC+LB+EA`; repeatable.
    /// Defaults to none, each single strategy, and all three.
    #[arg(long, value_delimiter = ';')]
    strategies: Vec<StrategySet>,
    /// Use at most this many queries.
    #[arg(long)]
    max_queries: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 41)]
    identities: usize,
    #[arg(long, default_value_t = 4)]
    conditions: usize,
    #[arg(long, default_value_t = 40)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-joint jitter σ in torso units.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Probability of a limb joint dropping below the confidence floor.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long, default_value_t = pose_dtw::keypoints::DEFAULT_FRAME_RATE)]
    frame_rate: u32,
    /// Receives `dataset.jsonl` and `manifest.json`.
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    split: SplitArgs,
    /// Window values; with --upsilons/--epsilons, sweeps their Cartesian
    /// product. Without any axis flags the reference grid is used.
    #[arg(long, value_delimiter = ',')]
    windows: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    upsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<f64>,
    #[arg(long)]
    keep_same_condition: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// `--w` value: a width in frames, or `None` for no band.
#[derive(Debug, Clone, Copy, PartialEq)]
struct WindowArg(Option<usize>);

impl std::str::FromStr for WindowArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "inf" | "unconstrained" => Ok(WindowArg(None)),
            v => v.parse().map(|w| WindowArg(Some(w))).map_err(|_| format!("expected a non-negative integer or `none`, got {s:?}")),
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(m: impl std::fmt::Display) -> Self {
        Self { code: 1, message: m.to_string() }
    }
    fn data(m: impl std::fmt::Display) -> Self {
        Self { code: 2, message: m.to_string() }
    }
    fn internal(m: impl std::fmt::Display) -> Self {
        Self { code: 3, message: m.to_string() }
    }
}

impl From<pose_dtw::Error> for Failure {
    fn from(e: pose_dtw::Error) -> Self {
        match e {
            pose_dtw::Error::InvalidConfig(_) => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let started = Instant::now();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Match(a) => cmd_match(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Bench(a) => cmd_bench(a, started),
        Command::Synth(a) => synth(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => {
            eprintln!("done in {:.2?}", started.elapsed());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_dataset(path: &Path) -> Result<Vec<(usize, AnyRecord)>, Failure> {
    read_records(open(path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Loads every record as a sequence; any bad record is a data error.
fn load_sequences(path: &Path, floor: f64) -> Result<Vec<PoseSequence>, Failure> {
    read_dataset(path)?
        .into_iter()
        .map(|(line, rec)| {
            rec.to_sequence(floor)
                .map_err(|e| Failure::data(format!("{} line {line} ({}): {e}", path.display(), rec.id())))
        })
        .collect()
}

fn write_json<T: serde::Serialize>(value: &T, output: Option<&Path>) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::internal)?;
    text.push('\n');
    match output {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(Failure::data)
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(Failure::data)
        }
    }
}

fn check_floor(floor: f64) -> Outcome {
    if (0.0..=1.0).contains(&floor) {
        Ok(())
    } else {
        Err(Failure::usage(format!("--confidence-floor must be in [0, 1], got {floor}")))
    }
}

impl Thresholds {
    fn config(&self) -> Result<MatchConfig, Failure> {
        let window = match (self.window_ratio, self.w.0) {
            (Some(r), _) => Window::Ratio(r),
            (None, Some(w)) => Window::Absolute(w),
            (None, None) => Window::Unconstrained,
        };
        let cfg = MatchConfig { dtw: DtwConfig { window, abandon_threshold: self.upsilon }, epsilon: self.epsilon };
        cfg.validate()?;
        if cfg.epsilon == 0.0 {
            eprintln!("warning: --epsilon 0 filters every candidate; all distances will be +inf");
        }
        Ok(cfg)
    }
}

fn ingest(a: IngestArgs) -> Outcome {
    check_floor(a.confidence_floor)?;
    let records = read_dataset(&a.input)?;
    let mut out = Vec::with_capacity(records.len());
    let mut skipped = 0usize;
    for (line, rec) in &records {
        match rec.to_sequence(a.confidence_floor) {
            Ok(seq) => out.push(NormalizedRecord::from_sequence(&seq)),
            Err(e) => {
                skipped += 1;
                eprintln!("line {line}: skipped {:?}: {e}", rec.id());
            }
        }
    }
    write_jsonl(create(&a.output)?, &out).map_err(Failure::data)?;
    eprintln!("ingested {} records, skipped {skipped}", out.len());
    Ok(())
}

fn cmd_match(a: MatchArgs) -> Outcome {
    check_floor(a.confidence_floor)?;
    let cfg = a.thresholds.config()?;
    let queries = load_sequences(&a.query, a.confidence_floor)?;
    let gallery = build_gallery(load_sequences(&a.gallery, a.confidence_floor)?)?;
    let mut results = queries.iter().map(|q| match_query(q, &gallery, &cfg)).collect::<Result<Vec<_>, _>>()?;
    if let Some(k) = a.top_k {
        for r in &mut results {
            r.entries.truncate(k);
        }
    }
    let report = MatchReport { schema_version: SCHEMA_VERSION, command: "match", config: ConfigEcho::from(&cfg), results };
    write_json(&report, a.output.as_deref())
}

fn split(s: &SplitArgs) -> Result<(Vec<PoseSequence>, Vec<PoseSequence>), Failure> {
    check_floor(s.confidence_floor)?;
    let seqs = load_sequences(&s.dataset, s.confidence_floor)?;
    Ok(split_by_condition(&seqs, &s.query_condition, &s.gallery_conditions)?)
}

fn cmd_evaluate(a: EvaluateArgs) -> Outcome {
    let cfg = a.thresholds.config()?;
    let (queries, gallery) = split(&a.split)?;
    let gallery = build_gallery(gallery)?;
    let opts = EvalOptions { exclude_same_condition: !a.keep_same_condition };
    let (report, _, stats) = evaluate_detailed(&queries, &gallery, &cfg, &opts)?;
    for (k, v) in &report.rank_k {
        println!("Rank-{k}: {:.4}", v);
    }
    println!("mAP: {:.4}", report.map);
    let sidecar = a.report.unwrap_or_else(|| {
        let mut p = a.split.dataset.clone().into_os_string();
        p.push(".eval.json");
        p.into()
    });
    let out = EvalOutput {
        schema_version: SCHEMA_VERSION,
        command: "evaluate",
        config: ConfigEcho::from(&cfg),
        query_condition: a.split.query_condition.clone(),
        gallery_conditions: a.split.gallery_conditions.clone(),
        exclude_same_condition: opts.exclude_same_condition,
        report,
        stats,
    };
    write_json(&out, Some(&sidecar))?;
    eprintln!("report written to {}", sidecar.display());
    Ok(())
}

fn cmd_bench(a: BenchArgs, started: Instant) -> Outcome {
    let params = a.thresholds.config()?;
    let (mut queries, gallery) = split(&a.split)?;
    if let Some(k) = a.max_queries {
        queries.truncate(k.max(1));
    }
    let gallery = build_gallery(gallery)?;
    let sets = if a.strategies.is_empty() { StrategySet::canonical().to_vec() } else { a.strategies.clone() };

    let mut reports = Vec::with_capacity(sets.len());
    let mut measured = BTreeMap::new();
    for set in sets {
        let t = Instant::now();
        let r = measure_workload(&queries, &gallery, &params, set)?;
        eprintln!(
            "{:<10} measured {:>12}  predicted {:>14.1}  ({:.2?})",
            set.to_string(),
            r.measured_cells,
            r.predicted[&set.to_string()],
            t.elapsed()
        );
        measured.insert(set, r.measured_cells);
        reports.push(r);
    }
    let ordering = ordering_verdict(&measured);
    match &ordering {
        Some(v) => eprintln!("ordering combined <= singles <= baseline: {}", if v.holds { "holds" } else { "VIOLATED" }),
        None => eprintln!("ordering: not evaluated (needs none, GC, LB, EA and GC+LB+EA)"),
    }
    eprintln!("bench wall-clock {:.2?}", started.elapsed());
    let out = BenchOutput { schema_version: SCHEMA_VERSION, command: "bench", config: ConfigEcho::from(&params), reports, ordering };
    write_json(&out, a.output.as_deref())
}

fn synth(a: SynthArgs) -> Outcome {
    if a.conditions == 0 || a.identities == 0 || a.frames == 0 || a.frame_rate == 0 {
        return Err(Failure::usage("--identities, --conditions, --frames and --frame-rate must be positive"));
    }
    let mut cfg = BenchmarkConfig::new(a.identities, default_conditions(a.conditions, a.noise, a.dropout), a.frames, a.seed);
    cfg.frame_rate = a.frame_rate;
    let bench = build_benchmark(&cfg)?;
    std::fs::create_dir_all(&a.output_dir).map_err(|e| Failure::data(format!("{}: {e}", a.output_dir.display())))?;
    write_jsonl(create(&a.output_dir.join("dataset.jsonl"))?, &bench.records).map_err(Failure::data)?;
    write_json(&bench.manifest, Some(&a.output_dir.join("manifest.json")))?;
    eprintln!(
        "{} sequences, delta_sep {:.4}, intra_max {:.4}, inter_min {:.4}",
        bench.records.len(),
        bench.manifest.delta_sep,
        bench.manifest.intra_max,
        bench.manifest.inter_min
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Outcome {
    let points = if a.windows.is_empty() && a.upsilons.is_empty() && a.epsilons.is_empty() {
        reference_sweep_points()
    } else {
        SweepGrid { windows: a.windows.clone(), abandon_thresholds: a.upsilons.clone(), epsilons: a.epsilons.clone() }
            .cartesian_points()
    };
    for p in &points {
        p.config().validate()?;
    }
    let (queries, gallery) = split(&a.split)?;
    let gallery = build_gallery(gallery)?;
    let opts = EvalOptions { exclude_same_condition: !a.keep_same_condition };
    let rows = run_sweep(&points, &queries, &gallery, &opts)?;
    let out = SweepOutput { schema_version: SCHEMA_VERSION, command: "sweep", rows };
    write_json(&out, a.output.as_deref())
}
