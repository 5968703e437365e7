//! `pointtrack`: simulate detections, track them, evaluate and ablate.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors. Output files are written to a temporary file next to
//! the target and renamed into place only once everything has succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pointtrack_core::association::TrackingMode;
use pointtrack_core::experiment::{evaluate, run_ablation, simulate, EvalSummary, Grid};
use pointtrack_core::io::{
    ablation_csv, apply_offsets, parse_offsets, render_records, report_csv, report_table, resolve_seed,
    run_tracker, sequence_records, EvalConfig, MotFile, MotRecord, RunConfig, SEED_ENV,
};
use pointtrack_core::metrics::{AmotaConfig, TpCriterion};
use pointtrack_core::Error;

#[derive(Parser)]
#[command(name = "pointtrack", version, about = "Point-based multi-object tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track detections from a MOTChallenge file.
    Track(TrackArgs),
    /// Generate a synthetic world and corrupted detections.
    Simulate(SimulateArgs),
    /// Score predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Simulate, track and evaluate every cell of a parameter grid.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    detections: PathBuf,
    /// Public detections; tracks may only start next to one of these boxes.
    #[arg(long)]
    public: Option<PathBuf>,
    /// External offsets as `frame,det_index,off_x,off_y` lines.
    #[arg(long)]
    offsets: Option<PathBuf>,
    /// Defaults to `output.tracks` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_gt: Option<PathBuf>,
    #[arg(long)]
    out_det: Option<PathBuf>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// `iou:<threshold>` or `dist3d:<meters>`.
    #[arg(long, default_value = "iou:0.5")]
    criterion: String,
    /// Also compute AMOTA; `n=40,alpha=0.2` style, bare flag for defaults.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    amota: Option<String>,
    /// CSV report destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    /// `axis=v1,v2,...`; repeat for a cross product.
    #[arg(long)]
    grid: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Track(a) => track(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Config file plus seed overrides; any problem here is a usage error.
fn load_config(path: &Path, seed: Option<u64>) -> CliResult<RunConfig> {
    let cfg = RunConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(seed, env.as_deref(), cfg.seed).map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = cfg.with_seed(seed);
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn out_path(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Failure::Usage(format!("no output path: pass --{name} or set it in the config")))
}

fn read_mot(path: &Path) -> CliResult<MotFile> {
    let f = MotFile::read(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    for w in &f.warnings {
        eprintln!("warning: {w}");
    }
    Ok(f)
}

/// Writes every file to a sibling temporary first, then renames them all.
fn write_all(files: &[(&Path, String)]) -> CliResult<()> {
    let io = |p: &Path, e: std::io::Error| Failure::Runtime(format!("{}: {e}", p.display()));
    let mut staged = Vec::with_capacity(files.len());
    for (path, text) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(path, e))?;
        tmp.write_all(text.as_bytes()).map_err(|e| io(path, e))?;
        tmp.as_file().sync_all().map_err(|e| io(path, e))?;
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| io(path, e.error))?;
    }
    Ok(())
}

fn track(a: TrackArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.config, a.seed)?;
    let out = out_path(a.out, &cfg.output.tracks, "out")?;
    let file = read_mot(&a.detections)?;
    let mut dets = file.detections()?;
    if let Some(p) = &a.offsets {
        let text = std::fs::read_to_string(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
        let missing = apply_offsets(&mut dets, &parse_offsets(&text, &p.display().to_string())?);
        if missing > 0 {
            eprintln!("warning: {missing} detections have no external offset and use zero");
        }
    }
    let public = match &a.public {
        Some(p) => {
            cfg.tracker.mode = TrackingMode::Public;
            Some(read_mot(p)?.boxes()?)
        }
        None => {
            cfg.tracker.mode = TrackingMode::Private;
            None
        }
    };
    let last = file.last_frame().unwrap_or(0);
    let n_dets: usize = dets.values().map(Vec::len).sum();
    let start = Instant::now();
    let records = run_tracker(&dets, public.as_ref(), last, &cfg.tracker)?;
    let secs = start.elapsed().as_secs_f64();
    eprintln!(
        "{}: {last} frames, {n_dets} detections, association {:.3} ms ({:.0} detections/s)",
        a.detections.display(),
        secs * 1e3,
        if secs > 0.0 { n_dets as f64 / secs } else { f64::INFINITY }
    );
    write_all(&[(&out, render_records(&records))])
}

fn simulate_cmd(a: SimulateArgs) -> CliResult<()> {
    let mut cfg = load_config(&a.config, a.seed)?;
    if let Some(s) = a.stride {
        cfg.stride = s;
        cfg.validate()?;
    }
    let out_gt = out_path(a.out_gt, &cfg.output.gt, "out-gt")?;
    let out_det = out_path(a.out_det, &cfg.output.detections, "out-det")?;
    let sim = simulate(&cfg)?;
    let det_records: Vec<MotRecord> = sim
        .detections
        .iter()
        .flat_map(|(f, list)| list.iter().map(move |d| MotRecord::from_detection(*f, &d.detection)))
        .collect();
    write_all(&[
        (&out_gt, render_records(&sequence_records(&sim.gt))),
        (&out_det, render_records(&det_records)),
    ])
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let criterion: TpCriterion = a.criterion.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let amota = a
        .amota
        .as_deref()
        .map(str::parse::<AmotaConfig>)
        .transpose()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let gt_file = read_mot(&a.gt)?;
    let pred_file = read_mot(&a.pred)?;
    // Both sides cover frames 1..=last, so frames without rows count as empty.
    let last = gt_file.last_frame().max(pred_file.last_frame()).unwrap_or(0);
    let gt = gt_file.sequence(Some(last), (0.0, 0.0), 0.0)?;
    let pred = pred_file.sequence(Some(last), (0.0, 0.0), 0.0)?;
    let summary: EvalSummary = evaluate(&gt, &pred, &EvalConfig { criterion, amota })?;
    print!("{}", report_table(&summary, criterion));
    if let Some(out) = &a.out {
        write_all(&[(out, report_csv(&summary))])?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> CliResult<()> {
    let cfg = load_config(&a.config, a.seed)?;
    let out = out_path(a.out, &cfg.output.report, "out")?;
    let mut grid = Grid::default();
    for spec in &a.grid {
        grid.push_spec(spec)?;
    }
    let rows = run_ablation(&cfg, &grid)?;
    let axes: Vec<String> = grid.axes.iter().map(|(n, _)| n.clone()).collect();
    eprintln!("{} cells", rows.len());
    write_all(&[(&out, ablation_csv(&axes, &rows))])
}
