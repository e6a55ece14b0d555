//! `geotrack`: track, evaluate, sweep, simulate and benchmark from the command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! unreadable or malformed data.

mod options;

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use geotrack::metrics::{evaluate, EvalReport};
use geotrack::mot_io::{
    format_results, format_seqinfo, parse_detections, parse_seqinfo, pedestrian_ground_truth, write_records,
    FrameMap, SequenceInfo,
};
use geotrack::pipeline::{evaluate_point, format_sweep_csv, run_sequence, summarize, sweep_grid, SweepSequence};
use geotrack::scenario::{generate, ScenarioSpec};
use rayon::prelude::*;

use options::{parse_values, TrackerFlags};

/// Bad invocation or configuration; exits with code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "geotrack", version, about = "Geometry-only multi-object tracker")]
struct Cli {
    /// Worker threads for sequence-level parallelism (default: all cores).
    #[arg(long, global = true, env = "GEOTRACK_THREADS")]
    threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track sequences and write MOTChallenge result files.
    Track {
        #[command(flatten)]
        tracker: TrackerFlags,
        /// Directory for `<sequence>.txt` result files.
        #[arg(short, long)]
        output: PathBuf,
        /// Also write per-frame box annotations (`<sequence>.csv`) here.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Sequence directories (det/det.txt, optional seqinfo.ini) or detection files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Score result files against ground truth.
    Eval {
        /// Ground-truth file or sequence directory; repeat for several sequences.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        /// Result file, paired with --gt in order.
        #[arg(long, required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        /// Score every ground-truth row instead of pedestrians only.
        #[arg(long)]
        all_classes: bool,
    },
    /// Evaluate a grid of confidence thresholds.
    Sweep {
        #[command(flatten)]
        tracker: TrackerFlags,
        /// conf_object values: `a,b,c` or `start:stop:step`.
        #[arg(long, default_value = "0.55:0.95:0.1")]
        co: String,
        /// conf_target values: `a,b,c` or `start:stop:step`.
        #[arg(long, default_value = "0.15:0.55:0.1")]
        ct: String,
        #[arg(long, default_value_t = 0.5)]
        iou_threshold: f64,
        /// CSV destination (default: stdout).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Sequence directories with det/det.txt and gt/gt.txt.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Render a synthetic scenario as a sequence directory.
    Simulate {
        /// Scenario TOML file.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output sequence directory.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Measure tracker throughput, excluding file I/O.
    Bench {
        #[command(flatten)]
        tracker: TrackerFlags,
        #[arg(long, default_value_t = 1000)]
        frames: u64,
        /// Objects per frame in the synthetic stream (rounded up to a grid of 5 columns).
        #[arg(long, default_value_t = 50)]
        objects: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Benchmark these sequences instead of a synthetic stream.
        inputs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Table,
    Kv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Crossing,
    Lanes,
    Grid,
}

struct Sequence {
    name: String,
    detections: FrameMap<f64>,
    ground_truth: Option<FrameMap<f64>>,
    frame_count: u64,
}

fn read_records(path: &Path) -> anyhow::Result<FrameMap<f64>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let parsed = parse_detections::<f64, _>(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
    if parsed.rejected > 0 {
        log::warn!("{}: skipped {} rows with nonpositive size", path.display(), parsed.rejected);
    }
    Ok(parsed.frames)
}

fn ground_truth_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("gt").join("gt.txt")
    } else {
        path.to_path_buf()
    }
}

fn load_sequence(path: &Path) -> anyhow::Result<Sequence> {
    if !path.is_dir() {
        let detections = read_records(path)?;
        let name = path.file_stem().map_or_else(|| "sequence".into(), |s| s.to_string_lossy().into_owned());
        let frame_count = detections.keys().next_back().copied().unwrap_or(0);
        return Ok(Sequence { name, detections, ground_truth: None, frame_count });
    }
    let detections = read_records(&path.join("det").join("det.txt"))?;
    let gt_path = path.join("gt").join("gt.txt");
    let ground_truth = if gt_path.is_file() { Some(read_records(&gt_path)?) } else { None };
    let info_path = path.join("seqinfo.ini");
    let info = if info_path.is_file() {
        let text = fs::read_to_string(&info_path)?;
        Some(parse_seqinfo(&text).with_context(|| format!("parsing {}", info_path.display()))?)
    } else {
        None
    };
    let last = detections.keys().chain(ground_truth.iter().flat_map(|g| g.keys())).max().copied().unwrap_or(0);
    let name = match &info {
        Some(i) if !i.name.is_empty() => i.name.clone(),
        _ => path.file_name().map_or_else(|| "sequence".into(), |s| s.to_string_lossy().into_owned()),
    };
    Ok(Sequence { name, detections, ground_truth, frame_count: info.map_or(last, |i| i.frame_count.max(last)) })
}

fn load_all(inputs: &[PathBuf]) -> anyhow::Result<Vec<Sequence>> {
    inputs.par_iter().map(|p| load_sequence(p)).collect()
}

fn overlay_csv(name: &str, outputs: &[geotrack::FrameOutput]) -> String {
    let mut out = String::from("sequence,frame,id,left,top,width,height,state\n");
    for o in outputs {
        let mut rows: Vec<(u64, &geotrack::BBox, &str)> = o.occluded.iter().map(|(id, b)| (*id, b, "occluded")).collect();
        for (id, b) in &o.emitted {
            if !o.occluded.iter().any(|(oid, _)| oid == id) {
                rows.push((*id, b, "active"));
            }
        }
        rows.sort_by_key(|r| r.0);
        for (id, b, state) in rows {
            let [l, t, w, h] = b.to_ltwh();
            out.push_str(&format!("{name},{},{id},{l:.2},{t:.2},{w:.2},{h:.2},{state}\n", o.frame));
        }
    }
    out
}

fn cmd_track(tracker: &TrackerFlags, output: &Path, overlay: Option<&Path>, inputs: &[PathBuf]) -> anyhow::Result<()> {
    let cfg = tracker.resolve()?;
    let sequences = load_all(inputs)?;
    let mut names: Vec<&str> = sequences.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(UsageError("two inputs resolve to the same sequence name".into()).into());
    }
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    if let Some(dir) = overlay {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let runs: Vec<_> = sequences
        .par_iter()
        .map(|s| {
            let wall = Instant::now();
            let run = run_sequence(&cfg, &s.detections, s.frame_count)?;
            Ok((s, run, wall.elapsed()))
        })
        .collect::<anyhow::Result<_>>()?;
    for (seq, run, wall) in &runs {
        let path = output.join(format!("{}.txt", seq.name));
        fs::write(&path, format_results(&run.outputs)).with_context(|| format!("writing {}", path.display()))?;
        if let Some(dir) = overlay {
            fs::write(dir.join(format!("{}.csv", seq.name)), overlay_csv(&seq.name, &run.outputs))?;
        }
        let ids: std::collections::BTreeSet<u64> = run.outputs.iter().flat_map(|o| o.emitted.iter().map(|e| e.0)).collect();
        println!(
            "{}: frames={} tracks={} core_fps={:.1} wall_ms={:.1}",
            seq.name,
            run.frames(),
            ids.len(),
            run.frames_per_second(),
            wall.as_secs_f64() * 1e3
        );
    }
    Ok(())
}

fn cmd_eval(gt: &[PathBuf], results: &[PathBuf], iou_threshold: f64, format: ReportFormat, all_classes: bool) -> anyhow::Result<()> {
    if gt.len() != results.len() {
        return Err(UsageError(format!("{} --gt paths but {} --results paths", gt.len(), results.len())).into());
    }
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(UsageError(format!("--iou-threshold {iou_threshold} outside (0, 1]")).into());
    }
    let reports: Vec<EvalReport<f64>> = gt
        .par_iter()
        .zip(results)
        .map(|(g, r)| {
            let truth = read_records(&ground_truth_path(g))?;
            let truth = if all_classes { truth } else { pedestrian_ground_truth(&truth) };
            let hyp = read_records(r)?;
            Ok(evaluate(&truth, &hyp, iou_threshold)?)
        })
        .collect::<anyhow::Result<_>>()?;
    let report = EvalReport::combine(&reports);
    match format {
        ReportFormat::Table => print!("{}", report.render_table()),
        ReportFormat::Kv => print!("{}", report.render_key_values()),
    }
    Ok(())
}

fn cmd_sweep(
    tracker: &TrackerFlags,
    co: &str,
    ct: &str,
    iou_threshold: f64,
    output: Option<&Path>,
    inputs: &[PathBuf],
) -> anyhow::Result<()> {
    let base = tracker.resolve()?;
    let (co, ct) = (parse_values(co)?, parse_values(ct)?);
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(UsageError(format!("--iou-threshold {iou_threshold} outside (0, 1]")).into());
    }
    let sequences: Vec<SweepSequence<f64>> = load_all(inputs)?
        .into_iter()
        .map(|s| match s.ground_truth {
            Some(gt) => Ok(SweepSequence {
                name: s.name,
                detections: s.detections,
                ground_truth: pedestrian_ground_truth(&gt),
                frame_count: s.frame_count,
            }),
            None => bail!("sequence {} has no gt/gt.txt", s.name),
        })
        .collect::<anyhow::Result<_>>()?;
    let grid = sweep_grid(&base, &co, &ct);
    let points = grid
        .par_iter()
        .map(|cfg| evaluate_point(cfg, &sequences, iou_threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let csv = format_sweep_csv(&points);
    match output {
        Some(path) => fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    if let Some(s) = summarize(&points) {
        eprintln!(
            "grid {}x{}: mota {:.4}..{:.4} ids {}..{} fm {}..{}",
            co.len(),
            ct.len(),
            s.mota.0,
            s.mota.1,
            s.id_switches.0,
            s.id_switches.1,
            s.fragmentations.0,
            s.fragmentations.1
        );
    }
    Ok(())
}

fn cmd_simulate(spec: Option<&Path>, preset: Option<Preset>, seed: Option<u64>, out: &Path) -> anyhow::Result<()> {
    let mut scenario = match (spec, preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<ScenarioSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(Preset::Crossing)) => ScenarioSpec::crossing(),
        (None, Some(Preset::Lanes)) => ScenarioSpec::lanes(seed.unwrap_or(1), 6, 150),
        (None, Some(Preset::Grid)) => ScenarioSpec::grid(seed.unwrap_or(7), 10, 5, 1000),
        (None, None) => return Err(UsageError("give --spec or --preset".into()).into()),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let generated = generate::<f64>(&scenario)?;
    for sub in ["det", "gt"] {
        fs::create_dir_all(out.join(sub)).with_context(|| format!("creating {}", out.join(sub).display()))?;
    }
    let write = |path: PathBuf, records: &FrameMap<f64>| -> anyhow::Result<()> {
        let mut buf = Vec::new();
        write_records(records, &mut buf)?;
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))
    };
    write(out.join("det").join("det.txt"), &generated.detections)?;
    write(out.join("gt").join("gt.txt"), &generated.ground_truth)?;
    let info: SequenceInfo = generated.info;
    fs::write(out.join("seqinfo.ini"), format_seqinfo(&info))?;
    let hidden: usize = generated.hidden.iter().map(Vec::len).sum();
    println!(
        "{}: frames={} actors={} detections={} hidden_actor_frames={hidden}",
        info.name,
        info.frame_count,
        scenario.actors.len(),
        generated.detections.values().map(Vec::len).sum::<usize>()
    );
    Ok(())
}

fn cmd_bench(tracker: &TrackerFlags, frames: u64, objects: usize, seed: u64, inputs: &[PathBuf]) -> anyhow::Result<()> {
    let cfg = tracker.resolve()?;
    let sequences = if inputs.is_empty() {
        if frames < 2 || objects == 0 {
            return Err(UsageError("--frames must be >= 2 and --objects >= 1".into()).into());
        }
        let spec = ScenarioSpec::grid(seed, objects.div_ceil(5), 5, frames);
        let s = generate::<f64>(&spec)?;
        vec![Sequence { name: "synthetic".into(), detections: s.detections, ground_truth: None, frame_count: frames }]
    } else {
        load_all(inputs)?
    };
    // timed one after another so each measurement is single-threaded
    let wall = Instant::now();
    let mut total_frames = 0;
    let mut core = 0.0;
    let mut detections = 0;
    for s in &sequences {
        let run = run_sequence(&cfg, &s.detections, s.frame_count)?;
        total_frames += run.frames();
        core += run.core_time.as_secs_f64();
        detections += s.detections.values().map(Vec::len).sum::<usize>();
    }
    let wall = wall.elapsed().as_secs_f64();
    println!("sequences={}", sequences.len());
    println!("frames={total_frames}");
    println!("detections={detections}");
    println!("core_seconds={core:.4}");
    println!("core_fps={:.1}", total_frames as f64 / core.max(1e-12));
    println!("wall_seconds={wall:.4}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Track { tracker, output, overlay, inputs } => cmd_track(tracker, output, overlay.as_deref(), inputs),
        Command::Eval { gt, results, iou_threshold, format, all_classes } => {
            cmd_eval(gt, results, *iou_threshold, *format, *all_classes)
        }
        Command::Sweep { tracker, co, ct, iou_threshold, output, inputs } => {
            cmd_sweep(tracker, co, ct, *iou_threshold, output.as_deref(), inputs)
        }
        Command::Simulate { spec, preset, seed, out } => cmd_simulate(spec.as_deref(), *preset, *seed, out),
        Command::Bench { tracker, frames, objects, seed, inputs } => cmd_bench(tracker, *frames, *objects, *seed, inputs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
