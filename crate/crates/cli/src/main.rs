//! Command-line front end: generate synthetic sequences, track, evaluate and benchmark.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ringtrack::bench::{bench_memory, bench_stream, compare_cache, DEFAULT_WARMUP};
use ringtrack::config::Settings;
use ringtrack::ema::InitMode;
use ringtrack::io;
use ringtrack::metrics::{evaluate, rescale_tracks, PointRecord};
use ringtrack::model::Backend;
use ringtrack::synth::{generate, MotionConfig, DEFAULT_POINT_MARGIN};
use ringtrack::tracker::{run_reference, QueryPoint, ReferenceTracker, StreamingTracker, TrackerConfig};
use ringtrack::Frame;

#[derive(Parser)]
#[command(
    name = "ringtrack",
    version,
    about = "Streaming point tracking with a temporal feature cache"
)]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the synthetic-data seed (synth, bench) or the model seed (track).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    output: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground truth and frame-0 queries.
    Synth(SynthArgs),
    /// Track queries through a frame sequence.
    Track(TrackArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Time cached against uncached tracking and report buffer memory.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    /// Add the default moving occluder.
    #[arg(long)]
    occluder: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Stream,
    Reference,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Analytic,
    Learned,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Analytic => Backend::Analytic,
            BackendArg::Learned => Backend::Learned,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Ema,
    Previous,
}

#[derive(Args)]
struct TrackArgs {
    /// Directory of frame_NNNNNN.pgm/ppm files.
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum, default_value = "stream")]
    mode: Mode,
    /// Reference mode window length; defaults to the config's window.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Refinement passes per frame.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Resolution the predictions were made at; defaults to the predictions header.
    #[arg(long, value_parser = parse_size)]
    infer_size: Option<(usize, usize)>,
    /// Resolution for all metrics; by default delta uses the ground-truth
    /// resolution and Average Jaccard the configured size.
    #[arg(long, value_parser = parse_size)]
    eval_size: Option<(usize, usize)>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 1024)]
    points: usize,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: usize,
    /// Stream rate in Hz, for the accumulation delay of `--stride`.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Time only the recomputing tracker.
    #[arg(long)]
    no_cache: bool,
    /// Benchmark on an existing sequence instead of a generated one.
    #[arg(long)]
    sequence: Option<PathBuf>,
    /// Write per-frame latencies (one ms value per line) into the output directory.
    #[arg(long)]
    trace: bool,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WxH")?;
    let w: usize = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("size must be positive".into());
    }
    Ok((w, h))
}

fn load_settings(path: Option<&Path>) -> Result<Settings> {
    match path {
        Some(p) => Settings::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Settings::default()),
    }
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    ensure!(path.exists(), "{what} {} does not exist", path.display());
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// The default margin, shrunk on small frames so points still spread out.
fn point_margin(motion: &MotionConfig) -> f64 {
    DEFAULT_POINT_MARGIN.min(motion.width.min(motion.height) as f64 / 4.0)
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let settings = load_settings(cli.config.as_deref())?;
    let mut motion = settings.motion;
    if let Some(seed) = cli.seed {
        motion.seed = seed;
    }
    if let Some(frames) = args.frames {
        motion.frames = frames;
    }
    if let Some(points) = args.points {
        motion.points = points;
    }
    if args.occluder && motion.occluder.is_none() {
        motion = motion.with_default_occluder();
    }
    motion.validate()?;
    let points = motion.sample_points(point_margin(&motion));
    let seq = generate(&motion, &points)?;

    let frames_dir = cli.output.join("frames");
    create_dir(&frames_dir)?;
    for frame in &seq.frames {
        io::write_frame(&frames_dir, frame)?;
    }
    let size = (motion.width, motion.height);
    let gt = ringtrack::metrics::ground_truth_records(&seq.ground_truth);
    io::write_text(&cli.output.join("gt.txt"), &io::format_ground_truth(size, &gt))?;
    let queries: Vec<QueryPoint> = points.iter().map(|p| QueryPoint::new(0, p[0], p[1])).collect();
    io::write_text(&cli.output.join("queries.txt"), &io::format_queries(size, &queries))?;
    let used = Settings {
        motion: motion.clone(),
        ..settings
    };
    io::write_text(&cli.output.join("config.txt"), &used.to_text())?;
    println!(
        "wrote {} frames of {}x{} and {} tracks to {}",
        seq.frames.len(),
        motion.width,
        motion.height,
        points.len(),
        cli.output.display()
    );
    Ok(())
}

fn tracker_config(cli: &Cli, settings: &Settings, args: &TrackArgs) -> Result<TrackerConfig> {
    let mut config = settings.tracker.clone();
    if let Some(seed) = cli.seed {
        config.model.seed = seed;
    }
    if let Some(b) = args.backend {
        config.model.backend = b.into();
    }
    if let Some(iters) = args.iters {
        config.refine_passes = iters;
    }
    if let Some(init) = args.init {
        config.init_mode = match init {
            InitArg::Ema => InitMode::Ema,
            InitArg::Previous => InitMode::Previous,
        };
    }
    if let Some(w) = args.window {
        config.window = w;
    }
    if let Some(s) = args.stride {
        config.stride = s;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_track(cli: &Cli, args: &TrackArgs) -> Result<()> {
    require_exists(&args.sequence, "sequence directory")?;
    require_exists(&args.queries, "query file")?;
    let settings = load_settings(cli.config.as_deref())?;
    let config = tracker_config(cli, &settings, args)?;
    if args.mode == Mode::Stream && args.stride.is_some_and(|s| s != 1) {
        bail!("--stride applies to reference mode only");
    }
    let frames = io::read_sequence(&args.sequence)?;
    let queries = io::read_queries(&args.queries)?;
    let (w, h) = (frames[0].width(), frames[0].height());
    ensure!(
        queries.size == (w, h),
        "{}: queries are for {}x{} but the frames are {w}x{h}",
        args.queries.display(),
        queries.size.0,
        queries.size.1
    );
    let predictions = match args.mode {
        Mode::Stream => {
            let mut tracker = StreamingTracker::new(config, w, h)?;
            tracker.add_queries(&queries.records)?;
            frames
                .iter()
                .map(|f| tracker.step(f))
                .collect::<ringtrack::Result<Vec<_>>>()?
        }
        Mode::Reference => {
            let (window, stride) = (config.window, config.stride);
            run_reference(&frames, &queries.records, &config, window, stride)?.predictions
        }
    };
    create_dir(&cli.output)?;
    let path = cli.output.join("predictions.txt");
    let records = io::prediction_records(&predictions);
    io::write_text(&path, &io::format_predictions((w, h), &records))?;
    println!(
        "wrote {} records for {} frames to {}",
        records.len(),
        frames.len(),
        path.display()
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    require_exists(&args.predictions, "prediction file")?;
    require_exists(&args.gt, "ground-truth file")?;
    let settings = load_settings(cli.config.as_deref())?;
    let preds = io::read_predictions(&args.predictions)?;
    let gt = io::read_ground_truth(&args.gt)?;
    let infer_size = args.infer_size.unwrap_or(preds.size);
    let points: Vec<PointRecord> = preds.records.iter().map(|r| r.point()).collect();
    // bring predictions onto the ground-truth grid first
    let points = rescale_tracks(&points, infer_size, gt.size)?;
    let mut eval = settings.eval;
    if let Some(size) = args.eval_size {
        eval.aj_size = size;
        eval.delta_size = Some(size);
    }
    let report = evaluate(&points, &gt.records, gt.size, &eval).with_context(|| {
        format!(
            "evaluating {} against {}",
            args.predictions.display(),
            args.gt.display()
        )
    })?;
    print!("{report}");
    Ok(())
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let settings = load_settings(cli.config.as_deref())?;
    let config = settings.tracker.clone();
    let (frames, points): (Vec<Frame>, Vec<[f64; 2]>) = match &args.sequence {
        Some(dir) => {
            require_exists(dir, "sequence directory")?;
            let frames: Vec<Frame> = io::read_sequence(dir)?.into_iter().take(args.frames).collect();
            let mut motion = settings.motion.clone();
            motion.width = frames[0].width();
            motion.height = frames[0].height();
            motion.points = args.points;
            (frames, motion.sample_points(point_margin(&motion)))
        }
        None => {
            let mut motion = settings.motion.clone();
            motion.frames = args.frames;
            motion.points = args.points;
            if let Some(seed) = cli.seed {
                motion.seed = seed;
            }
            let points = motion.sample_points(point_margin(&motion));
            (generate(&motion, &points)?.frames, points)
        }
    };
    ensure!(
        args.warmup < frames.len(),
        "warmup {} must be below the frame count {}",
        args.warmup,
        frames.len()
    );
    let queries: Vec<QueryPoint> = points.iter().map(|p| QueryPoint::new(0, p[0], p[1])).collect();
    let with_rate = |r: ringtrack::bench::LatencyReport| match args.rate {
        Some(rate) => r.with_rate(rate, args.stride),
        None => Ok(r),
    };
    create_dir(&cli.output)?;
    if args.no_cache {
        let ref_config = TrackerConfig {
            window: config.buffer_capacity,
            stride: 1,
            ..config.clone()
        };
        let (w, h) = (frames[0].width(), frames[0].height());
        let mut tracker = ReferenceTracker::new(ref_config, w, h)?;
        let report = bench_stream(
            &mut tracker,
            &frames,
            &queries,
            args.warmup,
            format!("uncached-{}", config.fingerprint()),
        )?;
        let report = with_rate(report)?;
        println!("[uncached]\n{report}");
        if args.trace {
            report.write_trace(&cli.output.join("latency_uncached.txt"))?;
        }
    } else {
        let mut cmp = compare_cache(&config, &frames, &queries, args.warmup)?;
        cmp.cached = with_rate(cmp.cached)?;
        cmp.uncached = with_rate(cmp.uncached)?;
        print!("{cmp}");
        if args.trace {
            cmp.cached.write_trace(&cli.output.join("latency_cached.txt"))?;
            cmp.uncached.write_trace(&cli.output.join("latency_uncached.txt"))?;
        }
    }
    println!("[memory]\n{}", bench_memory(&config, queries.len())?);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(args) => cmd_synth(&cli, args),
        Command::Track(args) => cmd_track(&cli, args),
        Command::Eval(args) => cmd_eval(&cli, args),
        Command::Bench(args) => cmd_bench(&cli, args),
    }
}
