//! `evcalib` subcommands: simulate, calibrate, evaluate, classify.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calib::{self, OffEConfig, OffEiConfig, OnEiConfig};
use crate::ingest::{self, pgm, Dataset};
use crate::model::{classify_map, CalibrationMap, ClassifyParams, EventStream, Grid, PixelClass};
use crate::reconstruct::{evaluate_sequence, Cadence};
use crate::simulate::{inject_special_pixels, simulate_events, SimConfig, SpecialPixelSpec};

#[derive(Debug, Parser)]
#[command(
    name = "evcalib",
    version,
    about = "Event camera contrast threshold and bias calibration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate events from a graymap video under a calibration map.
    Simulate(SimulateArgs),
    /// Estimate a calibration map from events (and frames).
    Calibrate(CalibrateArgs),
    /// Reconstruct frames by direct integration and score them.
    Evaluate(EvaluateArgs),
    /// Classify pixels of a calibration map and emit heatmaps and histograms.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory holding `images.txt`, or the images index itself.
    #[arg(long)]
    pub video: PathBuf,
    /// Calibration map to simulate with.
    #[arg(long, conflicts_with = "nominal_c")]
    pub map: Option<PathBuf>,
    /// Uniform threshold (zero bias) used when no map is given.
    #[arg(long)]
    pub nominal_c: Option<f64>,
    /// Special pixels to inject: lines of `x y class magnitude`.
    #[arg(long)]
    pub special: Option<PathBuf>,
    /// Minimum time between events of one pixel, seconds.
    #[arg(long, default_value_t = 0.0)]
    pub refractory: f64,
    /// Output event file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Offei,
    Onei,
    Offe,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub algorithm: Algorithm,
    #[arg(long)]
    pub events: PathBuf,
    /// Images index; required by offei and onei.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Sensor width for event-only input.
    #[arg(long)]
    pub width: Option<usize>,
    /// Sensor height for event-only input.
    #[arg(long)]
    pub height: Option<usize>,
    /// Output calibration map.
    #[arg(long)]
    pub out: PathBuf,
    /// Degenerate-pixel report [default: <out>.report.txt].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for online snapshots [default: <out>.snapshots].
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Frames per regression interval (offei).
    #[arg(long, default_value_t = 40)]
    pub d: usize,
    #[arg(long, default_value_t = 0.1)]
    pub fallback_c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub fallback_b: f64,
    #[arg(long, default_value_t = 2)]
    pub min_rows: usize,
    #[arg(long, default_value_t = 10)]
    pub min_events: u64,
    /// Large buffer capacity in events (onei).
    #[arg(long, default_value_t = 1_700_000)]
    pub big_capacity: usize,
    /// Small buffer capacity in events (onei).
    #[arg(long, default_value_t = 200_000)]
    pub small_capacity: usize,
    /// Low-pass weight of each update (onei).
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Residual floor (offe).
    #[arg(long, default_value_t = 1e-6)]
    pub r_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CadenceKind {
    Frames,
    Events,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    /// Calibration map to integrate with.
    #[arg(long, conflicts_with = "uniform", required_unless_present = "uniform")]
    pub map: Option<PathBuf>,
    /// Integrate with a uniform threshold and zero bias instead of a map.
    #[arg(long)]
    pub uniform: Option<f64>,
    #[arg(long, value_enum, default_value_t = CadenceKind::Frames)]
    pub cadence: CadenceKind,
    /// Frames spanned by each window (frames cadence).
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    /// Events per evaluation point (events cadence).
    #[arg(long, default_value_t = 500_000)]
    pub event_count: usize,
    /// Evaluation points within this many seconds of the first frame are
    /// skipped.
    #[arg(long, default_value_t = 5.0)]
    pub skip: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub nominal_c: f64,
    #[arg(long, default_value_t = 0.02)]
    pub tol_c: f64,
    #[arg(long, default_value_t = 0.005)]
    pub tol_b: f64,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Classify(args) => cmd_classify(&args),
    }
}

fn resolve_index(video: &Path) -> Result<PathBuf> {
    if !video.exists() {
        bail!("video path {} does not exist", video.display());
    }
    if video.is_dir() {
        let index = video.join("images.txt");
        if !index.is_file() {
            bail!(
                "video directory {} has no images.txt index",
                video.display()
            );
        }
        Ok(index)
    } else {
        Ok(video.to_path_buf())
    }
}

fn load_map(path: &Path) -> Result<CalibrationMap> {
    ingest::read_calibration_map(path)
        .with_context(|| format!("reading calibration map {}", path.display()))
}

fn load_dataset(events: &Path, images: &Path) -> Result<Dataset> {
    let (dataset, report) = ingest::load_dataset(events, images).with_context(|| {
        format!(
            "loading dataset {} + {}",
            events.display(),
            images.display()
        )
    })?;
    if report.out_of_range() > 0 {
        eprintln!(
            "warning: {} events before the first frame, {} after the last",
            report.events_before_first_frame, report.events_after_last_frame
        );
    }
    Ok(dataset)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let index = resolve_index(&args.video)?;
    let frames = ingest::load_frames(&index)
        .with_context(|| format!("loading video {}", args.video.display()))?;
    let Some(first) = frames.first() else {
        bail!("video {} has no frames", args.video.display());
    };
    let (width, height) = (first.width(), first.height());
    let (mut map, nominal) = match (&args.map, args.nominal_c) {
        (Some(path), _) => (load_map(path)?, None),
        (None, Some(c)) => (CalibrationMap::uniform(width, height, c, 0.0)?, Some(c)),
        (None, None) => bail!("either --map or --nominal-c is required"),
    };
    if let Some(spec_path) = &args.special {
        let text = fs::read_to_string(spec_path)
            .with_context(|| format!("reading special pixel spec {}", spec_path.display()))?;
        let spec: SpecialPixelSpec = text
            .parse()
            .with_context(|| format!("parsing special pixel spec {}", spec_path.display()))?;
        let Some(nominal) = nominal else {
            bail!("--special needs --nominal-c");
        };
        map = inject_special_pixels(&map, &spec, nominal)?;
    }
    let cfg = SimConfig {
        refractory: args.refractory,
        ..SimConfig::default()
    };
    let stream = simulate_events(&frames, &map, &cfg)?;
    ingest::write_events(&args.out, stream.events())?;
    println!("events {}", stream.len());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".report.txt"));
    let (map, report_text) = match args.algorithm {
        Algorithm::Offei | Algorithm::Onei => {
            let Some(images) = &args.images else {
                bail!("{:?} calibration needs --images", args.algorithm);
            };
            let dataset = load_dataset(&args.events, images)?;
            if args.algorithm == Algorithm::Offei {
                let cfg = OffEiConfig {
                    d: args.d,
                    fallback_c: args.fallback_c,
                    fallback_b: args.fallback_b,
                    min_rows: args.min_rows,
                    min_events: args.min_events,
                };
                let (map, report) = calib::calibrate_offei(&dataset, &cfg)?;
                println!("degenerate {}", report.degenerate_count());
                (map, report.to_text())
            } else {
                let cfg = OnEiConfig {
                    big_capacity: args.big_capacity,
                    small_capacity: args.small_capacity,
                    filter_alpha: args.alpha,
                    fallback_c: args.fallback_c,
                    fallback_b: args.fallback_b,
                    min_rows: args.min_rows,
                    min_events: args.min_events,
                };
                let (cal, snapshots) = calib::run_online(&dataset, &cfg)?;
                let dir = args
                    .snapshots
                    .clone()
                    .unwrap_or_else(|| with_suffix(&args.out, ".snapshots"));
                fs::create_dir_all(&dir)
                    .with_context(|| format!("creating snapshot directory {}", dir.display()))?;
                let mut index = String::new();
                for (i, snap) in snapshots.iter().enumerate() {
                    let name = format!("snapshot_{i:05}.txt");
                    ingest::write_calibration_map(&snap.map, &dir.join(&name))?;
                    let _ = writeln!(index, "{i} {} {} {name}", snap.t, snap.frame_index);
                }
                fs::write(dir.join("snapshots.txt"), index)
                    .with_context(|| format!("writing snapshot index in {}", dir.display()))?;
                if snapshots.is_empty() {
                    eprintln!(
                        "warning: buffer never filled ({} of {} events buffered); estimate is the fallback map",
                        cal.buffered_events(),
                        cfg.big_capacity
                    );
                }
                println!("updates {}", snapshots.len());
                let text = match cal.last_report() {
                    Some(r) => r.to_text(),
                    None => format!(
                        "# pixels {}\n# updates 0\n",
                        dataset.width() * dataset.height()
                    ),
                };
                (cal.estimate().clone(), text)
            }
        }
        Algorithm::Offe => {
            let events = ingest::read_events(&args.events)
                .with_context(|| format!("reading events {}", args.events.display()))?;
            if events.is_empty() {
                bail!(
                    "event-only calibration needs events; {} has none",
                    args.events.display()
                );
            }
            let (width, height) = match (&args.images, args.width, args.height) {
                (_, Some(w), Some(h)) => (w, h),
                (Some(images), _, _) => {
                    let frames = ingest::load_frames(images)?;
                    let f = frames.first().context("images index lists no frames")?;
                    (f.width(), f.height())
                }
                _ => bail!("event-only calibration needs --width and --height (or --images)"),
            };
            let stream = EventStream::new(width, height, events)?;
            let cfg = OffEConfig {
                min_events: args.min_events as usize,
                fallback_c: args.fallback_c,
                fallback_b: args.fallback_b,
                r_floor: args.r_floor,
            };
            let (map, report) = calib::calibrate_offe(&stream, &cfg)?;
            println!("degenerate {}", report.summary.degenerate_count());
            (map, report.to_text())
        }
    };
    ingest::write_calibration_map(&map, &args.out)?;
    fs::write(&report_path, report_text)
        .with_context(|| format!("writing report {}", report_path.display()))?;
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let dataset = load_dataset(&args.events, &args.images)?;
    let map = match (&args.map, args.uniform) {
        (Some(path), _) => load_map(path)?,
        (None, Some(c0)) => CalibrationMap::uniform(dataset.width(), dataset.height(), c0, 0.0)?,
        (None, None) => bail!("either --map or --uniform is required"),
    };
    let cadence = match args.cadence {
        CadenceKind::Frames => Cadence::Frames(args.window),
        CadenceKind::Events => Cadence::Events(args.event_count),
    };
    let points = evaluate_sequence(&dataset, &map, cadence, args.skip)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut table = String::new();
    for p in &points {
        let k = p.window.end;
        pgm::write_pgm(
            &args.out_dir.join(format!("recon_{k:05}.pgm")),
            &ingest::frame_to_gray(&p.reconstruction),
        )?;
        let _ = writeln!(
            table,
            "{k} {} {} {}",
            p.metrics.rmse, p.metrics.psnr, p.metrics.ssim
        );
    }
    let path = args.out_dir.join("metrics.txt");
    fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?;
    if points.is_empty() {
        eprintln!(
            "warning: no evaluation points after the {} s skip interval",
            args.skip
        );
    } else {
        let n = points.len() as f64;
        let mean = |f: fn(&crate::metrics::MetricReport) -> f64| {
            points.iter().map(|p| f(&p.metrics)).sum::<f64>() / n
        };
        println!(
            "points {} mean_rmse {} mean_psnr {} mean_ssim {}",
            points.len(),
            mean(|m| m.rmse),
            mean(|m| m.psnr),
            mean(|m| m.ssim)
        );
    }
    Ok(())
}

/// `bins` equal-width bins spanning `[min, max]` of the values; returns
/// `(lower, upper, count)` triples.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0 / bins as f64
    };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, n)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, n))
        .collect()
}

fn heatmap(values: &Grid<f64>) -> pgm::GrayImage {
    let v = values.as_slice();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    pgm::GrayImage {
        width: values.width(),
        height: values.height(),
        pixels: v
            .iter()
            .map(|x| ((x - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect(),
    }
}

/// Gray level of each class in the class-index image.
pub fn class_gray_level(class: PixelClass) -> u8 {
    (class.index() * 60) as u8
}

pub fn cmd_classify(args: &ClassifyArgs) -> Result<()> {
    let map = load_map(&args.map)?;
    let params = ClassifyParams {
        nominal_c: args.nominal_c,
        tol_c: args.tol_c,
        tol_b: args.tol_b,
    };
    let classes = classify_map(&map, &params)?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mut counts = [0usize; 5];
    for class in classes.as_slice() {
        counts[class.index()] += 1;
    }
    let mut summary = String::new();
    for class in PixelClass::ALL {
        let _ = writeln!(summary, "{} {}", class, counts[class.index()]);
    }
    print!("{summary}");
    fs::write(args.out_dir.join("counts.txt"), &summary)?;

    pgm::write_pgm(
        &args.out_dir.join("classes.pgm"),
        &pgm::GrayImage {
            width: map.width(),
            height: map.height(),
            pixels: classes
                .as_slice()
                .iter()
                .map(|&c| class_gray_level(c))
                .collect(),
        },
    )?;
    pgm::write_pgm(&args.out_dir.join("c_heatmap.pgm"), &heatmap(map.c()))?;
    pgm::write_pgm(&args.out_dir.join("b_heatmap.pgm"), &heatmap(map.b()))?;

    let mut hist = String::new();
    for (name, grid) in [("c", map.c()), ("b", map.b())] {
        for (lo, hi, n) in histogram(grid.as_slice(), args.bins) {
            let _ = writeln!(hist, "{name} {lo} {hi} {n}");
        }
    }
    fs::write(args.out_dir.join("histogram.txt"), hist)?;
    Ok(())
}
