use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use apex_core::ablation::{compare_keypoints, compare_matchers};
use apex_core::association::Matcher;
use apex_core::evaluation::{MetricsReport, DEFAULT_IOU_THRESHOLD};
use apex_core::gradcheck::{
    finite_difference_check, FocalObjective, GradCheckConfig, GradCheckReport, MaskedL1Objective,
};
use apex_core::heatmap::{render_gt_heatmap, FrameAnnotations};
use apex_core::io::config::RunConfig;
use apex_core::io::grid_file::write_grid;
use apex_core::io::heads::{list_frames, read_head, read_manifest};
use apex_core::io::mot::{annotations_from_rows, read_mot, result_rows, write_mot, MotRow};
use apex_core::io::ppm::{Canvas, GREEN, RED, WHITE};
use apex_core::losses::{total_loss, LossTargets, Supervision};
use apex_core::pipeline::{evaluate_files, scene_geometry, simulate_to_dir, track_dir};

#[derive(Parser)]
#[command(
    name = "apex",
    version,
    about = "Keypoint tracking toolkit: simulate, track, score"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: ground truth plus per-frame head outputs
    Simulate {
        /// Run configuration file
        #[arg(long)]
        config: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode head outputs and link detections into tracks
    Track {
        /// Directory of head-output grids
        #[arg(long)]
        heads: PathBuf,
        /// Run configuration (pipeline section used); defaults if omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Association method
        #[arg(long, default_value = "greedy")]
        matcher: Matcher,
        /// Result file (MOT format)
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a result file against ground truth
    Evaluate {
        /// Ground-truth file
        #[arg(long)]
        gt: PathBuf,
        /// Result file to score
        #[arg(long)]
        pred: PathBuf,
        /// Print CSV instead of a table
        #[arg(long)]
        csv: bool,
        /// IoU threshold for a match
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
    },
    /// Render the ground-truth heatmap of one frame to a grid file
    RenderHeatmap {
        /// Ground-truth file
        #[arg(long)]
        gt: PathBuf,
        /// Frame number
        #[arg(long)]
        frame: u32,
        /// Output grid file
        #[arg(long)]
        out: PathBuf,
        /// Run configuration; defaults if omitted
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate the losses of predicted heads against ideal heads and verify their gradients
    Losscheck {
        /// Directory of predicted heads
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ideal heads used as targets
        #[arg(long)]
        gt: PathBuf,
        /// Run configuration; defaults if omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest accepted relative gradient error
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Coordinates sampled per loss and frame
        #[arg(long, default_value_t = 128)]
        samples: usize,
    },
    /// Draw ground-truth (green) and predicted (red) boxes of one frame as a PPM image
    Overlay {
        /// Ground-truth file
        #[arg(long)]
        gt: PathBuf,
        /// Result file
        #[arg(long)]
        pred: PathBuf,
        /// Frame number
        #[arg(long)]
        frame: u32,
        /// Output PPM image
        #[arg(long)]
        out: PathBuf,
        /// Image width; fitted to the boxes if omitted
        #[arg(long)]
        width: Option<usize>,
        /// Image height; fitted to the boxes if omitted
        #[arg(long)]
        height: Option<usize>,
    },
    /// Compare matchers or keypoints on identical simulated scenes
    Ablation {
        /// Run configuration file
        #[arg(long)]
        config: PathBuf,
        /// What to vary
        #[arg(long, value_enum, default_value_t = Compare::Matcher)]
        compare: Compare,
        /// Print CSV instead of a table
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Compare {
    Matcher,
    Keypoint,
}

/// A verification step ran to completion and found a problem.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn simulate(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let s = simulate_to_dir(&cfg, out)?;
    println!(
        "wrote {} frames, {} ground-truth boxes to {}",
        s.frames,
        s.gt_boxes,
        out.display()
    );
    println!(
        "corruption: {} dropped, {} occluded, {} injected",
        s.dropped, s.occluded, s.injected
    );
    Ok(())
}

fn track(heads: &Path, config: Option<&Path>, matcher: Matcher, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let outputs = track_dir(heads, &cfg.pipeline, matcher)?;
    write_mot(out, &result_rows(&outputs))?;
    let tracks = outputs.iter().map(|o| o.id).max().unwrap_or(0);
    println!(
        "{}: {} rows, {} track ids -> {}",
        matcher.name(),
        outputs.len(),
        tracks,
        out.display()
    );
    Ok(())
}

fn evaluate(gt: &Path, pred: &Path, csv: bool, iou: f64) -> Result<()> {
    let report = evaluate_files(gt, pred, iou)?;
    if csv {
        println!("{}", MetricsReport::csv_header());
        println!("{}", report.csv_row());
    } else {
        println!("{report}");
    }
    Ok(())
}

fn frame_annotations(rows: &[MotRow], frame: u32) -> Result<FrameAnnotations> {
    let frames = annotations_from_rows(rows)?;
    let found = frames.into_iter().find(|f| f.frame == frame);
    Ok(found.unwrap_or(FrameAnnotations {
        frame,
        objects: Vec::new(),
    }))
}

fn render_heatmap(gt: &Path, frame: u32, out: &Path, config: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let rows = read_mot(gt)?;
    let ann = frame_annotations(&rows, frame)?;
    let rendered = render_gt_heatmap(&ann, &scene_geometry(&cfg)?)?;
    write_grid(out, &rendered.grid)?;
    let g = &rendered.grid;
    println!(
        "frame {frame}: {} objects, {} skipped, {}x{}x{} grid -> {}",
        ann.objects.len(),
        rendered.skipped,
        g.height(),
        g.width(),
        g.channels(),
        out.display()
    );
    Ok(())
}

fn merge(acc: &mut Option<GradCheckReport>, r: GradCheckReport) {
    match acc {
        Some(a) => {
            if r.max_relative_error > a.max_relative_error {
                a.max_relative_error = r.max_relative_error;
                a.worst_coord = r.worst_coord;
            }
            a.checked += r.checked;
            a.skipped_kinks += r.skipped_kinks;
        }
        None => *acc = Some(r),
    }
}

fn losscheck(
    pred: &Path,
    gt: &Path,
    config: Option<&Path>,
    tolerance: f64,
    samples: usize,
) -> Result<()> {
    let cfg = load_config(config)?.pipeline;
    let (pred_r, gt_r) = (read_manifest(pred)?, read_manifest(gt)?);
    if pred_r != gt_r {
        bail!(apex_core::Error::DimensionMismatch(format!(
            "prediction heads use downsample {pred_r}, ground truth {gt_r}"
        )));
    }
    let frames = list_frames(gt)?;
    if frames.is_empty() {
        bail!(apex_core::Error::InvalidInput(format!(
            "no head outputs in {}",
            gt.display()
        )));
    }

    let names = ["focal", "size", "offset", "displacement"];
    let mut worst: [Option<GradCheckReport>; 4] = [None; 4];
    let mut sums = [0.0; 5];
    for &f in &frames {
        let p = read_head(pred, f, pred_r)?;
        let targets = LossTargets::from_ideal_head(&read_head(gt, f, gt_r)?)?;
        let b = total_loss(&p, &targets, &cfg).with_context(|| format!("frame {f}"))?;
        for (s, v) in sums
            .iter_mut()
            .zip([b.l_h, b.l_size, b.l_off, b.l_d, b.total])
        {
            *s += v;
        }

        let gc = GradCheckConfig {
            samples,
            seed: f as u64,
            ..GradCheckConfig::default()
        };
        let n = targets.n_objects();
        let focal = FocalObjective {
            gt: &targets.heatmap,
            alpha: cfg.focal_alpha,
            beta: cfg.focal_beta,
            n,
        };
        merge(
            &mut worst[0],
            finite_difference_check(&focal, p.heatmap.values(), &gc)?,
        );
        let heads: [(&apex_core::Grid, Vec<Supervision>); 3] = [
            (&p.size_map, targets.size_supervision()),
            (&p.offset_map, targets.offset_supervision()),
            (&p.disp_map, targets.displacement_supervision()),
        ];
        for (k, (grid, sup)) in heads.iter().enumerate() {
            let obj = MaskedL1Objective {
                height: grid.height(),
                width: grid.width(),
                targets: sup,
                n,
            };
            merge(
                &mut worst[k + 1],
                finite_difference_check(&obj, grid.values(), &gc)?,
            );
        }
    }

    let m = frames.len() as f64;
    println!("frames: {}", frames.len());
    println!(
        "mean loss: l_h {:.6} l_size {:.6} l_off {:.6} l_d {:.6} total {:.6}",
        sums[0] / m,
        sums[1] / m,
        sums[2] / m,
        sums[3] / m,
        sums[4] / m
    );
    let mut failed = Vec::new();
    for (name, r) in names.iter().zip(worst) {
        let r = r.expect("at least one frame");
        let ok = r.max_relative_error < tolerance;
        println!(
            "gradcheck {name:<12} max rel err {:.3e} over {} coords ({} non-smooth skipped) {}",
            r.max_relative_error,
            r.checked,
            r.skipped_kinks,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        bail!(CheckFailed(format!(
            "gradient check above {tolerance:e} for: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn overlay(
    gt: &Path,
    pred: &Path,
    frame: u32,
    out: &Path,
    width: Option<usize>,
    height: Option<usize>,
) -> Result<()> {
    let gt_rows = read_mot(gt)?;
    let pred_rows = read_mot(pred)?;
    // default canvas covers every ground-truth box of the sequence
    let extent =
        |f: fn(&MotRow) -> f64| gt_rows.iter().map(f).fold(1.0f64, f64::max).ceil() as usize;
    let w = width.unwrap_or_else(|| extent(|r| r.bbox.x2()));
    let h = height.unwrap_or_else(|| extent(|r| r.bbox.y2()));
    if w == 0 || h == 0 {
        bail!(apex_core::Error::InvalidInput(
            "canvas must be at least 1x1".into()
        ));
    }
    let mut canvas = Canvas::new(w, h, WHITE);
    let (mut n_gt, mut n_pred) = (0, 0);
    for r in gt_rows.iter().filter(|r| r.frame == frame) {
        canvas.draw_box(&r.bbox, GREEN);
        n_gt += 1;
    }
    for r in pred_rows.iter().filter(|r| r.frame == frame) {
        canvas.draw_box(&r.bbox, RED);
        n_pred += 1;
    }
    canvas.write(out)?;
    println!(
        "frame {frame}: {n_gt} ground-truth and {n_pred} predicted boxes on {w}x{h} -> {}",
        out.display()
    );
    Ok(())
}

fn ablation(config: &Path, compare: Compare, csv: bool) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let table = match compare {
        Compare::Matcher => compare_matchers(&cfg)?,
        Compare::Keypoint => compare_keypoints(&cfg, Matcher::Greedy)?,
    };
    if csv {
        print!("{}", table.csv());
    } else {
        println!("{table}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => simulate(&config, &out),
        Command::Track {
            heads,
            config,
            matcher,
            out,
        } => track(&heads, config.as_deref(), matcher, &out),
        Command::Evaluate { gt, pred, csv, iou } => evaluate(&gt, &pred, csv, iou),
        Command::RenderHeatmap {
            gt,
            frame,
            out,
            config,
        } => render_heatmap(&gt, frame, &out, config.as_deref()),
        Command::Losscheck {
            pred,
            gt,
            config,
            tolerance,
            samples,
        } => losscheck(&pred, &gt, config.as_deref(), tolerance, samples),
        Command::Overlay {
            gt,
            pred,
            frame,
            out,
            width,
            height,
        } => overlay(&gt, &pred, frame, &out, width, height),
        Command::Ablation {
            config,
            compare,
            csv,
        } => ablation(&config, compare, csv),
    }
}

/// 1: invalid input or config, 2: filesystem, 3: a check found a problem.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        3
    } else if let Some(e) = err.downcast_ref::<apex_core::Error>() {
        if e.is_io() {
            2
        } else {
            1
        }
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
