//! End-to-end runs: simulate to disk, track head outputs, score results.

use std::path::{Path, PathBuf};

use crate::association::{Matcher, TrackOutput, Tracker};
use crate::config::PipelineConfig;
use crate::error::Result;
use crate::evaluation::{evaluate, MetricsReport, DEFAULT_IOU_THRESHOLD};
use crate::heatmap::{decode_detections, FrameAnnotations, FrameGeometry, HeadOutput};
use crate::io::config::RunConfig;
use crate::io::heads::{read_heads, write_heads};
use crate::io::mot::{gt_rows, read_mot, result_rows, rows_to_sequence, write_mot};
use crate::simulator::{gen_scene, synthesize_sequence, SynthesizedSequence};

pub const GT_FILE: &str = "gt.txt";
pub const HEADS_DIR: &str = "heads";
pub const IDEAL_DIR: &str = "ideal";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub frames: usize,
    pub gt_boxes: usize,
    pub dropped: usize,
    pub occluded: usize,
    pub injected: usize,
    pub gt_path: PathBuf,
    pub heads_dir: PathBuf,
    pub ideal_dir: PathBuf,
}

pub fn scene_geometry(cfg: &RunConfig) -> Result<FrameGeometry> {
    Ok(cfg.scene.geometry()?.with_keypoint(cfg.pipeline.keypoint))
}

/// Generates the configured scene with ideal and corrupted head outputs.
pub fn simulate(cfg: &RunConfig) -> Result<(Vec<FrameAnnotations>, HeadOutputs)> {
    cfg.validate()?;
    let scene = gen_scene(&cfg.scene)?;
    let geom = scene_geometry(cfg)?;
    let ideal = synthesize_sequence(&scene, &geom, None)?;
    let corrupted = synthesize_sequence(&scene, &geom, Some(&cfg.corruption))?;
    Ok((scene, HeadOutputs { ideal, corrupted }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub ideal: SynthesizedSequence,
    pub corrupted: SynthesizedSequence,
}

/// Writes `gt.txt`, `heads/` (corrupted), `ideal/` and a copy of the
/// effective configuration under `out`.
pub fn simulate_to_dir(cfg: &RunConfig, out: &Path) -> Result<SimulationSummary> {
    let (scene, heads) = simulate(cfg)?;
    crate::io::create_dir(out)?;
    let rows = gt_rows(&scene);
    let summary = SimulationSummary {
        frames: scene.len(),
        gt_boxes: rows.len(),
        dropped: heads.corrupted.dropped,
        occluded: heads.corrupted.occluded,
        injected: heads.corrupted.injected,
        gt_path: out.join(GT_FILE),
        heads_dir: out.join(HEADS_DIR),
        ideal_dir: out.join(IDEAL_DIR),
    };
    write_mot(&summary.gt_path, &rows)?;
    write_heads(&summary.heads_dir, &heads.corrupted.heads)?;
    write_heads(&summary.ideal_dir, &heads.ideal.heads)?;
    crate::io::write_bytes(&out.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    Ok(summary)
}

/// Decodes and associates a sequence of `(frame, head)` pairs in order.
pub fn track_heads<'a>(
    heads: impl IntoIterator<Item = (u32, &'a HeadOutput)>,
    cfg: &PipelineConfig,
    matcher: Matcher,
) -> Result<Vec<TrackOutput>> {
    cfg.validate()?;
    let mut tracker = Tracker::new(cfg, matcher);
    let mut out = Vec::new();
    for (frame, head) in heads {
        let dets = decode_detections(head, cfg)?;
        out.extend(
            tracker
                .step(&dets)
                .into_iter()
                .map(|o| TrackOutput { frame, ..o }),
        );
    }
    Ok(out)
}

pub fn track_dir(
    heads_dir: &Path,
    cfg: &PipelineConfig,
    matcher: Matcher,
) -> Result<Vec<TrackOutput>> {
    let heads = read_heads(heads_dir)?;
    track_heads(heads.iter().map(|(f, h)| (*f, h)), cfg, matcher)
}

/// Scores in-memory tracker output against a scene.
pub fn score(scene: &[FrameAnnotations], outputs: &[TrackOutput]) -> Result<MetricsReport> {
    let gt = rows_to_sequence(&gt_rows(scene))?;
    let pred = rows_to_sequence(&result_rows(outputs))?;
    evaluate(&gt, &pred, DEFAULT_IOU_THRESHOLD)
}

pub fn evaluate_files(gt: &Path, pred: &Path, iou_threshold: f64) -> Result<MetricsReport> {
    let gt = rows_to_sequence(&read_mot(gt)?)?;
    let pred = rows_to_sequence(&read_mot(pred)?)?;
    evaluate(&gt, &pred, iou_threshold)
}
