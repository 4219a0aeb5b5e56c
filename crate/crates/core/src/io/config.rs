//! Run configuration files.
//!
//! Line-oriented `key = value` pairs grouped under `[pipeline]`, `[scene]`
//! and `[corruption]` headers. `#` starts a comment. Ranges are written as
//! `low, high`. Unknown sections or keys and repeated keys are rejected;
//! keys that are left out keep their default values.
//!
//! ```text
//! [pipeline]
//! downsample = 4
//! gate_scale = 1.0
//!
//! [scene]
//! frames = 100
//! num_objects = 20, 20
//! ```

use std::collections::HashSet;
use std::path::Path;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::simulator::{CorruptionConfig, SceneConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    /// `downsample` and `num_classes` mirror the pipeline section.
    pub scene: SceneConfig,
    pub corruption: CorruptionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        let scene = SceneConfig {
            downsample: pipeline.downsample,
            num_classes: pipeline.num_classes,
            ..SceneConfig::default()
        };
        RunConfig {
            pipeline,
            scene,
            corruption: CorruptionConfig::default(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Pipeline,
    Scene,
    Corruption,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Pipeline => "pipeline",
            Section::Scene => "scene",
            Section::Corruption => "corruption",
        }
    }
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| err(line, format!("cannot parse {key} from {v:?}")))
}

fn range<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<(T, T)> {
    let Some((a, b)) = v.split_once(',') else {
        return Err(err(line, format!("{key} expects `low, high`, got {v:?}")));
    };
    Ok((num(line, key, a.trim())?, num(line, key, b.trim())?))
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(err(line, format!("{key} expects true or false, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section: Option<Section> = None;
        let mut seen: HashSet<(&'static str, String)> = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "pipeline" => Section::Pipeline,
                    "scene" => Section::Scene,
                    "corruption" => Section::Corruption,
                    other => return Err(err(line, format!("unknown section [{other}]"))),
                });
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(err(
                    line,
                    format!("expected `key = value`, got {content:?}"),
                ));
            };
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = section else {
                return Err(err(line, format!("key {key:?} appears before any section")));
            };
            if !seen.insert((sec.name(), key.to_string())) {
                return Err(err(
                    line,
                    format!("duplicate key {key:?} in [{}]", sec.name()),
                ));
            }
            cfg.set(sec, line, key, value)?;
        }
        cfg.scene.downsample = cfg.pipeline.downsample;
        cfg.scene.num_classes = cfg.pipeline.num_classes;
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, sec: Section, line: usize, key: &str, v: &str) -> Result<()> {
        let (p, s, c) = (&mut self.pipeline, &mut self.scene, &mut self.corruption);
        match (sec, key) {
            (Section::Pipeline, "downsample") => p.downsample = num(line, key, v)?,
            (Section::Pipeline, "max_peaks") => p.max_peaks = num(line, key, v)?,
            (Section::Pipeline, "score_threshold") => p.score_threshold = num(line, key, v)?,
            (Section::Pipeline, "num_classes") => p.num_classes = num(line, key, v)?,
            (Section::Pipeline, "gate_scale") => p.gate_scale = num(line, key, v)?,
            (Section::Pipeline, "lambda_size") => p.lambda_size = num(line, key, v)?,
            (Section::Pipeline, "focal_alpha") => p.focal_alpha = num(line, key, v)?,
            (Section::Pipeline, "focal_beta") => p.focal_beta = num(line, key, v)?,
            (Section::Pipeline, "keypoint") => {
                p.keypoint = v.parse().map_err(|e: Error| err(line, e.to_string()))?
            }
            (Section::Scene, "image_width") => s.image_width = num(line, key, v)?,
            (Section::Scene, "image_height") => s.image_height = num(line, key, v)?,
            (Section::Scene, "frames") => s.frames = num(line, key, v)?,
            (Section::Scene, "num_objects") => {
                (s.min_objects, s.max_objects) = range(line, key, v)?
            }
            (Section::Scene, "width_range") => s.width_range = range(line, key, v)?,
            (Section::Scene, "height_range") => s.height_range = range(line, key, v)?,
            (Section::Scene, "speed_range") => s.speed_range = range(line, key, v)?,
            (Section::Scene, "spawn_prob") => s.spawn_prob = num(line, key, v)?,
            (Section::Scene, "despawn_prob") => s.despawn_prob = num(line, key, v)?,
            (Section::Scene, "min_separation") => s.min_separation = num(line, key, v)?,
            (Section::Scene, "seed") => s.seed = num(line, key, v)?,
            (Section::Corruption, "fn_rate") => c.fn_rate = num(line, key, v)?,
            (Section::Corruption, "fp_rate") => c.fp_rate = num(line, key, v)?,
            (Section::Corruption, "jitter_sigma") => c.jitter_sigma = num(line, key, v)?,
            (Section::Corruption, "hm_noise_sigma") => c.hm_noise_sigma = num(line, key, v)?,
            (Section::Corruption, "temporal_jitter_k") => c.temporal_jitter_k = num(line, key, v)?,
            (Section::Corruption, "occlusion") => c.occlusion = boolean(line, key, v)?,
            (Section::Corruption, "seed") => c.seed = num(line, key, v)?,
            _ => {
                return Err(err(
                    line,
                    format!("unknown key {key:?} in [{}]", sec.name()),
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.scene.validate()?;
        self.corruption.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&super::read_text(path)?)
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let (p, s, c) = (&self.pipeline, &self.scene, &self.corruption);
        let pair = |(a, b): (f64, f64)| format!("{a}, {b}");
        [
            "[pipeline]".to_string(),
            format!("downsample = {}", p.downsample),
            format!("max_peaks = {}", p.max_peaks),
            format!("score_threshold = {}", p.score_threshold),
            format!("num_classes = {}", p.num_classes),
            format!("gate_scale = {}", p.gate_scale),
            format!("lambda_size = {}", p.lambda_size),
            format!("focal_alpha = {}", p.focal_alpha),
            format!("focal_beta = {}", p.focal_beta),
            format!("keypoint = {}", p.keypoint.name()),
            String::new(),
            "[scene]".to_string(),
            format!("image_width = {}", s.image_width),
            format!("image_height = {}", s.image_height),
            format!("frames = {}", s.frames),
            format!("num_objects = {}, {}", s.min_objects, s.max_objects),
            format!("width_range = {}", pair(s.width_range)),
            format!("height_range = {}", pair(s.height_range)),
            format!("speed_range = {}", pair(s.speed_range)),
            format!("spawn_prob = {}", s.spawn_prob),
            format!("despawn_prob = {}", s.despawn_prob),
            format!("min_separation = {}", s.min_separation),
            format!("seed = {}", s.seed),
            String::new(),
            "[corruption]".to_string(),
            format!("fn_rate = {}", c.fn_rate),
            format!("fp_rate = {}", c.fp_rate),
            format!("jitter_sigma = {}", c.jitter_sigma),
            format!("hm_noise_sigma = {}", c.hm_noise_sigma),
            format!("temporal_jitter_k = {}", c.temporal_jitter_k),
            format!("occlusion = {}", c.occlusion),
            format!("seed = {}", c.seed),
        ]
        .join("\n")
            + "\n"
    }
}
