//! Side-by-side comparisons on identical synthetic scenes.
//!
//! Every row of a table is computed from the same generated scene and the
//! same corruption draws, so differences come only from the varied setting.

use std::fmt;

use crate::association::Matcher;
use crate::error::Result;
use crate::evaluation::MetricsReport;
use crate::geometry::Keypoint;
use crate::io::config::RunConfig;
use crate::pipeline::{score, simulate, track_heads};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn csv(&self) -> String {
        let mut out = format!("variant,{}\n", MetricsReport::csv_header());
        for r in &self.rows {
            out.push_str(&format!("{},{}\n", r.label, r.report.csv_row()));
        }
        out
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<10}{}", "variant", MetricsReport::text_header())?;
        for r in &self.rows {
            write!(f, "\n{:<10}{}", r.label, r.report.text_row())?;
        }
        Ok(())
    }
}

/// Greedy against Hungarian association on one corrupted scene.
pub fn compare_matchers(cfg: &RunConfig) -> Result<AblationTable> {
    let (scene, heads) = simulate(cfg)?;
    let frames = || {
        heads
            .corrupted
            .heads
            .iter()
            .enumerate()
            .map(|(i, h)| (i as u32 + 1, h))
    };
    let rows = [Matcher::Greedy, Matcher::Hungarian]
        .into_iter()
        .map(|m| {
            let out = track_heads(frames(), &cfg.pipeline, m)?;
            Ok(AblationRow {
                label: m.name().to_string(),
                report: score(&scene, &out)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable { rows })
}

/// Top against center keypoints. Each variant renders, corrupts and decodes
/// with its own keypoint; with occlusion enabled, objects whose keypoint is
/// hidden behind a nearer box are lost.
pub fn compare_keypoints(cfg: &RunConfig, matcher: Matcher) -> Result<AblationTable> {
    let rows = [Keypoint::Top, Keypoint::Center]
        .into_iter()
        .map(|k| {
            let mut variant = cfg.clone();
            variant.pipeline.keypoint = k;
            let (scene, heads) = simulate(&variant)?;
            let frames = heads
                .corrupted
                .heads
                .iter()
                .enumerate()
                .map(|(i, h)| (i as u32 + 1, h));
            let out = track_heads(frames, &variant.pipeline, matcher)?;
            Ok(AblationRow {
                label: k.name().to_string(),
                report: score(&scene, &out)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{CorruptionConfig, SceneConfig};

    fn cfg() -> RunConfig {
        RunConfig {
            scene: SceneConfig {
                frames: 20,
                min_objects: 10,
                max_objects: 10,
                speed_range: (2.0, 6.0),
                seed: 1,
                ..SceneConfig::default()
            },
            corruption: CorruptionConfig {
                fn_rate: 0.1,
                fp_rate: 1.0,
                jitter_sigma: 1.0,
                seed: 2,
                ..CorruptionConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn matcher_table_is_deterministic() {
        let a = compare_matchers(&cfg()).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a, compare_matchers(&cfg()).unwrap());
        let text = a.to_string();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("greedy") && text.contains("hungarian"));
        assert_eq!(a.csv().lines().count(), 3);
    }

    #[test]
    fn keypoint_table_has_two_rows() {
        let mut c = cfg();
        c.corruption.occlusion = true;
        let t = compare_keypoints(&c, Matcher::Greedy).unwrap();
        assert_eq!(t.rows[0].label, "top");
        assert_eq!(t.rows[1].label, "center");
    }
}
