//! Directories of per-frame head outputs.
//!
//! Each frame `t` is stored as four grid files named
//! `frame_{t:06}_{heatmap,size,offset,disp}.bin`, next to a `heads.txt`
//! manifest recording the downsampling factor.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::heatmap::HeadOutput;

use super::grid_file::{read_grid, write_grid};

pub const MANIFEST: &str = "heads.txt";
const KINDS: [&str; 4] = ["heatmap", "size", "offset", "disp"];

pub fn head_file(dir: &Path, frame: u32, kind: &str) -> PathBuf {
    dir.join(format!("frame_{frame:06}_{kind}.bin"))
}

pub fn write_manifest(dir: &Path, downsample: usize) -> Result<()> {
    super::create_dir(dir)?;
    super::write_bytes(
        &dir.join(MANIFEST),
        format!("downsample = {downsample}\n").as_bytes(),
    )
}

pub fn read_manifest(dir: &Path) -> Result<usize> {
    let text = super::read_text(&dir.join(MANIFEST))?;
    for (i, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        if k.trim() == "downsample" {
            return v.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad downsample {:?} in {}", v.trim(), MANIFEST),
            });
        }
    }
    Err(Error::invalid(format!(
        "{} has no downsample entry",
        dir.join(MANIFEST).display()
    )))
}

pub fn write_head(dir: &Path, frame: u32, head: &HeadOutput) -> Result<()> {
    let grids = [
        &head.heatmap,
        &head.size_map,
        &head.offset_map,
        &head.disp_map,
    ];
    for (kind, g) in KINDS.iter().zip(grids) {
        write_grid(&head_file(dir, frame, kind), g)?;
    }
    Ok(())
}

pub fn read_head(dir: &Path, frame: u32, downsample: usize) -> Result<HeadOutput> {
    let [heatmap, size_map, offset_map, disp_map] =
        KINDS.map(|kind| read_grid(&head_file(dir, frame, kind)));
    let head = HeadOutput {
        heatmap: heatmap?,
        size_map: size_map?,
        offset_map: offset_map?,
        disp_map: disp_map?,
        downsample,
    };
    head.validate()?;
    Ok(head)
}

/// Frame numbers that have a heatmap file in `dir`, ascending.
pub fn list_frames(dir: &Path) -> Result<Vec<u32>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(num) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix("_heatmap.bin"))
        {
            if let Ok(f) = num.parse() {
                frames.push(f);
            }
        }
    }
    frames.sort_unstable();
    Ok(frames)
}

/// Writes a full sequence; `heads[i]` is frame `i + 1`.
pub fn write_heads(dir: &Path, heads: &[HeadOutput]) -> Result<()> {
    let downsample = heads.first().map_or(1, |h| h.downsample);
    write_manifest(dir, downsample)?;
    for (i, h) in heads.iter().enumerate() {
        write_head(dir, i as u32 + 1, h)?;
    }
    Ok(())
}

/// Reads every frame in `dir` as `(frame, head)` pairs.
pub fn read_heads(dir: &Path) -> Result<Vec<(u32, HeadOutput)>> {
    let downsample = read_manifest(dir)?;
    list_frames(dir)?
        .into_iter()
        .map(|f| Ok((f, read_head(dir, f, downsample)?)))
        .collect()
}
