//! Ground-truth heatmap rendering and head-output decoding.
//!
//! A heatmap holds one channel per class. Every object contributes a
//! Gaussian bump centred on the cell that contains its keypoint; the
//! bump's spread follows the object's extent so that small objects get
//! tight peaks. Decoding runs the inverse: find local maxima, then read the
//! size, offset and displacement heads at those cells.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection, GridPoint, Keypoint, Size, TopPoint, Vec2};
use crate::grid::{Grid, GridDims};

/// Minimum IoU between a box and a box whose corners moved by the radius.
const MIN_OVERLAP: f64 = 0.7;
const MIN_SIGMA: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatedObject {
    pub track_id: u64,
    pub class_id: usize,
    pub bbox: BBox,
}

/// Ground-truth boxes of one frame. Frame indices start at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotations {
    pub frame: u32,
    pub objects: Vec<AnnotatedObject>,
}

impl FrameAnnotations {
    pub fn new(frame: u32, objects: Vec<AnnotatedObject>) -> Result<Self> {
        let ann = FrameAnnotations { frame, objects };
        ann.validate()?;
        Ok(ann)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame < 1 {
            return Err(Error::invalid("frame indices start at 1"));
        }
        let mut seen = HashSet::with_capacity(self.objects.len());
        for obj in &self.objects {
            obj.bbox.validate()?;
            if !seen.insert(obj.track_id) {
                return Err(Error::invalid(format!(
                    "track id {} appears twice in frame {}",
                    obj.track_id, self.frame
                )));
            }
        }
        Ok(())
    }

    pub fn find(&self, track_id: u64) -> Option<&AnnotatedObject> {
        self.objects.iter().find(|o| o.track_id == track_id)
    }
}

/// Image size, downsampling and class count: everything needed to lay out
/// the grids of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub image_height: usize,
    pub image_width: usize,
    pub downsample: usize,
    pub num_classes: usize,
    pub keypoint: Keypoint,
}

impl FrameGeometry {
    pub fn new(
        image_height: usize,
        image_width: usize,
        downsample: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let g = FrameGeometry {
            image_height,
            image_width,
            downsample,
            num_classes,
            keypoint: Keypoint::Top,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_keypoint(self, keypoint: Keypoint) -> Self {
        FrameGeometry { keypoint, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.downsample == 0 || self.num_classes == 0 {
            return Err(Error::invalid("downsample and num_classes must be >= 1"));
        }
        if self.image_height == 0
            || self.image_width == 0
            || !self.image_height.is_multiple_of(self.downsample)
            || !self.image_width.is_multiple_of(self.downsample)
        {
            return Err(Error::invalid(format!(
                "image {}x{} must be non-empty and divisible by {}",
                self.image_height, self.image_width, self.downsample
            )));
        }
        Ok(())
    }

    pub fn grid_dims(&self) -> GridDims {
        GridDims::new(
            self.image_height / self.downsample,
            self.image_width / self.downsample,
        )
    }
}

/// Per-frame outputs of the four prediction heads.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// One channel per class, values in `[0, 1]`.
    pub heatmap: Grid,
    /// `(w, h)` in pixels.
    pub size_map: Grid,
    /// Sub-cell `(x, y)` remainder in cell units.
    pub offset_map: Grid,
    /// `(dx, dy)` motion since the previous frame, in pixels.
    pub disp_map: Grid,
    pub downsample: usize,
}

impl HeadOutput {
    pub fn zeros(dims: GridDims, num_classes: usize, downsample: usize) -> Self {
        let (h, w) = (dims.height, dims.width);
        HeadOutput {
            heatmap: Grid::zeros(h, w, num_classes),
            size_map: Grid::zeros(h, w, 2),
            offset_map: Grid::zeros(h, w, 2),
            disp_map: Grid::zeros(h, w, 2),
            downsample,
        }
    }

    pub fn dims(&self) -> GridDims {
        self.heatmap.dims()
    }

    pub fn validate(&self) -> Result<()> {
        if self.downsample == 0 {
            return Err(Error::invalid("downsample must be >= 1"));
        }
        let dims = self.heatmap.dims();
        for (name, g) in [
            ("size map", &self.size_map),
            ("offset map", &self.offset_map),
            ("displacement map", &self.disp_map),
        ] {
            if g.dims() != dims || g.channels() != 2 {
                return Err(Error::dims(format!(
                    "{name} is {:?}, expected {}x{}x2",
                    g.shape(),
                    dims.height,
                    dims.width
                )));
            }
        }
        if let Some(v) = self
            .heatmap
            .values()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!("heatmap value {v} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Radius (in cells) by which both corners of a `height x width` box may
/// move while the moved box keeps IoU >= 0.7 with the original.
///
/// Three displacement patterns are considered: corners moving in the same
/// direction, both corners moving inward, and both moving outward. Each
/// yields a quadratic in the radius; the smallest admissible root wins.
pub fn gaussian_radius(height: f64, width: f64) -> f64 {
    let o = MIN_OVERLAP;
    let sum = height + width;
    let area = height * width;

    // smaller root of a r^2 - b r + c = 0, written as 2c / (b + sqrt(disc))
    let shifted = {
        let (b, c) = (sum, area * (1.0 - o) / (1.0 + o));
        2.0 * c / (b + (b * b - 4.0 * c).sqrt())
    };
    let shrunk = {
        let (a, b, c) = (4.0, 2.0 * sum, (1.0 - o) * area);
        2.0 * c / (b + (b * b - 4.0 * a * c).sqrt())
    };
    // positive root of 4o r^2 + 2o(h+w) r - (1-o) hw = 0
    let grown = {
        let (a, b, c) = (4.0 * o, 2.0 * o * sum, (1.0 - o) * area);
        2.0 * c / (b + (b * b + 4.0 * a * c).sqrt())
    };
    shifted.min(shrunk).min(grown)
}

/// Gaussian standard deviation, in cells, for an object of `size` pixels.
pub fn gaussian_sigma(size: Size, downsample: usize) -> Result<f64> {
    if !(size.w > 0.0 && size.h > 0.0) || !size.w.is_finite() || !size.h.is_finite() {
        return Err(Error::invalid(format!(
            "object size must be positive, got {}x{}",
            size.w, size.h
        )));
    }
    if downsample == 0 {
        return Err(Error::invalid("downsample must be >= 1"));
    }
    let r = downsample as f64;
    let radius = gaussian_radius(size.h / r, size.w / r);
    Ok(((2.0 * radius + 1.0) / 6.0).max(MIN_SIGMA))
}

/// Draws `exp(-d^2 / (2 sigma^2))` around `center` on channel `ch`, keeping
/// the elementwise maximum with what is already there. Support is cut at
/// `3 sigma`.
pub fn draw_gaussian(grid: &mut Grid, ch: usize, center: GridPoint, sigma: f64) {
    let reach = 3.0 * sigma;
    let rad = reach.ceil() as isize;
    let two_var = 2.0 * sigma * sigma;
    let (h, w) = (grid.height() as isize, grid.width() as isize);
    let (cr, cc) = (center.row as isize, center.col as isize);
    for dy in -rad..=rad {
        let row = cr + dy;
        if row < 0 || row >= h {
            continue;
        }
        for dx in -rad..=rad {
            let col = cc + dx;
            if col < 0 || col >= w {
                continue;
            }
            let d2 = (dx * dx + dy * dy) as f64;
            if d2 > reach * reach {
                continue;
            }
            let v = (-d2 / two_var).exp();
            let (row, col) = (row as usize, col as usize);
            if v > grid.get(row, col, ch) {
                grid.set(row, col, ch, v);
            }
        }
    }
}

/// Heatmap cell for a keypoint. Points up to one cell outside the grid are
/// clamped onto the border; anything further out yields `None`.
pub fn anchor_cell(p: TopPoint, downsample: usize, dims: GridDims) -> Option<GridPoint> {
    let r = downsample as f64;
    let cx = (p.x / r).floor();
    let cy = (p.y / r).floor();
    if !cx.is_finite() || !cy.is_finite() {
        return None;
    }
    let (w, h) = (dims.width as f64, dims.height as f64);
    if cx < -1.0 || cy < -1.0 || cx > w || cy > h {
        return None;
    }
    Some(GridPoint::new(
        cx.clamp(0.0, w - 1.0) as usize,
        cy.clamp(0.0, h - 1.0) as usize,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedHeatmap {
    pub grid: Grid,
    /// Objects whose keypoint fell too far outside the grid to render.
    pub skipped: usize,
}

/// Renders the ground-truth heatmap of one frame.
pub fn render_gt_heatmap(ann: &FrameAnnotations, geom: &FrameGeometry) -> Result<RenderedHeatmap> {
    geom.validate()?;
    let dims = geom.grid_dims();
    let mut grid = Grid::zeros(dims.height, dims.width, geom.num_classes);
    let mut skipped = 0;
    for obj in &ann.objects {
        obj.bbox.validate()?;
        if obj.class_id >= geom.num_classes {
            return Err(Error::invalid(format!(
                "class {} out of range for {} classes",
                obj.class_id, geom.num_classes
            )));
        }
        let p = geom.keypoint.anchor(&obj.bbox);
        let Some(cell) = anchor_cell(p, geom.downsample, dims) else {
            skipped += 1;
            continue;
        };
        let sigma = gaussian_sigma(obj.bbox.size(), geom.downsample)?;
        draw_gaussian(&mut grid, obj.class_id, cell, sigma);
    }
    Ok(RenderedHeatmap { grid, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub cell: GridPoint,
    pub class_id: usize,
    pub score: f64,
}

fn is_local_max(heatmap: &Grid, row: usize, col: usize, ch: usize) -> bool {
    let v = heatmap.get(row, col, ch);
    let (h, w) = (heatmap.height(), heatmap.width());
    for r in row.saturating_sub(1)..=(row + 1).min(h - 1) {
        for c in col.saturating_sub(1)..=(col + 1).min(w - 1) {
            if (r, c) != (row, col) && heatmap.get(r, c, ch) > v {
                return false;
            }
        }
    }
    true
}

/// Cells that are `>=` all eight neighbours of the same channel and at or
/// above `score_threshold`, best first, at most `k` of them.
///
/// Equal scores are ordered by row, then column, then channel.
pub fn extract_peaks(heatmap: &Grid, k: usize, score_threshold: f64) -> Vec<Peak> {
    let mut peaks = Vec::new();
    for row in 0..heatmap.height() {
        for col in 0..heatmap.width() {
            for ch in 0..heatmap.channels() {
                let v = heatmap.get(row, col, ch);
                if v < score_threshold || !is_local_max(heatmap, row, col, ch) {
                    continue;
                }
                peaks.push(Peak {
                    cell: GridPoint::new(col, row),
                    class_id: ch,
                    score: v,
                });
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.cell.row.cmp(&b.cell.row))
            .then(a.cell.col.cmp(&b.cell.col))
            .then(a.class_id.cmp(&b.class_id))
    });
    peaks.truncate(k);
    peaks
}

/// Turns head outputs into detections by reading every head at the peak cells.
pub fn decode_detections(head: &HeadOutput, cfg: &PipelineConfig) -> Result<Vec<Detection>> {
    head.validate()?;
    if head.downsample != cfg.downsample {
        return Err(Error::dims(format!(
            "head output uses downsample {}, config says {}",
            head.downsample, cfg.downsample
        )));
    }
    if head.heatmap.channels() != cfg.num_classes {
        return Err(Error::dims(format!(
            "heatmap has {} channels, config expects {} classes",
            head.heatmap.channels(),
            cfg.num_classes
        )));
    }
    let r = head.downsample as f64;
    let peaks = extract_peaks(&head.heatmap, cfg.max_peaks, cfg.score_threshold);
    let mut dets = Vec::with_capacity(peaks.len());
    for peak in peaks {
        let (w, h) = head.size_map.pair_at(peak.cell);
        if !(w > 0.0 && h > 0.0) {
            continue;
        }
        let (ox, oy) = head.offset_map.pair_at(peak.cell);
        let (dx, dy) = head.disp_map.pair_at(peak.cell);
        dets.push(Detection {
            top: TopPoint::new(
                (peak.cell.col as f64 + ox) * r,
                (peak.cell.row as f64 + oy) * r,
            ),
            cell: peak.cell,
            size: Size::new(w, h),
            score: peak.score,
            class_id: peak.class_id,
            displacement: Vec2::new(dx, dy),
        });
    }
    Ok(dets)
}

/// Orders detections so that the highest score comes first; ties keep input order.
pub(crate) fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| match dets[b].score.total_cmp(&dets[a].score) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order
}
