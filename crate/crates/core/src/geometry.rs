//! Box geometry, keypoint anchors and grid quantization.

use crate::error::{Error, Result};
use crate::grid::GridDims;

/// Axis-aligned box in image pixels, stored as top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, w: f64, h: f64) -> Result<Self> {
        let b = BBox { x1, y1, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x1, self.y1, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!(
                "box extent must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn x2(&self) -> f64 {
        self.x1 + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y1 + self.h
    }

    pub fn size(&self) -> Size {
        Size {
            w: self.w,
            h: self.h,
        }
    }

    pub fn corners(&self) -> Corners {
        Corners {
            x1: self.x1,
            y1: self.y1,
            x2: self.x2(),
            y2: self.y2(),
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn contains(&self, p: TopPoint) -> bool {
        p.x >= self.x1 && p.x <= self.x2() && p.y >= self.y1 && p.y <= self.y2()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let iw = (self.x2().min(other.x2()) - self.x1.max(other.x1)).max(0.0);
        let ih = (self.y2().min(other.y2()) - self.y1.max(other.y1)).max(0.0);
        let inter = iw * ih;
        if inter <= 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            ..*self
        }
    }
}

/// Corner form `(x1, y1, x2, y2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corners {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Corners {
    pub fn to_bbox(&self) -> BBox {
        BBox {
            x1: self.x1,
            y1: self.y1,
            w: self.x2 - self.x1,
            h: self.y2 - self.y1,
        }
    }
}

/// Continuous keypoint position in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TopPoint {
    pub x: f64,
    pub y: f64,
}

impl TopPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TopPoint { x, y }
    }

    pub fn distance(&self, other: &TopPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn offset_by(&self, v: Vec2) -> TopPoint {
        TopPoint::new(self.x + v.x, self.y + v.y)
    }
}

/// Integer heatmap cell. `col` runs along x, `row` along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint {
    pub col: usize,
    pub row: usize,
}

impl GridPoint {
    pub fn new(col: usize, row: usize) -> Self {
        GridPoint { col, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Size {
    pub w: f64,
    pub h: f64,
}

impl Size {
    pub fn new(w: f64, h: f64) -> Self {
        Size { w, h }
    }
}

/// Which point of a box anchors it on the heatmap.
///
/// `Top` sits at half the width and a tenth of the height; `Center` is the
/// conventional box center, kept for the keypoint comparison harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Keypoint {
    #[default]
    Top,
    Center,
}

impl Keypoint {
    pub fn name(&self) -> &'static str {
        match self {
            Keypoint::Top => "top",
            Keypoint::Center => "center",
        }
    }

    /// Distances from the anchor up to the top edge and down to the bottom edge.
    fn vertical_split(&self, h: f64) -> (f64, f64) {
        match self {
            Keypoint::Top => (h / 10.0, 9.0 * h / 10.0),
            Keypoint::Center => (h / 2.0, h / 2.0),
        }
    }

    pub fn anchor(&self, b: &BBox) -> TopPoint {
        let (above, _) = self.vertical_split(b.h);
        TopPoint::new(b.x1 + b.w / 2.0, b.y1 + above)
    }

    pub fn box_from_anchor(&self, p: TopPoint, size: Size) -> Corners {
        let (above, below) = self.vertical_split(size.h);
        Corners {
            x1: p.x - size.w / 2.0,
            y1: p.y - above,
            x2: p.x + size.w / 2.0,
            y2: p.y + below,
        }
    }
}

impl std::str::FromStr for Keypoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(Keypoint::Top),
            "center" => Ok(Keypoint::Center),
            other => Err(Error::invalid(format!(
                "unknown keypoint `{other}` (expected top or center)"
            ))),
        }
    }
}

/// Top keypoint of a box: `(x1 + w/2, y1 + h/10)`.
pub fn top_point_from_bbox(b: &BBox) -> Result<TopPoint> {
    b.validate()?;
    Ok(Keypoint::Top.anchor(b))
}

/// Box corners of a decoded detection, `(px - w/2, py - h/10, px + w/2, py + 9h/10)`
/// for the top keypoint.
pub fn bbox_from_detection(d: &Detection) -> Corners {
    Keypoint::Top.box_from_anchor(d.top, d.size)
}

/// Splits a keypoint into its heatmap cell and the sub-cell remainder.
///
/// The cell is `floor(p / r)` and the offset `p / r - cell`, so each offset
/// component lies in `[0, 1)` and `(cell + offset) * r` reproduces `p`.
pub fn quantize(p: TopPoint, r: usize, dims: GridDims) -> Result<(GridPoint, Vec2)> {
    if r == 0 {
        return Err(Error::invalid("downsampling factor must be >= 1"));
    }
    if !p.x.is_finite() || !p.y.is_finite() {
        return Err(Error::invalid(format!("non-finite point {p:?}")));
    }
    let r = r as f64;
    let (sx, sy) = (p.x / r, p.y / r);
    let (cx, cy) = (sx.floor(), sy.floor());
    if cx < 0.0 || cy < 0.0 || cx >= dims.width as f64 || cy >= dims.height as f64 {
        return Err(Error::invalid(format!(
            "point ({}, {}) falls outside the {}x{} grid",
            p.x, p.y, dims.width, dims.height
        )));
    }
    Ok((
        GridPoint::new(cx as usize, cy as usize),
        Vec2::new(sx - cx, sy - cy),
    ))
}

/// Decoded object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Offset-corrected keypoint in image pixels.
    pub top: TopPoint,
    pub cell: GridPoint,
    pub size: Size,
    pub score: f64,
    pub class_id: usize,
    /// Motion from the previous frame to this one, in pixels.
    pub displacement: Vec2,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn det(top: (f64, f64), size: (f64, f64)) -> Detection {
        Detection {
            top: TopPoint::new(top.0, top.1),
            cell: GridPoint::new(0, 0),
            size: Size::new(size.0, size.1),
            score: 1.0,
            class_id: 0,
            displacement: Vec2::default(),
        }
    }

    #[test]
    fn top_point_examples() {
        let p = top_point_from_bbox(&BBox::new(10.0, 20.0, 40.0, 100.0).unwrap()).unwrap();
        assert_eq!(p, TopPoint::new(30.0, 30.0));
        let p = top_point_from_bbox(&BBox::new(0.0, 0.0, 2.0, 10.0).unwrap()).unwrap();
        assert_eq!(p, TopPoint::new(1.0, 1.0));
        let p = top_point_from_bbox(&BBox::new(5.5, 7.0, 3.0, 5.0).unwrap()).unwrap();
        assert_abs_diff_eq!(p.x, 7.0);
        assert_abs_diff_eq!(p.y, 7.5);
    }

    #[test]
    fn top_point_rejects_degenerate_box() {
        let b = BBox {
            x1: 0.0,
            y1: 0.0,
            w: 0.0,
            h: 5.0,
        };
        assert!(top_point_from_bbox(&b).is_err());
        assert!(BBox::new(0.0, 0.0, 3.0, -1.0).is_err());
        assert!(BBox::new(f64::NAN, 0.0, 3.0, 1.0).is_err());
    }

    #[test]
    fn quantize_examples() {
        let dims = GridDims::new(64, 64);
        let (c, o) = quantize(TopPoint::new(30.0, 30.0), 4, dims).unwrap();
        assert_eq!(c, GridPoint::new(7, 7));
        assert_eq!(o, Vec2::new(0.5, 0.5));
        let (c, o) = quantize(TopPoint::new(8.0, 8.0), 4, dims).unwrap();
        assert_eq!(c, GridPoint::new(2, 2));
        assert_eq!(o, Vec2::new(0.0, 0.0));
        let (c, o) = quantize(TopPoint::new(9.0, 11.0), 4, dims).unwrap();
        assert_eq!(c, GridPoint::new(2, 2));
        assert_eq!(o, Vec2::new(0.25, 0.75));
    }

    #[test]
    fn quantize_rejects_out_of_grid() {
        let dims = GridDims::new(4, 4);
        assert!(quantize(TopPoint::new(16.0, 0.0), 4, dims).is_err());
        assert!(quantize(TopPoint::new(-0.5, 0.0), 4, dims).is_err());
        assert!(quantize(TopPoint::new(f64::INFINITY, 0.0), 4, dims).is_err());
    }

    #[test]
    fn bbox_from_detection_examples() {
        let c = bbox_from_detection(&det((30.0, 30.0), (40.0, 100.0)));
        assert_eq!((c.x1, c.y1, c.x2, c.y2), (10.0, 20.0, 50.0, 120.0));
        let c = bbox_from_detection(&det((1.0, 1.0), (2.0, 10.0)));
        assert_eq!((c.x1, c.y1, c.x2, c.y2), (0.0, 0.0, 2.0, 10.0));
        let c = bbox_from_detection(&det((7.0, 7.5), (3.0, 5.0)));
        assert_abs_diff_eq!(c.x1, 5.5);
        assert_abs_diff_eq!(c.y1, 7.0);
        assert_abs_diff_eq!(c.x2, 8.5);
        assert_abs_diff_eq!(c.y2, 12.0);
    }

    #[test]
    fn center_keypoint_round_trip() {
        let b = BBox::new(3.0, 4.0, 10.0, 20.0).unwrap();
        let p = Keypoint::Center.anchor(&b);
        assert_eq!(p, TopPoint::new(8.0, 14.0));
        assert_eq!(Keypoint::Center.box_from_anchor(p, b.size()).to_bbox(), b);
    }

    #[test]
    fn iou_basics() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_abs_diff_eq!(a.iou(&a), 1.0);
        let b = BBox::new(5.0, 0.0, 10.0, 10.0).unwrap();
        assert_abs_diff_eq!(a.iou(&b), 50.0 / 150.0);
        let c = BBox::new(20.0, 20.0, 1.0, 1.0).unwrap();
        assert_eq!(a.iou(&c), 0.0);
    }

    proptest! {
        #[test]
        fn box_round_trip(x1 in -500.0..500.0f64, y1 in -500.0..500.0f64,
                          w in 0.01..400.0f64, h in 0.01..400.0f64) {
            let b = BBox::new(x1, y1, w, h).unwrap();
            let top = top_point_from_bbox(&b).unwrap();
            let back = bbox_from_detection(&det((top.x, top.y), (w, h))).to_bbox();
            prop_assert!((back.x1 - b.x1).abs() < 1e-9);
            prop_assert!((back.y1 - b.y1).abs() < 1e-9);
            prop_assert!((back.w - b.w).abs() < 1e-9);
            prop_assert!((back.h - b.h).abs() < 1e-9);
        }

        #[test]
        fn quantize_round_trip(x in 0.0..4096.0f64, y in 0.0..4096.0f64, r in 1usize..9) {
            let dims = GridDims::new(4096, 4096);
            let (cell, off) = quantize(TopPoint::new(x, y), r, dims).unwrap();
            prop_assert!((0.0..1.0).contains(&off.x));
            prop_assert!((0.0..1.0).contains(&off.y));
            let rx = (cell.col as f64 + off.x) * r as f64;
            let ry = (cell.row as f64 + off.y) * r as f64;
            prop_assert!((rx - x).abs() < 1e-9);
            prop_assert!((ry - y).abs() < 1e-9);
        }
    }
}
