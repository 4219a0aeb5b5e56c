//! Reference implementations of the training losses.
//!
//! Each loss returns its value together with the analytic gradient with
//! respect to the prediction grid, so an external training stack can be
//! checked against these functions cell by cell. Every component is
//! normalised by the number of objects `N` in the frame; frames without
//! objects use `N = 1`.

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{GridPoint, Size, Vec2};
use crate::grid::Grid;
use crate::heatmap::{anchor_cell, render_gt_heatmap, FrameAnnotations, FrameGeometry, HeadOutput};

/// Predictions are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-12;

/// Loss value plus gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_h: f64,
    pub l_size: f64,
    pub l_off: f64,
    pub l_d: f64,
    pub total: f64,
    pub n_objects: usize,
}

/// Neumaier-compensated running sum; keeps finite differences of large
/// sums meaningful.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn normaliser(n: usize) -> f64 {
    n.max(1) as f64
}

/// Penalty-reduced focal loss over every cell and channel.
///
/// A cell is positive iff its ground truth is exactly 1. Positive cells add
/// `(1 - p)^alpha ln p`, negative cells `(1 - g)^beta p^alpha ln(1 - p)`; the
/// loss is minus their sum divided by `N`.
pub fn focal_loss(pred: &Grid, gt: &Grid, alpha: f64, beta: f64, n: usize) -> Result<LossValue> {
    pred.ensure_same_shape(gt, "focal loss prediction vs ground truth")?;
    if let Some(g) = gt.values().iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::invalid(format!(
            "ground-truth heatmap value {g} outside [0, 1]"
        )));
    }
    let positives = gt.values().iter().filter(|&&g| g == 1.0).count();
    if n == 0 && positives > 0 {
        return Err(Error::invalid(format!(
            "N = 0 but the ground truth has {positives} positive cells"
        )));
    }
    let scale = -1.0 / normaliser(n);
    let mut total = CompensatedSum::default();
    let mut grad = Vec::with_capacity(pred.values().len());
    for (&raw, &g) in pred.values().iter().zip(gt.values()) {
        let clamped = !(EPS..=1.0 - EPS).contains(&raw);
        let p = raw.clamp(EPS, 1.0 - EPS);
        let (l, dl) = if g == 1.0 {
            let q = 1.0 - p;
            let l = q.powf(alpha) * p.ln();
            let dl = -alpha * q.powf(alpha - 1.0) * p.ln() + q.powf(alpha) / p;
            (l, dl)
        } else {
            let w = (1.0 - g).powf(beta);
            let log_q = (1.0 - p).ln();
            let l = w * p.powf(alpha) * log_q;
            let dl = w * (alpha * p.powf(alpha - 1.0) * log_q - p.powf(alpha) / (1.0 - p));
            (l, dl)
        };
        total.add(l);
        grad.push(if clamped { 0.0 } else { scale * dl });
    }
    Ok(LossValue {
        value: scale * total.value(),
        grad: pred.with_values(grad)?,
    })
}

/// One supervised cell of a two-channel regression head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supervision {
    pub cell: GridPoint,
    pub target: [f64; 2],
}

/// L1 loss on a two-channel map evaluated only at the listed cells.
///
/// Unlisted cells contribute nothing and get zero gradient. The subgradient
/// at an exact match is 0.
pub fn masked_l1_loss(pred: &Grid, targets: &[Supervision], n: usize) -> Result<LossValue> {
    if pred.channels() != 2 {
        return Err(Error::dims(format!(
            "regression map needs 2 channels, got {}",
            pred.channels()
        )));
    }
    let dims = pred.dims();
    let scale = 1.0 / normaliser(n);
    let mut total = CompensatedSum::default();
    let mut grad = Grid::zeros(pred.height(), pred.width(), 2);
    for s in targets {
        if !dims.contains(s.cell) {
            return Err(Error::invalid(format!(
                "supervision cell {:?} outside the {}x{} grid",
                s.cell, dims.height, dims.width
            )));
        }
        for ch in 0..2 {
            let residual = pred.get(s.cell.row, s.cell.col, ch) - s.target[ch];
            total.add(residual.abs());
            let i = grad.index(s.cell.row, s.cell.col, ch);
            let sign = if residual > 0.0 {
                1.0
            } else if residual < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad.values_mut()[i] += scale * sign;
        }
    }
    Ok(LossValue {
        value: scale * total.value(),
        grad,
    })
}

/// Regression targets of one ground-truth object, read at its keypoint cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisedObject {
    pub cell: GridPoint,
    pub size: Size,
    pub offset: Vec2,
    pub displacement: Vec2,
}

/// Everything the losses compare predictions against for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTargets {
    pub heatmap: Grid,
    pub objects: Vec<SupervisedObject>,
}

impl LossTargets {
    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn size_supervision(&self) -> Vec<Supervision> {
        self.supervision(|o| [o.size.w, o.size.h])
    }

    pub fn offset_supervision(&self) -> Vec<Supervision> {
        self.supervision(|o| [o.offset.x, o.offset.y])
    }

    pub fn displacement_supervision(&self) -> Vec<Supervision> {
        self.supervision(|o| [o.displacement.x, o.displacement.y])
    }

    fn supervision(&self, f: impl Fn(&SupervisedObject) -> [f64; 2]) -> Vec<Supervision> {
        self.objects
            .iter()
            .map(|o| Supervision {
                cell: o.cell,
                target: f(o),
            })
            .collect()
    }

    /// Recovers targets from an ideal head output: positives are the cells
    /// whose heatmap value is exactly 1, and the regression targets are
    /// read from the other heads at those cells.
    pub fn from_ideal_head(head: &HeadOutput) -> Result<Self> {
        head.validate()?;
        let mut objects = Vec::new();
        let hm = &head.heatmap;
        for row in 0..hm.height() {
            for col in 0..hm.width() {
                if !(0..hm.channels()).any(|ch| hm.get(row, col, ch) == 1.0) {
                    continue;
                }
                let cell = GridPoint::new(col, row);
                let (w, h) = head.size_map.pair_at(cell);
                let (ox, oy) = head.offset_map.pair_at(cell);
                let (dx, dy) = head.disp_map.pair_at(cell);
                objects.push(SupervisedObject {
                    cell,
                    size: Size::new(w, h),
                    offset: Vec2::new(ox, oy),
                    displacement: Vec2::new(dx, dy),
                });
            }
        }
        Ok(LossTargets {
            heatmap: hm.clone(),
            objects,
        })
    }
}

/// Regression targets for every renderable object of `ann`. Displacements
/// are taken against the same track id in `prev`; objects absent there get
/// `(0, 0)`.
pub fn supervised_objects(
    ann: &FrameAnnotations,
    prev: Option<&FrameAnnotations>,
    geom: &FrameGeometry,
) -> Vec<SupervisedObject> {
    let dims = geom.grid_dims();
    let r = geom.downsample as f64;
    let mut out = Vec::with_capacity(ann.objects.len());
    for obj in &ann.objects {
        let p = geom.keypoint.anchor(&obj.bbox);
        let Some(cell) = anchor_cell(p, geom.downsample, dims) else {
            continue;
        };
        let displacement = prev
            .and_then(|pf| pf.find(obj.track_id))
            .map(|po| {
                let q = geom.keypoint.anchor(&po.bbox);
                Vec2::new(p.x - q.x, p.y - q.y)
            })
            .unwrap_or_default();
        out.push(SupervisedObject {
            cell,
            size: obj.bbox.size(),
            // relative to the (possibly clamped) cell, so decoding restores p
            offset: Vec2::new(p.x / r - cell.col as f64, p.y / r - cell.row as f64),
            displacement,
        });
    }
    out
}

/// Full set of loss targets for one annotated frame.
pub fn loss_targets(
    ann: &FrameAnnotations,
    prev: Option<&FrameAnnotations>,
    geom: &FrameGeometry,
) -> Result<LossTargets> {
    Ok(LossTargets {
        heatmap: render_gt_heatmap(ann, geom)?.grid,
        objects: supervised_objects(ann, prev, geom),
    })
}

/// Combined objective `L_h + lambda_size L_size + L_off + L_D`.
pub fn total_loss(
    pred: &HeadOutput,
    targets: &LossTargets,
    cfg: &PipelineConfig,
) -> Result<LossBreakdown> {
    pred.validate()?;
    let n = targets.n_objects();
    let l_h = focal_loss(
        &pred.heatmap,
        &targets.heatmap,
        cfg.focal_alpha,
        cfg.focal_beta,
        n,
    )?
    .value;
    let l_size = masked_l1_loss(&pred.size_map, &targets.size_supervision(), n)?.value;
    let l_off = masked_l1_loss(&pred.offset_map, &targets.offset_supervision(), n)?.value;
    let l_d = masked_l1_loss(&pred.disp_map, &targets.displacement_supervision(), n)?.value;
    Ok(LossBreakdown {
        l_h,
        l_size,
        l_off,
        l_d,
        total: l_h + cfg.lambda_size * l_size + l_off + l_d,
        n_objects: n,
    })
}
