//! CLEAR-MOT and identity (IDF1) scoring of tracker output.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use crate::assignment::{gated_assignment, min_cost_assignment};
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Coverage at or above which a trajectory is mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage at or below which a trajectory is mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub id: u64,
    pub bbox: BBox,
}

/// Boxes per frame, keyed by frame number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sequence {
    frames: BTreeMap<u32, Vec<LabeledBox>>,
}

impl Sequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a box; an id may appear at most once per frame.
    pub fn push(&mut self, frame: u32, id: u64, bbox: BBox) -> Result<()> {
        bbox.validate()?;
        let boxes = self.frames.entry(frame).or_default();
        if boxes.iter().any(|b| b.id == id) {
            return Err(Error::invalid(format!(
                "id {id} appears twice in frame {frame}"
            )));
        }
        boxes.push(LabeledBox { id, bbox });
        Ok(())
    }

    /// Registers a frame even if it holds no boxes.
    pub fn touch(&mut self, frame: u32) {
        self.frames.entry(frame).or_default();
    }

    pub fn frame(&self, frame: u32) -> &[LabeledBox] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn frames(&self) -> impl Iterator<Item = (u32, &[LabeledBox])> {
        self.frames.iter().map(|(&f, b)| (f, b.as_slice()))
    }

    pub fn frame_range(&self) -> Option<(u32, u32)> {
        let first = *self.frames.keys().next()?;
        let last = *self.frames.keys().next_back()?;
        Some((first, last))
    }

    pub fn total_boxes(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.frames.values().flatten().map(|b| b.id).collect()
    }

    /// Copy with every id passed through `f`.
    pub fn map_ids(&self, f: impl Fn(u64) -> u64) -> Sequence {
        Sequence {
            frames: self
                .frames
                .iter()
                .map(|(&k, v)| {
                    (
                        k,
                        v.iter().map(|b| LabeledBox { id: f(b.id), ..*b }).collect(),
                    )
                })
                .collect(),
        }
    }
}

/// Last prediction id each ground-truth id was matched to.
pub type Correspondence = HashMap<u64, u64>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    /// `(gt id, pred id, IoU)` for every matched pair.
    pub matches: Vec<(u64, u64, f64)>,
}

/// Matches one frame under the CLEAR protocol and updates `corr`.
///
/// A ground-truth object keeps its previous partner when that prediction is
/// still present with IoU at or above the threshold. The remaining objects
/// are assigned by Hungarian matching on `1 - IoU` over pairs that clear the
/// threshold. A match to a different prediction than last time is an
/// identity switch.
pub fn match_frame(
    gt: &[LabeledBox],
    pred: &[LabeledBox],
    corr: &mut Correspondence,
    iou_threshold: f64,
) -> FrameMatch {
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut out = FrameMatch::default();

    for (gi, g) in gt.iter().enumerate() {
        let Some(&pid) = corr.get(&g.id) else {
            continue;
        };
        let Some(pi) = pred.iter().position(|p| p.id == pid) else {
            continue;
        };
        if pred_used[pi] {
            continue;
        }
        let iou = g.bbox.iou(&pred[pi].bbox);
        if iou >= iou_threshold {
            gt_used[gi] = true;
            pred_used[pi] = true;
            out.matches.push((g.id, pid, iou));
        }
    }

    let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let free_pred: Vec<usize> = (0..pred.len()).filter(|&j| !pred_used[j]).collect();
    let cost: Vec<Vec<Option<f64>>> = free_gt
        .iter()
        .map(|&i| {
            free_pred
                .iter()
                .map(|&j| {
                    let iou = gt[i].bbox.iou(&pred[j].bbox);
                    (iou >= iou_threshold).then_some(1.0 - iou)
                })
                .collect()
        })
        .collect();
    for (a, b) in gated_assignment(&cost) {
        let (g, p) = (&gt[free_gt[a]], &pred[free_pred[b]]);
        if corr.get(&g.id).is_some_and(|&last| last != p.id) {
            out.idsw += 1;
        }
        corr.insert(g.id, p.id);
        out.matches.push((g.id, p.id, g.bbox.iou(&p.bbox)));
    }

    out.tp = out.matches.len();
    out.fp = pred.len() - out.tp;
    out.fn_ = gt.len() - out.tp;
    out
}

fn check_inputs(gt: &Sequence, pred: &Sequence, iou_threshold: f64) -> Result<()> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "IoU threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    if gt.total_boxes() == 0 {
        return Err(Error::invalid("ground truth is empty; MOTA is undefined"));
    }
    let (lo, hi) = gt.frame_range().expect("non-empty ground truth");
    if let Some((plo, phi)) = pred.frame_range() {
        if plo < lo || phi > hi {
            return Err(Error::invalid(format!(
                "prediction frames {plo}..={phi} fall outside ground-truth frames {lo}..={hi}"
            )));
        }
    }
    Ok(())
}

/// CLEAR-MOT tallies for a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearMetrics {
    pub mota: f64,
    /// Mean IoU over matched pairs; 0 when nothing matched.
    pub motp: f64,
    pub mostly_tracked: f64,
    pub mostly_lost: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub gt_total: usize,
    pub gt_tracks: usize,
}

pub fn compute_clear(gt: &Sequence, pred: &Sequence, iou_threshold: f64) -> Result<ClearMetrics> {
    check_inputs(gt, pred, iou_threshold)?;
    let frames: BTreeSet<u32> = gt
        .frames
        .keys()
        .chain(pred.frames.keys())
        .copied()
        .collect();
    let mut corr = Correspondence::new();
    let (mut tp, mut fp, mut fn_, mut idsw) = (0, 0, 0, 0);
    let mut iou_sum = 0.0;
    // gt id -> (frames present, frames matched)
    let mut coverage: HashMap<u64, (usize, usize)> = HashMap::new();
    for f in frames {
        let g = gt.frame(f);
        let m = match_frame(g, pred.frame(f), &mut corr, iou_threshold);
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        idsw += m.idsw;
        for b in g {
            coverage.entry(b.id).or_default().0 += 1;
        }
        for &(gid, _, iou) in &m.matches {
            coverage.get_mut(&gid).expect("matched ids are present").1 += 1;
            iou_sum += iou;
        }
    }
    let gt_total = gt.total_boxes();
    let gt_tracks = coverage.len();
    let ratio = |pred: fn(f64) -> bool| {
        let n = coverage
            .values()
            .filter(|&&(present, hit)| pred(hit as f64 / present as f64))
            .count();
        n as f64 / gt_tracks as f64
    };
    Ok(ClearMetrics {
        mota: 1.0 - (fp + fn_ + idsw) as f64 / gt_total as f64,
        motp: if tp == 0 { 0.0 } else { iou_sum / tp as f64 },
        mostly_tracked: ratio(|c| c >= MOSTLY_TRACKED),
        mostly_lost: ratio(|c| c <= MOSTLY_LOST),
        tp,
        fp,
        fn_,
        idsw,
        gt_total,
        gt_tracks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityMetrics {
    pub idf1: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// Frames in which each (gt trajectory, pred trajectory) pair overlaps at or
/// above the threshold. Rows follow `gt_ids`, columns `pred_ids`.
pub fn trajectory_overlaps(
    gt: &Sequence,
    pred: &Sequence,
    iou_threshold: f64,
) -> (Vec<u64>, Vec<u64>, Vec<Vec<usize>>) {
    let gt_ids: Vec<u64> = gt.ids().into_iter().collect();
    let pred_ids: Vec<u64> = pred.ids().into_iter().collect();
    let gi: HashMap<u64, usize> = gt_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let pi: HashMap<u64, usize> = pred_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut overlap = vec![vec![0usize; pred_ids.len()]; gt_ids.len()];
    for (f, gboxes) in gt.frames() {
        for g in gboxes {
            for p in pred.frame(f) {
                if g.bbox.iou(&p.bbox) >= iou_threshold {
                    overlap[gi[&g.id]][pi[&p.id]] += 1;
                }
            }
        }
    }
    (gt_ids, pred_ids, overlap)
}

/// Identity scores from one global one-to-one pairing of trajectories.
///
/// Since `IDFP + IDFN = |gt| + |pred| - 2 IDTP`, minimising identity errors
/// is the same as maximising the frames on which paired trajectories overlap.
pub fn compute_idf1(gt: &Sequence, pred: &Sequence, iou_threshold: f64) -> Result<IdentityMetrics> {
    check_inputs(gt, pred, iou_threshold)?;
    let (_, _, overlap) = trajectory_overlaps(gt, pred, iou_threshold);
    let cost: Vec<Vec<f64>> = overlap
        .iter()
        .map(|row| row.iter().map(|&c| -(c as f64)).collect())
        .collect();
    let idtp: usize = min_cost_assignment(&cost)
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| overlap[i][j]))
        .sum();
    let (n_gt, n_pred) = (gt.total_boxes(), pred.total_boxes());
    Ok(IdentityMetrics {
        idf1: 2.0 * idtp as f64 / (n_gt + n_pred) as f64,
        idtp,
        idfp: n_pred - idtp,
        idfn: n_gt - idtp,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub clear: ClearMetrics,
    pub identity: IdentityMetrics,
}

pub fn evaluate(gt: &Sequence, pred: &Sequence, iou_threshold: f64) -> Result<MetricsReport> {
    Ok(MetricsReport {
        clear: compute_clear(gt, pred, iou_threshold)?,
        identity: compute_idf1(gt, pred, iou_threshold)?,
    })
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 9] =
        ["MOTA", "MOTP", "IDF1", "MT", "ML", "FP", "FN", "IDSW", "GT"];

    pub fn mota(&self) -> f64 {
        self.clear.mota
    }

    pub fn idf1(&self) -> f64 {
        self.identity.idf1
    }

    fn cells(&self, precise: bool) -> Vec<String> {
        let c = &self.clear;
        let real = |v: f64| {
            if precise {
                v.to_string()
            } else {
                format!("{v:.3}")
            }
        };
        vec![
            real(c.mota),
            real(c.motp),
            real(self.identity.idf1),
            real(c.mostly_tracked),
            real(c.mostly_lost),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.idsw.to_string(),
            c.gt_total.to_string(),
        ]
    }

    pub fn csv_header() -> String {
        Self::COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.cells(true).join(",")
    }

    /// Fixed-width text row; pair with [`MetricsReport::text_header`].
    pub fn text_row(&self) -> String {
        self.cells(false)
            .iter()
            .map(|c| format!("{c:>8}"))
            .collect()
    }

    pub fn text_header() -> String {
        Self::COLUMNS.iter().map(|c| format!("{c:>8}")).collect()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::text_header())?;
        write!(f, "{}", self.text_row())
    }
}
