//! Displacement-conditioned data association and track lifecycle.
//!
//! Each detection carries the motion its object made since the previous
//! frame. Subtracting it from the detected keypoint predicts where the
//! object was one frame ago; that prediction is compared against where the
//! live tracks were last seen. Tracks that find no detection are deleted on
//! the spot, and detections that find no track open a new one.

use crate::assignment::gated_assignment;
use crate::config::PipelineConfig;
use crate::geometry::{BBox, Detection, Keypoint, Size, TopPoint};
use crate::heatmap::score_order;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Deleted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub class_id: usize,
    pub last_top: TopPoint,
    pub last_size: Size,
    pub last_frame: u32,
    pub state: TrackState,
    pub history: Vec<(u32, BBox)>,
}

/// Result of matching live tracks against one frame of detections.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matching {
    /// `(track id, detection index)` pairs.
    pub matches: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_dets: Vec<usize>,
}

impl Matching {
    /// Sum of association distances over the matched pairs.
    pub fn total_cost(&self, tracks: &[Track], dets: &[Detection]) -> f64 {
        self.matches
            .iter()
            .map(|&(id, d)| {
                let t = tracks
                    .iter()
                    .find(|t| t.id == id)
                    .expect("matched track exists");
                t.last_top.distance(&predicted_prev_position(&dets[d]))
            })
            .sum()
    }

    fn from_pairs(tracks: &[Track], n_dets: usize, pairs: Vec<(usize, usize)>) -> Self {
        let mut track_used = vec![false; tracks.len()];
        let mut det_used = vec![false; n_dets];
        let mut matches = Vec::with_capacity(pairs.len());
        for (t, d) in pairs {
            track_used[t] = true;
            det_used[d] = true;
            matches.push((tracks[t].id, d));
        }
        Matching {
            matches,
            unmatched_tracks: tracks
                .iter()
                .zip(&track_used)
                .filter(|(_, used)| !**used)
                .map(|(t, _)| t.id)
                .collect(),
            unmatched_dets: (0..n_dets).filter(|&d| !det_used[d]).collect(),
        }
    }
}

/// Where a detection's object sat in the previous frame: top minus displacement.
pub fn predicted_prev_position(det: &Detection) -> TopPoint {
    TopPoint::new(
        det.top.x - det.displacement.x,
        det.top.y - det.displacement.y,
    )
}

pub fn predict_prev_positions(dets: &[Detection]) -> Vec<TopPoint> {
    dets.iter().map(predicted_prev_position).collect()
}

/// Association distance, or `None` when the pair is gated out.
///
/// A pair is admissible when classes agree and the Euclidean distance is at
/// most `gate_scale * max(w, h)` of the detection.
pub fn association_distance(track: &Track, det: &Detection, gate_scale: f64) -> Option<f64> {
    if track.class_id != det.class_id {
        return None;
    }
    let d = track.last_top.distance(&predicted_prev_position(det));
    let gate = gate_scale * det.size.w.max(det.size.h);
    (d <= gate).then_some(d)
}

/// Greedy matching: detections in descending score order (ties by index)
/// each claim the nearest still-free track inside the gate.
pub fn greedy_match(tracks: &[Track], dets: &[Detection], gate_scale: f64) -> Matching {
    let mut taken = vec![false; tracks.len()];
    let mut pairs = Vec::new();
    for d in score_order(dets) {
        let mut best: Option<(usize, f64)> = None;
        for (t, track) in tracks.iter().enumerate() {
            if taken[t] {
                continue;
            }
            if let Some(dist) = association_distance(track, &dets[d], gate_scale) {
                if best.is_none_or(|(_, b)| dist < b) {
                    best = Some((t, dist));
                }
            }
        }
        if let Some((t, _)) = best {
            taken[t] = true;
            pairs.push((t, d));
        }
    }
    Matching::from_pairs(tracks, dets.len(), pairs)
}

/// Optimal matching over admissible pairs: as many pairs as possible, then
/// the smallest total distance.
pub fn hungarian_match(tracks: &[Track], dets: &[Detection], gate_scale: f64) -> Matching {
    let cost: Vec<Vec<Option<f64>>> = tracks
        .iter()
        .map(|t| {
            dets.iter()
                .map(|d| association_distance(t, d, gate_scale))
                .collect()
        })
        .collect();
    let pairs = if dets.is_empty() {
        Vec::new()
    } else {
        gated_assignment(&cost)
    };
    Matching::from_pairs(tracks, dets.len(), pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matcher {
    #[default]
    Greedy,
    Hungarian,
}

impl Matcher {
    pub fn name(&self) -> &'static str {
        match self {
            Matcher::Greedy => "greedy",
            Matcher::Hungarian => "hungarian",
        }
    }

    pub fn run(&self, tracks: &[Track], dets: &[Detection], gate_scale: f64) -> Matching {
        match self {
            Matcher::Greedy => greedy_match(tracks, dets, gate_scale),
            Matcher::Hungarian => hungarian_match(tracks, dets, gate_scale),
        }
    }
}

impl std::str::FromStr for Matcher {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "greedy" => Ok(Matcher::Greedy),
            "hungarian" => Ok(Matcher::Hungarian),
            other => Err(crate::Error::invalid(format!(
                "unknown matcher `{other}` (expected greedy or hungarian)"
            ))),
        }
    }
}

/// One emitted track row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOutput {
    pub frame: u32,
    pub id: u64,
    pub bbox: BBox,
    pub score: f64,
    pub class_id: usize,
}

/// Per-sequence tracker state. Ids start at 1 and are never reused.
#[derive(Debug, Clone)]
pub struct Tracker {
    gate_scale: f64,
    keypoint: Keypoint,
    matcher: Matcher,
    active: Vec<Track>,
    retired: Vec<Track>,
    next_id: u64,
    frame: u32,
}

impl Tracker {
    pub fn new(cfg: &PipelineConfig, matcher: Matcher) -> Self {
        Tracker {
            gate_scale: cfg.gate_scale,
            keypoint: cfg.keypoint,
            matcher,
            active: Vec::new(),
            retired: Vec::new(),
            next_id: 1,
            frame: 0,
        }
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    pub fn retired(&self) -> &[Track] {
        &self.retired
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Advances one frame and returns a row for every live track, sorted by id.
    pub fn step(&mut self, dets: &[Detection]) -> Vec<TrackOutput> {
        self.frame += 1;
        let frame = self.frame;
        let matching = self.matcher.run(&self.active, dets, self.gate_scale);

        let mut det_for_track = vec![None; self.active.len()];
        for &(id, d) in &matching.matches {
            let t = self
                .active
                .iter()
                .position(|t| t.id == id)
                .expect("track exists");
            det_for_track[t] = Some(d);
        }

        let mut out = Vec::with_capacity(dets.len());
        let mut survivors = Vec::with_capacity(self.active.len() + matching.unmatched_dets.len());
        for (mut track, det) in self.active.drain(..).zip(det_for_track) {
            match det {
                Some(d) => {
                    let det = &dets[d];
                    let bbox = self.keypoint.box_from_anchor(det.top, det.size).to_bbox();
                    track.last_top = det.top;
                    track.last_size = det.size;
                    track.last_frame = frame;
                    track.history.push((frame, bbox));
                    out.push(TrackOutput {
                        frame,
                        id: track.id,
                        bbox,
                        score: det.score,
                        class_id: track.class_id,
                    });
                    survivors.push(track);
                }
                None => {
                    track.state = TrackState::Deleted;
                    self.retired.push(track);
                }
            }
        }
        for &d in &matching.unmatched_dets {
            let det = &dets[d];
            let bbox = self.keypoint.box_from_anchor(det.top, det.size).to_bbox();
            let id = self.next_id;
            self.next_id += 1;
            survivors.push(Track {
                id,
                class_id: det.class_id,
                last_top: det.top,
                last_size: det.size,
                last_frame: frame,
                state: TrackState::Active,
                history: vec![(frame, bbox)],
            });
            out.push(TrackOutput {
                frame,
                id,
                bbox,
                score: det.score,
                class_id: det.class_id,
            });
        }
        self.active = survivors;
        out.sort_by_key(|o| o.id);
        out
    }
}
