//! Synthetic scenes and head outputs.
//!
//! Agents move at constant velocity and bounce off the image borders and
//! off each other, so their keypoint cells stay apart. From the resulting
//! annotations the simulator writes the head outputs a perfect network
//! would produce, and can degrade them with the error patterns seen at
//! test time: missed objects, spurious peaks, position jitter, heatmap
//! noise, a wrong reference frame and occlusion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Keypoint, Size, TopPoint};
use crate::grid::GridDims;
use crate::heatmap::{
    render_gt_heatmap, AnnotatedObject, FrameAnnotations, FrameGeometry, HeadOutput,
};
use crate::losses::supervised_objects;

/// Attempts made to place a new agent before giving up.
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub downsample: usize,
    pub frames: usize,
    /// Initial agent count is drawn from `min_objects..=max_objects`;
    /// spawning never exceeds `max_objects`.
    pub min_objects: usize,
    pub max_objects: usize,
    pub width_range: (f64, f64),
    pub height_range: (f64, f64),
    /// Pixels per frame.
    pub speed_range: (f64, f64),
    pub spawn_prob: f64,
    pub despawn_prob: f64,
    pub num_classes: usize,
    /// Minimum Chebyshev distance, in cells, between the keypoint cells of
    /// any two agents (checked for both top and center keypoints).
    pub min_separation: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            image_height: 384,
            image_width: 640,
            downsample: 4,
            frames: 50,
            min_objects: 5,
            max_objects: 10,
            width_range: (16.0, 48.0),
            height_range: (40.0, 120.0),
            speed_range: (0.0, 4.0),
            spawn_prob: 0.0,
            despawn_prob: 0.0,
            num_classes: 1,
            min_separation: 3,
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
        return Err(Error::invalid(format!(
            "{name} must be an ordered finite range with lower bound >= {min}, got ({lo}, {hi})"
        )));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "{name} must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

impl SceneConfig {
    pub fn geometry(&self) -> Result<FrameGeometry> {
        FrameGeometry::new(
            self.image_height,
            self.image_width,
            self.downsample,
            self.num_classes,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        if self.min_objects > self.max_objects {
            return Err(Error::invalid("min_objects exceeds max_objects"));
        }
        check_range("width_range", self.width_range, f64::MIN_POSITIVE)?;
        check_range("height_range", self.height_range, f64::MIN_POSITIVE)?;
        check_range("speed_range", self.speed_range, 0.0)?;
        check_prob("spawn_prob", self.spawn_prob)?;
        check_prob("despawn_prob", self.despawn_prob)?;
        if self.width_range.1 > self.image_width as f64
            || self.height_range.1 > self.image_height as f64
        {
            return Err(Error::invalid(format!(
                "objects up to {}x{} do not fit a {}x{} image",
                self.width_range.1, self.height_range.1, self.image_width, self.image_height
            )));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

#[derive(Debug, Clone, Copy)]
struct Agent {
    id: u64,
    class_id: usize,
    x1: f64,
    y1: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
}

impl Agent {
    fn bbox(&self) -> BBox {
        BBox {
            x1: self.x1,
            y1: self.y1,
            w: self.w,
            h: self.h,
        }
    }
}

fn keypoint_cell(p: TopPoint, r: f64) -> (i64, i64) {
    ((p.x / r).floor() as i64, (p.y / r).floor() as i64)
}

fn too_close(a: &BBox, b: &BBox, r: f64, min_sep: usize) -> bool {
    let min_sep = min_sep as i64;
    [Keypoint::Top, Keypoint::Center].iter().any(|k| {
        let (ac, ar) = keypoint_cell(k.anchor(a), r);
        let (bc, br) = keypoint_cell(k.anchor(b), r);
        (ac - bc).abs().max((ar - br).abs()) < min_sep
    })
}

/// One axis of constant-velocity motion with reflection at `[0, limit - extent]`.
fn reflect(pos: f64, vel: f64, extent: f64, limit: f64) -> (f64, f64) {
    let max = limit - extent;
    let (mut p, mut v) = (pos + vel, vel);
    if p < 0.0 {
        p = -p;
        v = -v;
    }
    if p > max {
        p = 2.0 * max - p;
        v = -v;
    }
    (p.clamp(0.0, max), v)
}

struct SceneBuilder<'a> {
    cfg: &'a SceneConfig,
    rng: ChaCha8Rng,
    agents: Vec<Agent>,
    next_id: u64,
}

impl SceneBuilder<'_> {
    fn try_spawn(&mut self) -> bool {
        let cfg = self.cfg;
        let r = cfg.downsample as f64;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = uniform(&mut self.rng, cfg.width_range);
            let h = uniform(&mut self.rng, cfg.height_range);
            let x1 = uniform(&mut self.rng, (0.0, cfg.image_width as f64 - w));
            let y1 = uniform(&mut self.rng, (0.0, cfg.image_height as f64 - h));
            let speed = uniform(&mut self.rng, cfg.speed_range);
            let angle = self.rng.random_range(0.0..std::f64::consts::TAU);
            let class_id = self.rng.random_range(0..cfg.num_classes);
            let candidate = Agent {
                id: self.next_id,
                class_id,
                x1,
                y1,
                w,
                h,
                vx: speed * angle.cos(),
                vy: speed * angle.sin(),
            };
            let b = candidate.bbox();
            if self
                .agents
                .iter()
                .all(|a| !too_close(&a.bbox(), &b, r, cfg.min_separation))
            {
                self.agents.push(candidate);
                self.next_id += 1;
                return true;
            }
        }
        false
    }

    fn advance(&mut self) {
        let cfg = self.cfg;
        let r = cfg.downsample as f64;
        let proposed: Vec<Agent> = self
            .agents
            .iter()
            .map(|a| {
                let (x1, vx) = reflect(a.x1, a.vx, a.w, cfg.image_width as f64);
                let (y1, vy) = reflect(a.y1, a.vy, a.h, cfg.image_height as f64);
                Agent {
                    x1,
                    y1,
                    vx,
                    vy,
                    ..*a
                }
            })
            .collect();
        // agents that would come too close stay put and turn around; the
        // previous layout was valid so this converges
        let mut reverted = vec![false; proposed.len()];
        loop {
            let mut changed = false;
            for i in 0..proposed.len() {
                for j in i + 1..proposed.len() {
                    let bi = if reverted[i] {
                        self.agents[i].bbox()
                    } else {
                        proposed[i].bbox()
                    };
                    let bj = if reverted[j] {
                        self.agents[j].bbox()
                    } else {
                        proposed[j].bbox()
                    };
                    if too_close(&bi, &bj, r, cfg.min_separation) {
                        for k in [i, j] {
                            if !reverted[k] {
                                reverted[k] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for (i, next) in proposed.into_iter().enumerate() {
            let a = &mut self.agents[i];
            if reverted[i] {
                a.vx = -a.vx;
                a.vy = -a.vy;
            } else {
                *a = next;
            }
        }
    }

    fn snapshot(&self, frame: u32) -> FrameAnnotations {
        FrameAnnotations {
            frame,
            objects: self
                .agents
                .iter()
                .map(|a| AnnotatedObject {
                    track_id: a.id,
                    class_id: a.class_id,
                    bbox: a.bbox(),
                })
                .collect(),
        }
    }
}

/// Generates a reproducible scene. Frames are numbered from 1, track ids
/// from 1, and every box lies fully inside the image.
pub fn gen_scene(cfg: &SceneConfig) -> Result<Vec<FrameAnnotations>> {
    cfg.validate()?;
    let mut b = SceneBuilder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        agents: Vec::new(),
        next_id: 1,
    };
    let initial = b.rng.random_range(cfg.min_objects..=cfg.max_objects);
    for _ in 0..initial {
        if !b.try_spawn() {
            return Err(Error::invalid(format!(
                "could not place {initial} objects {} cells apart in a {}x{} image",
                cfg.min_separation, cfg.image_width, cfg.image_height
            )));
        }
    }
    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 1..=cfg.frames {
        if t > 1 {
            if cfg.despawn_prob > 0.0 {
                let rng = &mut b.rng;
                b.agents.retain(|_| !rng.random_bool(cfg.despawn_prob));
            }
            b.advance();
            if b.agents.len() < cfg.max_objects && b.rng.random_bool(cfg.spawn_prob) {
                b.try_spawn();
            }
        }
        frames.push(b.snapshot(t as u32));
    }
    Ok(frames)
}

/// Head outputs a perfect network would emit for `ann`.
///
/// The heatmap is the ground-truth rendering; size, offset and displacement
/// are written at each object's keypoint cell and zero elsewhere.
/// Displacements are measured against the same id in `prev`, `(0, 0)` when
/// the id is absent there.
pub fn synthesize_head_outputs(
    ann: &FrameAnnotations,
    prev: Option<&FrameAnnotations>,
    geom: &FrameGeometry,
) -> Result<HeadOutput> {
    let heatmap = render_gt_heatmap(ann, geom)?.grid;
    let dims = geom.grid_dims();
    let mut head = HeadOutput::zeros(dims, geom.num_classes, geom.downsample);
    head.heatmap = heatmap;
    for s in supervised_objects(ann, prev, geom) {
        let (row, col) = (s.cell.row, s.cell.col);
        head.size_map.set(row, col, 0, s.size.w);
        head.size_map.set(row, col, 1, s.size.h);
        head.offset_map.set(row, col, 0, s.offset.x);
        head.offset_map.set(row, col, 1, s.offset.y);
        head.disp_map.set(row, col, 0, s.displacement.x);
        head.disp_map.set(row, col, 1, s.displacement.y);
    }
    Ok(head)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionConfig {
    /// Probability of dropping each ground-truth object.
    pub fn_rate: f64,
    /// Mean number of spurious objects injected per frame.
    pub fp_rate: f64,
    /// Standard deviation, in pixels, of the noise added to keypoint positions.
    pub jitter_sigma: f64,
    /// Standard deviation of additive heatmap noise (result clamped to `[0, 1]`).
    pub hm_noise_sigma: f64,
    /// Reference frame for displacements drawn from `[t - k, t + k]`; 0 keeps `t - 1`.
    pub temporal_jitter_k: usize,
    /// Drop objects whose keypoint is covered by a nearer box.
    pub occlusion: bool,
    pub seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            fn_rate: 0.0,
            fp_rate: 0.0,
            jitter_sigma: 0.0,
            hm_noise_sigma: 0.0,
            temporal_jitter_k: 0,
            occlusion: false,
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        check_prob("fn_rate", self.fn_rate)?;
        for (name, v) in [
            ("fp_rate", self.fp_rate),
            ("jitter_sigma", self.jitter_sigma),
            ("hm_noise_sigma", self.hm_noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.temporal_jitter_k > 3 {
            return Err(Error::invalid(format!(
                "temporal_jitter_k must be at most 3, got {}",
                self.temporal_jitter_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedFrame {
    pub head: HeadOutput,
    pub dropped: usize,
    pub occluded: usize,
    pub injected: usize,
}

/// True when `obj`'s keypoint lies inside a box whose bottom edge is lower
/// in the image, i.e. an object closer to the camera.
fn is_occluded(obj: &AnnotatedObject, all: &[AnnotatedObject], keypoint: Keypoint) -> bool {
    let p = keypoint.anchor(&obj.bbox);
    all.iter()
        .any(|o| o.track_id != obj.track_id && o.bbox.y2() > obj.bbox.y2() && o.bbox.contains(p))
}

/// Fallback extent for injected objects when the frame has no real ones.
fn default_fp_size(r: f64) -> Size {
    Size::new(6.0 * r, 16.0 * r)
}

/// Degrades the ideal head output of `ann`.
///
/// Objects are dropped with probability `fn_rate` (and by occlusion when
/// enabled), surviving keypoints are jittered, `Poisson(fp_rate)` spurious
/// objects are added at uniform cells, everything is rendered, and finally
/// the heatmap receives clamped Gaussian noise. `stream` selects an
/// independent random stream so frames can be corrupted in any order.
pub fn corrupt(
    ann: &FrameAnnotations,
    prev: Option<&FrameAnnotations>,
    geom: &FrameGeometry,
    c: &CorruptionConfig,
    stream: u64,
) -> Result<CorruptedFrame> {
    c.validate()?;
    geom.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    rng.set_stream(stream);
    let r = geom.downsample as f64;

    let mut kept = Vec::with_capacity(ann.objects.len());
    let (mut dropped, mut occluded) = (0, 0);
    for obj in &ann.objects {
        if rng.random_bool(c.fn_rate) {
            dropped += 1;
        } else if c.occlusion && is_occluded(obj, &ann.objects, geom.keypoint) {
            occluded += 1;
        } else {
            kept.push(*obj);
        }
    }

    if c.jitter_sigma > 0.0 {
        let noise = Normal::new(0.0, c.jitter_sigma).expect("validated sigma");
        for obj in &mut kept {
            let (dx, dy) = (noise.sample(&mut rng), noise.sample(&mut rng));
            obj.bbox = obj.bbox.translated(dx, dy);
        }
    }

    let injected = if c.fp_rate > 0.0 {
        let n = Poisson::new(c.fp_rate)
            .expect("validated rate")
            .sample(&mut rng) as usize;
        let dims = geom.grid_dims();
        for i in 0..n {
            let col = rng.random_range(0..dims.width);
            let row = rng.random_range(0..dims.height);
            let p = TopPoint::new(
                (col as f64 + rng.random_range(0.0..1.0)) * r,
                (row as f64 + rng.random_range(0.0..1.0)) * r,
            );
            let size = if ann.objects.is_empty() {
                default_fp_size(r)
            } else {
                let src = ann.objects[rng.random_range(0..ann.objects.len())].bbox;
                let k = rng.random_range(0.8..1.2);
                Size::new(src.w * k, src.h * k)
            };
            kept.push(AnnotatedObject {
                track_id: u64::MAX - i as u64,
                class_id: rng.random_range(0..geom.num_classes),
                bbox: geom.keypoint.box_from_anchor(p, size).to_bbox(),
            });
        }
        n
    } else {
        0
    };

    let degraded = FrameAnnotations {
        frame: ann.frame,
        objects: kept,
    };
    let mut head = synthesize_head_outputs(&degraded, prev, geom)?;

    if c.hm_noise_sigma > 0.0 {
        let noise = Normal::new(0.0, c.hm_noise_sigma).expect("validated sigma");
        for v in head.heatmap.values_mut() {
            *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }

    Ok(CorruptedFrame {
        head,
        dropped,
        occluded,
        injected,
    })
}

/// Head outputs for a whole sequence plus corruption tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedSequence {
    pub heads: Vec<HeadOutput>,
    pub dropped: usize,
    pub occluded: usize,
    pub injected: usize,
}

/// Index of the frame displacements are measured against.
fn reference_frame(i: usize, len: usize, k: usize, rng: &mut impl Rng) -> Option<usize> {
    if k == 0 {
        return i.checked_sub(1);
    }
    let lo = i.saturating_sub(k);
    let hi = (i + k).min(len - 1);
    let candidates: Vec<usize> = (lo..=hi).filter(|&j| j != i).collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.random_range(0..candidates.len())])
    }
}

/// Synthesizes every frame of a scene, ideal when `corruption` is `None`.
pub fn synthesize_sequence(
    frames: &[FrameAnnotations],
    geom: &FrameGeometry,
    corruption: Option<&CorruptionConfig>,
) -> Result<SynthesizedSequence> {
    let mut out = SynthesizedSequence {
        heads: Vec::with_capacity(frames.len()),
        dropped: 0,
        occluded: 0,
        injected: 0,
    };
    let Some(c) = corruption else {
        for (i, ann) in frames.iter().enumerate() {
            let prev = i.checked_sub(1).map(|j| &frames[j]);
            out.heads.push(synthesize_head_outputs(ann, prev, geom)?);
        }
        return Ok(out);
    };
    // reference-frame picks use their own generator so they do not shift
    // the per-frame corruption streams
    let mut pick_rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x5eed_f00d_cafe_d00d);
    for (i, ann) in frames.iter().enumerate() {
        let prev = reference_frame(i, frames.len(), c.temporal_jitter_k, &mut pick_rng)
            .map(|j| &frames[j]);
        let cf = corrupt(ann, prev, geom, c, i as u64)?;
        out.dropped += cf.dropped;
        out.occluded += cf.occluded;
        out.injected += cf.injected;
        out.heads.push(cf.head);
    }
    Ok(out)
}

/// Scale about the image origin followed by a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMotion {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineMotion {
    pub fn apply(&self, p: TopPoint) -> TopPoint {
        TopPoint::new(self.scale * p.x + self.tx, self.scale * p.y + self.ty)
    }

    /// Box that this motion carries onto `b`.
    pub fn preimage(&self, b: &BBox) -> BBox {
        BBox {
            x1: (b.x1 - self.tx) / self.scale,
            y1: (b.y1 - self.ty) / self.scale,
            w: b.w / self.scale,
            h: b.h / self.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticPairConfig {
    pub scale_range: (f64, f64),
    pub translate_x: (f64, f64),
    pub translate_y: (f64, f64),
    pub seed: u64,
}

/// Fakes a previous frame for a single annotated image.
///
/// One random motion (scale about the origin, then translation) is drawn
/// and treated as the motion from the synthetic previous frame to `ann`;
/// the previous boxes are its preimages, so each object's displacement is
/// `p - motion^-1(p)`. Previous boxes that leave the image entirely are
/// removed.
pub fn simulate_static_pair(
    ann: &FrameAnnotations,
    image: GridDims,
    cfg: &StaticPairConfig,
) -> Result<(FrameAnnotations, FrameAnnotations, AffineMotion)> {
    check_range("scale_range", cfg.scale_range, f64::MIN_POSITIVE)?;
    check_range("translate_x", cfg.translate_x, f64::NEG_INFINITY)?;
    check_range("translate_y", cfg.translate_y, f64::NEG_INFINITY)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let motion = AffineMotion {
        scale: uniform(&mut rng, cfg.scale_range),
        tx: uniform(&mut rng, cfg.translate_x),
        ty: uniform(&mut rng, cfg.translate_y),
    };
    let frame_box = BBox {
        x1: 0.0,
        y1: 0.0,
        w: image.width as f64,
        h: image.height as f64,
    };
    let objects: Vec<AnnotatedObject> = ann
        .objects
        .iter()
        .map(|o| AnnotatedObject {
            bbox: motion.preimage(&o.bbox),
            ..*o
        })
        .filter(|o| o.bbox.iou(&frame_box) > 0.0)
        .collect();
    if objects.is_empty() && !ann.objects.is_empty() {
        return Err(Error::invalid(format!(
            "motion {motion:?} moves every box out of the frame"
        )));
    }
    let prev = FrameAnnotations {
        frame: ann.frame,
        objects,
    };
    Ok((prev, ann.clone(), motion))
}
