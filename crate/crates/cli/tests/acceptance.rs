//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use apex_core::ablation::compare_matchers;
use apex_core::association::{
    association_distance, greedy_match, hungarian_match, Matching, Track, TrackState,
};
use apex_core::evaluation::{compute_clear, compute_idf1, evaluate, Sequence};
use apex_core::gradcheck::{
    finite_difference_check, FocalObjective, GradCheckConfig, MaskedL1Objective,
};
use apex_core::heatmap::{
    decode_detections, render_gt_heatmap, AnnotatedObject, FrameAnnotations, FrameGeometry,
    HeadOutput,
};
use apex_core::io::config::RunConfig;
use apex_core::losses::{focal_loss, loss_targets, total_loss, Supervision};
use apex_core::pipeline::{score, simulate, track_heads};
use apex_core::simulator::{synthesize_head_outputs, CorruptionConfig, SceneConfig};
use apex_core::{BBox, Detection, Grid, GridPoint, Keypoint, PipelineConfig, Size, TopPoint, Vec2};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- round trip

/// Random objects fully inside a `w x h` image whose top cells are pairwise
/// at least `sep` cells apart (Chebyshev).
fn random_frame(
    rng: &mut ChaCha8Rng,
    w: f64,
    h: f64,
    r: f64,
    n: usize,
    sep: i64,
) -> FrameAnnotations {
    let mut objects: Vec<AnnotatedObject> = Vec::new();
    let mut cells: Vec<(i64, i64)> = Vec::new();
    let mut attempts = 0;
    while objects.len() < n && attempts < 10_000 {
        attempts += 1;
        let bw = rng.random_range(2.0..80.0);
        let bh = rng.random_range(4.0..160.0);
        let x1 = rng.random_range(0.0..w - bw);
        let y1 = rng.random_range(0.0..h - bh);
        let top = (x1 + bw / 2.0, y1 + bh / 10.0);
        let cell = ((top.0 / r).floor() as i64, (top.1 / r).floor() as i64);
        if cells
            .iter()
            .any(|c| (c.0 - cell.0).abs().max((c.1 - cell.1).abs()) < sep)
        {
            continue;
        }
        cells.push(cell);
        objects.push(AnnotatedObject {
            track_id: objects.len() as u64 + 1,
            class_id: 0,
            bbox: BBox::new(x1, y1, bw, bh).unwrap(),
        });
    }
    FrameAnnotations::new(1, objects).unwrap()
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let geom = FrameGeometry::new(512, 512, 4, 1).unwrap();
    let cfg = PipelineConfig {
        max_peaks: 100,
        ..PipelineConfig::default()
    };
    let (mut total, mut worst_top, mut worst_box) = (0usize, 0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..=50);
        let ann = random_frame(&mut rng, 512.0, 512.0, 4.0, n, 3);
        let head = synthesize_head_outputs(&ann, None, &geom).map_err(|e| e.to_string())?;
        let dets = decode_detections(&head, &cfg).map_err(|e| e.to_string())?;
        check(
            dets.len() == ann.objects.len(),
            format!(
                "{} detections for {} objects",
                dets.len(),
                ann.objects.len()
            ),
        )?;
        for obj in &ann.objects {
            let b = obj.bbox;
            let want = (b.x1 + b.w / 2.0, b.y1 + b.h / 10.0);
            let d = dets
                .iter()
                .min_by(|p, q| {
                    let dp = (p.top.x - want.0).hypot(p.top.y - want.1);
                    let dq = (q.top.x - want.0).hypot(q.top.y - want.1);
                    dp.total_cmp(&dq)
                })
                .expect("non-empty");
            worst_top = worst_top.max((d.top.x - want.0).hypot(d.top.y - want.1));
            check(d.size == Size::new(b.w, b.h), "decoded size differs")?;
            let c = Keypoint::Top.box_from_anchor(d.top, d.size);
            for (got, exp) in [(c.x1, b.x1), (c.y1, b.y1), (c.x2, b.x2()), (c.y2, b.y2())] {
                worst_box = worst_box.max((got - exp).abs());
            }
            total += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst_top <= 1e-6, format!("top error {worst_top:e} px"))?;
    check(
        worst_box <= 1e-9,
        format!("box corner error {worst_box:e} px"),
    )?;
    check(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "{total} objects in 200 frames, max top err {worst_top:.1e} px, max corner err {worst_box:.1e} px, {secs:.2} s"
    ))
}

// ---------------------------------------------------------- loss correctness

fn loss_correctness() -> Outcome {
    // hand-evaluated single-cell examples
    let one = |gt: f64, pred: f64| {
        let g = Grid::from_values(1, 1, 1, vec![gt]).unwrap();
        let p = Grid::from_values(1, 1, 1, vec![pred]).unwrap();
        focal_loss(&p, &g, 2.0, 4.0, 1).unwrap().value
    };
    let pos = one(1.0, 0.5);
    let neg = one(0.0, 0.1);
    check(
        (pos - 0.5f64.powi(2) * 2f64.ln()).abs() < 1e-12,
        format!("positive example {pos}"),
    )?;
    check(
        (neg - -(0.1f64.powi(2)) * 0.9f64.ln()).abs() < 1e-12,
        format!("negative example {neg}"),
    )?;
    check(
        (pos - 0.1733).abs() < 1e-4,
        format!("positive example {pos} vs 0.1733"),
    )?;
    check(
        (neg - 0.0010536).abs() < 1e-4,
        format!("negative example {neg} vs 0.0010536"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let geom = FrameGeometry::new(64, 64, 4, 1).unwrap();
    let ann = FrameAnnotations::new(
        1,
        (0..4)
            .map(|i| AnnotatedObject {
                track_id: i + 1,
                class_id: 0,
                bbox: BBox::new(4.0 + 14.0 * i as f64, 6.0 + 9.0 * i as f64, 12.0, 30.0).unwrap(),
            })
            .collect(),
    )
    .unwrap();
    let gt = render_gt_heatmap(&ann, &geom).unwrap().grid;
    let pred: Vec<f64> = (0..gt.values().len())
        .map(|_| rng.random_range(0.02..0.98))
        .collect();
    let cfg = GradCheckConfig {
        step: 1e-4,
        samples: 128,
        seed: 1,
    };
    let focal = finite_difference_check(
        &FocalObjective {
            gt: &gt,
            alpha: 2.0,
            beta: 4.0,
            n: ann.objects.len(),
        },
        &pred,
        &cfg,
    )
    .map_err(|e| e.to_string())?;

    let (h, w) = (16, 16);
    let targets: Vec<Supervision> = (0..h * w)
        .map(|i| Supervision {
            cell: GridPoint::new(i % w, i / w),
            target: [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)],
        })
        .collect();
    let x: Vec<f64> = (0..h * w * 2)
        .map(|_| rng.random_range(-20.0..20.0))
        .collect();
    let l1 = finite_difference_check(
        &MaskedL1Objective {
            height: h,
            width: w,
            targets: &targets,
            n: 7,
        },
        &x,
        &cfg,
    )
    .map_err(|e| e.to_string())?;

    for (name, r) in [("focal", focal), ("masked L1", l1)] {
        check(
            r.checked >= 100,
            format!("{name}: only {} coords checked", r.checked),
        )?;
        check(
            r.max_relative_error < 1e-4,
            format!("{name}: max relative error {:e}", r.max_relative_error),
        )?;
    }
    Ok(format!(
        "focal {:.1e} / L1 {:.1e} max rel err over {}/{} coords; examples {pos:.4}, {neg:.7}",
        focal.max_relative_error, l1.max_relative_error, focal.checked, l1.checked
    ))
}

// ------------------------------------------------------- breakdown identity

fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Grid {
    Grid::from_values(
        h,
        w,
        c,
        (0..h * w * c).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .unwrap()
}

fn breakdown_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut ideal_frames = 0;
    for trial in 0..40u64 {
        let scene = SceneConfig {
            image_height: 128,
            image_width: 192,
            frames: 3,
            min_objects: 1,
            max_objects: 6,
            width_range: (8.0, 40.0),
            height_range: (16.0, 80.0),
            speed_range: (0.0, 5.0),
            seed: trial,
            ..SceneConfig::default()
        };
        let geom = scene.geometry().unwrap();
        let frames = apex_core::simulator::gen_scene(&scene).map_err(|e| e.to_string())?;
        let cfg = PipelineConfig {
            lambda_size: rng.random_range(0.01..1.0),
            ..PipelineConfig::default()
        };
        for t in 1..frames.len() {
            let (prev, cur) = (&frames[t - 1], &frames[t]);
            let targets = loss_targets(cur, Some(prev), &geom).map_err(|e| e.to_string())?;

            let dims = geom.grid_dims();
            let random = HeadOutput {
                heatmap: random_grid(&mut rng, dims.height, dims.width, 1, 0.0, 1.0),
                size_map: random_grid(&mut rng, dims.height, dims.width, 2, 0.0, 100.0),
                offset_map: random_grid(&mut rng, dims.height, dims.width, 2, 0.0, 1.0),
                disp_map: random_grid(&mut rng, dims.height, dims.width, 2, -10.0, 10.0),
                downsample: 4,
            };
            let b = total_loss(&random, &targets, &cfg).map_err(|e| e.to_string())?;
            let sum = b.l_h + cfg.lambda_size * b.l_size + b.l_off + b.l_d;
            worst = worst.max((b.total - sum).abs());

            let ideal =
                synthesize_head_outputs(cur, Some(prev), &geom).map_err(|e| e.to_string())?;
            let b = total_loss(&ideal, &targets, &cfg).map_err(|e| e.to_string())?;
            check(
                b.l_size == 0.0 && b.l_off == 0.0 && b.l_d == 0.0,
                format!(
                    "ideal outputs give l_size {} l_off {} l_d {}",
                    b.l_size, b.l_off, b.l_d
                ),
            )?;
            ideal_frames += 1;
        }
    }
    check(worst <= 1e-9, format!("identity residual {worst:e}"))?;
    Ok(format!(
        "max |total - sum| = {worst:.1e} over 80 random frames; regression losses 0 on {ideal_frames} ideal frames"
    ))
}

// ------------------------------------------------------------- end to end

fn apex(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_apex"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "apex {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn csv_metrics(stdout: &str) -> Result<HashMap<String, f64>, String> {
    let mut lines = stdout.lines();
    let header = lines.next().ok_or("no CSV header")?;
    let row = lines.next().ok_or("no CSV row")?;
    header
        .split(',')
        .zip(row.split(','))
        .map(|(k, v)| Ok((k.to_string(), v.parse::<f64>().map_err(|e| e.to_string())?)))
        .collect()
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let config = d.join("scene.cfg");
    std::fs::write(
        &config,
        "[pipeline]\ndownsample = 4\n\n[scene]\nimage_width = 640\nimage_height = 384\nframes = 100\nnum_objects = 20, 20\nspeed_range = 1, 6\nspawn_prob = 0\ndespawn_prob = 0\nseed = 17\n",
    )
    .map_err(|e| e.to_string())?;
    let p = |x: &Path| x.to_string_lossy().into_owned();
    let run = d.join("run");
    let res = d.join("results.txt");
    let start = Instant::now();
    apex(&["simulate", "--config", &p(&config), "--out", &p(&run)])?;
    apex(&[
        "track",
        "--heads",
        &p(&run.join("heads")),
        "--config",
        &p(&config),
        "--matcher",
        "greedy",
        "--out",
        &p(&res),
    ])?;
    let printed = apex(&[
        "evaluate",
        "--gt",
        &p(&run.join("gt.txt")),
        "--pred",
        &p(&res),
    ])?;
    let csv = apex(&[
        "evaluate",
        "--gt",
        &p(&run.join("gt.txt")),
        "--pred",
        &p(&res),
        "--csv",
    ])?;
    let secs = start.elapsed().as_secs_f64();
    let m = csv_metrics(&csv)?;
    check(
        m["GT"] == 2000.0,
        format!("expected 20 x 100 GT boxes, got {}", m["GT"]),
    )?;
    check(m["MOTA"] == 1.0, format!("MOTA {}", m["MOTA"]))?;
    check(m["IDF1"] == 1.0, format!("IDF1 {}", m["IDF1"]))?;
    check(m["IDSW"] == 0.0, format!("IDSW {}", m["IDSW"]))?;
    check(
        printed.contains("1.000"),
        "text report does not print MOTA 1.000",
    )?;
    check(secs < 10.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "MOTA 1, IDF1 1, IDSW 0 on 2000 boxes; simulate+track+evaluate {secs:.2} s"
    ))
}

// ------------------------------------------------------- assignment oracles

fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Track>, Vec<Detection>) {
    let n = rng.random_range(0..=7);
    let m = rng.random_range(0..=7);
    let tracks = (0..n)
        .map(|i| Track {
            id: i as u64 + 1,
            class_id: 0,
            last_top: TopPoint::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
            last_size: Size::new(10.0, 20.0),
            last_frame: 1,
            state: TrackState::Active,
            history: Vec::new(),
        })
        .collect();
    let dets = (0..m)
        .map(|_| {
            let top = TopPoint::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
            Detection {
                top,
                cell: GridPoint::new(0, 0),
                size: Size::new(rng.random_range(5.0..30.0), rng.random_range(5.0..30.0)),
                // coarse scores so that ties occur
                score: rng.random_range(1..=5) as f64 / 5.0,
                class_id: 0,
                displacement: Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            }
        })
        .collect();
    (tracks, dets)
}

/// Exhaustive optimum: most admissible pairs, then least total distance.
fn brute_optimum(tracks: &[Track], dets: &[Detection], gate: f64) -> (usize, f64) {
    fn go(
        tracks: &[Track],
        dets: &[Detection],
        gate: f64,
        t: usize,
        used: &mut Vec<bool>,
    ) -> (usize, f64) {
        if t == tracks.len() {
            return (0, 0.0);
        }
        let mut best = go(tracks, dets, gate, t + 1, used);
        for d in 0..dets.len() {
            if used[d] {
                continue;
            }
            let dx = dets[d].top.x - dets[d].displacement.x - tracks[t].last_top.x;
            let dy = dets[d].top.y - dets[d].displacement.y - tracks[t].last_top.y;
            let dist = (dx * dx + dy * dy).sqrt();
            if dist > gate * dets[d].size.w.max(dets[d].size.h) {
                continue;
            }
            used[d] = true;
            let (k, c) = go(tracks, dets, gate, t + 1, used);
            used[d] = false;
            let cand = (k + 1, c + dist);
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                best = cand;
            }
        }
        best
    }
    go(tracks, dets, gate, 0, &mut vec![false; dets.len()])
}

/// Greedy written as a scan over a sorted list of detections.
fn reference_greedy(tracks: &[Track], dets: &[Detection], gate: f64) -> Vec<(u64, usize)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut free: Vec<bool> = vec![true; tracks.len()];
    let mut out = Vec::new();
    for d in order {
        let px = dets[d].top.x - dets[d].displacement.x;
        let py = dets[d].top.y - dets[d].displacement.y;
        let limit = gate * dets[d].size.w.max(dets[d].size.h);
        let mut pick: Option<usize> = None;
        let mut pick_dist = f64::INFINITY;
        for t in 0..tracks.len() {
            let dist =
                ((px - tracks[t].last_top.x).powi(2) + (py - tracks[t].last_top.y).powi(2)).sqrt();
            if free[t] && dist <= limit && dist < pick_dist {
                pick = Some(t);
                pick_dist = dist;
            }
        }
        if let Some(t) = pick {
            free[t] = false;
            out.push((tracks[t].id, d));
        }
    }
    out
}

fn sorted(m: &Matching) -> Vec<(u64, usize)> {
    let mut v = m.matches.clone();
    v.sort_unstable();
    v
}

fn assignment_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts_differ = 0;
    for (label, gate) in [("ungated", f64::INFINITY), ("gated", 1.0)] {
        for i in 0..500 {
            let (tracks, dets) = random_instance(&mut rng);
            let h = hungarian_match(&tracks, &dets, gate);
            let g = greedy_match(&tracks, &dets, gate);
            let (k, best) = brute_optimum(&tracks, &dets, gate);
            let hc = h.total_cost(&tracks, &dets);
            let gc = g.total_cost(&tracks, &dets);
            check(
                h.matches.len() == k && (hc - best).abs() <= 1e-9,
                format!(
                    "{label} #{i}: hungarian ({}, {hc}) vs exhaustive ({k}, {best})",
                    h.matches.len()
                ),
            )?;
            let mut want = reference_greedy(&tracks, &dets, gate);
            want.sort_unstable();
            check(
                sorted(&g) == want,
                format!("{label} #{i}: greedy differs from reference"),
            )?;
            check(
                h.matches.iter().all(|&(t, d)| {
                    let tr = tracks.iter().find(|x| x.id == t).unwrap();
                    association_distance(tr, &dets[d], gate).is_some()
                }),
                format!("{label} #{i}: hungarian used a gated pair"),
            )?;
            check(
                h.matches.len() >= g.matches.len(),
                format!("{label} #{i}: hungarian matched fewer pairs than greedy"),
            )?;
            if h.matches.len() == g.matches.len() {
                check(
                    hc <= gc + 1e-9,
                    format!("{label} #{i}: hungarian {hc} > greedy {gc}"),
                )?;
            } else {
                counts_differ += 1;
            }
        }
    }
    Ok(format!(
        "1000 instances (500 ungated, 500 gated): hungarian = exhaustive, greedy = reference, hungarian cost <= greedy ({counts_differ} gated instances where hungarian matched more pairs)"
    ))
}

// ------------------------------------------------------------ metric oracles

fn seq_from(rows: &[(u32, u64, f64, f64)]) -> Sequence {
    let mut s = Sequence::new();
    for &(f, id, x, y) in rows {
        s.push(f, id, BBox::new(x, y, 10.0, 20.0).unwrap()).unwrap();
    }
    s
}

/// IDF1 by trying every partial one-to-one pairing of trajectories and
/// counting frame-level hits directly.
fn brute_idf1(gt: &Sequence, pred: &Sequence) -> f64 {
    let gids: Vec<u64> = gt.ids().into_iter().collect();
    let pids: Vec<u64> = pred.ids().into_iter().collect();
    let hits = |g: u64, p: u64| -> usize {
        gt.frames()
            .filter(|(f, boxes)| {
                let gb = boxes.iter().find(|b| b.id == g);
                let pb = pred.frame(*f).iter().find(|b| b.id == p);
                matches!((gb, pb), (Some(a), Some(b)) if a.bbox.iou(&b.bbox) >= 0.5)
            })
            .count()
    };
    fn go(
        i: usize,
        gids: &[u64],
        pids: &[u64],
        used: &mut HashSet<u64>,
        hits: &dyn Fn(u64, u64) -> usize,
    ) -> usize {
        if i == gids.len() {
            return 0;
        }
        let mut best = go(i + 1, gids, pids, used, hits);
        for &p in pids {
            if used.insert(p) {
                best = best.max(hits(gids[i], p) + go(i + 1, gids, pids, used, hits));
                used.remove(&p);
            }
        }
        best
    }
    let idtp = go(0, &gids, &pids, &mut HashSet::new(), &hits);
    2.0 * idtp as f64 / (gt.total_boxes() + pred.total_boxes()) as f64
}

fn random_sequence(rng: &mut ChaCha8Rng, ids: u64, frames: u32, rows: usize) -> Sequence {
    let mut s = Sequence::new();
    for _ in 0..rows {
        let f = rng.random_range(1..=frames);
        let id = rng.random_range(1..=ids);
        let x = rng.random_range(0..4) as f64 * 6.0;
        let y = rng.random_range(0..2) as f64 * 10.0;
        let _ = s.push(f, id, BBox::new(x, y, 10.0, 20.0).unwrap());
    }
    s
}

fn metric_oracles() -> Outcome {
    // hand-traced: 10 GT boxes, 1 FP, 2 FN, 1 switch
    let mut g = Vec::new();
    let mut p = Vec::new();
    for f in 1..=10u32 {
        g.push((f, 1, 0.0, 0.0));
        if f > 2 {
            p.push((f, if f < 6 { 3 } else { 4 }, 0.0, 0.0));
        }
    }
    p.push((5, 9, 300.0, 0.0));
    let c = compute_clear(&seq_from(&g), &seq_from(&p), 0.5).map_err(|e| e.to_string())?;
    check(
        (c.gt_total, c.fp, c.fn_, c.idsw) == (10, 1, 2, 1),
        format!("tallies {:?}", (c.gt_total, c.fp, c.fn_, c.idsw)),
    )?;
    check((c.mota - 0.6).abs() < 1e-12, format!("MOTA {}", c.mota))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut reports = 0;
    let mut worst_idf1 = 0.0f64;
    while reports < 300 {
        let rows = rng.random_range(1..30);
        let gt = random_sequence(&mut rng, 6, 6, rows);
        let (lo, hi) = match gt.frame_range() {
            Some(r) => r,
            None => continue,
        };
        let rows = rng.random_range(0..30);
        let raw = random_sequence(&mut rng, 6, 6, rows);
        let mut pred = Sequence::new();
        for (f, boxes) in raw.frames().filter(|(f, _)| (lo..=hi).contains(f)) {
            for b in boxes {
                pred.push(f, b.id, b.bbox).unwrap();
            }
        }
        let r = evaluate(&gt, &pred, 0.5).map_err(|e| e.to_string())?;
        let k = &r.clear;
        let identity = 1.0 - (k.fp + k.fn_ + k.idsw) as f64 / k.gt_total as f64;
        check(
            k.mota == identity,
            format!("MOTA {} vs identity {identity}", k.mota),
        )?;
        let idf1 = compute_idf1(&gt, &pred, 0.5)
            .map_err(|e| e.to_string())?
            .idf1;
        worst_idf1 = worst_idf1.max((idf1 - brute_idf1(&gt, &pred)).abs());
        reports += 1;
    }
    check(
        worst_idf1 <= 1e-12,
        format!("IDF1 deviates from brute force by {worst_idf1:e}"),
    )?;
    Ok(format!(
        "hand trace MOTA {:.3}; identity exact on {reports} reports; IDF1 = brute force on {reports} instances with <= 6x6 trajectories",
        c.mota
    ))
}

// ------------------------------------------------------ corruption monotonicity

fn corruption_run(seed: u64, corruption: CorruptionConfig) -> Result<(f64, usize, usize), String> {
    let cfg = RunConfig {
        scene: SceneConfig {
            frames: 30,
            min_objects: 12,
            max_objects: 12,
            speed_range: (1.0, 5.0),
            seed,
            ..SceneConfig::default()
        },
        corruption: CorruptionConfig {
            seed: 1000 + seed,
            ..corruption
        },
        ..RunConfig::default()
    };
    let (scene, heads) = simulate(&cfg).map_err(|e| e.to_string())?;
    let frames = heads
        .corrupted
        .heads
        .iter()
        .enumerate()
        .map(|(i, h)| (i as u32 + 1, h));
    let out = track_heads(
        frames,
        &cfg.pipeline,
        apex_core::association::Matcher::Greedy,
    )
    .map_err(|e| e.to_string())?;
    let r = score(&scene, &out).map_err(|e| e.to_string())?;
    Ok((r.clear.mota, r.clear.fn_, r.clear.fp))
}

fn corruption_monotonicity() -> Outcome {
    let rates = [0.0, 0.1, 0.2, 0.3];
    let mut mean_mota = Vec::new();
    let mut mean_fn = Vec::new();
    for &fn_rate in &rates {
        let (mut mota, mut fns) = (0.0, 0.0);
        for seed in 0..20 {
            let (m, f, _) = corruption_run(
                seed,
                CorruptionConfig {
                    fn_rate,
                    ..Default::default()
                },
            )?;
            mota += m / 20.0;
            fns += f as f64 / 20.0;
        }
        mean_mota.push(mota);
        mean_fn.push(fns);
    }
    for i in 1..rates.len() {
        check(
            mean_mota[i] < mean_mota[i - 1],
            format!("mean MOTA not decreasing: {mean_mota:?}"),
        )?;
        check(
            mean_fn[i] > mean_fn[i - 1],
            format!("mean FN not increasing: {mean_fn:?}"),
        )?;
    }
    let (mut fp_clean, mut fp_noisy) = (0, 0);
    for seed in 0..20 {
        fp_clean += corruption_run(seed, CorruptionConfig::default())?.2;
        fp_noisy += corruption_run(
            seed,
            CorruptionConfig {
                fp_rate: 1.0,
                ..Default::default()
            },
        )?
        .2;
    }
    check(
        fp_noisy > fp_clean,
        format!("FP {fp_clean} -> {fp_noisy} with 1 injection/frame"),
    )?;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.3}"))
            .collect::<Vec<_>>()
            .join(" > ")
    };
    Ok(format!(
        "mean MOTA {} ; mean FN {} ; FP {fp_clean} -> {fp_noisy} at fp_rate 1",
        fmt(&mean_mota),
        mean_fn
            .iter()
            .map(|x| format!("{x:.1}"))
            .collect::<Vec<_>>()
            .join(" < ")
    ))
}

// ------------------------------------------------------------------ ablation

fn ablation() -> Outcome {
    let cfg = RunConfig {
        scene: SceneConfig {
            frames: 40,
            min_objects: 15,
            max_objects: 20,
            speed_range: (1.0, 6.0),
            spawn_prob: 0.1,
            despawn_prob: 0.01,
            seed: 21,
            ..SceneConfig::default()
        },
        corruption: CorruptionConfig {
            fn_rate: 0.1,
            fp_rate: 1.0,
            jitter_sigma: 1.5,
            hm_noise_sigma: 0.02,
            temporal_jitter_k: 1,
            seed: 8,
            ..CorruptionConfig::default()
        },
        ..RunConfig::default()
    };
    let a = compare_matchers(&cfg).map_err(|e| e.to_string())?;
    let b = compare_matchers(&cfg).map_err(|e| e.to_string())?;
    check(a == b, "library tables differ between identical runs")?;
    let labels: Vec<&str> = a.rows.iter().map(|r| r.label.as_str()).collect();
    check(
        labels == ["greedy", "hungarian"],
        format!("rows {labels:?}"),
    )?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("ablation.cfg");
    std::fs::write(&path, cfg.to_text()).map_err(|e| e.to_string())?;
    let p = path.to_string_lossy();
    let first = apex(&["ablation", "--config", &p])?;
    let second = apex(&["ablation", "--config", &p])?;
    check(first == second, "CLI output differs between identical runs")?;
    check(
        first.lines().count() == 3,
        format!("expected header + 2 rows, got:\n{first}"),
    )?;
    let mota: Vec<String> = a
        .rows
        .iter()
        .map(|r| format!("{}={:.3}", r.label, r.report.mota()))
        .collect();
    Ok(format!(
        "two-row table reproduced bit-for-bit across runs ({})",
        mota.join(", ")
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("render/decode round trip", round_trip),
        ("loss correctness", loss_correctness),
        ("loss breakdown identity", breakdown_identity),
        ("end-to-end perfect scene", end_to_end),
        ("assignment oracles", assignment_oracles),
        ("metric oracles", metric_oracles),
        ("corruption monotonicity", corruption_monotonicity),
        ("ablation harness", ablation),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
