//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use blindspot::raster::{BinaryMask, Raster};
use blindspot::synthworld::SynthScene;
use nalgebra::{Point2, Point3, Vector3};

pub fn scene_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenes").join(name)
}

pub fn load_scene(name: &str) -> SynthScene {
    SynthScene::load(&scene_path(name)).expect("scene file loads")
}

/// Scenes whose blind regions are checked against the ray-cast oracle.
pub const ORACLE_SCENES: [&str; 5] = [
    "barrier_straight.toml",
    "barriers_staggered.toml",
    "barrier_left_turn.toml",
    "barrier_right_turn.toml",
    "barriers_curve.toml",
];

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// 8-connected component filter via union-find over raster neighbors.
pub fn reference_component_filter(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    let (w, h) = mask.size();
    let on = |u: isize, v: isize| u >= 0 && v >= 0 && (u as usize) < w && (v as usize) < h && *mask.get(u as usize, v as usize);
    let mut parent: Vec<usize> = (0..w * h).collect();
    for v in 0..h as isize {
        for u in 0..w as isize {
            if !on(u, v) {
                continue;
            }
            for (du, dv) in [(-1, -1), (0, -1), (1, -1), (-1, 0)] {
                if on(u + du, v + dv) {
                    let a = find(&mut parent, v as usize * w + u as usize);
                    let b = find(&mut parent, (v + dv) as usize * w + (u + du) as usize);
                    parent[a] = b;
                }
            }
        }
    }
    let mut area = vec![0usize; w * h];
    for i in 0..w * h {
        if mask.as_slice()[i] {
            let r = find(&mut parent, i);
            area[r] += 1;
        }
    }
    let keep: Vec<bool> = (0..w * h)
        .map(|i| mask.as_slice()[i] && area[find(&mut parent, i)] >= min_area)
        .collect();
    Raster::from_vec(w, h, keep).unwrap()
}

/// Sizes of all 8-connected components.
pub fn component_areas(mask: &BinaryMask) -> Vec<usize> {
    let (w, h) = mask.size();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !mask.as_slice()[start] || seen[start] {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        let mut n = 0;
        while let Some(i) = queue.pop_front() {
            n += 1;
            let (u, v) = ((i % w) as isize, (i / w) as isize);
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (x, y) = (u + du, v + dv);
                    if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                        continue;
                    }
                    let j = y as usize * w + x as usize;
                    if mask.as_slice()[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(n);
    }
    out
}

/// `true` when the segment `a → b` crosses the interior of the box,
/// by clipping the segment against each pair of planes.
fn segment_hits_box(a: &Point3<f64>, b: &Point3<f64>, lo: &Point3<f64>, hi: &Point3<f64>) -> bool {
    let d = b - a;
    let (mut enter, mut exit) = (0.0f64, 1.0f64);
    for i in 0..3 {
        if d[i] == 0.0 {
            if a[i] < lo[i] || a[i] > hi[i] {
                return false;
            }
            continue;
        }
        let ta = (lo[i] - a[i]) / d[i];
        let tb = (hi[i] - a[i]) / d[i];
        enter = enter.max(ta.min(tb));
        exit = exit.min(ta.max(tb));
    }
    exit - enter > 1e-9 && enter < 1.0 - 1e-9 && exit > 1e-9
}

pub struct BruteOracle {
    pub true_blind: BinaryMask,
    pub tframe_blind: BinaryMask,
    pub road_visible: BinaryMask,
}

/// Per-pixel ray casting written independently of the library oracle.
pub fn brute_force_oracle(scene: &SynthScene, t: usize, window: usize) -> BruteOracle {
    let k = scene.intrinsics;
    let (w, h) = k.size();
    let pose = scene.trajectory[t];
    let center = Point3::from(*pose.translation());
    let futures: Vec<_> = scene.trajectory[t + 1..=t + window].to_vec();
    let blocked = |a: &Point3<f64>, b: &Point3<f64>| scene.boxes.iter().any(|bx| segment_hits_box(a, b, &bx.min, &bx.max));
    let mut true_blind = BinaryMask::empty(w, h);
    let mut tframe = BinaryMask::empty(w, h);
    let mut visible = BinaryMask::empty(w, h);
    for v in 0..h {
        for u in 0..w {
            let cam_dir = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let dir = pose.rotation() * cam_dir;
            if dir.z >= 0.0 {
                continue;
            }
            let s = (scene.ground_height - center.z) / dir.z;
            let p = center + dir * s;
            if !blocked(&center, &p) {
                visible.set(u, v, true);
                continue;
            }
            true_blind.set(u, v, true);
            let seen = futures.iter().any(|fp| {
                let c = Point3::from(*fp.translation());
                let local = fp.rotation().transpose() * (p - c);
                if local.z <= 0.0 {
                    return false;
                }
                let px = Point2::new(k.fx * local.x / local.z + k.cx, k.fy * local.y / local.z + k.cy);
                let (ru, rv) = ((px.x + 0.5).floor(), (px.y + 0.5).floor());
                let inside = ru >= 0.0 && rv >= 0.0 && ru < w as f64 && rv < h as f64;
                inside && !blocked(&c, &p)
            });
            if seen {
                tframe.set(u, v, true);
            }
        }
    }
    BruteOracle {
        true_blind,
        tframe_blind: tframe,
        road_visible: visible,
    }
}

/// Confusion counts `(tp, fp, fn, tn)` inside `vis`, by direct enumeration.
pub fn reference_confusion(pred: &BinaryMask, gt: &BinaryMask, vis: &BinaryMask) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for i in 0..pred.len() {
        if !vis.as_slice()[i] {
            continue;
        }
        match (pred.as_slice()[i], gt.as_slice()[i]) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}
