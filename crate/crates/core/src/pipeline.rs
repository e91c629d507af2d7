//! T-frame blind-spot generation.
//!
//! For a target frame `t`, the traversable (road and pavement) pixels of the
//! next `T` frames are forward-warped into `t` and OR-ed into an aggregated
//! surface `s`. Removing the traversable region visible at `t` leaves the raw
//! blind spots. Pixels whose current depth agrees with the mean warped depth
//! (within `l_d`) are residues of pose/depth error and are dropped, then
//! components below `min_area` pixels are removed. A visibility mask marks
//! where supervision is meaningful: sky, or surfaces closer than `L`.

use nalgebra::Point2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{forward_warp, relative_pose, CameraIntrinsics};
use crate::raster::{ensure_size, BinaryMask, DepthMap, Raster, SemanticMap};
use crate::sequence::{LabelConfig, Sequence};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    /// Look-ahead horizon in seconds.
    pub t_seconds: f64,
    /// Frame rate the sequence was resampled to.
    pub fps: f64,
    /// Depth-agreement threshold (meters) below which a blind-spot pixel is
    /// treated as a warping residue.
    pub l_d: f64,
    /// Components smaller than this many pixels are dropped.
    pub min_area: usize,
    /// Visibility distance `L` in meters.
    pub vis_distance: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            t_seconds: 5.0,
            fps: 5.0,
            l_d: 1.0,
            min_area: 100,
            vis_distance: 16.0,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !(positive(self.t_seconds) && positive(self.fps) && positive(self.l_d) && positive(self.vis_distance))
            || self.min_area == 0
        {
            return Err(Error::InvalidInput(format!("pipeline parameters must be positive: {self:?}")));
        }
        if self.window() < 1 {
            return Err(Error::InvalidInput(format!(
                "t_seconds * fps = {} rounds to zero frames",
                self.t_seconds * self.fps
            )));
        }
        Ok(())
    }

    /// Window length `T` in frames.
    pub fn window(&self) -> usize {
        (self.t_seconds * self.fps).round().max(0.0) as usize
    }

    /// Parameters for an explicit window of `frames` at this frame rate.
    pub fn with_window(mut self, frames: usize) -> Self {
        self.t_seconds = frames as f64 / self.fps;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlindSpotResult {
    /// Final blind-spot mask ω.
    pub omega: BinaryMask,
    /// Visibility mask V.
    pub visibility: BinaryMask,
    /// Aggregated traversable surface s.
    pub aggregated_surface: BinaryMask,
    /// Mean warped depth d_a over contributing frames.
    pub aggregated_depth: DepthMap,
    /// Number of frames M contributing traversable evidence per pixel.
    pub support_count: Raster<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub surface: BinaryMask,
    pub depth: DepthMap,
    pub count: Raster<u32>,
}

pub fn traversable(sem: &SemanticMap, cfg: &LabelConfig) -> Result<BinaryMask> {
    cfg.select(sem, &cfg.traversable_ids)
}

/// OR of the warped masks, per-pixel support count, and mean warped depth.
pub fn aggregate_surface(warped: &[(BinaryMask, DepthMap)]) -> Result<Aggregate> {
    let Some((first, _)) = warped.first() else {
        return Err(Error::InvalidInput("nothing to aggregate".into()));
    };
    let (w, h) = first.size();
    let mut count = Raster::filled(w, h, 0u32);
    let mut sum = vec![0.0f64; w * h];
    for (mask, depth) in warped {
        ensure_size((w, h), mask.size())?;
        ensure_size((w, h), depth.size())?;
        let depths = depth.values().as_slice();
        let valid = depth.validity().as_slice();
        for (i, &m) in mask.as_slice().iter().enumerate() {
            // A warped mask pixel without depth cannot feed d_a; it is not
            // produced by forward_warp but may come from callers.
            if m && valid[i] {
                count.as_mut_slice()[i] += 1;
                sum[i] += depths[i];
            }
        }
    }
    let surface = count.map(|&c| c > 0);
    let mean = Raster::from_vec(
        w,
        h,
        sum.iter()
            .zip(count.iter())
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect(),
    )?;
    Ok(Aggregate {
        depth: DepthMap::new(mean, surface.clone())?,
        surface,
        count,
    })
}

/// `s ∧ ¬r_t`.
pub fn raw_blind_spots(surface: &BinaryMask, visible_traversable: &BinaryMask) -> Result<BinaryMask> {
    surface.and_not(visible_traversable)
}

/// Clears blind-spot pixels whose current depth lies within `l_d` of the
/// aggregated depth. Pixels without a current or aggregated depth are kept.
pub fn rectify_by_depth(
    omega_raw: &BinaryMask,
    depth_t: &DepthMap,
    depth_agg: &DepthMap,
    l_d: f64,
) -> Result<BinaryMask> {
    ensure_size(omega_raw.size(), depth_t.size())?;
    ensure_size(omega_raw.size(), depth_agg.size())?;
    let mut out = omega_raw.clone();
    for (u, v, &set) in omega_raw.enumerate() {
        if !set {
            continue;
        }
        if let (Some(d), Some(da)) = (depth_t.get(u, v), depth_agg.get(u, v)) {
            if (d - da).abs() < l_d {
                out.set(u, v, false);
            }
        }
    }
    Ok(out)
}

const NEIGHBORS_8: [(isize, isize); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Zeroes every 8-connected component with fewer than `min_area` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_area: usize) -> BinaryMask {
    let (w, h) = mask.size();
    let src = mask.as_slice();
    let mut out = mask.clone();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if !src[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        component.clear();
        while let Some(i) = stack.pop() {
            component.push(i);
            let (u, v) = ((i % w) as isize, (i / w) as isize);
            for (du, dv) in NEIGHBORS_8 {
                let (nu, nv) = (u + du, v + dv);
                if nu < 0 || nv < 0 || nu >= w as isize || nv >= h as isize {
                    continue;
                }
                let j = nv as usize * w + nu as usize;
                if src[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if component.len() < min_area {
            for &i in &component {
                out.as_mut_slice()[i] = false;
            }
        }
    }
    out
}

/// Sky pixels, plus pixels whose surface point lies closer than `max_distance`
/// (Euclidean, camera center to the back-projected point).
pub fn visibility_mask(
    sem: &SemanticMap,
    depth_t: &DepthMap,
    k: &CameraIntrinsics,
    cfg: &LabelConfig,
    max_distance: f64,
) -> Result<BinaryMask> {
    ensure_size(k.size(), sem.size())?;
    ensure_size(k.size(), depth_t.size())?;
    let sky = cfg.select(sem, &cfg.sky_ids)?;
    Ok(BinaryMask::from_fn(k.width, k.height, |u, v| {
        *sky.get(u, v)
            || depth_t.get(u, v).is_some_and(|d| {
                k.backproject_unchecked(Point2::new(u as f64, v as f64), d).coords.norm() < max_distance
            })
    }))
}

/// Warps the traversable pixels of frames `t+1 ..= t+window` into frame `t`
/// and aggregates them.
pub fn aggregate_window(seq: &Sequence, t: usize, window: usize) -> Result<Aggregate> {
    check_window(seq, t, window)?;
    let k = &seq.intrinsics;
    let target = &seq.frames[t].pose;
    let warped = (t + 1..=t + window)
        .into_par_iter()
        .map(|i| {
            let f = &seq.frames[i];
            let r = traversable(&f.semantic, &seq.labels)?.and(f.depth.validity())?;
            forward_warp(&r, &f.depth, &relative_pose(&f.pose, target), k)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_surface(&warped)
}

fn check_window(seq: &Sequence, t: usize, window: usize) -> Result<()> {
    if t + window >= seq.len() {
        return Err(Error::WindowUnderflow {
            frame: t,
            window,
            len: seq.len(),
            last_processable: seq.len().checked_sub(window + 1),
        });
    }
    Ok(())
}

/// Validates `params` and checks that they match the sequence frame rate.
pub fn check_params(seq: &Sequence, params: &PipelineParams) -> Result<()> {
    params.validate()?;
    if (seq.fps - params.fps).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "sequence runs at {} fps but parameters expect {} fps; resample first",
            seq.fps, params.fps
        )));
    }
    Ok(())
}

/// Runs the full blind-spot procedure for frame `t`.
pub fn generate_frame(seq: &Sequence, t: usize, params: &PipelineParams) -> Result<BlindSpotResult> {
    check_params(seq, params)?;
    let window = params.window();
    check_window(seq, t, window)?;

    let frame = &seq.frames[t];
    let agg = aggregate_window(seq, t, window)?;
    let visible = traversable(&frame.semantic, &seq.labels)?;
    let raw = raw_blind_spots(&agg.surface, &visible)?;
    let rectified = rectify_by_depth(&raw, &frame.depth, &agg.depth, params.l_d)?;
    let omega = remove_small_components(&rectified, params.min_area);
    let visibility = visibility_mask(&frame.semantic, &frame.depth, &seq.intrinsics, &seq.labels, params.vis_distance)?;

    Ok(BlindSpotResult {
        omega,
        visibility,
        aggregated_surface: agg.surface,
        aggregated_depth: agg.depth,
        support_count: agg.count,
    })
}

/// Indices of frames with a complete look-ahead window.
pub fn processable_frames(seq: &Sequence, params: &PipelineParams) -> std::ops::Range<usize> {
    0..seq.len().saturating_sub(params.window())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PoseSE3;
    use crate::sequence::FrameBundle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ROAD: u8 = 1;
    const SKY: u8 = 0;
    const BUILDING: u8 = 3;

    fn cfg() -> LabelConfig {
        LabelConfig::new([ROAD, 2], [SKY], [4], [BUILDING]).unwrap()
    }

    fn mask_rows(w: usize, h: usize, rows: std::ops::Range<usize>) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, v| rows.contains(&v))
    }

    #[test]
    fn traversable_examples() {
        let c = cfg();
        assert!(!traversable(&SemanticMap::filled(4, 3, SKY), &c).unwrap().any());
        assert_eq!(traversable(&SemanticMap::filled(4, 3, ROAD), &c).unwrap().count_ones(), 12);
        let checker = SemanticMap::from_fn(6, 5, |u, v| if (u + v) % 2 == 0 { ROAD } else { BUILDING });
        let r = traversable(&checker, &c).unwrap();
        for (u, v, &id) in checker.enumerate() {
            assert_eq!(*r.get(u, v), c.traversable_ids.contains(&id));
        }
        assert!(matches!(traversable(&SemanticMap::filled(2, 2, 99), &c), Err(Error::UnknownLabel { label: 99 })));
    }

    #[test]
    fn aggregate_single_and_disjoint() {
        let (w, h) = (5, 4);
        let m1 = mask_rows(w, h, 0..2);
        let d1 = DepthMap::from_values(Raster::filled(w, h, 3.0));
        let a = aggregate_surface(&[(m1.clone(), d1.clone())]).unwrap();
        assert_eq!(a.surface, m1);
        for (u, v, &m) in m1.enumerate() {
            assert_eq!(a.depth.get(u, v), m.then_some(3.0));
        }

        let m2 = mask_rows(w, h, 2..4);
        let d2 = DepthMap::from_values(Raster::filled(w, h, 7.0));
        let a = aggregate_surface(&[(m1.clone(), d1), (m2.clone(), d2)]).unwrap();
        assert_eq!(a.surface, m1.or(&m2).unwrap());
        for (u, v, _) in m1.enumerate() {
            assert_eq!(a.depth.get(u, v), Some(if v < 2 { 3.0 } else { 7.0 }));
            assert_eq!(*a.count.get(u, v), 1);
        }
    }

    #[test]
    fn aggregate_matches_per_pixel_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (w, h) = (8, 8);
        let items: Vec<(BinaryMask, DepthMap)> = (0..5)
            .map(|_| {
                let m = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(0.4));
                let d = Raster::from_fn(w, h, |u, v| if *m.get(u, v) { rng.random_range(1.0..30.0) } else { 0.0 });
                (m, DepthMap::from_values(d))
            })
            .collect();
        let a = aggregate_surface(&items).unwrap();
        for v in 0..h {
            for u in 0..w {
                let mut n = 0u32;
                let mut acc = 0.0;
                let mut any = false;
                for (m, d) in &items {
                    if *m.get(u, v) {
                        any = true;
                        n += 1;
                        acc += d.get(u, v).unwrap();
                    }
                }
                assert_eq!(*a.surface.get(u, v), any);
                assert_eq!(*a.count.get(u, v), n);
                match a.depth.get(u, v) {
                    Some(da) => assert!((da - acc / n as f64).abs() < 1e-12),
                    None => assert_eq!(n, 0),
                }
            }
        }
    }

    #[test]
    fn aggregate_rejects_empty_and_mismatch() {
        assert!(aggregate_surface(&[]).is_err());
        let a = (BinaryMask::empty(3, 3), DepthMap::invalid(3, 3));
        let b = (BinaryMask::empty(4, 3), DepthMap::invalid(4, 3));
        assert!(matches!(aggregate_surface(&[a, b]), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn raw_blind_spot_examples() {
        let s = mask_rows(4, 8, 0..4);
        assert!(!raw_blind_spots(&s, &s).unwrap().any());
        assert_eq!(raw_blind_spots(&s, &BinaryMask::empty(4, 8)).unwrap(), s);
        let r = mask_rows(4, 8, 2..6);
        assert_eq!(raw_blind_spots(&s, &r).unwrap(), mask_rows(4, 8, 0..2));
        assert!(raw_blind_spots(&s, &BinaryMask::empty(3, 8)).is_err());
    }

    #[test]
    fn rectify_examples() {
        let omega = BinaryMask::full(3, 1);
        let dt = DepthMap::from_values(Raster::from_vec(3, 1, vec![10.0, 5.0, 0.0]).unwrap());
        let da = DepthMap::from_values(Raster::from_vec(3, 1, vec![10.2, 12.0, 4.0]).unwrap());
        let out = rectify_by_depth(&omega, &dt, &da, 1.0).unwrap();
        // removed (|Δ| = 0.2), kept (|Δ| = 7), kept (no current depth)
        assert_eq!(out.as_slice(), &[false, true, true]);
        // exactly l_d apart is kept
        let dt = DepthMap::from_values(Raster::filled(1, 1, 4.0));
        let da = DepthMap::from_values(Raster::filled(1, 1, 5.0));
        assert!(*rectify_by_depth(&BinaryMask::full(1, 1), &dt, &da, 1.0).unwrap().get(0, 0));
    }

    fn square(w: usize, h: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |u, v| u < side && v < side)
    }

    #[test]
    fn small_components_boundary() {
        let m99 = BinaryMask::from_fn(20, 20, |u, v| u < 9 && v < 11);
        assert_eq!(m99.count_ones(), 99);
        assert!(!remove_small_components(&m99, 100).any());
        let m100 = square(20, 20, 10);
        assert_eq!(remove_small_components(&m100, 100), m100);
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let diag = BinaryMask::from_fn(10, 10, |u, v| u == v);
        assert_eq!(remove_small_components(&diag, 10), diag);
        assert!(!remove_small_components(&diag, 11).any());
    }

    #[test]
    fn visibility_examples() {
        let k = CameraIntrinsics::new(100.0, 100.0, 1.0, 0.0, 3, 1).unwrap();
        let c = cfg();
        let sem = SemanticMap::from_vec(3, 1, vec![SKY, ROAD, ROAD]).unwrap();
        let d = DepthMap::from_values(Raster::from_vec(3, 1, vec![0.0, 15.9, 0.0]).unwrap());
        let v = visibility_mask(&sem, &d, &k, &c, 16.0).unwrap();
        assert_eq!(v.as_slice(), &[true, true, false]);
        let d = DepthMap::from_values(Raster::from_vec(3, 1, vec![500.0, 16.1, 3.0]).unwrap());
        let v = visibility_mask(&sem, &d, &k, &c, 16.0).unwrap();
        assert_eq!(v.as_slice(), &[true, false, true]);
    }

    #[test]
    fn visibility_is_monotone_in_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = CameraIntrinsics::new(30.0, 30.0, 16.0, 12.0, 32, 24).unwrap();
        let c = cfg();
        for _ in 0..10 {
            let sem = SemanticMap::from_fn(32, 24, |_, _| [SKY, ROAD, BUILDING][rng.random_range(0..3)]);
            let d = DepthMap::from_values(Raster::from_fn(32, 24, |_, _| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.5..60.0) }));
            let masks: Vec<_> = [4.0, 8.0, 16.0, 32.0].iter().map(|&l| visibility_mask(&sem, &d, &k, &c, l).unwrap()).collect();
            for pair in masks.windows(2) {
                assert!(pair[0].is_subset_of(&pair[1]));
            }
        }
    }

    fn flat_sequence(n: usize, poses: impl Fn(usize) -> PoseSE3) -> Sequence {
        // Camera 1.5 m over a flat road; upper half sky.
        let k = CameraIntrinsics::new(40.0, 40.0, 20.0, 15.5, 40, 32).unwrap();
        let depth = Raster::from_fn(40, 32, |_, v| {
            let dv = v as f64 - k.cy;
            if dv > 0.0 { 1.5 * k.fy / dv } else { 0.0 }
        });
        let sem = SemanticMap::from_fn(40, 32, |_, v| if (v as f64) > k.cy { ROAD } else { SKY });
        let frames = (0..n)
            .map(|i| FrameBundle {
                depth: DepthMap::from_values(depth.clone()),
                semantic: sem.clone(),
                pose: poses(i),
                rgb: None,
            })
            .collect();
        Sequence::new(k, 5.0, cfg(), frames).unwrap()
    }

    #[test]
    fn stationary_camera_yields_no_blind_spots() {
        let seq = flat_sequence(8, |_| PoseSE3::identity());
        let params = PipelineParams { min_area: 1, ..PipelineParams::default() }.with_window(5);
        let res = generate_frame(&seq, 0, &params).unwrap();
        assert!(!res.omega.any());
        // single-frame window with an identical future frame
        let params = PipelineParams { t_seconds: 0.2, ..params };
        assert_eq!(params.window(), 1);
        assert!(!generate_frame(&seq, 0, &params).unwrap().omega.any());
    }

    #[test]
    fn window_underflow_reports_last_index() {
        let seq = flat_sequence(8, |_| PoseSE3::identity());
        let params = PipelineParams::default().with_window(5);
        assert!(generate_frame(&seq, 2, &params).is_ok());
        match generate_frame(&seq, 3, &params) {
            Err(Error::WindowUnderflow { last_processable, .. }) => assert_eq!(last_processable, Some(2)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(processable_frames(&seq, &params), 0..3);
    }

    #[test]
    fn params_validation() {
        assert!(PipelineParams { t_seconds: 0.05, ..Default::default() }.validate().is_err());
        assert!(PipelineParams { min_area: 0, ..Default::default() }.validate().is_err());
        assert!(PipelineParams { l_d: -1.0, ..Default::default() }.validate().is_err());
        assert_eq!(PipelineParams::default().window(), 25);
    }
}
