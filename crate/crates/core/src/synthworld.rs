//! Analytic synthetic road scenes: a ground plane, axis-aligned box
//! occluders, and a camera trajectory.
//!
//! Scenes render to exact depth, semantic labels, and poses, and provide a
//! ray-cast oracle for true and T-frame blind spots. The world frame is
//! `z` up, `x` forward, `y` left; cameras are level and look along their
//! heading.

use std::path::Path;

use image::{Rgb, RgbImage};
use nalgebra::{Matrix3, Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PoseSE3};
use crate::raster::{BinaryMask, DepthMap, Raster, SemanticMap};
use crate::sequence::{FrameBundle, LabelConfig, Sequence};

/// Class IDs used by rendered scenes.
pub mod labels {
    pub const SKY: u8 = 0;
    pub const ROAD: u8 = 1;
    pub const SIDEWALK: u8 = 2;
    pub const BUILDING: u8 = 3;
    pub const VEHICLE: u8 = 4;
    pub const PEDESTRIAN: u8 = 5;
    pub const CYCLIST: u8 = 6;
    pub const POLE: u8 = 7;
    pub const BARRIER: u8 = 8;
}

/// Label table matching [`labels`].
pub fn label_config() -> LabelConfig {
    use labels::*;
    LabelConfig::new([ROAD, SIDEWALK], [SKY], [VEHICLE, PEDESTRIAN, CYCLIST], [BUILDING, POLE, BARRIER])
        .expect("static label table is valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxClass {
    Building,
    Vehicle,
    Pedestrian,
    Cyclist,
    Pole,
    Barrier,
}

impl BoxClass {
    pub fn label(self) -> u8 {
        match self {
            BoxClass::Building => labels::BUILDING,
            BoxClass::Vehicle => labels::VEHICLE,
            BoxClass::Pedestrian => labels::PEDESTRIAN,
            BoxClass::Cyclist => labels::CYCLIST,
            BoxClass::Pole => labels::POLE,
            BoxClass::Barrier => labels::BARRIER,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneBox {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
    pub class: BoxClass,
}

impl SceneBox {
    pub fn new(center: Point3<f64>, size: Vector3<f64>, class: BoxClass) -> Result<Self> {
        if !size.iter().all(|s| s.is_finite() && *s > 0.0) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput(format!("box extents must be positive and finite: {size:?}")));
        }
        Ok(Self {
            min: center - size / 2.0,
            max: center + size / 2.0,
            class,
        })
    }

    /// A box resting on the plane `z = ground`, given its footprint center.
    pub fn on_ground(ground: f64, x: f64, y: f64, size: Vector3<f64>, class: BoxClass) -> Result<Self> {
        Self::new(Point3::new(x, y, ground + size.z / 2.0), size, class)
    }

    fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    /// Parameter interval `[t_near, t_far]` where `origin + t·dir` is inside
    /// the box (slab method).
    #[inline]
    fn slab(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            let (a, b) = if inv_dir[i].is_infinite() {
                // Ray parallel to this slab.
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                (f64::NEG_INFINITY, f64::INFINITY)
            } else {
                let a = (self.min[i] - origin[i]) * inv_dir[i];
                let b = (self.max[i] - origin[i]) * inv_dir[i];
                if a < b { (a, b) } else { (b, a) }
            };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub intrinsics: CameraIntrinsics,
    pub fps: f64,
    /// Height `z` of the ground plane.
    pub ground_height: f64,
    pub boxes: Vec<SceneBox>,
    /// Camera-to-world pose per frame.
    pub trajectory: Vec<PoseSE3>,
}

/// Ground-truth blind-spot maps for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleMaps {
    /// Road pixels occluded from the current camera.
    pub true_blind: BinaryMask,
    /// True blind spots seen unoccluded by some camera in the next `T` frames.
    pub tframe_blind: BinaryMask,
    /// Pixels whose first hit is the road.
    pub road_visible: BinaryMask,
}

/// Level camera pose at `position` facing `heading` (radians, counter-clockwise
/// from +x).
pub fn level_camera_pose(position: Point3<f64>, heading: f64) -> PoseSE3 {
    let (s, c) = heading.sin_cos();
    let forward = Vector3::new(c, s, 0.0);
    let right = Vector3::new(s, -c, 0.0);
    let down = Vector3::new(0.0, 0.0, -1.0);
    PoseSE3::new(Matrix3::from_columns(&[right, down, forward]), position.coords)
        .expect("level camera rotation is orthonormal")
}

/// Constant-speed, constant-yaw-rate trajectory sampled at `fps`.
pub fn arc_trajectory(
    start: Point3<f64>,
    heading: f64,
    speed: f64,
    yaw_rate: f64,
    fps: f64,
    frames: usize,
) -> Vec<PoseSE3> {
    (0..frames)
        .map(|i| {
            let t = i as f64 / fps;
            let theta = heading + yaw_rate * t;
            let (dx, dy) = if yaw_rate.abs() < 1e-12 {
                (speed * t * heading.cos(), speed * t * heading.sin())
            } else {
                let r = speed / yaw_rate;
                (r * (theta.sin() - heading.sin()), -r * (theta.cos() - heading.cos()))
            };
            level_camera_pose(Point3::new(start.x + dx, start.y + dy, start.z), theta)
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    t: f64,
    label: u8,
    normal_axis: usize,
}

impl SynthScene {
    pub fn new(
        intrinsics: CameraIntrinsics,
        fps: f64,
        ground_height: f64,
        boxes: Vec<SceneBox>,
        trajectory: Vec<PoseSE3>,
    ) -> Result<Self> {
        let scene = Self {
            intrinsics,
            fps,
            ground_height,
            boxes,
            trajectory,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if !(self.fps.is_finite() && self.fps > 0.0) || !self.ground_height.is_finite() {
            return Err(Error::InvalidInput("fps must be positive and ground height finite".into()));
        }
        if self.trajectory.len() < 2 {
            return Err(Error::InvalidInput("trajectory needs at least two poses".into()));
        }
        for (i, pose) in self.trajectory.iter().enumerate() {
            let c = Point3::from(*pose.translation());
            if c.z <= self.ground_height {
                return Err(Error::InvalidInput(format!("camera {i} is not above the ground plane")));
            }
            if self.boxes.iter().any(|b| b.contains(&c)) {
                return Err(Error::InvalidInput(format!("camera {i} is inside a box")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::InvalidInput(format!("scene file: {e}")))?;
        file.into_scene()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::InvalidInput(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn camera(&self, t: usize) -> Result<&PoseSE3> {
        self.trajectory
            .get(t)
            .ok_or_else(|| Error::InvalidInput(format!("frame {t} outside trajectory of {} poses", self.len())))
    }

    /// World-space ray through pixel `(u, v)`, scaled so that the ray
    /// parameter equals camera-frame depth.
    #[inline]
    fn pixel_ray(&self, pose: &PoseSE3, u: usize, v: usize) -> (Point3<f64>, Vector3<f64>) {
        let dir = pose.transform_vector(&self.intrinsics.ray_direction(Point2::new(u as f64, v as f64)));
        (Point3::from(*pose.translation()), dir)
    }

    #[inline]
    fn ground_hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        (dir.z < 0.0).then(|| (self.ground_height - origin.z) / dir.z)
    }

    /// Nearest box entry along the ray, with the axis of the entered face.
    #[inline]
    fn box_hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        for b in &self.boxes {
            if let Some((t0, t1)) = b.slab(origin, &inv) {
                if t1 > 0.0 && t0 > 0.0 && best.is_none_or(|h| t0 < h.t) {
                    let p = origin + dir * t0;
                    let normal_axis = (0..3)
                        .min_by(|&i, &j| {
                            let di = (p[i] - b.min[i]).abs().min((p[i] - b.max[i]).abs());
                            let dj = (p[j] - b.min[j]).abs().min((p[j] - b.max[j]).abs());
                            di.total_cmp(&dj)
                        })
                        .unwrap_or(2);
                    best = Some(Hit {
                        t: t0,
                        label: b.class.label(),
                        normal_axis,
                    });
                }
            }
        }
        best
    }

    /// `true` when the open segment `a → b` passes through a box.
    fn segment_blocked(&self, a: &Point3<f64>, b: &Point3<f64>) -> bool {
        let dir = b - a;
        let inv = dir.map(|d| 1.0 / d);
        const EPS: f64 = 1e-9;
        self.boxes.iter().any(|bx| {
            bx.slab(a, &inv)
                .is_some_and(|(t0, t1)| t0 < 1.0 - EPS && t1 > EPS && t1 - t0 > EPS)
        })
    }

    fn first_hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let ground = self.ground_hit(origin, dir).map(|t| Hit {
            t,
            label: labels::ROAD,
            normal_axis: 2,
        });
        match (ground, self.box_hit(origin, dir)) {
            (Some(g), Some(b)) => Some(if occludes(&b, g.t) { b } else { g }),
            (g, b) => g.or(b),
        }
    }

    /// Exact depth, semantic labels, pose, and a shaded color image for frame `t`.
    pub fn render(&self, t: usize) -> Result<FrameBundle> {
        let pose = *self.camera(t)?;
        let (w, h) = self.intrinsics.size();
        let rows: Vec<Vec<(f64, u8, Rgb<u8>)>> = (0..h)
            .into_par_iter()
            .map(|v| {
                (0..w)
                    .map(|u| {
                        let (o, d) = self.pixel_ray(&pose, u, v);
                        match self.first_hit(&o, &d) {
                            Some(hit) => (hit.t, hit.label, shade(&hit, &(o + d * hit.t))),
                            None => (0.0, labels::SKY, Rgb([150, 190, 235])),
                        }
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<_> = rows.into_iter().flatten().collect();
        let depth = DepthMap::from_values(Raster::from_vec(w, h, flat.iter().map(|p| p.0).collect())?);
        let semantic = SemanticMap::from_vec(w, h, flat.iter().map(|p| p.1).collect())?;
        let mut rgb = RgbImage::new(w as u32, h as u32);
        for (i, p) in flat.iter().enumerate() {
            rgb.put_pixel((i % w) as u32, (i / w) as u32, p.2);
        }
        Ok(FrameBundle {
            depth,
            semantic,
            pose,
            rgb: Some(rgb),
        })
    }

    pub fn render_sequence(&self) -> Result<Sequence> {
        let frames = (0..self.len()).map(|t| self.render(t)).collect::<Result<Vec<_>>>()?;
        Sequence::new(self.intrinsics, self.fps, label_config(), frames)
    }

    /// Ray-cast ground truth for frame `t` with a look-ahead of `window` frames.
    pub fn oracle_blind_spots(&self, t: usize, window: usize) -> Result<OracleMaps> {
        if t + window >= self.len() {
            return Err(Error::WindowUnderflow {
                frame: t,
                window,
                len: self.len(),
                last_processable: self.len().checked_sub(window + 1),
            });
        }
        let pose = self.trajectory[t];
        let future: Vec<(PoseSE3, Point3<f64>)> = self.trajectory[t + 1..=t + window]
            .iter()
            .map(|p| (p.inverse(), Point3::from(*p.translation())))
            .collect();
        let (w, h) = self.intrinsics.size();
        let rows: Vec<Vec<(bool, bool, bool)>> = (0..h)
            .into_par_iter()
            .map(|v| {
                (0..w)
                    .map(|u| {
                        let (o, d) = self.pixel_ray(&pose, u, v);
                        let Some(tg) = self.ground_hit(&o, &d) else {
                            return (false, false, false);
                        };
                        let occluded = self.box_hit(&o, &d).is_some_and(|b| occludes(&b, tg));
                        if !occluded {
                            return (false, false, true);
                        }
                        let p = o + d * tg;
                        let seen_later = future.iter().any(|(world_to_cam, center)| {
                            let in_view = self
                                .intrinsics
                                .project(&world_to_cam.transform_point(&p))
                                .and_then(|proj| self.intrinsics.containing_pixel(proj.pixel))
                                .is_some();
                            in_view && !self.segment_blocked(center, &p)
                        });
                        (true, seen_later, false)
                    })
                    .collect()
            })
            .collect();
        let flat: Vec<_> = rows.into_iter().flatten().collect();
        Ok(OracleMaps {
            true_blind: BinaryMask::from_vec(w, h, flat.iter().map(|x| x.0).collect())?,
            tframe_blind: BinaryMask::from_vec(w, h, flat.iter().map(|x| x.1).collect())?,
            road_visible: BinaryMask::from_vec(w, h, flat.iter().map(|x| x.2).collect())?,
        })
    }
}

/// A box hit hides the ground only when strictly nearer, so a ray grazing
/// a box base lands on the road in both the render and the oracle.
fn occludes(hit: &Hit, ground_t: f64) -> bool {
    hit.t < ground_t * (1.0 - 1e-12)
}

fn shade(hit: &Hit, p: &Point3<f64>) -> Rgb<u8> {
    let base: [f64; 3] = match hit.label {
        labels::ROAD => {
            // 2 m tiles make motion readable in overlays.
            let tile = ((p.x / 2.0).floor() + (p.y / 2.0).floor()).rem_euclid(2.0);
            if tile < 1.0 { [110.0, 110.0, 115.0] } else { [95.0, 95.0, 100.0] }
        }
        labels::BUILDING => [170.0, 140.0, 110.0],
        labels::VEHICLE => [40.0, 70.0, 160.0],
        labels::PEDESTRIAN => [200.0, 60.0, 60.0],
        labels::CYCLIST => [200.0, 160.0, 40.0],
        labels::BARRIER => [230.0, 120.0, 30.0],
        _ => [120.0, 120.0, 120.0],
    };
    let face = [0.8, 0.9, 1.0][hit.normal_axis.min(2)];
    let fog = 0.55 + 0.45 * (-hit.t / 60.0).exp();
    Rgb(base.map(|c| (c * face * fog).round().clamp(0.0, 255.0) as u8))
}

/// Returns a copy of `seq` whose camera positions are displaced by `magnitude`
/// meters in independent uniformly random directions.
pub fn perturb_translations(seq: &Sequence, magnitude: f64, seed: u64) -> Sequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = seq.clone();
    for f in &mut out.frames {
        let dir = loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        f.pose = PoseSE3::new(*f.pose.rotation(), f.pose.translation() + dir * magnitude)
            .expect("rotation unchanged");
    }
    out
}

// ---- scene file ----------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    fps: f64,
    camera: CameraSection,
    #[serde(default)]
    ground: GroundSection,
    #[serde(default)]
    boxes: Vec<BoxSection>,
    trajectory: TrajectorySection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraSection {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundSection {
    #[serde(default)]
    height: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxSection {
    /// Footprint center `[x, y]` for boxes resting on the ground, or the full
    /// 3D center `[x, y, z]`.
    center: Vec<f64>,
    size: [f64; 3],
    class: BoxClass,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectorySection {
    #[serde(default)]
    start: Option<[f64; 3]>,
    #[serde(default)]
    heading_deg: f64,
    #[serde(default)]
    speed: f64,
    #[serde(default)]
    yaw_rate_deg: f64,
    #[serde(default)]
    frames: Option<usize>,
    #[serde(default)]
    waypoints: Vec<Waypoint>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Waypoint {
    position: [f64; 3],
    #[serde(default)]
    heading_deg: f64,
}

impl SceneFile {
    fn into_scene(self) -> Result<SynthScene> {
        let c = &self.camera;
        let k = CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?;
        let ground = self.ground.height;
        let boxes = self
            .boxes
            .iter()
            .map(|b| {
                let size = Vector3::from(b.size);
                match b.center.as_slice() {
                    &[x, y] => SceneBox::on_ground(ground, x, y, size, b.class),
                    &[x, y, z] => SceneBox::new(Point3::new(x, y, z), size, b.class),
                    other => Err(Error::InvalidInput(format!(
                        "box center needs 2 or 3 coordinates, got {}",
                        other.len()
                    ))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let tr = &self.trajectory;
        let trajectory = if !tr.waypoints.is_empty() {
            if tr.start.is_some() || tr.frames.is_some() {
                return Err(Error::InvalidInput("trajectory: use either waypoints or start/frames".into()));
            }
            tr.waypoints
                .iter()
                .map(|w| level_camera_pose(Point3::from(w.position), w.heading_deg.to_radians()))
                .collect()
        } else {
            let (Some(start), Some(frames)) = (tr.start, tr.frames) else {
                return Err(Error::InvalidInput("trajectory needs start and frames, or waypoints".into()));
            };
            arc_trajectory(
                Point3::from(start),
                tr.heading_deg.to_radians(),
                tr.speed,
                tr.yaw_rate_deg.to_radians(),
                self.fps,
                frames,
            )
        };
        SynthScene::new(k, self.fps, ground, boxes, trajectory)
    }
}
