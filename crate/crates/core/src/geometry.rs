//! Pinhole camera model, rigid camera-to-world poses, and forward warping of
//! masks and depths between frames.
//!
//! Pixel coordinates are `(u, v)` with `u` to the right, `v` downward, and
//! the origin at the center of the top-left pixel. Camera frames have `x`
//! right, `y` down, `z` along the optical axis.

use nalgebra::{Matrix3, Point2, Point3, Vector3};

use crate::error::{Error, Result};
use crate::raster::{ensure_size, BinaryMask, DepthMap};

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|x| x.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64 && 0.0 <= self.cy && self.cy < self.height as f64) {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside {}x{} raster",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Lifts a pixel at the given depth (camera-frame `Z`) to a camera-frame point.
    pub fn backproject(&self, px: Point2<f64>, depth: f64) -> Result<Point3<f64>> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidInput(format!("depth must be positive, got {depth}")));
        }
        Ok(self.backproject_unchecked(px, depth))
    }

    #[inline]
    pub(crate) fn backproject_unchecked(&self, px: Point2<f64>, depth: f64) -> Point3<f64> {
        Point3::new(
            (px.x - self.cx) * depth / self.fx,
            (px.y - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Camera-frame direction through a pixel, scaled so that its `z` is 1.
    #[inline]
    pub fn ray_direction(&self, px: Point2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point; `None` when it is not in front of the
    /// camera. The returned pixel may lie outside the raster.
    #[inline]
    pub fn project(&self, p: &Point3<f64>) -> Option<Projection> {
        if p.z <= 0.0 {
            return None;
        }
        Some(Projection {
            pixel: Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy),
            depth: p.z,
        })
    }

    /// Pixel whose footprint contains `px`, if it lies in the raster.
    #[inline]
    pub fn containing_pixel(&self, px: Point2<f64>) -> Option<(usize, usize)> {
        let u = (px.x + 0.5).floor();
        let v = (px.y + 0.5).floor();
        (u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64)
            .then_some((u as usize, v as usize))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub pixel: Point2<f64>,
    pub depth: f64,
}

/// Rigid transform, camera-to-world when attached to a frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl PoseSE3 {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("pose has non-finite entries".into()));
        }
        let ortho_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if ortho_err > ROTATION_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidInput(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Parses a row-major 3×4 `[R | t]` matrix.
    pub fn from_row_major_3x4(m: &[f64; 12]) -> Result<Self> {
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vector3::new(m[3], m[7], m[11]))
    }

    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let (r, t) = (&self.rotation, &self.translation);
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Largest absolute entry-wise difference of the 3×4 matrices.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_row_major_3x4()
            .iter()
            .zip(other.to_row_major_3x4().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Transform taking points in the `src` camera frame into the `dst` camera
/// frame: `dst⁻¹ ∘ src`.
pub fn relative_pose(src: &PoseSE3, dst: &PoseSE3) -> PoseSE3 {
    dst.inverse().compose(src)
}

/// Forward-warps the set pixels of `mask` into the camera related by `rel`
/// (source frame to target frame).
///
/// Each set source pixel with valid depth is lifted, transformed, and
/// projected. The landing point splats a 2×2 block of pixels anchored at the
/// floor of its coordinates. Colliding splats keep the nearest depth. Set
/// pixels without valid depth cannot be warped and are skipped.
pub fn forward_warp(
    mask: &BinaryMask,
    depth_src: &DepthMap,
    rel: &PoseSE3,
    k: &CameraIntrinsics,
) -> Result<(BinaryMask, DepthMap)> {
    ensure_size(k.size(), mask.size())?;
    ensure_size(k.size(), depth_src.size())?;

    let (w, h) = k.size();
    let mut zbuf = vec![f64::INFINITY; w * h];
    for (u, v, &set) in mask.enumerate() {
        if !set {
            continue;
        }
        let Some(d) = depth_src.get(u, v) else {
            continue;
        };
        let p = rel.transform_point(&k.backproject_unchecked(Point2::new(u as f64, v as f64), d));
        let Some(proj) = k.project(&p) else {
            continue;
        };
        let u0 = proj.pixel.x.floor();
        let v0 = proj.pixel.y.floor();
        // Skip landings whose whole footprint is off-raster (also guards the casts).
        if u0 < -1.0 || v0 < -1.0 || u0 >= w as f64 || v0 >= h as f64 {
            continue;
        }
        let (u0, v0) = (u0 as i64, v0 as i64);
        for tv in v0..=v0 + 1 {
            for tu in u0..=u0 + 1 {
                if tu < 0 || tv < 0 || tu >= w as i64 || tv >= h as i64 {
                    continue;
                }
                let slot = &mut zbuf[tv as usize * w + tu as usize];
                if proj.depth < *slot {
                    *slot = proj.depth;
                }
            }
        }
    }

    let out_mask = BinaryMask::from_vec(w, h, zbuf.iter().map(|z| z.is_finite()).collect())?;
    let out_depth = DepthMap::from_values(crate::raster::Raster::from_vec(w, h, zbuf)?);
    Ok((out_mask, out_depth))
}
