//! In-memory driving sequences: per-frame depth, semantics and pose sharing
//! one camera.

use std::collections::BTreeSet;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PoseSE3};
use crate::raster::{BinaryMask, DepthMap, SemanticMap};

/// Which semantic class IDs count as traversable, sky, or obstacle.
///
/// `other_ids` lists the remaining known classes (buildings, poles, ...).
/// A label outside all four sets is unknown.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelConfig {
    pub traversable_ids: BTreeSet<u8>,
    pub sky_ids: BTreeSet<u8>,
    pub obstacle_ids: BTreeSet<u8>,
    pub other_ids: BTreeSet<u8>,
}

impl LabelConfig {
    pub fn new(
        traversable_ids: impl IntoIterator<Item = u8>,
        sky_ids: impl IntoIterator<Item = u8>,
        obstacle_ids: impl IntoIterator<Item = u8>,
        other_ids: impl IntoIterator<Item = u8>,
    ) -> Result<Self> {
        let cfg = Self {
            traversable_ids: traversable_ids.into_iter().collect(),
            sky_ids: sky_ids.into_iter().collect(),
            obstacle_ids: obstacle_ids.into_iter().collect(),
            other_ids: other_ids.into_iter().collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.traversable_ids.is_empty() || self.sky_ids.is_empty() {
            return Err(Error::InvalidInput("traversable_ids and sky_ids must be non-empty".into()));
        }
        if let Some(id) = self.traversable_ids.intersection(&self.sky_ids).next() {
            return Err(Error::InvalidInput(format!("label {id} is both traversable and sky")));
        }
        if let Some(id) = self
            .obstacle_ids
            .iter()
            .find(|id| self.traversable_ids.contains(id) || self.sky_ids.contains(id))
        {
            return Err(Error::InvalidInput(format!("obstacle label {id} is also traversable or sky")));
        }
        Ok(())
    }

    pub fn is_known(&self, id: u8) -> bool {
        self.traversable_ids.contains(&id)
            || self.sky_ids.contains(&id)
            || self.obstacle_ids.contains(&id)
            || self.other_ids.contains(&id)
    }

    /// Fails on the first label that is not in the table.
    pub fn check_known(&self, sem: &SemanticMap) -> Result<()> {
        // 256 possible IDs: a lookup table beats set probes per pixel.
        let table = self.known_table();
        match sem.iter().find(|&&id| !table[id as usize]) {
            Some(&label) => Err(Error::UnknownLabel { label }),
            None => Ok(()),
        }
    }

    /// Pixels whose label is in `ids`, after checking every label is known.
    pub(crate) fn select(&self, sem: &SemanticMap, ids: &BTreeSet<u8>) -> Result<BinaryMask> {
        self.check_known(sem)?;
        let mut lut = [false; 256];
        for &id in ids {
            lut[id as usize] = true;
        }
        Ok(sem.map(|&id| lut[id as usize]))
    }

    fn known_table(&self) -> [bool; 256] {
        let mut t = [false; 256];
        for &id in self
            .traversable_ids
            .iter()
            .chain(&self.sky_ids)
            .chain(&self.obstacle_ids)
            .chain(&self.other_ids)
        {
            t[id as usize] = true;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub depth: DepthMap,
    pub semantic: SemanticMap,
    pub pose: PoseSE3,
    pub rgb: Option<RgbImage>,
}

/// Ordered frames sharing intrinsics, frame rate, and label table.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub intrinsics: CameraIntrinsics,
    pub fps: f64,
    pub labels: LabelConfig,
    pub frames: Vec<FrameBundle>,
}

impl Sequence {
    pub fn new(
        intrinsics: CameraIntrinsics,
        fps: f64,
        labels: LabelConfig,
        frames: Vec<FrameBundle>,
    ) -> Result<Self> {
        let seq = Self {
            intrinsics,
            fps,
            labels,
            frames,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.labels.validate()?;
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {}", self.fps)));
        }
        let size = self.intrinsics.size();
        for (i, f) in self.frames.iter().enumerate() {
            let rgb_size = f.rgb.as_ref().map(|img| (img.width() as usize, img.height() as usize));
            for found in [Some(f.depth.size()), Some(f.semantic.size()), rgb_size].into_iter().flatten() {
                if found != size {
                    return Err(Error::InvalidInput(format!(
                        "frame {i}: raster {found:?} does not match intrinsics {size:?}"
                    )));
                }
            }
            self.labels
                .check_known(&f.semantic)
                .map_err(|e| Error::InvalidInput(format!("frame {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}
