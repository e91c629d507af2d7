//! Least-squares alignment of relative monocular depth to sparse metric
//! landmarks, and the per-video correlation gate.

use std::path::Path;

use nalgebra::Point2;

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Raster};

/// Correlation below which a video is excluded.
pub const DEFAULT_GATE_THRESHOLD: f64 = 0.7;

/// One landmark observation: metric depth from the sparse map paired with
/// the relative monocular value at the same pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkSample {
    pub frame: usize,
    pub pixel: Point2<f64>,
    pub slam_depth: f64,
    pub mono_value: f64,
}

impl LandmarkSample {
    pub fn new(frame: usize, pixel: Point2<f64>, slam_depth: f64, mono_value: f64) -> Result<Self> {
        if !(slam_depth.is_finite() && slam_depth > 0.0) {
            return Err(Error::InvalidInput(format!("slam_depth must be positive, got {slam_depth}")));
        }
        if !mono_value.is_finite() {
            return Err(Error::InvalidInput(format!("mono_value must be finite, got {mono_value}")));
        }
        Ok(Self {
            frame,
            pixel,
            slam_depth,
            mono_value,
        })
    }
}

/// Space in which the monocular values are linear in metric depth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DepthDomain {
    Depth,
    #[default]
    InverseDepth,
}

impl DepthDomain {
    /// Maps metric depth into the fitting domain.
    pub fn forward(self, depth: f64) -> f64 {
        match self {
            DepthDomain::Depth => depth,
            DepthDomain::InverseDepth => 1.0 / depth,
        }
    }

    /// Maps a fitted value back to metric depth.
    pub fn inverse(self, value: f64) -> f64 {
        match self {
            DepthDomain::Depth => value,
            DepthDomain::InverseDepth => 1.0 / value,
        }
    }
}

impl std::str::FromStr for DepthDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "depth" => Ok(DepthDomain::Depth),
            "inverse-depth" | "inverse" => Ok(DepthDomain::InverseDepth),
            other => Err(Error::InvalidInput(format!("unknown depth domain {other:?}"))),
        }
    }
}

/// Whether the affine offset is estimated or pinned to zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShiftMode {
    #[default]
    Free,
    Zero,
}

/// `g(slam_depth) ≈ scale · mono_value + shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentFit {
    pub scale: f64,
    pub shift: f64,
    pub pearson_r: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateDecision {
    Accept,
    Reject,
}

impl GateDecision {
    pub fn is_accepted(self) -> bool {
        self == GateDecision::Accept
    }
}

/// Ordinary least squares of `g(slam_depth)` on `mono_value` with a free shift.
pub fn fit_alignment(samples: &[LandmarkSample], domain: DepthDomain) -> Result<AlignmentFit> {
    fit_alignment_with(samples, domain, ShiftMode::Free)
}

pub fn fit_alignment_with(samples: &[LandmarkSample], domain: DepthDomain, shift_mode: ShiftMode) -> Result<AlignmentFit> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 samples, got {n}")));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.mono_value).collect();
    let ys: Vec<f64> = samples.iter().map(|s| domain.forward(s.slam_depth)).collect();

    // Two-pass centered sums keep cancellation small for large offsets.
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx.is_nan() || sxx <= 0.0 {
        return Err(Error::DegenerateFit("mono_value has zero variance".into()));
    }

    let (scale, shift) = match shift_mode {
        ShiftMode::Free => {
            let scale = sxy / sxx;
            (scale, my - scale * mx)
        }
        ShiftMode::Zero => {
            let xx: f64 = xs.iter().map(|x| x * x).sum();
            let xy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
            (xy / xx, 0.0)
        }
    };
    let pearson_r = if syy > 0.0 {
        (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(AlignmentFit {
        scale,
        shift,
        pearson_r,
        n,
    })
}

/// Accepts the video iff `pearson_r >= threshold`.
pub fn gate_video(fit: &AlignmentFit, threshold: f64) -> GateDecision {
    if fit.pearson_r >= threshold {
        GateDecision::Accept
    } else {
        GateDecision::Reject
    }
}

/// Converts a relative monocular map to metric depth. Pixels that map to a
/// non-positive or non-finite depth become invalid.
pub fn apply_alignment(mono: &DepthMap, fit: &AlignmentFit, domain: DepthDomain) -> DepthMap {
    let (w, h) = mono.size();
    let values = Raster::from_fn(w, h, |u, v| match mono.get(u, v) {
        Some(m) => domain.inverse(fit.scale * m + fit.shift),
        None => f64::NAN,
    });
    DepthMap::from_values(values)
}

/// Residual sum of squares of a candidate `(scale, shift)` in the fitting domain.
pub fn residual_sum(samples: &[LandmarkSample], domain: DepthDomain, scale: f64, shift: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let r = domain.forward(s.slam_depth) - (scale * s.mono_value + shift);
            r * r
        })
        .sum()
}

/// Parses `frame u v slam_depth mono_value` records. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_landmarks(text: &str, path: &Path) -> Result<Vec<LandmarkSample>> {
    let malformed = |line: usize, reason: String| Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(malformed(line_no, format!("expected 5 fields, found {}", fields.len())));
        }
        let frame = fields[0]
            .parse::<usize>()
            .map_err(|e| malformed(line_no, format!("frame {:?}: {e}", fields[0])))?;
        let mut nums = [0.0; 4];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field
                .parse::<f64>()
                .map_err(|e| malformed(line_no, format!("{field:?}: {e}")))?;
        }
        let sample = LandmarkSample::new(frame, Point2::new(nums[0], nums[1]), nums[2], nums[3]).map_err(|e| {
            Error::InvariantViolation {
                path: path.to_path_buf(),
                line: Some(line_no),
                reason: e.to_string(),
            }
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn load_landmarks(path: &Path) -> Result<Vec<LandmarkSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text, path)
}
