//! On-disk sequence format and per-frame outputs.
//!
//! A sequence directory holds:
//!
//! ```text
//! intrinsics.txt     fx fy cx cy width height
//! poses.txt          one line per frame: 12 numbers, row-major 3x4 camera-to-world
//! labels.cfg         traversable_ids=1,2 / sky_ids=0 / obstacle_ids=4,5,6 / other_ids=3,7
//! sequence.cfg       optional, fps=5
//! depth/%06d.png     16-bit grayscale, meters = raw / 256, 0 = invalid
//! semantic/%06d.png  8-bit grayscale class IDs
//! rgb/%06d.png       optional 8-bit RGB
//! ```
//!
//! `#` starts a comment in the text files. Depths are rounded to the nearest
//! 1/256 m and saturate at 65535/256 m.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, PoseSE3};
use crate::pipeline::BlindSpotResult;
use crate::raster::{BinaryMask, DepthMap, Raster, SemanticMap};
use crate::sequence::{FrameBundle, LabelConfig, Sequence};

pub const DEPTH_SCALE: f64 = 256.0;
pub const DEFAULT_FPS: f64 = 5.0;

type Gray16 = ImageBuffer<Luma<u16>, Vec<u16>>;

pub fn frame_file(index: usize) -> String {
    format!("{index:06}.png")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn malformed(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLine {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn violation(path: &Path, line: Option<usize>, reason: impl ToString) -> Error {
    Error::InvariantViolation {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    }
}

fn parse_numbers(path: &Path, line: usize, text: &str, expected: usize) -> Result<Vec<f64>> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != expected {
        return Err(malformed(path, line, format!("expected {expected} numbers, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|e| malformed(path, line, format!("{f:?}: {e}"))))
        .collect()
}

pub fn parse_intrinsics(text: &str, path: &Path) -> Result<CameraIntrinsics> {
    let mut lines = content_lines(text);
    let Some((line, content)) = lines.next() else {
        return Err(malformed(path, 1, "file is empty"));
    };
    let n = parse_numbers(path, line, content, 6)?;
    let dim = |x: f64| -> Result<usize> {
        if x.fract() == 0.0 && x >= 1.0 && x <= u32::MAX as f64 {
            Ok(x as usize)
        } else {
            Err(malformed(path, line, format!("raster dimension {x} is not a positive integer")))
        }
    };
    let k = CameraIntrinsics::new(n[0], n[1], n[2], n[3], dim(n[4])?, dim(n[5])?).map_err(|e| violation(path, Some(line), e))?;
    if let Some((extra, _)) = lines.next() {
        return Err(malformed(path, extra, "unexpected extra line"));
    }
    Ok(k)
}

pub fn format_intrinsics(k: &CameraIntrinsics) -> String {
    format!("{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height)
}

pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<PoseSE3>> {
    content_lines(text)
        .map(|(line, content)| {
            let n = parse_numbers(path, line, content, 12)?;
            let m: [f64; 12] = n.try_into().expect("12 numbers");
            PoseSE3::from_row_major_3x4(&m).map_err(|e| violation(path, Some(line), e))
        })
        .collect()
}

/// Shortest round-trip decimal form, so a re-read pose is bit-identical.
pub fn format_poses(poses: &[PoseSE3]) -> String {
    let mut s = String::new();
    for p in poses {
        let row: Vec<String> = p.to_row_major_3x4().iter().map(|x| format!("{x:?}")).collect();
        s += &row.join(" ");
        s.push('\n');
    }
    s
}

fn parse_id_list(path: &Path, line: usize, value: &str) -> Result<BTreeSet<u8>> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u8>().map_err(|e| malformed(path, line, format!("class id {s:?}: {e}"))))
        .collect()
}

/// `key=value` lines. `traversable_ids`, `sky_ids` and `obstacle_ids` are
/// required; `other_ids` lists the remaining known classes.
pub fn parse_labels(text: &str, path: &Path) -> Result<LabelConfig> {
    let mut sets: [Option<BTreeSet<u8>>; 4] = Default::default();
    const KEYS: [&str; 4] = ["traversable_ids", "sky_ids", "obstacle_ids", "other_ids"];
    for (line, content) in content_lines(text) {
        let Some((key, value)) = content.split_once('=') else {
            return Err(malformed(path, line, "expected key=value"));
        };
        let key = key.trim();
        let Some(slot) = KEYS.iter().position(|k| *k == key) else {
            return Err(malformed(path, line, format!("unknown key {key:?}")));
        };
        if sets[slot].is_some() {
            return Err(malformed(path, line, format!("duplicate key {key:?}")));
        }
        sets[slot] = Some(parse_id_list(path, line, value)?);
    }
    let [trav, sky, obst, other] = sets;
    let required = |s: Option<BTreeSet<u8>>, key: &str| s.ok_or_else(|| violation(path, None, format!("missing key {key}")));
    let cfg = LabelConfig {
        traversable_ids: required(trav, KEYS[0])?,
        sky_ids: required(sky, KEYS[1])?,
        obstacle_ids: required(obst, KEYS[2])?,
        other_ids: other.unwrap_or_default(),
    };
    cfg.validate().map_err(|e| violation(path, None, e))?;
    Ok(cfg)
}

pub fn format_labels(cfg: &LabelConfig) -> String {
    let list = |s: &BTreeSet<u8>| s.iter().map(u8::to_string).collect::<Vec<_>>().join(",");
    format!(
        "traversable_ids={}\nsky_ids={}\nobstacle_ids={}\nother_ids={}\n",
        list(&cfg.traversable_ids),
        list(&cfg.sky_ids),
        list(&cfg.obstacle_ids),
        list(&cfg.other_ids)
    )
}

pub fn parse_sequence_cfg(text: &str, path: &Path) -> Result<f64> {
    let mut fps = None;
    for (line, content) in content_lines(text) {
        match content.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("fps", v)) => {
                let f: f64 = v.parse().map_err(|e| malformed(path, line, format!("fps {v:?}: {e}")))?;
                if !(f.is_finite() && f > 0.0) {
                    return Err(violation(path, Some(line), format!("fps must be positive, got {f}")));
                }
                fps = Some(f);
            }
            Some((k, _)) => return Err(malformed(path, line, format!("unknown key {k:?}"))),
            None => return Err(malformed(path, line, "expected key=value")),
        }
    }
    Ok(fps.unwrap_or(DEFAULT_FPS))
}

pub fn encode_depth(depth: &DepthMap) -> Gray16 {
    let (w, h) = depth.size();
    ImageBuffer::from_fn(w as u32, h as u32, |u, v| {
        Luma([match depth.get(u as usize, v as usize) {
            Some(d) => (d * DEPTH_SCALE).round().clamp(1.0, 65535.0) as u16,
            None => 0,
        }])
    })
}

pub fn decode_depth(img: &Gray16) -> DepthMap {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = Raster::from_fn(w, h, |u, v| img.get_pixel(u as u32, v as u32).0[0] as f64 / DEPTH_SCALE);
    DepthMap::from_values(values)
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    image::open(path).map_err(|e| Error::image(path, e))
}

fn save_image<P>(img: &ImageBuffer<P, Vec<P::Subpixel>>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
{
    img.save(path).map_err(|e| Error::image(path, e))
}

fn check_raster(path: &Path, frame: usize, expected: (usize, usize), found: (u32, u32)) -> Result<()> {
    let found = (found.0 as usize, found.1 as usize);
    if found != expected {
        return Err(Error::RasterMismatch {
            path: path.to_path_buf(),
            frame,
            expected,
            found,
        });
    }
    Ok(())
}

pub fn load_depth(path: &Path, frame: usize, size: (usize, usize)) -> Result<DepthMap> {
    let img = match open_image(path)? {
        image::DynamicImage::ImageLuma16(img) => img,
        other => return Err(violation(path, None, format!("depth must be 16-bit grayscale, found {:?}", other.color()))),
    };
    check_raster(path, frame, size, img.dimensions())?;
    Ok(decode_depth(&img))
}

pub fn load_semantic(path: &Path, frame: usize, size: (usize, usize)) -> Result<SemanticMap> {
    let img = match open_image(path)? {
        image::DynamicImage::ImageLuma8(img) => img,
        other => return Err(violation(path, None, format!("semantic map must be 8-bit grayscale, found {:?}", other.color()))),
    };
    check_raster(path, frame, size, img.dimensions())?;
    Raster::from_vec(size.0, size.1, img.into_raw())
}

/// Sorted `NNNNNN.png` file names in `dir`.
pub fn list_frames(dir: &Path) -> Result<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let name = entry.map_err(|e| Error::io(dir, e))?.file_name().to_string_lossy().into_owned();
        if name.len() == 10 && name.ends_with(".png") && name[..6].bytes().all(|b| b.is_ascii_digit()) {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

/// Loads and validates a sequence directory, reporting the first problem.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let intrinsics_path = dir.join("intrinsics.txt");
    let poses_path = dir.join("poses.txt");
    let labels_path = dir.join("labels.cfg");
    let k = parse_intrinsics(&read_text(&intrinsics_path)?, &intrinsics_path)?;
    let poses = parse_poses(&read_text(&poses_path)?, &poses_path)?;
    let labels = parse_labels(&read_text(&labels_path)?, &labels_path)?;
    let cfg_path = dir.join("sequence.cfg");
    let fps = if cfg_path.exists() {
        parse_sequence_cfg(&read_text(&cfg_path)?, &cfg_path)?
    } else {
        DEFAULT_FPS
    };

    let n = poses.len();
    for sub in ["depth", "semantic"] {
        let found = list_frames(&dir.join(sub))?.len();
        if found != n {
            return Err(Error::CountMismatch {
                what: format!("{sub} frames (poses.txt has {n})"),
                expected: n,
                found,
            });
        }
    }
    let rgb_dir = dir.join("rgb");
    let has_rgb = rgb_dir.is_dir();
    if has_rgb {
        let found = list_frames(&rgb_dir)?.len();
        if found != n {
            return Err(Error::CountMismatch {
                what: format!("rgb frames (poses.txt has {n})"),
                expected: n,
                found,
            });
        }
    }

    let size = k.size();
    let mut frames = Vec::with_capacity(n);
    for (i, pose) in poses.into_iter().enumerate() {
        let depth = load_depth(&dir.join("depth").join(frame_file(i)), i, size)?;
        let sem_path = dir.join("semantic").join(frame_file(i));
        let semantic = load_semantic(&sem_path, i, size)?;
        labels.check_known(&semantic).map_err(|e| violation(&sem_path, None, e))?;
        let rgb = if has_rgb {
            let path = rgb_dir.join(frame_file(i));
            let img = open_image(&path)?.to_rgb8();
            check_raster(&path, i, size, img.dimensions())?;
            Some(img)
        } else {
            None
        };
        frames.push(FrameBundle {
            depth,
            semantic,
            pose,
            rgb,
        });
    }
    Sequence::new(k, fps, labels, frames).map_err(|e| violation(dir, None, e))
}

/// Writes `seq` in the directory format; depth is quantized to 1/256 m.
pub fn save_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    seq.validate()?;
    for sub in ["depth", "semantic"] {
        create_dir(&dir.join(sub))?;
    }
    write_text(&dir.join("intrinsics.txt"), &format_intrinsics(&seq.intrinsics))?;
    let poses: Vec<PoseSE3> = seq.frames.iter().map(|f| f.pose).collect();
    write_text(&dir.join("poses.txt"), &format_poses(&poses))?;
    write_text(&dir.join("labels.cfg"), &format_labels(&seq.labels))?;
    write_text(&dir.join("sequence.cfg"), &format!("fps={}\n", seq.fps))?;
    let with_rgb = seq.frames.iter().all(|f| f.rgb.is_some()) && !seq.is_empty();
    if with_rgb {
        create_dir(&dir.join("rgb"))?;
    }
    for (i, f) in seq.frames.iter().enumerate() {
        save_image(&encode_depth(&f.depth), &dir.join("depth").join(frame_file(i)))?;
        let (w, h) = f.semantic.size();
        let sem = GrayImage::from_raw(w as u32, h as u32, f.semantic.as_slice().to_vec()).expect("size matches");
        save_image(&sem, &dir.join("semantic").join(frame_file(i)))?;
        if let (true, Some(rgb)) = (with_rgb, &f.rgb) {
            save_image(rgb, &dir.join("rgb").join(frame_file(i)))?;
        }
    }
    Ok(())
}

pub fn mask_to_image(mask: &BinaryMask) -> GrayImage {
    let (w, h) = mask.size();
    GrayImage::from_raw(w as u32, h as u32, mask.iter().map(|&b| if b { 255 } else { 0 }).collect()).expect("size matches")
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    save_image(&mask_to_image(mask), path)
}

/// Reads an 8-bit mask; any non-zero value is set.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = open_image(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Raster::from_vec(w, h, img.into_raw().into_iter().map(|x| x != 0).collect())
}

/// Reads a probability map: 8-bit values scale by 1/255, 16-bit by 1/65535.
pub fn load_probability(path: &Path) -> Result<Raster<f64>> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        image::DynamicImage::ImageLuma16(i) => i.into_raw().into_iter().map(|x| x as f64 / 65535.0).collect(),
        other => other.to_luma8().into_raw().into_iter().map(|x| x as f64 / 255.0).collect(),
    };
    Raster::from_vec(w, h, data)
}

/// Files written by [`save_outputs`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputPaths {
    pub blindspot: PathBuf,
    pub visibility: PathBuf,
    pub debug: Option<(PathBuf, PathBuf)>,
}

/// Writes `blindspot/` and `visibility/` masks for one frame, plus the
/// aggregated surface and depth under `aggregated_surface/` and
/// `aggregated_depth/` when `debug` is set.
pub fn save_outputs(result: &BlindSpotResult, dir: &Path, frame: usize, debug: bool) -> Result<OutputPaths> {
    let name = frame_file(frame);
    let sub = |s: &str| -> Result<PathBuf> {
        let d = dir.join(s);
        create_dir(&d)?;
        Ok(d.join(&name))
    };
    let blindspot = sub("blindspot")?;
    save_mask(&result.omega, &blindspot)?;
    let visibility = sub("visibility")?;
    save_mask(&result.visibility, &visibility)?;
    let debug = if debug {
        let surface = sub("aggregated_surface")?;
        save_mask(&result.aggregated_surface, &surface)?;
        let depth = sub("aggregated_depth")?;
        save_image(&encode_depth(&result.aggregated_depth), &depth)?;
        Some((surface, depth))
    } else {
        None
    };
    Ok(OutputPaths {
        blindspot,
        visibility,
        debug,
    })
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    save_image(img, path)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    Ok(open_image(path)?.to_rgb8())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intrinsics_text() {
        let p = Path::new("intrinsics.txt");
        let k = parse_intrinsics("# fx fy cx cy w h\n400 400 319.5 239.5 640 480\n", p).unwrap();
        assert_eq!(k.size(), (640, 480));
        assert_eq!(parse_intrinsics(&format_intrinsics(&k), p).unwrap(), k);
        assert!(matches!(parse_intrinsics("1 2 3\n", p), Err(Error::MalformedLine { line: 1, .. })));
        assert!(matches!(
            parse_intrinsics("400 400 700 10 640 480\n", p),
            Err(Error::InvariantViolation { line: Some(1), .. })
        ));
        assert!(matches!(parse_intrinsics("400 400 3 3 6.5 4\n", p), Err(Error::MalformedLine { .. })));
    }

    #[test]
    fn pose_lines() {
        let p = Path::new("poses.txt");
        let ok = "1 0 0 0 0 1 0 0 0 0 1 0\n";
        assert_eq!(parse_poses(ok, p).unwrap(), vec![PoseSE3::identity()]);
        let eleven = "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1 0 0 0 0 1\n";
        assert!(matches!(parse_poses(eleven, p), Err(Error::MalformedLine { line: 2, .. })));
        let skew = "1 0 0 0 0 1 0 0 0 0 2 0\n";
        assert!(matches!(parse_poses(skew, p), Err(Error::InvariantViolation { line: Some(1), .. })));
    }

    #[test]
    fn label_cfg() {
        let p = Path::new("labels.cfg");
        let cfg = parse_labels("traversable_ids=1, 2\nsky_ids=0\nobstacle_ids=4 5 6\nother_ids=3\n", p).unwrap();
        assert_eq!(cfg.traversable_ids, BTreeSet::from([1, 2]));
        assert_eq!(parse_labels(&format_labels(&cfg), p).unwrap(), cfg);
        assert!(matches!(parse_labels("sky_ids=0\nobstacle_ids=4\n", p), Err(Error::InvariantViolation { .. })));
        assert!(matches!(parse_labels("road=1\n", p), Err(Error::MalformedLine { line: 1, .. })));
        assert!(matches!(
            parse_labels("traversable_ids=1\nsky_ids=1\nobstacle_ids=4\n", p),
            Err(Error::InvariantViolation { .. })
        ));
    }

    #[test]
    fn depth_quantization() {
        let d = DepthMap::from_values(Raster::from_vec(4, 1, vec![1.0 / 3.0, 0.0, 1000.0, 0.001]).unwrap());
        let back = decode_depth(&encode_depth(&d));
        assert!((back.get(0, 0).unwrap() - 1.0 / 3.0).abs() <= 0.5 / DEPTH_SCALE);
        assert_eq!(back.get(1, 0), None);
        assert_eq!(back.get(2, 0), Some(65535.0 / DEPTH_SCALE));
        assert_eq!(back.get(3, 0), Some(1.0 / DEPTH_SCALE));
    }

    #[test]
    fn sequence_cfg_default_and_errors() {
        let p = Path::new("sequence.cfg");
        assert_eq!(parse_sequence_cfg("", p).unwrap(), DEFAULT_FPS);
        assert_eq!(parse_sequence_cfg("fps=10\n", p).unwrap(), 10.0);
        assert!(parse_sequence_cfg("fps=-1\n", p).is_err());
        assert!(parse_sequence_cfg("rate=3\n", p).is_err());
    }
}
