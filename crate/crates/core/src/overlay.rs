//! Blind-spot visualization over a camera image.

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

const TINT: [u8; 3] = [255, 0, 0];
/// Spacing in pixels of the diagonal hatch over invisible pixels.
const HATCH_PERIOD: usize = 8;

/// Tints ω red at 50% opacity, then darkens pixels outside V to half
/// brightness and draws a diagonal hatch over them.
pub fn render_overlay(base: &RgbImage, omega: &BinaryMask, visibility: &BinaryMask) -> Result<RgbImage> {
    let size = (base.width() as usize, base.height() as usize);
    if omega.size() != size {
        return Err(Error::SizeMismatch {
            expected: size,
            found: omega.size(),
        });
    }
    omega.ensure_same_size(visibility)?;
    let mut out = base.clone();
    for (u, v, px) in out.enumerate_pixels_mut() {
        let (u, v) = (u as usize, v as usize);
        let mut c = px.0;
        if *omega.get(u, v) {
            for (ch, t) in c.iter_mut().zip(TINT) {
                *ch = (*ch as u16 + t as u16).div_ceil(2) as u8;
            }
        }
        if !*visibility.get(u, v) {
            if (u + v) % HATCH_PERIOD == 0 {
                c = [0, 0, 0];
            } else {
                c = c.map(|ch| ch / 2);
            }
        }
        *px = Rgb(c);
    }
    Ok(out)
}
