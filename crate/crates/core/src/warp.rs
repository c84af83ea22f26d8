use crate::error::Result;
use crate::homography::Homography;
use crate::image::{Image, Mask};

/// Output raster size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extent {
    pub width: usize,
    pub height: usize,
}

impl Extent {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn of(img: &Image) -> Self {
        Self::new(img.width(), img.height())
    }
}

/// Resamples `src` into the frame where `h` maps source coordinates to
/// output coordinates. Pixels whose preimage falls outside `src` take `fill`
/// and are flagged invalid in the returned mask.
pub fn warp(src: &Image, h: &Homography, extent: Extent, fill: f64) -> Result<(Image, Mask)> {
    warp_masked(src, None, h, extent, fill)
}

/// Like [`warp`], additionally honouring a validity mask on the source.
pub fn warp_masked(
    src: &Image,
    src_mask: Option<&Mask>,
    h: &Homography,
    extent: Extent,
    fill: f64,
) -> Result<(Image, Mask)> {
    let inv = h.invert()?;
    let fill = fill.clamp(0.0, 1.0);
    let mut data = vec![fill; extent.width * extent.height];
    let mut valid = vec![false; extent.width * extent.height];
    for y in 0..extent.height {
        for x in 0..extent.width {
            let (sx, sy, w) = inv.apply_raw(x as f64, y as f64);
            if w <= 0.0 {
                continue;
            }
            if let Some(m) = src_mask {
                if !m.valid_at(sx, sy) {
                    continue;
                }
            }
            if let Some(v) = src.sample(sx, sy) {
                let i = y * extent.width + x;
                data[i] = v;
                valid[i] = true;
            }
        }
    }
    Ok((
        Image::from_clamped(extent.width, extent.height, data)?,
        Mask::new(extent.width, extent.height, valid)?,
    ))
}
