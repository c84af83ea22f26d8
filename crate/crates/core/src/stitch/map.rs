//! Growing panoramic canvas in a global frame anchored at the first frame.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homography::{Homography, Point2};
use crate::image::{Image, Mask};

use super::seam::{blend, seam_diffs, seam_points, BlendReport, Layer, LayerRef, MaskView, Seam};

/// Canvas growth happens in multiples of this many pixels.
pub const GROWTH_STEP: usize = 256;
pub const DEFAULT_MAX_DIM: usize = 16384;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacedFrame {
    pub frame_id: String,
    /// Maps frame pixels to global coordinates.
    pub global: Homography,
}

/// Canvas pixel `(i, j)` sits at global coordinates `(i + origin.0, j + origin.1)`.
#[derive(Debug, Clone)]
pub struct StitchMap {
    width: usize,
    height: usize,
    origin: (i64, i64),
    values: Vec<f64>,
    valid: Vec<bool>,
    max_dim: usize,
    pub frames: Vec<PlacedFrame>,
}

impl StitchMap {
    /// Starts a map with `frame` at the identity.
    pub fn new(frame_id: impl Into<String>, frame: &Image, mask: Option<&Mask>, max_dim: usize) -> Result<Self> {
        let mut map = StitchMap {
            width: 0,
            height: 0,
            origin: (0, 0),
            values: Vec::new(),
            valid: Vec::new(),
            max_dim,
            frames: Vec::new(),
        };
        map.accumulate(frame_id, frame, mask, &Homography::identity())?;
        Ok(map)
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    pub fn allocated_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn last_global(&self) -> Option<&Homography> {
        self.frames.last().map(|f| &f.global)
    }

    /// Tight bounding box of the covered pixels: `(x0, y0, width, height)`
    /// in canvas pixels.
    pub fn covered_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.valid[y * self.width + x] {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Covered region as an image (uncovered pixels black) and its mask.
    pub fn render(&self) -> Result<(Image, Mask)> {
        let (x0, y0, w, h) = self.covered_bounds().ok_or_else(|| Error::InvalidArgument("empty map".into()))?;
        let img = Image::from_fn(w, h, |x, y| {
            let i = (y + y0) * self.width + x + x0;
            if self.valid[i] {
                self.values[i]
            } else {
                0.0
            }
        })?;
        let mask = Mask::from_fn(w, h, |x, y| self.valid[(y + y0) * self.width + x + x0]);
        Ok((img, mask))
    }

    /// Global coordinates of the rendered image's top-left pixel.
    pub fn render_origin(&self) -> Option<(i64, i64)> {
        self.covered_bounds()
            .map(|(x0, y0, _, _)| (self.origin.0 + x0 as i64, self.origin.1 + y0 as i64))
    }

    /// Grows the canvas so it covers the global box `[gx0, gx1) x [gy0, gy1)`.
    fn ensure(&mut self, gx0: i64, gy0: i64, gx1: i64, gy1: i64) -> Result<()> {
        let (cx0, cy0) = self.origin;
        let (cx1, cy1) = (cx0 + self.width as i64, cy0 + self.height as i64);
        if self.width > 0 && gx0 >= cx0 && gy0 >= cy0 && gx1 <= cx1 && gy1 <= cy1 {
            return Ok(());
        }
        let step = GROWTH_STEP as i64;
        let grow = |need: i64| if need > 0 { (need + step - 1) / step * step } else { 0 };
        let (nx0, ny0, nx1, ny1) = if self.width == 0 {
            (gx0, gy0, gx1, gy1)
        } else {
            (
                cx0 - grow(cx0 - gx0),
                cy0 - grow(cy0 - gy0),
                cx1 + grow(gx1 - cx1),
                cy1 + grow(gy1 - cy1),
            )
        };
        let (nw, nh) = ((nx1 - nx0) as usize, (ny1 - ny0) as usize);
        if nw > self.max_dim || nh > self.max_dim {
            return Err(Error::MapTooLarge(nw, nh));
        }
        let mut values = vec![0.0; nw * nh];
        let mut valid = vec![false; nw * nh];
        let (dx, dy) = ((cx0 - nx0) as usize, (cy0 - ny0) as usize);
        for y in 0..self.height {
            let src = y * self.width;
            let dst = (y + dy) * nw + dx;
            values[dst..dst + self.width].copy_from_slice(&self.values[src..src + self.width]);
            valid[dst..dst + self.width].copy_from_slice(&self.valid[src..src + self.width]);
        }
        self.values = values;
        self.valid = valid;
        self.width = nw;
        self.height = nh;
        self.origin = (nx0, ny0);
        Ok(())
    }

    /// Warps `frame` into the map with `global` (frame pixels to global
    /// coordinates) and blends it in. Returns `None` for the blend report
    /// when the frame lands on an empty canvas.
    pub fn accumulate(
        &mut self,
        frame_id: impl Into<String>,
        frame: &Image,
        mask: Option<&Mask>,
        global: &Homography,
    ) -> Result<Option<BlendReport>> {
        let inv = global.invert()?;
        let (fw, fh) = frame.dims();
        let corners = [(0.0, 0.0), ((fw - 1) as f64, 0.0), (0.0, (fh - 1) as f64), ((fw - 1) as f64, (fh - 1) as f64)];
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (x, y) in corners {
            let p = global.apply_point(Point2::new(x, y))?;
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let (gx0, gy0) = (x0.floor() as i64, y0.floor() as i64);
        let (gx1, gy1) = (x1.ceil() as i64 + 1, y1.ceil() as i64 + 1);
        let span_w = (gx1 - gx0) as usize;
        let span_h = (gy1 - gy0) as usize;
        if span_w > self.max_dim || span_h > self.max_dim {
            return Err(Error::MapTooLarge(span_w, span_h));
        }
        self.ensure(gx0, gy0, gx1, gy1)?;

        // Source and canvas patches over the footprint box.
        let n = span_w * span_h;
        let mut src_v = vec![0.0; n];
        let mut src_m = vec![false; n];
        for j in 0..span_h {
            for i in 0..span_w {
                let (gx, gy) = ((gx0 + i as i64) as f64, (gy0 + j as i64) as f64);
                let (sx, sy, w) = inv.apply_raw(gx, gy);
                if w <= 0.0 {
                    continue;
                }
                if let Some(m) = mask {
                    if !m.valid_at(sx, sy) {
                        continue;
                    }
                }
                if let Some(v) = frame.sample(sx, sy) {
                    src_v[j * span_w + i] = v;
                    src_m[j * span_w + i] = true;
                }
            }
        }
        let (ox, oy) = ((gx0 - self.origin.0) as usize, (gy0 - self.origin.1) as usize);
        let mut can_v = vec![0.0; n];
        let mut can_m = vec![false; n];
        for j in 0..span_h {
            let row = (j + oy) * self.width + ox;
            can_v[j * span_w..(j + 1) * span_w].copy_from_slice(&self.values[row..row + span_w]);
            can_m[j * span_w..(j + 1) * span_w].copy_from_slice(&self.valid[row..row + span_w]);
        }

        let report = if can_m.iter().zip(&src_m).any(|(&c, &s)| c && s) {
            let pts = seam_points(
                MaskView { width: span_w, height: span_h, data: &can_m },
                MaskView { width: span_w, height: span_h, data: &src_m },
            )?;
            let src = LayerRef { width: span_w, height: span_h, values: &src_v, valid: &src_m };
            let old = LayerRef { width: span_w, height: span_h, values: &can_v, valid: &can_m };
            let seam = Seam { diffs: seam_diffs(old, src, &pts), points: pts };
            let mut canvas = Layer { width: span_w, height: span_h, values: &mut can_v, valid: &mut can_m };
            Some(blend(src, &mut canvas, &seam)?)
        } else {
            for i in 0..n {
                if src_m[i] && !can_m[i] {
                    can_v[i] = src_v[i].clamp(0.0, 1.0);
                    can_m[i] = true;
                }
            }
            None
        };
        for j in 0..span_h {
            let row = (j + oy) * self.width + ox;
            self.values[row..row + span_w].copy_from_slice(&can_v[j * span_w..(j + 1) * span_w]);
            self.valid[row..row + span_w].copy_from_slice(&can_m[j * span_w..(j + 1) * span_w]);
        }
        self.frames.push(PlacedFrame {
            frame_id: frame_id.into(),
            global: *global,
        });
        Ok(report)
    }
}
