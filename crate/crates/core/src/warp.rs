//! Backward warping of the source along a flow field.

use rayon::prelude::*;

use crate::densify::FlowField;
use crate::error::Result;
use crate::image::{check_same_dims, Image};

/// Warped image plus a 1-channel mask: 1 where the sample came from inside
/// the source, 0 where it had to be clamped to the border.
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub image: Image,
    pub valid: Image,
}

/// `warped(p) = src(p + F(p))` with bilinear interpolation.
pub fn warp(src: &Image, flow: &FlowField) -> Result<Warped> {
    let (w, h, ch) = (src.width(), src.height(), src.channels());
    check_same_dims(w, h, flow.width(), flow.height())?;
    let mut data = vec![0.0f32; w * h * ch];
    let mut mask = vec![0.0f32; w * h];
    let s = src.data();
    let (xmax, ymax) = ((w.max(1) - 1) as f32, (h.max(1) - 1) as f32);
    data.par_chunks_mut((w * ch).max(1))
        .zip(mask.par_chunks_mut(w.max(1)))
        .enumerate()
        .for_each(|(y, (row, mrow))| {
            for x in 0..w {
                let (u, v) = flow.get(x, y);
                let sx = x as f32 + u;
                let sy = y as f32 + v;
                let inside = (0.0..=xmax).contains(&sx) && (0.0..=ymax).contains(&sy);
                mrow[x] = if inside { 1.0 } else { 0.0 };
                let sx = if sx.is_finite() { sx.clamp(0.0, xmax) } else { 0.0 };
                let sy = if sy.is_finite() { sy.clamp(0.0, ymax) } else { 0.0 };
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
                let x1 = (x0 + 1).min(w - 1);
                let y1 = (y0 + 1).min(h - 1);
                for c in 0..ch {
                    let at = |xx: usize, yy: usize| s[(yy * w + xx) * ch + c];
                    let top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
                    let bot = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
                    row[x * ch + c] = (top + fy * (bot - top)).clamp(0.0, 1.0);
                }
            }
        });
    Ok(Warped {
        image: Image::new(w, h, ch, data)?,
        valid: Image::new(w, h, 1, mask)?,
    })
}
