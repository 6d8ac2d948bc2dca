//! Exposure fusion with a registration-quality weight.
//!
//! Each input gets the usual contrast × saturation × well-exposedness weight.
//! The warped source is further multiplied by its clamped SSIM against the
//! reference and by the warp validity mask, so badly registered pixels fall
//! back to the reference. Blending runs per channel on Laplacian pyramids.

pub mod laplacian;
pub mod ssim;

use rayon::prelude::*;

pub use laplacian::pyramid_depth;
pub use ssim::{ssim_map, ssim_map_with, SsimWindow};

use crate::error::{Error, Result};
use crate::image::{check_same_dims, check_single, luminance_or_copy, FloatMap, Image};
use laplacian::{collapse, gaussian_pyramid, laplacian_pyramid};

pub const WEIGHT_FLOOR: f32 = 1e-12;
pub const EXPOSEDNESS_SIGMA: f32 = 0.2;

/// Per-pixel well-exposedness `prod_c exp(-(c - 0.5)^2 / (2 * 0.2^2))`.
pub fn well_exposedness(px: &[f32]) -> f32 {
    let k = 2.0 * EXPOSEDNESS_SIGMA * EXPOSEDNESS_SIGMA;
    px.iter().map(|&c| (-(c - 0.5) * (c - 0.5) / k).exp()).product()
}

/// Population standard deviation across channels (0 for a single channel).
pub fn saturation(px: &[f32]) -> f32 {
    let n = px.len() as f32;
    let mean = px.iter().sum::<f32>() / n;
    (px.iter().map(|&c| (c - mean) * (c - mean)).sum::<f32>() / n).sqrt()
}

/// Contrast, saturation and well-exposedness multiplied, plus a tiny floor.
/// Single-channel input skips the saturation factor.
pub fn quality_weights(img: &Image) -> FloatMap {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let lum = luminance_or_copy(img);
    let l = lum.data();
    let at = |x: i64, y: i64| l[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize];
    FloatMap::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as i64, y as i64);
        let lap = at(xi - 1, yi) + at(xi + 1, yi) + at(xi, yi - 1) + at(xi, yi + 1) - 4.0 * at(xi, yi);
        let px = &img.data()[(y * w + x) * ch..(y * w + x + 1) * ch];
        let sat = if ch == 1 { 1.0 } else { saturation(px) };
        lap.abs() * sat * well_exposedness(px) + WEIGHT_FLOOR
    })
}

/// Per-pixel normalization so the weights sum to one.
pub fn normalize_weights(weights: &mut [FloatMap]) {
    let Some(first) = weights.first() else {
        return;
    };
    let n = first.data().len();
    let totals: Vec<f32> = (0..n)
        .into_par_iter()
        .map(|i| weights.iter().map(|m| m.data()[i]).sum())
        .collect();
    for m in weights.iter_mut() {
        m.data_mut()
            .par_iter_mut()
            .zip(&totals)
            .for_each(|(v, &t)| *v = if t > 0.0 { *v / t } else { 0.0 });
    }
}

/// Laplacian-pyramid blend of `images` under `weights` (normalized here).
pub fn blend(images: &[&Image], weights: &[FloatMap]) -> Result<Image> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("nothing to blend".into()))?;
    if images.len() != weights.len() {
        return Err(Error::InvalidParameter(
            "one weight map per image required".into(),
        ));
    }
    let (w, h, ch) = (first.width(), first.height(), first.channels());
    for img in images {
        check_same_dims(w, h, img.width(), img.height())?;
        if img.channels() != ch {
            return Err(Error::ChannelCount {
                expected: ch,
                got: img.channels(),
            });
        }
    }
    for m in weights {
        check_same_dims(w, h, m.width(), m.height())?;
    }
    let mut weights = weights.to_vec();
    normalize_weights(&mut weights);
    let depth = pyramid_depth(w, h);
    let wpyr: Vec<Vec<FloatMap>> = weights.iter().map(|m| gaussian_pyramid(m, depth)).collect();
    let mut planes = Vec::with_capacity(ch);
    for c in 0..ch {
        let mut acc: Option<Vec<FloatMap>> = None;
        for (img, wp) in images.iter().zip(&wpyr) {
            let plane = FloatMap::from_vec(w, h, img.data().iter().skip(c).step_by(ch).copied().collect())?;
            let mut lp = laplacian_pyramid(&plane, depth);
            match acc.as_mut() {
                None => {
                    for (band, wl) in lp.iter_mut().zip(wp) {
                        band.data_mut()
                            .iter_mut()
                            .zip(wl.data())
                            .for_each(|(b, g)| *b *= g);
                    }
                    acc = Some(lp);
                }
                Some(a) => {
                    for ((al, band), wl) in a.iter_mut().zip(&lp).zip(wp) {
                        al.data_mut()
                            .iter_mut()
                            .zip(band.data().iter().zip(wl.data()))
                            .for_each(|(x, (b, g))| *x += b * g);
                    }
                }
            }
        }
        planes.push(collapse(&acc.expect("at least one image")));
    }
    let mut data = vec![0.0f32; w * h * ch];
    for (c, p) in planes.iter().enumerate() {
        for (i, &v) in p.data().iter().enumerate() {
            data[i * ch + c] = v;
        }
    }
    Image::from_vec_clamped(w, h, ch, data)
}

/// Source weight after the SSIM trust and validity factors.
pub fn source_weights(warped: &Image, ssim: &FloatMap, valid: &Image) -> Result<FloatMap> {
    check_same_dims(warped.width(), warped.height(), ssim.width(), ssim.height())?;
    check_same_dims(warped.width(), warped.height(), valid.width(), valid.height())?;
    check_single(valid)?;
    let mut wsrc = quality_weights(warped);
    wsrc.data_mut()
        .par_iter_mut()
        .zip(ssim.data().par_iter().zip(valid.data()))
        .for_each(|(v, (&s, &m))| *v *= s.clamp(0.0, 1.0) * m);
    Ok(wsrc)
}

/// Fuses the reference with the warped source.
pub fn fuse(reference: &Image, warped: &Image, ssim: &FloatMap, valid: &Image) -> Result<Image> {
    check_same_dims(
        reference.width(),
        reference.height(),
        warped.width(),
        warped.height(),
    )?;
    let wref = quality_weights(reference);
    let wsrc = source_weights(warped, ssim, valid)?;
    blend(&[reference, warped], &[wref, wsrc])
}
