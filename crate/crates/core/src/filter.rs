//! Separable Gaussian filtering with replicated borders.

use rayon::prelude::*;

use crate::image::{FloatMap, Image};

/// Normalized 1D Gaussian of the given radius.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f32> {
    let k: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| (v / s) as f32).collect()
}

/// Separable convolution with an odd-length kernel, replicating the border.
pub fn convolve_separable(src: &FloatMap, kernel: &[f32]) -> FloatMap {
    let (w, h) = (src.width(), src.height());
    if w == 0 || h == 0 {
        return src.clone();
    }
    let r = (kernel.len() / 2) as i64;
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0f32; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let s = &src.data()[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * s[clamp(x as i64 + k as i64 - r, w)];
            }
            *out = acc;
        }
    });
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (k, &kv) in kernel.iter().enumerate() {
            let yy = clamp(y as i64 + k as i64 - r, h);
            let t = &tmp[yy * w..(yy + 1) * w];
            for (o, &v) in row.iter_mut().zip(t) {
                *o += kv * v;
            }
        }
    });
    FloatMap::from_vec(w, h, out).expect("dimensions preserved")
}

/// Gaussian blur of every channel; the kernel is truncated at `3 * sigma`.
/// `sigma <= 0` returns a copy.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let k = gaussian_kernel(sigma, (3.0 * sigma).ceil() as usize);
    let ch = img.channels();
    let planes: Vec<FloatMap> = (0..ch)
        .map(|c| {
            let p = FloatMap::from_vec(
                img.width(),
                img.height(),
                img.data().iter().skip(c).step_by(ch).copied().collect(),
            )
            .expect("sized");
            convolve_separable(&p, &k)
        })
        .collect();
    Image::from_fn(img.width(), img.height(), ch, |x, y, c| planes[c].get(x, y))
}
