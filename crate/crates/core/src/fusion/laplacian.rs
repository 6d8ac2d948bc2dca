//! Gaussian and Laplacian pyramids with the 5-tap binomial kernel.

use rayon::prelude::*;

use crate::image::FloatMap;

const BINOMIAL: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// `floor(log2(min(w, h))) - 1`, at least 1.
pub fn pyramid_depth(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    ((usize::BITS - 1 - m.leading_zeros()) as usize)
        .saturating_sub(1)
        .max(1)
}

/// Blur then keep every other sample; output is `ceil(dim / 2)`.
pub fn reduce(src: &FloatMap) -> FloatMap {
    let (sw, sh) = (src.width(), src.height());
    let (w, h) = (sw.div_ceil(2), sh.div_ceil(2));
    if sw == 0 || sh == 0 {
        return src.clone();
    }
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut rows = vec![0.0f32; w * sh];
    rows.par_chunks_mut(w)
        .zip(src.data().par_chunks(sw))
        .for_each(|(o, s)| {
            for (x, out) in o.iter_mut().enumerate() {
                let mut acc = 0.0f32;
                for (k, &kv) in BINOMIAL.iter().enumerate() {
                    acc += kv * s[clamp(2 * x as i64 + k as i64 - 2, sw)];
                }
                *out = acc;
            }
        });
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, o)| {
        for (k, &kv) in BINOMIAL.iter().enumerate() {
            let yy = clamp(2 * y as i64 + k as i64 - 2, sh);
            for (ov, &rv) in o.iter_mut().zip(&rows[yy * w..(yy + 1) * w]) {
                *ov += kv * rv;
            }
        }
    });
    FloatMap::from_vec(w, h, out).expect("sized")
}

fn expand_1d(src: &[f32], out: &mut [f32]) {
    let n = src.len() as i64;
    for (x, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f32;
        for (k, &kv) in BINOMIAL.iter().enumerate() {
            let t = x as i64 + k as i64 - 2;
            if t.rem_euclid(2) == 0 {
                acc += 2.0 * kv * src[(t / 2).clamp(0, n - 1) as usize];
            }
        }
        *o = acc;
    }
}

/// Upsamples to `width x height` (each at most `2 * dim`).
pub fn expand(src: &FloatMap, width: usize, height: usize) -> FloatMap {
    let (sw, sh) = (src.width(), src.height());
    let mut rows = vec![0.0f32; width * sh];
    rows.par_chunks_mut(width)
        .zip(src.data().par_chunks(sw))
        .for_each(|(o, s)| expand_1d(s, o));
    let mut out = vec![0.0f32; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, o)| {
        let n = sh as i64;
        for (k, &kv) in BINOMIAL.iter().enumerate() {
            let t = y as i64 + k as i64 - 2;
            if t.rem_euclid(2) != 0 {
                continue;
            }
            let yy = (t / 2).clamp(0, n - 1) as usize;
            let r = &rows[yy * width..(yy + 1) * width];
            for (ov, &rv) in o.iter_mut().zip(r) {
                *ov += 2.0 * kv * rv;
            }
        }
    });
    FloatMap::from_vec(width, height, out).expect("sized")
}

pub fn gaussian_pyramid(src: &FloatMap, levels: usize) -> Vec<FloatMap> {
    let mut pyr = vec![src.clone()];
    while pyr.len() < levels.max(1) {
        let next = reduce(pyr.last().expect("non-empty"));
        pyr.push(next);
    }
    pyr
}

pub fn laplacian_pyramid(src: &FloatMap, levels: usize) -> Vec<FloatMap> {
    let g = gaussian_pyramid(src, levels);
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.len() - 1 {
        let up = expand(&g[i + 1], g[i].width(), g[i].height());
        let d = g[i].data().iter().zip(up.data()).map(|(a, b)| a - b).collect();
        out.push(FloatMap::from_vec(g[i].width(), g[i].height(), d).expect("sized"));
    }
    out.push(g.last().expect("non-empty").clone());
    out
}

pub fn collapse(pyr: &[FloatMap]) -> FloatMap {
    let mut acc = pyr.last().expect("non-empty pyramid").clone();
    for band in pyr.iter().rev().skip(1) {
        let mut up = expand(&acc, band.width(), band.height());
        up.data_mut()
            .iter_mut()
            .zip(band.data())
            .for_each(|(u, b)| *u += b);
        acc = up;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::convolve_separable;

    #[test]
    fn reduce_equals_blur_then_subsample() {
        for (w, h) in [(75, 43), (64, 64), (1, 5), (6, 1)] {
            let m = FloatMap::from_fn(w, h, |x, y| ((x * 13 + y * 7) % 17) as f32 / 16.0);
            let blurred = convolve_separable(&m, &BINOMIAL);
            let r = reduce(&m);
            let want = FloatMap::from_fn(w.div_ceil(2), h.div_ceil(2), |x, y| blurred.get(2 * x, 2 * y));
            assert_eq!(r, want);
        }
    }

    #[test]
    fn depth_rule() {
        assert_eq!(pyramid_depth(640, 480), 7);
        assert_eq!(pyramid_depth(256, 256), 7);
        assert_eq!(pyramid_depth(2, 2), 1);
    }

    #[test]
    fn collapse_inverts_decomposition() {
        let m = FloatMap::from_fn(75, 43, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0);
        let back = collapse(&laplacian_pyramid(&m, 5));
        for (a, b) in m.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_survives_reduce_and_expand() {
        let m = FloatMap::filled(33, 17, 0.7);
        let r = reduce(&m);
        assert_eq!((r.width(), r.height()), (17, 9));
        assert!(r.data().iter().all(|v| (v - 0.7).abs() < 1e-6));
        let e = expand(&r, 33, 17);
        assert!(e.data().iter().all(|v| (v - 0.7).abs() < 1e-6));
    }
}
