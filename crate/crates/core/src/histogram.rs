//! 256-bin histogram equalization and CDF matching.

use crate::error::{Error, Result};
use crate::image::Image;

pub const BINS: usize = 256;

#[inline]
fn level(v: f32) -> usize {
    ((v * 255.0).round() as isize).clamp(0, 255) as usize
}

/// Per-channel 256-bin histogram; samples are rounded to the nearest 8-bit level.
pub fn histogram(img: &Image, channel: usize) -> [u64; BINS] {
    let mut h = [0u64; BINS];
    let ch = img.channels();
    for v in img.data().iter().skip(channel).step_by(ch) {
        h[level(*v)] += 1;
    }
    h
}

fn cumulative(h: &[u64; BINS]) -> [u64; BINS] {
    let mut c = [0u64; BINS];
    let mut acc = 0;
    for (i, &n) in h.iter().enumerate() {
        acc += n;
        c[i] = acc;
    }
    c
}

/// Lookup table sending each source level to the smallest reference level whose
/// CDF reaches the source CDF. Comparisons are done on integer cross products
/// so the mapping is exact.
pub fn matching_lut(src: &[u64; BINS], reference: &[u64; BINS]) -> [u8; BINS] {
    let cs = cumulative(src);
    let cr = cumulative(reference);
    let ns = cs[BINS - 1].max(1) as u128;
    let nr = cr[BINS - 1].max(1) as u128;
    let mut lut = [0u8; BINS];
    let mut r = 0usize;
    for s in 0..BINS {
        // cr[r] / nr >= cs[s] / ns
        while r < BINS - 1 && (cr[r] as u128) * ns < (cs[s] as u128) * nr {
            r += 1;
        }
        lut[s] = r as u8;
    }
    lut
}

/// Maps each channel of `src` so its histogram matches the same channel of `reference`.
pub fn match_histogram(src: &Image, reference: &Image) -> Result<Image> {
    if src.channels() != reference.channels() {
        return Err(Error::ChannelCount {
            expected: reference.channels(),
            got: src.channels(),
        });
    }
    let ch = src.channels();
    let luts: Vec<[u8; BINS]> = (0..ch)
        .map(|c| matching_lut(&histogram(src, c), &histogram(reference, c)))
        .collect();
    apply_luts(src, &luts)
}

/// Global histogram equalization of each channel.
pub fn equalize(img: &Image) -> Image {
    let ch = img.channels();
    let luts: Vec<[u8; BINS]> = (0..ch)
        .map(|c| {
            let cdf = cumulative(&histogram(img, c));
            let total = cdf[BINS - 1];
            let cdf_min = cdf.iter().copied().find(|&v| v > 0).unwrap_or(0);
            let mut lut = [0u8; BINS];
            if total > cdf_min {
                let denom = (total - cdf_min) as f64;
                for (s, out) in lut.iter_mut().enumerate() {
                    let num = cdf[s].saturating_sub(cdf_min) as f64;
                    *out = (num / denom * 255.0).round() as u8;
                }
            } else {
                // single occupied level: leave unchanged
                for (s, out) in lut.iter_mut().enumerate() {
                    *out = s as u8;
                }
            }
            lut
        })
        .collect();
    apply_luts(img, &luts).expect("dimensions preserved")
}

fn apply_luts(img: &Image, luts: &[[u8; BINS]]) -> Result<Image> {
    let ch = img.channels();
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| luts[i % ch][level(v)] as f32 / 255.0)
        .collect();
    Image::new(img.width(), img.height(), ch, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize, ch: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..w * h * ch).map(|_| rng.random::<f32>().powf(1.5)).collect();
        Image::new(w, h, ch, data).unwrap()
    }

    fn emd_bins(a: &[u64; BINS], b: &[u64; BINS]) -> f64 {
        let (ca, cb) = (cumulative(a), cumulative(b));
        let (na, nb) = (ca[BINS - 1] as f64, cb[BINS - 1] as f64);
        (0..BINS)
            .map(|i| (ca[i] as f64 / na - cb[i] as f64 / nb).abs())
            .sum()
    }

    #[test]
    fn identical_is_identity_within_a_bin() {
        let img = random_image(1, 40, 30, 3);
        let out = match_histogram(&img, &img).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn halved_source_recovers_reference_histogram() {
        let reference = random_image(2, 64, 64, 1);
        let src = reference.map(|v| v * 0.5);
        let out = match_histogram(&src, &reference).unwrap();
        let d = emd_bins(&histogram(&out, 0), &histogram(&reference, 0));
        assert!(d < 2.0, "emd {d}");
    }

    #[test]
    fn lut_is_monotone() {
        let a = random_image(3, 50, 50, 1);
        let b = random_image(4, 30, 70, 1).map(|v| v * v);
        let lut = matching_lut(&histogram(&a, 0), &histogram(&b, 0));
        assert!(lut.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn matching_is_idempotent() {
        for seed in 0..5 {
            let reference = random_image(10 + seed, 48, 40, 1);
            let src = random_image(20 + seed, 33, 57, 1).map(|v| v * 0.3 + 0.1);
            let once = match_histogram(&src, &reference).unwrap();
            let twice = match_histogram(&once, &reference).unwrap();
            for (a, b) in once.data().iter().zip(twice.data()) {
                assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6);
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let a = Image::filled(2, 2, 1, 0.1);
        let b = Image::filled(2, 2, 3, 0.1);
        assert!(match_histogram(&a, &b).is_err());
    }

    #[test]
    fn equalize_spreads_levels() {
        let img = random_image(5, 64, 64, 1).map(|v| v * 0.1);
        let eq = equalize(&img);
        let max = eq.data().iter().cloned().fold(0.0f32, f32::max);
        assert_eq!(max, 1.0);
        let flat = equalize(&Image::filled(4, 4, 1, 0.3));
        assert!(flat.data().iter().all(|&v| (v - 0.3).abs() < 1.0 / 255.0));
    }
}
