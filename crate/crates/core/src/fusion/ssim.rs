//! Per-pixel structural similarity from five Gaussian-filtered moment maps.

use rayon::prelude::*;

use crate::error::Result;
use crate::filter::{convolve_separable, gaussian_kernel};
use crate::image::{check_same_dims, check_single, FloatMap, Image};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Gaussian window: `sigma` and half-width, so the support is `2 * radius + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimWindow {
    pub sigma: f64,
    pub radius: usize,
}

impl Default for SsimWindow {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            radius: 5,
        }
    }
}

pub fn ssim_map(a: &Image, b: &Image) -> Result<FloatMap> {
    ssim_map_with(a, b, SsimWindow::default())
}

pub fn ssim_map_with(a: &Image, b: &Image, window: SsimWindow) -> Result<FloatMap> {
    check_single(a)?;
    check_single(b)?;
    check_same_dims(a.width(), a.height(), b.width(), b.height())?;
    let (w, h) = (a.width(), a.height());
    let k = gaussian_kernel(window.sigma, window.radius);
    let plane = |f: &dyn Fn(f32, f32) -> f32| {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        convolve_separable(&FloatMap::from_vec(w, h, data).expect("same size"), &k)
    };
    // second moments on centred samples to limit f32 cancellation
    let (ca, cb) = (a.mean() as f32, b.mean() as f32);
    let mu_a = plane(&|x, _| x);
    let mu_b = plane(&|_, y| y);
    let aa = plane(&|x, _| (x - ca) * (x - ca));
    let bb = plane(&|_, y| (y - cb) * (y - cb));
    let ab = plane(&|x, y| (x - ca) * (y - cb));
    let data: Vec<f32> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (ma, mb) = (mu_a.data()[i] as f64, mu_b.data()[i] as f64);
            let (da, db) = (ma - ca as f64, mb - cb as f64);
            let va = aa.data()[i] as f64 - da * da;
            let vb = bb.data()[i] as f64 - db * db;
            let cov = ab.data()[i] as f64 - da * db;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            (num / den).clamp(-1.0, 1.0) as f32
        })
        .collect();
    FloatMap::from_vec(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::new(w, h, 1, (0..w * h).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let a = noise(1, 50, 40);
        let m = ssim_map(&a, &a).unwrap();
        assert!(m.data().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn constants_closed_form() {
        let m = ssim_map(&Image::filled(20, 20, 1, 0.25), &Image::filled(20, 20, 1, 0.75)).unwrap();
        let expect = (2.0 * 0.25 * 0.75 + SSIM_C1) / (0.25f64.powi(2) + 0.75f64.powi(2) + SSIM_C1);
        assert!(m.data().iter().all(|&v| (v as f64 - expect).abs() < 1e-5));
        assert!((expect - 0.6000).abs() < 1e-3);
    }

    #[test]
    fn independent_noise_is_dissimilar() {
        for t in 0..10 {
            let m = ssim_map(&noise(10 + t, 64, 64), &noise(100 + t, 64, 64)).unwrap();
            let mean = m.data().iter().map(|&v| v as f64).sum::<f64>() / m.data().len() as f64;
            assert!(mean < 0.2, "{mean}");
        }
    }

    #[test]
    fn rejects_color_and_mismatch() {
        assert!(ssim_map(&Image::filled(4, 4, 3, 0.1), &Image::filled(4, 4, 3, 0.1)).is_err());
        assert!(ssim_map(&Image::filled(4, 4, 1, 0.1), &Image::filled(5, 4, 1, 0.1)).is_err());
    }
}
