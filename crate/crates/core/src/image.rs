//! Planar float rasters.
//!
//! [`Image`] holds samples in `[0, 1]` and is what images are loaded into and
//! produced as. [`FloatMap`] is an unconstrained single-channel plane used for
//! flow components, weights and other intermediate quantities.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Row-major, pixel-interleaved raster with 1 or 3 channels and samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Wraps `data`, rejecting wrong lengths and samples that are not finite or outside `[0, 1]`.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_channels(channels)?;
        if data.len() != width * height * channels {
            return Err(Error::BufferLength {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::InvalidSample { index, value });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Like [`Image::new`] but clamps samples into `[0, 1]` (NaN becomes 0).
    pub fn from_vec_clamped(
        width: usize,
        height: usize,
        channels: usize,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        check_channels(channels)?;
        if data.len() != width * height * channels {
            return Err(Error::BufferLength {
                width,
                height,
                channels,
                got: data.len(),
            });
        }
        data.iter_mut().for_each(|v| *v = clamp_unit(*v));
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![clamp_unit(value); width * height * channels],
        }
    }

    /// Builds an image by evaluating `f(x, y, channel)`; results are clamped.
    pub fn from_fn<F>(width: usize, height: usize, channels: usize, f: F) -> Self
    where
        F: Fn(usize, usize, usize) -> f32 + Sync,
    {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        let mut data = vec![0.0f32; width * height * channels];
        if width > 0 {
            data.par_chunks_mut(width * channels)
                .enumerate()
                .for_each(|(y, row)| {
                    for x in 0..width {
                        for c in 0..channels {
                            row[x * channels + c] = clamp_unit(f(x, y, c));
                        }
                    }
                });
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Extracts one channel as a 1-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels);
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Interleaves three 1-channel images of equal size.
    pub fn from_planes(r: &Image, g: &Image, b: &Image) -> Result<Image> {
        for p in [r, g, b] {
            check_single(p)?;
            check_same_dims(r.width, r.height, p.width, p.height)?;
        }
        let mut data = Vec::with_capacity(r.data.len() * 3);
        for i in 0..r.data.len() {
            data.extend_from_slice(&[r.data[i], g.data[i], b.data[i]]);
        }
        Ok(Image {
            width: r.width,
            height: r.height,
            channels: 3,
            data,
        })
    }

    /// Applies `f` to every sample, clamping the result.
    pub fn map<F: Fn(f32) -> f32 + Sync>(&self, f: F) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.par_iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Rounds every sample to the nearest 8-bit level.
    pub fn quantize8(&self) -> Image {
        self.map(|v| (v * 255.0).round() / 255.0)
    }

    pub fn to_float_map(&self) -> Result<FloatMap> {
        check_single(self)?;
        Ok(FloatMap {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        })
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

fn check_channels(channels: usize) -> Result<()> {
    if channels == 1 || channels == 3 {
        Ok(())
    } else {
        Err(Error::ChannelCount {
            expected: 3,
            got: channels,
        })
    }
}

pub(crate) fn check_single(img: &Image) -> Result<()> {
    if img.channels == 1 {
        Ok(())
    } else {
        Err(Error::ChannelCount {
            expected: 1,
            got: img.channels,
        })
    }
}

pub(crate) fn check_same_dims(lw: usize, lh: usize, rw: usize, rh: usize) -> Result<()> {
    if lw == rw && lh == rh {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left_w: lw,
            left_h: lh,
            right_w: rw,
            right_h: rh,
        })
    }
}

/// Unconstrained single-channel float plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FloatMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::BufferLength {
                width,
                height,
                channels: 1,
                got: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f32 + Sync,
    {
        let mut data = vec![0.0f32; width * height];
        if width > 0 {
            data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = f(x, y);
                }
            });
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Converts to an [`Image`], clamping into `[0, 1]`.
    pub fn to_image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().map(|&v| clamp_unit(v)).collect(),
        }
    }
}

/// Per-pixel Rec.601 luma of a 3-channel image.
pub fn luminance(img: &Image) -> Result<Image> {
    if img.channels != 3 {
        return Err(Error::ChannelCount {
            expected: 3,
            got: img.channels,
        });
    }
    let data = img
        .data
        .par_chunks(3)
        .map(|px| clamp_unit(LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2]))
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    })
}

/// Luminance for 3-channel input, a copy for 1-channel input.
pub fn luminance_or_copy(img: &Image) -> Image {
    if img.channels == 1 {
        img.clone()
    } else {
        luminance(img).expect("three channels")
    }
}

/// Halves both dimensions (rounding down) by averaging 2x2 blocks.
pub fn downsample(img: &Image) -> Result<Image> {
    if img.width < 2 || img.height < 2 {
        return Err(Error::TooSmall {
            width: img.width,
            height: img.height,
            min: 2,
        });
    }
    let (w, h, ch) = (img.width / 2, img.height / 2, img.channels);
    let src_stride = img.width * ch;
    let mut data = vec![0.0f32; w * h * ch];
    data.par_chunks_mut(w * ch).enumerate().for_each(|(y, row)| {
        let r0 = &img.data[2 * y * src_stride..(2 * y + 1) * src_stride];
        let r1 = &img.data[(2 * y + 1) * src_stride..(2 * y + 2) * src_stride];
        for x in 0..w {
            for c in 0..ch {
                let a = r0[2 * x * ch + c] + r0[(2 * x + 1) * ch + c];
                let b = r1[2 * x * ch + c] + r1[(2 * x + 1) * ch + c];
                row[x * ch + c] = clamp_unit((a + b) * 0.25);
            }
        }
    });
    Ok(Image {
        width: w,
        height: h,
        channels: ch,
        data,
    })
}
