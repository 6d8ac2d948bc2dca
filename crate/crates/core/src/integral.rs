//! Summed-area tables.

use crate::error::{Error, Result};
use crate::image::{check_single, Image};

/// `(width + 1) x (height + 1)` table where entry `(x, y)` is the sum of all
/// source pixels in `[0, x) x [0, y)`.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(img: &Image) -> Result<Self> {
        check_single(img)?;
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut table = vec![0.0f64; stride * (h + 1)];
        let data = img.data();
        for y in 0..h {
            let mut row_sum = 0.0f64;
            for x in 0..w {
                row_sum += data[y * w + x] as f64;
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
            }
        }
        Ok(Self {
            width: w,
            height: h,
            table,
        })
    }

    /// Width of the source image.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Height of the source image.
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Sum over the half-open rectangle `[x0, x1) x [y0, y1)`.
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<f64> {
        if x0 > x1 || y0 > y1 || x1 > self.width || y1 > self.height {
            return Err(Error::OutOfBounds(format!(
                "rectangle [{x0},{x1})x[{y0},{y1}) in {}x{}",
                self.width, self.height
            )));
        }
        Ok(self.rect_sum_unchecked(x0, y0, x1, y1))
    }

    #[inline]
    pub(crate) fn rect_sum_unchecked(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        self.at(x1, y1) - self.at(x0, y1) - self.at(x1, y0) + self.at(x0, y0)
    }
}

/// Builds the summed-area table of a 1-channel image.
pub fn integral(img: &Image) -> Result<IntegralImage> {
    IntegralImage::new(img)
}
