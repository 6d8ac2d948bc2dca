//! Pixel <-> normalized coordinates.
//!
//! The normalized frame puts the origin at the image center and scales by
//! half the width, so `x` spans `[-1, 1]` and `y` spans `[-h/w, h/w]`.

use nalgebra::Point2;

pub type Pt2 = Point2<f64>;

#[inline]
pub fn to_normalized(p: Pt2, width: usize, height: usize) -> Pt2 {
    let w = width as f64;
    let h = height as f64;
    Pt2::new((2.0 * p.x - w) / w, (2.0 * p.y - h) / w)
}

#[inline]
pub fn from_normalized(p: Pt2, width: usize, height: usize) -> Pt2 {
    let w = width as f64;
    let h = height as f64;
    Pt2::new((p.x * w + w) * 0.5, (p.y * w + h) * 0.5)
}

/// Length of `pixels` in normalized units for an image of the given width.
#[inline]
pub fn pixels_to_normalized(pixels: f64, width: usize) -> f64 {
    2.0 * pixels / width as f64
}
