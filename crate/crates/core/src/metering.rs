//! Exposure-offset choice and reference selection.

use crate::error::{Error, Result};
use crate::image::{luminance_or_copy, Image};

/// Thresholds mapping the underexposed fraction to an offset in stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteringParams {
    /// Luminance below this counts as underexposed.
    pub dark_level: f32,
    /// Fractions below `cutoffs[0]` give 2 stops, below `cutoffs[1]` give 3, otherwise 4.
    pub cutoffs: [f64; 2],
}

impl Default for MeteringParams {
    fn default() -> Self {
        Self {
            dark_level: 0.05,
            cutoffs: [0.02, 0.10],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExposurePlan {
    pub offset_stops: u32,
    pub reference_index: usize,
}

/// Fraction of pixels whose luminance is below `dark_level`.
pub fn underexposed_fraction(img: &Image, dark_level: f32) -> f64 {
    let lum = luminance_or_copy(img);
    if lum.data().is_empty() {
        return 0.0;
    }
    lum.data().iter().filter(|&&v| v < dark_level).count() as f64 / lum.data().len() as f64
}

pub fn select_offset(ettr: &Image) -> u32 {
    select_offset_with(ettr, &MeteringParams::default())
}

pub fn select_offset_with(ettr: &Image, params: &MeteringParams) -> u32 {
    let q = underexposed_fraction(ettr, params.dark_level);
    if q < params.cutoffs[0] {
        2
    } else if q < params.cutoffs[1] {
        3
    } else {
        4
    }
}

/// Index of the shortest exposure; ties go to the darker image, then the lower index.
pub fn choose_reference(images: &[&Image], exposures: &[f64]) -> Result<usize> {
    if images.is_empty() {
        return Err(Error::InvalidParameter("empty stack".into()));
    }
    if images.len() != exposures.len() {
        return Err(Error::InvalidParameter(format!(
            "{} images but {} exposure values",
            images.len(),
            exposures.len()
        )));
    }
    if let Some(e) = exposures.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::InvalidParameter(format!("exposure {e} must be positive")));
    }
    let key = |i: usize| (exposures[i], luminance_or_copy(images[i]).mean());
    let mut best = 0;
    for i in 1..images.len() {
        let (ei, li) = key(i);
        let (eb, lb) = key(best);
        if ei < eb || (ei == eb && li < lb) {
            best = i;
        }
    }
    Ok(best)
}

pub fn plan(ettr: &Image, images: &[&Image], exposures: &[f64]) -> Result<ExposurePlan> {
    Ok(ExposurePlan {
        offset_stops: select_offset(ettr),
        reference_index: choose_reference(images, exposures)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn offsets() {
        assert_eq!(select_offset(&Image::filled(10, 10, 3, 0.5)), 2);
        let half_black = Image::from_fn(10, 10, 1, |x, _, _| if x < 5 { 0.0 } else { 0.6 });
        assert_eq!(select_offset(&half_black), 4);
        let few = Image::from_fn(10, 10, 1, |x, y, _| if x == 0 && y < 5 { 0.0 } else { 0.6 });
        assert_eq!(select_offset(&few), 3);
    }

    #[test]
    fn reference_choice() {
        let a = Image::filled(4, 4, 3, 0.5);
        let b = Image::filled(4, 4, 3, 0.2);
        assert_eq!(choose_reference(&[&a, &b], &[0.01, 0.04]).unwrap(), 0);
        assert_eq!(choose_reference(&[&a, &b], &[0.04, 0.01]).unwrap(), 1);
        assert_eq!(choose_reference(&[&a, &b], &[0.01, 0.01]).unwrap(), 1);
        assert!(choose_reference(&[], &[]).is_err());
        assert!(choose_reference(&[&a], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn darkening_never_lowers_offset(
            data in proptest::collection::vec(0.0f32..=1.0, 64),
            gain in 0.0f32..=1.0,
        ) {
            let img = Image::new(8, 8, 1, data).unwrap();
            let dark = img.map(|v| v * gain);
            prop_assert!(select_offset(&dark) >= select_offset(&img));
        }
    }
}
