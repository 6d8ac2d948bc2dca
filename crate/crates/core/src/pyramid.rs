//! Box-filtered image pyramids for the coarse-to-fine matcher.

use crate::error::{Error, Result};
use crate::image::{downsample, Image};

/// Maximum number of pyramid levels.
pub const MAX_LEVELS: usize = 5;
/// A level is kept only if both its dimensions are at least this large.
pub const MIN_LEVEL_DIM: usize = 100;

/// Level 0 is full resolution; each level halves the previous one.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<Image>,
}

impl Pyramid {
    pub fn levels(&self) -> &[Image] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> &Image {
        &self.levels[i]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

pub fn build_pyramid(img: &Image) -> Result<Pyramid> {
    build_pyramid_with(img, MAX_LEVELS)
}

/// Builds at most `max_levels` levels, stopping before any level whose
/// smaller side would drop below [`MIN_LEVEL_DIM`].
pub fn build_pyramid_with(img: &Image, max_levels: usize) -> Result<Pyramid> {
    if img.width().min(img.height()) < MIN_LEVEL_DIM {
        return Err(Error::TooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_LEVEL_DIM,
        });
    }
    let max_levels = max_levels.clamp(1, MAX_LEVELS);
    let mut levels = vec![img.clone()];
    while levels.len() < max_levels {
        let last = levels.last().expect("non-empty");
        if (last.width() / 2).min(last.height() / 2) < MIN_LEVEL_DIM {
            break;
        }
        levels.push(downsample(last)?);
    }
    Ok(Pyramid { levels })
}
