//! Tile-based corner detection and coarse-to-fine SSD matching.
//!
//! A candidate corner is scored from the mean luminance of the four quadrants
//! around it: the cornerness is the sum of absolute differences between
//! cyclically adjacent quadrant means, and a candidate is only eligible when
//! the smallest of those differences exceeds the activity threshold (which
//! rules out edges and flat areas). One corner is kept per tile.
//!
//! Matching runs from the coarsest pyramid level down. At each level corners
//! are detected afresh on the reference, the search start in the source is
//! predicted by the homography fitted at the coarser level (in normalized
//! coordinates), and an exhaustive integer SSD search refines it.

use rayon::prelude::*;

use crate::coords::{from_normalized, pixels_to_normalized, to_normalized, Pt2};
use crate::error::{Error, Result};
use crate::geometry::{fit_homography, Correspondence, Homography};
use crate::image::{check_same_dims, check_single, Image};
use crate::integral::IntegralImage;
use crate::pyramid::Pyramid;
use crate::weeding::{default_delta, weed_parallel, WeedParams};

/// Each quadrant is `QUADRANT_HALF x QUADRANT_HALF` pixels.
pub const QUADRANT_HALF: usize = 8;
pub const DEFAULT_TILE: usize = 64;
pub const DEFAULT_THRESHOLD: f64 = 4.0 / 255.0;
pub const DEFAULT_PATCH: usize = 21;
pub const DEFAULT_RADIUS: usize = 10;
/// Candidate grid spacing is `tile / GRID_DIVISIONS`.
pub const GRID_DIVISIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    pub cornerness: f64,
    pub level: usize,
}

/// A correspondence between a reference pixel and a source pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub ref_pos: Pt2,
    pub src_pos: Pt2,
    /// SSD over the comparison patch.
    pub score: f64,
}

impl Match {
    pub fn new(ref_pos: Pt2, src_pos: Pt2, score: f64) -> Self {
        Self {
            ref_pos,
            src_pos,
            score,
        }
    }

    /// `src_pos - ref_pos`.
    pub fn flow(&self) -> (f64, f64) {
        (self.src_pos.x - self.ref_pos.x, self.src_pos.y - self.ref_pos.y)
    }

    pub fn normalized(&self, width: usize, height: usize) -> Correspondence {
        Correspondence::new(
            to_normalized(self.ref_pos, width, height),
            to_normalized(self.src_pos, width, height),
        )
    }
}

/// Cornerness and minimum adjacent difference from quadrant means ordered
/// top-left, top-right, bottom-right, bottom-left.
pub fn quadrant_contrast(mu: [f64; 4]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    for j in 0..4 {
        let d = (mu[(j + 1) % 4] - mu[j]).abs();
        sum += d;
        min = min.min(d);
    }
    (sum, min)
}

/// Cornerness at `(x, y)` with `half x half` quadrants.
pub fn cornerness(ii: &IntegralImage, x: usize, y: usize, half: usize) -> Result<(f64, f64)> {
    if half == 0 || x < half || y < half || x + half > ii.width() || y + half > ii.height() {
        return Err(Error::OutOfBounds(format!(
            "quadrants of half-size {half} around ({x}, {y}) in {}x{}",
            ii.width(),
            ii.height()
        )));
    }
    Ok(cornerness_unchecked(ii, x, y, half))
}

#[inline]
fn cornerness_unchecked(ii: &IntegralImage, x: usize, y: usize, half: usize) -> (f64, f64) {
    let area = (half * half) as f64;
    let (x0, x1, x2) = (x - half, x, x + half);
    let (y0, y1, y2) = (y - half, y, y + half);
    let mu = [
        ii.rect_sum_unchecked(x0, y0, x1, y1) / area,
        ii.rect_sum_unchecked(x1, y0, x2, y1) / area,
        ii.rect_sum_unchecked(x1, y1, x2, y2) / area,
        ii.rect_sum_unchecked(x0, y1, x1, y2) / area,
    ];
    quadrant_contrast(mu)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerParams {
    pub tile: usize,
    pub threshold: f64,
    pub half: usize,
    /// Candidates closer than this to the border are skipped (at least `half`).
    pub margin: usize,
}

impl Default for CornerParams {
    fn default() -> Self {
        Self {
            tile: DEFAULT_TILE,
            threshold: DEFAULT_THRESHOLD,
            half: QUADRANT_HALF,
            margin: QUADRANT_HALF,
        }
    }
}

/// One corner per tile with the default quadrant size.
pub fn detect_corners(lum: &Image, tile: usize, threshold: f64) -> Result<Vec<Corner>> {
    detect_corners_with(
        lum,
        &CornerParams {
            tile,
            threshold,
            ..CornerParams::default()
        },
        0,
    )
}

pub fn detect_corners_with(lum: &Image, params: &CornerParams, level: usize) -> Result<Vec<Corner>> {
    check_single(lum)?;
    if params.tile < GRID_DIVISIONS {
        return Err(Error::InvalidParameter(format!(
            "tile size {} below {GRID_DIVISIONS}",
            params.tile
        )));
    }
    let ii = IntegralImage::new(lum)?;
    Ok(detect_in_integral(&ii, params, level))
}

pub(crate) fn detect_in_integral(ii: &IntegralImage, params: &CornerParams, level: usize) -> Vec<Corner> {
    let (w, h) = (ii.width(), ii.height());
    let tile = params.tile;
    let step = tile / GRID_DIVISIONS;
    let margin = params.margin.max(params.half);
    let tiles_x = w.div_ceil(tile);
    let tiles_y = h.div_ceil(tile);
    (0..tiles_x * tiles_y)
        .into_par_iter()
        .filter_map(|t| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let (x0, y0) = (tx * tile, ty * tile);
            let mut best: Option<Corner> = None;
            for gy in 0..GRID_DIVISIONS {
                let y = y0 + step / 2 + gy * step;
                if y >= h || y < margin || y + margin > h {
                    continue;
                }
                for gx in 0..GRID_DIVISIONS {
                    let x = x0 + step / 2 + gx * step;
                    if x >= w || x < margin || x + margin > w {
                        continue;
                    }
                    let (c, min_diff) = cornerness_unchecked(ii, x, y, params.half);
                    if min_diff > params.threshold && best.is_none_or(|b| c > b.cornerness) {
                        best = Some(Corner {
                            x,
                            y,
                            cornerness: c,
                            level,
                        });
                    }
                }
            }
            best
        })
        .collect()
}

/// Result of an SSD search: best integer source position and its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsdHit {
    pub x: usize,
    pub y: usize,
    pub score: f64,
}

/// Exhaustive SSD search of the `(2 * radius + 1)^2` window centered on
/// `init` for the `patch x patch` block around `p_ref`.
///
/// Candidates whose patch leaves `src` are skipped; `Ok(None)` when none fit.
/// Ties go to the smallest squared distance from `init`, then to row-major
/// order.
pub fn ssd_match(
    reference: &Image,
    src: &Image,
    p_ref: (usize, usize),
    init: (i64, i64),
    radius: usize,
    patch: usize,
) -> Result<Option<SsdHit>> {
    check_single(reference)?;
    check_single(src)?;
    if patch.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("patch size {patch} must be odd")));
    }
    let r = patch / 2;
    let (rx, ry) = p_ref;
    if rx < r || ry < r || rx + r >= reference.width() || ry + r >= reference.height() {
        return Err(Error::OutOfBounds(format!(
            "{patch}x{patch} patch around ({rx}, {ry}) in {}x{}",
            reference.width(),
            reference.height()
        )));
    }
    Ok(ssd_search(reference, src, p_ref, init, radius, r))
}

fn ssd_search(
    reference: &Image,
    src: &Image,
    (rx, ry): (usize, usize),
    (ix, iy): (i64, i64),
    radius: usize,
    r: usize,
) -> Option<SsdHit> {
    let (rw, sw, sh) = (reference.width(), src.width() as i64, src.height() as i64);
    let rdata = reference.data();
    let sdata = src.data();
    let rad = radius as i64;
    let ri = r as i64;
    let size = 2 * r + 1;
    // best: (score, dist2, y, x)
    let mut best: Option<(f64, i64, i64, i64)> = None;
    for cy in iy - rad..=iy + rad {
        if cy - ri < 0 || cy + ri >= sh {
            continue;
        }
        for cx in ix - rad..=ix + rad {
            if cx - ri < 0 || cx + ri >= sw {
                continue;
            }
            let bound = best.map_or(f64::INFINITY, |b| b.0);
            let mut ssd = 0.0f64;
            let mut pruned = false;
            for k in 0..size {
                let ro = (ry - r + k) * rw + rx - r;
                let so = ((cy - ri) as usize + k) * sw as usize + (cx - ri) as usize;
                let a = &rdata[ro..ro + size];
                let b = &sdata[so..so + size];
                for (&p, &q) in a.iter().zip(b) {
                    let d = p as f64 - q as f64;
                    ssd += d * d;
                }
                if ssd > bound {
                    pruned = true;
                    break;
                }
            }
            if pruned {
                continue;
            }
            let d2 = (cx - ix).pow(2) + (cy - iy).pow(2);
            let better = match best {
                None => true,
                Some((s, bd, by, bx)) => ssd < s || (ssd == s && (d2, cy, cx) < (bd, by, bx)),
            };
            if better {
                best = Some((ssd, d2, cy, cx));
            }
        }
    }
    best.map(|(score, _, y, x)| SsdHit {
        x: x as usize,
        y: y as usize,
        score,
    })
}

/// Weeding configuration for the per-level filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelWeeding {
    /// Iteration budget at level 0.
    pub iterations_fine: usize,
    /// Iteration budget at every coarser level.
    pub iterations_coarse: usize,
    /// Fixed number of RNG streams; independent of the thread count.
    pub streams: usize,
    /// Inlier threshold in pixels of the level being weeded.
    pub eps_pixels: f64,
    /// `None` selects [`default_delta`].
    pub delta: Option<usize>,
}

impl Default for LevelWeeding {
    fn default() -> Self {
        Self {
            iterations_fine: 256,
            iterations_coarse: 64,
            streams: 8,
            eps_pixels: 2.0,
            delta: None,
        }
    }
}

impl LevelWeeding {
    pub fn params_for(&self, level: usize, width: usize, matches: usize, seed: u64) -> WeedParams {
        WeedParams {
            iterations: if level == 0 {
                self.iterations_fine
            } else {
                self.iterations_coarse
            },
            delta: self.delta.unwrap_or_else(|| default_delta(matches)),
            eps: pixels_to_normalized(self.eps_pixels, width),
            seed: level_seed(seed, level),
        }
    }
}

/// Seed for the weeding run at `level`.
pub fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ (level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub corners: CornerParams,
    pub patch: usize,
    pub radius: usize,
    pub weeding: LevelWeeding,
    pub seed: u64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            corners: CornerParams {
                margin: DEFAULT_PATCH / 2,
                ..CornerParams::default()
            },
            patch: DEFAULT_PATCH,
            radius: DEFAULT_RADIUS,
            weeding: LevelWeeding::default(),
            seed: 0,
        }
    }
}

/// Filters `matches` (pixel coordinates of an image of the given size) and
/// returns the reliable subset in input order.
pub fn weed_matches(
    matches: &[Match],
    width: usize,
    height: usize,
    level: usize,
    params: &MatchParams,
) -> Result<Vec<Match>> {
    if matches.len() < 4 {
        return Ok(Vec::new());
    }
    let pairs: Vec<Correspondence> = matches.iter().map(|m| m.normalized(width, height)).collect();
    let wp = params
        .weeding
        .params_for(level, width, matches.len(), params.seed);
    let streams = params.weeding.streams.max(1);
    let streams = if wp.iterations.is_multiple_of(streams) {
        streams
    } else {
        1
    };
    let out = weed_parallel(&pairs, &wp, streams)?;
    Ok(out.kept.iter().map(|&i| matches[i]).collect())
}

/// Least-squares homography (normalized coordinates) through `matches`.
pub fn fit_matches(matches: &[Match], width: usize, height: usize) -> Result<Homography> {
    let pairs: Vec<Correspondence> = matches.iter().map(|m| m.normalized(width, height)).collect();
    fit_homography(&pairs)
}

/// Detects corners on `reference` and matches each one in `src`, starting the
/// search where `h` predicts. Positions are pixels of this level.
pub fn match_level(
    reference: &Image,
    src: &Image,
    h: &Homography,
    level: usize,
    params: &MatchParams,
) -> Result<Vec<Match>> {
    check_single(reference)?;
    check_single(src)?;
    check_same_dims(reference.width(), reference.height(), src.width(), src.height())?;
    let (w, hgt) = (reference.width(), reference.height());
    let r = params.patch / 2;
    let corner_params = CornerParams {
        margin: params.corners.margin.max(r + 1),
        ..params.corners
    };
    let ii = IntegralImage::new(reference)?;
    let corners = detect_in_integral(&ii, &corner_params, level);
    let found: Vec<Option<Match>> = corners
        .par_iter()
        .map(|c| {
            let p = Pt2::new(c.x as f64, c.y as f64);
            let q = h.apply(to_normalized(p, w, hgt)).ok()?;
            let q = from_normalized(q, w, hgt);
            if !(q.x.is_finite() && q.y.is_finite()) || q.x.abs() > 1e7 || q.y.abs() > 1e7 {
                return None;
            }
            let init = (q.x.round() as i64, q.y.round() as i64);
            let hit = ssd_search(reference, src, (c.x, c.y), init, params.radius, r)?;
            Some(Match::new(p, Pt2::new(hit.x as f64, hit.y as f64), hit.score))
        })
        .collect();
    Ok(found.into_iter().flatten().collect())
}

/// Raw level-0 matches plus the homography that seeded their search.
#[derive(Debug, Clone)]
pub struct RawMatches {
    pub matches: Vec<Match>,
    pub seed_homography: Homography,
}

/// Runs every level coarse to fine, weeding and refitting at each coarse
/// level, and returns the unweeded finest-level matches.
pub fn pyramidal_match_raw(ref_pyr: &Pyramid, src_pyr: &Pyramid, params: &MatchParams) -> Result<RawMatches> {
    if ref_pyr.len() != src_pyr.len() || ref_pyr.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "pyramid level counts differ: {} vs {}",
            ref_pyr.len(),
            src_pyr.len()
        )));
    }
    let mut h = Homography::identity();
    for level in (0..ref_pyr.len()).rev() {
        let (r, s) = (ref_pyr.level(level), src_pyr.level(level));
        let matches = match_level(r, s, &h, level, params)?;
        if level == 0 {
            return Ok(RawMatches {
                matches,
                seed_homography: h,
            });
        }
        let kept = weed_matches(&matches, r.width(), r.height(), level, params)?;
        if kept.len() >= 4 {
            if let Ok(next) = fit_matches(&kept, r.width(), r.height()) {
                h = next;
            }
        }
    }
    unreachable!("level 0 returns")
}

/// Final reliable matches and the homography fitted through them.
#[derive(Debug, Clone)]
pub struct PyramidMatches {
    pub matches: Vec<Match>,
    pub homography: Homography,
}

/// Full coarse-to-fine matching including the finest-level weeding.
///
/// Fails with [`Error::RegistrationFailed`] when fewer than four reliable
/// matches survive at level 0.
pub fn pyramidal_match(ref_pyr: &Pyramid, src_pyr: &Pyramid, params: &MatchParams) -> Result<PyramidMatches> {
    let raw = pyramidal_match_raw(ref_pyr, src_pyr, params)?;
    let base = ref_pyr.level(0);
    let kept = weed_matches(&raw.matches, base.width(), base.height(), 0, params)?;
    finest_homography(kept, base.width(), base.height(), raw.seed_homography)
}

/// Wraps weeded level-0 matches with their least-squares homography, falling
/// back to `fallback` when the fit is degenerate.
pub fn finest_homography(
    kept: Vec<Match>,
    width: usize,
    height: usize,
    fallback: Homography,
) -> Result<PyramidMatches> {
    if kept.len() < 4 {
        return Err(Error::RegistrationFailed { matches: kept.len() });
    }
    let homography = fit_matches(&kept, width, height).unwrap_or(fallback);
    Ok(PyramidMatches {
        matches: kept,
        homography,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::luminance;
    use crate::pyramid::build_pyramid;
    use crate::synth::{synth_stack, Motion, SceneSpec};
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadrants(values: [f32; 4]) -> Image {
        Image::from_fn(16, 16, 1, |x, y, _| match (x < 8, y < 8) {
            (true, true) => values[0],
            (false, true) => values[1],
            (false, false) => values[2],
            (true, false) => values[3],
        })
    }

    fn corner_of(img: &Image) -> (f64, f64) {
        cornerness(&IntegralImage::new(img).unwrap(), 8, 8, 8).unwrap()
    }

    #[test]
    fn cornerness_analytics() {
        assert_eq!(corner_of(&quadrants([0.3; 4])), (0.0, 0.0));
        assert_eq!(corner_of(&quadrants([0.0, 1.0, 0.0, 1.0])), (4.0, 1.0));
        let (c, min) = corner_of(&quadrants([0.0, 0.0, 1.0, 1.0]));
        assert_eq!((c, min), (2.0, 0.0));
        assert!(min <= 1e-9);
    }

    #[test]
    fn cornerness_bounds() {
        let ii = IntegralImage::new(&Image::filled(20, 20, 1, 0.5)).unwrap();
        assert!(cornerness(&ii, 7, 10, 8).is_err());
        assert!(cornerness(&ii, 10, 13, 8).is_err());
        assert!(cornerness(&ii, 12, 12, 8).is_ok());
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, levels: u32) -> Image {
        let data = (0..w * h)
            .map(|_| rng.random_range(0..=levels) as f32 / levels as f32)
            .collect();
        Image::new(w, h, 1, data).unwrap()
    }

    fn brute_force_ssd(
        reference: &Image,
        src: &Image,
        (rx, ry): (usize, usize),
        (ix, iy): (i64, i64),
        radius: i64,
        r: i64,
    ) -> Option<(usize, usize, f64)> {
        let mut best: Option<(f64, i64, i64, i64)> = None;
        for cy in iy - radius..=iy + radius {
            for cx in ix - radius..=ix + radius {
                if cx - r < 0 || cy - r < 0 || cx + r >= src.width() as i64 || cy + r >= src.height() as i64 {
                    continue;
                }
                let mut ssd = 0.0f64;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let p = reference.get((rx as i64 + dx) as usize, (ry as i64 + dy) as usize, 0);
                        let q = src.get((cx + dx) as usize, (cy + dy) as usize, 0);
                        ssd += (p as f64 - q as f64).powi(2);
                    }
                }
                let key = (ssd, (cx - ix).pow(2) + (cy - iy).pow(2), cy, cx);
                if best.is_none_or(|b| key.partial_cmp(&b) == Some(std::cmp::Ordering::Less)) {
                    best = Some(key);
                }
            }
        }
        best.map(|(s, _, y, x)| (x as usize, y as usize, s))
    }

    #[test]
    fn ssd_self_match_and_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 64, 64, 255);
        let hit = ssd_match(&img, &img, (30, 30), (30, 30), 10, 21)
            .unwrap()
            .unwrap();
        assert_eq!((hit.x, hit.y, hit.score), (30, 30, 0.0));
        let shifted = Image::from_fn(64, 64, 1, |x, y, _| {
            img.get(
                (x as i64 - 3).rem_euclid(64) as usize,
                (y as i64 + 2).rem_euclid(64) as usize,
                0,
            )
        });
        let hit = ssd_match(&img, &shifted, (30, 30), (30, 30), 10, 21)
            .unwrap()
            .unwrap();
        assert_eq!((hit.x, hit.y), (33, 28));
        assert_eq!(hit.score, 0.0);
    }

    #[test]
    fn ssd_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..200 {
            let levels = if trial % 3 == 0 { 2 } else { 255 };
            let reference = random_image(&mut rng, 64, 64, levels);
            let src = random_image(&mut rng, 64, 64, levels);
            let patch = 2 * rng.random_range(0..=10usize) + 1;
            let r = patch / 2;
            let p = (rng.random_range(r..64 - r), rng.random_range(r..64 - r));
            let init = (rng.random_range(-5..70i64), rng.random_range(-5..70i64));
            let radius = rng.random_range(0..=12usize);
            let got = ssd_match(&reference, &src, p, init, radius, patch).unwrap();
            let want = brute_force_ssd(&reference, &src, p, init, radius as i64, r as i64);
            assert_eq!(got.map(|h| (h.x, h.y, h.score)), want, "trial {trial}");
        }
    }

    #[test]
    fn ssd_errors() {
        let img = Image::filled(30, 30, 1, 0.5);
        assert!(ssd_match(&img, &img, (5, 15), (15, 15), 3, 21).is_err());
        assert!(ssd_match(&img, &img, (15, 15), (15, 15), 3, 20).is_err());
        assert_eq!(ssd_match(&img, &img, (15, 15), (200, 200), 3, 21).unwrap(), None);
    }

    #[test]
    fn no_corners_on_flat_image() {
        let img = Image::filled(200, 150, 1, 0.4);
        assert!(detect_corners(&img, 64, DEFAULT_THRESHOLD).unwrap().is_empty());
        assert!(detect_corners(&img, 8, DEFAULT_THRESHOLD).is_err());
    }

    #[test]
    fn checkerboard_crossings() {
        let tile = 64;
        let img = Image::from_fn(320, 256, 1, |x, y, _| (((x / tile) + (y / tile)) % 2) as f32);
        let corners = detect_corners(&img, tile, DEFAULT_THRESHOLD).unwrap();
        assert!(corners.len() <= 5 * 4);
        let step = (tile / GRID_DIVISIONS) as f64;
        for cx in (1..5).map(|k| (k * tile) as f64) {
            for cy in (1..4).map(|k| (k * tile) as f64) {
                let found = corners
                    .iter()
                    .any(|c| (c.x as f64 - cx).hypot(c.y as f64 - cy) <= step);
                assert!(found, "crossing ({cx},{cy}) missed");
            }
        }
        for c in &corners {
            let nx = ((c.x as f64 / tile as f64).round() * tile as f64 - c.x as f64).abs();
            let ny = ((c.y as f64 / tile as f64).round() * tile as f64 - c.y as f64).abs();
            assert!(nx.hypot(ny) <= step, "{c:?}");
            assert!(c.cornerness >= 4.0 * DEFAULT_THRESHOLD);
        }
    }

    #[test]
    fn corner_count_bounded_and_levels_map_inside() {
        let spec = SceneSpec::new(400, 300);
        let lum = luminance(&synth_stack(&spec, 3).unwrap().reference).unwrap();
        let pyr = build_pyramid(&lum).unwrap();
        for (level, img) in pyr.levels().iter().enumerate() {
            for tile in [16, 40, 64] {
                let params = CornerParams {
                    tile,
                    ..CornerParams::default()
                };
                let cs = detect_corners_with(img, &params, level).unwrap();
                assert!(cs.len() <= img.width().div_ceil(tile) * img.height().div_ceil(tile));
                for c in &cs {
                    assert!(c.cornerness >= 4.0 * params.threshold);
                    assert!(c.x << level < 400 && c.y << level < 300);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn cornerness_offset_and_scale(
            data in proptest::collection::vec(0.0f32..0.5, 24 * 24),
            offset in 0.0f32..0.5,
            gain in 0.1f32..2.0,
        ) {
            let img = Image::new(24, 24, 1, data).unwrap();
            let at = |im: &Image| cornerness(&IntegralImage::new(im).unwrap(), 12, 12, 8).unwrap().0;
            let base = at(&img);
            prop_assert!((at(&img.map(|v| v + offset)) - base).abs() < 1e-6);
            let scaled = at(&img.map(|v| v * gain));
            prop_assert!((scaled - gain as f64 * base).abs() <= 1e-6 * (gain as f64 * base).max(1e-3));
        }
    }

    fn textured_pair(motion: Motion, seed: u64) -> (Pyramid, Pyramid) {
        let spec = SceneSpec {
            background: motion,
            ..SceneSpec::new(640, 480)
        };
        let s = synth_stack(&spec, seed).unwrap();
        let r = build_pyramid(&luminance(&s.reference).unwrap()).unwrap();
        let q = build_pyramid(&luminance(&s.source).unwrap()).unwrap();
        (r, q)
    }

    #[test]
    fn identical_pyramids_give_zero_flow() {
        let (r, _) = textured_pair(Motion::identity(), 1);
        let out = pyramidal_match(&r, &r, &MatchParams::default()).unwrap();
        assert!(out.matches.len() >= 20);
        assert!(out.matches.iter().all(|m| m.flow() == (0.0, 0.0)));
    }

    #[test]
    fn translation_recovered() {
        let (r, s) = textured_pair(Motion::Translation(8.0, 5.0), 2);
        let out = pyramidal_match(&r, &s, &MatchParams::default()).unwrap();
        let good = out
            .matches
            .iter()
            .filter(|m| {
                let (u, v) = m.flow();
                (u - 8.0).abs() <= 1.0 && (v - 5.0).abs() <= 1.0
            })
            .count();
        assert!(good * 10 >= out.matches.len() * 9, "{good}/{}", out.matches.len());
    }

    #[test]
    fn homography_recovered() {
        let m = Matrix3::new(1.01, 0.004, -4.0, -0.006, 0.995, 3.0, 4e-6, -3e-6, 1.0);
        let map = |m: &Matrix3<f64>, x: f64, y: f64| {
            let q = m * Vector3::new(x, y, 1.0);
            (q.x / q.z, q.y / q.z)
        };
        for (x, y) in [(0.0, 0.0), (640.0, 0.0), (0.0, 480.0), (640.0, 480.0)] {
            let (qx, qy) = map(&m, x, y);
            assert!((qx - x).hypot(qy - y) <= 12.0);
        }
        let (r, s) = textured_pair(Motion::Projective(m), 3);
        let out = pyramidal_match(&r, &s, &MatchParams::default()).unwrap();
        let inv = m.try_inverse().unwrap();
        let mut errs: Vec<f64> = out
            .matches
            .iter()
            .map(|mt| {
                let (fx, fy) = map(&m, mt.ref_pos.x, mt.ref_pos.y);
                let (bx, by) = map(&inv, mt.src_pos.x, mt.src_pos.y);
                let f = (fx - mt.src_pos.x).powi(2) + (fy - mt.src_pos.y).powi(2);
                let b = (bx - mt.ref_pos.x).powi(2) + (by - mt.ref_pos.y).powi(2);
                ((f + b) / 2.0).sqrt()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        assert!(errs.len() >= 20);
        assert!(errs[errs.len() / 2] < 1.0, "median {}", errs[errs.len() / 2]);
    }

    #[test]
    fn mismatched_pyramids_rejected() {
        let (r, _) = textured_pair(Motion::identity(), 1);
        let small = build_pyramid(&Image::filled(200, 200, 1, 0.5)).unwrap();
        assert!(pyramidal_match(&r, &small, &MatchParams::default()).is_err());
    }
}
