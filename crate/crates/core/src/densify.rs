//! Sparse-to-dense flow propagation.
//!
//! Match flows are splatted into two maps `P_u`, `P_v` together with an
//! indicator map `N`. All three go through the same edge-aware filter guided
//! by the reference, and the dense flow is the ratio `P~ / N~`, which puts the
//! matched values back exactly at matched pixels and blends them elsewhere
//! according to guide-aware proximity.
//!
//! The filter is the recursive variant of the domain transform: along each
//! row (then each column) the guide defines a warped 1D distance
//! `1 + sigma_s / sigma_r * sum_c |dI_c|`, and a first-order recursive filter
//! with feedback `a^d` runs forward and backward over it. Several passes with
//! geometrically decreasing sigmas alternate horizontal and vertical sweeps.

use rayon::prelude::*;

use crate::coords::{from_normalized, to_normalized, Pt2};
use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::image::{check_same_dims, FloatMap, Image};
use crate::matcher::Match;

pub const DEFAULT_SIGMA_S: f64 = 400.0;
pub const DEFAULT_SIGMA_R: f64 = 0.2;
pub const DEFAULT_PASSES: usize = 3;
/// Only guards against f32 underflow: `N~` decays like `a^d` and is tiny but
/// meaningful far from matches on textured guides.
pub const DEFAULT_N_FLOOR: f64 = 1e-30;

/// Dense per-pixel displacement `(u, v)` from reference into source, pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    u: FloatMap,
    v: FloatMap,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            u: FloatMap::filled(width, height, u),
            v: FloatMap::filled(width, height, v),
        }
    }

    pub fn from_maps(u: FloatMap, v: FloatMap) -> Result<Self> {
        check_same_dims(u.width(), u.height(), v.width(), v.height())?;
        if !u.data().iter().chain(v.data()).all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("flow values must be finite".into()));
        }
        Ok(Self { u, v })
    }

    pub fn from_fn<F>(width: usize, height: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> (f32, f32) + Sync,
    {
        Self {
            u: FloatMap::from_fn(width, height, |x, y| f(x, y).0),
            v: FloatMap::from_fn(width, height, |x, y| f(x, y).1),
        }
    }

    pub fn width(&self) -> usize {
        self.u.width()
    }

    pub fn height(&self) -> usize {
        self.u.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        (self.u.get(x, y), self.v.get(x, y))
    }

    pub fn u(&self) -> &FloatMap {
        &self.u
    }

    pub fn v(&self) -> &FloatMap {
        &self.v
    }

    /// Mean endpoint error against `other` over pixels where `mask` is set
    /// (all pixels when `mask` is `None`).
    pub fn mean_endpoint_error(&self, other: &FlowField, mask: Option<&Image>) -> Result<f64> {
        check_same_dims(self.width(), self.height(), other.width(), other.height())?;
        if let Some(m) = mask {
            check_same_dims(self.width(), self.height(), m.width(), m.height())?;
        }
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for i in 0..self.u.data().len() {
            if mask.is_some_and(|m| m.data()[i] < 0.5) {
                continue;
            }
            let du = (self.u.data()[i] - other.u.data()[i]) as f64;
            let dv = (self.v.data()[i] - other.v.data()[i]) as f64;
            sum += (du * du + dv * dv).sqrt();
            count += 1;
        }
        Ok(if count == 0 { 0.0 } else { sum / count as f64 })
    }

    /// Overwrites a rectangle with a constant offset added to the flow.
    pub fn perturb_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, du: f32, dv: f32) {
        for y in y0..y1.min(self.height()) {
            for x in x0..x1.min(self.width()) {
                let (u, v) = self.get(x, y);
                self.u.set(x, y, u + du);
                self.v.set(x, y, v + dv);
            }
        }
    }
}

/// Flow induced at every pixel by a homography in normalized coordinates.
pub fn homography_flow(h: &Homography, width: usize, height: usize) -> FlowField {
    FlowField::from_fn(width, height, |x, y| {
        let p = Pt2::new(x as f64, y as f64);
        match h.apply(to_normalized(p, width, height)) {
            Ok(q) => {
                let q = from_normalized(q, width, height);
                let (u, v) = ((q.x - p.x) as f32, (q.y - p.y) as f32);
                if u.is_finite() && v.is_finite() {
                    (u, v)
                } else {
                    (0.0, 0.0)
                }
            }
            Err(_) => (0.0, 0.0),
        }
    })
}

/// Flow splats and the indicator map.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMaps {
    pub pu: FloatMap,
    pub pv: FloatMap,
    pub n: FloatMap,
}

impl SparseMaps {
    pub fn width(&self) -> usize {
        self.n.width()
    }

    pub fn height(&self) -> usize {
        self.n.height()
    }

    /// Number of marked pixels.
    pub fn count(&self) -> usize {
        self.n.data().iter().filter(|&&v| v > 0.0).count()
    }
}

/// Splats match flows at their (rounded) reference pixels. When two matches
/// land on the same pixel the lower SSD wins.
pub fn build_sparse_maps(matches: &[Match], width: usize, height: usize) -> Result<SparseMaps> {
    let mut pu = FloatMap::zeros(width, height);
    let mut pv = FloatMap::zeros(width, height);
    let mut n = FloatMap::zeros(width, height);
    let mut best = vec![f64::INFINITY; width * height];
    for m in matches {
        let (x, y) = (m.ref_pos.x.round(), m.ref_pos.y.round());
        if !(x >= 0.0 && y >= 0.0 && (x as usize) < width && (y as usize) < height) {
            return Err(Error::OutOfBounds(format!(
                "match at ({}, {}) outside {width}x{height}",
                m.ref_pos.x, m.ref_pos.y
            )));
        }
        let (x, y) = (x as usize, y as usize);
        let i = y * width + x;
        if m.score < best[i] {
            best[i] = m.score;
            let (u, v) = m.flow();
            pu.set(x, y, u as f32);
            pv.set(x, y, v as f32);
            n.set(x, y, 1.0);
        }
    }
    Ok(SparseMaps { pu, pv, n })
}

/// Per-pass sigma of the recursive domain-transform filter, `pass` in `0..passes`.
pub fn pass_sigma(sigma_s: f64, passes: usize, pass: usize) -> f64 {
    let n = passes as i32;
    sigma_s * 3f64.sqrt() * 2f64.powi(n - pass as i32 - 1) / (4f64.powi(n) - 1.0).sqrt()
}

/// Guide-derived 1D distances: `dx[y][x]` spans `x-1 -> x`, `dy[y][x]` spans `y-1 -> y`.
struct DomainDistances {
    width: usize,
    height: usize,
    dx: Vec<f32>,
    dy: Vec<f32>,
}

impl DomainDistances {
    fn new(guide: &Image, sigma_s: f64, sigma_r: f64) -> Self {
        let (w, h, ch) = (guide.width(), guide.height(), guide.channels());
        let ratio = (sigma_s / sigma_r) as f32;
        let g = guide.data();
        let mut dx = vec![1.0f32; w * h];
        let mut dy = vec![1.0f32; w * h];
        dx.par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
            for (x, d) in row.iter_mut().enumerate().skip(1) {
                let (a, b) = ((y * w + x - 1) * ch, (y * w + x) * ch);
                let mut s = 0.0f32;
                for c in 0..ch {
                    s += (g[b + c] - g[a + c]).abs();
                }
                *d = 1.0 + ratio * s;
            }
        });
        dy.par_chunks_mut(w.max(1))
            .enumerate()
            .skip(1)
            .for_each(|(y, row)| {
                for (x, d) in row.iter_mut().enumerate() {
                    let (a, b) = (((y - 1) * w + x) * ch, (y * w + x) * ch);
                    let mut s = 0.0f32;
                    for c in 0..ch {
                        s += (g[b + c] - g[a + c]).abs();
                    }
                    *d = 1.0 + ratio * s;
                }
            });
        Self {
            width: w,
            height: h,
            dx,
            dy,
        }
    }
}

fn feedback(dist: &[f32], sigma: f64) -> Vec<f32> {
    let ln_a = (-(2f64.sqrt()) / sigma) as f32;
    dist.par_iter().map(|&d| (ln_a * d).exp()).collect()
}

fn horizontal_pass(data: &mut [f32], weights: &[f32], w: usize) {
    data.par_chunks_mut(w)
        .zip(weights.par_chunks(w))
        .for_each(|(row, wr)| {
            for x in 1..w {
                row[x] += wr[x] * (row[x - 1] - row[x]);
            }
            for x in (0..w - 1).rev() {
                row[x] += wr[x + 1] * (row[x + 1] - row[x]);
            }
        });
}

fn vertical_pass(data: &mut [f32], weights: &[f32], w: usize, h: usize) {
    for y in 1..h {
        let (prev, cur) = data[(y - 1) * w..(y + 1) * w].split_at_mut(w);
        let wr = &weights[y * w..(y + 1) * w];
        for x in 0..w {
            cur[x] += wr[x] * (prev[x] - cur[x]);
        }
    }
    for y in (0..h.saturating_sub(1)).rev() {
        let (cur, next) = data[y * w..(y + 2) * w].split_at_mut(w);
        let wr = &weights[(y + 1) * w..(y + 2) * w];
        for x in 0..w {
            cur[x] += wr[x] * (next[x] - cur[x]);
        }
    }
}

fn check_filter_args(guide: &Image, map: &FloatMap, sigma_s: f64, sigma_r: f64, passes: usize) -> Result<()> {
    check_same_dims(guide.width(), guide.height(), map.width(), map.height())?;
    if !(sigma_s > 0.0 && sigma_r > 0.0) {
        return Err(Error::InvalidParameter("sigma_s and sigma_r must be > 0".into()));
    }
    if passes == 0 {
        return Err(Error::InvalidParameter("passes must be >= 1".into()));
    }
    Ok(())
}

/// Filters every map in `maps` with the same guide and parameters.
pub fn dt_filter_many(
    guide: &Image,
    maps: &[&FloatMap],
    sigma_s: f64,
    sigma_r: f64,
    passes: usize,
) -> Result<Vec<FloatMap>> {
    for m in maps {
        check_filter_args(guide, m, sigma_s, sigma_r, passes)?;
    }
    let mut out: Vec<FloatMap> = maps.iter().map(|m| (*m).clone()).collect();
    if guide.width() == 0 || guide.height() == 0 {
        return Ok(out);
    }
    let dist = DomainDistances::new(guide, sigma_s, sigma_r);
    let (w, h) = (dist.width, dist.height);
    for pass in 0..passes {
        let sigma = pass_sigma(sigma_s, passes, pass);
        let wx = feedback(&dist.dx, sigma);
        for m in out.iter_mut() {
            horizontal_pass(m.data_mut(), &wx, w);
        }
        drop(wx);
        let wy = feedback(&dist.dy, sigma);
        out.par_iter_mut()
            .for_each(|m| vertical_pass(m.data_mut(), &wy, w, h));
    }
    Ok(out)
}

/// Edge-aware recursive filter of `map` guided by `guide` (1 or 3 channels).
pub fn dt_filter(
    guide: &Image,
    map: &FloatMap,
    sigma_s: f64,
    sigma_r: f64,
    passes: usize,
) -> Result<FloatMap> {
    Ok(dt_filter_many(guide, &[map], sigma_s, sigma_r, passes)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyParams {
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub passes: usize,
    /// Filtered indicator values at or below this use the fallback flow.
    pub n_floor: f64,
}

impl Default for DensifyParams {
    fn default() -> Self {
        Self {
            sigma_s: DEFAULT_SIGMA_S,
            sigma_r: DEFAULT_SIGMA_R,
            passes: DEFAULT_PASSES,
            n_floor: DEFAULT_N_FLOOR,
        }
    }
}

/// Dense flow `P~_f / N~`; pixels with too little support take the flow
/// induced by `fallback` (identity when `None`).
pub fn densify_flow(
    guide: &Image,
    maps: &SparseMaps,
    params: &DensifyParams,
    fallback: Option<&Homography>,
) -> Result<FlowField> {
    let (w, h) = (maps.width(), maps.height());
    check_same_dims(guide.width(), guide.height(), w, h)?;
    let fb = fallback.copied().unwrap_or_else(Homography::identity);
    if maps.count() == 0 {
        return Ok(homography_flow(&fb, w, h));
    }
    let filtered = dt_filter_many(
        guide,
        &[&maps.pu, &maps.pv, &maps.n],
        params.sigma_s,
        params.sigma_r,
        params.passes,
    )?;
    let (fu, fv, fnorm) = (&filtered[0], &filtered[1], &filtered[2]);
    let floor = params.n_floor as f32;
    let fallback_flow = homography_flow(&fb, w, h);
    Ok(FlowField::from_fn(w, h, |x, y| {
        let n = fnorm.get(x, y);
        if n > floor {
            let u = fu.get(x, y) / n;
            let v = fv.get(x, y) / n;
            if u.is_finite() && v.is_finite() {
                return (u, v);
            }
        }
        fallback_flow.get(x, y)
    }))
}
