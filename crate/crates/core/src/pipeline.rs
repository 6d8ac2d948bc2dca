//! End-to-end registration and fusion of a two-image stack.
//!
//! Every stage is a plain function so the CLI can run them one at a time
//! from files; [`run_hdr`] chains them in memory. The warped source is
//! quantized to 8 bits exactly as a PNG dump would store it, so both routes
//! produce the same composite.

use std::fmt::Write as _;

use crate::densify::{build_sparse_maps, densify_flow, homography_flow, DensifyParams, FlowField};
use crate::error::{Error, Result};
use crate::fusion::{fuse, ssim_map_with, SsimWindow};
use crate::geometry::Homography;
use crate::histogram::match_histogram;
use crate::image::{check_same_dims, luminance, luminance_or_copy, FloatMap, Image};
use crate::matcher::{
    finest_homography, pyramidal_match_raw, weed_matches, CornerParams, LevelWeeding, Match, MatchParams,
    PyramidMatches, RawMatches, DEFAULT_PATCH, DEFAULT_RADIUS, DEFAULT_THRESHOLD, DEFAULT_TILE,
    QUADRANT_HALF,
};
use crate::metering::choose_reference;
use crate::pyramid::{build_pyramid_with, MAX_LEVELS, MIN_LEVEL_DIM};
use crate::warp::{warp, Warped};

/// All tunable parameters of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub tile: usize,
    pub threshold: f64,
    pub quadrant_half: usize,
    pub radius: usize,
    pub patch: usize,
    pub levels: usize,
    pub delta: Option<usize>,
    pub eps_pixels: f64,
    pub iterations: usize,
    pub iterations_coarse: usize,
    pub streams: usize,
    pub seed: u64,
    pub sigma_s: f64,
    pub sigma_r: f64,
    pub passes: usize,
    pub n_floor: f64,
    pub ssim_sigma: f64,
    pub ssim_radius: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let weeding = LevelWeeding::default();
        let densify = DensifyParams::default();
        let ssim = SsimWindow::default();
        Self {
            tile: DEFAULT_TILE,
            threshold: DEFAULT_THRESHOLD,
            quadrant_half: QUADRANT_HALF,
            radius: DEFAULT_RADIUS,
            patch: DEFAULT_PATCH,
            levels: MAX_LEVELS,
            delta: weeding.delta,
            eps_pixels: weeding.eps_pixels,
            iterations: weeding.iterations_fine,
            iterations_coarse: weeding.iterations_coarse,
            streams: weeding.streams,
            seed: 0,
            sigma_s: densify.sigma_s,
            sigma_r: densify.sigma_r,
            passes: densify.passes,
            n_floor: densify.n_floor,
            ssim_sigma: ssim.sigma,
            ssim_radius: ssim.radius,
        }
    }
}

/// Keys accepted by [`PipelineConfig::set`].
pub const CONFIG_KEYS: [&str; 18] = [
    "tile",
    "threshold",
    "quadrant_half",
    "radius",
    "patch",
    "levels",
    "delta",
    "eps",
    "iterations",
    "iterations_coarse",
    "streams",
    "seed",
    "sigma_s",
    "sigma_r",
    "passes",
    "n_floor",
    "ssim_sigma",
    "ssim_radius",
];

/// Parses a float, also accepting a `num/den` fraction such as `4/255`.
fn parse_real(key: &str, value: &str) -> Result<f64> {
    let bad = || Error::InvalidParameter(format!("{key}: cannot parse '{value}'"));
    let v = match value.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            n / d
        }
        None => value.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse '{value}'")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "tile" => self.tile = parse_int(key, value)?,
            "threshold" => self.threshold = parse_real(key, value)?,
            "quadrant_half" => self.quadrant_half = parse_int(key, value)?,
            "radius" => self.radius = parse_int(key, value)?,
            "patch" => self.patch = parse_int(key, value)?,
            "levels" => self.levels = parse_int(key, value)?,
            "delta" => {
                self.delta = match value {
                    "auto" => None,
                    v => Some(parse_int(key, v)?),
                }
            }
            "eps" => self.eps_pixels = parse_real(key, value)?,
            "iterations" => self.iterations = parse_int(key, value)?,
            "iterations_coarse" => self.iterations_coarse = parse_int(key, value)?,
            "streams" => self.streams = parse_int(key, value)?,
            "seed" => self.seed = parse_int(key, value)?,
            "sigma_s" => self.sigma_s = parse_real(key, value)?,
            "sigma_r" => self.sigma_r = parse_real(key, value)?,
            "passes" => self.passes = parse_int(key, value)?,
            "n_floor" => self.n_floor = parse_real(key, value)?,
            "ssim_sigma" => self.ssim_sigma = parse_real(key, value)?,
            "ssim_radius" => self.ssim_radius = parse_int(key, value)?,
            other => return Err(Error::InvalidParameter(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Serializes every key; [`PipelineConfig::from_text`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let delta = self.delta.map_or("auto".to_string(), |d| d.to_string());
        for (k, v) in [
            ("tile", self.tile.to_string()),
            ("threshold", self.threshold.to_string()),
            ("quadrant_half", self.quadrant_half.to_string()),
            ("radius", self.radius.to_string()),
            ("patch", self.patch.to_string()),
            ("levels", self.levels.to_string()),
            ("delta", delta),
            ("eps", self.eps_pixels.to_string()),
            ("iterations", self.iterations.to_string()),
            ("iterations_coarse", self.iterations_coarse.to_string()),
            ("streams", self.streams.to_string()),
            ("seed", self.seed.to_string()),
            ("sigma_s", self.sigma_s.to_string()),
            ("sigma_r", self.sigma_r.to_string()),
            ("passes", self.passes.to_string()),
            ("n_floor", self.n_floor.to_string()),
            ("ssim_sigma", self.ssim_sigma.to_string()),
            ("ssim_radius", self.ssim_radius.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(msg.to_string()))
            }
        };
        check(self.tile >= 16, "tile must be >= 16")?;
        check(
            self.threshold > 0.0 && self.threshold < 1.0,
            "threshold must be in (0, 1)",
        )?;
        check(
            self.quadrant_half >= 1 && self.quadrant_half <= 32,
            "quadrant_half must be in 1..=32",
        )?;
        check(self.radius <= 64, "radius must be <= 64")?;
        check(
            self.patch % 2 == 1 && self.patch <= 63,
            "patch must be odd and <= 63",
        )?;
        check((1..=MAX_LEVELS).contains(&self.levels), "levels must be in 1..=5")?;
        check(self.delta.is_none_or(|d| d >= 4), "delta must be >= 4")?;
        check(self.eps_pixels > 0.0, "eps must be > 0")?;
        check(
            self.iterations >= 1 && self.iterations_coarse >= 1,
            "iterations must be >= 1",
        )?;
        check(self.streams >= 1, "streams must be >= 1")?;
        check(
            self.sigma_s > 0.0 && self.sigma_r > 0.0,
            "sigma_s and sigma_r must be > 0",
        )?;
        check((1..=16).contains(&self.passes), "passes must be in 1..=16")?;
        check(self.n_floor >= 0.0, "n_floor must be >= 0")?;
        check(
            self.ssim_sigma > 0.0 && self.ssim_radius >= 1,
            "ssim window must be positive",
        )?;
        Ok(())
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            corners: CornerParams {
                tile: self.tile,
                threshold: self.threshold,
                half: self.quadrant_half,
                margin: self.patch / 2,
            },
            patch: self.patch,
            radius: self.radius,
            weeding: LevelWeeding {
                iterations_fine: self.iterations,
                iterations_coarse: self.iterations_coarse,
                streams: self.streams,
                eps_pixels: self.eps_pixels,
                delta: self.delta,
            },
            seed: self.seed,
        }
    }

    pub fn densify_params(&self) -> DensifyParams {
        DensifyParams {
            sigma_s: self.sigma_s,
            sigma_r: self.sigma_r,
            passes: self.passes,
            n_floor: self.n_floor,
        }
    }

    pub fn ssim_window(&self) -> SsimWindow {
        SsimWindow {
            sigma: self.ssim_sigma,
            radius: self.ssim_radius,
        }
    }
}

/// Images ordered as reference and source, with the luminance planes used
/// for matching: the reference luminance and the source luminance matched to it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub reference_index: usize,
    pub reference: Image,
    pub source: Image,
    pub ref_lum: Image,
    pub src_lum: Image,
}

impl Prepared {
    pub fn width(&self) -> usize {
        self.reference.width()
    }

    pub fn height(&self) -> usize {
        self.reference.height()
    }
}

/// Picks the darker exposure as reference and builds the matching planes.
pub fn prepare(images: [&Image; 2], exposures: [f64; 2]) -> Result<Prepared> {
    let [a, b] = images;
    check_same_dims(a.width(), a.height(), b.width(), b.height())?;
    if a.channels() != b.channels() {
        return Err(Error::ChannelCount {
            expected: a.channels(),
            got: b.channels(),
        });
    }
    if a.width().min(a.height()) < MIN_LEVEL_DIM {
        return Err(Error::TooSmall {
            width: a.width(),
            height: a.height(),
            min: MIN_LEVEL_DIM,
        });
    }
    let reference_index = choose_reference(&[a, b], &exposures)?;
    let (reference, source) = if reference_index == 0 { (a, b) } else { (b, a) };
    let ref_lum = luminance_or_copy(reference);
    let src_lum = match_histogram(&luminance_or_copy(source), &ref_lum)?;
    Ok(Prepared {
        reference_index,
        reference: reference.clone(),
        source: source.clone(),
        ref_lum,
        src_lum,
    })
}

/// Coarse-to-fine matching; returns the unweeded level-0 matches.
pub fn match_stage(p: &Prepared, cfg: &PipelineConfig) -> Result<RawMatches> {
    let rp = build_pyramid_with(&p.ref_lum, cfg.levels)?;
    let sp = build_pyramid_with(&p.src_lum, cfg.levels)?;
    pyramidal_match_raw(&rp, &sp, &cfg.match_params())
}

/// Level-0 weeding plus the homography through the survivors.
pub fn weed_stage(
    width: usize,
    height: usize,
    raw: &[Match],
    seed_homography: &Homography,
    cfg: &PipelineConfig,
) -> Result<PyramidMatches> {
    let kept = weed_matches(raw, width, height, 0, &cfg.match_params())?;
    finest_homography(kept, width, height, *seed_homography)
}

/// Dense flow from the reliable matches, falling back to `fallback`.
pub fn flow_stage(
    p: &Prepared,
    kept: &[Match],
    fallback: &Homography,
    cfg: &PipelineConfig,
) -> Result<FlowField> {
    let maps = build_sparse_maps(kept, p.width(), p.height())?;
    densify_flow(&p.ref_lum, &maps, &cfg.densify_params(), Some(fallback))
}

/// Flow of the single global homography, for comparison.
pub fn baseline_flow(p: &Prepared, h: &Homography) -> FlowField {
    homography_flow(h, p.width(), p.height())
}

/// Backward warp of the source, quantized to 8-bit levels.
pub fn warp_stage(p: &Prepared, flow: &FlowField) -> Result<Warped> {
    let w = warp(&p.source, flow)?;
    Ok(Warped {
        image: w.image.quantize8(),
        valid: w.valid,
    })
}

/// SSIM between the reference luminance and the warped source
/// luminance matched to it.
pub fn registration_ssim(p: &Prepared, warped: &Image, cfg: &PipelineConfig) -> Result<FloatMap> {
    let wl = if warped.channels() == 3 {
        luminance(warped)?
    } else {
        warped.clone()
    };
    let wl = match_histogram(&wl, &p.ref_lum)?;
    ssim_map_with(&p.ref_lum, &wl, cfg.ssim_window())
}

pub fn fuse_stage(p: &Prepared, warped: &Warped, cfg: &PipelineConfig) -> Result<(Image, FloatMap)> {
    let ssim = registration_ssim(p, &warped.image, cfg)?;
    let out = fuse(&p.reference, &warped.image, &ssim, &warped.valid)?;
    Ok((out, ssim))
}

/// Everything [`run_hdr`] computes.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub prepared: Prepared,
    pub raw: RawMatches,
    pub reliable: PyramidMatches,
    pub flow: FlowField,
    pub warped: Warped,
    pub ssim: FloatMap,
    pub composite: Image,
}

pub fn run_hdr(images: [&Image; 2], exposures: [f64; 2], cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let prepared = prepare(images, exposures)?;
    let raw = match_stage(&prepared, cfg)?;
    let reliable = weed_stage(
        prepared.width(),
        prepared.height(),
        &raw.matches,
        &raw.seed_homography,
        cfg,
    )?;
    let flow = flow_stage(&prepared, &reliable.matches, &reliable.homography, cfg)?;
    let warped = warp_stage(&prepared, &flow)?;
    let (composite, ssim) = fuse_stage(&prepared, &warped, cfg)?;
    Ok(RunOutput {
        prepared,
        raw,
        reliable,
        flow,
        warped,
        ssim,
        composite,
    })
}
