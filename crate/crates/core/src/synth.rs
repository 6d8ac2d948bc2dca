//! Synthetic two-exposure stacks with known flow.
//!
//! The scene is a textured background plane and an optional rectangular
//! foreground plane. Each plane moves by its own pixel-space transform
//! between the reference and the source, so a foreground with a different
//! translation gives parallax. The reference is the darker exposure.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::densify::FlowField;
use crate::error::{Error, Result};
use crate::image::Image;

/// Pixel-space motion from reference to source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Translation(f64, f64),
    Projective(Matrix3<f64>),
}

impl Motion {
    pub fn identity() -> Self {
        Motion::Translation(0.0, 0.0)
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Motion::Translation(tx, ty) => (x + tx, y + ty),
            Motion::Projective(m) => {
                let q = m * Vector3::new(x, y, 1.0);
                (q.x / q.z, q.y / q.z)
            }
        }
    }

    fn inverse(&self) -> Result<Motion> {
        match self {
            Motion::Translation(tx, ty) => Ok(Motion::Translation(-tx, -ty)),
            Motion::Projective(m) => {
                if !m.iter().all(|v| v.is_finite()) || m.determinant().abs() < 1e-12 {
                    return Err(Error::InvalidParameter("motion matrix not invertible".into()));
                }
                m.try_inverse()
                    .map(Motion::Projective)
                    .ok_or_else(|| Error::InvalidParameter("motion matrix not invertible".into()))
            }
        }
    }
}

/// Axis-aligned foreground rectangle `[x0, x1) x [y0, y1)` in reference pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Foreground {
    pub rect: (usize, usize, usize, usize),
    pub motion: Motion,
    /// Radiance range `(lo, hi)` the texture is mapped into.
    pub range: (f32, f32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Dominant texture feature size in pixels.
    pub texture_scale: f64,
    pub background: Motion,
    /// Background radiance range `(lo, hi)`.
    pub background_range: (f32, f32),
    pub foreground: Option<Foreground>,
    /// Source exposure is `2^stops` times the reference exposure.
    pub stops: f64,
    /// Radiance gain of the source exposure; values above 1 saturate.
    pub brightness: f64,
    pub noise_sigma: f64,
    /// Round both exposures to 8-bit levels.
    pub quantize: bool,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            texture_scale: 12.0,
            background: Motion::identity(),
            background_range: (0.0, 0.8),
            foreground: None,
            stops: 0.0,
            brightness: 1.0,
            noise_sigma: 0.0,
            quantize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("scene must be non-empty");
        }
        if !(self.texture_scale.is_finite() && self.texture_scale >= 1.0) {
            return bad("texture_scale must be >= 1");
        }
        if !(self.stops.is_finite() && self.stops >= 0.0) {
            return bad("stops must be >= 0");
        }
        if !(self.brightness.is_finite() && self.brightness > 0.0) {
            return bad("brightness must be > 0");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        let range_ok =
            |(lo, hi): (f32, f32)| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi;
        if !range_ok(self.background_range) {
            return bad("background range must satisfy 0 <= lo <= hi <= 1");
        }
        self.background.inverse()?;
        if let Some(fg) = &self.foreground {
            let (x0, y0, x1, y1) = fg.rect;
            if !(x0 < x1 && y0 < y1 && x1 <= self.width && y1 <= self.height) {
                return bad("foreground rectangle must be non-empty and inside the scene");
            }
            if !range_ok(fg.range) {
                return bad("foreground range must satisfy 0 <= lo <= hi <= 1");
            }
            fg.motion.inverse()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthStack {
    pub reference: Image,
    pub source: Image,
    /// Ground-truth reference-to-source flow.
    pub flow: FlowField,
    /// Exposure times in seconds, reference first.
    pub exposures: [f64; 2],
}

/// Reference exposure time reported for synthetic stacks.
pub const BASE_EXPOSURE: f64 = 0.01;

fn hash(ix: i64, iy: i64, salt: u64) -> f32 {
    let mut z = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 40) as f32 / (1u64 << 24) as f32
}

fn value_noise(x: f64, y: f64, scale: f64, salt: u64) -> f32 {
    let (gx, gy) = (x / scale, y / scale);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = ((gx - ix) as f32, (gy - iy) as f32);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (ix as i64, iy as i64);
    let a = hash(ix, iy, salt);
    let b = hash(ix + 1, iy, salt);
    let c = hash(ix, iy + 1, salt);
    let d = hash(ix + 1, iy + 1, salt);
    let top = a + sx * (b - a);
    let bot = c + sx * (d - c);
    top + sy * (bot - top)
}

fn noise_level(x: f64, y: f64, scale: f64, salt: u64) -> f32 {
    let l = 0.5 * value_noise(x, y, scale, salt)
        + 0.3 * value_noise(x, y, scale * 0.5, salt ^ 1)
        + 0.2 * value_noise(x, y, scale * 3.0, salt ^ 2);
    ((l - 0.5) * 2.0 + 0.5).clamp(0.0, 1.0)
}

/// Plane radiance in `[0, 1]` at a continuous position.
fn texture(x: f64, y: f64, scale: f64, salt: u64) -> [f32; 3] {
    let l = noise_level(x, y, scale, salt);
    let mut out = [0.0f32; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let tint = 0.7 + 0.3 * value_noise(x, y, scale * 4.0, salt ^ (10 + c as u64));
        *o = l * tint;
    }
    out
}

struct Scene {
    spec: SceneSpec,
    bg_salt: u64,
    fg_salt: u64,
    bg_inv: Motion,
    fg_inv: Option<Motion>,
}

impl Scene {
    fn in_rect(&self, x: f64, y: f64) -> bool {
        self.spec.foreground.is_some_and(|fg| {
            let (x0, y0, x1, y1) = fg.rect;
            x >= x0 as f64 && x < x1 as f64 && y >= y0 as f64 && y < y1 as f64
        })
    }

    fn background(&self, x: f64, y: f64) -> [f32; 3] {
        let (lo, hi) = self.spec.background_range;
        texture(x, y, self.spec.texture_scale, self.bg_salt).map(|v| lo + (hi - lo) * v)
    }

    fn foreground(&self, x: f64, y: f64) -> [f32; 3] {
        let (lo, hi) = self.spec.foreground.map_or((0.0, 1.0), |f| f.range);
        texture(x, y, self.spec.texture_scale, self.fg_salt).map(|v| lo + (hi - lo) * v)
    }

    /// Radiance seen at reference pixel `(x, y)`.
    fn reference_radiance(&self, x: f64, y: f64) -> [f32; 3] {
        if self.in_rect(x, y) {
            self.foreground(x, y)
        } else {
            self.background(x, y)
        }
    }

    /// Radiance seen at source pixel `(x, y)`.
    fn source_radiance(&self, x: f64, y: f64) -> [f32; 3] {
        if let Some(inv) = &self.fg_inv {
            let (px, py) = inv.apply(x, y);
            if self.in_rect(px, py) {
                return self.foreground(px, py);
            }
        }
        let (px, py) = self.bg_inv.apply(x, y);
        self.background(px, py)
    }

    fn flow_at(&self, x: f64, y: f64) -> (f32, f32) {
        let motion = match self.spec.foreground {
            Some(fg) if self.in_rect(x, y) => fg.motion,
            _ => self.spec.background,
        };
        let (qx, qy) = motion.apply(x, y);
        ((qx - x) as f32, (qy - y) as f32)
    }
}

fn render<F>(spec: &SceneSpec, gain: f32, seed: u64, stream: u64, radiance: F) -> Result<Image>
where
    F: Fn(f64, f64) -> [f32; 3] + Sync,
{
    let (w, h) = (spec.width, spec.height);
    let normal =
        Normal::new(0.0f32, spec.noise_sigma as f32).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut data = vec![0.0f32; w * h * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream * h as u64 + y as u64);
        for x in 0..w {
            let r = radiance(x as f64, y as f64);
            for c in 0..3 {
                let mut v = r[c] * gain;
                if spec.noise_sigma > 0.0 {
                    v += normal.sample(&mut rng);
                }
                row[x * 3 + c] = v;
            }
        }
    });
    let img = Image::from_vec_clamped(w, h, 3, data)?;
    Ok(if spec.quantize { img.quantize8() } else { img })
}

/// Renders the stack described by `spec`. Identical inputs give identical output.
pub fn synth_stack(spec: &SceneSpec, seed: u64) -> Result<SynthStack> {
    spec.validate()?;
    let salt = seed.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let scene = Scene {
        spec: *spec,
        bg_salt: salt,
        fg_salt: salt ^ 0xA5A5_A5A5_A5A5_A5A5,
        bg_inv: spec.background.inverse()?,
        fg_inv: spec.foreground.map(|f| f.motion.inverse()).transpose()?,
    };
    let ratio = 2f64.powf(spec.stops);
    let src_gain = spec.brightness as f32;
    let ref_gain = (spec.brightness / ratio) as f32;
    let reference = render(spec, ref_gain, seed, 0, |x, y| scene.reference_radiance(x, y))?;
    let source = render(spec, src_gain, seed, 1, |x, y| scene.source_radiance(x, y))?;
    let flow = FlowField::from_fn(spec.width, spec.height, |x, y| scene.flow_at(x as f64, y as f64));
    Ok(SynthStack {
        reference,
        source,
        flow,
        exposures: [BASE_EXPOSURE, BASE_EXPOSURE * ratio],
    })
}

/// Two-plane scene: background translated by `bg`, a centered foreground
/// occupying about half of each dimension translated by `bg + parallax`.
pub fn parallax_scene(width: usize, height: usize, bg: (f64, f64), parallax: (f64, f64)) -> SceneSpec {
    let (fw, fh) = (width / 2, height * 3 / 5);
    let (x0, y0) = ((width - fw) / 2, (height - fh) / 2);
    SceneSpec {
        background: Motion::Translation(bg.0, bg.1),
        foreground: Some(Foreground {
            rect: (x0, y0, x0 + fw, y0 + fh),
            motion: Motion::Translation(bg.0 + parallax.0, bg.1 + parallax.1),
            range: (0.25, 1.0),
        }),
        ..SceneSpec::new(width, height)
    }
}
