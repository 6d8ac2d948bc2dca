use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Parses `a,b` into two finite numbers.
pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected 'a,b', got '{s}'"))?;
    let num = |t: &str| {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("'{t}' is not a finite number"))
    };
    Ok((num(a)?, num(b)?))
}

#[derive(Parser, Debug)]
#[command(name = "hdr", version, about = "Two-exposure HDR registration and fusion")]
pub struct Cli {
    /// Worker threads; falls back to HDR_WORKERS, then to all cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Register and fuse a stack end to end.
    Run {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        params: Params,
        /// Composite output.
        #[arg(long, short, default_value = "composite.png")]
        out: PathBuf,
        /// Also write every intermediate into this directory.
        #[arg(long, value_name = "DIR")]
        dump_all: Option<PathBuf>,
    },
    /// Render a synthetic stack with ground-truth flow.
    Synth(SynthArgs),
    /// Match corners coarse to fine; writes matches_raw.csv and seed_homography.txt.
    Match(StageArgs),
    /// Weed the raw matches; writes matches.csv and homography.txt.
    Weed(StageArgs),
    /// Densify the reliable matches; writes flow.pfm and flow.png.
    Flow(StageArgs),
    /// Warp the source with flow.pfm; writes warped.png and valid.png.
    Warp(StageArgs),
    /// Fuse the reference with the warped source; writes composite.png and ssim.pfm.
    Fuse(StageArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Inputs {
    /// The two exposures as PNG files.
    #[arg(value_name = "PNG", num_args = 2, required_unless_present = "stack")]
    pub images: Vec<PathBuf>,
    /// Exposure times in seconds as `t1,t2`, one per image.
    #[arg(long, value_parser = parse_pair, required_unless_present = "stack")]
    pub times: Option<(f64, f64)>,
    /// File of `path seconds` lines, used instead of images and --times.
    #[arg(long, conflicts_with_all = ["images", "times"])]
    pub stack: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct StageArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[command(flatten)]
    pub params: Params,
    /// Directory holding the previous stage's files and receiving this stage's.
    #[arg(long, default_value = ".")]
    pub dir: PathBuf,
}

/// Pipeline parameters. Values are strings so fractions such as `4/255`
/// and `delta = auto` work the same as in a config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Params {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tile size in pixels.
    #[arg(long)]
    pub tile: Option<String>,
    /// Cornerness activity threshold on [0, 1] luminance.
    #[arg(long)]
    pub threshold: Option<String>,
    /// Quadrant half-size in pixels.
    #[arg(long)]
    pub quadrant_half: Option<String>,
    /// SSD search radius per level.
    #[arg(long)]
    pub radius: Option<String>,
    /// SSD patch size (odd).
    #[arg(long)]
    pub patch: Option<String>,
    /// Maximum pyramid levels.
    #[arg(long)]
    pub levels: Option<String>,
    /// Minimum inlier count, or `auto`.
    #[arg(long)]
    pub delta: Option<String>,
    /// Inlier distance in pixels.
    #[arg(long)]
    pub eps: Option<String>,
    /// Weeding iterations at the finest level.
    #[arg(long)]
    pub iterations: Option<String>,
    /// Weeding iterations at coarser levels.
    #[arg(long)]
    pub iterations_coarse: Option<String>,
    /// Number of weeding RNG streams.
    #[arg(long)]
    pub streams: Option<String>,
    /// RNG seed.
    #[arg(long)]
    pub seed: Option<String>,
    /// Spatial sigma of the flow filter, pixels.
    #[arg(long)]
    pub sigma_s: Option<String>,
    /// Range sigma of the flow filter.
    #[arg(long)]
    pub sigma_r: Option<String>,
    /// Flow filter passes.
    #[arg(long)]
    pub passes: Option<String>,
    /// Filtered support below which the global homography flow is used.
    #[arg(long)]
    pub n_floor: Option<String>,
    /// SSIM Gaussian sigma.
    #[arg(long)]
    pub ssim_sigma: Option<String>,
    /// SSIM window radius.
    #[arg(long)]
    pub ssim_radius: Option<String>,
}

impl Params {
    pub fn overrides(&self) -> [(&'static str, Option<&String>); 18] {
        [
            ("tile", self.tile.as_ref()),
            ("threshold", self.threshold.as_ref()),
            ("quadrant_half", self.quadrant_half.as_ref()),
            ("radius", self.radius.as_ref()),
            ("patch", self.patch.as_ref()),
            ("levels", self.levels.as_ref()),
            ("delta", self.delta.as_ref()),
            ("eps", self.eps.as_ref()),
            ("iterations", self.iterations.as_ref()),
            ("iterations_coarse", self.iterations_coarse.as_ref()),
            ("streams", self.streams.as_ref()),
            ("seed", self.seed.as_ref()),
            ("sigma_s", self.sigma_s.as_ref()),
            ("sigma_r", self.sigma_r.as_ref()),
            ("passes", self.passes.as_ref()),
            ("n_floor", self.n_floor.as_ref()),
            ("ssim_sigma", self.ssim_sigma.as_ref()),
            ("ssim_radius", self.ssim_radius.as_ref()),
        ]
    }
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    /// Output directory for reference.png, source.png, flow_gt.pfm and stack.txt.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 480)]
    pub height: usize,
    /// Background translation `tx,ty` in pixels.
    #[arg(long, value_parser = parse_pair, default_value = "0,0")]
    pub motion: (f64, f64),
    /// Extra foreground translation `px,py`; adds a foreground plane.
    #[arg(long, value_parser = parse_pair)]
    pub parallax: Option<(f64, f64)>,
    /// Exposure gap between the two images.
    #[arg(long, default_value_t = 2.0)]
    pub stops: f64,
    /// Gaussian noise sigma on [0, 1] values.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Radiance gain of the brighter image; above 1 saturates.
    #[arg(long, default_value_t = 1.0)]
    pub brightness: f64,
    /// Texture feature size in pixels.
    #[arg(long, default_value_t = 12.0)]
    pub texture_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
