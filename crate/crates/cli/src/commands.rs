use std::fs;
use std::path::{Path, PathBuf};

use hdr_core::densify::FlowField;
use hdr_core::image::{FloatMap, Image};
use hdr_core::io::{
    load_png, read_exposures, read_flow_pfm, read_homography, read_matches, save_png, write_exposures,
    write_flow_pfm, write_homography, write_map_pfm, write_matches,
};
use hdr_core::pipeline::{
    flow_stage, fuse_stage, match_stage, prepare, run_hdr, warp_stage, weed_stage, PipelineConfig, Prepared,
};
use hdr_core::synth::{parallax_scene, synth_stack, Motion, SceneSpec};
use hdr_core::viz::{flow_to_color, heatmap, match_overlay};
use hdr_core::warp::Warped;
use hdr_core::{Error, Result};

use crate::args::{Inputs, Params, StageArgs, SynthArgs};

pub const RAW_MATCHES: &str = "matches_raw.csv";
pub const SEED_HOMOGRAPHY: &str = "seed_homography.txt";
pub const MATCHES: &str = "matches.csv";
pub const HOMOGRAPHY: &str = "homography.txt";
pub const FLOW: &str = "flow.pfm";
pub const FLOW_COLOR: &str = "flow.png";
pub const OVERLAY: &str = "matches.png";
pub const WARPED: &str = "warped.png";
pub const VALID: &str = "valid.png";
pub const SSIM: &str = "ssim.pfm";
pub const SSIM_IMAGE: &str = "ssim.png";
pub const COMPOSITE: &str = "composite.png";
pub const CONFIG: &str = "config.txt";

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn build_config(params: &Params) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &params.config {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        cfg.apply_text(&text)?;
    }
    for (key, value) in params.overrides() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_pair(inputs: &Inputs) -> Result<([Image; 2], [f64; 2])> {
    let entries: Vec<(PathBuf, f64)> = match &inputs.stack {
        Some(stack) => read_exposures(stack)?,
        None => {
            let (t0, t1) = inputs.times.unwrap_or_default();
            inputs.images.iter().cloned().zip([t0, t1]).collect()
        }
    };
    if entries.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "exactly two exposures required, got {}",
            entries.len()
        )));
    }
    let a = load_png(&entries[0].0)?;
    let b = load_png(&entries[1].0)?;
    Ok(([a, b], [entries[0].1, entries[1].1]))
}

fn load_inputs(inputs: &Inputs) -> Result<Prepared> {
    let ([a, b], times) = load_pair(inputs)?;
    prepare([&a, &b], times)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

fn write_flow(dir: &Path, flow: &FlowField) -> Result<()> {
    write_flow_pfm(&dir.join(FLOW), flow)?;
    save_png(&dir.join(FLOW_COLOR), &flow_to_color(flow, None))
}

fn write_warped(dir: &Path, warped: &Warped) -> Result<()> {
    save_png(&dir.join(WARPED), &warped.image)?;
    save_png(&dir.join(VALID), &warped.valid)
}

fn write_fused(dir: &Path, composite: &Image, ssim: &FloatMap) -> Result<()> {
    write_map_pfm(&dir.join(SSIM), ssim)?;
    save_png(&dir.join(SSIM_IMAGE), &heatmap(ssim, 0.0, 1.0))?;
    save_png(&dir.join(COMPOSITE), composite)
}

pub fn run(inputs: &Inputs, params: &Params, out: &Path, dump: Option<&Path>) -> Result<()> {
    let cfg = build_config(params)?;
    let ([a, b], times) = load_pair(inputs)?;
    let r = run_hdr([&a, &b], times, &cfg)?;
    let p = &r.prepared;
    eprintln!(
        "matches: {} raw, {} reliable",
        r.raw.matches.len(),
        r.reliable.matches.len()
    );
    if let Some(dir) = dump {
        ensure_dir(dir)?;
        fs::write(dir.join(CONFIG), cfg.to_text()).map_err(io_error(&dir.join(CONFIG)))?;
        write_matches(&dir.join(RAW_MATCHES), &r.raw.matches)?;
        write_homography(&dir.join(SEED_HOMOGRAPHY), &r.raw.seed_homography)?;
        write_matches(&dir.join(MATCHES), &r.reliable.matches)?;
        write_homography(&dir.join(HOMOGRAPHY), &r.reliable.homography)?;
        save_png(
            &dir.join(OVERLAY),
            &match_overlay(&p.reference, &r.reliable.matches),
        )?;
        write_flow(dir, &r.flow)?;
        write_warped(dir, &r.warped)?;
        write_fused(dir, &r.composite, &r.ssim)?;
    }
    if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_png(out, &r.composite)
}

pub fn stage_match(a: &StageArgs) -> Result<()> {
    let cfg = build_config(&a.params)?;
    let p = load_inputs(&a.inputs)?;
    let raw = match_stage(&p, &cfg)?;
    ensure_dir(&a.dir)?;
    write_matches(&a.dir.join(RAW_MATCHES), &raw.matches)?;
    write_homography(&a.dir.join(SEED_HOMOGRAPHY), &raw.seed_homography)?;
    eprintln!("matches: {} raw", raw.matches.len());
    Ok(())
}

pub fn stage_weed(a: &StageArgs) -> Result<()> {
    let cfg = build_config(&a.params)?;
    let p = load_inputs(&a.inputs)?;
    let raw = read_matches(&a.dir.join(RAW_MATCHES))?;
    let seed_h = read_homography(&a.dir.join(SEED_HOMOGRAPHY))?;
    let reliable = weed_stage(p.width(), p.height(), &raw, &seed_h, &cfg)?;
    write_matches(&a.dir.join(MATCHES), &reliable.matches)?;
    write_homography(&a.dir.join(HOMOGRAPHY), &reliable.homography)?;
    save_png(
        &a.dir.join(OVERLAY),
        &match_overlay(&p.reference, &reliable.matches),
    )?;
    eprintln!("matches: {} reliable of {}", reliable.matches.len(), raw.len());
    Ok(())
}

pub fn stage_flow(a: &StageArgs) -> Result<()> {
    let cfg = build_config(&a.params)?;
    let p = load_inputs(&a.inputs)?;
    let kept = read_matches(&a.dir.join(MATCHES))?;
    let h = read_homography(&a.dir.join(HOMOGRAPHY))?;
    let flow = flow_stage(&p, &kept, &h, &cfg)?;
    write_flow(&a.dir, &flow)
}

pub fn stage_warp(a: &StageArgs) -> Result<()> {
    build_config(&a.params)?;
    let p = load_inputs(&a.inputs)?;
    let flow = read_flow_pfm(&a.dir.join(FLOW))?;
    let warped = warp_stage(&p, &flow)?;
    write_warped(&a.dir, &warped)
}

pub fn stage_fuse(a: &StageArgs) -> Result<()> {
    let cfg = build_config(&a.params)?;
    let p = load_inputs(&a.inputs)?;
    let warped = Warped {
        image: load_png(&a.dir.join(WARPED))?,
        valid: load_png(&a.dir.join(VALID))?,
    };
    let (composite, ssim) = fuse_stage(&p, &warped, &cfg)?;
    write_fused(&a.dir, &composite, &ssim)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let bg = a.motion;
    let base = match a.parallax {
        Some(px) => parallax_scene(a.width, a.height, bg, px),
        None => SceneSpec {
            background: Motion::Translation(bg.0, bg.1),
            ..SceneSpec::new(a.width, a.height)
        },
    };
    let spec = SceneSpec {
        stops: a.stops,
        noise_sigma: a.noise,
        brightness: a.brightness,
        texture_scale: a.texture_scale,
        quantize: true,
        ..base
    };
    let s = synth_stack(&spec, a.seed)?;
    ensure_dir(&a.out_dir)?;
    save_png(&a.out_dir.join("reference.png"), &s.reference)?;
    save_png(&a.out_dir.join("source.png"), &s.source)?;
    write_flow_pfm(&a.out_dir.join("flow_gt.pfm"), &s.flow)?;
    write_exposures(
        &a.out_dir.join("stack.txt"),
        &[
            (PathBuf::from("reference.png"), s.exposures[0]),
            (PathBuf::from("source.png"), s.exposures[1]),
        ],
    )
}
