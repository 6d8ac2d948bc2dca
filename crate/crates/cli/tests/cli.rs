use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hdr_core::coords::Pt2;
use hdr_core::densify::FlowField;
use hdr_core::geometry::Homography;
use hdr_core::image::Image;
use hdr_core::io::{load_png, read_flow_pfm, save_png, write_flow_pfm, write_homography, write_matches};
use hdr_core::matcher::Match;

fn hdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdr"))
        .args(args)
        .env_remove("HDR_WORKERS")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out-dir", s(dir), "--width", "320", "--height", "256"];
    args.extend_from_slice(extra);
    let out = hdr(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("stack.txt")
}

fn same_files(a: &Path, b: &Path, names: &[&str]) {
    for n in names {
        let (x, y) = (fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap());
        assert!(x == y, "{n} differs");
    }
}

const STAGE_FILES: [&str; 12] = [
    "matches_raw.csv",
    "seed_homography.txt",
    "matches.csv",
    "homography.txt",
    "matches.png",
    "flow.pfm",
    "flow.png",
    "warped.png",
    "valid.png",
    "ssim.pfm",
    "ssim.png",
    "composite.png",
];

#[test]
fn stages_compose_to_run() {
    let t = tempfile::tempdir().unwrap();
    let stack = synth(
        &t.path().join("in"),
        &[
            "--motion",
            "3,2",
            "--parallax",
            "6,0",
            "--stops",
            "2",
            "--seed",
            "4",
        ],
    );
    let (d1, d2) = (t.path().join("run"), t.path().join("stages"));
    let out = hdr(&[
        "run",
        "--stack",
        s(&stack),
        "--dump-all",
        s(&d1),
        "-o",
        s(&d1.join("final.png")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for stage in ["match", "weed", "flow", "warp", "fuse"] {
        let out = hdr(&[stage, "--stack", s(&stack), "--dir", s(&d2)]);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    same_files(&d1, &d2, &STAGE_FILES);
    assert_eq!(
        fs::read(d1.join("final.png")).unwrap(),
        fs::read(d2.join("composite.png")).unwrap()
    );
}

#[test]
fn outputs_identical_across_worker_counts() {
    let t = tempfile::tempdir().unwrap();
    let stack = synth(
        &t.path().join("in"),
        &["--motion", "2,-1", "--noise", "0.01", "--seed", "9"],
    );
    let mut dirs = Vec::new();
    for w in ["1", "2", "4"] {
        let d = t.path().join(format!("w{w}"));
        let out = hdr(&[
            "--workers",
            w,
            "run",
            "--stack",
            s(&stack),
            "--dump-all",
            s(&d),
            "-o",
            s(&d.join("c.png")),
        ]);
        assert!(out.status.success());
        dirs.push(d);
    }
    let d = t.path().join("env");
    let out = Command::new(env!("CARGO_BIN_EXE_hdr"))
        .args([
            "run",
            "--stack",
            s(&stack),
            "--dump-all",
            s(&d),
            "-o",
            s(&d.join("c.png")),
        ])
        .env("HDR_WORKERS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    dirs.push(d);
    for other in &dirs[1..] {
        same_files(&dirs[0], other, &STAGE_FILES);
    }
}

#[test]
fn positional_inputs_match_stack_file() {
    let t = tempfile::tempdir().unwrap();
    let input = t.path().join("in");
    let stack = synth(&input, &["--motion", "1,1"]);
    let (a, b) = (t.path().join("a.png"), t.path().join("b.png"));
    assert!(hdr(&["run", "--stack", s(&stack), "-o", s(&a)]).status.success());
    let (r, src) = (input.join("reference.png"), input.join("source.png"));
    let out = hdr(&["run", s(&src), s(&r), "--times", "0.04,0.01", "-o", s(&b)]);
    assert!(out.status.success());
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let stack = synth(&t.path().join("in"), &[]);
    let code = |o: Output| o.status.code().unwrap();
    assert_eq!(code(hdr(&["run", "--stack", s(&stack), "--tile", "8"])), 4);
    assert_eq!(code(hdr(&["run", "--stack", s(&stack), "--sigma-r", "zero"])), 4);
    assert_eq!(code(hdr(&["run", "--bogus"])), 4);
    let missing = t.path().join("missing.png");
    assert_eq!(code(hdr(&["run", s(&missing), s(&missing), "--times", "1,2"])), 2);
    assert_eq!(
        code(hdr(&[
            "weed",
            "--stack",
            s(&stack),
            "--dir",
            s(&t.path().join("empty"))
        ])),
        2
    );

    let flat = Image::filled(200, 160, 3, 0.4);
    let (f1, f2) = (t.path().join("f1.png"), t.path().join("f2.png"));
    save_png(&f1, &flat).unwrap();
    save_png(&f2, &flat).unwrap();
    let out = t.path().join("flat.png");
    assert_eq!(
        code(hdr(&[
            "run",
            s(&f1),
            s(&f2),
            "--times",
            "0.01,0.02",
            "-o",
            s(&out)
        ])),
        3
    );

    let bad_env = Command::new(env!("CARGO_BIN_EXE_hdr"))
        .args(["run", "--stack", s(&stack)])
        .env("HDR_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(code(bad_env), 4);
    assert_eq!(code(hdr(&["--help"])), 0);
}

#[test]
fn flags_override_config_file() {
    let t = tempfile::tempdir().unwrap();
    let stack = synth(&t.path().join("in"), &["--motion", "2,0"]);
    let cfg = t.path().join("cfg.txt");
    fs::write(&cfg, "# tuned\ntile = 8\nsigma_r = 0.3\nseed = 11\n").unwrap();
    let d = t.path().join("out");
    let out = hdr(&[
        "run",
        "--stack",
        s(&stack),
        "--config",
        s(&cfg),
        "--tile",
        "48",
        "--dump-all",
        s(&d),
        "-o",
        s(&d.join("c.png")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let written = fs::read_to_string(d.join("config.txt")).unwrap();
    assert!(written.contains("tile = 48"));
    assert!(written.contains("sigma_r = 0.3"));
    assert!(written.contains("seed = 11"));
    let bare = hdr(&[
        "run",
        "--stack",
        s(&stack),
        "--config",
        s(&cfg),
        "-o",
        s(&d.join("x.png")),
    ]);
    assert_eq!(bare.status.code(), Some(4));
}

#[test]
fn flow_stage_on_constant_matches_is_constant() {
    let t = tempfile::tempdir().unwrap();
    let stack = synth(&t.path().join("in"), &[]);
    let d = t.path().join("d");
    fs::create_dir_all(&d).unwrap();
    let matches: Vec<Match> = (0..6)
        .flat_map(|i| (0..5).map(move |j| (20.0 + 50.0 * i as f64, 20.0 + 50.0 * j as f64)))
        .map(|(x, y)| Match::new(Pt2::new(x, y), Pt2::new(x + 5.0, y + 2.0), 1.0))
        .collect();
    write_matches(&d.join("matches.csv"), &matches).unwrap();
    write_homography(&d.join("homography.txt"), &Homography::identity()).unwrap();
    let out = hdr(&["flow", "--stack", s(&stack), "--dir", s(&d)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f = read_flow_pfm(&d.join("flow.pfm")).unwrap();
    assert_eq!((f.width(), f.height()), (320, 256));
    assert!(f.u().data().iter().all(|&u| (u - 5.0).abs() < 1e-3));
    assert!(f.v().data().iter().all(|&v| (v - 2.0).abs() < 1e-3));
}

#[test]
fn warp_with_zero_flow_reencodes_source() {
    let t = tempfile::tempdir().unwrap();
    let input = t.path().join("in");
    let stack = synth(&input, &["--motion", "4,4"]);
    let d = t.path().join("d");
    fs::create_dir_all(&d).unwrap();
    write_flow_pfm(&d.join("flow.pfm"), &FlowField::zeros(320, 256)).unwrap();
    assert!(hdr(&["warp", "--stack", s(&stack), "--dir", s(&d)])
        .status
        .success());
    let reencoded = t.path().join("src.png");
    save_png(&reencoded, &load_png(&input.join("source.png")).unwrap()).unwrap();
    assert_eq!(
        fs::read(d.join("warped.png")).unwrap(),
        fs::read(reencoded).unwrap()
    );
    let valid = load_png(&d.join("valid.png")).unwrap();
    assert!(valid.data().iter().all(|&v| v == 1.0));
}

#[test]
fn fuse_identical_images_returns_input() {
    let t = tempfile::tempdir().unwrap();
    let input = t.path().join("in");
    synth(&input, &["--stops", "0"]);
    let r = input.join("reference.png");
    let d = t.path().join("d");
    fs::create_dir_all(&d).unwrap();
    fs::copy(&r, d.join("warped.png")).unwrap();
    save_png(&d.join("valid.png"), &Image::filled(320, 256, 1, 1.0)).unwrap();
    let out = hdr(&["fuse", s(&r), s(&r), "--times", "0.01,0.01", "--dir", s(&d)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (a, b) = (load_png(&r).unwrap(), load_png(&d.join("composite.png")).unwrap());
    let worst = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f32, f32::max);
    assert!(worst <= 1.0 / 255.0 + 1e-6, "{worst}");
}

#[test]
fn synth_outputs_ground_truth() {
    let t = tempfile::tempdir().unwrap();
    let d = t.path().join("s");
    synth(&d, &["--motion", "3,-2", "--parallax", "10,0", "--stops", "3"]);
    let f = read_flow_pfm(&d.join("flow_gt.pfm")).unwrap();
    assert_eq!(f.get(0, 0), (3.0, -2.0));
    assert_eq!(f.get(160, 128), (13.0, -2.0));
    let text = fs::read_to_string(d.join("stack.txt")).unwrap();
    assert_eq!(text, "reference.png 0.01\nsource.png 0.08\n");
}
