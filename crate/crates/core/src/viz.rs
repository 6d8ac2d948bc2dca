//! Inspection images: flow color coding, scalar maps and match overlays.

use crate::densify::FlowField;
use crate::image::{luminance_or_copy, FloatMap, Image};
use crate::matcher::Match;

const SEGMENTS: [(usize, [f32; 3], [f32; 3]); 6] = [
    (15, [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
    (6, [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
    (4, [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]),
    (11, [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]),
    (13, [0.0, 0.0, 1.0], [1.0, 0.0, 1.0]),
    (6, [1.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
];

/// The 55-entry Middlebury color wheel.
pub fn color_wheel() -> Vec<[f32; 3]> {
    let mut wheel = Vec::with_capacity(55);
    for &(n, from, to) in &SEGMENTS {
        for i in 0..n {
            let t = i as f32 / n as f32;
            wheel.push([0, 1, 2].map(|c| from[c] + t * (to[c] - from[c])));
        }
    }
    wheel
}

fn wheel_color(wheel: &[[f32; 3]], u: f32, v: f32) -> [f32; 3] {
    let rad = (u * u + v * v).sqrt();
    let n = wheel.len();
    let a = (-v).atan2(-u) / std::f32::consts::PI;
    let fk = (a + 1.0) / 2.0 * (n - 1) as f32;
    let k0 = (fk.floor() as usize).min(n - 1);
    let k1 = (k0 + 1) % n;
    let f = fk - k0 as f32;
    [0, 1, 2].map(|c| {
        let col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
        if rad <= 1.0 {
            1.0 - rad * (1.0 - col)
        } else {
            col * 0.75
        }
    })
}

/// Color-coded flow. Magnitudes are scaled by `max_radius`, or by the
/// largest magnitude present when `None`.
pub fn flow_to_color(flow: &FlowField, max_radius: Option<f32>) -> Image {
    let wheel = color_wheel();
    let largest = flow
        .u()
        .data()
        .iter()
        .zip(flow.v().data())
        .map(|(u, v)| (u * u + v * v).sqrt())
        .fold(0.0f32, f32::max);
    let scale = max_radius.unwrap_or(largest).max(1e-6);
    let colors: Vec<[f32; 3]> = (0..flow.width() * flow.height())
        .map(|i| wheel_color(&wheel, flow.u().data()[i] / scale, flow.v().data()[i] / scale))
        .collect();
    Image::from_fn(flow.width(), flow.height(), 3, |x, y, c| {
        colors[y * flow.width() + x][c]
    })
}

/// Linear gray rendering of `map` from `lo` to `hi`.
pub fn heatmap(map: &FloatMap, lo: f32, hi: f32) -> Image {
    let span = (hi - lo).max(f32::EPSILON);
    Image::from_fn(map.width(), map.height(), 1, |x, y, _| {
        ((map.get(x, y) - lo) / span).clamp(0.0, 1.0)
    })
}

/// Dimmed reference luminance with each match drawn as a red segment from
/// its reference position to its source position and a green dot at the start.
pub fn match_overlay(reference: &Image, matches: &[Match]) -> Image {
    let (w, h) = (reference.width(), reference.height());
    let lum = luminance_or_copy(reference);
    let mut data: Vec<f32> = lum.data().iter().flat_map(|&v| [0.6 * v; 3]).collect();
    let mut put = |x: i64, y: i64, rgb: [f32; 3]| {
        if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
            let i = (y as usize * w + x as usize) * 3;
            data[i..i + 3].copy_from_slice(&rgb);
        }
    };
    for m in matches {
        let (x0, y0) = (m.ref_pos.x, m.ref_pos.y);
        let (x1, y1) = (m.src_pos.x, m.src_pos.y);
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            put(
                (x0 + t * (x1 - x0)).round() as i64,
                (y0 + t * (y1 - y0)).round() as i64,
                [1.0, 0.0, 0.0],
            );
        }
        for dy in -1..=1 {
            for dx in -1..=1 {
                put(x0.round() as i64 + dx, y0.round() as i64 + dy, [0.0, 1.0, 0.0]);
            }
        }
    }
    Image::new(w, h, 3, data).expect("sized")
}
