//! File formats: PNG images, PFM float maps, match CSV, homography text and
//! exposure sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ::image::{ColorType, DynamicImage, ExtendedColorType, ImageFormat};
use nalgebra::Matrix3;

use crate::coords::Pt2;
use crate::densify::FlowField;
use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::image::{FloatMap, Image};
use crate::matcher::Match;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(kind: &'static str, path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        kind,
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Loads an 8- or 16-bit PNG. Gray (with or without alpha) gives one channel,
/// everything else three; alpha is dropped.
pub fn load_png(path: &Path) -> Result<Image> {
    let img = ::image::ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|source| Error::Codec {
            path: path.to_path_buf(),
            source,
        })?;
    from_dynamic(&img)
}

fn from_dynamic(img: &DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img.color(),
        ColorType::L8 | ColorType::La8 | ColorType::L16 | ColorType::La16
    );
    let wide = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    let (ch, data): (usize, Vec<f32>) = match (gray, wide) {
        (true, false) => (1, img.to_luma8().iter().map(|&v| v as f32 / 255.0).collect()),
        (true, true) => (1, img.to_luma16().iter().map(|&v| v as f32 / 65535.0).collect()),
        (false, false) => (3, img.to_rgb8().iter().map(|&v| v as f32 / 255.0).collect()),
        (false, true) => (3, img.to_rgb16().iter().map(|&v| v as f32 / 65535.0).collect()),
    };
    Image::new(w, h, ch, data)
}

/// 8-bit level for a `[0, 1]` sample.
#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes an 8-bit PNG (gray or RGB).
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let color = if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    ::image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|source| Error::Codec {
        path: path.to_path_buf(),
        source,
    })
}

/// Raw PFM contents, rows top to bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

/// Little-endian PFM (`Pf` for one channel, `PF` for three).
pub fn write_pfm(path: &Path, pfm: &Pfm) -> Result<()> {
    let tag = match pfm.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::ChannelCount { expected: 3, got: c }),
    };
    if pfm.data.len() != pfm.width * pfm.height * pfm.channels {
        return Err(Error::BufferLength {
            width: pfm.width,
            height: pfm.height,
            channels: pfm.channels,
            got: pfm.data.len(),
        });
    }
    let mut out = format!("{tag}\n{} {}\n-1.0\n", pfm.width, pfm.height).into_bytes();
    let stride = pfm.width * pfm.channels;
    for y in (0..pfm.height).rev() {
        for v in &pfm.data[y * stride..(y + 1) * stride] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn read_pfm(path: &Path) -> Result<Pfm> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = |r: &str| format_err("PFM", path, r);
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        let t = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        Ok(t)
    };
    let channels = match token()?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("unknown magic")),
    };
    let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
    let scale: f32 = token()?.parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("bad scale"));
    }
    let little = scale < 0.0;
    let body = &bytes[pos.min(bytes.len())..];
    let n = width * height * channels;
    if body.len() != n * 4 {
        return Err(bad("payload size does not match header"));
    }
    let stride = width * channels;
    let mut data = vec![0.0f32; n];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, col) = (i / stride.max(1), i % stride.max(1));
        data[(height - 1 - row) * stride + col] = v;
    }
    Ok(Pfm {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_map_pfm(path: &Path, map: &FloatMap) -> Result<()> {
    write_pfm(
        path,
        &Pfm {
            width: map.width(),
            height: map.height(),
            channels: 1,
            data: map.data().to_vec(),
        },
    )
}

pub fn read_map_pfm(path: &Path) -> Result<FloatMap> {
    let p = read_pfm(path)?;
    if p.channels != 1 {
        return Err(format_err("PFM", path, "expected a single-channel map"));
    }
    FloatMap::from_vec(p.width, p.height, p.data)
}

/// Flow as a 3-channel PFM holding `(u, v, 0)`.
pub fn write_flow_pfm(path: &Path, flow: &FlowField) -> Result<()> {
    let mut data = Vec::with_capacity(flow.width() * flow.height() * 3);
    for (&u, &v) in flow.u().data().iter().zip(flow.v().data()) {
        data.extend_from_slice(&[u, v, 0.0]);
    }
    write_pfm(
        path,
        &Pfm {
            width: flow.width(),
            height: flow.height(),
            channels: 3,
            data,
        },
    )
}

pub fn read_flow_pfm(path: &Path) -> Result<FlowField> {
    let p = read_pfm(path)?;
    if p.channels != 3 {
        return Err(format_err("PFM", path, "flow needs a 3-channel PFM"));
    }
    let u = p.data.iter().step_by(3).copied().collect();
    let v = p.data.iter().skip(1).step_by(3).copied().collect();
    FlowField::from_maps(
        FloatMap::from_vec(p.width, p.height, u)?,
        FloatMap::from_vec(p.width, p.height, v)?,
    )
}

pub const MATCH_HEADER: [&str; 5] = ["x_ref", "y_ref", "x_src", "y_src", "score"];

/// Writes `x_ref,y_ref,x_src,y_src,score` rows; values round-trip exactly.
pub fn write_matches(path: &Path, matches: &[Match]) -> Result<()> {
    let csv_err = |e: csv::Error| format_err("CSV", path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(MATCH_HEADER).map_err(csv_err)?;
    for m in matches {
        w.write_record([
            m.ref_pos.x.to_string(),
            m.ref_pos.y.to_string(),
            m.src_pos.x.to_string(),
            m.src_pos.y.to_string(),
            m.score.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matches(path: &Path) -> Result<Vec<Match>> {
    let csv_err = |e: csv::Error| format_err("CSV", path, e.to_string());
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(MATCH_HEADER) {
        return Err(format_err(
            "CSV",
            path,
            "expected header x_ref,y_ref,x_src,y_src,score",
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format_err("CSV", path, format!("row {}: not a number", line + 2)))?;
        if vals.len() != 5 || !vals.iter().all(|v| v.is_finite()) || vals[4] < 0.0 {
            return Err(format_err("CSV", path, format!("row {}: bad values", line + 2)));
        }
        out.push(Match::new(
            Pt2::new(vals[0], vals[1]),
            Pt2::new(vals[2], vals[3]),
            vals[4],
        ));
    }
    Ok(out)
}

/// Homography as three whitespace-separated rows.
pub fn write_homography(path: &Path, h: &Homography) -> Result<()> {
    let m = h.matrix();
    let mut s = String::new();
    for r in 0..3 {
        s.push_str(&format!("{} {} {}\n", m[(r, 0)], m[(r, 1)], m[(r, 2)]));
    }
    fs::write(path, s).map_err(io_err(path))
}

pub fn read_homography(path: &Path) -> Result<Homography> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| format_err("homography", path, "not a number"))?;
    if vals.len() != 9 {
        return Err(format_err("homography", path, "expected 9 values"));
    }
    Homography::from_matrix(Matrix3::from_row_slice(&vals))
        .map_err(|e| format_err("homography", path, e.to_string()))
}

/// Parses `path exposure_seconds` lines; `#` starts a comment. Relative
/// image paths are resolved against the sidecar's directory.
pub fn read_exposures(path: &Path) -> Result<Vec<(PathBuf, f64)>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (p, e) = line.rsplit_once(char::is_whitespace).ok_or_else(|| {
            format_err(
                "exposure",
                path,
                format!("line {}: expected path and seconds", i + 1),
            )
        })?;
        let secs: f64 = e
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .ok_or_else(|| format_err("exposure", path, format!("line {}: bad exposure {e}", i + 1)))?;
        let p = PathBuf::from(p.trim());
        out.push((if p.is_absolute() { p } else { base.join(p) }, secs));
    }
    Ok(out)
}

pub fn write_exposures(path: &Path, entries: &[(PathBuf, f64)]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    for (p, e) in entries {
        writeln!(f, "{} {e}", p.display()).map_err(io_err(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn png_round_trip() {
        let d = tmp();
        let img = Image::from_fn(13, 7, 3, |x, y, c| {
            ((x * 19 + y * 7 + c * 3) % 256) as f32 / 255.0
        });
        let p = d.path().join("a.png");
        save_png(&p, &img).unwrap();
        assert_eq!(load_png(&p).unwrap(), img);
        let gray = img.channel(1);
        save_png(&p, &gray).unwrap();
        assert_eq!(load_png(&p).unwrap(), gray);
    }

    #[test]
    fn sixteen_bit_png() {
        let d = tmp();
        let p = d.path().join("w.png");
        let buf: Vec<u16> = vec![0, 65535, 32768, 1000, 20000, 65535];
        ::image::ImageBuffer::<::image::Rgb<u16>, _>::from_raw(2, 1, buf.clone())
            .unwrap()
            .save(&p)
            .unwrap();
        let img = load_png(&p).unwrap();
        assert_eq!(img.channels(), 3);
        for (a, &b) in img.data().iter().zip(&buf) {
            assert!((a - b as f32 / 65535.0).abs() < 1e-7);
        }
    }

    #[test]
    fn missing_png_is_io_error() {
        assert!(matches!(
            load_png(Path::new("/nonexistent/x.png")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn pfm_round_trip_and_layout() {
        let d = tmp();
        let p = d.path().join("m.pfm");
        let map = FloatMap::from_fn(5, 3, |x, y| x as f32 - 2.5 * y as f32);
        write_map_pfm(&p, &map).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"Pf\n5 3\n-1.0\n"));
        let first = f32::from_le_bytes(bytes[12..16].try_into().unwrap());
        assert_eq!(first, map.get(0, 2));
        assert_eq!(read_map_pfm(&p).unwrap(), map);

        let flow = FlowField::from_fn(4, 6, |x, y| (x as f32 * 0.25, -(y as f32)));
        write_flow_pfm(&p, &flow).unwrap();
        assert_eq!(read_flow_pfm(&p).unwrap(), flow);
        assert!(read_map_pfm(&p).is_err());
        fs::write(&p, b"PF\n2 2\n-1.0\n1234").unwrap();
        assert!(read_flow_pfm(&p).is_err());
    }

    #[test]
    fn matches_round_trip() {
        let d = tmp();
        let p = d.path().join("m.csv");
        let ms = vec![
            Match::new(Pt2::new(10.0, 20.0), Pt2::new(13.0, 19.0), 0.123456789),
            Match::new(Pt2::new(1.0, 2.0), Pt2::new(3.0, 4.0), 1e-9 / 3.0),
        ];
        write_matches(&p, &ms).unwrap();
        assert_eq!(read_matches(&p).unwrap(), ms);
        fs::write(&p, "x_ref,y_ref,x_src,y_src,score\n1,2,3,oops,0\n").unwrap();
        assert!(read_matches(&p).is_err());
        fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(read_matches(&p).is_err());
    }

    #[test]
    fn homography_round_trip() {
        let d = tmp();
        let p = d.path().join("h.txt");
        let h = Homography::from_matrix(Matrix3::new(1.01, 0.02, -0.1, 0.003, 0.98, 0.2, 1e-3, -2e-3, 1.0))
            .unwrap();
        write_homography(&p, &h).unwrap();
        assert_eq!(read_homography(&p).unwrap(), h);
    }

    #[test]
    fn exposure_sidecar() {
        let d = tmp();
        let p = d.path().join("stack.txt");
        fs::write(
            &p,
            "# stack\ndark.png 0.01\n\n/abs/bright image.png 0.04 # long\n",
        )
        .unwrap();
        let e = read_exposures(&p).unwrap();
        assert_eq!(e[0], (d.path().join("dark.png"), 0.01));
        assert_eq!(e[1], (PathBuf::from("/abs/bright image.png"), 0.04));
        fs::write(&p, "dark.png -1\n").unwrap();
        assert!(read_exposures(&p).is_err());
    }
}
