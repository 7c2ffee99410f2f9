//! File formats: WFH1 fields, 8-bit PGM images and JSON reports.
//!
//! WFH1 is a header line `WFH1 nx ny dx dy domain` followed by `nx * ny`
//! lines of `re im` in row-major order. Floats are written with 17
//! significant digits so files round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::wavefield::{Domain, Grid2D, WaveField};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn field_to_string(field: &WaveField) -> String {
    let g = field.grid();
    let mut out = String::with_capacity(48 * (g.len() + 1));
    let _ = writeln!(
        out,
        "WFH1 {} {} {} {} {}",
        g.nx(),
        g.ny(),
        fmt_f64(g.dx()),
        fmt_f64(g.dy()),
        field.domain().as_str()
    );
    for a in field.amplitudes() {
        let _ = writeln!(out, "{} {}", fmt_f64(a.re), fmt_f64(a.im));
    }
    out
}

pub fn parse_field(text: &str, origin: &str) -> Result<WaveField> {
    let err = |msg: String| Error::Parse {
        path: origin.to_string(),
        msg,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "WFH1" {
        return Err(err(format!("bad header `{header}`")));
    }
    let nx: usize = parts[1].parse().map_err(|_| err("bad nx".into()))?;
    let ny: usize = parts[2].parse().map_err(|_| err("bad ny".into()))?;
    let dx: f64 = parts[3].parse().map_err(|_| err("bad dx".into()))?;
    let dy: f64 = parts[4].parse().map_err(|_| err("bad dy".into()))?;
    let domain = match parts[5] {
        "position" => Domain::Position,
        "momentum" => Domain::Momentum,
        other => return Err(err(format!("unknown domain `{other}`"))),
    };
    let grid = Grid2D::new(nx, ny, dx, dy)?;

    let mut amps = Vec::with_capacity(grid.len());
    for (n, line) in lines.enumerate() {
        let mut it = line.split_whitespace();
        let (Some(re), Some(im), None) = (it.next(), it.next(), it.next()) else {
            return Err(err(format!("line {}: expected `re im`", n + 2)));
        };
        let re: f64 = re.parse().map_err(|_| err(format!("line {}: bad real part", n + 2)))?;
        let im: f64 = im
            .parse()
            .map_err(|_| err(format!("line {}: bad imaginary part", n + 2)))?;
        amps.push(Complex64::new(re, im));
    }
    if amps.len() != grid.len() {
        return Err(err(format!("expected {} samples, found {}", grid.len(), amps.len())));
    }
    WaveField::new(grid, amps, domain)
}

pub fn write_field(path: impl AsRef<Path>, field: &WaveField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, field_to_string(field)).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<WaveField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field(&text, &path.display().to_string())
}

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

fn pgm_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Some((tokens, i))
}

/// Parses binary (P5) or ASCII (P2) PGM with maxval <= 255.
pub fn parse_pgm(bytes: &[u8], origin: &str) -> Result<GrayImage> {
    let err = |msg: &str| Error::Parse {
        path: origin.to_string(),
        msg: msg.to_string(),
    };
    let (header, end) = pgm_tokens(bytes, 4).ok_or_else(|| err("truncated PGM header"))?;
    let magic = header[0].as_str();
    let width: usize = header[1].parse().map_err(|_| err("bad width"))?;
    let height: usize = header[2].parse().map_err(|_| err("bad height"))?;
    let maxval: u32 = header[3].parse().map_err(|_| err("bad maxval"))?;
    if maxval == 0 || maxval > 255 {
        return Err(err("only 8-bit PGM is supported"));
    }
    let rescale = |v: u32| ((v * 255 + maxval / 2) / maxval) as u8;
    let n = width * height;
    let pixels = match magic {
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let data = bytes.get(end + 1..end + 1 + n).ok_or_else(|| err("truncated raster"))?;
            data.iter().map(|&v| rescale(v as u32)).collect()
        }
        "P2" => {
            let (values, _) = pgm_tokens(bytes, 4 + n).ok_or_else(|| err("truncated raster"))?;
            values[4..]
                .iter()
                .map(|t| t.parse::<u32>().map(rescale).map_err(|_| err("bad sample")))
                .collect::<Result<Vec<u8>>>()?
        }
        _ => return Err(err("not a PGM file")),
    };
    Ok(GrayImage { width, height, pixels })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, &path.display().to_string())
}

pub fn pgm_bytes(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(image)).map_err(|e| Error::io(path, e))
}

/// Pretty JSON formatter that prints every float with 17 significant digits.
struct FullPrecision<'a>(serde_json::ser::PrettyFormatter<'a>);

impl serde_json::ser::Formatter for FullPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let formatter = FullPrecision(serde_json::ser::PrettyFormatter::new());
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_json_string(value)?).map_err(|e| Error::io(path, e))
}
