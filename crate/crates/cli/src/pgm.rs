//! Greyscale PGM images, plain (`P2`) and raw (`P5`), 8-bit only.

use std::path::Path;

use crate::error::{CliError, Result};
use crate::output::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major pixel values.
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgmFormat {
    Plain,
    #[default]
    Raw,
}

impl std::str::FromStr for PgmFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "p2" | "plain" => Ok(PgmFormat::Plain),
            "p5" | "raw" => Ok(PgmFormat::Raw),
            other => Err(format!("expected p2 or p5, got `{other}`")),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                if b == b'\n' {
                    self.line += 1;
                }
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
            self.pos += 1;
        }
        (self.pos > start).then(|| std::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("?"))
    }
}

pub fn parse_pgm(bytes: &[u8], source: &Path) -> Result<GrayImage> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        line: 1,
    };
    macro_rules! bad {
        ($line:expr, $($arg:tt)*) => {
            CliError::Input { path: source.to_path_buf(), line: $line, message: format!($($arg)*) }
        };
    }
    let magic = cur.token().map(str::to_owned);
    let raw = match magic.as_deref() {
        Some("P2") => false,
        Some("P5") => true,
        other => return Err(bad!(1, "not a P2/P5 PGM file (magic {:?})", other.unwrap_or(""))),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let line = cur.line;
        let tok = cur.token().ok_or_else(|| bad!(line, "missing {name}"))?.to_owned();
        *slot = tok
            .parse()
            .map_err(|_| bad!(cur.line, "invalid {name} `{tok}`"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(bad!(cur.line, "empty image {width}x{height}"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad!(cur.line, "maxval {maxval} unsupported (must be 1..=255)"));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| bad!(cur.line, "image dimensions overflow"))?;
    let mut pixels = Vec::with_capacity(count);
    if raw {
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(bad!(cur.line, "missing separator before raster")),
        }
        let data = &bytes[cur.pos..];
        if data.len() < count {
            return Err(bad!(cur.line, "raster truncated: {} of {count} bytes", data.len()));
        }
        for &b in &data[..count] {
            if b as usize > maxval {
                return Err(bad!(cur.line, "sample {b} exceeds maxval {maxval}"));
            }
            pixels.push(b as f64);
        }
    } else {
        for k in 0..count {
            let line = cur.line;
            let tok = cur
                .token()
                .ok_or_else(|| bad!(line, "raster truncated: {k} of {count} samples"))?
                .to_owned();
            let v: usize = tok
                .parse()
                .map_err(|_| bad!(cur.line, "invalid sample `{tok}`"))?;
            if v > maxval {
                return Err(bad!(cur.line, "sample {v} exceeds maxval {maxval}"));
            }
            pixels.push(v as f64);
        }
    }
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_pgm(&bytes, path)
}

/// Clamp to `[0, maxval]` and round half to even.
pub fn quantize(v: f64, maxval: u16) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v };
    v.clamp(0.0, maxval as f64).round_ties_even() as u8
}

pub fn encode_pgm(image: &GrayImage, format: PgmFormat) -> Vec<u8> {
    let maxval = image.maxval.clamp(1, 255);
    let magic = match format {
        PgmFormat::Plain => "P2",
        PgmFormat::Raw => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", image.width, image.height).into_bytes();
    let samples = image.pixels.iter().map(|&v| quantize(v, maxval));
    match format {
        PgmFormat::Raw => out.extend(samples),
        PgmFormat::Plain => {
            for row in samples.collect::<Vec<_>>().chunks(image.width.max(1)) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                out.extend(line.join(" ").bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn write_pgm(path: &Path, image: &GrayImage, format: PgmFormat) -> Result<()> {
    write_atomic(path, &encode_pgm(image, format))
}
