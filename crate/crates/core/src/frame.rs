//! Grayscale frames and their binary PGM (P5, 16-bit) encoding.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const PGM_MAXVAL: u32 = 65535;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::dims("Frame::new", width * height, pixels.len()));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(
                "pixels",
                format!("intensity {p} outside [0, 1]"),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a frame by evaluating `f(x, y)` at each pixel (column, row),
    /// clamping to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Sets a pixel, clamping to `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.pixels[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Copies the `w × h` window whose top-left pixel is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Frame> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::param("crop", "window exceeds frame"));
        }
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        Ok(Frame {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Bilinear sample at continuous coordinates where pixel `(c, r)` covers
    /// `[c, c+1) × [r, r+1)`. Neighbours outside the frame read as 0.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = x - 0.5;
        let fy = y - 0.5;
        let x0 = floor(fx);
        let y0 = floor(fy);
        let tx = fx - x0;
        let ty = fy - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        if x0 >= 0 && y0 >= 0 && x0 + 1 < self.width as i64 && y0 + 1 < self.height as i64 {
            let i = y0 as usize * self.width + x0 as usize;
            let row = &self.pixels[i..i + self.width + 2];
            let (v00, v10, v01, v11) = (row[0], row[1], row[self.width], row[self.width + 1]);
            let top = v00 + (v10 - v00) * tx;
            let bottom = v01 + (v11 - v01) * tx;
            return top + (bottom - top) * ty;
        }
        let v00 = self.get_or_zero(x0, y0);
        let v10 = self.get_or_zero(x0 + 1, y0);
        let v01 = self.get_or_zero(x0, y0 + 1);
        let v11 = self.get_or_zero(x0 + 1, y0 + 1);
        let top = v00 + (v10 - v00) * tx;
        let bottom = v01 + (v11 - v01) * tx;
        top + (bottom - top) * ty
    }

    #[inline]
    fn get_or_zero(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear resize sampling at target pixel centres.
    pub fn resize(&self, width: usize, height: usize) -> Frame {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Frame::zeros(width, height);
        for r in 0..height {
            for c in 0..width {
                let v = self.sample_bilinear((c as f64 + 0.5) * sx, (r as f64 + 0.5) * sy);
                out.pixels[r * width + c] = v;
            }
        }
        out
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n{}\n", self.width, self.height, PGM_MAXVAL)?;
        let mut buf = Vec::with_capacity(self.pixels.len() * 2);
        for p in &self.pixels {
            let v = (p * PGM_MAXVAL as f64).round() as u16;
            buf.extend_from_slice(&v.to_be_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_pgm<R: Read>(mut r: R) -> Result<Frame> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let fmt_err = |reason: &str| Error::Format {
            format: "PGM",
            reason: reason.to_string(),
        };

        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(fmt_err("truncated header"));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if tokens[0] != "P5" {
            return Err(fmt_err("expected magic P5"));
        }
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| fmt_err(&format!("bad {what} `{s}`")))
        };
        let width = parse(&tokens[1], "width")?;
        let height = parse(&tokens[2], "height")?;
        let maxval = parse(&tokens[3], "maxval")?;
        if maxval == 0 || maxval > 65535 {
            return Err(fmt_err("maxval out of range"));
        }
        // exactly one whitespace byte after maxval
        pos += 1;
        let bpp = if maxval > 255 { 2 } else { 1 };
        let need = width * height * bpp;
        if bytes.len() < pos + need {
            return Err(fmt_err("truncated raster"));
        }
        let raster = &bytes[pos..pos + need];
        let pixels = if bpp == 2 {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
                .collect()
        } else {
            raster.iter().map(|&b| b as f64 / maxval as f64).collect()
        };
        Frame::new(width, height, pixels).map_err(|_| fmt_err("sample exceeds maxval"))
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_pgm(std::io::BufWriter::new(f))
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Frame> {
        let f = std::fs::File::open(path)?;
        Frame::read_pgm(std::io::BufReader::new(f))
    }
}

/// `v.floor()` without a libm call; exact for `|v| < 2^63`.
#[inline]
fn floor(v: f64) -> f64 {
    let t = v as i64 as f64;
    if t > v {
        t - 1.0
    } else {
        t
    }
}
