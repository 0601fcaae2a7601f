//! Scalar intensity images.
//!
//! Pixel `(x, y)` covers the square `[x, x + 1) × [y, y + 1)` in continuous
//! image coordinates, so its center sits at `(x + 0.5, y + 0.5)`. With this
//! convention a point at `p` in a base image lies at `f · p` in the same scene
//! sampled `f` times finer, which keeps coordinates comparable across the
//! base, interpolated and super-resolved grids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    /// Spatial resolution of the grid in pixels per millimetre.
    pixels_per_mm: f64,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels_per_mm: 1.0,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(
                "data",
                format!("{} values for a {width}x{height} image", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels_per_mm: 1.0,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels_per_mm: 1.0,
            data,
        }
    }

    pub fn with_pixels_per_mm(mut self, pixels_per_mm: f64) -> Self {
        self.pixels_per_mm = pixels_per_mm;
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels_per_mm(&self) -> f64 {
        self.pixels_per_mm
    }

    pub(crate) fn set_pixels_per_mm(&mut self, pixels_per_mm: f64) {
        self.pixels_per_mm = pixels_per_mm;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Reads with replicate-edge extension outside the grid.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Image) -> f64 {
        debug_assert_eq!(self.dims(), other.dims());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Mean squared difference against `other`.
    pub fn mse(&self, other: &Image) -> Result<f64> {
        self.check_same_dims(other)?;
        if self.data.is_empty() {
            return Ok(0.0);
        }
        let sq: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(sq / self.data.len() as f64)
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Image) {
        debug_assert_eq!(self.dims(), other.dims());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    pub fn check_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Copy of the pixels inside `win`, which must lie within the image.
    pub fn crop(&self, win: &Window) -> Result<Image> {
        if win.width == 0
            || win.height == 0
            || win.x0 + win.width > self.width
            || win.y0 + win.height > self.height
        {
            return Err(Error::invalid(
                "window",
                format!("{win:?} is not inside {}x{}", self.width, self.height),
            ));
        }
        let mut out = Image::from_fn(win.width, win.height, |x, y| {
            self.get(x + win.x0, y + win.y0)
        });
        out.pixels_per_mm = self.pixels_per_mm;
        Ok(out)
    }

    /// Integer translation with replicate-edge fill: `out(x, y) = self(x - dx, y - dy)`.
    pub fn translated(&self, dx: isize, dy: isize) -> Image {
        let mut out = Image::from_fn(self.width, self.height, |x, y| {
            self.get_clamped(x as isize - dx, y as isize - dy)
        });
        out.pixels_per_mm = self.pixels_per_mm;
        out
    }

    /// Encodes as binary 8-bit PGM (P5). Intensities are clamped to `[0, 1]`
    /// and mapped linearly onto `0..=255`.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.data
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes).map_err(|reason| Error::Malformed {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> std::result::Result<Image, String> {
        // Header: magic, width, height, maxval, each separated by whitespace,
        // with `#` comments allowed between tokens.
        let mut tokens = Vec::with_capacity(4);
        let mut pos = 0;
        while tokens.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if tokens[0] != "P5" {
            return Err(format!("unsupported magic {:?}", tokens[0]));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| format!("bad header field {s:?}: {e}"))
        };
        let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let raster = bytes
            .get(pos..pos + width * height)
            .ok_or("truncated raster")?;
        let data = raster.iter().map(|&b| b as f64 / maxval as f64).collect();
        Ok(Image {
            width,
            height,
            pixels_per_mm: 1.0,
            data,
        })
    }

    /// One CSV row per image row, full `f64` precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 8);
        for y in 0..self.height {
            for (x, v) in self.row(y).iter().enumerate() {
                if x > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Window {
    /// Pixels within `half` of `center` (continuous coordinates), clipped to
    /// a `dims` image.
    pub fn around(center: [f64; 2], half: f64, dims: (usize, usize)) -> Window {
        let span = |c: f64, n: usize| {
            let lo = (c - half).floor().clamp(0.0, n as f64) as usize;
            let hi = (c + half).ceil().clamp(0.0, n as f64) as usize;
            (lo, hi.max(lo))
        };
        let (x0, x1) = span(center[0], dims.0);
        let (y0, y1) = span(center[1], dims.1);
        Window {
            x0,
            y0,
            width: x1 - x0,
            height: y1 - y0,
        }
    }
}

/// Canonical frame dump name.
pub fn frame_file_name(trial: usize, frame: usize) -> String {
    format!("trial{trial}_frame{frame}.pgm")
}
