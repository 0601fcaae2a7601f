//! Linear image operators shared by the degradation model and the
//! super-resolution forward model, each paired with its exact adjoint.
//!
//! Everything separable is expressed as a one-dimensional [`Stencil`] run
//! along rows or columns with replicate-edge extension.

use crate::image::Image;

/// Taps `(offset, weight)`; applying it computes
/// `out[i] = Σ weight · in[clamp(i + offset)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    taps: Vec<(isize, f64)>,
}

impl Stencil {
    pub fn identity() -> Self {
        Self {
            taps: vec![(0, 1.0)],
        }
    }

    /// Translation by `shift` pixels with linear interpolation:
    /// `out(x) = in(x - shift)`. Integer shifts produce a single unit tap.
    pub fn linear_shift(shift: f64) -> Self {
        let k = shift.floor();
        let frac = shift - k;
        let k = k as isize;
        let mut taps = Vec::with_capacity(2);
        if frac < 1.0 {
            taps.push((-k, 1.0 - frac));
        }
        if frac > 0.0 {
            taps.push((-k - 1, frac));
        }
        Self { taps }
    }

    /// Sampled Gaussian truncated at 4σ and normalized to unit sum.
    /// `sigma == 0` is the identity.
    pub fn gaussian(sigma: f64) -> Self {
        if sigma <= 0.0 {
            return Self::identity();
        }
        let radius = (4.0 * sigma).ceil() as isize;
        let mut taps: Vec<(isize, f64)> = (-radius..=radius)
            .map(|t| (t, (-(t * t) as f64 / (2.0 * sigma * sigma)).exp()))
            .collect();
        let total: f64 = taps.iter().map(|t| t.1).sum();
        taps.iter_mut().for_each(|t| t.1 /= total);
        Self { taps }
    }

    pub fn taps(&self) -> &[(isize, f64)] {
        &self.taps
    }

    pub fn reach(&self) -> usize {
        self.taps
            .iter()
            .map(|t| t.0.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    fn is_identity(&self) -> bool {
        self.taps == [(0, 1.0)]
    }

    fn apply_line(&self, src: &[f64], dst: &mut [f64], pad: &mut Vec<f64>) {
        let n = src.len();
        let r = self.reach();
        pad.clear();
        pad.extend(std::iter::repeat_n(src[0], r));
        pad.extend_from_slice(src);
        pad.extend(std::iter::repeat_n(src[n - 1], r));
        dst.iter_mut().for_each(|v| *v = 0.0);
        for &(off, w) in &self.taps {
            let start = (r as isize + off) as usize;
            for (d, s) in dst.iter_mut().zip(&pad[start..start + n]) {
                *d += w * s;
            }
        }
    }

    fn adjoint_line(&self, src: &[f64], dst: &mut [f64], pad: &mut Vec<f64>) {
        let n = src.len();
        let r = self.reach();
        pad.clear();
        pad.resize(n + 2 * r, 0.0);
        for &(off, w) in &self.taps {
            let start = (r as isize + off) as usize;
            for (p, s) in pad[start..start + n].iter_mut().zip(src) {
                *p += w * s;
            }
        }
        dst.copy_from_slice(&pad[r..r + n]);
        dst[0] += pad[..r].iter().sum::<f64>();
        dst[n - 1] += pad[r + n..].iter().sum::<f64>();
    }

    /// Applies along x (within each row).
    pub fn apply_rows(&self, img: &Image) -> Image {
        self.along_rows(img, false)
    }

    pub fn adjoint_rows(&self, img: &Image) -> Image {
        self.along_rows(img, true)
    }

    /// Applies along y (within each column).
    pub fn apply_cols(&self, img: &Image) -> Image {
        self.along_cols(img, false)
    }

    pub fn adjoint_cols(&self, img: &Image) -> Image {
        self.along_cols(img, true)
    }

    fn along_rows(&self, img: &Image, adjoint: bool) -> Image {
        if self.is_identity() || img.width() == 0 {
            return img.clone();
        }
        let (w, h) = img.dims();
        let mut out = img.clone();
        let mut pad = Vec::with_capacity(w + 2 * self.reach());
        let mut line = vec![0.0; w];
        for y in 0..h {
            let src = img.row(y);
            if adjoint {
                self.adjoint_line(src, &mut line, &mut pad);
            } else {
                self.apply_line(src, &mut line, &mut pad);
            }
            out.data_mut()[y * w..(y + 1) * w].copy_from_slice(&line);
        }
        out
    }

    fn along_cols(&self, img: &Image, adjoint: bool) -> Image {
        if self.is_identity() || img.height() == 0 {
            return img.clone();
        }
        let (w, h) = img.dims();
        let mut out = img.clone();
        let data = img.data();
        let mut src = vec![0.0; h];
        let mut dst = vec![0.0; h];
        let mut pad = Vec::with_capacity(h + 2 * self.reach());
        for x in 0..w {
            for y in 0..h {
                src[y] = data[y * w + x];
            }
            if adjoint {
                self.adjoint_line(&src, &mut dst, &mut pad);
            } else {
                self.apply_line(&src, &mut dst, &mut pad);
            }
            let out_data = out.data_mut();
            for y in 0..h {
                out_data[y * w + x] = dst[y];
            }
        }
        out
    }
}

/// Sub-pixel translation `out(x, y) = in(x - dx, y - dy)` by bilinear
/// interpolation with replicate edges.
pub fn shift_bilinear(img: &Image, dx: f64, dy: f64) -> Image {
    let rows = Stencil::linear_shift(dx).apply_rows(img);
    Stencil::linear_shift(dy).apply_cols(&rows)
}

pub fn shift_bilinear_adjoint(img: &Image, dx: f64, dy: f64) -> Image {
    let cols = Stencil::linear_shift(dy).adjoint_cols(img);
    Stencil::linear_shift(dx).adjoint_rows(&cols)
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let k = Stencil::gaussian(sigma);
    k.apply_cols(&k.apply_rows(img))
}

pub fn gaussian_blur_adjoint(img: &Image, sigma: f64) -> Image {
    let k = Stencil::gaussian(sigma);
    k.adjoint_rows(&k.adjoint_cols(img))
}

/// Mean over non-overlapping `factor × factor` blocks. Trailing rows or
/// columns that do not fill a block are dropped.
pub fn area_downsample(img: &Image, factor: usize) -> Image {
    if factor == 1 {
        return img.clone();
    }
    let (w, h) = (img.width() / factor, img.height() / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Image::zeros(w, h);
    let src = img.data();
    let sw = img.width();
    let dst = out.data_mut();
    for y in 0..h * factor {
        let row = &src[y * sw..y * sw + w * factor];
        let out_row = &mut dst[(y / factor) * w..(y / factor + 1) * w];
        for (o, block) in out_row.iter_mut().zip(row.chunks_exact(factor)) {
            *o += block.iter().sum::<f64>();
        }
    }
    dst.iter_mut().for_each(|v| *v *= norm);
    out
}

pub fn area_downsample_adjoint(img: &Image, factor: usize, width: usize, height: usize) -> Image {
    let norm = 1.0 / (factor * factor) as f64;
    Image::from_fn(width, height, |x, y| {
        let (bx, by) = (x / factor, y / factor);
        if bx < img.width() && by < img.height() {
            img.get(bx, by) * norm
        } else {
            0.0
        }
    })
}

/// Point sampling of the top-left pixel of every `factor × factor` block.
pub fn decimate(img: &Image, factor: usize) -> Image {
    Image::from_fn(img.width() / factor, img.height() / factor, |x, y| {
        img.get(x * factor, y * factor)
    })
}

pub fn decimate_adjoint(img: &Image, factor: usize, width: usize, height: usize) -> Image {
    let mut out = Image::zeros(width, height);
    for y in 0..img.height() {
        for x in 0..img.width() {
            out.set(x * factor, y * factor, img.get(x, y));
        }
    }
    out
}
