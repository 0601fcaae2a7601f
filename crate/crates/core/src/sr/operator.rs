//! The per-frame imaging operator `A_k = D · B · M_k` on the high-resolution
//! grid and its exact adjoint.

use super::{Sampling, ShiftSet, SrOptions};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::ops;

fn check_divisible(x: &Image, factor: usize) -> Result<()> {
    if factor == 0 || !x.width().is_multiple_of(factor) || !x.height().is_multiple_of(factor) {
        return Err(Error::invalid(
            "x",
            format!(
                "{}x{} is not a multiple of the upscale factor {factor}",
                x.width(),
                x.height()
            ),
        ));
    }
    Ok(())
}

/// Shift by `offset` base pixels, blur, then reduce by the upscale factor.
pub fn forward_project(x: &Image, offset: [f64; 2], opts: &SrOptions) -> Result<Image> {
    let f = opts.upscale_factor;
    check_divisible(x, f)?;
    let ff = f as f64;
    let shifted = ops::shift_bilinear(x, offset[0] * ff, offset[1] * ff);
    let blurred = ops::gaussian_blur(&shifted, opts.blur_sigma * ff);
    let mut low = match opts.sampling {
        Sampling::Area => ops::area_downsample(&blurred, f),
        Sampling::Point => ops::decimate(&blurred, f),
    };
    low.set_pixels_per_mm(x.pixels_per_mm() / ff);
    Ok(low)
}

/// Transpose of [`forward_project`]: maps a base-grid image onto the
/// high-resolution grid.
pub fn back_project(y: &Image, offset: [f64; 2], opts: &SrOptions) -> Image {
    let f = opts.upscale_factor;
    let ff = f as f64;
    let (w, h) = (y.width() * f, y.height() * f);
    let up = match opts.sampling {
        Sampling::Area => ops::area_downsample_adjoint(y, f, w, h),
        Sampling::Point => ops::decimate_adjoint(y, f, w, h),
    };
    let unblurred = ops::gaussian_blur_adjoint(&up, opts.blur_sigma * ff);
    let mut out = ops::shift_bilinear_adjoint(&unblurred, offset[0] * ff, offset[1] * ff);
    out.set_pixels_per_mm(y.pixels_per_mm() * ff);
    out
}

/// `Σ_k ‖A_k x − I_k‖²`
pub fn objective(x: &Image, frames: &[Image], shifts: &ShiftSet, opts: &SrOptions) -> Result<f64> {
    let mut total = 0.0;
    for (frame, &offset) in frames.iter().zip(shifts.offsets()) {
        let r = forward_project(x, offset, opts)?;
        frame.check_same_dims(&r)?;
        total += r
            .data()
            .iter()
            .zip(frame.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total)
}

/// Gradient of [`objective`]: `2 Σ_k A_kᵀ (A_k x − I_k)`.
pub fn gradient(x: &Image, frames: &[Image], shifts: &ShiftSet, opts: &SrOptions) -> Result<Image> {
    let mut g = Image::zeros(x.width(), x.height());
    for (frame, &offset) in frames.iter().zip(shifts.offsets()) {
        let mut r = forward_project(x, offset, opts)?;
        frame.check_same_dims(&r)?;
        r.add_scaled(-1.0, frame);
        g.add_scaled(2.0, &back_project(&r, offset, opts));
    }
    Ok(g)
}
