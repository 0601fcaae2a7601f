//! Single-image bicubic upsampling (Keys cubic convolution, `a = -0.5`).

use crate::image::Image;

const A: f64 = -0.5;

fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

/// Source indices (replicate-clamped) and weights for every output sample
/// along one axis.
fn axis_taps(n_in: usize, factor: usize) -> Vec<[(usize, f64); 4]> {
    let last = n_in as isize - 1;
    (0..n_in * factor)
        .map(|o| {
            let u = (o as f64 + 0.5) / factor as f64 - 0.5;
            let base = u.floor();
            let t = u - base;
            let base = base as isize;
            let mut taps = [(0usize, 0.0); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let idx = base - 1 + k as isize;
                *tap = (idx.clamp(0, last) as usize, keys(t - (k as f64 - 1.0)));
            }
            taps
        })
        .collect()
}

pub fn upsample_bicubic(img: &Image, factor: usize) -> Image {
    if factor <= 1 || img.width() == 0 || img.height() == 0 {
        return img.clone();
    }
    let (w, h) = img.dims();
    let tx = axis_taps(w, factor);
    let ty = axis_taps(h, factor);
    let ow = w * factor;
    let mut rows = Image::zeros(ow, h);
    for y in 0..h {
        let src = img.row(y);
        for (x, taps) in tx.iter().enumerate() {
            let v = taps.iter().map(|&(i, wgt)| wgt * src[i]).sum();
            rows.set(x, y, v);
        }
    }
    let mut out = Image::zeros(ow, h * factor);
    for (y, taps) in ty.iter().enumerate() {
        for x in 0..ow {
            let v = taps.iter().map(|&(i, wgt)| wgt * rows.get(x, i)).sum();
            out.set(x, y, v);
        }
    }
    out.with_pixels_per_mm(img.pixels_per_mm() * factor as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_partition_of_unity() {
        for t in [0.0, 0.125, 0.25, 0.5, 0.9] {
            let s: f64 = (0..4).map(|k| keys(t - (k as f64 - 1.0))).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(keys(0.0), 1.0);
        assert_eq!(keys(1.0), 0.0);
        assert_eq!(keys(2.0), 0.0);
    }

    #[test]
    fn factor_one_is_identity() {
        let img = Image::from_fn(5, 4, |x, y| (x * y) as f64 * 0.1);
        assert_eq!(upsample_bicubic(&img, 1), img);
    }

    #[test]
    fn constants_stay_constant() {
        let img = Image::filled(6, 5, 0.37);
        let up = upsample_bicubic(&img, 3);
        assert_eq!(up.dims(), (18, 15));
        assert!(up.data().iter().all(|v| (v - 0.37).abs() < 1e-14));
    }

    #[test]
    fn linear_ramp_preserved_in_interior() {
        // pixel centers at x + 0.5, so the ramp value is a function of the
        // continuous coordinate and must be reproduced at the finer centers
        let img = Image::from_fn(16, 16, |x, y| {
            0.3 * (x as f64 + 0.5) - 0.2 * (y as f64 + 0.5)
        });
        let f = 2;
        let up = upsample_bicubic(&img, f);
        for y in 4..28 {
            for x in 4..28 {
                let (cx, cy) = ((x as f64 + 0.5) / 2.0, (y as f64 + 0.5) / 2.0);
                let expect = 0.3 * cx - 0.2 * cy;
                assert!((up.get(x, y) - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn resolution_metadata_scales() {
        let img = Image::zeros(4, 4).with_pixels_per_mm(1.0);
        assert_eq!(upsample_bicubic(&img, 2).pixels_per_mm(), 2.0);
    }
}
