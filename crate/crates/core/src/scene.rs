//! Ground-truth scenes and the acquisition model that turns them into
//! base-resolution frames: sub-pixel translation, Gaussian PSF, area
//! averaging onto the sensor grid, additive Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::ops;

/// Largest frame shift accepted by [`degrade`], in base pixels.
pub const MAX_SHIFT: f64 = 2.0;

/// A scene sampled `supersample_factor` times finer than the base grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HighResImage {
    image: Image,
    supersample_factor: usize,
    /// Continuous translation baked into the rendering, in high-res pixels.
    origin_offset: [f64; 2],
}

impl HighResImage {
    pub fn new(image: Image, supersample_factor: usize) -> Result<Self> {
        if supersample_factor == 0 {
            return Err(Error::invalid("supersample_factor", "must be at least 1"));
        }
        if !image.width().is_multiple_of(supersample_factor)
            || !image.height().is_multiple_of(supersample_factor)
        {
            return Err(Error::invalid(
                "supersample_factor",
                format!(
                    "{}x{} is not divisible by {supersample_factor}",
                    image.width(),
                    image.height()
                ),
            ));
        }
        if image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pixels", "intensities must lie in [0, 1]"));
        }
        Ok(Self {
            image,
            supersample_factor,
            origin_offset: [0.0, 0.0],
        })
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn supersample_factor(&self) -> usize {
        self.supersample_factor
    }

    pub fn origin_offset(&self) -> [f64; 2] {
        self.origin_offset
    }

    /// Base-grid dimensions.
    pub fn base_dims(&self) -> (usize, usize) {
        (
            self.image.width() / self.supersample_factor,
            self.image.height() / self.supersample_factor,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    /// Gaussian PSF standard deviation in base pixels.
    pub blur_sigma: f64,
    /// Extra integer decimation applied after the supersample reduction.
    pub downsample_factor: usize,
    /// Additive noise standard deviation as a fraction of the `[0, 1]` range.
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            blur_sigma: 0.5,
            downsample_factor: 1,
            noise_sigma: 0.02,
            rng_seed: 0,
        }
    }
}

impl DegradationParams {
    pub fn noiseless(self) -> Self {
        Self {
            noise_sigma: 0.0,
            ..self
        }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(
                "blur_sigma",
                format!("{} is not >= 0", self.blur_sigma),
            ));
        }
        if self.downsample_factor == 0 {
            return Err(Error::invalid("downsample_factor", "must be at least 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(
                "noise_sigma",
                format!("{} is not >= 0", self.noise_sigma),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthCircle {
    /// Center in base pixels (continuous coordinates).
    pub center: [f64; 2],
    pub radius: f64,
}

impl GroundTruthCircle {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        Self {
            center: [cx, cy],
            radius,
        }
    }

    pub fn shifted(self, dx: f64, dy: f64) -> Self {
        Self {
            center: [self.center[0] + dx, self.center[1] + dy],
            ..self
        }
    }
}

/// Rasterizes a bright disk on a dark background. A high-res pixel is 1 when
/// its center lies inside the disk and 0 otherwise.
pub fn render_disk(
    truth: GroundTruthCircle,
    canvas: (usize, usize),
    supersample_factor: usize,
) -> Result<HighResImage> {
    let [cx, cy] = truth.center;
    let r = truth.radius;
    let (w, h) = canvas;
    if supersample_factor == 0 {
        return Err(Error::invalid("supersample_factor", "must be at least 1"));
    }
    if !(r >= 0.0) || !cx.is_finite() || !cy.is_finite() {
        return Err(Error::invalid("truth", format!("{truth:?}")));
    }
    if cx - r < 0.0 || cy - r < 0.0 || cx + r > w as f64 || cy + r > h as f64 {
        return Err(Error::DiskOutOfBounds {
            cx,
            cy,
            radius: r,
            width: w,
            height: h,
        });
    }
    let f = supersample_factor as f64;
    let (hw, hh) = (w * supersample_factor, h * supersample_factor);
    let mut img = Image::zeros(hw, hh);
    if r > 0.0 {
        let (hcx, hcy, hr) = (cx * f, cy * f, r * f);
        let r2 = hr * hr;
        let y0 = ((hcy - hr - 1.0).floor().max(0.0)) as usize;
        let y1 = ((hcy + hr + 1.0).ceil() as usize).min(hh);
        let x0 = ((hcx - hr - 1.0).floor().max(0.0)) as usize;
        let x1 = ((hcx + hr + 1.0).ceil() as usize).min(hw);
        for y in y0..y1 {
            let dy = y as f64 + 0.5 - hcy;
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - hcx;
                if dx * dx + dy * dy <= r2 {
                    img.set(x, y, 1.0);
                }
            }
        }
    }
    img.set_pixels_per_mm(f);
    HighResImage::new(img, supersample_factor)
}

/// Simulates one acquisition of `hi` with the scene translated by `shift`
/// base pixels.
pub fn degrade(hi: &HighResImage, params: &DegradationParams, shift: [f64; 2]) -> Result<Image> {
    params.validate()?;
    if shift.iter().any(|s| !s.is_finite() || s.abs() > MAX_SHIFT) {
        return Err(Error::invalid(
            "shift",
            format!("{shift:?} exceeds ±{MAX_SHIFT} base pixels"),
        ));
    }
    let total = hi.supersample_factor * params.downsample_factor;
    let t = total as f64;
    let src = hi.image();
    let (out_w, out_h) = (src.width() / total, src.height() / total);
    let mut out = Image::zeros(out_w, out_h);

    // Work on the smallest block-aligned window that contains the scene
    // content plus the reach of the warp and blur; everything outside it is
    // exactly zero before noise.
    if let Some(bbox) = content_bbox(src) {
        let blur = ops::Stencil::gaussian(params.blur_sigma * t);
        let margin = blur.reach() + (MAX_SHIFT * t).ceil() as usize + 2;
        let bx0 = bbox.0.saturating_sub(margin) / total;
        let by0 = bbox.1.saturating_sub(margin) / total;
        let bx1 = ((bbox.2 + margin).div_ceil(total)).min(out_w);
        let by1 = ((bbox.3 + margin).div_ceil(total)).min(out_h);
        let crop = Image::from_fn((bx1 - bx0) * total, (by1 - by0) * total, |x, y| {
            src.get(x + bx0 * total, y + by0 * total)
        });
        let warped = ops::shift_bilinear(&crop, shift[0] * t, shift[1] * t);
        let blurred = blur.apply_cols(&blur.apply_rows(&warped));
        let small = ops::area_downsample(&blurred, total);
        for y in 0..small.height() {
            for x in 0..small.width() {
                out.set(x + bx0, y + by0, small.get(x, y));
            }
        }
    }

    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let normal = Normal::new(0.0, params.noise_sigma)
            .map_err(|e| Error::invalid("noise_sigma", e.to_string()))?;
        for v in out.data_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    out.set_pixels_per_mm(src.pixels_per_mm() / t);
    Ok(out)
}

/// Inclusive-exclusive bounding box `(x0, y0, x1, y1)` of nonzero pixels.
fn content_bbox(img: &Image) -> Option<(usize, usize, usize, usize)> {
    let (w, h) = img.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0, 0);
    for y in 0..h {
        let row = img.row(y);
        if let Some(first) = row.iter().position(|&v| v != 0.0) {
            let last = row.iter().rposition(|&v| v != 0.0).unwrap_or(first);
            x0 = x0.min(first);
            x1 = x1.max(last + 1);
            y0 = y0.min(y);
            y1 = y1.max(y + 1);
        }
    }
    (x1 > x0).then_some((x0, y0, x1, y1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn noiseless(blur: f64) -> DegradationParams {
        DegradationParams {
            blur_sigma: blur,
            noise_sigma: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn render_disk_dimensions_and_interior() {
        let hi = render_disk(GroundTruthCircle::new(64.0, 64.0, 10.0), (128, 128), 8).unwrap();
        assert_eq!(hi.image().dims(), (1024, 1024));
        assert_eq!(hi.base_dims(), (128, 128));
        assert_eq!(hi.image().get(512, 512), 1.0);
        assert_eq!(hi.image().get(0, 0), 0.0);
    }

    #[test]
    fn zero_radius_is_empty() {
        let hi = render_disk(GroundTruthCircle::new(20.0, 20.0, 0.0), (40, 40), 4).unwrap();
        assert_eq!(hi.image().sum(), 0.0);
    }

    #[test]
    fn rasterized_mass_matches_disk_area() {
        let f = 8;
        let hi = render_disk(GroundTruthCircle::new(64.0, 64.0, 10.0), (128, 128), f).unwrap();
        let mass = hi.image().sum() / (f * f) as f64;
        let area = PI * 100.0;
        assert!((mass - area).abs() / area < 0.01, "{mass} vs {area}");
    }

    #[test]
    fn disk_outside_canvas_is_rejected() {
        let err = render_disk(GroundTruthCircle::new(5.0, 64.0, 10.0), (128, 128), 4).unwrap_err();
        assert!(matches!(err, Error::DiskOutOfBounds { .. }));
    }

    #[test]
    fn identity_degradation_is_area_average() {
        let hi = render_disk(GroundTruthCircle::new(16.3, 15.8, 5.0), (32, 32), 4).unwrap();
        let low = degrade(&hi, &noiseless(0.0), [0.0, 0.0]).unwrap();
        let direct = ops::area_downsample(hi.image(), 4);
        assert_eq!(low.dims(), (32, 32));
        for (a, b) in low.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn integer_shift_commutes_with_downsampling() {
        let hi = render_disk(GroundTruthCircle::new(20.2, 19.6, 6.0), (40, 40), 8).unwrap();
        let p = noiseless(0.5);
        let a = degrade(&hi, &p, [1.0, 0.0]).unwrap();
        let b = degrade(&hi, &p, [0.0, 0.0]).unwrap().translated(1, 0);
        for y in 2..38 {
            for x in 2..38 {
                assert!((a.get(x, y) - b.get(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cropped_path_matches_full_frame_computation() {
        let hi = render_disk(GroundTruthCircle::new(10.4, 21.7, 4.0), (32, 32), 4).unwrap();
        let p = noiseless(0.7);
        let shift = [0.35, -0.8];
        let fast = degrade(&hi, &p, shift).unwrap();
        let t = 4.0;
        let warped = ops::shift_bilinear(hi.image(), shift[0] * t, shift[1] * t);
        let slow = ops::area_downsample(&ops::gaussian_blur(&warped, 0.7 * t), 4);
        assert!(fast.mse(&slow).unwrap() < 1e-28);
    }

    #[test]
    fn mean_is_conserved_without_shift() {
        let hi = render_disk(GroundTruthCircle::new(30.0, 31.5, 7.0), (64, 64), 8).unwrap();
        let low = degrade(&hi, &noiseless(0.5), [0.0, 0.0]).unwrap();
        assert!((low.mean() - hi.image().mean()).abs() < 1e-6);
    }

    #[test]
    fn noise_is_seeded_and_clamped() {
        let hi = render_disk(GroundTruthCircle::new(16.0, 16.0, 5.0), (32, 32), 4).unwrap();
        let p = DegradationParams {
            noise_sigma: 0.3,
            rng_seed: 11,
            ..Default::default()
        };
        let a = degrade(&hi, &p, [0.25, 0.0]).unwrap();
        let b = degrade(&hi, &p, [0.25, 0.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = degrade(&hi, &p.with_seed(12), [0.25, 0.0]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn oversized_shift_is_rejected() {
        let hi = render_disk(GroundTruthCircle::new(16.0, 16.0, 5.0), (32, 32), 4).unwrap();
        assert!(degrade(&hi, &noiseless(0.0), [2.5, 0.0]).is_err());
    }

    #[test]
    fn invalid_params_are_rejected() {
        let hi = render_disk(GroundTruthCircle::new(16.0, 16.0, 5.0), (32, 32), 4).unwrap();
        let bad = DegradationParams {
            blur_sigma: -1.0,
            ..Default::default()
        };
        assert!(degrade(&hi, &bad, [0.0, 0.0]).is_err());
    }
}
