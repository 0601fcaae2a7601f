//! Bright circular marker detection.
//!
//! A gradient-directed circular Hough transform proposes centers and radii
//! on the pixel grid; each proposal is then refined to sub-pixel precision
//! by a background-subtracted intensity centroid over the marker support.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::ops;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleEstimate {
    /// Continuous image coordinates (pixel centers at `i + 0.5`).
    pub center: [f64; 2],
    pub radius: f64,
    /// Accumulator support relative to the circumference `2πr`.
    pub strength: f64,
    /// False when the sub-pixel refinement could not run and `center` is the
    /// accumulator cell center.
    pub refined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorOptions {
    pub radius_range: [f64; 2],
    pub max_count: usize,
    /// Minimum strength as a fraction of the ideal vote count `2πr`.
    pub strength_threshold: f64,
    /// Edge pixels need a Sobel magnitude above this multiple of the noise estimate.
    pub edge_noise_factor: f64,
    /// ...and above this fraction of the strongest gradient in the image.
    pub edge_floor_fraction: f64,
    pub radius_step: f64,
    /// Gaussian pre-smoothing (px) applied before the gradient stage only.
    pub gradient_sigma: f64,
    pub refine: RefineOptions,
}

impl DetectorOptions {
    pub fn new(radius_range: [f64; 2]) -> Self {
        Self {
            radius_range,
            max_count: 1,
            strength_threshold: 0.3,
            edge_noise_factor: 4.0,
            edge_floor_fraction: 0.1,
            radius_step: 1.0,
            gradient_sigma: 1.0,
            refine: RefineOptions::default(),
        }
    }

    pub fn with_max_count(mut self, max_count: usize) -> Self {
        self.max_count = max_count;
        self
    }

    fn validate(&self, img: &Image) -> Result<()> {
        let [lo, hi] = self.radius_range;
        let limit = img.width().min(img.height()) as f64 / 2.0;
        if !(lo > 0.0 && lo <= hi && hi < limit) {
            return Err(Error::invalid(
                "radius_range",
                format!("[{lo}, {hi}] must satisfy 0 < min <= max < {limit}"),
            ));
        }
        if !(self.radius_step > 0.0) {
            return Err(Error::invalid("radius_step", "must be > 0"));
        }
        if !(self.gradient_sigma >= 0.0) {
            return Err(Error::invalid("gradient_sigma", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Window radius is `window_scale · r + window_margin` pixels.
    pub window_scale: f64,
    pub window_margin: f64,
    /// Pixels enter the centroid only when brighter than the background by
    /// this many local noise standard deviations.
    pub support_noise_factor: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            window_scale: 1.5,
            window_margin: 2.0,
            support_noise_factor: 3.0,
        }
    }
}

/// The detector settings exposed to experiment configs. Lengths are in
/// base-resolution pixels and grow with the working-image scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorTuning {
    pub gradient_sigma: f64,
    pub support_noise_factor: f64,
}

impl Default for DetectorTuning {
    fn default() -> Self {
        Self {
            gradient_sigma: 0.5,
            support_noise_factor: 3.0,
        }
    }
}

impl DetectorTuning {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_sigma >= 0.0) {
            return Err(Error::invalid("gradient_sigma", "must be >= 0"));
        }
        if !(self.support_noise_factor >= 0.0) {
            return Err(Error::invalid("support_noise_factor", "must be >= 0"));
        }
        Ok(())
    }

    /// Single-marker options for an image `scale` times finer than base.
    pub fn options(&self, radius_range: [f64; 2], scale: f64) -> DetectorOptions {
        let mut o = DetectorOptions::new(radius_range);
        o.gradient_sigma = self.gradient_sigma * scale;
        o.refine.support_noise_factor = self.support_noise_factor;
        o
    }
}

/// Detects up to `max_count` circles with radii in `radius_range`, strongest first.
pub fn detect_circles(
    img: &Image,
    radius_range: [f64; 2],
    max_count: usize,
) -> Result<Vec<CircleEstimate>> {
    detect_circles_with(
        img,
        &DetectorOptions::new(radius_range).with_max_count(max_count),
    )
}

pub fn detect_circles_with(img: &Image, opts: &DetectorOptions) -> Result<Vec<CircleEstimate>> {
    opts.validate(img)?;
    if opts.max_count == 0 {
        return Ok(Vec::new());
    }
    let acc = HoughAccumulator::build(img, opts);
    let candidates = acc.peaks(opts);
    Ok(candidates
        .into_iter()
        .map(|coarse| {
            let mut c = refine_center_with(img, coarse, &opts.refine);
            c.radius = c.radius.clamp(opts.radius_range[0], opts.radius_range[1]);
            c
        })
        .collect())
}

/// `cx,cy,r,strength` rows.
pub fn detections_csv(circles: &[CircleEstimate]) -> String {
    let mut out = String::from("cx,cy,r,strength\n");
    for c in circles {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            c.center[0], c.center[1], c.radius, c.strength
        );
    }
    out
}

/// Robust noise level from horizontal first differences (MAD scaled to σ).
pub fn estimate_noise(img: &Image) -> f64 {
    let mut d: Vec<f64> = (0..img.height())
        .flat_map(|y| img.row(y).windows(2).map(|p| (p[1] - p[0]).abs()))
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    1.4826 * median(&mut d) / std::f64::consts::SQRT_2
}

fn median(v: &mut [f64]) -> f64 {
    quantile(v, 0.5)
}

/// Nearest-rank quantile; reorders `v`.
fn quantile(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let k = ((v.len() - 1) as f64 * q).round() as usize;
    let (_, x, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *x
}

/// Normalized Sobel derivatives (`d/dx`, `d/dy` per pixel) with replicate edges.
fn sobel(img: &Image) -> (Image, Image) {
    let (w, h) = img.dims();
    let mut gx = Image::zeros(w, h);
    let mut gy = Image::zeros(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.get_clamped(x + dx, y + dy);
            let sx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let sy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            gx.set(x as usize, y as usize, sx / 8.0);
            gy.set(x as usize, y as usize, sy / 8.0);
        }
    }
    (gx, gy)
}

/// Vote counts indexed by radius slice, smoothed over 3×3 cells.
pub struct HoughAccumulator {
    width: usize,
    height: usize,
    radii: Vec<f64>,
    slices: Vec<Vec<f32>>,
}

impl HoughAccumulator {
    pub fn build(img: &Image, opts: &DetectorOptions) -> Self {
        let (w, h) = img.dims();
        let [lo, hi] = opts.radius_range;
        let mut radii = Vec::new();
        let mut r = lo;
        while r < hi {
            radii.push(r);
            r += opts.radius_step;
        }
        radii.push(hi);

        let smooth = ops::gaussian_blur(img, opts.gradient_sigma);
        let (gx, gy) = sobel(&smooth);
        let mags: Vec<f64> = gx
            .data()
            .iter()
            .zip(gy.data())
            .map(|(a, b)| a.hypot(*b))
            .collect();
        let max_mag = mags.iter().cloned().fold(0.0, f64::max);
        let threshold = (opts.edge_noise_factor * estimate_noise(&smooth))
            .max(opts.edge_floor_fraction * max_mag);

        let mut raw = vec![vec![0f32; w * h]; radii.len()];
        if max_mag > 0.0 {
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    let m = mags[i];
                    if m <= threshold {
                        continue;
                    }
                    // gradient points toward the brighter interior
                    let (ux, uy) = (gx.data()[i] / m, gy.data()[i] / m);
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    for (slice, &r) in raw.iter_mut().zip(&radii) {
                        let (cx, cy) = ((px + r * ux).floor(), (py + r * uy).floor());
                        if cx >= 0.0 && cy >= 0.0 && (cx as usize) < w && (cy as usize) < h {
                            slice[cy as usize * w + cx as usize] += 1.0;
                        }
                    }
                }
            }
        }
        let slices = raw.iter().map(|s| box3(s, w, h)).collect();
        Self {
            width: w,
            height: h,
            radii,
            slices,
        }
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Strength map for one radius slice, for debug dumps.
    pub fn strength_image(&self, slice: usize) -> Image {
        let norm = 1.0 / (2.0 * PI * self.radii[slice]);
        let data = self.slices[slice]
            .iter()
            .map(|&v| v as f64 * norm)
            .collect();
        Image::from_vec(self.width, self.height, data).expect("slice has image dimensions")
    }

    fn peaks(&self, opts: &DetectorOptions) -> Vec<CircleEstimate> {
        let (w, h) = (self.width, self.height);
        let (mid_x, mid_y) = (w as f64 / 2.0, h as f64 / 2.0);
        // best radius per cell
        let mut cells: Vec<(f64, f64, usize, usize)> = Vec::new();
        for i in 0..w * h {
            let mut best = (0.0, 0usize);
            for (k, slice) in self.slices.iter().enumerate() {
                let s = slice[i] as f64 / (2.0 * PI * self.radii[k]);
                if s > best.0 {
                    best = (s, k);
                }
            }
            if best.0 >= opts.strength_threshold {
                let (cx, cy) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
                let dist = (cx - mid_x).hypot(cy - mid_y);
                cells.push((best.0, dist, i, best.1));
            }
        }
        cells.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
                .then(a.2.cmp(&b.2))
        });

        let min_sep = opts.radius_range[0];
        let mut out: Vec<CircleEstimate> = Vec::new();
        for (strength, _, i, k) in cells {
            if out.len() == opts.max_count {
                break;
            }
            let (cx, cy) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
            let suppressed = out.iter().any(|c| {
                (c.center[0] - cx).hypot(c.center[1] - cy) < min_sep.max(c.radius + self.radii[k])
            });
            if suppressed {
                continue;
            }
            out.push(CircleEstimate {
                center: [cx, cy],
                radius: self.radii[k],
                strength,
                refined: false,
            });
        }
        out
    }
}

fn box3(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut rows = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(1);
            let hi = (x + 1).min(w - 1);
            rows[y * w + x] = src[y * w + lo..=y * w + hi].iter().sum();
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(1);
        let hi = (y + 1).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).sum();
        }
    }
    out
}

pub fn refine_center(img: &Image, coarse: CircleEstimate) -> CircleEstimate {
    refine_center_with(img, coarse, &RefineOptions::default())
}

/// Sub-pixel center and area-based radius from a window around `coarse`.
/// Returns `coarse` unchanged with `refined = false` when the window would
/// leave the image or the marker has no contrast.
pub fn refine_center_with(
    img: &Image,
    coarse: CircleEstimate,
    opts: &RefineOptions,
) -> CircleEstimate {
    let unrefined = CircleEstimate {
        refined: false,
        ..coarse
    };
    let [cx, cy] = coarse.center;
    let r = coarse.radius;
    let win = opts.window_scale * r + opts.window_margin;
    let (w, h) = (img.width() as f64, img.height() as f64);
    if !(r > 0.0) || cx - win < 0.0 || cy - win < 0.0 || cx + win > w || cy + win > h {
        return unrefined;
    }
    let x0 = (cx - win).floor().max(0.0) as usize;
    let y0 = (cy - win).floor().max(0.0) as usize;
    let x1 = ((cx + win).ceil() as usize).min(img.width());
    let y1 = ((cy + win).ceil() as usize).min(img.height());

    let ring_inner = (opts.window_scale - 0.25) * r + opts.window_margin / 2.0;
    let core = 0.5 * r;
    let mut ring = Vec::new();
    let mut inner = Vec::new();
    let mut window = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = (px - cx).hypot(py - cy);
            if d > win {
                continue;
            }
            let v = img.get(x, y);
            window.push((px, py, v));
            if d >= ring_inner {
                ring.push(v);
            } else if d <= core {
                inner.push(v);
            }
        }
    }
    if ring.is_empty() || inner.is_empty() {
        return unrefined;
    }
    let bg = median(&mut ring);
    // upper-tail spread is unaffected by clamping at zero
    let sigma = quantile(&mut ring, 0.8413) - bg;
    let fg = median(&mut inner);
    let contrast = fg - bg;
    if !(contrast > 0.0) {
        return unrefined;
    }
    let cut = bg + opts.support_noise_factor * sigma;
    let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
    for &(px, py, v) in &window {
        if v > cut {
            let wgt = v - bg;
            m += wgt;
            mx += wgt * px;
            my += wgt * py;
        }
    }
    if !(m > 0.0) {
        return unrefined;
    }
    CircleEstimate {
        center: [mx / m, my / m],
        radius: (m / contrast / PI).sqrt(),
        strength: coarse.strength,
        refined: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{degrade, render_disk, DegradationParams, GroundTruthCircle};

    fn disk(cx: f64, cy: f64, r: f64, size: usize, blur: f64) -> Image {
        let hi = render_disk(GroundTruthCircle::new(cx, cy, r), (size, size), 8).unwrap();
        let p = DegradationParams {
            blur_sigma: blur,
            noise_sigma: 0.0,
            ..Default::default()
        };
        degrade(&hi, &p, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn blank_image_has_no_circles() {
        let img = Image::zeros(64, 64);
        assert!(detect_circles(&img, [4.0, 10.0], 3).unwrap().is_empty());
    }

    #[test]
    fn degenerate_radius_range_rejected() {
        let img = Image::zeros(64, 64);
        assert!(detect_circles(&img, [0.0, 10.0], 1).is_err());
        assert!(detect_circles(&img, [8.0, 4.0], 1).is_err());
        assert!(detect_circles(&img, [4.0, 32.0], 1).is_err());
    }

    #[test]
    fn recovers_noiseless_disk() {
        let img = disk(64.25, 63.75, 8.0, 128, 0.5);
        let c = detect_circles(&img, [5.0, 12.0], 1).unwrap();
        assert_eq!(c.len(), 1);
        let c = c[0];
        assert!(c.refined);
        assert!(
            (c.center[0] - 64.25).abs() < 0.25 && (c.center[1] - 63.75).abs() < 0.25,
            "{c:?}"
        );
        assert!((c.radius - 8.0).abs() < 0.5, "{c:?}");
    }

    #[test]
    fn symmetric_disk_refines_to_its_center() {
        let img = disk(32.0, 32.0, 7.0, 64, 0.5);
        let coarse = CircleEstimate {
            center: [32.5, 31.5],
            radius: 7.0,
            strength: 1.0,
            refined: false,
        };
        let c = refine_center(&img, coarse);
        assert!(
            (c.center[0] - 32.0).abs() < 1e-3 && (c.center[1] - 32.0).abs() < 1e-3,
            "{c:?}"
        );
        let again = refine_center(&img, c);
        assert!((again.center[0] - c.center[0]).hypot(again.center[1] - c.center[1]) < 1e-3);
    }

    #[test]
    fn half_pixel_shift_moves_refined_center() {
        let coarse = CircleEstimate {
            center: [32.0, 32.0],
            radius: 7.0,
            strength: 1.0,
            refined: false,
        };
        let a = refine_center(&disk(32.0, 32.0, 7.0, 64, 0.5), coarse);
        let b = refine_center(&disk(32.5, 32.0, 7.0, 64, 0.5), coarse);
        assert!((b.center[0] - a.center[0] - 0.5).abs() < 0.05);
        assert!((b.center[1] - a.center[1]).abs() < 0.05);
    }

    #[test]
    fn window_clipped_by_border_is_flagged() {
        let img = disk(32.0, 32.0, 7.0, 64, 0.5);
        let coarse = CircleEstimate {
            center: [4.0, 32.0],
            radius: 7.0,
            strength: 1.0,
            refined: false,
        };
        let c = refine_center(&img, coarse);
        assert!(!c.refined);
        assert_eq!(c.center, coarse.center);
    }

    #[test]
    fn two_disks_sorted_by_strength() {
        let hi_a = render_disk(GroundTruthCircle::new(30.0, 30.0, 10.0), (128, 128), 4).unwrap();
        let hi_b = render_disk(GroundTruthCircle::new(90.0, 90.0, 6.0), (128, 128), 4).unwrap();
        let mut sum = hi_a.image().clone();
        sum.add_scaled(1.0, hi_b.image());
        let hi = crate::scene::HighResImage::new(sum, 4).unwrap();
        let p = DegradationParams::default().noiseless();
        let img = degrade(&hi, &p, [0.0, 0.0]).unwrap();
        let found = detect_circles(&img, [5.0, 12.0], 5).unwrap();
        assert_eq!(found.len(), 2, "{found:?}");
        assert!(found[0].strength >= found[1].strength);
        let near =
            |c: &CircleEstimate, x: f64, y: f64| (c.center[0] - x).hypot(c.center[1] - y) < 0.25;
        assert!(found.iter().any(|c| near(c, 30.0, 30.0)));
        assert!(found.iter().any(|c| near(c, 90.0, 90.0)));
    }

    #[test]
    fn csv_rows() {
        let c = CircleEstimate {
            center: [1.5, 2.0],
            radius: 3.0,
            strength: 0.5,
            refined: true,
        };
        assert_eq!(detections_csv(&[c]), "cx,cy,r,strength\n1.5,2,3,0.5\n");
    }

    #[test]
    fn noise_estimate_tracks_gaussian_noise() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = Normal::new(0.5, 0.05).unwrap();
        let img = Image::from_fn(128, 128, |_, _| n.sample(&mut rng));
        let s = estimate_noise(&img);
        assert!((s - 0.05).abs() < 0.005, "{s}");
    }
}
