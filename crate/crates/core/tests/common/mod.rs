#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srnav::Image;

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `∫_0^z t^(a-1) (1-t)^(b-1) dt` for half-integer `a, b ≥ 1/2`. The
/// substitutions `t = u²` below 1/2 and `t = 1 - v²` above turn both end
/// singularities into polynomial factors.
fn incomplete_beta_integral(z: f64, a: f64, b: f64) -> f64 {
    let n = 20_000;
    let m = 0.5f64.min(z);
    let lower = simpson(
        |u| 2.0 * u.powf(2.0 * a - 1.0) * (1.0 - u * u).powf(b - 1.0),
        0.0,
        m.sqrt(),
        n,
    );
    let upper = if z > 0.5 {
        simpson(
            |v| 2.0 * v.powf(2.0 * b - 1.0) * (1.0 - v * v).powf(a - 1.0),
            (1.0 - z).sqrt(),
            0.5f64.sqrt(),
            n,
        )
    } else {
        0.0
    };
    lower + upper
}

/// F-distribution CDF by direct quadrature, with no special functions.
/// Returns `(cdf, 1 - cdf)` with the upper tail integrated separately.
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> (f64, f64) {
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let z = d1 * x / (d1 * x + d2);
    let total = incomplete_beta_integral(1.0, a, b);
    let below = incomplete_beta_integral(z, a, b) / total;
    // upper tail: the mirrored integral with the parameters swapped
    let above = incomplete_beta_integral(1.0 - z, b, a) / total;
    (below, above)
}

/// Two-tailed variance-ratio p-value from the quadrature CDF.
pub fn f_test_oracle(f: f64, d1: f64, d2: f64) -> f64 {
    let (lo, hi) = f_cdf_quadrature(f, d1, d2);
    (2.0 * lo.min(hi)).min(1.0)
}

/// High-res image with a zero border wide enough that the pixels no frame
/// sees (last odd row and column) start and stay at their true value.
pub fn bordered_truth(size: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(size, size, |x, y| {
        if x < 6 || y < 6 || x + 6 >= size || y + 6 >= size {
            0.0
        } else {
            rng.random_range(0.0..1.0)
        }
    })
}

/// Frame `(a, b)` of the interleaving: its pixel `(i, j)` is truth pixel
/// `(2i - a, 2j - b)`, the sample a half-pixel scene shift brings onto the
/// base grid.
pub fn interleaved_frame(truth: &Image, a: usize, b: usize) -> Image {
    Image::from_fn(truth.width() / 2, truth.height() / 2, |i, j| {
        let (x, y) = ((2 * i) as isize - a as isize, (2 * j) as isize - b as isize);
        if x < 0 || y < 0 {
            0.0
        } else {
            truth.get(x as usize, y as usize)
        }
    })
}

pub fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, |_, _| rng.random_range(-1.0..1.0))
}
