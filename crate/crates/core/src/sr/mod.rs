//! Multi-frame super-resolution from known sub-pixel shifts.
//!
//! The reconstruction minimizes `Σ_k ‖D B M_k X − I_k‖²` over the
//! high-resolution image `X` by plain gradient descent (iterative
//! back-projection with the exact adjoint as back-projection kernel).
//! There is no prior term.

mod bicubic;
mod operator;

pub use bicubic::upsample_bicubic;
pub use operator::{back_project, forward_project, gradient, objective};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Window};
use crate::kinematics::Jacobian2x2;

pub const DEFAULT_FRAME_COUNT: usize = 4;
const POWER_ITERATIONS: usize = 20;

/// Frame offsets (base pixels, relative to the first frame) and the stage
/// commands that step from one offset to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSet {
    offsets: Vec<[f64; 2]>,
    actuator_commands: Vec<[f64; 2]>,
}

impl ShiftSet {
    pub fn new(offsets: Vec<[f64; 2]>, actuator_commands: Vec<[f64; 2]>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::Empty("shift set"));
        }
        if offsets.len() != actuator_commands.len() {
            return Err(Error::invalid(
                "actuator_commands",
                format!(
                    "{} commands for {} offsets",
                    actuator_commands.len(),
                    offsets.len()
                ),
            ));
        }
        if offsets[0] != [0.0, 0.0] {
            return Err(Error::invalid("offsets", "the first frame is the origin"));
        }
        if offsets.iter().flatten().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::invalid(
                "offsets",
                "components must lie in [-1, 1] pixels",
            ));
        }
        Ok(Self {
            offsets,
            actuator_commands,
        })
    }

    /// Offsets without associated stage commands (synthetic data).
    pub fn from_offsets(offsets: Vec<[f64; 2]>) -> Result<Self> {
        let n = offsets.len();
        Self::new(offsets, vec![[0.0, 0.0]; n])
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[[f64; 2]] {
        &self.offsets
    }

    pub fn actuator_commands(&self) -> &[[f64; 2]] {
        &self.actuator_commands
    }
}

/// Random offsets in `[-1, 1]²` pixels with the first frame at the origin.
/// Command `k` moves the stage from offset `k - 1` to offset `k`:
/// `J⁻¹ (p_k − p_{k−1})`.
pub fn generate_offsets(n: usize, rng_seed: u64, jacobian: &Jacobian2x2) -> Result<ShiftSet> {
    if n == 0 {
        return Err(Error::invalid("n", "at least one frame is required"));
    }
    jacobian.check_invertible()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut offsets = vec![[0.0, 0.0]];
    for _ in 1..n {
        offsets.push([rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]);
    }
    let mut commands = vec![[0.0, 0.0]];
    for pair in offsets.windows(2) {
        let delta = [pair[1][0] - pair[0][0], pair[1][1] - pair[0][1]];
        commands.push(jacobian.solve(delta)?);
    }
    ShiftSet::new(offsets, commands)
}

/// How the sensor reduces the high-resolution grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Each low-res pixel integrates its `f × f` footprint.
    #[default]
    Area,
    /// Each low-res pixel samples the top-left high-res pixel of its footprint.
    Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StepSize {
    /// `1 / L` with `L` the Lipschitz constant of the gradient, estimated by
    /// power iteration on the normal operator.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrOptions {
    pub upscale_factor: usize,
    pub max_iterations: usize,
    /// Stop once the data MSE falls below this fraction of its initial value.
    pub mse_stop_fraction: f64,
    pub step_size: StepSize,
    /// PSF standard deviation assumed by the forward model, in base pixels.
    pub blur_sigma: f64,
    pub sampling: Sampling,
}

impl Default for SrOptions {
    fn default() -> Self {
        Self {
            upscale_factor: 2,
            max_iterations: 100,
            mse_stop_fraction: 1e-4,
            step_size: StepSize::Auto,
            blur_sigma: 0.5,
            sampling: Sampling::Area,
        }
    }
}

impl SrOptions {
    pub fn validate(&self) -> Result<()> {
        if self.upscale_factor == 0 {
            return Err(Error::invalid("upscale_factor", "must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if !(self.mse_stop_fraction > 0.0 && self.mse_stop_fraction < 1.0) {
            return Err(Error::invalid(
                "mse_stop_fraction",
                format!("{} is not in (0, 1)", self.mse_stop_fraction),
            ));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid("step_size", format!("{s} is not > 0")));
            }
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::invalid(
                "blur_sigma",
                format!("{} is not >= 0", self.blur_sigma),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The initial guess already reproduces every frame exactly.
    ExactStart,
    MseThreshold,
    MaxIterations,
    /// A full step failed to lower the objective (floating-point floor).
    NoDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrResult {
    pub image: Image,
    pub iterations_used: usize,
    /// Data MSE before optimization followed by one entry per accepted step.
    pub residual_history: Vec<f64>,
    pub step_size: f64,
    pub stop_reason: StopReason,
}

impl SrResult {
    /// `iteration,mse` rows.
    pub fn residual_csv(&self) -> String {
        let mut out = String::from("iteration,mse\n");
        for (i, mse) in self.residual_history.iter().enumerate() {
            out.push_str(&format!("{i},{mse:e}\n"));
        }
        out
    }
}

struct Problem<'a> {
    frames: &'a [Image],
    shifts: &'a ShiftSet,
    opts: &'a SrOptions,
    pixels: usize,
}

impl Problem<'_> {
    /// Residual images `A_k x − I_k` and their pooled mean square.
    fn residuals(&self, x: &Image) -> Result<(Vec<Image>, f64)> {
        let mut out = Vec::with_capacity(self.frames.len());
        let mut sq = 0.0;
        for (frame, &offset) in self.frames.iter().zip(self.shifts.offsets()) {
            let mut r = forward_project(x, offset, self.opts)?;
            r.add_scaled(-1.0, frame);
            sq += r.data().iter().map(|v| v * v).sum::<f64>();
            out.push(r);
        }
        Ok((out, sq / self.pixels as f64))
    }

    fn gradient_from(&self, residuals: &[Image], w: usize, h: usize) -> Image {
        let mut g = Image::zeros(w, h);
        for (r, &offset) in residuals.iter().zip(self.shifts.offsets()) {
            g.add_scaled(2.0, &back_project(r, offset, self.opts));
        }
        g
    }

    /// Largest eigenvalue of `Σ A_kᵀ A_k` by power iteration.
    fn normal_operator_norm(&self, w: usize, h: usize) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut v = Image::from_fn(w, h, |_, _| rng.random_range(0.5..1.5));
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let norm = v.dot(&v).sqrt();
            if norm == 0.0 {
                break;
            }
            v.scale(1.0 / norm);
            let mut hv = Image::zeros(w, h);
            for &offset in self.shifts.offsets() {
                let ax = forward_project(&v, offset, self.opts)?;
                hv.add_scaled(1.0, &back_project(&ax, offset, self.opts));
            }
            lambda = v.dot(&hv);
            v = hv;
        }
        Ok(lambda)
    }
}

/// Least-squares super-resolution estimate from `frames` taken at the
/// offsets in `shifts`. The iterate starts from the bicubic upsampling of
/// the first (zero-offset) frame.
pub fn reconstruct_sr(frames: &[Image], shifts: &ShiftSet, opts: &SrOptions) -> Result<SrResult> {
    opts.validate()?;
    let first = frames.first().ok_or(Error::Empty("frame list"))?;
    if frames.len() != shifts.len() {
        return Err(Error::invalid(
            "frames",
            format!("{} frames for {} offsets", frames.len(), shifts.len()),
        ));
    }
    for frame in &frames[1..] {
        first.check_same_dims(frame)?;
    }
    let f = opts.upscale_factor;
    let (w, h) = (first.width() * f, first.height() * f);
    let problem = Problem {
        frames,
        shifts,
        opts,
        pixels: frames.len() * first.width() * first.height(),
    };

    let mut x = upsample_bicubic(first, f);
    let (mut residuals, mse0) = problem.residuals(&x)?;
    let mut history = vec![mse0];

    let step = match opts.step_size {
        StepSize::Fixed(s) => s,
        StepSize::Auto => {
            let lambda = problem.normal_operator_norm(w, h)?;
            if lambda > 0.0 {
                1.0 / (2.0 * lambda)
            } else {
                0.0
            }
        }
    };

    let mut stop_reason = StopReason::MaxIterations;
    if mse0 == 0.0 || step == 0.0 {
        stop_reason = StopReason::ExactStart;
    } else {
        let target = opts.mse_stop_fraction * mse0;
        for _ in 0..opts.max_iterations {
            let g = problem.gradient_from(&residuals, w, h);
            let mut candidate = x.clone();
            candidate.add_scaled(-step, &g);
            let (cand_res, cand_mse) = problem.residuals(&candidate)?;
            let prev = *history.last().unwrap_or(&mse0);
            if cand_mse > prev {
                stop_reason = StopReason::NoDescent;
                break;
            }
            x = candidate;
            residuals = cand_res;
            history.push(cand_mse);
            if cand_mse < target {
                stop_reason = StopReason::MseThreshold;
                break;
            }
        }
    }

    Ok(SrResult {
        image: x,
        iterations_used: history.len() - 1,
        residual_history: history,
        step_size: step,
        stop_reason,
    })
}

/// [`reconstruct_sr`] restricted to the base-grid `window` of every frame.
/// The result covers `window` at the upscaled resolution, so its pixel
/// `(u, v)` sits at `(window.x0 · f + u, window.y0 · f + v)` on the full grid.
pub fn reconstruct_sr_window(
    frames: &[Image],
    shifts: &ShiftSet,
    opts: &SrOptions,
    window: &Window,
) -> Result<SrResult> {
    let crops = frames
        .iter()
        .map(|f| f.crop(window))
        .collect::<Result<Vec<_>>>()?;
    reconstruct_sr(&crops, shifts, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn single_origin_offset() {
        let s = generate_offsets(1, 3, &Jacobian2x2::identity()).unwrap();
        assert_eq!(s.offsets(), &[[0.0, 0.0]]);
        assert_eq!(s.actuator_commands(), &[[0.0, 0.0]]);
    }

    #[test]
    fn offsets_are_seeded_and_bounded() {
        let j = Jacobian2x2::scaled_rotation(1.0, 0.3);
        let a = generate_offsets(4, 9, &j).unwrap();
        assert_eq!(a, generate_offsets(4, 9, &j).unwrap());
        assert_ne!(a, generate_offsets(4, 10, &j).unwrap());
        assert_eq!(a.len(), 4);
        assert!(a
            .offsets()
            .iter()
            .flatten()
            .all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn singular_jacobian_rejected() {
        let j = Jacobian2x2::from_rows([[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(
            generate_offsets(4, 0, &j),
            Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn shift_set_validation() {
        assert!(ShiftSet::from_offsets(vec![]).is_err());
        assert!(ShiftSet::from_offsets(vec![[0.5, 0.0]]).is_err());
        assert!(ShiftSet::from_offsets(vec![[0.0, 0.0], [1.5, 0.0]]).is_err());
        assert!(ShiftSet::new(vec![[0.0, 0.0]], vec![]).is_err());
    }

    #[test]
    fn options_validation() {
        let ok = SrOptions::default();
        assert!(ok.validate().is_ok());
        assert!(SrOptions {
            max_iterations: 0,
            ..ok
        }
        .validate()
        .is_err());
        assert!(SrOptions {
            mse_stop_fraction: 1.0,
            ..ok
        }
        .validate()
        .is_err());
        assert!(SrOptions {
            step_size: StepSize::Fixed(0.0),
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn plain_decimation_is_block_average() {
        let x = random_image(8, 6, 1);
        let opts = SrOptions {
            blur_sigma: 0.0,
            ..Default::default()
        };
        let y = forward_project(&x, [0.0, 0.0], &opts).unwrap();
        assert_eq!(y.dims(), (4, 3));
        for by in 0..3 {
            for bx in 0..4 {
                let m = (x.get(2 * bx, 2 * by)
                    + x.get(2 * bx + 1, 2 * by)
                    + x.get(2 * bx, 2 * by + 1)
                    + x.get(2 * bx + 1, 2 * by + 1))
                    / 4.0;
                assert!((y.get(bx, by) - m).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn forward_rejects_indivisible_input() {
        let x = Image::zeros(7, 8);
        assert!(forward_project(&x, [0.0, 0.0], &SrOptions::default()).is_err());
    }

    #[test]
    fn identity_problem_reconstructs_input() {
        let frame = random_image(10, 10, 4);
        let opts = SrOptions {
            upscale_factor: 1,
            blur_sigma: 0.0,
            ..Default::default()
        };
        let shifts = ShiftSet::from_offsets(vec![[0.0, 0.0]]).unwrap();
        let res = reconstruct_sr(std::slice::from_ref(&frame), &shifts, &opts).unwrap();
        assert!(res.image.mse(&frame).unwrap() < 1e-18);
        assert_eq!(res.residual_history.len(), res.iterations_used + 1);
    }

    #[test]
    fn input_errors() {
        let opts = SrOptions::default();
        let shifts = ShiftSet::from_offsets(vec![[0.0, 0.0], [0.5, 0.5]]).unwrap();
        assert!(matches!(
            reconstruct_sr(&[], &shifts, &opts),
            Err(Error::Empty(_))
        ));
        let a = Image::zeros(8, 8);
        let b = Image::zeros(8, 6);
        assert!(reconstruct_sr(&[a.clone(), b], &shifts, &opts).is_err());
        assert!(reconstruct_sr(&[a], &shifts, &opts).is_err());
    }

    #[test]
    fn residual_csv_format() {
        let r = SrResult {
            image: Image::zeros(1, 1),
            iterations_used: 1,
            residual_history: vec![0.5, 0.25],
            step_size: 0.1,
            stop_reason: StopReason::MaxIterations,
        };
        assert_eq!(r.residual_csv(), "iteration,mse\n0,5e-1\n1,2.5e-1\n");
    }
}
