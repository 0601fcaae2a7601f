//! Synthetic accuracy study: a disk with a known center is degraded into
//! base frames, then located in the base frame, in its bicubic upsampling,
//! and in a super-resolution reconstruction from shifted frames. Every trial
//! is run twice, the second time with the disk moved `repeat_shift` pixels
//! to the right.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::Report;
use super::{derive_seed, run_indexed};
use crate::detect;
use crate::error::Result;
use crate::image::{frame_file_name, Image, Window};
use crate::kinematics::Jacobian2x2;
use crate::nav::Mode;
use crate::scene::{self, GroundTruthCircle};
use crate::sr::{self, upsample_bicubic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub trial: usize,
    pub repeat: usize,
    pub mode: Mode,
    /// Ground-truth center (base px).
    pub truth: [f64; 2],
    /// Detected center scaled back to base px; `None` when nothing was found.
    pub estimate: Option<[f64; 2]>,
    pub error_px: f64,
    /// `error_px` divided by the image width.
    pub normalized_error: f64,
}

/// Runs one trial (both repeats) and returns its samples in
/// `(repeat, mode)` order.
pub fn run_numerical_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<Sample>> {
    let sc = &cfg.scene;
    let trial_seed = derive_seed(cfg.seed, &[trial as u64]);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    let mid = sc.canvas as f64 / 2.0;
    let j = sc.center_jitter;
    let jitter = |rng: &mut ChaCha8Rng| {
        if j > 0.0 {
            rng.random_range(-j..=j)
        } else {
            0.0
        }
    };
    let center = [mid + jitter(&mut rng), mid + jitter(&mut rng)];
    let f = cfg.sr.upscale_factor;

    let mut samples = Vec::new();
    for repeat in 0..2 {
        let truth = GroundTruthCircle::new(
            center[0] + repeat as f64 * sc.repeat_shift,
            center[1],
            sc.marker_radius,
        );
        let hi = scene::render_disk(truth, (sc.canvas, sc.canvas), sc.supersample)?;
        let seed = derive_seed(trial_seed, &[repeat as u64]);
        let shifts = sr::generate_offsets(sc.sr_frames, seed, &Jacobian2x2::identity())?;
        let need_all = cfg.modes.contains(&Mode::Sr);
        let count = if need_all { shifts.len() } else { 1 };
        let frames = (0..count)
            .map(|k| {
                let params = cfg.degradation.with_seed(derive_seed(seed, &[1, k as u64]));
                scene::degrade(&hi, &params, shifts.offsets()[k])
            })
            .collect::<Result<Vec<Image>>>()?;
        if cfg.dump_frames {
            let dir = cfg.output_dir.join("frames");
            std::fs::create_dir_all(&dir).map_err(|e| crate::Error::io(&dir, e))?;
            for (k, frame) in frames.iter().enumerate() {
                frame.write_pgm(dir.join(frame_file_name(trial, repeat * count + k)))?;
            }
        }

        let ds = cfg.degradation.downsample_factor as f64;
        let detect_in = |img: &Image, scale: f64| -> Result<Option<[f64; 2]>> {
            let opts = sc.detector.options(sc.radius_range(scale / ds), scale / ds);
            let found = detect::detect_circles_with(img, &opts)?;
            Ok(found.into_iter().next().map(|c| c.center))
        };
        let base = detect_in(&frames[0], 1.0)?;
        for &mode in &cfg.modes {
            let scale = mode.scale(f) as f64;
            // working-image center, in working-image pixels
            let found = match mode {
                Mode::Base => base,
                Mode::Bicubic => detect_in(&upsample_bicubic(&frames[0], f), scale)?,
                Mode::Sr => {
                    let dims = frames[0].dims();
                    let mid = [dims.0 as f64 / 2.0, dims.1 as f64 / 2.0];
                    let half = sc.radius_range(1.0 / ds)[1] + sc.roi_margin;
                    let win = Window::around(base.unwrap_or(mid), half, dims);
                    let result = sr::reconstruct_sr_window(&frames, &shifts, &cfg.sr, &win)?;
                    detect_in(&result.image, scale)?
                        .map(|c| [c[0] + (win.x0 * f) as f64, c[1] + (win.y0 * f) as f64])
                }
            };
            let unit = ds / scale;
            let estimate = found.map(|c| [c[0] * unit, c[1] * unit]);
            let error_px = match estimate {
                Some(e) => (e[0] - truth.center[0]).hypot(e[1] - truth.center[1]),
                None => f64::NAN,
            };
            samples.push(Sample {
                trial,
                repeat,
                mode,
                truth: truth.center,
                estimate,
                error_px,
                normalized_error: error_px / sc.canvas as f64,
            });
        }
    }
    Ok(samples)
}

/// All samples of the study in `(trial, repeat, mode)` order.
pub fn run_numerical(cfg: &ExperimentConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let per_trial = run_indexed(cfg.trials, cfg.workers, |t| run_numerical_trial(cfg, t))?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Runs the study and writes `samples.csv` and `report.json` to
/// `cfg.output_dir`.
pub fn run_numerical_analysis(cfg: &ExperimentConfig) -> Result<Report> {
    let samples = run_numerical(cfg)?;
    let report = Report::from_numerical(cfg, &samples)?;
    report.write_numerical(&cfg.output_dir, &samples)?;
    Ok(report)
}

/// `trial,repeat,mode,truth_x,truth_y,est_x,est_y,error_px,normalized_error` rows.
pub fn samples_csv(samples: &[Sample]) -> String {
    let mut out =
        String::from("trial,repeat,mode,truth_x,truth_y,est_x,est_y,error_px,normalized_error\n");
    for s in samples {
        let (ex, ey) = match s.estimate {
            Some(e) => (format!("{:?}", e[0]), format!("{:?}", e[1])),
            None => ("NaN".into(), "NaN".into()),
        };
        out.push_str(&format!(
            "{},{},{},{:?},{:?},{},{},{:?},{:?}\n",
            s.trial,
            s.repeat,
            s.mode,
            s.truth[0],
            s.truth[1],
            ex,
            ey,
            s.error_px,
            s.normalized_error
        ));
    }
    out
}
