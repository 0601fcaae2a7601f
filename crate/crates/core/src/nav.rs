//! Simulated camera-over-robot rig and the closed-loop positioning trial.
//!
//! The rig keeps two poses for the top stage: the commanded pose, which is
//! what the controller believes, and the true pose, which additionally
//! carries the accumulated actuator noise. Images are rendered from the true
//! pose. The bottom stage stays fixed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detect::{self, CircleEstimate, DetectorTuning};
use crate::error::{Error, Result};
use crate::harness::derive_seed;
use crate::image::{frame_file_name, Image, Window};
use crate::kinematics::{
    self, forward_ball_positions, needle_line, Jacobian2x2, RobotState, DEFAULT_JACOBIAN_STEP_MM,
    DEFAULT_TRAVEL_LIMIT_MM,
};
use crate::scene::{self, DegradationParams, GroundTruthCircle};
use crate::sr::{self, upsample_bicubic, ShiftSet, SrOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Base,
    Bicubic,
    Sr,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Base, Mode::Bicubic, Mode::Sr];

    pub fn label(self) -> &'static str {
        match self {
            Mode::Base => "base",
            Mode::Bicubic => "bicubic",
            Mode::Sr => "sr",
        }
    }

    /// Working-image scale relative to the base grid.
    pub fn scale(self, upscale_factor: usize) -> usize {
        match self {
            Mode::Base => 1,
            Mode::Bicubic | Mode::Sr => upscale_factor,
        }
    }

    /// Frames captured per observation.
    pub fn frames_per_observation(self, sr_frames: usize) -> usize {
        match self {
            Mode::Sr => sr_frames,
            Mode::Base | Mode::Bicubic => 1,
        }
    }

    /// Comma-separated list such as `base,bi,sr`.
    pub fn parse_list(s: &str) -> Result<Vec<Mode>> {
        let mut modes = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: Mode = part.parse()?;
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
        if modes.is_empty() {
            return Err(Error::Config("empty mode list".into()));
        }
        Ok(modes)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Mode::Base),
            "bi" | "bicubic" => Ok(Mode::Bicubic),
            "sr" => Ok(Mode::Sr),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigParams {
    pub punctures: usize,
    /// Field of view edge in base pixels.
    pub canvas: usize,
    pub supersample: usize,
    /// Camera scale (px/mm).
    pub camera_scale: f64,
    pub camera_rotation_deg: f64,
    /// Image position (px) of the base-frame origin.
    pub camera_offset: [f64; 2],
    /// Per-axis std (mm) of the error added to every commanded move.
    pub actuator_noise_sigma: f64,
    /// When set, move errors add up as a random walk. Otherwise each move
    /// replaces the previous error with a fresh draw.
    pub accumulate_actuator_noise: bool,
    /// Per-axis relative std of the distance actually travelled on a move.
    pub actuator_gain_sigma: f64,
    /// Per-axis std (mm) of the error added when reading a puncture.
    pub puncture_noise_sigma: f64,
    /// Marker center relative to the top ball, in the base x-y plane (mm).
    pub marker_offset: [f64; 2],
    pub marker_radius_mm: f64,
    /// Start poses are uniform in ± this many mm about the target pose.
    pub start_range_mm: f64,
    /// Corrective moves allowed per puncture.
    pub max_iterations: usize,
    /// Servo stops once the pixel error is below this, in working-image pixels.
    pub convergence_px: f64,
    pub jacobian_step_mm: f64,
    pub minutes_per_frame: f64,
    pub z_top: f64,
    pub z_bottom: f64,
    /// Height of the surface where punctures are read.
    pub puncture_plane_z: f64,
    pub travel_limit_mm: f64,
    pub sr_frames: usize,
    pub radius_tolerance: f64,
    /// SR reconstructs base pixels within `max radius + roi_margin` of the
    /// coarse detection in the first frame.
    pub roi_margin: f64,
    pub detector: DetectorTuning,
}

impl Default for RigParams {
    fn default() -> Self {
        Self {
            punctures: 14,
            canvas: 128,
            supersample: 8,
            camera_scale: 1.0,
            camera_rotation_deg: 0.0,
            camera_offset: [64.0, 64.0],
            actuator_noise_sigma: 0.02,
            accumulate_actuator_noise: false,
            actuator_gain_sigma: 0.02,
            puncture_noise_sigma: 0.0,
            marker_offset: [0.0, 0.0],
            marker_radius_mm: 3.0,
            start_range_mm: 10.0,
            max_iterations: 20,
            convergence_px: 1.0,
            jacobian_step_mm: DEFAULT_JACOBIAN_STEP_MM,
            minutes_per_frame: 0.05,
            z_top: 0.0,
            z_bottom: -50.0,
            puncture_plane_z: 0.0,
            travel_limit_mm: DEFAULT_TRAVEL_LIMIT_MM,
            sr_frames: sr::DEFAULT_FRAME_COUNT,
            radius_tolerance: 0.25,
            roi_margin: 8.0,
            detector: DetectorTuning::default(),
        }
    }
}

impl RigParams {
    /// Imaging degradation used by the benchtop simulation.
    pub fn default_degradation() -> DegradationParams {
        DegradationParams {
            blur_sigma: 1.0,
            noise_sigma: 0.05,
            ..DegradationParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.camera_scale > 0.0 && self.camera_scale.is_finite()) {
            return Err(Error::invalid("camera_scale", "must be > 0"));
        }
        if !(self.actuator_noise_sigma >= 0.0
            && self.puncture_noise_sigma >= 0.0
            && self.actuator_gain_sigma >= 0.0)
        {
            return Err(Error::invalid(
                "actuator_noise_sigma",
                "noise levels must be >= 0",
            ));
        }
        if !(self.marker_radius_mm > 0.0) {
            return Err(Error::invalid("marker_radius_mm", "must be > 0"));
        }
        if self.punctures == 0 || self.canvas == 0 || self.supersample == 0 || self.sr_frames == 0 {
            return Err(Error::invalid(
                "punctures",
                "counts and sizes must be at least 1",
            ));
        }
        if !(self.start_range_mm >= 0.0)
            || !(self.convergence_px > 0.0)
            || !(self.jacobian_step_mm > 0.0)
        {
            return Err(Error::invalid(
                "start_range_mm",
                "ranges and steps must be positive",
            ));
        }
        if !(self.minutes_per_frame >= 0.0) {
            return Err(Error::invalid("minutes_per_frame", "must be >= 0"));
        }
        if !(self.radius_tolerance >= 0.0 && self.radius_tolerance < 1.0) {
            return Err(Error::invalid("radius_tolerance", "must be in [0, 1)"));
        }
        if !(self.roi_margin >= 0.0) {
            return Err(Error::invalid("roi_margin", "must be >= 0"));
        }
        self.detector.validate()?;
        if self.z_top == self.z_bottom {
            return Err(Error::invalid("z_top", "stage planes must be separated"));
        }
        if self.start_range_mm.max(self.jacobian_step_mm) > self.travel_limit_mm {
            return Err(Error::invalid(
                "travel_limit_mm",
                "start range and Jacobian step must fit in the travel",
            ));
        }
        Ok(())
    }

    /// Analytic Jacobian of the camera (px per mm of top-stage motion).
    pub fn camera_jacobian(&self) -> Jacobian2x2 {
        Jacobian2x2::scaled_rotation(self.camera_scale, self.camera_rotation_deg.to_radians())
    }

    pub fn project(&self, world_mm: [f64; 2]) -> [f64; 2] {
        let p = self.camera_jacobian().apply(world_mm);
        [p[0] + self.camera_offset[0], p[1] + self.camera_offset[1]]
    }
}

#[derive(Debug, Clone)]
pub struct Observation {
    /// The working image (base, upsampled, or reconstructed). An SR image
    /// covers only the reconstruction window.
    pub image: Image,
    /// Marker estimate in working-grid pixels of the full field of view.
    pub estimate: CircleEstimate,
    pub frames: usize,
}

pub struct SimulatedRig {
    params: RigParams,
    degradation: DegradationParams,
    sr: SrOptions,
    robot: RobotState,
    drift: [f64; 2],
    rng: ChaCha8Rng,
    seed: u64,
    frames_acquired: usize,
    dump: Option<FrameDump>,
}

struct FrameDump {
    dir: PathBuf,
    trial: usize,
}

impl SimulatedRig {
    pub fn new(
        params: RigParams,
        degradation: DegradationParams,
        sr: SrOptions,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        degradation.validate()?;
        sr.validate()?;
        let mut robot = RobotState::stacked(params.z_top, params.z_bottom)?;
        robot.travel_limit_mm = params.travel_limit_mm;
        Ok(Self {
            params,
            degradation,
            sr,
            robot,
            drift: [0.0; 2],
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0])),
            seed,
            frames_acquired: 0,
            dump: None,
        })
    }

    /// Writes every captured frame to `dir` as `trial{n}_frame{k}.pgm`.
    pub fn dump_frames_to(&mut self, dir: impl AsRef<Path>, trial: usize) -> Result<()> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.dump = Some(FrameDump { dir, trial });
        Ok(())
    }

    pub fn params(&self) -> &RigParams {
        &self.params
    }

    pub fn sr_options(&self) -> &SrOptions {
        &self.sr
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    /// Commanded top-stage position (mm).
    pub fn commanded(&self) -> [f64; 2] {
        self.robot.top_ball
    }

    /// Current actuator error, true minus commanded pose (mm).
    pub fn drift(&self) -> [f64; 2] {
        self.drift
    }

    pub fn frames_acquired(&self) -> usize {
        self.frames_acquired
    }

    fn true_state(&self) -> RobotState {
        let c = self.robot.top_ball;
        self.robot.clone().with_balls(
            [c[0] + self.drift[0], c[1] + self.drift[1]],
            self.robot.bottom_ball,
        )
    }

    /// True marker position in the base x-y plane (mm).
    pub fn marker_world(&self) -> [f64; 2] {
        let (top, _) = forward_ball_positions(&self.true_state());
        [
            top.x + self.params.marker_offset[0],
            top.y + self.params.marker_offset[1],
        ]
    }

    /// Where the camera sees the marker center (base pixels).
    pub fn marker_pixel(&self) -> [f64; 2] {
        self.params.project(self.marker_world())
    }

    /// Executes a relative move. The commanded pose changes by exactly `cmd`;
    /// the true pose also picks up actuator noise.
    pub fn move_by(&mut self, cmd: [f64; 2]) -> Result<()> {
        let c = self.robot.top_ball;
        self.set_commanded([c[0] + cmd[0], c[1] + cmd[1]])
    }

    pub fn move_to(&mut self, target: [f64; 2]) -> Result<()> {
        self.set_commanded(target)
    }

    fn set_commanded(&mut self, target: [f64; 2]) -> Result<()> {
        if !target
            .iter()
            .all(|v| v.is_finite() && v.abs() <= self.params.travel_limit_mm)
        {
            return Err(Error::invalid(
                "command",
                format!(
                    "{target:?} is outside the ±{} mm travel",
                    self.params.travel_limit_mm
                ),
            ));
        }
        let from = self.robot.top_ball;
        self.robot.top_ball = target;
        let mut e = [0.0; 2];
        if self.params.actuator_gain_sigma > 0.0 {
            let g = Normal::new(0.0, self.params.actuator_gain_sigma)
                .map_err(|e| Error::invalid("actuator_gain_sigma", e.to_string()))?;
            for (i, ei) in e.iter_mut().enumerate() {
                *ei += (target[i] - from[i]) * g.sample(&mut self.rng);
            }
        }
        if self.params.actuator_noise_sigma > 0.0 {
            let n = Normal::new(0.0, self.params.actuator_noise_sigma)
                .map_err(|e| Error::invalid("actuator_noise_sigma", e.to_string()))?;
            for ei in e.iter_mut() {
                *ei += n.sample(&mut self.rng);
            }
        }
        if self.params.accumulate_actuator_noise {
            self.drift = [self.drift[0] + e[0], self.drift[1] + e[1]];
        } else {
            self.drift = e;
        }
        Ok(())
    }

    /// Captures one base-resolution frame at the true pose.
    pub fn capture(&mut self) -> Result<Image> {
        let p = &self.params;
        let [x, y] = self.marker_pixel();
        let r = p.marker_radius_mm * p.camera_scale;
        let (w, h) = (p.canvas as f64, p.canvas as f64);
        if x - r < 0.0 || y - r < 0.0 || x + r > w || y + r > h {
            return Err(Error::MarkerOutsideFov {
                x,
                y,
                width: p.canvas,
                height: p.canvas,
            });
        }
        // Render on an integer-aligned grid and let the degradation apply the
        // fractional part as a sub-pixel warp, the way a real scene moves.
        let (ix, iy) = (x.round(), y.round());
        let hi = scene::render_disk(
            GroundTruthCircle::new(ix, iy, r),
            (p.canvas, p.canvas),
            p.supersample,
        )?;
        let params = self
            .degradation
            .with_seed(derive_seed(self.seed, &[1, self.frames_acquired as u64]));
        let mut frame = scene::degrade(&hi, &params, [x - ix, y - iy])?;
        frame.set_pixels_per_mm(p.camera_scale);
        if let Some(d) = &self.dump {
            frame.write_pgm(d.dir.join(frame_file_name(d.trial, self.frames_acquired)))?;
        }
        self.frames_acquired += 1;
        Ok(frame)
    }

    fn detect(&self, img: &Image, scale: f64) -> Option<CircleEstimate> {
        let r = self.params.marker_radius_mm * self.params.camera_scale * scale;
        let tol = self.params.radius_tolerance;
        let opts = self
            .params
            .detector
            .options([r * (1.0 - tol), r * (1.0 + tol)], scale);
        detect::detect_circles_with(img, &opts)
            .ok()
            .and_then(|v| v.into_iter().next())
    }

    fn failed(&self, pose: String, frames: &[Image]) -> Error {
        let mut pose = pose;
        let dir = self
            .dump
            .as_ref()
            .map(|d| (d.dir.clone(), d.trial))
            .unwrap_or_else(|| (std::env::temp_dir().join("srnav-failures"), 0));
        if std::fs::create_dir_all(&dir.0).is_ok() {
            let base = self.frames_acquired - frames.len();
            let written = frames.iter().enumerate().all(|(k, f)| {
                f.write_pgm(
                    dir.0
                        .join(format!("failed_{}", frame_file_name(dir.1, base + k))),
                )
                .is_ok()
            });
            if written {
                pose.push_str(&format!("; frames dumped to {}", dir.0.display()));
            }
        }
        Error::DetectionFailed { pose }
    }

    /// Forward-difference Jacobian from three base frames: at the current
    /// commanded pose and after a `jacobian_step_mm` move along each axis.
    /// The stage is returned to the starting pose afterwards.
    pub fn estimate_jacobian(&mut self) -> Result<Jacobian2x2> {
        let origin = self.commanded();
        let step = self.params.jacobian_step_mm;
        let mut centers = Vec::with_capacity(3);
        for (name, delta) in [
            ("origin pose", [0.0, 0.0]),
            ("+x pose", [step, 0.0]),
            ("+y pose", [0.0, step]),
        ] {
            self.move_to([origin[0] + delta[0], origin[1] + delta[1]])?;
            let frame = self.capture()?;
            match self.detect(&frame, 1.0) {
                Some(c) => centers.push(c.center),
                None => return Err(self.failed(name.into(), &[frame])),
            }
        }
        self.move_to(origin)?;
        kinematics::jacobian_from_centers(centers[0], centers[1], centers[2], step)
    }

    /// Takes one observation in `mode`. `base_jac` maps mm to base pixels and
    /// plans the sub-pixel moves of an SR acquisition.
    pub fn acquire_observation(
        &mut self,
        mode: Mode,
        base_jac: &Jacobian2x2,
    ) -> Result<Observation> {
        let f = self.sr.upscale_factor;
        match mode {
            Mode::Base => {
                let frame = self.capture()?;
                let estimate = self.detect(&frame, 1.0).ok_or_else(|| {
                    self.failed("base observation".into(), std::slice::from_ref(&frame))
                })?;
                Ok(Observation {
                    image: frame,
                    estimate,
                    frames: 1,
                })
            }
            Mode::Bicubic => {
                let frame = self.capture()?;
                let up = upsample_bicubic(&frame, f);
                let estimate = self.detect(&up, f as f64).ok_or_else(|| {
                    self.failed("bicubic observation".into(), std::slice::from_ref(&frame))
                })?;
                Ok(Observation {
                    image: up,
                    estimate,
                    frames: 1,
                })
            }
            Mode::Sr => {
                let n = self.params.sr_frames;
                let plan_seed = derive_seed(self.seed, &[2, self.frames_acquired as u64]);
                let shifts = sr::generate_offsets(n, plan_seed, base_jac)?;
                let (frames, shifts) = self.acquire_shifted(&shifts)?;
                let dims = frames[0].dims();
                let coarse = self
                    .detect(&frames[0], 1.0)
                    .map_or([dims.0 as f64 / 2.0, dims.1 as f64 / 2.0], |c| c.center);
                let r = self.params.marker_radius_mm * self.params.camera_scale;
                let half = r * (1.0 + self.params.radius_tolerance) + self.params.roi_margin;
                let win = Window::around(coarse, half, dims);
                let result = sr::reconstruct_sr_window(&frames, &shifts, &self.sr, &win)?;
                let mut estimate = self
                    .detect(&result.image, f as f64)
                    .ok_or_else(|| self.failed("sr observation".into(), &frames))?;
                estimate.center[0] += (win.x0 * f) as f64;
                estimate.center[1] += (win.y0 * f) as f64;
                Ok(Observation {
                    image: result.image,
                    estimate,
                    frames: n,
                })
            }
        }
    }

    /// Runs the open-loop shift sequence: capture, step through the planned
    /// commands capturing after each, then return to the first point. The
    /// commanded pose afterwards equals the commanded pose before.
    pub fn acquire_shifted(&mut self, shifts: &ShiftSet) -> Result<(Vec<Image>, ShiftSet)> {
        let start = self.commanded();
        let mut frames = Vec::with_capacity(shifts.len());
        for (k, cmd) in shifts.actuator_commands().iter().enumerate() {
            if k > 0 {
                self.move_by(*cmd)?;
            }
            frames.push(self.capture()?);
        }
        if shifts.len() > 1 {
            self.move_to(start)?;
        }
        Ok((frames, shifts.clone()))
    }

    /// True needle-tip position on the puncture surface (mm), plus optional
    /// read-out noise.
    pub fn record_puncture(&mut self) -> Result<[f64; 2]> {
        let (top, bottom) = forward_ball_positions(&self.true_state());
        let line = needle_line(top, bottom)?;
        let mut p = kinematics::intersect_line_plane(&line, self.params.puncture_plane_z)?;
        p[0] += self.params.marker_offset[0];
        p[1] += self.params.marker_offset[1];
        if self.params.puncture_noise_sigma > 0.0 {
            let n = Normal::new(0.0, self.params.puncture_noise_sigma)
                .map_err(|e| Error::invalid("puncture_noise_sigma", e.to_string()))?;
            p[0] += n.sample(&mut self.rng);
            p[1] += n.sample(&mut self.rng);
        }
        Ok(p)
    }

    fn random_start(&mut self, around: [f64; 2]) -> [f64; 2] {
        let r = self.params.start_range_mm;
        if r == 0.0 {
            return around;
        }
        [
            around[0] + self.rng.random_range(-r..=r),
            around[1] + self.rng.random_range(-r..=r),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub mode: Mode,
    pub trial: usize,
    /// Ground-truth puncture positions (mm).
    pub punctures: Vec<[f64; 2]>,
    /// Corrective moves before each puncture.
    pub iterations_per_puncture: Vec<usize>,
    /// Observations taken for each puncture (`iterations + 1`).
    pub observations_per_puncture: Vec<usize>,
    /// Frames captured in the run-up to each puncture; the first entry also
    /// holds the Jacobian frames.
    pub frames_per_puncture: Vec<usize>,
    pub converged: Vec<bool>,
    pub jacobian_frames: usize,
    pub frames_acquired: usize,
    pub wall_time_s: f64,
    /// Base-pixel Jacobian measured at the start of the trial.
    pub jacobian: Jacobian2x2,
    /// Target marker position in working-image pixels.
    pub target_px: [f64; 2],
    /// Pixel error at each puncture, in working-image pixels.
    pub final_error_px: Vec<f64>,
}

impl TrialRecord {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// `mode,puncture_idx,x_mm,y_mm,iterations,frames` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,puncture_idx,x_mm,y_mm,iterations,frames\n");
        for (i, p) in self.punctures.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{:?},{:?},{},{}\n",
                self.mode,
                i,
                p[0],
                p[1],
                self.iterations_per_puncture[i],
                self.frames_per_puncture[i]
            ));
        }
        out
    }
}

/// Runs one closed-loop trial: estimate the Jacobian at the home pose, make
/// the first puncture there (which defines the target), then for every
/// further puncture jump to a random start and servo until the working-image
/// pixel error is below the convergence threshold.
pub fn run_positioning_trial(
    rig: &mut SimulatedRig,
    mode: Mode,
    n_punctures: usize,
    trial: usize,
) -> Result<TrialRecord> {
    if n_punctures == 0 {
        return Err(Error::invalid("n_punctures", "must be at least 1"));
    }
    let home = rig.commanded();
    let frames_before = rig.frames_acquired();
    let base_jac = rig.estimate_jacobian()?;
    base_jac.check_invertible()?;
    let jacobian_frames = rig.frames_acquired() - frames_before;
    let scale = mode.scale(rig.sr.upscale_factor) as f64;
    let jac = base_jac.scaled(scale);
    let threshold = rig.params.convergence_px;
    let cap = rig.params.max_iterations;

    let mut punctures = Vec::with_capacity(n_punctures);
    let mut iterations = Vec::with_capacity(n_punctures);
    let mut observations = Vec::with_capacity(n_punctures);
    let mut frames = Vec::with_capacity(n_punctures);
    let mut converged = Vec::with_capacity(n_punctures);
    let mut final_error = Vec::with_capacity(n_punctures);

    let mut mark = frames_before;
    let first = rig.acquire_observation(mode, &base_jac)?;
    let target = first.estimate.center;
    punctures.push(rig.record_puncture()?);
    iterations.push(0);
    observations.push(1);
    converged.push(true);
    final_error.push(0.0);
    frames.push(rig.frames_acquired() - mark);
    mark = rig.frames_acquired();

    for _ in 1..n_punctures {
        let start = rig.random_start(home);
        rig.move_to(start)?;
        let mut obs = rig.acquire_observation(mode, &base_jac)?;
        let mut moves = 0;
        let mut n_obs = 1;
        let ok = loop {
            let c = obs.estimate.center;
            let err = [target[0] - c[0], target[1] - c[1]];
            let norm = err[0].hypot(err[1]);
            if norm < threshold {
                final_error.push(norm);
                break true;
            }
            if moves == cap {
                final_error.push(norm);
                break false;
            }
            let cmd = kinematics::command_from_pixel_error(err, &jac)?;
            rig.move_by(cmd)?;
            moves += 1;
            obs = rig.acquire_observation(mode, &base_jac)?;
            n_obs += 1;
        };
        punctures.push(rig.record_puncture()?);
        iterations.push(moves);
        observations.push(n_obs);
        converged.push(ok);
        frames.push(rig.frames_acquired() - mark);
        mark = rig.frames_acquired();
    }

    let frames_acquired = rig.frames_acquired() - frames_before;
    Ok(TrialRecord {
        mode,
        trial,
        punctures,
        iterations_per_puncture: iterations,
        observations_per_puncture: observations,
        frames_per_puncture: frames,
        converged,
        jacobian_frames,
        frames_acquired,
        wall_time_s: frames_acquired as f64 * rig.params.minutes_per_frame * 60.0,
        jacobian: base_jac,
        target_px: target,
        final_error_px: final_error,
    })
}
