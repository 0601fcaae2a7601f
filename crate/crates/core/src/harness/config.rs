//! Experiment configuration and flat `key = value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::DetectorTuning;
use crate::error::{Error, Result};
use crate::nav::{Mode, RigParams};
use crate::scene::DegradationParams;
use crate::sr::{Sampling, SrOptions, StepSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Numerical,
    BenchtopSim,
}

/// Synthetic scene used by the numerical analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Base-resolution canvas edge (px).
    pub canvas: usize,
    pub supersample: usize,
    /// Marker radius in base pixels.
    pub marker_radius: f64,
    /// Ground-truth centers are drawn uniformly within ± this many pixels of
    /// the canvas center.
    pub center_jitter: f64,
    /// Horizontal displacement of the repeated acquisition (px).
    pub repeat_shift: f64,
    pub sr_frames: usize,
    /// Detector search range is `marker_radius · (1 ± radius_tolerance)`.
    pub radius_tolerance: f64,
    /// The SR reconstruction covers the base pixels within
    /// `max radius + roi_margin` of the coarse base-frame detection.
    pub roi_margin: f64,
    pub detector: DetectorTuning,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            canvas: 128,
            supersample: 8,
            marker_radius: 3.0,
            center_jitter: 0.5,
            repeat_shift: 1.0,
            sr_frames: 4,
            radius_tolerance: 0.25,
            roi_margin: 8.0,
            detector: DetectorTuning::default(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.canvas == 0 || self.supersample == 0 {
            return Err(Error::invalid(
                "canvas",
                "canvas and supersample must be at least 1",
            ));
        }
        if !(self.marker_radius > 0.0) {
            return Err(Error::invalid("marker_radius", "must be > 0"));
        }
        if !(self.center_jitter >= 0.0) || !self.repeat_shift.is_finite() {
            return Err(Error::invalid("center_jitter", "must be >= 0"));
        }
        if self.sr_frames == 0 {
            return Err(Error::invalid("sr_frames", "must be at least 1"));
        }
        if !(self.radius_tolerance >= 0.0 && self.radius_tolerance < 1.0) {
            return Err(Error::invalid("radius_tolerance", "must be in [0, 1)"));
        }
        if !(self.roi_margin >= 0.0) {
            return Err(Error::invalid("roi_margin", "must be >= 0"));
        }
        self.detector.validate()
    }

    pub fn radius_range(&self, scale: f64) -> [f64; 2] {
        [
            self.marker_radius * (1.0 - self.radius_tolerance) * scale,
            self.marker_radius * (1.0 + self.radius_tolerance) * scale,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    pub modes: Vec<Mode>,
    pub degradation: DegradationParams,
    pub sr: SrOptions,
    pub scene: SceneParams,
    pub rig: RigParams,
    /// Thread count for trial fan-out; `None` uses the global pool.
    /// Results do not depend on it, so it is excluded from the hash.
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    /// Write every captured frame as PGM under `output_dir/frames`.
    #[serde(skip)]
    pub dump_frames: bool,
}

impl ExperimentConfig {
    pub fn numerical() -> Self {
        Self {
            experiment: ExperimentKind::Numerical,
            trials: 100,
            seed: 7,
            modes: Mode::ALL.to_vec(),
            degradation: DegradationParams::default(),
            sr: SrOptions::default(),
            scene: SceneParams::default(),
            rig: RigParams::default(),
            workers: None,
            output_dir: PathBuf::from("out"),
            dump_frames: false,
        }
    }

    pub fn benchtop() -> Self {
        Self {
            experiment: ExperimentKind::BenchtopSim,
            trials: 10,
            degradation: RigParams::default_degradation(),
            sr: SrOptions {
                blur_sigma: RigParams::default_degradation().blur_sigma,
                ..SrOptions::default()
            },
            ..Self::numerical()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        if self.modes.is_empty() {
            return Err(Error::invalid("modes", "at least one mode is required"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        self.degradation.validate()?;
        self.sr.validate()?;
        self.scene.validate()?;
        self.rig.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn load_overrides(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_overrides(&text)
    }

    /// Applies a flat TOML document of `key = value` pairs. Unknown keys
    /// and tables are errors.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in &table {
            self.set(key, value)?;
        }
        self.validate()
    }

    fn set(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        let d = &mut self.degradation;
        let s = &mut self.sr;
        let sc = &mut self.scene;
        let r = &mut self.rig;
        match key {
            "trials" => self.trials = as_usize(key, value)?,
            "seed" => self.seed = as_u64(key, value)?,
            "modes" => self.modes = Mode::parse_list(as_str(key, value)?)?,

            "blur_sigma" => d.blur_sigma = as_f64(key, value)?,
            "downsample_factor" => d.downsample_factor = as_usize(key, value)?,
            "noise_sigma" => d.noise_sigma = as_f64(key, value)?,
            "rng_seed" => d.rng_seed = as_u64(key, value)?,

            "upscale_factor" => s.upscale_factor = as_usize(key, value)?,
            "max_iterations" => s.max_iterations = as_usize(key, value)?,
            "mse_stop_fraction" => s.mse_stop_fraction = as_f64(key, value)?,
            "step_size" => {
                s.step_size = match value {
                    toml::Value::String(v) if v == "auto" => StepSize::Auto,
                    _ => StepSize::Fixed(as_f64(key, value)?),
                }
            }
            "sr_blur_sigma" => s.blur_sigma = as_f64(key, value)?,
            "sampling" => {
                s.sampling = match as_str(key, value)? {
                    "area" => Sampling::Area,
                    "point" => Sampling::Point,
                    other => {
                        return Err(Error::Config(format!("sampling: unknown value `{other}`")))
                    }
                }
            }

            "canvas" => sc.canvas = as_usize(key, value)?,
            "supersample" => sc.supersample = as_usize(key, value)?,
            "marker_radius" => sc.marker_radius = as_f64(key, value)?,
            "center_jitter" => sc.center_jitter = as_f64(key, value)?,
            "repeat_shift" => sc.repeat_shift = as_f64(key, value)?,
            "sr_frames" => {
                let n = as_usize(key, value)?;
                sc.sr_frames = n;
                r.sr_frames = n;
            }
            "radius_tolerance" => sc.radius_tolerance = as_f64(key, value)?,
            "roi_margin" => {
                let m = as_f64(key, value)?;
                sc.roi_margin = m;
                r.roi_margin = m;
            }
            "gradient_sigma" => {
                let g = as_f64(key, value)?;
                sc.detector.gradient_sigma = g;
                r.detector.gradient_sigma = g;
            }
            "support_noise_factor" => {
                let k = as_f64(key, value)?;
                sc.detector.support_noise_factor = k;
                r.detector.support_noise_factor = k;
            }

            "punctures" => r.punctures = as_usize(key, value)?,
            "camera_scale" => r.camera_scale = as_f64(key, value)?,
            "camera_rotation_deg" => r.camera_rotation_deg = as_f64(key, value)?,
            "camera_offset_x" => r.camera_offset[0] = as_f64(key, value)?,
            "camera_offset_y" => r.camera_offset[1] = as_f64(key, value)?,
            "actuator_noise_sigma" => r.actuator_noise_sigma = as_f64(key, value)?,
            "actuator_gain_sigma" => r.actuator_gain_sigma = as_f64(key, value)?,
            "accumulate_actuator_noise" => {
                r.accumulate_actuator_noise = value
                    .as_bool()
                    .ok_or_else(|| type_error(key, "true or false", value))?
            }
            "puncture_noise_sigma" => r.puncture_noise_sigma = as_f64(key, value)?,
            "marker_offset_x" => r.marker_offset[0] = as_f64(key, value)?,
            "marker_offset_y" => r.marker_offset[1] = as_f64(key, value)?,
            "marker_radius_mm" => r.marker_radius_mm = as_f64(key, value)?,
            "start_range_mm" => r.start_range_mm = as_f64(key, value)?,
            "servo_max_iterations" => r.max_iterations = as_usize(key, value)?,
            "convergence_px" => r.convergence_px = as_f64(key, value)?,
            "jacobian_step_mm" => r.jacobian_step_mm = as_f64(key, value)?,
            "minutes_per_frame" => r.minutes_per_frame = as_f64(key, value)?,
            "rig_canvas" => r.canvas = as_usize(key, value)?,
            "rig_supersample" => r.supersample = as_usize(key, value)?,
            "z_top" => r.z_top = as_f64(key, value)?,
            "z_bottom" => r.z_bottom = as_f64(key, value)?,
            "puncture_plane_z" => r.puncture_plane_z = as_f64(key, value)?,
            "travel_limit_mm" => r.travel_limit_mm = as_f64(key, value)?,
            "radius_tolerance_rig" => r.radius_tolerance = as_f64(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }
}

fn type_error(key: &str, want: &str, value: &toml::Value) -> Error {
    Error::Config(format!("{key}: expected {want}, got `{value}`"))
}

fn as_f64(key: &str, value: &toml::Value) -> Result<f64> {
    match value {
        toml::Value::Float(v) => Ok(*v),
        toml::Value::Integer(v) => Ok(*v as f64),
        _ => Err(type_error(key, "a number", value)),
    }
}

fn as_u64(key: &str, value: &toml::Value) -> Result<u64> {
    match value {
        toml::Value::Integer(v) if *v >= 0 => Ok(*v as u64),
        _ => Err(type_error(key, "a non-negative integer", value)),
    }
}

fn as_usize(key: &str, value: &toml::Value) -> Result<usize> {
    as_u64(key, value).map(|v| v as usize)
}

fn as_str<'a>(key: &str, value: &'a toml::Value) -> Result<&'a str> {
    value
        .as_str()
        .ok_or_else(|| type_error(key, "a string", value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply() {
        let mut cfg = ExperimentConfig::numerical();
        cfg.apply_overrides(
            "noise_sigma = 0.05\nupscale_factor = 3\nstep_size = 0.1\nmodes = \"base,sr\"\n",
        )
        .unwrap();
        assert_eq!(cfg.degradation.noise_sigma, 0.05);
        assert_eq!(cfg.sr.upscale_factor, 3);
        assert_eq!(cfg.sr.step_size, StepSize::Fixed(0.1));
        assert_eq!(cfg.modes, vec![Mode::Base, Mode::Sr]);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = ExperimentConfig::numerical();
        assert!(matches!(
            cfg.apply_overrides("nosie_sigma = 0.1"),
            Err(Error::Config(_))
        ));
        assert!(cfg.apply_overrides("noise_sigma = \"high\"").is_err());
        assert!(cfg.apply_overrides("noise_sigma = -1.0").is_err());
    }

    #[test]
    fn hash_tracks_parameters_not_workers() {
        let a = ExperimentConfig::numerical();
        let mut b = a.clone();
        b.workers = Some(3);
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.sr.max_iterations += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
