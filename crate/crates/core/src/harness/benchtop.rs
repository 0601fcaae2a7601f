//! Closed-loop puncture trials on the simulated rig, one trial per mode
//! and seed.

use super::config::ExperimentConfig;
use super::report::Report;
use super::{derive_seed, run_indexed};
use crate::error::Result;
use crate::nav::{run_positioning_trial, Mode, SimulatedRig, TrialRecord};

/// Seed of the rig used for `(trial, mode)`. Independent of which other
/// modes are selected.
pub fn trial_seed(seed: u64, trial: usize, mode: Mode) -> u64 {
    let m = Mode::ALL.iter().position(|&x| x == mode).unwrap_or(0);
    derive_seed(seed, &[trial as u64, m as u64])
}

pub fn run_benchtop_trial(cfg: &ExperimentConfig, trial: usize, mode: Mode) -> Result<TrialRecord> {
    let mut rig = SimulatedRig::new(
        cfg.rig,
        cfg.degradation,
        cfg.sr,
        trial_seed(cfg.seed, trial, mode),
    )?;
    if cfg.dump_frames {
        rig.dump_frames_to(cfg.output_dir.join("frames").join(mode.label()), trial)?;
    }
    run_positioning_trial(&mut rig, mode, cfg.rig.punctures, trial)
}

/// Every `(trial, mode)` record, ordered by trial then by `cfg.modes`.
pub fn run_benchtop(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let m = cfg.modes.len();
    run_indexed(cfg.trials * m, cfg.workers, |i| {
        run_benchtop_trial(cfg, i / m, cfg.modes[i % m])
    })
}

/// Runs the trials and writes one `punctures_trial{n}.csv` per trial plus
/// `report.json` to `cfg.output_dir`.
pub fn run_benchtop_sim(cfg: &ExperimentConfig) -> Result<Report> {
    let records = run_benchtop(cfg)?;
    let report = Report::from_benchtop(cfg, &records)?;
    report.write_benchtop(&cfg.output_dir, &records)?;
    Ok(report)
}
