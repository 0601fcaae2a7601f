//! Run summaries, their on-disk form, and recomputation from the raw CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::numerical::{samples_csv, Sample};
use super::stats::{self, f_test_two_tailed, summarize};
use crate::error::{Error, Result};
use crate::nav::{Mode, TrialRecord};

pub const REPORT_FILE: &str = "report.json";
pub const SAMPLES_FILE: &str = "samples.csv";

pub fn punctures_file_name(trial: usize) -> String {
    format!("punctures_trial{trial}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    /// Detected samples (numerical) or punctures (benchtop).
    pub samples: usize,
    /// Numerical samples where no marker was found; excluded from statistics.
    pub failures: usize,
    /// Mean normalized center error (error / image width).
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub mean_error_px: Option<f64>,
    /// Sample std of the distances from each puncture to its trial centroid,
    /// pooled over trials (mm).
    pub puncture_std_mm: Option<f64>,
    pub mean_distance_mm: Option<f64>,
    pub distances_mm: Vec<f64>,
    /// Corrective moves per puncture, excluding each trial's first puncture.
    pub mean_iterations: Option<f64>,
    pub std_iterations: Option<f64>,
    pub mean_frames_per_trial: Option<f64>,
    pub mean_wall_time_s: Option<f64>,
}

impl ModeSummary {
    fn empty(mode: Mode) -> Self {
        Self {
            mode,
            samples: 0,
            failures: 0,
            mean_error: None,
            std_error: None,
            mean_error_px: None,
            puncture_std_mm: None,
            mean_distance_mm: None,
            distances_mm: Vec::new(),
            mean_iterations: None,
            std_iterations: None,
            mean_frames_per_trial: None,
            mean_wall_time_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: Mode,
    pub b: Mode,
    pub p_value: Option<f64>,
    /// Why no p-value could be computed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mode: Mode,
    pub trial: usize,
    pub puncture_std_mm: f64,
    pub mean_iterations: f64,
    pub frames: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonConverged {
    pub mode: Mode,
    pub trial: usize,
    pub puncture: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub trials: usize,
    pub modes: Vec<ModeSummary>,
    pub f_tests: Vec<PairTest>,
    pub per_trial: Vec<TrialSummary>,
    pub nonconverged: Vec<NonConverged>,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

/// The parts of a trial that the report depends on; all of them are in the
/// puncture CSV except convergence, which lives in the report.
struct TrialData {
    mode: Mode,
    trial: usize,
    punctures: Vec<[f64; 2]>,
    iterations: Vec<usize>,
    frames: Vec<usize>,
}

fn pair_tests(modes: &[Mode], samples: &BTreeMap<Mode, Vec<f64>>) -> Vec<PairTest> {
    let mut out = Vec::new();
    for (i, &a) in modes.iter().enumerate() {
        for &b in &modes[i + 1..] {
            let (xa, xb) = (&samples[&a], &samples[&b]);
            let (p_value, error) = match f_test_two_tailed(xa, xb) {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(PairTest {
                a,
                b,
                p_value,
                error,
            });
        }
    }
    out
}

fn some_finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Report {
    pub fn mode(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn p_value(&self, a: Mode, b: Mode) -> Option<f64> {
        self.f_tests
            .iter()
            .find(|t| (t.a, t.b) == (a, b) || (t.a, t.b) == (b, a))
            .and_then(|t| t.p_value)
    }

    pub fn detection_failures(&self) -> usize {
        self.modes.iter().map(|m| m.failures).sum()
    }

    pub fn from_numerical(cfg: &ExperimentConfig, samples: &[Sample]) -> Result<Self> {
        let mut errors: BTreeMap<Mode, Vec<f64>> = BTreeMap::new();
        let mut modes = Vec::new();
        for &mode in &cfg.modes {
            let ofmode: Vec<&Sample> = samples.iter().filter(|s| s.mode == mode).collect();
            let ok: Vec<&Sample> = ofmode
                .iter()
                .copied()
                .filter(|s| s.estimate.is_some())
                .collect();
            let norm: Vec<f64> = ok.iter().map(|s| s.normalized_error).collect();
            let px: Vec<f64> = ok.iter().map(|s| s.error_px).collect();
            let mut m = ModeSummary::empty(mode);
            m.samples = ok.len();
            m.failures = ofmode.len() - ok.len();
            m.mean_error = some_finite(stats::mean(&norm));
            m.std_error = (norm.len() >= 2).then(|| stats::sample_std(&norm));
            m.mean_error_px = some_finite(stats::mean(&px));
            errors.insert(mode, norm);
            modes.push(m);
        }
        Ok(Self {
            experiment: ExperimentKind::Numerical,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            trials: cfg.trials,
            f_tests: pair_tests(&cfg.modes, &errors),
            modes,
            per_trial: Vec::new(),
            nonconverged: Vec::new(),
            notes: vec![
                "normalized error = euclidean center error / image width".into(),
                "F-tests compare the variances of the normalized errors".into(),
            ],
            config: cfg.clone(),
        })
    }

    pub fn from_benchtop(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Result<Self> {
        let data: Vec<TrialData> = records
            .iter()
            .map(|r| TrialData {
                mode: r.mode,
                trial: r.trial,
                punctures: r.punctures.clone(),
                iterations: r.iterations_per_puncture.clone(),
                frames: r.frames_per_puncture.clone(),
            })
            .collect();
        let nonconverged = records
            .iter()
            .flat_map(|r| {
                r.converged
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| !c)
                    .map(move |(i, _)| NonConverged {
                        mode: r.mode,
                        trial: r.trial,
                        puncture: i,
                    })
            })
            .collect();
        Self::from_trial_data(cfg, &data, nonconverged)
    }

    fn from_trial_data(
        cfg: &ExperimentConfig,
        data: &[TrialData],
        nonconverged: Vec<NonConverged>,
    ) -> Result<Self> {
        let seconds_per_frame = cfg.rig.minutes_per_frame * 60.0;
        let mut distances: BTreeMap<Mode, Vec<f64>> = BTreeMap::new();
        let mut per_trial = Vec::new();
        let mut modes = Vec::new();
        for &mode in &cfg.modes {
            let mut m = ModeSummary::empty(mode);
            let mut dist = Vec::new();
            let mut iters = Vec::new();
            let mut frames = Vec::new();
            for t in data.iter().filter(|t| t.mode == mode) {
                let s = summarize(&t.punctures)?;
                let total: usize = t.frames.iter().sum();
                let moves: Vec<f64> = t.iterations.iter().skip(1).map(|&i| i as f64).collect();
                per_trial.push(TrialSummary {
                    mode,
                    trial: t.trial,
                    puncture_std_mm: s.std,
                    mean_iterations: if moves.is_empty() {
                        0.0
                    } else {
                        stats::mean(&moves)
                    },
                    frames: total,
                    wall_time_s: total as f64 * seconds_per_frame,
                });
                dist.extend(s.distances);
                iters.extend(moves);
                frames.push(total as f64);
                m.samples += t.punctures.len();
            }
            m.puncture_std_mm = (dist.len() >= 2).then(|| stats::sample_std(&dist));
            m.mean_distance_mm = some_finite(stats::mean(&dist));
            m.mean_iterations = some_finite(stats::mean(&iters));
            m.std_iterations = (iters.len() >= 2).then(|| stats::sample_std(&iters));
            m.mean_frames_per_trial = some_finite(stats::mean(&frames));
            m.mean_wall_time_s = m.mean_frames_per_trial.map(|f| f * seconds_per_frame);
            m.distances_mm = dist.clone();
            distances.insert(mode, dist);
            modes.push(m);
        }
        per_trial.sort_by_key(|t| (t.trial, cfg.modes.iter().position(|&m| m == t.mode)));
        Ok(Self {
            experiment: ExperimentKind::BenchtopSim,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            trials: cfg.trials,
            f_tests: pair_tests(&cfg.modes, &distances),
            modes,
            per_trial,
            nonconverged,
            notes: vec![
                "puncture std = sample std of distances from each puncture to its trial centroid, pooled over trials"
                    .into(),
                "F-tests compare the variances of those distance samples".into(),
                "iterations count corrective moves; the first puncture of each trial defines the target".into(),
            ],
            config: cfg.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    fn write_json(&self, dir: &Path) -> Result<()> {
        write(dir, REPORT_FILE, &self.to_json())
    }

    pub fn write_numerical(&self, dir: &Path, samples: &[Sample]) -> Result<()> {
        write(dir, SAMPLES_FILE, &samples_csv(samples))?;
        self.write_json(dir)
    }

    pub fn write_benchtop(&self, dir: &Path, records: &[TrialRecord]) -> Result<()> {
        let mut by_trial: BTreeMap<usize, String> = BTreeMap::new();
        for r in records {
            let csv = r.to_csv();
            let entry = by_trial.entry(r.trial).or_default();
            if entry.is_empty() {
                entry.push_str(&csv);
            } else {
                entry.push_str(csv.split_once('\n').map_or("", |x| x.1));
            }
        }
        for (trial, csv) in &by_trial {
            write(dir, &punctures_file_name(*trial), csv)?;
        }
        self.write_json(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(REPORT_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.clone(),
            reason: e.to_string(),
        })
    }

    /// Rebuilds the report in `dir` from its raw CSV files and the embedded
    /// configuration.
    pub fn recompute(dir: &Path) -> Result<Self> {
        let stored = Self::load(dir)?;
        let cfg = &stored.config;
        match stored.experiment {
            ExperimentKind::Numerical => {
                let samples = read_samples(&dir.join(SAMPLES_FILE))?;
                Self::from_numerical(cfg, &samples)
            }
            ExperimentKind::BenchtopSim => {
                let mut data = Vec::new();
                for trial in 0..cfg.trials {
                    data.extend(read_punctures(
                        &dir.join(punctures_file_name(trial)),
                        trial,
                    )?);
                }
                Self::from_trial_data(cfg, &data, stored.nonconverged.clone())
            }
        }
    }

    /// Plain-text table of the per-mode results.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "experiment: {:?}  seed: {}  trials: {}",
            self.experiment, self.seed, self.trials
        );
        let _ = writeln!(out, "config hash: {}", self.config_hash);
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.5}"));
        for m in &self.modes {
            match self.experiment {
                ExperimentKind::Numerical => {
                    let _ = writeln!(
                        out,
                        "{:>8}: mean error {} (std {}), {} px, n = {}, failures = {}",
                        m.mode,
                        fmt(m.mean_error),
                        fmt(m.std_error),
                        fmt(m.mean_error_px),
                        m.samples,
                        m.failures
                    );
                }
                ExperimentKind::BenchtopSim => {
                    let _ = writeln!(
                        out,
                        "{:>8}: puncture std {} mm, iterations {} (std {}), frames/trial {}, time/trial {} s",
                        m.mode,
                        fmt(m.puncture_std_mm),
                        fmt(m.mean_iterations),
                        fmt(m.std_iterations),
                        fmt(m.mean_frames_per_trial),
                        fmt(m.mean_wall_time_s)
                    );
                }
            }
        }
        for t in &self.f_tests {
            let p = t.p_value.map_or_else(
                || t.error.clone().unwrap_or_default(),
                |p| format!("{p:.3e}"),
            );
            let _ = writeln!(out, "F-test {} vs {}: p = {}", t.a, t.b, p);
        }
        if !self.nonconverged.is_empty() {
            let _ = writeln!(out, "non-convergent punctures: {}", self.nonconverged.len());
        }
        out
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn malformed(path: &Path, line: usize, reason: impl std::fmt::Display) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    }
}

fn csv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(malformed(path, 1, format!("expected header `{header}`")));
    }
    let width = header.split(',').count();
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let cells: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
            if cells.len() != width {
                return Err(malformed(path, i + 2, format!("expected {width} fields")));
            }
            Ok((i + 2, cells))
        })
        .collect()
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, cell: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    cell.parse()
        .map_err(|e: T::Err| malformed(path, line, format!("`{cell}`: {e}")))
}

fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let header = samples_csv(&[]);
    csv_rows(path, header.trim_end())?
        .into_iter()
        .map(|(ln, c)| {
            let ex: f64 = parse(path, ln, &c[5])?;
            let ey: f64 = parse(path, ln, &c[6])?;
            Ok(Sample {
                trial: parse(path, ln, &c[0])?,
                repeat: parse(path, ln, &c[1])?,
                mode: parse(path, ln, &c[2])?,
                truth: [parse(path, ln, &c[3])?, parse(path, ln, &c[4])?],
                estimate: (ex.is_finite() && ey.is_finite()).then_some([ex, ey]),
                error_px: parse(path, ln, &c[7])?,
                normalized_error: parse(path, ln, &c[8])?,
            })
        })
        .collect()
}

fn read_punctures(path: &Path, trial: usize) -> Result<Vec<TrialData>> {
    let mut out: Vec<TrialData> = Vec::new();
    for (ln, c) in csv_rows(path, "mode,puncture_idx,x_mm,y_mm,iterations,frames")? {
        let mode: Mode = parse(path, ln, &c[0])?;
        let idx: usize = parse(path, ln, &c[1])?;
        let t = match out.iter_mut().find(|t| t.mode == mode) {
            Some(t) => t,
            None => {
                out.push(TrialData {
                    mode,
                    trial,
                    punctures: Vec::new(),
                    iterations: Vec::new(),
                    frames: Vec::new(),
                });
                out.last_mut().expect("just pushed")
            }
        };
        if idx != t.punctures.len() {
            return Err(malformed(path, ln, "puncture indices must be consecutive"));
        }
        t.punctures
            .push([parse(path, ln, &c[2])?, parse(path, ln, &c[3])?]);
        t.iterations.push(parse(path, ln, &c[4])?);
        t.frames.push(parse(path, ln, &c[5])?);
    }
    Ok(out)
}
