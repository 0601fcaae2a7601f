use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use srnav::harness::{run_benchtop_sim, run_numerical_analysis, ExperimentConfig, Report};
use srnav::nav::Mode;

#[derive(Parser)]
#[command(
    name = "srnav",
    version,
    about = "Super-resolution visual navigation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detection accuracy on synthetic disks: base vs bicubic vs SR.
    Numerical {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop puncture trials on the simulated rig.
    Benchtop {
        #[command(flatten)]
        common: Common,
        /// Punctures per trial.
        #[arg(long)]
        punctures: Option<usize>,
        /// Comma-separated subset of base, bi, sr.
        #[arg(long)]
        modes: Option<String>,
    },
    /// Recompute a run's statistics from its CSV files and check them
    /// against its report.json.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Flat `key = value` TOML file overriding the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    workers: Option<usize>,
    /// Write every captured frame as PGM under OUT/frames.
    #[arg(long)]
    dump_frames: bool,
    /// Exit successfully even if some trial did not converge.
    #[arg(long)]
    allow_nonconverged: bool,
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(path) = &self.config {
            cfg.load_overrides(path)
                .with_context(|| format!("loading {}", path.display()))?;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.workers = self.workers;
        cfg.output_dir = self.out.clone();
        cfg.dump_frames = self.dump_frames;
        cfg.validate()?;
        Ok(())
    }
}

fn finish(report: &Report, allow_nonconverged: bool, started: Instant) -> Result<ExitCode> {
    print!("{}", report.summary_text());
    println!("elapsed: {:.1} s", started.elapsed().as_secs_f64());
    let failures = report.detection_failures();
    let stuck = report.nonconverged.len();
    if (failures > 0 || stuck > 0) && !allow_nonconverged {
        eprintln!("{stuck} non-convergent punctures, {failures} detection failures");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    let started = Instant::now();
    match cli.command {
        Command::Numerical { common } => {
            let mut cfg = ExperimentConfig::numerical();
            common.apply(&mut cfg)?;
            let report = run_numerical_analysis(&cfg)?;
            finish(&report, common.allow_nonconverged, started)
        }
        Command::Benchtop {
            common,
            punctures,
            modes,
        } => {
            let mut cfg = ExperimentConfig::benchtop();
            common.apply(&mut cfg)?;
            if let Some(p) = punctures {
                cfg.rig.punctures = p;
            }
            if let Some(m) = modes {
                cfg.modes = Mode::parse_list(&m)?;
            }
            cfg.validate()?;
            let report = run_benchtop_sim(&cfg)?;
            finish(&report, common.allow_nonconverged, started)
        }
        Command::Report { dir } => {
            let stored = Report::load(&dir)?;
            let fresh = Report::recompute(&dir)?;
            print!("{}", fresh.summary_text());
            if fresh != stored {
                bail!(
                    "statistics recomputed from the CSV files differ from {}",
                    dir.join("report.json").display()
                );
            }
            println!("report.json is consistent with the raw data");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
