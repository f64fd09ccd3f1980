//! Command-line front end: `simulate`, `detect`, `presets` and `validate`.
//!
//! Exit status is 0 for a clean run, 2 when any verdict reports an attack
//! and 1 on error.

mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::protocol::{run_experiment, Execution, ExperimentConfig, ExperimentResult, PRESETS};
use crate::tgi::{
    detect_blinding_gated, detect_time_shift, differential_image, read_image_csv, Image, ImageKind, VerdictRecord,
};

pub use config::{find_line, parse_config, resolve_config, Overrides};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ATTACKED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tgi-monitor", version, about = "Temporal ghost imaging monitor for QKD detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset applied under the file (see `presets`).
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of rounds.
    #[arg(long)]
    pub rounds: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        resolve_config(
            self.config.as_deref(),
            &Overrides {
                preset: self.preset.clone(),
                seed: self.seed,
                rounds: self.rounds,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum DetectMode {
    TimeShift,
    Blinding,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write images, verdicts and a summary.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Create the output directory if it is missing.
        #[arg(long)]
        create: bool,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Re-run a verdict on stored image files and print it as JSON.
    Detect {
        /// Image under test (or a stored differential image).
        image: PathBuf,
        /// Trusted baseline (time shift) or base image (blinding).
        baseline: PathBuf,
        #[arg(long, value_enum)]
        mode: DetectMode,
        /// Analysis settings are taken from this configuration.
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// List the experiment presets.
    Presets,
    /// Check a configuration and print it fully resolved.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Parses `args` and runs the command, returning the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_CLEAN };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Simulate {
            config,
            out,
            create,
            workers,
        } => cmd_simulate(&config.resolve()?, &out, create, workers),
        Command::Detect {
            image,
            baseline,
            mode,
            config,
        } => {
            let cfg = config.resolve()?;
            let record = cmd_detect(&image, &baseline, mode, &cfg)?;
            let mut out = std::io::stdout().lock();
            let json = serde_json::to_string_pretty(&record).expect("verdict serializes");
            writeln!(out, "{json}").map_err(|e| Error::io("<stdout>", e))?;
            Ok(if record.attacked { EXIT_ATTACKED } else { EXIT_CLEAN })
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{:<18} {}", p.name, p.description);
            }
            Ok(EXIT_CLEAN)
        }
        Command::Validate { config } => {
            let cfg = config.resolve()?;
            print!("{}", cfg.to_toml());
            println!("# digest {}", cfg.digest());
            Ok(EXIT_CLEAN)
        }
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, create: bool, workers: Option<usize>) -> Result<i32> {
    if !out.is_dir() {
        if !create {
            return Err(Error::io(
                out,
                std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist (use --create)"),
            ));
        }
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::config("workers", "at least one worker is needed"));
    }
    let result = run_experiment(cfg, Execution::with_workers(workers))?;
    result.write(out)?;
    print_report(&result);
    eprintln!("runtime {:.2} s", result.runtime.as_secs_f64());
    Ok(if result.attacked() { EXIT_ATTACKED } else { EXIT_CLEAN })
}

fn print_report(result: &ExperimentResult) {
    let s = &result.summary;
    println!(
        "preset {}  seed {}  digest {}",
        s.preset.as_deref().unwrap_or("-"),
        s.seed,
        s.config_digest
    );
    println!(
        "rounds {}  joint {}  local {}  qkd {}  abandoned {}",
        s.rounds.total, s.rounds.joint, s.rounds.local, s.rounds.qkd, s.rounds.abandoned
    );
    for img in &result.images {
        let i = &img.image;
        let k = i.peak_index();
        let z = i
            .m()
            .iter()
            .zip(i.sigma())
            .filter(|(_, s)| **s > 0.0)
            .map(|(m, s)| m.abs() / s)
            .fold(0.0, f64::max);
        println!(
            "image {:<20} n {:>11}  peak {:+.4e} at {:.2} ns  max|m|/sigma {:.1}",
            img.name,
            i.n(),
            i.m()[k],
            i.grid().time(k),
            z
        );
    }
    for (name, v) in &result.verdicts {
        println!(
            "verdict {:<11} attacked {:<5}  statistic {:.2}  estimate {}",
            name,
            v.attacked,
            v.statistic,
            v.estimate.map_or("-".to_string(), |e| format!("{e:.5}"))
        );
    }
}

/// Verdict on stored images.
///
/// Time shift: `image` against the trusted `baseline`. Blinding: a stored
/// differential image is tested against the base image directly; any other
/// image is differenced against `baseline` first.
pub fn cmd_detect(image: &Path, baseline: &Path, mode: DetectMode, cfg: &ExperimentConfig) -> Result<VerdictRecord> {
    let img = read_image_csv(image)?;
    let base = read_image_csv(baseline)?;
    let an = &cfg.analysis;
    let (verdict, n) = match mode {
        DetectMode::TimeShift => (
            detect_time_shift(&img.image, &base.image, an.threshold_k)?,
            img.image.n(),
        ),
        DetectMode::Blinding => {
            let diff: Image = match img.kind {
                ImageKind::Differential => img.image.clone(),
                _ => differential_image(&base.image, &img.image)?,
            };
            (detect_blinding_gated(&diff, &base.image, an.threshold_k, an.shape_gate)?, diff.n())
        }
    };
    Ok(VerdictRecord::new(verdict, n, img.config_digest))
}
