//! The `ffm` command line: dataset generation, purification, crossing
//! analysis, training, sampling, evaluation and the two ablations.
//!
//! Exit codes: 0 on success, 1 for invalid arguments, configuration or
//! inputs, 2 when a valid run fails.

pub mod config;
pub mod error;
pub mod ledger;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ffm_core::phantom::Split;
use ffm_core::purify::Combination;

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ffm", version, about = "Paired low-dose CT denoising pipeline")]
pub struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn parse_combination(s: &str) -> Result<Combination, String> {
    s.parse().map_err(|e: ffm_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic paired dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing dataset.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
    },
    /// Write purified images and an augmented manifest.
    Purify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_parser = parse_combination)]
        combination: Option<Combination>,
        /// Gaussian presmoothing of the uLDCT before thresholding.
        #[arg(long)]
        presmooth_sigma: Option<f64>,
        /// Opening and closing of the uLDCT mask.
        #[arg(long, value_enum)]
        morph: Option<OnOff>,
        #[arg(long)]
        psp_threshold: Option<f64>,
    },
    /// Crossing rates of raw and purified pairs.
    AnalyzeCrossing {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Headline similarity floor.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Train the velocity network on the train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_combination)]
        combination: Option<Combination>,
        /// Purification T used for the training inputs.
        #[arg(long)]
        t_param: Option<f64>,
        #[arg(long, value_enum)]
        frequency: Option<OnOff>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        steps_per_epoch: Option<usize>,
        /// Replaces the global seed for this run.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Denoise the uLDCT images of a split.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        /// Euler steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Score denoised images against IP(NDCT).
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory of `sample`.
        #[arg(long)]
        denoised: PathBuf,
        /// CSV report path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        method: Option<String>,
    },
    /// Train and evaluate once per purification T.
    AblateT {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated T values; defaults to 0.0,0.1,...,0.5.
        #[arg(long, value_delimiter = ',')]
        t_list: Option<Vec<f64>>,
    },
    /// Train and evaluate with and without frequency modules.
    AblateDomain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs one parsed command; returns the lines for stdout.
pub fn execute(cli: Cli) -> Result<Vec<String>, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let show = |p: &std::path::Path| p.display().to_string();
    match cli.command {
        Command::Generate { out, force, count, size } => {
            if let Some(c) = count {
                cfg.dataset.count = c;
            }
            if let Some(s) = size {
                cfg.dataset.size = s;
            }
            cfg.validate()?;
            let manifest = pipeline::generate(&cfg, &out, force)?;
            Ok(vec![
                format!("generated {} samples", cfg.dataset.count),
                show(&manifest),
            ])
        }
        Command::Purify {
            manifest,
            t,
            combination,
            presmooth_sigma,
            morph,
            psp_threshold,
        } => {
            let opts = pipeline::PurifyOptions {
                t,
                combination,
                presmooth_sigma,
                morph: morph.map(bool::from),
                psp_threshold,
            };
            let out = pipeline::purify(&cfg, &manifest, &opts)?;
            Ok(vec![
                format!(
                    "psp keep ratio at {:.2}: raw {:.4}, purified {:.4}",
                    out.psp.threshold, out.psp.raw_keep_ratio, out.psp.ip_keep_ratio
                ),
                show(&out.manifest),
            ])
        }
        Command::AnalyzeCrossing { manifest, out, p } => {
            let o = pipeline::analyze_crossing(&cfg, &manifest, &out, p)?;
            let s = &o.summary;
            Ok(vec![
                format!(
                    "crossing rate at p = {:.2}: raw {:.6}, purified {:.6} ({} pairs)",
                    s.raw.p, s.raw.crossing_rate, s.ip.crossing_rate, s.raw.examined
                ),
                show(&o.json),
                show(&o.csv),
            ])
        }
        Command::Train {
            manifest,
            out,
            combination,
            t_param,
            frequency,
            epochs,
            steps_per_epoch,
            seed,
        } => {
            let opts = pipeline::TrainOptions {
                combination,
                t_param,
                frequency: frequency.map(bool::from),
                epochs,
                steps_per_epoch,
                seed,
            };
            let o = pipeline::train(&cfg, &manifest, &out, &opts)?;
            Ok(vec![
                format!(
                    "{} steps in {:.1} s, final loss {:.3e}",
                    o.log.records.len(),
                    o.seconds,
                    o.log.final_loss().unwrap_or(f64::NAN)
                ),
                show(&o.loss_csv),
                show(&o.checkpoint),
            ])
        }
        Command::Sample {
            checkpoint,
            manifest,
            out,
            split,
            steps,
        } => {
            let index = pipeline::sample(&cfg, &checkpoint, &manifest, &out, split.map(Split::from), steps)?;
            Ok(vec![show(&index)])
        }
        Command::Evaluate {
            manifest,
            denoised,
            out,
            method,
        } => {
            let o = pipeline::evaluate(&cfg, &manifest, &denoised, &out, method.as_deref())?;
            let mut lines: Vec<String> = o.report.to_csv().lines().map(str::to_string).collect();
            lines.push(show(&o.csv));
            Ok(lines)
        }
        Command::AblateT { manifest, out, t_list } => {
            let ts = t_list.unwrap_or_else(pipeline::default_t_list);
            let o = pipeline::ablate_t(&cfg, &manifest, &out, &ts)?;
            let mut lines: Vec<String> = pipeline::t_ablation_csv(&o.rows).lines().map(str::to_string).collect();
            lines.push(show(&o.csv));
            Ok(lines)
        }
        Command::AblateDomain { manifest, out } => {
            let o = pipeline::ablate_domain(&cfg, &manifest, &out)?;
            let mut lines: Vec<String> = o.ablation.to_csv().lines().map(str::to_string).collect();
            lines.push(show(&o.csv));
            Ok(lines)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
