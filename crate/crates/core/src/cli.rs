//! Command-line front end. Machine-readable results go to stdout, progress
//! and diagnostics to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::data::{
    generate_synthetic_dataset, load_manifest, load_volume, save_volume, Label, Split, SynthSpec,
    Volume,
};
use crate::error::{Error, Result};
use crate::model::{load_checkpoint, HeadMode};
use crate::resampling::{apply_plan, plan_indexes, resize_stack, standardize, Branch};
use crate::rng::Rng;
use crate::train::{benchmark_inference, evaluate, infer, train, Preset, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "ctnet",
    version,
    about = "Slice-resampled CNN/transformer classifier for CT volumes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Fc,
    Fused,
}

impl From<ModeArg> for HeadMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fc => HeadMode::Fc,
            ModeArg::Fused => HeadMode::Fused,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset and its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cases: usize,
        #[arg(long)]
        pos_frac: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        depth_min: Option<usize>,
        #[arg(long)]
        depth_max: Option<usize>,
        /// In-plane slice size.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Resample, resize and standardize one volume into a model input.
    Resample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        renum_ct: usize,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from scratch and write a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// Also append the per-epoch log to this file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a labeled manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify one volume.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Time preprocessing plus inference on one volume.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json value serializes")
    );
}

fn run_command(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            cases,
            pos_frac,
            seed,
            depth_min,
            depth_max,
            size,
        } => {
            let base = SynthSpec::default();
            let spec = SynthSpec {
                n_cases: cases,
                positive_fraction: pos_frac,
                depth_range: (
                    depth_min.unwrap_or(base.depth_range.0),
                    depth_max.unwrap_or(base.depth_range.1),
                ),
                slice_size: size.unwrap_or(base.slice_size),
                seed,
                ..base
            };
            let manifest = generate_synthetic_dataset(&spec, &out)?;
            let covid = manifest
                .records
                .iter()
                .filter(|r| r.label == Some(Label::Covid))
                .count();
            print_json(&json!({
                "manifest": out.join("manifest.csv"),
                "cases": manifest.records.len(),
                "covid": covid,
                "non_covid": manifest.records.len() - covid,
            }));
        }
        Command::Resample {
            input,
            renum_ct,
            size,
            seed,
            out,
        } => {
            let volume = load_volume(&input)?;
            let plan = plan_indexes(volume.depth(), renum_ct, &mut Rng::new(seed))?;
            let stack = standardize(&resize_stack(&apply_plan(&volume, &plan)?, size));
            save_volume(
                &Volume::from_f32(renum_ct, size, size, stack.into_data())?,
                &out,
            )?;
            print_json(&json!({
                "source_depth": plan.source_depth,
                "branch": match plan.branch { Branch::Uniform => "uniform", Branch::Oversample => "oversample" },
                "indexes": plan.indexes,
                "out": out,
            }));
        }
        Command::Train {
            manifest,
            preset,
            seed,
            out,
            epochs,
            lr,
            batch,
            log,
        } => {
            let manifest = load_manifest(&manifest, Split::Train)?;
            let mut cfg = TrainConfig::preset(preset.into());
            if let Some(e) = epochs {
                cfg = cfg.with_epochs(e);
            }
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.batch_size = batch.unwrap_or(cfg.batch_size);
            cfg.seed = seed;
            let mut log_file = match &log {
                Some(p) => Some(fs::File::create(p).map_err(|e| Error::io(p, e))?),
                None => None,
            };
            let mut log_err = None;
            let (_, history) = train(&manifest, &cfg, Some(&out), |entry| {
                eprintln!("{entry}");
                if let Some(f) = log_file.as_mut() {
                    if let Err(e) = writeln!(f, "{entry}") {
                        log_err.get_or_insert(e);
                    }
                }
            })?;
            if let (Some(e), Some(p)) = (log_err, log) {
                return Err(Error::io(p, e));
            }
            let last = history.last().expect("at least one epoch");
            print_json(&json!({
                "checkpoint": out,
                "epochs": cfg.epochs,
                "final_loss": last.loss,
                "train_macro_f1": last.train_macro_f1,
            }));
        }
        Command::Eval {
            ckpt,
            manifest,
            mode,
            out,
        } => {
            let params = load_checkpoint(&ckpt)?;
            let manifest = load_manifest(&manifest, Split::Test)?;
            let report = evaluate(&params, &manifest, mode.into())?.to_json();
            match out {
                Some(p) => fs::write(&p, report).map_err(|e| Error::io(p, e))?,
                None => print!("{report}"),
            }
        }
        Command::Infer { ckpt, volume, mode } => {
            let params = load_checkpoint(&ckpt)?;
            let pred = infer(&params, &load_volume(&volume)?, mode.into())?;
            print_json(&json!({
                "label": pred.label.token(),
                "probabilities": {
                    Label::Covid.token(): pred.probabilities[0],
                    Label::NonCovid.token(): pred.probabilities[1],
                },
                "mode": pred.mode.as_str(),
            }));
        }
        Command::Bench {
            ckpt,
            volume,
            repeats,
        } => {
            let params = load_checkpoint(&ckpt)?;
            let stats = benchmark_inference(&params, &load_volume(&volume)?, repeats)?;
            print_json(&serde_json::to_value(stats).expect("stats serialize"));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
