//! Command-line surface: argument types and the dispatcher.
//!
//! Kept inside the library so the argument grammar is documented and unit
//! tested alongside everything it drives. The binary in `main.rs` only
//! parses, calls [`run`], and converts the outcome to a process exit code:
//! 0 for success, 2 for configuration/shape/format/io mistakes, 3 for
//! numerics blowups, 4 when a check suite reports failures.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::bench::{bench_run, doubling_ratios, to_csv, BenchTarget};
use crate::data::{gen_dataset, load_dataset, save_dataset};
use crate::erf::erf_map;
use crate::error::{Error, Result};
use crate::init::seeded;
use crate::io::write_pgm;
use crate::model::{load_checkpoint, save_checkpoint, ModelConfig, SegModel};
use crate::train::{evaluate, train, TrainOptions};
use crate::verify::{all_passed, run_suite, SUITES};

#[derive(Parser, Debug)]
#[command(
    name = "segscan",
    version,
    about = "Linear-time segmentation models: train, evaluate, measure, and self-check"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run a verification suite (oracles, grads, shapes, io, or all).
    Check {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Generate a synthetic blob-segmentation dataset on disk.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        count: usize,
        /// Image size as HxW, e.g. 48x48.
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a generated dataset and save a checkpoint plus report.
    Train {
        /// Model configuration JSON (see configs/).
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory produced by `gen`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 300)]
        steps: usize,
        #[arg(long, default_value_t = 3e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the checkpoint and report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Measure an effective receptive field and write it as a PGM heat map.
    Erf {
        #[arg(long)]
        config: PathBuf,
        /// Optional checkpoint; when given, its weights (and embedded
        /// configuration) replace the fresh model from --config.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time a primitive over growing map sizes and write a CSV.
    Bench {
        /// Which primitive: block, natten, ss2d, or global.
        #[arg(long)]
        block: String,
        #[arg(long, default_value_t = 32)]
        channels: usize,
        /// Comma-separated square map sides, e.g. 32,64,128,256.
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `HxW` into `(h, w)`.
pub fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad size {v:?}: {e}"))
    };
    Ok((parse(h)?, parse(w)?))
}

fn read_config(path: &PathBuf) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("reading {}: {e}", path.display())))?;
    ModelConfig::from_json(&text)
}

/// Executes one parsed command. `Ok(code)` is the process exit code for a
/// command that ran to completion; errors map through [`Error::exit_code`].
pub fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Check { suite } => cmd_check(&suite),
        Cmd::Gen {
            seed,
            count,
            size: (h, w),
            classes,
            out,
        } => {
            let data = gen_dataset::<f32>(seed, count, h, w, classes)?;
            save_dataset(&out, &data)?;
            println!(
                "wrote {count} samples of {h}x{w} with {classes} classes to {}",
                out.display()
            );
            Ok(0)
        }
        Cmd::Train {
            config,
            data,
            steps,
            lr,
            seed,
            out,
        } => {
            let cfg = read_config(&config)?;
            let samples = load_dataset::<f32>(&data)?;
            let mut model = SegModel::<f32>::new(&mut seeded(seed), &cfg)?;
            let opts = TrainOptions {
                steps,
                lr,
                seed,
                ..TrainOptions::default()
            };
            let report = train(&mut model, &samples, &opts)?;
            save_checkpoint(&out, &mut model)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::format(format!("report serialization: {e}")))?;
            std::fs::write(out.join("report.json"), json + "\n")?;
            println!(
                "trained {steps} steps: loss {:.4} -> {:.4}, pixel accuracy {:.4}, mean IoU {:.4}",
                report.initial_loss, report.final_loss, report.pixel_accuracy, report.mean_iou
            );
            println!("checkpoint and report.json in {}", out.display());
            Ok(0)
        }
        Cmd::Eval { ckpt, data } => {
            let model: SegModel<f32> = load_checkpoint(&ckpt)?;
            let samples = load_dataset::<f32>(&data)?;
            let (acc, miou) = evaluate(&model, &samples)?;
            println!(
                "{} samples: pixel accuracy {acc:.4}, mean IoU {miou:.4}",
                samples.len()
            );
            Ok(0)
        }
        Cmd::Erf {
            config,
            ckpt,
            size: (h, w),
            samples,
            seed,
            out,
        } => {
            let model: SegModel<f32> = match ckpt {
                Some(dir) => load_checkpoint(&dir)?,
                None => SegModel::new(&mut seeded(seed), &read_config(&config)?)?,
            };
            if h % 32 != 0 || w % 32 != 0 {
                return Err(Error::config(format!(
                    "erf size {h}x{w} must be divisible by 32"
                )));
            }
            let map = erf_map::<f32, _>(
                |img| Ok(model.encoder.forward(img, false)?.f4),
                3,
                h,
                w,
                samples,
                seed,
            )?;
            let bytes: Vec<u8> = map
                .iter()
                .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                .collect();
            write_pgm(&out, &bytes, h, w)?;
            println!(
                "wrote {h}x{w} receptive-field map over {samples} samples to {}",
                out.display()
            );
            Ok(0)
        }
        Cmd::Bench {
            block,
            channels,
            sizes,
            reps,
            out,
        } => {
            let target = BenchTarget::from_name(&block)?;
            let rows = bench_run(target, channels, &sizes, reps)?;
            std::fs::write(&out, to_csv(&rows))?;
            for r in &rows {
                println!("{:>8} tokens ({}x{}): {:.6}s", r.tokens, r.side, r.side, r.seconds);
            }
            let ratios = doubling_ratios(&rows);
            println!(
                "doubling ratios: {}",
                ratios
                    .iter()
                    .map(|r| format!("{r:.2}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            println!("csv in {}", out.display());
            Ok(0)
        }
    }
}

fn cmd_check(suite: &str) -> Result<i32> {
    let names: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else {
        vec![suite]
    };
    let mut failures = 0usize;
    for name in names {
        let outcomes = run_suite(name)?;
        for o in &outcomes {
            let mark = if o.passed { "ok  " } else { "FAIL" };
            println!("{mark} {name}/{}: {}", o.name, o.detail);
        }
        if !all_passed(&outcomes) {
            failures += 1;
        }
    }
    if failures > 0 {
        println!("{failures} suite(s) reported failures");
        return Ok(4);
    }
    println!("all checks passed");
    Ok(0)
}
