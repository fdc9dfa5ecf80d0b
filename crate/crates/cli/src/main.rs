//! `cascade-roi`: batch driver for the stages between the coarse and fine
//! segmentation networks.
//!
//! Exit status is 0 when every case succeeded, 1 when any case failed (the
//! rest of the batch still runs) and 2 for usage or configuration errors.

mod batch;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cascade_roi::io::{load_config, PipelineConfig};
use cascade_roi::phantom::TumorZone;
use clap::{Args, Parser, Subcommand};

use crate::commands::{Ctx, PhantomArgs};

#[derive(Parser, Debug)]
#[command(name = "cascade-roi", version, about = "Post-processing, ROI and evaluation stages of a two-stage tumor segmentation cascade")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON array of cases.
    #[arg(long)]
    manifest: PathBuf,
    /// `key = value` pipeline configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[arg(long, env = "CASCADE_ROI_JOBS", default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Threshold, group, filter against the lung and keep the Top-K.
    Postprocess(Common),
    /// Crop the coarse prediction (and CT) around each post-processed box.
    ExtractRoi {
        #[command(flatten)]
        common: Common,
        /// Margin in voxels; defaults to `roi_margin` from the config.
        #[arg(long)]
        margin: Option<usize>,
    },
    /// Union stage-2 ROI predictions back into the full grid.
    Pasteback {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        margin: Option<usize>,
    },
    /// Dice, HD95 and boundary Dice for coarse and final masks plus trends.
    Metrics(Common),
    /// Variance and alpha maps from MC samples.
    Uncertainty(Common),
    /// Re-run post-processing and metrics for each value of one config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
    },
    /// Write synthetic cases and a manifest referencing them.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 96)]
        dim: usize,
        #[arg(long, default_value_t = 7.0)]
        tumor_radius: f64,
        /// Comma-separated zones cycled over the cases.
        #[arg(long, value_delimiter = ',', default_value = "peripheral")]
        zone: Vec<TumorZone>,
        /// Comma-separated spurious counts cycled over the cases.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        n_spurious: Vec<usize>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Skip writing the MC sample stack.
        #[arg(long)]
        no_mc: bool,
        #[arg(long, env = "CASCADE_ROI_JOBS", default_value_t = 0)]
        jobs: usize,
    },
}

fn context(common: &Common) -> Result<Ctx> {
    let config = match &common.config {
        Some(p) => load_config(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    let cases = manifest::load_manifest(&common.manifest)?;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(Ctx { cases, config, out: common.out.clone(), pool: batch::pool(common.jobs)? })
}

fn run(cli: Cli) -> Result<Vec<batch::CaseError>> {
    let (out, errors) = match cli.command {
        Command::Postprocess(c) => {
            let ctx = context(&c)?;
            (c.out, commands::postprocess_cmd(&ctx)?)
        }
        Command::ExtractRoi { common, margin } => {
            let ctx = context(&common)?;
            let m = margin.unwrap_or(ctx.config.roi_margin);
            (common.out, commands::extract_roi_cmd(&ctx, m)?)
        }
        Command::Pasteback { common, margin } => {
            let ctx = context(&common)?;
            let m = margin.unwrap_or(ctx.config.roi_margin);
            (common.out, commands::pasteback_cmd(&ctx, m)?)
        }
        Command::Metrics(c) => {
            let ctx = context(&c)?;
            (c.out, commands::metrics_cmd(&ctx)?)
        }
        Command::Uncertainty(c) => {
            let ctx = context(&c)?;
            (c.out, commands::uncertainty_cmd(&ctx)?)
        }
        Command::Sweep { common, key, values } => {
            if !PipelineConfig::is_key(&key) {
                bail!(cascade_roi::Error::UnknownKey(key));
            }
            let ctx = context(&common)?;
            (common.out, commands::sweep_cmd(&ctx, &key, &values)?)
        }
        Command::Phantom { out, count, seed, dim, tumor_radius, zone, n_spurious, noise, no_mc, jobs } => {
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let args = PhantomArgs {
                count,
                seed,
                dim,
                tumor_radius,
                zones: zone,
                n_spurious,
                noise,
                with_mc: !no_mc,
            };
            let errors = commands::phantom_cmd(&out, &batch::pool(jobs)?, &args)?;
            (out, errors)
        }
    };
    commands::write_errors(&out, &errors)?;
    Ok(errors)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(errors) if errors.is_empty() => ExitCode::SUCCESS,
        Ok(errors) => {
            eprintln!("{} case(s) failed; see errors.json", errors.len());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
