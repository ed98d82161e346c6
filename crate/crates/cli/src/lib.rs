//! Command-line front end: manifest-driven batch runs of each pipeline stage
//! and of the full ensemble → subtype → post-processing → evaluation chain.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod summary;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{load_config, WtSource};
pub use error::{CliError, CliResult};
use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "subseg", version, about = "Subtype-adaptive post-processing for brain tumor segmentations")]
pub struct Cli {
    /// Worker threads for case-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Abort on any invalid or failing case instead of skipping it.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Io {
    /// Case manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Preset name (ped, men-rt, met) or TOML/JSON config file; defaults to
    /// the manifest's task preset.
    #[arg(long)]
    pub config: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Radiomic features of each case's whole tumor.
    Features {
        #[command(flatten)]
        io: Io,
        /// Mask whose foreground defines the whole tumor for features.
        #[arg(long, value_enum, default_value = "gt")]
        wt_source: WtSource,
    },
    /// Fit the subtype model on a feature table.
    ClusterFit {
        /// Feature table written by `features`.
        #[arg(long)]
        features: PathBuf,
        /// Preset name (ped, men-rt, met) or TOML/JSON config file.
        #[arg(long)]
        config: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured k-means seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fuse per-model probabilities into label maps.
    Ensemble {
        #[command(flatten)]
        io: Io,
    },
    /// Fit the per-subtype post-processing policy on cross-validated predictions.
    PostprocFit {
        #[command(flatten)]
        io: Io,
        /// Subtype model written by `cluster-fit`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Apply a fitted policy to each case's prediction.
    PostprocApply {
        #[command(flatten)]
        io: Io,
        /// Subtype model written by `cluster-fit`.
        #[arg(long)]
        model: PathBuf,
        /// Policy written by `postproc-fit`.
        #[arg(long)]
        policy: PathBuf,
    },
    /// Lesion-wise and plain Dice/HD95 reports.
    Evaluate {
        #[command(flatten)]
        io: Io,
    },
    /// Ensemble, subtype assignment, post-processing and evaluation.
    Pipeline {
        #[command(flatten)]
        io: Io,
        /// Subtype model written by `cluster-fit`.
        #[arg(long)]
        model: PathBuf,
        /// Policy written by `postproc-fit`.
        #[arg(long)]
        policy: PathBuf,
        /// Mask whose foreground defines the whole tumor for features.
        #[arg(long, value_enum, default_value = "prediction")]
        wt_source: WtSource,
        /// Reuse stage artifacts left by an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Subtype-stratified fold assignment.
    Folds {
        /// Feature table written by `features`.
        #[arg(long)]
        features: PathBuf,
        /// Subtype model written by `cluster-fit`.
        #[arg(long)]
        model: PathBuf,
        /// Preset name (ped, men-rt, met) or TOML/JSON config file.
        #[arg(long)]
        config: String,
        /// Number of folds.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn with_manifest(io: &Io) -> CliResult<(Manifest, subseg::config::TaskConfig)> {
    let manifest = Manifest::load(&io.manifest)?;
    let cfg = load_config(io.config.as_deref(), Some(&manifest), None)?;
    Ok((manifest, cfg))
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let strict = cli.strict;
    match &cli.command {
        Command::Features { io, wt_source } => {
            let (m, cfg) = with_manifest(io)?;
            commands::features(&m, &cfg, *wt_source, &io.out, strict)
        }
        Command::ClusterFit {
            features,
            config,
            out,
            seed,
        } => {
            let cfg = load_config(Some(config), None, *seed)?;
            commands::cluster_fit(features, &cfg, out)
        }
        Command::Ensemble { io } => {
            let (m, cfg) = with_manifest(io)?;
            commands::ensemble(&m, &cfg, &io.out, strict)
        }
        Command::PostprocFit { io, model } => {
            let (m, cfg) = with_manifest(io)?;
            commands::postproc_fit(&m, &cfg, model, &io.out, strict)
        }
        Command::PostprocApply { io, model, policy } => {
            let (m, cfg) = with_manifest(io)?;
            commands::postproc_apply(&m, &cfg, model, policy, &io.out, strict)
        }
        Command::Evaluate { io } => {
            let (m, cfg) = with_manifest(io)?;
            commands::evaluate(&m, &cfg, &io.out, strict)
        }
        Command::Pipeline {
            io,
            model,
            policy,
            wt_source,
            resume,
        } => {
            let (m, cfg) = with_manifest(io)?;
            commands::pipeline(commands::PipelineArgs {
                manifest: &m,
                cfg: &cfg,
                model,
                policy,
                wt_source: *wt_source,
                out: &io.out,
                strict,
                resume: *resume,
            })
        }
        Command::Folds {
            features,
            model,
            config,
            folds,
            out,
        } => {
            let cfg = load_config(Some(config), None, None)?;
            commands::folds(features, model, *folds, &cfg, out)
        }
    }
}

/// Runs a parsed command on a pool of `--jobs` threads.
pub fn run(cli: &Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::validation("--jobs must be positive"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Processing(format!("cannot start worker threads: {e}")))?;
    pool.install(|| dispatch(cli))
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
