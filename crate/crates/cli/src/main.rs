//! `jm` — joint longitudinal-survival modelling from the command line.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::Config;

#[derive(Parser)]
#[command(
    name = "jm",
    about = "Bayesian joint modelling of longitudinal and survival data \
             (Gaussian and t-mixture robust variants, NUTS inference)",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Flat key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (fallback: JM_THREADS, then the chain count).
    #[arg(long)]
    threads: Option<usize>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
struct ModelArgs {
    /// Model variant: gauss, a1, a2, a3, a4.
    #[arg(long)]
    approach: Option<String>,
    /// Interior knots of the a4 dof spline.
    #[arg(long)]
    knots: Option<usize>,
    /// Random-effect family: gaussian or t.
    #[arg(long)]
    re_family: Option<String>,
    /// Gauss-Legendre order for the cumulative hazard.
    #[arg(long)]
    quad_order: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct NutsArgs {
    #[arg(long)]
    chains: Option<usize>,
    /// Total iterations per chain (warm-up included).
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    target_accept: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a joint model to a longitudinal/survival CSV pair.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Longitudinal CSV (long format).
        #[arg(long)]
        long: Option<PathBuf>,
        /// Survival CSV (one row per subject).
        #[arg(long)]
        surv: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        nuts: NutsArgs,
    },
    /// Simulate a dataset from the generating model.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of subjects.
        #[arg(long)]
        n_subjects: Option<usize>,
    },
    /// Multi-replicate simulate-and-refit study.
    Study {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        n_subjects: Option<usize>,
        /// Comma-separated model variants, e.g. gauss,a3,a4.
        #[arg(long)]
        specs: Option<String>,
        #[arg(long)]
        knots: Option<usize>,
        #[command(flatten)]
        nuts: NutsArgs,
    },
    /// Residual and outlier diagnostics for a completed fit directory.
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        /// Fit output directory (with manifest.txt and chain CSVs).
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Follow-up-time bins for the residual dof fits.
        #[arg(long)]
        bins: Option<usize>,
        /// Flagging threshold on the 5% quantile of a mixing variable.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn base_config(common: &CommonArgs) -> anyhow::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    if let Some(out) = &common.out {
        cfg.set("out.dir", out.display());
    }
    cfg.set_if_some("threads", &common.threads);
    if let Some(seed) = common.seed {
        cfg.set("nuts.seed", seed);
        cfg.set("truth.seed", seed);
    }
    Ok(cfg)
}

fn apply_model_args(cfg: &mut Config, model: &ModelArgs) {
    cfg.set_if_some("model.approach", &model.approach);
    cfg.set_if_some("model.knots", &model.knots);
    cfg.set_if_some("model.re_family", &model.re_family);
    cfg.set_if_some("model.quad_order", &model.quad_order);
}

fn apply_nuts_args(cfg: &mut Config, nuts: &NutsArgs) {
    cfg.set_if_some("nuts.chains", &nuts.chains);
    cfg.set_if_some("nuts.iters", &nuts.iters);
    cfg.set_if_some("nuts.warmup", &nuts.warmup);
    cfg.set_if_some("nuts.target_accept", &nuts.target_accept);
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            common,
            long,
            surv,
            model,
            nuts,
        } => base_config(&common).and_then(|mut cfg| {
            if let Some(p) = &long {
                cfg.set("data.long", p.display());
            }
            if let Some(p) = &surv {
                cfg.set("data.surv", p.display());
            }
            apply_model_args(&mut cfg, &model);
            apply_nuts_args(&mut cfg, &nuts);
            commands::fit::run(&cfg)
        }),
        Command::Simulate { common, n_subjects } => base_config(&common).and_then(|mut cfg| {
            cfg.set_if_some("truth.n", &n_subjects);
            commands::simulate::run(&cfg)
        }),
        Command::Study {
            common,
            replicates,
            n_subjects,
            specs,
            knots,
            nuts,
        } => base_config(&common).and_then(|mut cfg| {
            cfg.set_if_some("study.replicates", &replicates);
            cfg.set_if_some("truth.n", &n_subjects);
            cfg.set_if_some("study.specs", &specs);
            cfg.set_if_some("model.knots", &knots);
            apply_nuts_args(&mut cfg, &nuts);
            commands::study::run(&cfg)
        }),
        Command::Diagnose {
            common,
            fit,
            bins,
            threshold,
        } => base_config(&common).and_then(|mut cfg| {
            if let Some(p) = &fit {
                cfg.set("diagnose.fit_dir", p.display());
            }
            cfg.set_if_some("diagnose.bins", &bins);
            cfg.set_if_some("diagnose.threshold", &threshold);
            commands::diagnose::run(&cfg)
        }),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
