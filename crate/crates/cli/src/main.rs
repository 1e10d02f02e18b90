//! `minsnr`: reproducible experiment runner.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minsnr_core::data::DatasetKind;
use minsnr_core::sampling::SamplerKind;
use minsnr_core::schedule::ScheduleKind;
use minsnr_core::weighting::{parse_strategy, PredictionTarget};

use crate::config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "minsnr", version, about = "Diffusion loss-weighting experiments on 2-D toy data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a denoiser and log per-bin losses and sample quality.
    Train(Common),
    /// Fine-tune on one timestep bin and report every bin's loss change.
    ConflictProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        focus_bin: Option<usize>,
        #[arg(long)]
        finetune_iters: Option<usize>,
    },
    /// Spread of optimized bin weights across repeated gradient draws.
    Instability {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        sample_sizes: Option<Vec<usize>>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Score weighting strategies with the regularized min-norm objective.
    ObjectiveCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        samples_per_bin: Option<usize>,
    },
    /// Generate samples from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        sampler: Option<SamplerKind>,
        #[arg(long)]
        sampler_steps: Option<usize>,
    },
    /// Paired Min-SNR-gamma runs over several gamma values.
    SweepGamma {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        sweep_seeds: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Flat JSON config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// const | snr | min-snr:G | max-snr:G | external:PATH
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    target: Option<PredictionTarget>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    #[arg(long = "T")]
    steps: Option<usize>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    n_data: Option<usize>,
    #[arg(long)]
    ema_rate: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Common {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        set(&mut cfg.train.seed, self.seed);
        if let Some(s) = &self.strategy {
            cfg.train.strategy = parse_strategy(s)?;
        }
        set(&mut cfg.train.target, self.target);
        if self.gamma.is_some() {
            cfg.gamma = self.gamma;
        }
        set(&mut cfg.train.bins, self.bins);
        set(&mut cfg.train.iterations, self.iters);
        set(&mut cfg.train.learning_rate, self.lr);
        set(&mut cfg.train.batch_size, self.batch);
        set(&mut cfg.schedule, self.schedule);
        set(&mut cfg.steps, self.steps);
        set(&mut cfg.dataset, self.dataset);
        set(&mut cfg.n_data, self.n_data);
        set(&mut cfg.train.ema_rate, self.ema_rate);
        set(&mut cfg.train.eval_every, self.eval_every);
        if self.checkpoint.is_some() {
            cfg.checkpoint = self.checkpoint.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (name, common, cfg) = match cli.command {
        Command::Train(common) => {
            let cfg = common.config()?;
            ("train", common, cfg)
        }
        Command::ConflictProbe {
            common,
            focus_bin,
            finetune_iters,
        } => {
            let mut cfg = common.config()?;
            set(&mut cfg.focus_bin, focus_bin);
            set(&mut cfg.finetune_iters, finetune_iters);
            ("conflict-probe", common, cfg)
        }
        Command::Instability {
            common,
            sample_sizes,
            repeats,
            lambda,
        } => {
            let mut cfg = common.config()?;
            set(&mut cfg.sample_sizes, sample_sizes);
            set(&mut cfg.repeats, repeats);
            set(&mut cfg.relative_lambda, lambda);
            ("instability", common, cfg)
        }
        Command::ObjectiveCompare {
            common,
            strategies,
            lambda,
            samples_per_bin,
        } => {
            let mut cfg = common.config()?;
            set(&mut cfg.compare_strategies, strategies);
            set(&mut cfg.relative_lambda, lambda);
            set(&mut cfg.samples_per_bin, samples_per_bin);
            ("objective-compare", common, cfg)
        }
        Command::Sample {
            common,
            n_samples,
            sampler,
            sampler_steps,
        } => {
            let mut cfg = common.config()?;
            set(&mut cfg.n_samples, n_samples);
            set(&mut cfg.sampler, sampler);
            set(&mut cfg.sampler_steps, sampler_steps);
            ("sample", common, cfg)
        }
        Command::SweepGamma {
            common,
            values,
            sweep_seeds,
        } => {
            let mut cfg = common.config()?;
            set(&mut cfg.values, values);
            set(&mut cfg.sweep_seeds, sweep_seeds);
            ("sweep-gamma", common, cfg)
        }
    };
    let cfg = cfg.resolve()?;
    commands::execute(name, &cfg, &common.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
