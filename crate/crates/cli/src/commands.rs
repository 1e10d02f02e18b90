use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use minsnr_core::data::write_points_csv;
use minsnr_core::denoiser::{read_checkpoint, write_checkpoint, DenoiserParams};
use minsnr_core::pareto::SimplexWeights;
use minsnr_core::sampling::{generate, write_samples_csv, SamplerConfig};
use minsnr_core::schedule::Schedule;
use minsnr_core::seed;
use minsnr_core::training::{
    bin_edges, conflict_probe, instability_experiment, objective_comparison, run_dataset, sweep_gamma, train,
    write_sweep_summary, EvalConfig, TrainConfig, OPTIMIZED_LABEL, UGD_LABEL,
};
use minsnr_core::weighting::{parse_strategy, WeightStrategy};

use crate::config::{ExperimentConfig, ParamSource};
use crate::manifest::Manifest;

pub const THREADS_ENV: &str = "MINSNR_THREADS";

/// Writer for files inside the output directory that refuses to touch inputs.
struct Outputs<'a> {
    dir: &'a Path,
    inputs: Vec<PathBuf>,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path, cfg: &ExperimentConfig) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let inputs = cfg.input_files().iter().filter_map(|p| p.canonicalize().ok()).collect();
        Ok(Outputs {
            dir,
            inputs,
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Ok(existing) = path.canonicalize() {
            if self.inputs.contains(&existing) {
                bail!("refusing to overwrite input file {}", path.display());
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    fn finish(self, mut manifest: Manifest<'_>) -> anyhow::Result<()> {
        manifest.outputs = self.written;
        manifest.write(self.dir)
    }
}

fn threads() -> anyhow::Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v} is not a count"))?;
            if n == 0 {
                bail!("{THREADS_ENV} must be >= 1");
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn execute(command: &str, cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let schedule = cfg.schedule()?;
    let mut outputs = Outputs::new(out, cfg)?;
    let mut manifest = Manifest::new(command, cfg)?;
    match command {
        "train" => run_train(cfg, &schedule, &mut outputs)?,
        "conflict-probe" => run_probe(cfg, &schedule, &mut outputs)?,
        "instability" => run_instability(cfg, &schedule, &mut outputs)?,
        "objective-compare" => {
            let note = run_objectives(cfg, &schedule, &mut outputs)?;
            manifest.notes.insert("normalization".into(), note.into());
        }
        "sample" => run_sample(cfg, &schedule, &mut outputs)?,
        "sweep-gamma" => run_sweep(cfg, &schedule, &mut outputs)?,
        other => bail!("unknown command `{other}`"),
    }
    outputs.finish(manifest)
}

fn save_checkpoint(outputs: &mut Outputs<'_>, name: &str, params: &DenoiserParams, seed: u64, iteration: usize) -> anyhow::Result<()> {
    let mut w = outputs.create(name)?;
    write_checkpoint(params, seed, iteration, &mut w)?;
    Ok(())
}

fn run_train(cfg: &ExperimentConfig, schedule: &Schedule, outputs: &mut Outputs<'_>) -> anyhow::Result<()> {
    let data = run_dataset(cfg.dataset, cfg.n_data, cfg.train.seed)?;
    write_points_csv(data.view(), outputs.create("data.csv")?)?;
    let record = train(&cfg.train, &data, schedule)?;
    let mut w = outputs.create("run.csv")?;
    record.write_csv(&mut w, true)?;
    w.flush()?;
    let iters = cfg.train.iterations;
    save_checkpoint(outputs, "checkpoint.bin", &record.params, cfg.train.seed, iters)?;
    save_checkpoint(outputs, "checkpoint_ema.bin", &record.ema, cfg.train.seed, iters)?;
    Ok(())
}

/// The configured checkpoint, or a constant-weight model trained for `checkpoint_iters`.
fn diagnostic_params(cfg: &ExperimentConfig, schedule: &Schedule, outputs: &mut Outputs<'_>) -> anyhow::Result<DenoiserParams> {
    if let Some(path) = &cfg.checkpoint {
        let file = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
        let (_, params) = read_checkpoint(BufReader::new(file))?;
        return Ok(params);
    }
    let base = TrainConfig {
        iterations: cfg.checkpoint_iters,
        strategy: WeightStrategy::Constant,
        eval_every: cfg.checkpoint_iters.max(1),
        eval: EvalConfig {
            metric_samples: 0,
            ..cfg.train.eval.clone()
        },
        ..cfg.train.clone()
    };
    let data = run_dataset(cfg.dataset, cfg.n_data, cfg.train.seed)?;
    let record = train(&base, &data, schedule)?;
    let params = match cfg.diagnostic_params {
        ParamSource::Raw => record.params,
        ParamSource::Ema => record.ema,
    };
    save_checkpoint(outputs, "checkpoint.bin", &params, cfg.train.seed, cfg.checkpoint_iters)?;
    Ok(params)
}

fn run_probe(cfg: &ExperimentConfig, schedule: &Schedule, outputs: &mut Outputs<'_>) -> anyhow::Result<()> {
    let params = diagnostic_params(cfg, schedule, outputs)?;
    let data = run_dataset(cfg.dataset, cfg.n_data, cfg.train.seed)?;
    let probe = conflict_probe(&params, &data, schedule, cfg.focus_bin, cfg.finetune_iters, &cfg.train)?;
    let edges = bin_edges(schedule.steps(), cfg.train.bins)?;
    let mut w = outputs.create("probe.csv")?;
    writeln!(w, "bin,low_t,high_t,before,after,delta")?;
    for b in 0..cfg.train.bins {
        writeln!(
            w,
            "{b},{},{},{},{},{}",
            edges[b],
            edges[b + 1] - 1,
            probe.before[b],
            probe.after[b],
            probe.deltas[b]
        )?;
    }
    Ok(())
}

fn run_instability(cfg: &ExperimentConfig, schedule: &Schedule, outputs: &mut Outputs<'_>) -> anyhow::Result<()> {
    let params = diagnostic_params(cfg, schedule, outputs)?;
    let data = run_dataset(cfg.dataset, cfg.n_data, cfg.train.seed)?;
    let rows = instability_experiment(
        &params,
        &data,
        schedule,
        &cfg.sample_sizes,
        cfg.repeats,
        cfg.relative_lambda,
        seed::derive(cfg.train.seed, "instability"),
        &cfg.diagnostics(),
    )?;
    let mut w = outputs.create("instability.csv")?;
    writeln!(w, "sample_size,weight_std")?;
    for r in rows {
        writeln!(w, "{},{}", r.sample_size, r.weight_std)?;
    }
    Ok(())
}

fn run_objectives(cfg: &ExperimentConfig, schedule: &Schedule, outputs: &mut Outputs<'_>) -> anyhow::Result<&'static str> {
    let params = diagnostic_params(cfg, schedule, outputs)?;
    let data = run_dataset(cfg.dataset, cfg.n_data, cfg.train.seed)?;
    let strategies = cfg
        .compare_strategies
        .iter()
        .map(|s| parse_strategy(s))
        .collect::<Result<Vec<_>, _>>()?;
    let table = objective_comparison(
        &params,
        &data,
        schedule,
        &strategies,
        cfg.relative_lambda,
        cfg.train.bins,
        cfg.train.seed,
        &cfg.diagnostics(),
    )?;
    table.write_csv(outputs.create("objectives.csv")?)?;
    let edges = bin_edges(schedule.steps(), cfg.train.bins)?;
    for (label, file) in [(OPTIMIZED_LABEL, "weights_frank_wolfe.csv"), (UGD_LABEL, "weights_ugd.csv")] {
        let row = table.rows.iter().find(|r| r.label == label).expect("solver rows present");
        SimplexWeights::new(row.weights.clone())?.write_csv(&edges, outputs.create(file)?)?;
    }
    Ok(table.normalization)
}

fn run_sample(cfg: &ExperimentConfig, schedule: &Schedule, outputs: &mut Outputs<'_>) -> anyhow::Result<()> {
    let Some(path) = &cfg.checkpoint else {
        bail!("sample needs --checkpoint");
    };
    let file = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    let (_, params) = read_checkpoint(BufReader::new(file))?;
    let sampler = SamplerConfig {
        kind: cfg.sampler,
        steps: cfg.sampler_steps,
        seed: seed::derive(cfg.train.seed, "sample"),
    };
    let samples = generate(&params, schedule, cfg.train.target, &sampler, cfg.n_samples)?;
    write_samples_csv(&samples, outputs.create("samples.csv")?)?;
    Ok(())
}

fn run_sweep(cfg: &ExperimentConfig, schedule: &Schedule, outputs: &mut Outputs<'_>) -> anyhow::Result<()> {
    if cfg.sweep_seeds == 0 {
        bail!("sweep_seeds must be >= 1");
    }
    let seeds: Vec<u64> = (0..cfg.sweep_seeds as u64).map(|k| cfg.train.seed + k).collect();
    let runs = sweep_gamma(&cfg.train, cfg.dataset, cfg.n_data, schedule, &cfg.values, &seeds, threads()?)?;
    for run in &runs {
        let mut w = outputs.create(&format!("runs/gamma_{}_seed_{}.csv", run.gamma, run.seed))?;
        run.record.write_csv(&mut w, true)?;
    }
    write_sweep_summary(&runs, outputs.create("summary.csv")?)?;
    Ok(())
}
