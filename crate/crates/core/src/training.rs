//! Training loop and the timestep-conflict diagnostics built on it.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{make_dataset, DatasetKind, ToyDataset};
use crate::denoiser::{
    diffuse, forward, init_params, target_values, weighted_regression_loss, DenoiserParams,
    DEFAULT_EMBED_DIM, DEFAULT_HIDDEN,
};
use crate::error::{Error, Result};
use crate::metrics::sliced_wasserstein;
use crate::pareto::{
    min_norm_frank_wolfe, regularized_objective, ugd_solve, GradientBundle, SimplexWeights, UgdConfig,
    DEFAULT_FW_MAX_ITER, DEFAULT_FW_TOL, DEFAULT_UGD_ITERS, DEFAULT_UGD_LR,
};
use crate::sampling::{generate, SamplerConfig, SamplerKind};
use crate::schedule::Schedule;
use crate::seed;
use crate::weighting::{parse_strategy, weights_table, PredictionTarget, WeightStrategy};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_EMA_RATE: f64 = 0.9999;

mod strategy_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &WeightStrategy, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&s.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<WeightStrategy, D::Error> {
        let text = String::deserialize(de)?;
        parse_strategy(&text).map_err(serde::de::Error::custom)
    }
}

/// How each evaluation row is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Monte-Carlo samples per bin for the per-bin losses.
    #[serde(rename = "eval_samples_per_bin")]
    pub samples_per_bin: usize,
    /// Generated points compared against held-out data; 0 disables the metric.
    #[serde(rename = "eval_metric_samples")]
    pub metric_samples: usize,
    #[serde(rename = "eval_sampler_steps")]
    pub sampler_steps: usize,
    #[serde(rename = "eval_sampler")]
    pub sampler: SamplerKind,
    #[serde(rename = "eval_projections")]
    pub projections: usize,
    /// Evaluate the EMA parameters rather than the raw ones.
    #[serde(rename = "eval_use_ema")]
    pub use_ema: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples_per_bin: 256,
            metric_samples: 2048,
            sampler_steps: 100,
            sampler: SamplerKind::Ancestral,
            projections: 128,
            use_ema: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(alias = "iters")]
    pub iterations: usize,
    #[serde(alias = "batch")]
    pub batch_size: usize,
    #[serde(alias = "lr")]
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub warmup_iters: usize,
    pub ema_rate: f64,
    pub seed: u64,
    #[serde(with = "strategy_serde")]
    pub strategy: WeightStrategy,
    pub target: PredictionTarget,
    pub bins: usize,
    pub eval_every: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Iterations at which raw and EMA parameters are kept in the record.
    pub snapshots: Vec<usize>,
    #[serde(flatten)]
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 20_000,
            batch_size: 256,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            weight_decay: 0.0,
            warmup_iters: 500,
            ema_rate: DEFAULT_EMA_RATE,
            seed: 0,
            strategy: WeightStrategy::Constant,
            target: PredictionTarget::X0,
            bins: DEFAULT_BINS,
            eval_every: 1000,
            hidden: DEFAULT_HIDDEN.to_vec(),
            embed_dim: DEFAULT_EMBED_DIM,
            snapshots: Vec::new(),
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::invalid(format!("adam betas must lie in [0, 1), got ({b1}, {b2})")));
        }
        if !(self.ema_rate > 0.0 && self.ema_rate < 1.0) {
            return Err(Error::invalid(format!("ema_rate must lie in (0, 1), got {}", self.ema_rate)));
        }
        if self.bins == 0 {
            return Err(Error::invalid("bins must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::invalid("eval_every must be >= 1"));
        }
        if self.eval.samples_per_bin == 0 {
            return Err(Error::invalid("eval samples_per_bin must be >= 1"));
        }
        self.strategy.validate()
    }

    pub fn layer_dims(&self, data_dim: usize) -> Vec<usize> {
        let mut dims = vec![data_dim];
        dims.extend(&self.hidden);
        dims.push(data_dim);
        dims
    }
}

/// Learning rate at zero-based iteration `i` under linear warm-up.
pub fn warmup_lr(base: f64, warmup_iters: usize, i: usize) -> f64 {
    if i < warmup_iters {
        base * (i + 1) as f64 / warmup_iters as f64
    } else {
        base
    }
}

/// `ema <- rate * ema + (1 - rate) * theta`.
pub fn ema_update(ema: &mut [f64], theta: &[f64], rate: f64) -> Result<()> {
    if ema.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: ema.len(),
            actual: theta.len(),
            context: "ema parameters",
        });
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("ema rate must lie in [0, 1], got {rate}")));
    }
    for (e, &x) in ema.iter_mut().zip(theta) {
        *e = rate * *e + (1.0 - rate) * x;
    }
    Ok(())
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    betas: (f64, f64),
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize, betas: (f64, f64), eps: f64, weight_decay: f64) -> Self {
        Adam {
            betas,
            eps,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        let (b1, b2) = self.betas;
        self.step += 1;
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (((p, &g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let update = (*m / c1) / ((*v / c2).sqrt() + self.eps);
            *p -= lr * (update + self.weight_decay * *p);
        }
    }
}

/// Uniform partition of `1..=steps` into `bins` half-open ranges; `bins + 1` edges.
pub fn bin_edges(steps: usize, bins: usize) -> Result<Vec<usize>> {
    if bins == 0 || bins > steps {
        return Err(Error::invalid(format!("need 1 <= bins <= T, got bins={bins}, T={steps}")));
    }
    Ok((0..=bins).map(|b| 1 + b * steps / bins).collect())
}

/// One random diffusion training batch.
struct Batch {
    x0: Array2<f64>,
    t: Vec<usize>,
    noise: Array2<f64>,
}

fn draw_batch(rng: &mut ChaCha8Rng, data: ArrayView2<'_, f64>, n: usize, t_range: (usize, usize)) -> Batch {
    let dim = data.ncols();
    let mut x0 = Array2::zeros((n, dim));
    let mut t = Vec::with_capacity(n);
    let mut noise = Array2::zeros((n, dim));
    for i in 0..n {
        let idx = rng.random_range(0..data.nrows());
        x0.row_mut(i).assign(&data.row(idx));
        t.push(rng.random_range(t_range.0..=t_range.1));
        for j in 0..dim {
            noise[[i, j]] = rng.sample(StandardNormal);
        }
    }
    Batch { x0, t, noise }
}

fn batch_loss_and_grad(
    params: &DenoiserParams,
    batch: &Batch,
    schedule: &Schedule,
    strategy: &WeightStrategy,
    target: PredictionTarget,
) -> Result<(f64, Vec<f64>)> {
    let x_t = diffuse(batch.x0.view(), &batch.t, batch.noise.view(), schedule)?;
    let truth = target_values(target, batch.x0.view(), batch.noise.view(), &batch.t, schedule)?;
    let weights = batch
        .t
        .iter()
        .map(|&t| strategy.loss_weight(target, t, schedule))
        .collect::<Result<Vec<_>>>()?;
    weighted_regression_loss(params, x_t.view(), &batch.t, schedule.steps(), truth.view(), &weights)
}

/// Exact affine forward diffusion `x_t = alpha_t x0 + sigma_t eps`.
pub fn sample_forward(
    x0: ArrayView2<'_, f64>,
    t: &[usize],
    noise: ArrayView2<'_, f64>,
    schedule: &Schedule,
) -> Result<Array2<f64>> {
    diffuse(x0, t, noise, schedule)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub iteration: usize,
    /// Mean weighted training loss since the previous row.
    pub loss: f64,
    pub bin_losses: Vec<f64>,
    pub metric: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub params: DenoiserParams,
    pub ema: DenoiserParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<EvalRow>,
    pub params: DenoiserParams,
    pub ema: DenoiserParams,
    pub snapshots: Vec<Snapshot>,
    pub bins: usize,
}

impl RunRecord {
    pub fn final_row(&self) -> &EvalRow {
        self.rows.last().expect("at least one evaluation row")
    }

    pub fn row_at(&self, iteration: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.iteration == iteration)
    }

    /// `iteration,loss,binloss_0..binloss_{B-1},metric,seconds`
    pub fn write_csv<W: Write>(&self, mut out: W, include_time: bool) -> Result<()> {
        let mut header = vec!["iteration".to_string(), "loss".to_string()];
        header.extend((0..self.bins).map(|b| format!("binloss_{b}")));
        header.push("metric".into());
        header.push("seconds".into());
        writeln!(out, "{}", header.join(","))?;
        for row in &self.rows {
            let mut fields = vec![row.iteration.to_string(), row.loss.to_string()];
            fields.extend(row.bin_losses.iter().map(f64::to_string));
            fields.push(row.metric.to_string());
            fields.push(if include_time { format!("{:.3}", row.seconds) } else { "0".into() });
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Held-out reference set for the sample-quality metric.
pub fn heldout_reference(dataset: &ToyDataset, n: usize) -> Result<ToyDataset> {
    make_dataset(dataset.kind, n.max(2), seed::derive(dataset.seed, "heldout"))
}

/// Sliced Wasserstein between generated samples and a held-out set.
pub fn sample_quality(
    params: &DenoiserParams,
    schedule: &Schedule,
    target: PredictionTarget,
    reference: &ToyDataset,
    eval: &EvalConfig,
    seed: u64,
) -> Result<f64> {
    let sampler = SamplerConfig {
        kind: eval.sampler,
        steps: eval.sampler_steps,
        seed: seed::derive(seed, "eval-sampler"),
    };
    let samples = generate(params, schedule, target, &sampler, reference.len())?;
    sliced_wasserstein(
        samples.view(),
        reference.view(),
        eval.projections,
        seed::derive(seed, "eval-projections"),
    )
}

/// Trains a freshly initialized denoiser.
pub fn train(config: &TrainConfig, dataset: &ToyDataset, schedule: &Schedule) -> Result<RunRecord> {
    config.validate()?;
    let params = init_params(
        &config.layer_dims(dataset.dim()),
        config.embed_dim,
        dataset.dim(),
        seed::derive(config.seed, "init"),
    )?;
    train_from(params, config, dataset, schedule)
}

/// Continues training from `params` with fresh optimizer state.
pub fn train_from(
    mut params: DenoiserParams,
    config: &TrainConfig,
    dataset: &ToyDataset,
    schedule: &Schedule,
) -> Result<RunRecord> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let started = Instant::now();
    let mut adam = Adam::new(params.len(), config.adam_betas, config.adam_eps, config.weight_decay);
    let mut ema = params.clone();
    let mut rng = seed::rng(config.seed, "train-batches");
    let reference = if config.eval.metric_samples > 0 {
        Some(heldout_reference(dataset, config.eval.metric_samples)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut loss_acc = 0.0;
    let mut loss_count = 0usize;
    for i in 0..config.iterations {
        let batch = draw_batch(&mut rng, dataset.view(), config.batch_size, (1, schedule.steps()));
        let (loss, grad) = batch_loss_and_grad(&params, &batch, schedule, &config.strategy, config.target)
            .map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence { iteration: i + 1, loss: f64::NAN },
                other => other,
            })?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { iteration: i + 1, loss });
        }
        let lr = warmup_lr(config.learning_rate, config.warmup_iters, i);
        adam.update(params.theta_mut(), &grad, lr);
        if params.theta().iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { iteration: i + 1, loss });
        }
        ema_update(ema.theta_mut(), params.theta(), config.ema_rate)?;
        loss_acc += loss;
        loss_count += 1;

        let done = i + 1;
        if config.snapshots.contains(&done) {
            snapshots.push(Snapshot {
                iteration: done,
                params: params.clone(),
                ema: ema.clone(),
            });
        }
        if done % config.eval_every == 0 || done == config.iterations {
            let eval_params = if config.eval.use_ema { &ema } else { &params };
            let bin_losses = binned_unweighted_loss(
                eval_params,
                dataset,
                schedule,
                config.bins,
                config.target,
                config.eval.samples_per_bin,
                seed::derive(config.seed, "eval-bins"),
            )?;
            let metric = match &reference {
                Some(r) => sample_quality(eval_params, schedule, config.target, r, &config.eval, config.seed)?,
                None => 0.0,
            };
            rows.push(EvalRow {
                iteration: done,
                loss: loss_acc / loss_count as f64,
                bin_losses,
                metric,
                seconds: started.elapsed().as_secs_f64(),
            });
            loss_acc = 0.0;
            loss_count = 0;
        }
    }
    Ok(RunRecord {
        rows,
        params,
        ema,
        snapshots,
        bins: config.bins,
    })
}

/// Per-bin Monte-Carlo mean of the unweighted squared error in `target` space,
/// with the standard error of each mean.
pub fn binned_unweighted_loss_with_se(
    params: &DenoiserParams,
    dataset: &ToyDataset,
    schedule: &Schedule,
    bins: usize,
    target: PredictionTarget,
    samples_per_bin: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples_per_bin == 0 {
        return Err(Error::invalid("samples_per_bin must be >= 1"));
    }
    let edges = bin_edges(schedule.steps(), bins)?;
    let mut means = Vec::with_capacity(bins);
    let mut ses = Vec::with_capacity(bins);
    for b in 0..bins {
        let mut rng = seed::rng_indexed(seed, "bin-loss", b as u64);
        let batch = draw_batch(&mut rng, dataset.view(), samples_per_bin, (edges[b], edges[b + 1] - 1));
        let x_t = diffuse(batch.x0.view(), &batch.t, batch.noise.view(), schedule)?;
        let truth = target_values(target, batch.x0.view(), batch.noise.view(), &batch.t, schedule)?;
        let pred = forward(params, x_t.view(), &batch.t, schedule.steps(), target)?;
        let errs: Vec<f64> = (&pred.values - &truth)
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|x| x * x).sum())
            .collect();
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let var = if errs.len() > 1 {
            errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        means.push(mean);
        ses.push((var / n).sqrt());
    }
    Ok((means, ses))
}

pub fn binned_unweighted_loss(
    params: &DenoiserParams,
    dataset: &ToyDataset,
    schedule: &Schedule,
    bins: usize,
    target: PredictionTarget,
    samples_per_bin: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(binned_unweighted_loss_with_se(params, dataset, schedule, bins, target, samples_per_bin, seed)?.0)
}

/// Largest chunk evaluated in one forward/backward pass.
const GRAD_CHUNK: usize = 1024;

/// Per-bin mean gradients of the unweighted loss in `target` space.
pub fn collect_bin_gradients(
    params: &DenoiserParams,
    dataset: &ToyDataset,
    schedule: &Schedule,
    bins: usize,
    samples_per_bin: usize,
    target: PredictionTarget,
    seed: u64,
) -> Result<GradientBundle> {
    if samples_per_bin == 0 {
        return Err(Error::invalid("samples_per_bin must be >= 1"));
    }
    let edges = bin_edges(schedule.steps(), bins)?;
    let mut grads = Vec::with_capacity(bins);
    for b in 0..bins {
        let mut rng = seed::rng_indexed(seed, "bin-gradient", b as u64);
        let mut total = vec![0.0; params.len()];
        let mut left = samples_per_bin;
        while left > 0 {
            let n = left.min(GRAD_CHUNK);
            let batch = draw_batch(&mut rng, dataset.view(), n, (edges[b], edges[b + 1] - 1));
            let (_, g) = batch_loss_and_grad(params, &batch, schedule, &WeightStrategy::Constant, target)?;
            let share = n as f64 / samples_per_bin as f64;
            for (acc, x) in total.iter_mut().zip(g) {
                *acc += share * x;
            }
            left -= n;
        }
        grads.push(total);
    }
    GradientBundle::new(grads, vec![samples_per_bin; bins], edges)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub focus_bin: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    /// `after - before` per bin.
    pub deltas: Vec<f64>,
}

/// Fine-tunes a copy of `params` on timesteps from `focus_bin` only and
/// reports the change of every bin's unweighted loss.
///
/// Uses `config`'s optimizer settings, strategy, target and bin count; the
/// before and after losses share one evaluation seed.
pub fn conflict_probe(
    params: &DenoiserParams,
    dataset: &ToyDataset,
    schedule: &Schedule,
    focus_bin: usize,
    finetune_iters: usize,
    config: &TrainConfig,
) -> Result<ProbeOutcome> {
    config.validate()?;
    let edges = bin_edges(schedule.steps(), config.bins)?;
    if focus_bin >= config.bins {
        return Err(Error::invalid(format!("focus bin {focus_bin} >= bins {}", config.bins)));
    }
    let eval_seed = seed::derive(config.seed, "probe-eval");
    let measure = |p: &DenoiserParams| {
        binned_unweighted_loss(
            p,
            dataset,
            schedule,
            config.bins,
            config.target,
            config.eval.samples_per_bin,
            eval_seed,
        )
    };
    let before = measure(params)?;
    let mut tuned = params.clone();
    let mut adam = Adam::new(tuned.len(), config.adam_betas, config.adam_eps, config.weight_decay);
    let mut rng = seed::rng(config.seed, "probe-batches");
    let range = (edges[focus_bin], edges[focus_bin + 1] - 1);
    for i in 0..finetune_iters {
        let batch = draw_batch(&mut rng, dataset.view(), config.batch_size, range);
        let (loss, grad) = batch_loss_and_grad(&tuned, &batch, schedule, &config.strategy, config.target)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: i + 1, loss });
        }
        let lr = warmup_lr(config.learning_rate, config.warmup_iters, i);
        adam.update(tuned.theta_mut(), &grad, lr);
    }
    let after = if finetune_iters == 0 { before.clone() } else { measure(&tuned)? };
    let deltas = after.iter().zip(&before).map(|(a, b)| a - b).collect();
    Ok(ProbeOutcome {
        focus_bin,
        before,
        after,
        deltas,
    })
}

/// Settings shared by the min-norm diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticConfig {
    pub bins: usize,
    pub target: PredictionTarget,
    pub samples_per_bin: usize,
    pub ugd_lr: f64,
    pub ugd_iters: usize,
    pub fw_tol: f64,
    pub fw_max_iter: usize,
}

impl Default for DiagnosticConfig {
    fn default() -> Self {
        DiagnosticConfig {
            bins: DEFAULT_BINS,
            target: PredictionTarget::X0,
            samples_per_bin: 1024,
            ugd_lr: DEFAULT_UGD_LR,
            ugd_iters: DEFAULT_UGD_ITERS,
            fw_tol: DEFAULT_FW_TOL,
            fw_max_iter: DEFAULT_FW_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityRow {
    pub sample_size: usize,
    /// Mean over bins of the across-repeat standard deviation of UGD weights.
    pub weight_std: f64,
}

/// Re-solves UGD weights on independently drawn gradient bundles and reports
/// how much they move, for each per-bin sample size.
#[allow(clippy::too_many_arguments)]
pub fn instability_experiment(
    params: &DenoiserParams,
    dataset: &ToyDataset,
    schedule: &Schedule,
    sample_sizes: &[usize],
    repeats: usize,
    relative_lambda: f64,
    seed: u64,
    diag: &DiagnosticConfig,
) -> Result<Vec<InstabilityRow>> {
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let mut rows = Vec::with_capacity(sample_sizes.len());
    for &size in sample_sizes {
        if size == 0 {
            return Err(Error::invalid("sample sizes must be >= 1"));
        }
        let mut solutions = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let bundle_seed = seed::derive(seed, &format!("instability/{size}/{r}"));
            let bundle = collect_bin_gradients(params, dataset, schedule, diag.bins, size, diag.target, bundle_seed)?;
            let ugd = UgdConfig {
                lambda: bundle.relative_lambda(relative_lambda),
                lr: diag.ugd_lr,
                iters: diag.ugd_iters,
            };
            solutions.push(ugd_solve(&bundle, &ugd)?.weights.into_vec());
        }
        let bins = solutions[0].len();
        let n = repeats as f64;
        let mean_std = (0..bins)
            .map(|b| {
                let mean = solutions.iter().map(|w| w[b]).sum::<f64>() / n;
                (solutions.iter().map(|w| (w[b] - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .sum::<f64>()
            / bins as f64;
        rows.push(InstabilityRow {
            sample_size: size,
            weight_std: mean_std,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveRow {
    pub label: String,
    pub objective: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveTable {
    pub rows: Vec<ObjectiveRow>,
    /// Absolute regularization strength used for scoring.
    pub lambda: f64,
    pub relative_lambda: f64,
    pub normalization: &'static str,
}

pub const OPTIMIZED_LABEL: &str = "frank-wolfe";
pub const UGD_LABEL: &str = "ugd";

impl ObjectiveTable {
    pub fn objective(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.objective)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let bins = self.rows.first().map_or(0, |r| r.weights.len());
        let mut header = vec!["strategy".to_string(), "objective".to_string()];
        header.extend((0..bins).map(|b| format!("w_{b}")));
        writeln!(out, "{}", header.join(","))?;
        for row in &self.rows {
            let mut fields = vec![row.label.clone(), row.objective.to_string()];
            fields.extend(row.weights.iter().map(f64::to_string));
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Mean loss weight of `strategy` over each bin's timesteps, normalized to the simplex.
pub fn strategy_bin_weights(
    strategy: &WeightStrategy,
    target: PredictionTarget,
    schedule: &Schedule,
    edges: &[usize],
) -> Result<SimplexWeights> {
    let table = weights_table(strategy, target, schedule)?;
    let per_bin: Vec<f64> = edges
        .windows(2)
        .map(|w| {
            let slice = &table[w[0] - 1..w[1] - 1];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    SimplexWeights::normalized(&per_bin)
}

/// Scores every strategy's normalized bin weights with the regularized
/// min-norm objective on one freshly collected bundle, alongside the UGD and
/// Frank-Wolfe optima.
#[allow(clippy::too_many_arguments)]
pub fn objective_comparison(
    params: &DenoiserParams,
    dataset: &ToyDataset,
    schedule: &Schedule,
    strategies: &[WeightStrategy],
    relative_lambda: f64,
    bins: usize,
    seed: u64,
    diag: &DiagnosticConfig,
) -> Result<ObjectiveTable> {
    if strategies.is_empty() {
        return Err(Error::invalid("need at least one strategy"));
    }
    let bundle = collect_bin_gradients(
        params,
        dataset,
        schedule,
        bins,
        diag.samples_per_bin,
        diag.target,
        seed::derive(seed, "objective-bundle"),
    )?;
    objective_comparison_on(&bundle, schedule, strategies, relative_lambda, diag)
}

/// [`objective_comparison`] on an already collected bundle.
pub fn objective_comparison_on(
    bundle: &GradientBundle,
    schedule: &Schedule,
    strategies: &[WeightStrategy],
    relative_lambda: f64,
    diag: &DiagnosticConfig,
) -> Result<ObjectiveTable> {
    let lambda = bundle.relative_lambda(relative_lambda);
    let mut rows = Vec::with_capacity(strategies.len() + 2);
    for s in strategies {
        let w = strategy_bin_weights(s, diag.target, schedule, bundle.bin_edges())?;
        rows.push(ObjectiveRow {
            label: s.to_string(),
            objective: regularized_objective(bundle, &w, lambda)?,
            weights: w.into_vec(),
        });
    }
    let ugd = ugd_solve(
        bundle,
        &UgdConfig {
            lambda,
            lr: diag.ugd_lr,
            iters: diag.ugd_iters,
        },
    )?;
    rows.push(ObjectiveRow {
        label: UGD_LABEL.into(),
        objective: ugd.objective,
        weights: ugd.weights.into_vec(),
    });
    let fw = min_norm_frank_wolfe(bundle, lambda, diag.fw_tol, diag.fw_max_iter)?;
    rows.push(ObjectiveRow {
        label: OPTIMIZED_LABEL.into(),
        objective: fw.objective,
        weights: fw.weights.into_vec(),
    });
    Ok(ObjectiveTable {
        rows,
        lambda,
        relative_lambda,
        normalization: "strategy weights averaged per bin, then divided by their sum",
    })
}

/// Dataset for a run seeded by `seed`.
pub fn run_dataset(kind: DatasetKind, n: usize, seed: u64) -> Result<ToyDataset> {
    make_dataset(kind, n, seed::derive(seed, "data"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub gamma: f64,
    pub seed: u64,
    pub record: RunRecord,
}

impl SweepRun {
    pub fn final_metric(&self) -> f64 {
        self.record.final_row().metric
    }
}

/// Min-SNR-gamma runs for every `(gamma, seed)` pair; runs sharing a seed share
/// data, initialization and batches. Up to `workers` runs execute at once.
pub fn sweep_gamma(
    base: &TrainConfig,
    kind: DatasetKind,
    n_data: usize,
    schedule: &Schedule,
    gammas: &[f64],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<SweepRun>> {
    if gammas.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one gamma and one seed"));
    }
    let jobs: Vec<(f64, u64)> = gammas.iter().flat_map(|&g| seeds.iter().map(move |&s| (g, s))).collect();
    let run = |&(gamma, seed): &(f64, u64)| -> Result<SweepRun> {
        let config = TrainConfig {
            strategy: WeightStrategy::min_snr(gamma)?,
            seed,
            ..base.clone()
        };
        let data = run_dataset(kind, n_data, seed)?;
        Ok(SweepRun {
            gamma,
            seed,
            record: train(&config, &data, schedule)?,
        })
    };
    let workers = workers.clamp(1, jobs.len());
    if workers == 1 {
        return jobs.iter().map(run).collect();
    }
    let mut results: Vec<Option<Result<SweepRun>>> = (0..jobs.len()).map(|_| None).collect();
    for (chunk_jobs, chunk_out) in jobs.chunks(workers).zip(results.chunks_mut(workers)) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunk_jobs.iter().map(|job| scope.spawn(move || run(job))).collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(h.join().expect("sweep worker panicked"));
            }
        });
    }
    results.into_iter().map(|r| r.expect("every job ran")).collect()
}

/// `gamma,seed,final_loss,final_metric`
pub fn write_sweep_summary<W: Write>(runs: &[SweepRun], mut out: W) -> Result<()> {
    writeln!(out, "gamma,seed,final_loss,final_metric")?;
    for r in runs {
        let row = r.record.final_row();
        writeln!(out, "{},{},{},{}", r.gamma, r.seed, row.loss, row.metric)?;
    }
    Ok(())
}
