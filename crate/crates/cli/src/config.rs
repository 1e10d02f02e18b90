use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use minsnr_core::data::DatasetKind;
use minsnr_core::sampling::SamplerKind;
use minsnr_core::schedule::{Schedule, ScheduleKind, ScheduleSpec, DEFAULT_COSINE_OFFSET, DEFAULT_SNR_CAP, DEFAULT_STEPS};
use minsnr_core::training::{DiagnosticConfig, TrainConfig};
use minsnr_core::weighting::WeightStrategy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSource {
    #[default]
    Raw,
    Ema,
}

/// Flat JSON experiment file. Every CLI flag overrides the key of the same name
/// (`--iters` -> `iterations`, `--lr` -> `learning_rate`, `--batch` -> `batch_size`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub schedule: ScheduleKind,
    #[serde(rename = "T")]
    pub steps: usize,
    pub offset_s: f64,
    pub snr_cap: f64,
    pub dataset: DatasetKind,
    pub n_data: usize,
    /// Replaces the gamma of a min-snr/max-snr strategy; turns `const` into `min-snr:gamma`.
    pub gamma: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    /// Constant-weight iterations for the diagnostic checkpoint when none is given.
    pub checkpoint_iters: usize,
    pub diagnostic_params: ParamSource,
    pub focus_bin: usize,
    pub finetune_iters: usize,
    pub sample_sizes: Vec<usize>,
    pub repeats: usize,
    pub relative_lambda: f64,
    pub samples_per_bin: usize,
    pub ugd_lr: f64,
    pub ugd_iters: usize,
    pub fw_tol: f64,
    pub fw_max_iter: usize,
    pub compare_strategies: Vec<String>,
    pub n_samples: usize,
    pub sampler: SamplerKind,
    pub sampler_steps: usize,
    /// Gamma values of `sweep-gamma`.
    pub values: Vec<f64>,
    /// Seeds per gamma in `sweep-gamma`, counting up from `seed`.
    pub sweep_seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let diag = DiagnosticConfig::default();
        ExperimentConfig {
            train: TrainConfig::default(),
            schedule: ScheduleKind::Cosine,
            steps: DEFAULT_STEPS,
            offset_s: DEFAULT_COSINE_OFFSET,
            snr_cap: DEFAULT_SNR_CAP,
            dataset: DatasetKind::GaussianMixture8,
            n_data: 20_000,
            gamma: None,
            checkpoint: None,
            checkpoint_iters: 10_000,
            diagnostic_params: ParamSource::Raw,
            focus_bin: 0,
            finetune_iters: 2000,
            sample_sizes: vec![64, 256, 1024, 4096],
            repeats: 8,
            relative_lambda: 1e-2,
            samples_per_bin: diag.samples_per_bin,
            ugd_lr: diag.ugd_lr,
            ugd_iters: diag.ugd_iters,
            fw_tol: diag.fw_tol,
            fw_max_iter: diag.fw_max_iter,
            compare_strategies: ["const", "snr", "min-snr:5", "max-snr:1"].map(String::from).to_vec(),
            n_samples: 2048,
            sampler: SamplerKind::Ancestral,
            sampler_steps: 100,
            values: vec![1.0, 5.0, 10.0, 20.0],
            sweep_seeds: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies `gamma` to the strategy and checks everything that can be checked up front.
    pub fn resolve(mut self) -> anyhow::Result<Self> {
        if let Some(g) = self.gamma {
            self.train.strategy = match self.train.strategy {
                WeightStrategy::MaxSnrGamma { .. } => WeightStrategy::max_snr(g)?,
                WeightStrategy::MinSnrGamma { .. } | WeightStrategy::Constant => WeightStrategy::min_snr(g)?,
                ref other => bail!("--gamma does not apply to strategy `{other}`"),
            };
            self.gamma = None;
        }
        self.train.validate()?;
        if self.focus_bin >= self.train.bins {
            bail!("focus_bin {} must be < bins {}", self.focus_bin, self.train.bins);
        }
        for s in &self.compare_strategies {
            minsnr_core::weighting::parse_strategy(s)?;
        }
        self.schedule()?;
        Ok(self)
    }

    pub fn schedule_spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            steps: self.steps,
            offset_s: self.offset_s,
            snr_cap: self.snr_cap,
            kind: self.schedule,
        }
    }

    pub fn schedule(&self) -> anyhow::Result<Schedule> {
        Ok(self.schedule_spec().build()?)
    }

    pub fn diagnostics(&self) -> DiagnosticConfig {
        DiagnosticConfig {
            bins: self.train.bins,
            target: self.train.target,
            samples_per_bin: self.samples_per_bin,
            ugd_lr: self.ugd_lr,
            ugd_iters: self.ugd_iters,
            fw_tol: self.fw_tol,
            fw_max_iter: self.fw_max_iter,
        }
    }

    /// Files whose contents determine the run.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut files = Vec::new();
        if let Some(c) = &self.checkpoint {
            files.push(c.clone());
        }
        let strategies = std::iter::once(self.train.strategy.to_string()).chain(self.compare_strategies.iter().cloned());
        for s in strategies {
            if let Some(path) = s.strip_prefix("external:") {
                files.push(PathBuf::from(path));
            }
        }
        files
    }
}
