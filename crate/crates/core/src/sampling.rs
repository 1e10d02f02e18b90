//! Reverse-process samplers.
//!
//! Both samplers work on an x0 estimate; the denoiser's native output is
//! converted before every step. With `eps_hat = (x_t - alpha_t x0_hat) / sigma_t`
//! a step from `t` to `s < t` is
//!
//! `x_s = alpha_s x0_hat + sqrt(sigma_s^2 - c^2) eps_hat + c z`
//!
//! where `c^2` is the posterior variance of `q(x_s | x_t, x0)`. The ancestral
//! sampler uses that `c`; the deterministic sampler uses `c = 0`.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::write_points_csv;
use crate::denoiser::{convert_prediction, forward, DenoiserParams};
use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::seed;
use crate::weighting::PredictionTarget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ancestral,
    Deterministic,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ancestral" => Ok(SamplerKind::Ancestral),
            "deterministic" => Ok(SamplerKind::Deterministic),
            other => Err(Error::Parse(format!(
                "unknown sampler `{other}` (expected ancestral|deterministic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Ancestral,
            steps: 100,
            seed: 0,
        }
    }
}

/// Strictly decreasing timesteps `t_0 = start > t_1 > ... > t_{k-1} >= 1`,
/// evenly spaced over `1..=start`.
pub fn timestep_sequence(start: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 {
        return Err(Error::invalid("sampler needs at least one step"));
    }
    if start == 0 {
        return Err(Error::invalid("sampler start timestep must be >= 1"));
    }
    let k = steps.min(start);
    let mut seq: Vec<usize> = (0..k)
        .map(|i| {
            let t = (start as f64 * (k - i) as f64 / k as f64).round() as usize;
            t.max(1)
        })
        .collect();
    seq.dedup();
    Ok(seq)
}

fn alpha_sigma(schedule: &Schedule, t: usize) -> Result<(f64, f64)> {
    if t == 0 {
        Ok((1.0, 0.0))
    } else {
        Ok((schedule.alpha(t)?, schedule.sigma(t)?))
    }
}

/// Posterior standard deviation of `x_s` given `x_t` and `x0`.
fn posterior_std(schedule: &Schedule, t: usize, s: usize) -> Result<f64> {
    let (a_t, s_t) = alpha_sigma(schedule, t)?;
    let (a_s, s_s) = alpha_sigma(schedule, s)?;
    let ratio = a_t / a_s;
    let var_ts = (s_t * s_t - ratio * ratio * s_s * s_s).max(0.0);
    Ok((var_ts * s_s * s_s / (s_t * s_t)).sqrt())
}

/// One step of the reverse update with noise scale `c = eta * posterior_std`.
#[allow(clippy::too_many_arguments)]
pub fn reverse_step_eta(
    pred_x0: ArrayView1<'_, f64>,
    x_t: ArrayView1<'_, f64>,
    t: usize,
    t_prev: usize,
    schedule: &Schedule,
    eta: f64,
    noise: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if t_prev >= t {
        return Err(Error::invalid(format!("need t > t_prev, got t={t}, t_prev={t_prev}")));
    }
    if pred_x0.len() != x_t.len() {
        return Err(Error::DimensionMismatch {
            expected: x_t.len(),
            actual: pred_x0.len(),
            context: "x0 prediction",
        });
    }
    if t_prev == 0 {
        return Ok(pred_x0.to_owned());
    }
    let (a_t, s_t) = alpha_sigma(schedule, t)?;
    if s_t == 0.0 {
        return Err(Error::DivisionGuard(format!("implied noise needs sigma_t > 0 at t={t}")));
    }
    let (a_s, s_s) = alpha_sigma(schedule, t_prev)?;
    let eps_hat = (&x_t - &(&pred_x0 * a_t)) / s_t;
    let c = eta * posterior_std(schedule, t, t_prev)?;
    let dir = (s_s * s_s - c * c).max(0.0).sqrt();
    let mut out = &pred_x0 * a_s + &eps_hat * dir;
    if c > 0.0 {
        if noise.len() != x_t.len() {
            return Err(Error::DimensionMismatch {
                expected: x_t.len(),
                actual: noise.len(),
                context: "step noise",
            });
        }
        out.scaled_add(c, &noise);
    }
    Ok(out)
}

/// One reverse step; `noise` is ignored by the deterministic kind.
pub fn reverse_step(
    pred_x0: ArrayView1<'_, f64>,
    x_t: ArrayView1<'_, f64>,
    t: usize,
    t_prev: usize,
    schedule: &Schedule,
    kind: SamplerKind,
    noise: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let eta = match kind {
        SamplerKind::Ancestral => 1.0,
        SamplerKind::Deterministic => 0.0,
    };
    reverse_step_eta(pred_x0, x_t, t, t_prev, schedule, eta, noise)
}

/// Draws `n` samples starting from seeded standard normal noise.
///
/// Chains are independent: chain `i` seeds its own generator from
/// `(sampler.seed, i)`. For epsilon-prediction the x0 estimate is undefined
/// where `alpha_t = 0`, so sampling then starts at the last step with `alpha_t > 0`.
pub fn generate(
    params: &DenoiserParams,
    schedule: &Schedule,
    target: PredictionTarget,
    sampler: &SamplerConfig,
    n: usize,
) -> Result<Array2<f64>> {
    let dim = params.data_dim();
    let mut start = schedule.steps();
    if target == PredictionTarget::Epsilon {
        while start > 1 && schedule.alpha(start)? == 0.0 {
            start -= 1;
        }
    }
    let seq = timestep_sequence(start, sampler.steps)?;
    let mut rngs: Vec<_> = (0..n)
        .map(|i| seed::rng_indexed(sampler.seed, "sampler-chain", i as u64))
        .collect();
    let mut x = Array2::<f64>::zeros((n, dim));
    for (i, rng) in rngs.iter_mut().enumerate() {
        for j in 0..dim {
            x[[i, j]] = rng.sample(StandardNormal);
        }
    }
    for (k, &t) in seq.iter().enumerate() {
        let t_prev = seq.get(k + 1).copied().unwrap_or(0);
        let ts = vec![t; n];
        let raw = forward(params, x.view(), &ts, schedule.steps(), target)?;
        let x0_hat = convert_prediction(&raw, PredictionTarget::X0, x.view(), &ts, schedule)?;
        let mut next = Array2::zeros((n, dim));
        for (i, rng) in rngs.iter_mut().enumerate() {
            let noise = if sampler.kind == SamplerKind::Ancestral && t_prev > 0 {
                Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal))
            } else {
                Array1::zeros(dim)
            };
            let row = reverse_step(
                x0_hat.values.row(i),
                x.row(i),
                t,
                t_prev,
                schedule,
                sampler.kind,
                noise.view(),
            )?;
            next.row_mut(i).assign(&row);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "sample trajectory at step {k} (t={t} -> {t_prev})"
            )));
        }
        x = next;
    }
    Ok(x)
}

/// One row per sample, header `x0,x1,...`.
pub fn write_samples_csv<W: Write>(samples: &Array2<f64>, out: W) -> Result<()> {
    write_points_csv(samples.view(), out)
}
