//! Fully connected denoiser with hand-written backpropagation.
//!
//! Input is `[x_t, embed(t)]`; hidden layers use SiLU; the output is read as
//! the configured prediction target. Parameters live in one flat vector laid
//! out layer by layer as `W (out x in, row major)` followed by `b (out)`.

use std::io::{BufRead, Write};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Schedule;
use crate::seed;
use crate::weighting::{PredictionTarget, WeightStrategy};

pub const DEFAULT_HIDDEN: [usize; 3] = [128, 128, 128];
pub const DEFAULT_EMBED_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    theta: Vec<f64>,
    layer_dims: Vec<usize>,
    embed_dim: usize,
    data_dim: usize,
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    input: usize,
    output: usize,
    offset: usize,
}

impl LayerShape {
    fn weights_len(&self) -> usize {
        self.input * self.output
    }

    fn len(&self) -> usize {
        self.weights_len() + self.output
    }
}

fn check_dims(layer_dims: &[usize], embed_dim: usize, data_dim: usize) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid("layer_dims needs at least input and output widths"));
    }
    if layer_dims.iter().any(|&d| d == 0) || data_dim == 0 {
        return Err(Error::invalid("layer widths must be >= 1"));
    }
    if layer_dims[0] != data_dim || *layer_dims.last().unwrap() != data_dim {
        return Err(Error::invalid(format!(
            "layer_dims must start and end with data_dim={data_dim}, got {layer_dims:?}"
        )));
    }
    if embed_dim % 2 != 0 {
        return Err(Error::invalid(format!("embed_dim must be even, got {embed_dim}")));
    }
    Ok(())
}

fn layer_shapes(layer_dims: &[usize], embed_dim: usize) -> Vec<LayerShape> {
    let mut offset = 0;
    layer_dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let input = if i == 0 { w[0] + embed_dim } else { w[0] };
            let shape = LayerShape {
                input,
                output: w[1],
                offset,
            };
            offset += shape.len();
            shape
        })
        .collect()
}

/// Number of parameters implied by the architecture.
pub fn param_count(layer_dims: &[usize], embed_dim: usize) -> usize {
    layer_shapes(layer_dims, embed_dim).iter().map(LayerShape::len).sum()
}

/// Seeded init: Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases,
/// and an all-zero final layer.
pub fn init_params(layer_dims: &[usize], embed_dim: usize, data_dim: usize, seed: u64) -> Result<DenoiserParams> {
    check_dims(layer_dims, embed_dim, data_dim)?;
    let shapes = layer_shapes(layer_dims, embed_dim);
    let mut theta = vec![0.0; param_count(layer_dims, embed_dim)];
    let mut rng = seed::rng(seed, "denoiser-init");
    for shape in &shapes[..shapes.len() - 1] {
        let scale = 1.0 / (shape.input as f64).sqrt();
        for x in &mut theta[shape.offset..shape.offset + shape.weights_len()] {
            let z: f64 = rng.sample(StandardNormal);
            *x = z * scale;
        }
    }
    Ok(DenoiserParams {
        theta,
        layer_dims: layer_dims.to_vec(),
        embed_dim,
        data_dim,
    })
}

impl DenoiserParams {
    pub fn from_theta(theta: Vec<f64>, layer_dims: &[usize], embed_dim: usize, data_dim: usize) -> Result<Self> {
        check_dims(layer_dims, embed_dim, data_dim)?;
        let expected = param_count(layer_dims, embed_dim);
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: theta.len(),
                context: "theta",
            });
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        Ok(DenoiserParams {
            theta,
            layer_dims: layer_dims.to_vec(),
            embed_dim,
            data_dim,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    /// Index range of the output layer (weights and bias) inside `theta`.
    pub fn final_layer_range(&self) -> std::ops::Range<usize> {
        let last = *layer_shapes(&self.layer_dims, self.embed_dim).last().unwrap();
        last.offset..last.offset + last.len()
    }

    fn shapes(&self) -> Vec<LayerShape> {
        layer_shapes(&self.layer_dims, self.embed_dim)
    }

    fn weights(&self, shape: &LayerShape) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape(
            (shape.output, shape.input),
            &self.theta[shape.offset..shape.offset + shape.weights_len()],
        )
        .expect("layer shape")
    }

    fn bias(&self, shape: &LayerShape) -> ArrayView1<'_, f64> {
        let start = shape.offset + shape.weights_len();
        ArrayView1::from(&self.theta[start..start + shape.output])
    }
}

/// Sinusoidal features of `t / T`: `[sin(1000 u f_k), cos(1000 u f_k)]` with
/// `f_k = 10000^(-k / (embed_dim / 2))`.
pub fn time_embedding(t: usize, steps: usize, embed_dim: usize) -> Result<Vec<f64>> {
    if embed_dim % 2 != 0 {
        return Err(Error::invalid(format!("embed_dim must be even, got {embed_dim}")));
    }
    if t == 0 || t > steps {
        return Err(Error::TimestepOutOfRange { t, steps });
    }
    let half = embed_dim / 2;
    let u = t as f64 / steps as f64 * 1000.0;
    let mut out = vec![0.0; embed_dim];
    for k in 0..half {
        let freq = (-(10_000f64).ln() * k as f64 / half as f64).exp();
        out[k] = (u * freq).sin();
        out[half + k] = (u * freq).cos();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Array2<f64>,
    pub target: PredictionTarget,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Activations kept for the backward pass.
struct Tape {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

fn check_batch(params: &DenoiserParams, x_t: ArrayView2<'_, f64>, t: &[usize]) -> Result<()> {
    if x_t.ncols() != params.data_dim {
        return Err(Error::DimensionMismatch {
            expected: params.data_dim,
            actual: x_t.ncols(),
            context: "x_t columns",
        });
    }
    if t.len() != x_t.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x_t.nrows(),
            actual: t.len(),
            context: "timestep batch",
        });
    }
    if x_t.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    Ok(())
}

fn run_forward(params: &DenoiserParams, x_t: ArrayView2<'_, f64>, t: &[usize], steps: usize) -> Result<Tape> {
    check_batch(params, x_t, t)?;
    let n = x_t.nrows();
    let d = params.data_dim;
    let e = params.embed_dim;
    let mut input = Array2::zeros((n, d + e));
    input.slice_mut(s![.., ..d]).assign(&x_t);
    for (i, &ti) in t.iter().enumerate() {
        let emb = time_embedding(ti, steps, e)?;
        input
            .slice_mut(s![i, d..])
            .assign(&ArrayView1::from(&emb[..]));
    }
    let shapes = params.shapes();
    let mut inputs = Vec::with_capacity(shapes.len());
    let mut pre = Vec::with_capacity(shapes.len() - 1);
    let mut current = input;
    for (l, shape) in shapes.iter().enumerate() {
        let mut z = current.dot(&params.weights(shape).t());
        z += &params.bias(shape);
        inputs.push(current);
        if l + 1 == shapes.len() {
            return Ok(Tape {
                inputs,
                pre,
                output: z,
            });
        }
        current = z.mapv(silu);
        pre.push(z);
    }
    unreachable!("at least one layer")
}

/// Network output for a batch, interpreted as `target`.
pub fn forward(
    params: &DenoiserParams,
    x_t: ArrayView2<'_, f64>,
    t: &[usize],
    steps: usize,
    target: PredictionTarget,
) -> Result<Prediction> {
    let tape = run_forward(params, x_t, t, steps)?;
    Ok(Prediction {
        values: tape.output,
        target,
    })
}

/// `mean_i w_i ||truth_i - out_i||^2` and its exact gradient with respect to theta.
pub fn weighted_regression_loss(
    params: &DenoiserParams,
    x_t: ArrayView2<'_, f64>,
    t: &[usize],
    steps: usize,
    truth: ArrayView2<'_, f64>,
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let tape = run_forward(params, x_t, t, steps)?;
    if truth.dim() != tape.output.dim() {
        return Err(Error::DimensionMismatch {
            expected: tape.output.len(),
            actual: truth.len(),
            context: "regression target",
        });
    }
    if weights.len() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: t.len(),
            actual: weights.len(),
            context: "loss weights",
        });
    }
    let n = t.len() as f64;
    let mut residual = &tape.output - &truth;
    let mut loss = 0.0;
    for (mut row, &w) in residual.axis_iter_mut(Axis(0)).zip(weights) {
        loss += w * row.iter().map(|r| r * r).sum::<f64>();
        row *= 2.0 * w / n;
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss = {loss}")));
    }
    let grad = backward(params, &tape, residual);
    Ok((loss, grad))
}

fn backward(params: &DenoiserParams, tape: &Tape, mut delta: Array2<f64>) -> Vec<f64> {
    let shapes = params.shapes();
    let mut grad = vec![0.0; params.len()];
    for (l, shape) in shapes.iter().enumerate().rev() {
        let input = &tape.inputs[l];
        let gw = delta.t().dot(input);
        let gb = delta.sum_axis(Axis(0));
        let w_start = shape.offset;
        let b_start = shape.offset + shape.weights_len();
        grad[w_start..b_start]
            .iter_mut()
            .zip(gw.iter())
            .for_each(|(g, &v)| *g = v);
        grad[b_start..b_start + shape.output]
            .iter_mut()
            .zip(gb.iter())
            .for_each(|(g, &v)| *g = v);
        if l == 0 {
            break;
        }
        let upstream = delta.dot(&params.weights(shape));
        let z = &tape.pre[l - 1];
        delta = Array2::from_shape_fn(upstream.dim(), |ij| upstream[ij] * silu_grad(z[ij]));
    }
    grad
}

/// Regression truth for `target` given clean data and noise.
pub fn target_values(
    target: PredictionTarget,
    x0: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
    t: &[usize],
    schedule: &Schedule,
) -> Result<Array2<f64>> {
    match target {
        PredictionTarget::X0 => Ok(x0.to_owned()),
        PredictionTarget::Epsilon => Ok(noise.to_owned()),
        PredictionTarget::Velocity => {
            let mut v = Array2::zeros(x0.dim());
            for (i, &ti) in t.iter().enumerate() {
                let (a, s) = (schedule.alpha(ti)?, schedule.sigma(ti)?);
                let row = &noise.row(i) * a - &x0.row(i) * s;
                v.row_mut(i).assign(&row);
            }
            Ok(v)
        }
    }
}

/// `x_t = alpha_t x0 + sigma_t eps`, row by row.
pub fn diffuse(x0: ArrayView2<'_, f64>, t: &[usize], noise: ArrayView2<'_, f64>, schedule: &Schedule) -> Result<Array2<f64>> {
    if x0.dim() != noise.dim() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            actual: noise.len(),
            context: "noise batch",
        });
    }
    if t.len() != x0.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x0.nrows(),
            actual: t.len(),
            context: "timestep batch",
        });
    }
    let mut out = Array2::zeros(x0.dim());
    for (i, &ti) in t.iter().enumerate() {
        let (a, s) = (schedule.alpha(ti)?, schedule.sigma(ti)?);
        for j in 0..x0.ncols() {
            out[[i, j]] = a * x0[[i, j]] + s * noise[[i, j]];
        }
    }
    Ok(out)
}

/// Weighted diffusion loss for one batch and its gradient.
///
/// `loss = mean_i w(t_i) ||target_i - prediction_i||^2` where `w` comes from
/// `strategy` expressed in `target`'s loss space.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad(
    params: &DenoiserParams,
    x0: ArrayView2<'_, f64>,
    t: &[usize],
    noise: ArrayView2<'_, f64>,
    schedule: &Schedule,
    strategy: &WeightStrategy,
    target: PredictionTarget,
) -> Result<(f64, Vec<f64>)> {
    let x_t = diffuse(x0, t, noise, schedule)?;
    let truth = target_values(target, x0, noise, t, schedule)?;
    let weights = t
        .iter()
        .map(|&ti| strategy.loss_weight(target, ti, schedule))
        .collect::<Result<Vec<_>>>()?;
    weighted_regression_loss(params, x_t.view(), t, schedule.steps(), truth.view(), &weights)
}

/// Re-expresses a prediction in another target space.
///
/// Uses `x_t = alpha x0 + sigma eps` and `v = alpha eps - sigma x0`. Conversions
/// that divide by `sigma_t` (from x0) or `alpha_t` (from eps) fail when it is zero.
pub fn convert_prediction(
    pred: &Prediction,
    to: PredictionTarget,
    x_t: ArrayView2<'_, f64>,
    t: &[usize],
    schedule: &Schedule,
) -> Result<Prediction> {
    use PredictionTarget::*;
    if x_t.dim() != pred.values.dim() {
        return Err(Error::DimensionMismatch {
            expected: pred.values.len(),
            actual: x_t.len(),
            context: "x_t for conversion",
        });
    }
    if t.len() != x_t.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x_t.nrows(),
            actual: t.len(),
            context: "timestep batch",
        });
    }
    if pred.target == to {
        return Ok(pred.clone());
    }
    let mut out = Array2::zeros(pred.values.dim());
    for (i, &ti) in t.iter().enumerate() {
        let (a, s) = (schedule.alpha(ti)?, schedule.sigma(ti)?);
        let guard = |v: f64, name: &str| {
            if v == 0.0 {
                Err(Error::DivisionGuard(format!(
                    "{} -> {} conversion divides by {name} = 0 at t={ti}",
                    pred.target, to
                )))
            } else {
                Ok(v)
            }
        };
        let p = pred.values.row(i);
        let x = x_t.row(i);
        let row: Array1<f64> = match (pred.target, to) {
            (X0, Epsilon) => (&x - &(&p * a)) / guard(s, "sigma")?,
            (X0, Velocity) => (&(&x * a) - &p) / guard(s, "sigma")?,
            (Epsilon, X0) => (&x - &(&p * s)) / guard(a, "alpha")?,
            (Epsilon, Velocity) => (&p - &(&x * s)) / guard(a, "alpha")?,
            (Velocity, X0) => &x * a - &p * s,
            (Velocity, Epsilon) => &x * s + &p * a,
            _ => unreachable!("identical targets handled above"),
        };
        out.row_mut(i).assign(&row);
    }
    Ok(Prediction {
        values: out,
        target: to,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub layer_dims: Vec<usize>,
    pub embed_dim: usize,
    pub data_dim: usize,
    pub seed: u64,
    pub iteration: usize,
    pub theta_len: usize,
}

/// One JSON header line followed by `theta` as little-endian f64.
pub fn write_checkpoint<W: Write>(params: &DenoiserParams, seed: u64, iteration: usize, mut out: W) -> Result<()> {
    let header = CheckpointHeader {
        layer_dims: params.layer_dims.clone(),
        embed_dim: params.embed_dim,
        data_dim: params.data_dim,
        seed,
        iteration,
        theta_len: params.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for x in &params.theta {
        out.write_all(&x.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<(CheckpointHeader, DenoiserParams)> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    let mut bytes = vec![0u8; header.theta_len * 8];
    input.read_exact(&mut bytes)?;
    let theta = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let params = DenoiserParams::from_theta(theta, &header.layer_dims, header.embed_dim, header.data_dim)?;
    Ok((header, params))
}
