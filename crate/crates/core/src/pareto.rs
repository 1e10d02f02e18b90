//! Min-norm weighting of per-timestep-bin gradients.
//!
//! All solvers minimize `J(w) = ||sum_t w_t g_t||^2 + lambda * sum_t w_t^2` over
//! the probability simplex. Everything runs on the Gram matrix `G_ij = <g_i, g_j>`,
//! so cost is independent of the parameter dimension once `G` is formed.
//!
//! Internally the quadratic form is divided by the mean squared gradient norm.
//! This leaves minimizers unchanged and makes step sizes and tolerances
//! scale-free across models.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_RELATIVE_LAMBDA: f64 = 1e-2;
pub const DEFAULT_FW_TOL: f64 = 1e-8;
pub const DEFAULT_FW_MAX_ITER: usize = 10_000;
pub const DEFAULT_UGD_LR: f64 = 0.1;
pub const DEFAULT_UGD_ITERS: usize = 500;
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Per-bin gradients `g_t` and the timestep partition they were collected on.
///
/// Bin `b` covers timesteps `bin_edges[b]..bin_edges[b + 1]` (half open).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    grads: Vec<Vec<f64>>,
    counts: Vec<usize>,
    bin_edges: Vec<usize>,
}

impl GradientBundle {
    pub fn new(grads: Vec<Vec<f64>>, counts: Vec<usize>, bin_edges: Vec<usize>) -> Result<Self> {
        let bins = grads.len();
        if bins == 0 {
            return Err(Error::invalid("gradient bundle needs at least one bin"));
        }
        let dim = grads[0].len();
        for g in &grads {
            if g.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: g.len(),
                    context: "bin gradient",
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("bin gradient".into()));
            }
        }
        if counts.len() != bins {
            return Err(Error::DimensionMismatch {
                expected: bins,
                actual: counts.len(),
                context: "bin counts",
            });
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid("bin sample counts must be positive"));
        }
        if bin_edges.len() != bins + 1 {
            return Err(Error::DimensionMismatch {
                expected: bins + 1,
                actual: bin_edges.len(),
                context: "bin edges",
            });
        }
        if bin_edges[0] != 1 || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("bin edges must start at 1 and strictly increase"));
        }
        Ok(GradientBundle {
            grads,
            counts,
            bin_edges,
        })
    }

    /// Bundle over a synthetic partition `1, 2, ..., B + 1`, unit counts.
    pub fn from_grads(grads: Vec<Vec<f64>>) -> Result<Self> {
        let bins = grads.len();
        GradientBundle::new(grads, vec![1; bins], (1..=bins + 1).collect())
    }

    pub fn bins(&self) -> usize {
        self.grads.len()
    }

    pub fn dim(&self) -> usize {
        self.grads[0].len()
    }

    pub fn grads(&self) -> &[Vec<f64>] {
        &self.grads
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn bin_edges(&self) -> &[usize] {
        &self.bin_edges
    }

    /// Inclusive timestep range of bin `b`.
    pub fn bin_range(&self, b: usize) -> (usize, usize) {
        (self.bin_edges[b], self.bin_edges[b + 1] - 1)
    }

    pub fn gram(&self) -> Vec<Vec<f64>> {
        let b = self.bins();
        let mut g = vec![vec![0.0; b]; b];
        for i in 0..b {
            for j in i..b {
                let d = dot(&self.grads[i], &self.grads[j]);
                g[i][j] = d;
                g[j][i] = d;
            }
        }
        g
    }

    /// Mean of `||g_t||^2` over bins.
    pub fn mean_sq_norm(&self) -> f64 {
        self.grads.iter().map(|g| dot(g, g)).sum::<f64>() / self.bins() as f64
    }

    /// Absolute regularization strength for a strength given relative to the
    /// mean squared gradient norm.
    pub fn relative_lambda(&self, relative: f64) -> f64 {
        relative * self.mean_sq_norm()
    }

    pub fn combine(&self, w: &SimplexWeights) -> Result<Vec<f64>> {
        self.check_weights(w)?;
        let mut out = vec![0.0; self.dim()];
        for (g, &wt) in self.grads.iter().zip(w.as_slice()) {
            for (o, &x) in out.iter_mut().zip(g) {
                *o += wt * x;
            }
        }
        Ok(out)
    }

    fn check_weights(&self, w: &SimplexWeights) -> Result<()> {
        if w.len() != self.bins() {
            return Err(Error::DimensionMismatch {
                expected: self.bins(),
                actual: w.len(),
                context: "simplex weights",
            });
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("simplex weights must be nonempty"));
        }
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("simplex weights must be finite and nonnegative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::invalid(format!("simplex weights sum to {sum}, not 1")));
        }
        Ok(SimplexWeights(w))
    }

    /// Rescales nonnegative weights onto the simplex.
    pub fn normalized(w: &[f64]) -> Result<Self> {
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::invalid("weights sum to zero"));
        }
        Ok(SimplexWeights(w.iter().map(|x| x / sum).collect()))
    }

    pub fn uniform(bins: usize) -> Self {
        SimplexWeights(vec![1.0 / bins as f64; bins])
    }

    pub fn vertex(bins: usize, k: usize) -> Self {
        let mut w = vec![0.0; bins];
        w[k] = 1.0;
        SimplexWeights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Writes `bin_index,low_t,high_t,weight` rows for half-open bin `edges`.
    pub fn write_csv<W: Write>(&self, edges: &[usize], mut out: W) -> Result<()> {
        if edges.len() != self.0.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: self.0.len() + 1,
                actual: edges.len(),
                context: "bin edges",
            });
        }
        writeln!(out, "bin_index,low_t,high_t,weight")?;
        for (b, w) in self.0.iter().enumerate() {
            writeln!(out, "{b},{},{},{w:e}", edges[b], edges[b + 1] - 1)?;
        }
        Ok(())
    }
}

/// Quadratic form `w^T (G + lambda I) w / scale`.
struct Quadratic {
    q: Vec<Vec<f64>>,
    scale: f64,
}

impl Quadratic {
    fn new(bundle: &GradientBundle, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let mut q = bundle.gram();
        for (i, row) in q.iter_mut().enumerate() {
            row[i] += lambda;
        }
        let trace: f64 = (0..q.len()).map(|i| q[i][i]).sum::<f64>() / q.len() as f64;
        let scale = if trace > 0.0 { trace } else { 1.0 };
        for row in q.iter_mut() {
            for x in row.iter_mut() {
                *x /= scale;
            }
        }
        Ok(Quadratic { q, scale })
    }

    fn apply(&self, w: &[f64]) -> Vec<f64> {
        self.q.iter().map(|row| dot(row, w)).collect()
    }

    fn value(&self, w: &[f64]) -> f64 {
        dot(w, &self.apply(w))
    }
}

/// `||sum_t w_t g_t||^2 + lambda * sum_t w_t^2`, evaluated directly in parameter space.
pub fn regularized_objective(bundle: &GradientBundle, w: &SimplexWeights, lambda: f64) -> Result<f64> {
    let combined = bundle.combine(w)?;
    let reg: f64 = w.as_slice().iter().map(|x| x * x).sum();
    Ok(dot(&combined, &combined) + lambda * reg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrankWolfeOutcome {
    pub weights: SimplexWeights,
    pub objective: f64,
    /// Final duality gap, in the same units as `objective`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Frank-Wolfe with away steps and exact line search, started from uniform weights.
///
/// Stops once the Wolfe duality gap drops to `tol` times the mean squared
/// gradient norm (plus `lambda`). If `max_iter` is exhausted the last iterate
/// is returned with `converged = false`.
pub fn min_norm_frank_wolfe(
    bundle: &GradientBundle,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FrankWolfeOutcome> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be > 0, got {tol}")));
    }
    let quad = Quadratic::new(bundle, lambda)?;
    let n = bundle.bins();
    let mut w = vec![1.0 / n as f64; n];
    let mut qw = quad.apply(&w);
    let mut value = dot(&w, &qw);
    let mut trace = vec![value * quad.scale];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iter {
        // Gradient of w^T Q w is 2 Q w; work with Q w.
        let (toward, &qmin) = qw
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let wqw = value;
        gap = 2.0 * (wqw - qmin);
        if gap <= tol {
            break;
        }
        let (away, qmax) = w
            .iter()
            .zip(&qw)
            .enumerate()
            .filter(|(_, (&wi, _))| wi > 0.0)
            .map(|(i, (_, &q))| (i, q))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("support nonempty");
        let away_gap = 2.0 * (qmax - wqw);

        // Direction d; the step is x + step * d with step in [0, step_max].
        let use_away = away_gap > gap && w[away] < 1.0;
        let mut d: Vec<f64>;
        let step_max;
        if use_away {
            d = w.clone();
            d[away] -= 1.0;
            step_max = w[away] / (1.0 - w[away]);
        } else {
            d = w.iter().map(|x| -x).collect();
            d[toward] += 1.0;
            step_max = 1.0;
        }
        let qd = quad.apply(&d);
        let slope = dot(&w, &qd);
        let curvature = dot(&d, &qd);
        let step = if curvature > 0.0 {
            (-slope / curvature).clamp(0.0, step_max)
        } else {
            step_max
        };
        iterations += 1;
        if step <= 0.0 {
            // No progress possible along either direction at this precision.
            trace.push(value * quad.scale);
            break;
        }
        for (wi, di) in w.iter_mut().zip(&d) {
            *wi += step * di;
        }
        if use_away && step == step_max {
            w[away] = 0.0;
        }
        if !use_away && step == 1.0 {
            w.iter_mut().for_each(|x| *x = 0.0);
            w[toward] = 1.0;
        }
        for x in w.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= sum);
        qw = quad.apply(&w);
        value = dot(&w, &qw);
        trace.push(value * quad.scale);
    }
    if iterations == max_iter {
        let (_, &qmin) = qw
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        gap = 2.0 * (dot(&w, &qw) - qmin);
    }
    let converged = gap <= tol;
    let weights = SimplexWeights(w);
    let objective = regularized_objective(bundle, &weights, lambda)?;
    Ok(FrankWolfeOutcome {
        weights,
        objective,
        gap: gap * quad.scale,
        iterations,
        converged,
        trace,
    })
}

/// Closed-form unregularized minimizer for two tasks.
pub fn min_norm_two_task(g1: &[f64], g2: &[f64]) -> Result<SimplexWeights> {
    if g1.len() != g2.len() {
        return Err(Error::DimensionMismatch {
            expected: g1.len(),
            actual: g2.len(),
            context: "second gradient",
        });
    }
    let diff: Vec<f64> = g1.iter().zip(g2).map(|(a, b)| a - b).collect();
    let denom = dot(&diff, &diff);
    if denom == 0.0 {
        return Ok(SimplexWeights(vec![0.5, 0.5]));
    }
    let w2 = (dot(&diff, g1) / denom).clamp(0.0, 1.0);
    Ok(SimplexWeights(vec![1.0 - w2, w2]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UgdConfig {
    pub lambda: f64,
    pub lr: f64,
    pub iters: usize,
}

impl Default for UgdConfig {
    fn default() -> Self {
        UgdConfig {
            lambda: 0.0,
            lr: DEFAULT_UGD_LR,
            iters: DEFAULT_UGD_ITERS,
        }
    }
}

impl UgdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.iters == 0 {
            return Err(Error::invalid("iters must be >= 1"));
        }
        Ok(())
    }
}

/// Logits and their softmax weights after a UGD run.
#[derive(Debug, Clone, PartialEq)]
pub struct UgdState {
    pub beta: Vec<f64>,
    pub weights: SimplexWeights,
    pub objective: f64,
}

fn softmax(beta: &[f64]) -> Vec<f64> {
    let m = beta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = beta.iter().map(|b| (b - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Gradient descent on softmax logits `beta`, starting from `beta = 0`.
///
/// With `w = softmax(beta)` the objective `Z^-2 ||sum e^beta_t g_t||^2 + lambda Z^-2 sum e^{2 beta_t}`
/// equals `w^T (G + lambda I) w`; its gradient in `beta` is
/// `w_k (dJ/dw_k - sum_j w_j dJ/dw_j)` with `dJ/dw = 2 (G + lambda I) w`.
pub fn ugd_solve(bundle: &GradientBundle, config: &UgdConfig) -> Result<UgdState> {
    config.validate()?;
    let quad = Quadratic::new(bundle, config.lambda)?;
    let n = bundle.bins();
    let mut beta = vec![0.0; n];
    for iter in 0..config.iters {
        let w = softmax(&beta);
        let grad_w: Vec<f64> = quad.apply(&w).into_iter().map(|x| 2.0 * x).collect();
        let mean = dot(&w, &grad_w);
        let value = dot(&w, &grad_w) / 2.0;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("UGD objective at iteration {iter}")));
        }
        for k in 0..n {
            beta[k] -= config.lr * w[k] * (grad_w[k] - mean);
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite(format!("UGD logits at iteration {iter}")));
        }
    }
    let w = softmax(&beta);
    let value = quad.value(&w);
    if !value.is_finite() {
        return Err(Error::NonFinite("UGD final objective".into()));
    }
    let weights = SimplexWeights(w);
    let objective = regularized_objective(bundle, &weights, config.lambda)?;
    Ok(UgdState {
        beta,
        weights,
        objective,
    })
}

/// Exhaustive search over the simplex grid with spacing `grid_step`.
pub fn brute_force_min_norm(bundle: &GradientBundle, lambda: f64, grid_step: f64) -> Result<SimplexWeights> {
    let n = bundle.bins();
    if n > 4 {
        return Err(Error::invalid(format!("brute force supports at most 4 bins, got {n}")));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::invalid(format!("grid_step must lie in (0, 1], got {grid_step}")));
    }
    let quad = Quadratic::new(bundle, lambda)?;
    let m = (1.0 / grid_step).round() as usize;
    let mut best = (f64::INFINITY, vec![0usize; n]);
    let mut counts = vec![0usize; n];

    fn visit(
        k: usize,
        left: usize,
        m: usize,
        counts: &mut Vec<usize>,
        quad: &Quadratic,
        best: &mut (f64, Vec<usize>),
    ) {
        let n = counts.len();
        if k + 1 == n {
            counts[k] = left;
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / m as f64).collect();
            let v = quad.value(&w);
            if v < best.0 {
                *best = (v, counts.clone());
            }
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            visit(k + 1, left - c, m, counts, quad, best);
        }
    }
    visit(0, m, m, &mut counts, &quad, &mut best);
    Ok(SimplexWeights(
        best.1.iter().map(|&c| c as f64 / m as f64).collect(),
    ))
}

/// True iff the combined direction `sum_t w_t g_t` has norm at most `tol`.
pub fn stationarity_check(bundle: &GradientBundle, w: &SimplexWeights, tol: f64) -> Result<bool> {
    let combined = bundle.combine(w)?;
    Ok(dot(&combined, &combined).sqrt() <= tol)
}
