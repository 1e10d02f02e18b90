//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions in [`ops`] do the work and are tested natively; the
//! `#[wasm_bindgen]` wrappers only translate errors.

use wasm_bindgen::prelude::*;

pub mod ops {
    use minsnr_core::data::{make_dataset, DatasetKind};
    use minsnr_core::pareto::{min_norm_frank_wolfe, ugd_solve, GradientBundle, UgdConfig, DEFAULT_FW_MAX_ITER, DEFAULT_FW_TOL};
    use minsnr_core::schedule::{ScheduleKind, ScheduleSpec};
    use minsnr_core::seed;
    use minsnr_core::training::sample_forward;
    use minsnr_core::weighting::{parse_strategy, PredictionTarget};
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use serde::Serialize;

    pub type OpResult<T> = Result<T, String>;

    fn schedule(kind: &str, steps: usize) -> OpResult<minsnr_core::schedule::Schedule> {
        let kind: ScheduleKind = kind.parse().map_err(|e: minsnr_core::Error| e.to_string())?;
        ScheduleSpec {
            steps,
            kind,
            ..ScheduleSpec::default()
        }
        .build()
        .map_err(|e| e.to_string())
    }

    /// Loss weight of `strategy` in `target` space for `t = 1..=steps`; NaN where undefined.
    pub fn weight_curve(strategy: &str, target: &str, schedule_kind: &str, steps: usize) -> OpResult<Vec<f64>> {
        if strategy.starts_with("external:") {
            return Err("external weights are not available in the browser".into());
        }
        let strategy = parse_strategy(strategy).map_err(|e| e.to_string())?;
        let target: PredictionTarget = target.parse().map_err(|e: minsnr_core::Error| e.to_string())?;
        let sched = schedule(schedule_kind, steps)?;
        Ok((1..=steps)
            .map(|t| strategy.loss_weight(target, t, &sched).unwrap_or(f64::NAN))
            .collect())
    }

    /// `log10 SNR(t)` for `t = 1..=steps`.
    pub fn log_snr_curve(schedule_kind: &str, steps: usize) -> OpResult<Vec<f64>> {
        Ok(schedule(schedule_kind, steps)?.snrs().iter().map(|s| s.log10()).collect())
    }

    #[derive(Debug, Serialize)]
    pub struct MinNormReport {
        pub frank_wolfe: Vec<f64>,
        pub frank_wolfe_objective: f64,
        pub ugd: Vec<f64>,
        pub ugd_objective: f64,
        /// `-sum_k w_k g_k` at the Frank-Wolfe weights.
        pub descent: Vec<f64>,
        pub lambda: f64,
    }

    /// Min-norm weights for `bins` gradients of length `grads.len() / bins`, row-major.
    pub fn solve_min_norm(grads: &[f64], bins: usize, relative_lambda: f64, ugd_lr: f64, ugd_iters: usize) -> OpResult<MinNormReport> {
        if bins == 0 || grads.is_empty() || grads.len() % bins != 0 {
            return Err(format!("{} gradient entries do not split into {bins} bins", grads.len()));
        }
        let dim = grads.len() / bins;
        let bundle = GradientBundle::from_grads(grads.chunks(dim).map(<[f64]>::to_vec).collect()).map_err(|e| e.to_string())?;
        let lambda = bundle.relative_lambda(relative_lambda);
        let fw = min_norm_frank_wolfe(&bundle, lambda, DEFAULT_FW_TOL, DEFAULT_FW_MAX_ITER).map_err(|e| e.to_string())?;
        let ugd = ugd_solve(
            &bundle,
            &UgdConfig {
                lambda,
                lr: ugd_lr,
                iters: ugd_iters,
            },
        )
        .map_err(|e| e.to_string())?;
        let descent = bundle
            .combine(&fw.weights)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|x| -x)
            .collect();
        Ok(MinNormReport {
            frank_wolfe: fw.weights.into_vec(),
            frank_wolfe_objective: fw.objective,
            ugd: ugd.weights.into_vec(),
            ugd_objective: ugd.objective,
            descent,
            lambda,
        })
    }

    /// `n` standardized points of `dataset` diffused to step `t`, flattened as `x0, y0, x1, y1, ...`.
    pub fn diffuse_points(dataset: &str, n: usize, t: usize, schedule_kind: &str, steps: usize, seed: u64) -> OpResult<Vec<f64>> {
        let kind: DatasetKind = dataset.parse().map_err(|e: minsnr_core::Error| e.to_string())?;
        let data = make_dataset(kind, n, seed).map_err(|e| e.to_string())?;
        let sched = schedule(schedule_kind, steps)?;
        let mut rng = seed::rng(seed, "demo-noise");
        let noise = Array2::from_shape_fn(data.points.dim(), |_| rng.sample::<f64, _>(StandardNormal));
        let x_t = sample_forward(data.view(), &vec![t; n], noise.view(), &sched).map_err(|e| e.to_string())?;
        Ok(x_t.iter().copied().collect())
    }
}

fn js<T>(r: ops::OpResult<T>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = weightCurve)]
pub fn weight_curve(strategy: &str, target: &str, schedule: &str, steps: usize) -> Result<Vec<f64>, JsError> {
    js(ops::weight_curve(strategy, target, schedule, steps))
}

#[wasm_bindgen(js_name = logSnrCurve)]
pub fn log_snr_curve(schedule: &str, steps: usize) -> Result<Vec<f64>, JsError> {
    js(ops::log_snr_curve(schedule, steps))
}

/// JSON-encoded [`ops::MinNormReport`].
#[wasm_bindgen(js_name = solveMinNorm)]
pub fn solve_min_norm(grads: &[f64], bins: usize, relative_lambda: f64, ugd_lr: f64, ugd_iters: usize) -> Result<String, JsError> {
    let report = js(ops::solve_min_norm(grads, bins, relative_lambda, ugd_lr, ugd_iters))?;
    serde_json::to_string(&report).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = diffusePoints)]
pub fn diffuse_points(dataset: &str, n: usize, t: usize, schedule: &str, steps: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    js(ops::diffuse_points(dataset, n, t, schedule, steps, u64::from(seed)))
}
