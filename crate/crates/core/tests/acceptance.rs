//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.
//! `ACCEPTANCE_ONLY=1,5` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use minsnr_core::data::DatasetKind;
use minsnr_core::denoiser::{
    convert_prediction, init_params, weighted_regression_loss, DenoiserParams, Prediction,
};
use minsnr_core::pareto::{
    brute_force_min_norm, min_norm_frank_wolfe, min_norm_two_task, regularized_objective, ugd_solve,
    GradientBundle, UgdConfig, DEFAULT_FW_MAX_ITER, DEFAULT_FW_TOL, DEFAULT_UGD_LR,
};
use minsnr_core::schedule::{
    build_cosine_schedule, build_linear_schedule, validate, Schedule, DEFAULT_COSINE_OFFSET, DEFAULT_SNR_CAP,
};
use minsnr_core::training::{
    binned_unweighted_loss, conflict_probe, instability_experiment, objective_comparison, run_dataset,
    sweep_gamma, train, DiagnosticConfig, EvalConfig, RunRecord, TrainConfig, OPTIMIZED_LABEL,
};
use minsnr_core::weighting::{weight_for_target, weight_x0, ExternalWeights, BinWeight, PredictionTarget, WeightStrategy};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Pinned tolerances and budgets.
const VP_TOL: f64 = 1e-12;
const APPENDIX_REL_TOL: f64 = 1e-10;
const TRANSFORM_REL_TOL: f64 = 1e-15;
const FD_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-6;
const BRUTE_GRID: f64 = 1e-3;
const BRUTE_OBJ_TOL: f64 = 1e-3;
const TWO_TASK_W_TOL: f64 = 1e-6;
const UGD_OBJ_TOL: f64 = 5e-3;
/// UGD budget for the solver cross-check; boundary optima are approached sublinearly in the logits.
const UGD_CHECK_ITERS: usize = 20_000;
const DESCENT_REL_TOL: f64 = 1e-8;
/// Combined gradients shorter than this (relative to the longest bin gradient) count as stationary.
const STATIONARY_REL: f64 = 1e-6;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const REQUIRED_SEEDS: usize = 4;
const GAMMA_SPREAD_FACTOR: f64 = 2.0;

// Desk-scale experiment settings shared by criteria 7 to 11.
const N_DATA: usize = 20_000;
const CHECKPOINT_ITERS: usize = 10_000;
const LONG_ITERS: usize = 20_000;
const EMA_RATE: f64 = 0.999;
const RELATIVE_LAMBDA: f64 = 1e-2;
const GRAD_SAMPLES_PER_BIN: usize = 4096;
const PROBE_FOCUS_BIN: usize = 0;
const PROBE_ITERS: usize = 2000;
const PROBE_EVAL_SAMPLES: usize = 4096;
const FAR_BIN_DISTANCE: usize = 3;
const INSTABILITY_SIZES: [usize; 2] = [64, 4096];
const INSTABILITY_REPEATS: usize = 8;
const SWEEP_GAMMAS: [f64; 4] = [1.0, 5.0, 10.0, 20.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn cosine(steps: usize) -> Schedule {
    build_cosine_schedule(steps, DEFAULT_COSINE_OFFSET, DEFAULT_SNR_CAP).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut violations = 0;
    for steps in [10, 100, 1000] {
        for s in [cosine(steps), build_linear_schedule(steps, DEFAULT_SNR_CAP).unwrap()] {
            violations += validate(&s).len();
            for t in 1..=steps {
                let (a, sg) = (s.alpha(t).unwrap(), s.sigma(t).unwrap());
                worst = worst.max((a * a + sg * sg - 1.0).abs());
            }
            violations += s.snrs().windows(2).filter(|w| w[1] > w[0]).count();
        }
    }
    Outcome {
        pass: violations == 0 && worst <= VP_TOL,
        detail: format!("cosine+linear, T in {{10,100,1000}}: max |a^2+s^2-1| = {worst:.1e}, violations = {violations}"),
    }
}

fn criterion_2() -> Outcome {
    let s = cosine(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let t = rng.random_range(1..=1000);
        let x0 = Array2::from_shape_fn((1, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let eps = Array2::from_shape_fn((1, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let x_hat = Array2::from_shape_fn((1, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let (a, sg) = (s.alpha(t).unwrap(), s.sigma(t).unwrap());
        let x_t = &x0 * a + &eps * sg;
        let v = &eps * a - &x0 * sg;
        let pred = Prediction {
            values: x_hat.clone(),
            target: PredictionTarget::X0,
        };
        let eps_hat = convert_prediction(&pred, PredictionTarget::Epsilon, x_t.view(), &[t], &s).unwrap();
        let v_hat = convert_prediction(&pred, PredictionTarget::Velocity, x_t.view(), &[t], &s).unwrap();
        let sq = |m: Array2<f64>| m.iter().map(|x| x * x).sum::<f64>();
        let base = sq(&x0 - &x_hat);
        let snr = s.snr(t).unwrap();
        worst = worst.max(rel_err(sq(&eps - &eps_hat.values), snr * base));
        worst = worst.max(rel_err(sq(&v - &v_hat.values), (snr + 1.0) * base));
    }
    Outcome {
        pass: worst <= APPENDIX_REL_TOL,
        detail: format!("1000 probes: max relative error {worst:.2e} (tol {APPENDIX_REL_TOL:.0e})"),
    }
}

fn criterion_3() -> Outcome {
    let s = cosine(1000);
    let external = WeightStrategy::External(
        ExternalWeights::new(
            "acceptance",
            (0..10)
                .map(|b| BinWeight {
                    low_t: 1 + 100 * b,
                    high_t: 100 * (b + 1),
                    weight: 0.5 + b as f64,
                })
                .collect(),
        )
        .unwrap(),
    );
    let strategies = [
        WeightStrategy::Constant,
        WeightStrategy::Snr,
        WeightStrategy::min_snr(5.0).unwrap(),
        WeightStrategy::min_snr(0.3).unwrap(),
        WeightStrategy::max_snr(1.0).unwrap(),
        external,
    ];
    let mut worst = 0.0f64;
    let mut min_snr_mismatch = 0;
    let mut checked = 0;
    for st in &strategies {
        for t in 1..=1000 {
            let snr = s.snr(t).unwrap();
            let Ok(w0) = weight_x0(st, snr) else {
                // External weights are defined per timestep, not per SNR.
                continue;
            };
            if snr > 0.0 {
                let we = weight_for_target(st, PredictionTarget::Epsilon, snr).unwrap();
                worst = worst.max(rel_err(we * snr, w0));
            }
            let wv = weight_for_target(st, PredictionTarget::Velocity, snr).unwrap();
            worst = worst.max(rel_err(wv * (snr + 1.0), w0));
            checked += 1;
            if let WeightStrategy::MinSnrGamma { gamma } = st {
                if snr > 0.0 && weight_for_target(st, PredictionTarget::Epsilon, snr).unwrap() != (gamma / snr).min(1.0) {
                    min_snr_mismatch += 1;
                }
            }
        }
    }
    Outcome {
        pass: worst <= TRANSFORM_REL_TOL && min_snr_mismatch == 0 && checked > 0,
        detail: format!(
            "{checked} (strategy, t) pairs: max relative error {worst:.2e}; min-snr eps weight != min(g/snr,1) at {min_snr_mismatch} points"
        ),
    }
}

fn criterion_4() -> Outcome {
    let layer_dims = [2, 10, 10, 2];
    let embed = 4;
    let mut params = init_params(&layer_dims, embed, 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for x in params.theta_mut() {
        *x = 0.5 * rng.sample::<f64, _>(StandardNormal);
    }
    let s = cosine(1000);
    let n = 16;
    let x_t = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
    let truth = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
    let t: Vec<usize> = (0..n).map(|_| rng.random_range(1..=1000)).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let loss = |p: &DenoiserParams| weighted_regression_loss(p, x_t.view(), &t, s.steps(), truth.view(), &weights).unwrap();
    let (_, grad) = loss(&params);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut dir: Vec<f64> = (0..params.len()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|x| *x /= norm);
        let analytic: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let shifted = |sign: f64| {
            let mut p = params.clone();
            for (x, d) in p.theta_mut().iter_mut().zip(&dir) {
                *x += sign * FD_STEP * d;
            }
            loss(&p).0
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic, fd));
    }
    Outcome {
        pass: params.len() >= 150 && worst < FD_REL_TOL,
        detail: format!("{} parameters, 100 random directions: max relative error {worst:.2e}", params.len()),
    }
}

/// Criteria 5 and 6 share their bundles.
fn criteria_5_6() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut brute_worst, mut two_task_worst, mut ugd_worst) = (0.0f64, 0.0f64, 0.0f64);
    let (mut descent_worst, mut nonstationary, mut stationary) = (f64::NEG_INFINITY, 0, 0);
    for case in 0..50 {
        let bins = 2 + case % 2;
        let dim = 4;
        let grads: Vec<Vec<f64>> = (0..bins)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let bundle = GradientBundle::from_grads(grads.clone()).unwrap();
        let lambda = if case % 4 < 2 { 0.0 } else { bundle.relative_lambda(RELATIVE_LAMBDA) };

        let fw = min_norm_frank_wolfe(&bundle, lambda, DEFAULT_FW_TOL, DEFAULT_FW_MAX_ITER).unwrap();
        let brute = brute_force_min_norm(&bundle, lambda, BRUTE_GRID).unwrap();
        let brute_obj = regularized_objective(&bundle, &brute, lambda).unwrap();
        brute_worst = brute_worst.max((fw.objective - brute_obj).abs());

        let ugd = ugd_solve(
            &bundle,
            &UgdConfig {
                lambda,
                lr: DEFAULT_UGD_LR,
                iters: UGD_CHECK_ITERS,
            },
        )
        .unwrap();
        ugd_worst = ugd_worst.max((ugd.objective - fw.objective).abs());

        // Unregularized solutions for the closed form and the descent property.
        let fw0 = if lambda == 0.0 {
            fw.clone()
        } else {
            min_norm_frank_wolfe(&bundle, 0.0, DEFAULT_FW_TOL, DEFAULT_FW_MAX_ITER).unwrap()
        };
        if bins == 2 {
            let closed = min_norm_two_task(&grads[0], &grads[1]).unwrap();
            for (a, b) in closed.as_slice().iter().zip(fw0.weights.as_slice()) {
                two_task_worst = two_task_worst.max((a - b).abs());
            }
        }
        let combined = bundle.combine(&fw0.weights).unwrap();
        let d_norm = combined.iter().map(|x| x * x).sum::<f64>().sqrt();
        let g_max = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
        if d_norm <= STATIONARY_REL * g_max {
            stationary += 1;
            continue;
        }
        nonstationary += 1;
        for (k, g) in grads.iter().enumerate() {
            if fw0.weights.as_slice()[k] > 0.0 {
                let inner: f64 = -combined.iter().zip(g).map(|(d, x)| d * x).sum::<f64>();
                let g_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                descent_worst = descent_worst.max(inner / (d_norm * g_norm));
            }
        }
    }
    let c5 = Outcome {
        pass: brute_worst <= BRUTE_OBJ_TOL && two_task_worst <= TWO_TASK_W_TOL && ugd_worst <= UGD_OBJ_TOL,
        detail: format!(
            "50 bundles: |FW - brute| <= {brute_worst:.2e}, |FW - closed form| <= {two_task_worst:.2e} (weights), |UGD - FW| <= {ugd_worst:.2e} ({UGD_CHECK_ITERS} UGD steps)"
        ),
    };
    let c6 = Outcome {
        pass: nonstationary > 0 && descent_worst <= DESCENT_REL_TOL,
        detail: format!(
            "{nonstationary} non-stationary solutions ({stationary} stationary skipped): max <d*, g_t>/(|d*||g_t|) = {descent_worst:.2e}"
        ),
    };
    (c5, c6)
}

fn base_config(seed: u64) -> TrainConfig {
    TrainConfig {
        iterations: LONG_ITERS,
        seed,
        ema_rate: EMA_RATE,
        eval_every: CHECKPOINT_ITERS,
        eval: EvalConfig {
            metric_samples: 4096,
            ..EvalConfig::default()
        },
        ..TrainConfig::default()
    }
}

struct SeedRuns {
    seed: u64,
    constant: RunRecord,
    min_snr: RunRecord,
    seconds: f64,
}

fn seed_runs(seed: u64) -> SeedRuns {
    let start = Instant::now();
    let schedule = cosine(1000);
    let data = run_dataset(DatasetKind::GaussianMixture8, N_DATA, seed).unwrap();
    let constant = train(
        &TrainConfig {
            snapshots: vec![CHECKPOINT_ITERS],
            ..base_config(seed)
        },
        &data,
        &schedule,
    )
    .unwrap();
    let min_snr = train(
        &TrainConfig {
            strategy: WeightStrategy::min_snr(5.0).unwrap(),
            ..base_config(seed)
        },
        &data,
        &schedule,
    )
    .unwrap();
    SeedRuns {
        seed,
        constant,
        min_snr,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn checkpoint(runs: &SeedRuns) -> &DenoiserParams {
    &runs.constant.snapshots[0].params
}

fn seed_tally(hits: &[bool]) -> (bool, String) {
    let n = hits.iter().filter(|&&h| h).count();
    (n >= REQUIRED_SEEDS, format!("{n}/{} seeds", hits.len()))
}

fn criterion_7(all: &[SeedRuns]) -> Outcome {
    let schedule = cosine(1000);
    let strategies = [
        WeightStrategy::Constant,
        WeightStrategy::Snr,
        WeightStrategy::min_snr(5.0).unwrap(),
        WeightStrategy::max_snr(1.0).unwrap(),
    ];
    let diag = DiagnosticConfig {
        samples_per_bin: GRAD_SAMPLES_PER_BIN,
        ..DiagnosticConfig::default()
    };
    let mut hits = Vec::new();
    let mut rows = Vec::new();
    for r in all {
        let data = run_dataset(DatasetKind::GaussianMixture8, N_DATA, r.seed).unwrap();
        let table = objective_comparison(checkpoint(r), &data, &schedule, &strategies, RELATIVE_LAMBDA, 10, r.seed, &diag).unwrap();
        let obj = |label: &str| table.objective(label).unwrap();
        let (opt, min5) = (obj(OPTIMIZED_LABEL), obj("min-snr:5"));
        let others = obj("const").min(obj("snr")).min(obj("max-snr:1"));
        hits.push(opt <= min5 && min5 <= others);
        rows.push(format!("s{}: opt {opt:.3e} min-snr-5 {min5:.3e} best-other {others:.3e}", r.seed));
    }
    let (pass, tally) = seed_tally(&hits);
    Outcome {
        pass,
        detail: format!("ordering holds in {tally} [{}]", rows.join("; ")),
    }
}

fn criterion_8(all: &[SeedRuns]) -> Outcome {
    let schedule = cosine(1000);
    let mut hits = Vec::new();
    let mut rows = Vec::new();
    for r in all {
        let data = run_dataset(DatasetKind::GaussianMixture8, N_DATA, r.seed).unwrap();
        let cfg = TrainConfig {
            eval: EvalConfig {
                samples_per_bin: PROBE_EVAL_SAMPLES,
                ..EvalConfig::default()
            },
            ..base_config(r.seed)
        };
        let probe = conflict_probe(checkpoint(r), &data, &schedule, PROBE_FOCUS_BIN, PROBE_ITERS, &cfg).unwrap();
        let focus = probe.deltas[PROBE_FOCUS_BIN];
        let far_up = probe
            .deltas
            .iter()
            .enumerate()
            .filter(|(b, &d)| b.abs_diff(PROBE_FOCUS_BIN) >= FAR_BIN_DISTANCE && d > 0.0)
            .count();
        hits.push(focus < 0.0 && far_up >= 1);
        let max_far = probe.deltas[PROBE_FOCUS_BIN + FAR_BIN_DISTANCE..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        rows.push(format!("s{}: focus {focus:+.2e}, {far_up} far bins up (max {max_far:+.2e})", r.seed));
    }
    let (pass, tally) = seed_tally(&hits);
    Outcome {
        pass,
        detail: format!("focus down and far bin up in {tally} [{}]", rows.join("; ")),
    }
}

fn criterion_9(all: &[SeedRuns]) -> Outcome {
    let schedule = cosine(1000);
    let diag = DiagnosticConfig::default();
    let mut hits = Vec::new();
    let mut rows = Vec::new();
    for r in all {
        let data = run_dataset(DatasetKind::GaussianMixture8, N_DATA, r.seed).unwrap();
        let table = instability_experiment(
            checkpoint(r),
            &data,
            &schedule,
            &INSTABILITY_SIZES,
            INSTABILITY_REPEATS,
            RELATIVE_LAMBDA,
            r.seed,
            &diag,
        )
        .unwrap();
        let (small, large) = (table[0].weight_std, table[1].weight_std);
        hits.push(large < small);
        rows.push(format!("s{}: {small:.3} -> {large:.3}", r.seed));
    }
    let (pass, tally) = seed_tally(&hits);
    Outcome {
        pass,
        detail: format!("std(4096) < std(64) in {tally} [{}]", rows.join("; ")),
    }
}

fn criterion_10(all: &[SeedRuns]) -> Outcome {
    let mut hits = Vec::new();
    let mut rows = Vec::new();
    for r in all {
        let fast = r.min_snr.row_at(CHECKPOINT_ITERS).unwrap().metric;
        let slow = r.constant.row_at(LONG_ITERS).unwrap().metric;
        hits.push(fast <= slow);
        rows.push(format!("s{}: {fast:.4} vs {slow:.4}", r.seed));
    }
    let (pass, tally) = seed_tally(&hits);
    Outcome {
        pass,
        detail: format!("min-snr-5 @10k <= const @20k in {tally} [{}]", rows.join("; ")),
    }
}

fn spread(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - values.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn criterion_11(all: &[SeedRuns]) -> Outcome {
    let schedule = cosine(1000);
    let seed0 = &all[0];
    let others: Vec<f64> = SWEEP_GAMMAS.iter().copied().filter(|&g| g != 5.0).collect();
    let runs = sweep_gamma(&base_config(seed0.seed), DatasetKind::GaussianMixture8, N_DATA, &schedule, &others, &[seed0.seed], 1).unwrap();
    let mut by_gamma: Vec<(f64, f64)> = runs.iter().map(|r| (r.gamma, r.final_metric())).collect();
    by_gamma.push((5.0, seed0.min_snr.final_row().metric));
    by_gamma.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gamma_spread = spread(&by_gamma.iter().map(|x| x.1).collect::<Vec<_>>());
    let seed_metrics: Vec<f64> = all.iter().map(|r| r.min_snr.final_row().metric).collect();
    let seed_spread = spread(&seed_metrics);
    Outcome {
        pass: gamma_spread <= GAMMA_SPREAD_FACTOR * seed_spread,
        detail: format!(
            "gamma spread {gamma_spread:.4} vs seed spread {seed_spread:.4} [{}]",
            by_gamma.iter().map(|(g, m)| format!("g={g}: {m:.4}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn criterion_12() -> Outcome {
    let schedule = cosine(1000);
    let run = || {
        let data = run_dataset(DatasetKind::SwissRoll, 2000, 12).unwrap();
        let cfg = TrainConfig {
            iterations: 200,
            batch_size: 64,
            hidden: vec![32, 32],
            eval_every: 100,
            seed: 12,
            eval: EvalConfig {
                samples_per_bin: 64,
                metric_samples: 256,
                sampler_steps: 20,
                ..EvalConfig::default()
            },
            ..TrainConfig::default()
        };
        let record = train(&cfg, &data, &schedule).unwrap();
        let mut csv = Vec::new();
        record.write_csv(&mut csv, false).unwrap();
        let probe = conflict_probe(&record.params, &data, &schedule, 2, 20, &cfg).unwrap();
        let bins = binned_unweighted_loss(&record.ema, &data, &schedule, 10, PredictionTarget::X0, 64, 3).unwrap();
        let theta: Vec<u8> = record.params.theta().iter().flat_map(|x| x.to_le_bytes()).collect();
        (csv, theta, format!("{:?}{:?}", probe, bins))
    };
    let (a, b) = (run(), run());
    Outcome {
        pass: a == b,
        detail: format!("train CSV ({} bytes), parameters and probe output identical across re-runs: {}", a.0.len(), a == b),
    }
}

fn print_line(results: &mut Vec<bool>, id: usize, budget: Duration, elapsed: Duration, out: Outcome) {
    let pass = out.pass && elapsed <= budget;
    let budget_note = if elapsed <= budget { String::new() } else { format!(" over budget {budget:?}") };
    println!(
        "criterion {id:>2}: {} | {} | {:.2}s{budget_note}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    results.push(pass);
}

fn report(results: &mut Vec<bool>, id: usize, budget: Duration, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let out = f();
    print_line(results, id, budget, start.elapsed(), out);
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|s| s.contains(&id));
    let secs = Duration::from_secs;
    let mut results = Vec::new();

    if wanted(1) {
        report(&mut results, 1, secs(1), criterion_1);
    }
    if wanted(2) {
        report(&mut results, 2, secs(1), criterion_2);
    }
    if wanted(3) {
        report(&mut results, 3, secs(1), criterion_3);
    }
    if wanted(4) {
        report(&mut results, 4, secs(30), criterion_4);
    }
    if wanted(5) || wanted(6) {
        let start = Instant::now();
        let (c5, c6) = criteria_5_6();
        let elapsed = start.elapsed();
        if wanted(5) {
            print_line(&mut results, 5, secs(60), elapsed, c5);
        }
        if wanted(6) {
            print_line(&mut results, 6, secs(60), elapsed, c6);
        }
    }
    if (7..=11).any(wanted) {
        let start = Instant::now();
        let all: Vec<SeedRuns> = SEEDS.iter().map(|&s| seed_runs(s)).collect();
        let per_seed: Vec<String> = all.iter().map(|r| format!("{:.0}s", r.seconds)).collect();
        println!(
            "              shared training: 5 seeds x (const {LONG_ITERS} + min-snr-5 {LONG_ITERS}) iterations in {:.0}s [{}]",
            start.elapsed().as_secs_f64(),
            per_seed.join(", ")
        );
        let train_secs = start.elapsed();
        if wanted(7) {
            report(&mut results, 7, secs(600), || criterion_7(&all));
        }
        if wanted(8) {
            report(&mut results, 8, secs(600), || criterion_8(&all));
        }
        if wanted(9) {
            report(&mut results, 9, secs(600), || criterion_9(&all));
        }
        if wanted(10) {
            let start = Instant::now();
            let out = criterion_10(&all);
            print_line(&mut results, 10, secs(1800), train_secs + start.elapsed(), out);
        }
        if wanted(11) {
            let start = Instant::now();
            let out = criterion_11(&all);
            print_line(&mut results, 11, secs(3600), train_secs + start.elapsed(), out);
        }
    }
    if wanted(12) {
        report(&mut results, 12, secs(60), criterion_12);
    }

    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    // The report lines are the verdict; a nonzero exit is opt-in.
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
