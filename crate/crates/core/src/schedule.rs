//! Variance-preserving noise schedules.
//!
//! A [`Schedule`] is a precomputed table of `(alpha_t, sigma_t, snr_t)` for
//! `t` in `1..=T`. Index `t = 0` is clean data and is never stored.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_COSINE_OFFSET: f64 = 0.008;
pub const DEFAULT_SNR_CAP: f64 = 1e8;
pub const LINEAR_BETA_START: f64 = 1e-4;
pub const LINEAR_BETA_END: f64 = 0.02;

/// Tolerance on `alpha^2 + sigma^2 = 1`.
pub const VP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ScheduleKind::Cosine),
            "linear" => Ok(ScheduleKind::Linear),
            other => Err(Error::Parse(format!(
                "unknown schedule `{other}` (expected cosine|linear)"
            ))),
        }
    }
}

/// Serialized form of a schedule. Tables are always rebuilt from this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(rename = "T")]
    pub steps: usize,
    pub offset_s: f64,
    pub snr_cap: f64,
    pub kind: ScheduleKind,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            steps: DEFAULT_STEPS,
            offset_s: DEFAULT_COSINE_OFFSET,
            snr_cap: DEFAULT_SNR_CAP,
            kind: ScheduleKind::Cosine,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        match self.kind {
            ScheduleKind::Cosine => build_cosine_schedule(self.steps, self.offset_s, self.snr_cap),
            ScheduleKind::Linear => build_linear_schedule(self.steps, self.snr_cap),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    offset_s: f64,
    snr_cap: f64,
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
    snrs: Vec<f64>,
}

fn clamped_snr(alpha: f64, sigma: f64, cap: f64) -> f64 {
    let s2 = sigma * sigma;
    if s2 < 1.0 / (1.0 + cap) {
        cap
    } else {
        (alpha * alpha / s2).min(cap)
    }
}

/// Cosine schedule: `abar(t) = f(t/T) / f(0)`, `f(u) = cos^2(((u + s) / (1 + s)) * pi/2)`.
pub fn build_cosine_schedule(steps: usize, offset_s: f64, snr_cap: f64) -> Result<Schedule> {
    if steps < 2 {
        return Err(Error::invalid(format!("T must be >= 2, got {steps}")));
    }
    if !(offset_s > 0.0 && offset_s < 1.0) {
        return Err(Error::invalid(format!("offset_s must lie in (0, 1), got {offset_s}")));
    }
    if !(snr_cap > 1.0) || !snr_cap.is_finite() {
        return Err(Error::invalid(format!("snr_cap must be finite and > 1, got {snr_cap}")));
    }
    let f = |u: f64| {
        let c = ((u + offset_s) / (1.0 + offset_s) * FRAC_PI_2).cos();
        c * c
    };
    let f0 = f(0.0);
    let abars = (1..=steps).map(|t| {
        if t == steps {
            // cos(pi/2) is exactly zero; f64 leaves a ~1e-33 residue.
            0.0
        } else {
            (f(t as f64 / steps as f64) / f0).clamp(0.0, 1.0)
        }
    });
    Ok(Schedule::from_alpha_bars(ScheduleKind::Cosine, offset_s, snr_cap, abars))
}

/// Linear-beta schedule: `beta_t` evenly spaced in `[1e-4, 0.02]` (rescaled to `T`).
pub fn build_linear_schedule(steps: usize, snr_cap: f64) -> Result<Schedule> {
    if steps < 2 {
        return Err(Error::invalid(format!("T must be >= 2, got {steps}")));
    }
    if !(snr_cap > 1.0) || !snr_cap.is_finite() {
        return Err(Error::invalid(format!("snr_cap must be finite and > 1, got {snr_cap}")));
    }
    let scale = DEFAULT_STEPS as f64 / steps as f64;
    let start = (LINEAR_BETA_START * scale).min(0.999);
    let end = (LINEAR_BETA_END * scale).min(0.999);
    let mut abar = 1.0;
    let abars: Vec<f64> = (0..steps)
        .map(|i| {
            let beta = start + (end - start) * i as f64 / (steps - 1) as f64;
            abar *= 1.0 - beta;
            abar
        })
        .collect();
    Ok(Schedule::from_alpha_bars(
        ScheduleKind::Linear,
        DEFAULT_COSINE_OFFSET,
        snr_cap,
        abars,
    ))
}

impl Schedule {
    fn from_alpha_bars(
        kind: ScheduleKind,
        offset_s: f64,
        snr_cap: f64,
        abars: impl IntoIterator<Item = f64>,
    ) -> Schedule {
        let (alphas, sigmas): (Vec<f64>, Vec<f64>) =
            abars.into_iter().map(|a| (a.sqrt(), (1.0 - a).sqrt())).unzip();
        let snrs = alphas
            .iter()
            .zip(&sigmas)
            .map(|(&a, &s)| clamped_snr(a, s, snr_cap))
            .collect();
        Schedule {
            kind,
            offset_s,
            snr_cap,
            alphas,
            sigmas,
            snrs,
        }
    }

    /// Assemble a schedule from raw tables without checking invariants.
    /// Use [`validate`] to inspect the result.
    pub fn from_raw_tables(alphas: Vec<f64>, sigmas: Vec<f64>, snr_cap: f64) -> Result<Schedule> {
        if alphas.len() != sigmas.len() {
            return Err(Error::DimensionMismatch {
                expected: alphas.len(),
                actual: sigmas.len(),
                context: "sigma table",
            });
        }
        let snrs = alphas
            .iter()
            .zip(&sigmas)
            .map(|(&a, &s)| clamped_snr(a, s, snr_cap))
            .collect();
        Ok(Schedule {
            kind: ScheduleKind::Cosine,
            offset_s: DEFAULT_COSINE_OFFSET,
            snr_cap,
            alphas,
            sigmas,
            snrs,
        })
    }

    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn snr_cap(&self) -> f64 {
        self.snr_cap
    }

    pub fn spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            steps: self.steps(),
            offset_s: self.offset_s,
            snr_cap: self.snr_cap,
            kind: self.kind,
        }
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            Err(Error::TimestepOutOfRange {
                t,
                steps: self.steps(),
            })
        } else {
            Ok(t - 1)
        }
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alphas[self.index(t)?])
    }

    pub fn sigma(&self, t: usize) -> Result<f64> {
        Ok(self.sigmas[self.index(t)?])
    }

    /// Clamped `alpha_t^2 / sigma_t^2`.
    pub fn snr(&self, t: usize) -> Result<f64> {
        Ok(self.snrs[self.index(t)?])
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn snrs(&self) -> &[f64] {
        &self.snrs
    }
}

/// Free-function form of [`Schedule::snr`].
pub fn snr(schedule: &Schedule, t: usize) -> Result<f64> {
    schedule.snr(t)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `|alpha^2 + sigma^2 - 1|` exceeds [`VP_TOLERANCE`].
    VariancePreserving { t: usize, residual: f64 },
    /// `sigma_{t+1} < sigma_t`.
    SigmaNotMonotone { t: usize },
    /// `snr_{t+1} > snr_t`.
    SnrNotMonotone { t: usize },
    /// alpha or sigma outside their admissible ranges, or non-finite.
    OutOfRange { t: usize, alpha: f64, sigma: f64 },
    TooFewSteps { steps: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VariancePreserving { t, residual } => {
                write!(f, "alpha^2 + sigma^2 = 1 violated at t={t} (residual {residual:e})")
            }
            Violation::SigmaNotMonotone { t } => {
                write!(f, "sigma decreases between t={t} and t={}", t + 1)
            }
            Violation::SnrNotMonotone { t } => {
                write!(f, "snr increases between t={t} and t={}", t + 1)
            }
            Violation::OutOfRange { t, alpha, sigma } => {
                write!(f, "alpha={alpha} / sigma={sigma} out of range at t={t}")
            }
            Violation::TooFewSteps { steps } => write!(f, "schedule has {steps} steps (< 2)"),
        }
    }
}

/// Reports every invariant violation; an empty list means the schedule is valid.
pub fn validate(schedule: &Schedule) -> Vec<Violation> {
    let mut out = Vec::new();
    if schedule.steps() < 2 {
        out.push(Violation::TooFewSteps {
            steps: schedule.steps(),
        });
    }
    for (i, (&a, &s)) in schedule.alphas.iter().zip(&schedule.sigmas).enumerate() {
        let t = i + 1;
        let in_range = a.is_finite() && s.is_finite() && a >= 0.0 && a <= 1.0 && (0.0..=1.0).contains(&s);
        if !in_range {
            out.push(Violation::OutOfRange { t, alpha: a, sigma: s });
        }
        let residual = a * a + s * s - 1.0;
        if !(residual.abs() <= VP_TOLERANCE) {
            out.push(Violation::VariancePreserving { t, residual });
        }
    }
    for i in 1..schedule.steps() {
        if schedule.sigmas[i] < schedule.sigmas[i - 1] {
            out.push(Violation::SigmaNotMonotone { t: i });
        }
        if schedule.snrs[i] > schedule.snrs[i - 1] {
            out.push(Violation::SnrNotMonotone { t: i });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(steps: usize) -> Schedule {
        build_cosine_schedule(steps, DEFAULT_COSINE_OFFSET, DEFAULT_SNR_CAP).unwrap()
    }

    #[test]
    fn cosine_endpoint_is_pure_noise() {
        let s = cosine(1000);
        assert_eq!(s.alpha(1000).unwrap(), 0.0);
        assert_eq!(s.sigma(1000).unwrap(), 1.0);
        assert_eq!(s.snr(1000).unwrap(), 0.0);
    }

    #[test]
    fn snr_at_midpoint_matches_high_precision_value() {
        // 40-digit evaluation of f(0.5)/f(0) with s = 0.008, SNR = abar / (1 - abar).
        let s = cosine(1000);
        let expected = 0.975_673_884_818_640_2;
        assert!((s.snr(500).unwrap() - expected).abs() < 1e-12);
        // First step stays far below the cap.
        let expected_first = 24_221.327_155_637_69;
        assert!((s.snr(1).unwrap() - expected_first).abs() / expected_first < 1e-9);
    }

    #[test]
    fn snr_clamps_to_cap_at_zero_noise() {
        let cap = 1e8;
        assert_eq!(clamped_snr(1.0, 0.0, cap), cap);
        assert_eq!(clamped_snr(1.0, 1e-6, cap), cap);
        // With a fine grid the head of the cosine schedule exceeds the cap.
        let s = build_cosine_schedule(1_000_000, 0.008, 1e6).unwrap();
        assert_eq!(s.snr(1).unwrap(), 1e6);
        assert!(s.snr(1_000).unwrap() < 1e6);
        assert!(validate(&s).is_empty());
    }

    #[test]
    fn snr_simple_values() {
        let s = Schedule::from_raw_tables(
            vec![0.6, std::f64::consts::FRAC_1_SQRT_2],
            vec![0.8, std::f64::consts::FRAC_1_SQRT_2],
            DEFAULT_SNR_CAP,
        )
        .unwrap();
        assert!((snr(&s, 1).unwrap() - 0.5625).abs() < 1e-15);
        assert!((snr(&s, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(snr(&s, 0), Err(Error::TimestepOutOfRange { .. })));
        assert!(matches!(snr(&s, 3), Err(Error::TimestepOutOfRange { .. })));
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(build_cosine_schedule(1, 0.008, 1e8).is_err());
        assert!(build_cosine_schedule(10, 0.0, 1e8).is_err());
        assert!(build_cosine_schedule(10, 1.0, 1e8).is_err());
        assert!(build_cosine_schedule(10, 0.008, 0.5).is_err());
        assert!(build_linear_schedule(1, 1e8).is_err());
    }

    #[test]
    fn built_schedules_are_valid() {
        for steps in [2, 10, 100, 1000] {
            assert!(validate(&cosine(steps)).is_empty(), "cosine T={steps}");
            let lin = build_linear_schedule(steps, DEFAULT_SNR_CAP).unwrap();
            assert!(validate(&lin).is_empty(), "linear T={steps}");
        }
    }

    #[test]
    fn injected_alpha_is_reported() {
        let s = cosine(50);
        let mut alphas = s.alphas().to_vec();
        alphas[0] = 2.0;
        let bad = Schedule::from_raw_tables(alphas, s.sigmas().to_vec(), DEFAULT_SNR_CAP).unwrap();
        let v = validate(&bad);
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::VariancePreserving { t: 1, .. })));
        assert!(v.iter().any(|x| x.to_string().contains("alpha^2 + sigma^2 = 1")));
    }

    #[test]
    fn reversed_sigmas_are_reported() {
        let s = cosine(50);
        let mut alphas = s.alphas().to_vec();
        let mut sigmas = s.sigmas().to_vec();
        alphas.reverse();
        sigmas.reverse();
        let bad = Schedule::from_raw_tables(alphas, sigmas, DEFAULT_SNR_CAP).unwrap();
        let v = validate(&bad);
        assert!(v.iter().any(|x| matches!(x, Violation::SigmaNotMonotone { .. })));
    }

    #[test]
    fn build_is_deterministic() {
        let a = cosine(1000);
        let b = cosine(1000);
        for (x, y) in a.alphas().iter().zip(b.alphas()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn spec_json_shape() {
        let json = serde_json::to_string(&ScheduleSpec::default()).unwrap();
        assert_eq!(json, r#"{"T":1000,"offset_s":0.008,"snr_cap":100000000.0,"kind":"cosine"}"#);
        let back: ScheduleSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.build().unwrap(), cosine(1000));
    }
}
