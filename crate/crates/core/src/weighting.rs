//! Per-timestep loss weights.
//!
//! Rules are defined in x0-space and converted to the epsilon / velocity
//! targets by dividing by `snr` and `snr + 1` respectively.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Schedule;

pub const DEFAULT_GAMMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictionTarget {
    #[serde(rename = "x0")]
    X0,
    #[serde(rename = "eps")]
    Epsilon,
    #[serde(rename = "v")]
    Velocity,
}

impl PredictionTarget {
    pub const ALL: [PredictionTarget; 3] = [
        PredictionTarget::X0,
        PredictionTarget::Epsilon,
        PredictionTarget::Velocity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictionTarget::X0 => "x0",
            PredictionTarget::Epsilon => "eps",
            PredictionTarget::Velocity => "v",
        }
    }
}

impl fmt::Display for PredictionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictionTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x0" => Ok(PredictionTarget::X0),
            "eps" | "epsilon" => Ok(PredictionTarget::Epsilon),
            "v" | "velocity" => Ok(PredictionTarget::Velocity),
            other => Err(Error::Parse(format!(
                "unknown target `{other}` (expected x0|eps|v)"
            ))),
        }
    }
}

/// One bin of externally supplied weights; `low_t..=high_t` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinWeight {
    pub low_t: usize,
    pub high_t: usize,
    pub weight: f64,
}

/// Supplied per-bin weights, e.g. a min-norm solution exported as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalWeights {
    source: String,
    bins: Vec<BinWeight>,
}

impl ExternalWeights {
    pub fn new(source: impl Into<String>, bins: Vec<BinWeight>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::invalid("external weights need at least one bin"));
        }
        for b in &bins {
            if !(b.weight >= 0.0) || !b.weight.is_finite() {
                return Err(Error::invalid(format!(
                    "external weight must be finite and nonnegative, got {}",
                    b.weight
                )));
            }
            if b.low_t > b.high_t {
                return Err(Error::invalid(format!(
                    "bin bounds reversed: {}..={}",
                    b.low_t, b.high_t
                )));
            }
        }
        Ok(ExternalWeights {
            source: source.into(),
            bins,
        })
    }

    /// Parses `bin_index,low_t,high_t,weight` rows (header optional).
    pub fn from_csv_str(source: impl Into<String>, text: &str) -> Result<Self> {
        let mut bins = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("bin_index") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "line {}: expected 4 fields, got {}",
                    line_no + 1,
                    fields.len()
                )));
            }
            let bad = |what: &str| Error::Parse(format!("line {}: bad {what}", line_no + 1));
            bins.push(BinWeight {
                low_t: fields[1].parse().map_err(|_| bad("low_t"))?,
                high_t: fields[2].parse().map_err(|_| bad("high_t"))?,
                weight: fields[3].parse().map_err(|_| bad("weight"))?,
            });
        }
        ExternalWeights::new(source, bins)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExternalWeights::from_csv_str(path.display().to_string(), &text)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn bins(&self) -> &[BinWeight] {
        &self.bins
    }

    /// Weight of the bin containing `t`, or of the nearest bin otherwise.
    pub fn lookup(&self, t: usize) -> f64 {
        let distance = |b: &BinWeight| {
            if t < b.low_t {
                b.low_t - t
            } else if t > b.high_t {
                t - b.high_t
            } else {
                0
            }
        };
        self.bins
            .iter()
            .min_by_key(|b| distance(b))
            .map(|b| b.weight)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightStrategy {
    Constant,
    Snr,
    /// `max(snr, gamma)`, a.k.a. truncated SNR.
    MaxSnrGamma { gamma: f64 },
    /// `min(snr, gamma)`.
    MinSnrGamma { gamma: f64 },
    External(ExternalWeights),
}

fn check_gamma(gamma: f64) -> Result<f64> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(gamma)
    } else {
        Err(Error::invalid(format!("gamma must be finite and > 0, got {gamma}")))
    }
}

impl WeightStrategy {
    pub fn min_snr(gamma: f64) -> Result<Self> {
        Ok(WeightStrategy::MinSnrGamma {
            gamma: check_gamma(gamma)?,
        })
    }

    pub fn max_snr(gamma: f64) -> Result<Self> {
        Ok(WeightStrategy::MaxSnrGamma {
            gamma: check_gamma(gamma)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            WeightStrategy::MaxSnrGamma { gamma } | WeightStrategy::MinSnrGamma { gamma } => {
                check_gamma(*gamma).map(|_| ())
            }
            _ => Ok(()),
        }
    }

    /// Loss weight actually applied for a sample at timestep `t`.
    ///
    /// External weights are taken as already expressed in the target's own
    /// loss space; every other rule goes through [`weight_for_target`].
    pub fn loss_weight(&self, target: PredictionTarget, t: usize, schedule: &Schedule) -> Result<f64> {
        match self {
            WeightStrategy::External(ext) => {
                schedule.snr(t)?;
                Ok(ext.lookup(t))
            }
            _ => weight_for_target(self, target, schedule.snr(t)?),
        }
    }
}

impl fmt::Display for WeightStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightStrategy::Constant => f.write_str("const"),
            WeightStrategy::Snr => f.write_str("snr"),
            WeightStrategy::MaxSnrGamma { gamma } => write!(f, "max-snr:{gamma}"),
            WeightStrategy::MinSnrGamma { gamma } => write!(f, "min-snr:{gamma}"),
            WeightStrategy::External(ext) => write!(f, "external:{}", ext.source()),
        }
    }
}

/// Parses `const`, `snr`, `max-snr:<g>`, `min-snr:<g>` or `external:<path.csv>`.
/// The external form reads the CSV file.
pub fn parse_strategy(text: &str) -> Result<WeightStrategy> {
    let malformed = || Error::MalformedStrategy {
        text: text.to_string(),
    };
    let (head, arg) = match text.split_once(':') {
        Some((h, a)) => (h.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    let gamma = |a: Option<&str>| -> Result<f64> {
        let g: f64 = a.ok_or_else(malformed)?.parse().map_err(|_| malformed())?;
        check_gamma(g)
    };
    match head {
        "const" | "constant" if arg.is_none() => Ok(WeightStrategy::Constant),
        "snr" if arg.is_none() => Ok(WeightStrategy::Snr),
        "max-snr" => WeightStrategy::max_snr(gamma(arg)?),
        "min-snr" => WeightStrategy::min_snr(gamma(arg)?),
        "external" => {
            let path = arg.filter(|p| !p.is_empty()).ok_or_else(malformed)?;
            Ok(WeightStrategy::External(ExternalWeights::from_csv_path(
                Path::new(path),
            )?))
        }
        _ => Err(malformed()),
    }
}

impl FromStr for WeightStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_strategy(s)
    }
}

/// x0-space weight of a computed rule.
pub fn weight_x0(strategy: &WeightStrategy, snr_t: f64) -> Result<f64> {
    if !(snr_t >= 0.0) {
        return Err(Error::invalid(format!("snr must be >= 0, got {snr_t}")));
    }
    match strategy {
        WeightStrategy::Constant => Ok(1.0),
        WeightStrategy::Snr => Ok(snr_t),
        WeightStrategy::MaxSnrGamma { gamma } => Ok(snr_t.max(*gamma)),
        WeightStrategy::MinSnrGamma { gamma } => Ok(snr_t.min(*gamma)),
        WeightStrategy::External(_) => Err(Error::UnsupportedStrategy(strategy.to_string())),
    }
}

pub fn weight_for_target(strategy: &WeightStrategy, target: PredictionTarget, snr_t: f64) -> Result<f64> {
    let w = weight_x0(strategy, snr_t)?;
    match target {
        PredictionTarget::X0 => Ok(w),
        PredictionTarget::Epsilon => {
            if snr_t == 0.0 {
                Err(Error::DivisionGuard(
                    "epsilon-target weight requires snr > 0".into(),
                ))
            } else {
                Ok(w / snr_t)
            }
        }
        PredictionTarget::Velocity => Ok(w / (snr_t + 1.0)),
    }
}

/// `weights[t - 1]` is the loss weight at timestep `t`.
pub fn weights_table(strategy: &WeightStrategy, target: PredictionTarget, schedule: &Schedule) -> Result<Vec<f64>> {
    (1..=schedule.steps())
        .map(|t| strategy.loss_weight(target, t, schedule))
        .collect()
}
