//! Two-dimensional toy datasets.
//!
//! Every generator standardizes its output to zero mean and unit variance per
//! axis (population statistics).

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    #[serde(rename = "gaussian-mixture-8", alias = "mixture", alias = "8gaussians")]
    GaussianMixture8,
    #[serde(alias = "swissroll")]
    SwissRoll,
    Checkerboard,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::GaussianMixture8 => "gaussian-mixture-8",
            DatasetKind::SwissRoll => "swiss-roll",
            DatasetKind::Checkerboard => "checkerboard",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian-mixture-8" | "mixture" | "8gaussians" => Ok(DatasetKind::GaussianMixture8),
            "swiss-roll" | "swissroll" => Ok(DatasetKind::SwissRoll),
            "checkerboard" => Ok(DatasetKind::Checkerboard),
            other => Err(Error::Parse(format!(
                "unknown dataset `{other}` (expected gaussian-mixture-8|swiss-roll|checkerboard)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub kind: DatasetKind,
    pub points: Array2<f64>,
    pub seed: u64,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }
}

/// Mode radius and per-mode standard deviation of the eight-Gaussian ring.
const RING_RADIUS: f64 = 2.0;
const RING_STD: f64 = 0.2;

fn mixture8(rng: &mut ChaCha8Rng, n: usize) -> (Array2<f64>, Vec<usize>) {
    let mut pts = Array2::zeros((n, 2));
    let mut modes = Vec::with_capacity(n);
    for i in 0..n {
        let k = rng.random_range(0..8usize);
        let angle = 2.0 * PI * k as f64 / 8.0;
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        pts[[i, 0]] = RING_RADIUS * angle.cos() + RING_STD * zx;
        pts[[i, 1]] = RING_RADIUS * angle.sin() + RING_STD * zy;
        modes.push(k);
    }
    (pts, modes)
}

fn swiss_roll(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut pts = Array2::zeros((n, 2));
    for i in 0..n {
        let u: f64 = rng.random();
        let r = 1.5 * PI * (1.0 + 2.0 * u);
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        pts[[i, 0]] = r * r.cos() + 0.5 * zx;
        pts[[i, 1]] = r * r.sin() + 0.5 * zy;
    }
    pts
}

fn checkerboard(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    let mut pts = Array2::zeros((n, 2));
    for i in 0..n {
        // 4x4 board on [-2, 2)^2, keeping squares with even index sum.
        loop {
            let x: f64 = rng.random_range(-2.0..2.0);
            let y: f64 = rng.random_range(-2.0..2.0);
            if ((x.floor() + y.floor()) as i64).rem_euclid(2) == 0 {
                pts[[i, 0]] = x;
                pts[[i, 1]] = y;
                break;
            }
        }
    }
    pts
}

fn standardize(points: &mut Array2<f64>) {
    let n = points.nrows() as f64;
    for mut col in points.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        col -= mean;
        let var = col.iter().map(|x| x * x).sum::<f64>() / n;
        if var > 0.0 {
            col /= var.sqrt();
        }
    }
}

pub fn make_dataset(kind: DatasetKind, n: usize, seed: u64) -> Result<ToyDataset> {
    Ok(make_labelled(kind, n, seed)?.0)
}

/// Like [`make_dataset`], also returning the mixture component of each point
/// (all zero for the non-mixture kinds).
pub fn make_labelled(kind: DatasetKind, n: usize, seed: u64) -> Result<(ToyDataset, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!("dataset needs n >= 2, got {n}")));
    }
    let mut rng = seed::rng(seed, kind.as_str());
    let (mut points, labels) = match kind {
        DatasetKind::GaussianMixture8 => mixture8(&mut rng, n),
        DatasetKind::SwissRoll => (swiss_roll(&mut rng, n), vec![0; n]),
        DatasetKind::Checkerboard => (checkerboard(&mut rng, n), vec![0; n]),
    };
    standardize(&mut points);
    Ok((ToyDataset { kind, points, seed }, labels))
}

/// Writes points as CSV with header `x0,x1,...`.
pub fn write_points_csv<W: Write>(points: ArrayView2<'_, f64>, mut out: W) -> Result<()> {
    let header: Vec<String> = (0..points.ncols()).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in points.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_points_csv<R: BufRead>(input: R) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with('x')) {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{f}`", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    actual: row.len(),
                    context: "csv row",
                });
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / cols.max(1), cols), flat).map_err(|e| Error::Parse(e.to_string()))
}
