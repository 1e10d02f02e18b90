//! Sliced 1-Wasserstein distance between point clouds.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_PROJECTIONS: usize = 128;

/// Exact 1-D Wasserstein-1 distance between two empirical distributions.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    // Integrate |F_a^-1(u) - F_b^-1(u)| over u in [0, 1] across merged quantile breaks.
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i + 1) as f64 / n;
        let next_b = (j + 1) as f64 / m;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    total
}

/// Unit directions for projecting `dim`-dimensional points.
///
/// In 2-D the angles are stratified: `(k + U) * pi / n` for one seeded `U`.
/// Otherwise directions come in seeded random orthonormal frames.
pub fn projection_directions(dim: usize, count: usize, seed: u64) -> Array2<f64> {
    let mut rng = seed::rng(seed, "sliced-wasserstein");
    let mut dirs = Array2::zeros((count, dim));
    match dim {
        1 => dirs.fill(1.0),
        2 => {
            let offset: f64 = rng.random();
            for k in 0..count {
                let angle = (k as f64 + offset) * PI / count as f64;
                dirs[[k, 0]] = angle.cos();
                dirs[[k, 1]] = angle.sin();
            }
        }
        _ => {
            let mut k = 0;
            while k < count {
                // Gram-Schmidt on a Gaussian frame.
                let mut frame: Vec<Array1<f64>> = Vec::with_capacity(dim);
                while frame.len() < dim && k + frame.len() < count {
                    let mut v = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
                    for f in &frame {
                        let proj = v.dot(f);
                        v.scaled_add(-proj, f);
                    }
                    let norm = v.dot(&v).sqrt();
                    if norm > 1e-12 {
                        frame.push(v / norm);
                    }
                }
                for f in frame {
                    dirs.row_mut(k).assign(&f);
                    k += 1;
                }
            }
        }
    }
    dirs
}

fn project(points: ArrayView2<'_, f64>, dir: ArrayView1<'_, f64>) -> Vec<f64> {
    points.dot(&dir).to_vec()
}

/// Average 1-D Wasserstein-1 distance over projection directions.
pub fn sliced_wasserstein_with(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, directions: ArrayView2<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::invalid("point sets must be nonempty"));
    }
    if a.ncols() != b.ncols() || directions.ncols() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            actual: if a.ncols() != b.ncols() { b.ncols() } else { directions.ncols() },
            context: "point dimension",
        });
    }
    let total: f64 = directions
        .rows()
        .into_iter()
        .map(|dir| wasserstein_1d(&project(a, dir), &project(b, dir)))
        .sum();
    Ok(total / directions.nrows() as f64)
}

pub fn sliced_wasserstein(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, n_projections: usize, seed: u64) -> Result<f64> {
    if n_projections == 0 {
        return Err(Error::invalid("need at least one projection"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            actual: b.ncols(),
            context: "point dimension",
        });
    }
    let dirs = projection_directions(a.ncols(), n_projections, seed);
    sliced_wasserstein_with(a, b, dirs.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian(seed: u64, n: usize, shift: f64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 2), |(_, j)| {
            rng.sample::<f64, _>(StandardNormal) + if j == 0 { shift } else { 0.0 }
        })
    }

    #[test]
    fn identity_and_translation() {
        let a = gaussian(1, 300, 0.0);
        assert_eq!(sliced_wasserstein(a.view(), a.view(), 64, 0).unwrap(), 0.0);
        let p = array![[0.0]];
        let q = array![[-2.5]];
        assert_eq!(sliced_wasserstein(p.view(), q.view(), 8, 0).unwrap(), 2.5);
    }

    #[test]
    fn unequal_sizes() {
        assert!((wasserstein_1d(&[0.0, 1.0], &[0.0, 0.5, 1.0, 1.5]) - 0.25).abs() < 1e-12);
        assert!((wasserstein_1d(&[0.0], &[1.0, 3.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn directions_are_unit() {
        for dim in [1, 2, 3, 5] {
            let d = projection_directions(dim, 17, 4);
            for row in d.rows() {
                assert!((row.dot(&row) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn errors() {
        let a = array![[0.0, 1.0]];
        let b = array![[0.0]];
        assert!(sliced_wasserstein(a.view(), b.view(), 4, 0).is_err());
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(sliced_wasserstein(a.view(), empty.view(), 4, 0).is_err());
    }

    #[test]
    fn shifted_gaussians_match_dense_angular_oracle() {
        let a = gaussian(2, 4096, 0.0);
        let b = gaussian(3, 4096, 2.0);
        let mc = sliced_wasserstein(a.view(), b.view(), 128, 9).unwrap();
        // Dense deterministic angles over [0, pi).
        let dense: f64 = (0..4096)
            .map(|k| {
                let ang = (k as f64 + 0.5) * PI / 4096.0;
                let dir = array![ang.cos(), ang.sin()];
                wasserstein_1d(&project(a.view(), dir.view()), &project(b.view(), dir.view()))
            })
            .sum::<f64>()
            / 4096.0;
        assert!((mc - dense).abs() / dense < 0.02, "{mc} vs {dense}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn symmetric_nonnegative_and_translation_bounded(
            seed in 0u64..1000, mx in -3.0f64..3.0, my in -3.0f64..3.0
        ) {
            let a = gaussian(seed, 64, 0.0);
            let b = gaussian(seed + 1, 64, 0.5);
            let ab = sliced_wasserstein(a.view(), b.view(), 16, seed).unwrap();
            let ba = sliced_wasserstein(b.view(), a.view(), 16, seed).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            let shifted = &b + &array![mx, my];
            let moved = sliced_wasserstein(a.view(), shifted.view(), 16, seed).unwrap();
            prop_assert!((moved - ab).abs() <= (mx * mx + my * my).sqrt() + 1e-12);
        }
    }
}
