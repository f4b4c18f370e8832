#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensorial::{Chart, DenseTensor, Matrix, TransitionPair, Valency};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in [-1, 1].
pub fn random_matrix(rng: &mut impl Rng, dim: usize) -> Matrix<f64> {
    Matrix::from_fn(dim, |_, _| rng.gen_range(-1.0..=1.0))
}

/// Rejection-sampled matrix with condition number below 50.
pub fn well_conditioned(rng: &mut impl Rng, dim: usize) -> Matrix<f64> {
    loop {
        let m = random_matrix(rng, dim);
        let Ok(inv) = m.inverse() else { continue };
        let norm = |a: &Matrix<f64>| {
            (0..dim).map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
        };
        if norm(&m) * norm(&inv) < 50.0 {
            return m;
        }
    }
}

pub fn random_pair(rng: &mut impl Rng, dim: usize) -> TransitionPair<f64> {
    TransitionPair::from_direct(well_conditioned(rng, dim)).expect("conditioned matrix")
}

pub fn random_tensor(rng: &mut impl Rng, valency: Valency, dim: usize) -> DenseTensor<f64> {
    let n = dim.pow(valency.order() as u32);
    DenseTensor::from_components(valency, dim, (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .expect("valid shape")
}

pub fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Uniform point in the chart's sampling box.
pub fn chart_point(rng: &mut impl Rng, chart: &Chart<f64>) -> Vec<f64> {
    chart.sample_box().iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
