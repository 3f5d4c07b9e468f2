#![allow(dead_code)]

pub mod endtoend;
pub mod gradcheck;
pub mod lossoracle;
pub mod statsoracle;
pub mod qoracle;

use hqcm::model::{ModelConfig, Variant};
use hqcm::qsim::QuantumLayerConfig;
use hqcm::Tensor;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut Pcg64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// H=8, channels [4,4,4], q=2, c=2, K=2.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        input_size: 8,
        num_classes: 2,
        conv_channels: [4, 4, 4],
        reduction_ratio: 2,
        quantum: QuantumLayerConfig {
            qubits: 2,
            depth: 2,
            circuits: 2,
        },
        variant,
    }
}

/// `|a − b| / max(|a|, |b|, 1e-8)`
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &Tensor<f64>, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + FD_STEP;
            let up = f(&probe);
            probe.data_mut()[i] = orig - FD_STEP;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `Σ w ⊙ y`, a generic scalar head for layer checks.
pub fn dot(w: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    assert_eq!(w.shape(), y.shape());
    w.data().iter().zip(y.data()).map(|(a, b)| a * b).sum()
}

pub fn generate(dir: &std::path::Path, n: usize, size: usize, seed: u64) {
    hqcm::data::generate_synthetic(dir, n, size, seed).unwrap();
}

pub fn binary_name() -> &'static str {
    env!("CARGO_BIN_EXE_hqcm")
}
