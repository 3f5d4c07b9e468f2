use rand::Rng;

use crate::tensor::{Real, Tensor};

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, the usual framework default for
/// linear and convolution weights and biases.
pub fn fan_in_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| T::from_f64_lossy(rng.random_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
