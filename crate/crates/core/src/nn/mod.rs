//! Differentiable classical layers with explicit forward and backward passes.
//!
//! Layers own their parameters only. Forward passes return whatever the
//! backward pass needs (the input, a cache struct, or argmax indices) and
//! backward passes accumulate parameter gradients into a caller-owned grads
//! struct, so the same layer can be evaluated concurrently in eval mode.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod init;
pub mod linear;
pub mod pool;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, tanh, tanh_backward};
pub use batchnorm::{BatchNorm2d, BatchNormCache, BatchNormGrads, Mode};
pub use conv::{Conv2d, Conv2dGrads};
pub use linear::{Linear, LinearGrads};
pub use pool::{global_avg_pool, global_avg_pool_backward, maxpool2, maxpool2_backward, PoolIndices};

use crate::tensor::{Real, Tensor};

/// Enumerates trainable tensors under dotted names.
///
/// Gradient structs implement this with the same names as their layer, so
/// parameter and gradient lists can be zipped by position.
pub trait Params<T: Real> {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>);
}

macro_rules! impl_params {
    ($ty:ident, $($field:ident),+) => {
        impl<T: Real> Params<T> for $ty<T> {
            fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
                $(out.push((format!(concat!("{}.", stringify!($field)), prefix), &self.$field));)+
            }
            fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
                $(out.push((format!(concat!("{}.", stringify!($field)), prefix), &mut self.$field));)+
            }
        }
    };
}

impl_params!(Conv2d, weight, bias);
impl_params!(Conv2dGrads, weight, bias);
impl_params!(Linear, weight, bias);
impl_params!(LinearGrads, weight, bias);
impl_params!(BatchNorm2d, gamma, beta);
impl_params!(BatchNormGrads, gamma, beta);
