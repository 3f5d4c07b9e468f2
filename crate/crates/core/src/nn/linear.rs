use rand::Rng;

use super::init::fan_in_uniform;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor};

/// Fully connected layer `y = x·Wᵀ + b`.
#[derive(Clone, Debug)]
pub struct Linear<T: Real = f32> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T: Real = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LinearGrads<T> {
    pub fn zeros_like(layer: &Linear<T>) -> Self {
        LinearGrads {
            weight: Tensor::zeros(layer.weight.shape()),
            bias: Tensor::zeros(layer.bias.shape()),
        }
    }
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Linear {
            weight: fan_in_uniform(&[outputs, inputs], inputs, rng),
            bias: fan_in_uniform(&[outputs], inputs, rng),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, input: &Tensor<T>) -> Result<usize> {
        let (b, width) = input.dims2("linear")?;
        if width != self.inputs() {
            return Err(Error::shape(
                "linear",
                format!("input width {width} != layer inputs {}", self.inputs()),
            ));
        }
        Ok(b)
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check(input)?;
        let out_w = self.outputs();
        let mut out = Tensor::zeros(&[b, out_w]);
        for row in out.data_mut().chunks_mut(out_w) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            false,
            true,
            b,
            out_w,
            self.inputs(),
            input.data(),
            self.weight.data(),
            T::one(),
            out.data_mut(),
        );
        Ok(out)
    }

    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut LinearGrads<T>,
    ) -> Result<Tensor<T>> {
        let b = self.check(input)?;
        let (out_w, in_w) = (self.outputs(), self.inputs());
        if grad_out.shape() != [b, out_w] {
            return Err(Error::shape(
                "linear backward",
                format!("grad_out {:?} != [{b}, {out_w}]", grad_out.shape()),
            ));
        }
        for row in grad_out.data().chunks(out_w) {
            for (db, &g) in grads.bias.data_mut().iter_mut().zip(row) {
                *db += g;
            }
        }
        gemm(true, false, out_w, in_w, b, grad_out.data(), input.data(), T::one(), grads.weight.data_mut());
        let mut dx = Tensor::zeros(&[b, in_w]);
        gemm(false, false, b, in_w, out_w, grad_out.data(), self.weight.data(), T::zero(), dx.data_mut());
        Ok(dx)
    }
}
