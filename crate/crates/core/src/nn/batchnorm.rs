use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalisation over `[B, C, H, W]`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T: Real = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T: Real = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Real> BatchNormGrads<T> {
    pub fn zeros_like(layer: &BatchNorm2d<T>) -> Self {
        BatchNormGrads {
            gamma: Tensor::zeros(layer.gamma.shape()),
            beta: Tensor::zeros(layer.beta.shape()),
        }
    }
}

/// What the train-mode backward pass needs.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T: Real = f32> {
    x_hat: Tensor<T>,
    inv_std: Vec<f64>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let (b, c, h, w) = input.dims4("batchnorm")?;
        if c != self.channels() {
            return Err(Error::shape(
                "batchnorm",
                format!("input channels {c} != layer channels {}", self.channels()),
            ));
        }
        Ok((b, c, h * w))
    }

    /// Train mode: normalises with batch statistics and updates running stats.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let (b, c, hw) = self.check(input)?;
        if b < 2 {
            return Err(Error::InvalidArgument(
                "batchnorm in train mode needs a batch of at least 2".into(),
            ));
        }
        let count = (b * hw) as f64;
        let x = input.data();
        let mut out = Tensor::zeros(input.shape());
        let mut x_hat = Tensor::zeros(input.shape());
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let mut sum = 0.0;
            for n in 0..b {
                let base = (n * c + ch) * hw;
                sum += x[base..base + hw].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mean = sum / count;
            let mut sq = 0.0;
            for n in 0..b {
                let base = (n * c + ch) * hw;
                sq += x[base..base + hw]
                    .iter()
                    .map(|v| (v.as_f64() - mean).powi(2))
                    .sum::<f64>();
            }
            let var = sq / count;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let (g, be) = (self.gamma.data()[ch].as_f64(), self.beta.data()[ch].as_f64());
            for n in 0..b {
                let base = (n * c + ch) * hw;
                for i in base..base + hw {
                    let xh = (x[i].as_f64() - mean) * istd;
                    x_hat.data_mut()[i] = T::from_f64_lossy(xh);
                    out.data_mut()[i] = T::from_f64_lossy(xh * g + be);
                }
            }
            let m = self.momentum;
            let unbiased = var * count / (count - 1.0);
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = T::from_f64_lossy((1.0 - m) * rm.as_f64() + m * mean);
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = T::from_f64_lossy((1.0 - m) * rv.as_f64() + m * unbiased);
        }
        Ok((out, BatchNormCache { x_hat, inv_std }))
    }

    /// Eval mode: uses running statistics only.
    pub fn forward_eval(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, c, hw) = self.check(input)?;
        let mut out = Tensor::zeros(input.shape());
        for ch in 0..c {
            let istd = 1.0 / (self.running_var.data()[ch].as_f64() + self.eps).sqrt();
            let scale = self.gamma.data()[ch].as_f64() * istd;
            let shift = self.beta.data()[ch].as_f64() - self.running_mean.data()[ch].as_f64() * scale;
            for n in 0..b {
                let base = (n * c + ch) * hw;
                for i in base..base + hw {
                    out.data_mut()[i] = T::from_f64_lossy(input.data()[i].as_f64() * scale + shift);
                }
            }
        }
        Ok(out)
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut BatchNormGrads<T>,
    ) -> Result<Tensor<T>> {
        cache.x_hat.check_same_shape("batchnorm backward", grad_out)?;
        let (b, c, hw) = self.check(grad_out)?;
        let count = (b * hw) as f64;
        let dy = grad_out.data();
        let xh = cache.x_hat.data();
        let mut dx = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xh = 0.0;
            for n in 0..b {
                let base = (n * c + ch) * hw;
                for i in base..base + hw {
                    let d = dy[i].as_f64();
                    sum_dy += d;
                    sum_dy_xh += d * xh[i].as_f64();
                }
            }
            grads.beta.data_mut()[ch] += T::from_f64_lossy(sum_dy);
            grads.gamma.data_mut()[ch] += T::from_f64_lossy(sum_dy_xh);
            let g = self.gamma.data()[ch].as_f64();
            let k = g * cache.inv_std[ch] / count;
            for n in 0..b {
                let base = (n * c + ch) * hw;
                for i in base..base + hw {
                    let v = k * (count * dy[i].as_f64() - sum_dy - xh[i].as_f64() * sum_dy_xh);
                    dx.data_mut()[i] = T::from_f64_lossy(v);
                }
            }
        }
        Ok(dx)
    }

    /// Backward through the eval-mode affine map (running statistics are constants).
    pub fn backward_eval(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut BatchNormGrads<T>,
    ) -> Result<Tensor<T>> {
        input.check_same_shape("batchnorm backward", grad_out)?;
        let (b, c, hw) = self.check(input)?;
        let mut dx = Tensor::zeros(input.shape());
        for ch in 0..c {
            let istd = 1.0 / (self.running_var.data()[ch].as_f64() + self.eps).sqrt();
            let mean = self.running_mean.data()[ch].as_f64();
            let g = self.gamma.data()[ch].as_f64();
            let (mut sum_dy, mut sum_dy_xh) = (0.0, 0.0);
            for n in 0..b {
                let base = (n * c + ch) * hw;
                for i in base..base + hw {
                    let dy = grad_out.data()[i].as_f64();
                    sum_dy += dy;
                    sum_dy_xh += dy * (input.data()[i].as_f64() - mean) * istd;
                    dx.data_mut()[i] = T::from_f64_lossy(dy * g * istd);
                }
            }
            grads.beta.data_mut()[ch] += T::from_f64_lossy(sum_dy);
            grads.gamma.data_mut()[ch] += T::from_f64_lossy(sum_dy_xh);
        }
        Ok(dx)
    }
}
