//! 2-D cross-correlation (no kernel flip) via im2col + GEMM.

use rand::Rng;

use super::init::fan_in_uniform;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor};

#[derive(Clone, Debug)]
pub struct Conv2d<T: Real = f32> {
    /// `[out_ch, in_ch, k, k]`
    pub weight: Tensor<T>,
    /// `[out_ch]`
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T: Real = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv2dGrads<T> {
    pub fn zeros_like(layer: &Conv2d<T>) -> Self {
        Conv2dGrads {
            weight: Tensor::zeros(layer.weight.shape()),
            bias: Tensor::zeros(layer.bias.shape()),
        }
    }
}

struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }
    fn col_cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<T: Real>(x: &[T], g: &Geometry, col: &mut [T]) {
    let cols = g.col_cols();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    let out_row = &mut dst[oi * g.wo..(oi + 1) * g.wo];
                    if ii < 0 || ii >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for (oj, v) in out_row.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *v = if jj < 0 || jj >= g.w as isize {
                            T::zero()
                        } else {
                            src[jj as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], g: &Geometry, dx: &mut [T]) {
    let cols = g.col_cols();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oi in 0..g.ho {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.w..(ii as usize + 1) * g.w];
                    for oj in 0..g.wo {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.w as isize {
                            dst[jj as usize] += src[oi * g.wo + oj];
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> Conv2d<T> {
    /// Weights and bias drawn from `U(±1/sqrt(in·k·k))`.
    pub fn new<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_ch, out_ch, kernel, stride, padding)?;
        let fan_in = in_ch * kernel * kernel;
        layer.weight = fan_in_uniform(&[out_ch, in_ch, kernel, kernel], fan_in, rng);
        layer.bias = fan_in_uniform(&[out_ch], fan_in, rng);
        Ok(layer)
    }

    pub fn zeros(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("conv kernel must be odd, got {kernel}")));
        }
        if stride == 0 || in_ch == 0 || out_ch == 0 {
            return Err(Error::Config(
                "conv stride and channel counts must be positive".into(),
            ));
        }
        Ok(Conv2d {
            weight: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < k {
            return Err(Error::shape(
                "conv2d",
                format!("height {h} with padding {} is smaller than kernel {k}", self.padding),
            ));
        }
        if wp < k {
            return Err(Error::shape(
                "conv2d",
                format!("width {w} with padding {} is smaller than kernel {k}", self.padding),
            ));
        }
        Ok(((hp - k) / self.stride + 1, (wp - k) / self.stride + 1))
    }

    fn geometry(&self, input: &Tensor<T>) -> Result<(usize, Geometry)> {
        let (b, c, h, w) = input.dims4("conv2d")?;
        if c != self.in_channels() {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input channels {c} != layer in_channels {}",
                    self.in_channels()
                ),
            ));
        }
        let (ho, wo) = self.output_size(h, w)?;
        Ok((
            b,
            Geometry {
                cin: c,
                h,
                w,
                k: self.kernel(),
                stride: self.stride,
                pad: self.padding,
                ho,
                wo,
            },
        ))
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, g) = self.geometry(input)?;
        let cout = self.out_channels();
        let (rows, cols) = (g.col_rows(), g.col_cols());
        let mut out = Tensor::zeros(&[b, cout, g.ho, g.wo]);
        let mut col = vec![T::zero(); rows * cols];
        for n in 0..b {
            let y = out.batch_item_mut(n);
            for (o, chunk) in y.chunks_mut(cols).enumerate() {
                chunk.fill(self.bias.data()[o]);
            }
            im2col(input.batch_item(n), &g, &mut col);
            gemm(false, false, cout, cols, rows, self.weight.data(), &col, T::one(), y);
        }
        Ok(out)
    }

    /// Accumulates weight/bias gradients into `grads` and returns the input gradient.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut Conv2dGrads<T>,
    ) -> Result<Tensor<T>> {
        let (b, g) = self.geometry(input)?;
        let cout = self.out_channels();
        let expected = [b, cout, g.ho, g.wo];
        if grad_out.shape() != expected {
            return Err(Error::shape(
                "conv2d backward",
                format!("grad_out {:?} != {:?}", grad_out.shape(), expected),
            ));
        }
        let (rows, cols) = (g.col_rows(), g.col_cols());
        let mut col = vec![T::zero(); rows * cols];
        let mut dcol = vec![T::zero(); rows * cols];
        let mut dx = Tensor::zeros(input.shape());
        for n in 0..b {
            let gy = grad_out.batch_item(n);
            for (o, chunk) in gy.chunks(cols).enumerate() {
                let s: T = chunk.iter().copied().sum();
                grads.bias.data_mut()[o] += s;
            }
            im2col(input.batch_item(n), &g, &mut col);
            // dW += gy · colᵀ
            gemm(false, true, cout, rows, cols, gy, &col, T::one(), grads.weight.data_mut());
            // dcol = Wᵀ · gy
            gemm(true, false, rows, cols, cout, self.weight.data(), gy, T::zero(), &mut dcol);
            col2im(&dcol, &g, dx.batch_item_mut(n));
        }
        Ok(dx)
    }
}
