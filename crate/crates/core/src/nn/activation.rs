use crate::error::Result;
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient is gated by `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_same_shape("relu backward", grad)?;
    let mut out = grad.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(out)
}

/// Logistic function, clamped so the result stays strictly inside (0, 1)
/// even when it saturates in the working precision.
pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    let two = T::one() + T::one();
    // split on sign so exp never overflows
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    s.max(T::min_positive_value()).min(T::one() - T::epsilon() / two)
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Backward from the sigmoid *output* `y`: `grad · y(1−y)`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    y.check_same_shape("sigmoid backward", grad)?;
    let mut out = grad.clone();
    for (g, &s) in out.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (T::one() - s);
    }
    Ok(out)
}

pub fn tanh<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

/// Backward from the tanh *output* `y`: `grad · (1 − y²)`.
pub fn tanh_backward<T: Real>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    y.check_same_shape("tanh backward", grad)?;
    let mut out = grad.clone();
    for (g, &t) in out.data_mut().iter_mut().zip(y.data()) {
        *g *= T::one() - t * t;
    }
    Ok(out)
}
