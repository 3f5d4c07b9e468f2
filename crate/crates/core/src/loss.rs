//! Weighted cross-entropy plus the BCE/Dice attention-consistency terms.
//!
//! Losses are accumulated in `f64` whatever the tensor element type.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Values below / above this are clamped before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Classification term.
    pub alpha: f64,
    /// Attention term.
    pub beta: f64,
    /// BCE share of the attention term.
    pub zeta: f64,
    /// Dice share of the attention term.
    pub gamma: f64,
    pub dice_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            zeta: 0.3,
            gamma: 0.7,
            dice_eps: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.zeta, self.gamma];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        if !(self.dice_eps.is_finite() && self.dice_eps > 0.0) {
            return Err(Error::Config("dice epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Softmax cross-entropy weighted per class, averaged over the batch.
/// Returns the loss and `∂L/∂logits`.
pub fn cross_entropy<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Tensor<T>)> {
    let (b, k) = logits.dims2("cross_entropy")?;
    if labels.len() != b {
        return Err(Error::shape("cross_entropy", format!("{} labels for batch of {b}", labels.len())));
    }
    if class_weights.len() != k {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} class weights for {k} classes", class_weights.len()),
        ));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    let inv_b = 1.0 / b as f64;
    for (n, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::InvalidArgument(format!("label {label} out of range for {k} classes")));
        }
        let row: Vec<f64> = logits.batch_item(n).iter().map(|v| v.as_f64()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        let w = class_weights[label];
        total += w * (log_z - row[label]);
        let g = grad.batch_item_mut(n);
        for (j, (&v, dst)) in row.iter().zip(g.iter_mut()).enumerate() {
            let p = (v - log_z).exp();
            let onehot = if j == label { 1.0 } else { 0.0 };
            *dst = T::from_f64_lossy(w * (p - onehot) * inv_b);
        }
    }
    Ok((total * inv_b, grad))
}

fn check_attention<T: Real>(op: &'static str, a: &Tensor<T>, t: &Tensor<T>) -> Result<usize> {
    a.check_same_shape(op, t)?;
    if a.rank() == 0 || a.shape()[0] == 0 {
        return Err(Error::shape(op, "empty attention tensor"));
    }
    Ok(a.shape()[0])
}

/// Pixel-wise binary cross-entropy averaged over every element.
pub fn bce_attention<T: Real>(a: &Tensor<T>, t: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    check_attention("bce_attention", a, t)?;
    let n = a.len() as f64;
    let mut grad = Tensor::zeros(a.shape());
    let mut total = 0.0;
    for ((&av, &tv), g) in a.data().iter().zip(t.data()).zip(grad.data_mut()) {
        let raw = av.as_f64();
        let p = raw.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let y = tv.as_f64();
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        // clamp has zero derivative outside its range
        if raw == p {
            *g = T::from_f64_lossy((-y / p + (1.0 - y) / (1.0 - p)) / n);
        }
    }
    Ok((total / n, grad))
}

/// Soft Dice loss computed per sample, then averaged over the batch.
pub fn dice_loss<T: Real>(a: &Tensor<T>, t: &Tensor<T>, eps: f64) -> Result<(f64, Tensor<T>)> {
    let b = check_attention("dice_loss", a, t)?;
    let mut grad = Tensor::zeros(a.shape());
    let mut total = 0.0;
    let inv_b = 1.0 / b as f64;
    for n in 0..b {
        let (av, tv) = (a.batch_item(n), t.batch_item(n));
        let mut inter = 0.0;
        let mut sum = 0.0;
        for (&x, &y) in av.iter().zip(tv) {
            let (x, y) = (x.as_f64(), y.as_f64());
            inter += x * y;
            sum += x + y;
        }
        let num = 2.0 * inter + eps;
        let den = sum + eps;
        total += 1.0 - num / den;
        for (g, &y) in grad.batch_item_mut(n).iter_mut().zip(tv) {
            let y = y.as_f64();
            *g = T::from_f64_lossy(-(2.0 * y * den - num) / (den * den) * inv_b);
        }
    }
    Ok((total * inv_b, grad))
}

#[derive(Clone, Debug)]
pub struct LossBreakdown<T: Real = f32> {
    pub total: f64,
    pub classification: f64,
    pub bce: f64,
    pub dice: f64,
    pub grad_logits: Tensor<T>,
    pub grad_attention: Tensor<T>,
}

/// `α·CE + β·(ζ·BCE + γ·Dice)` with matching gradients.
pub fn total_loss<T: Real>(
    logits: &Tensor<T>,
    labels: &[usize],
    class_weights: &[f64],
    attention: &Tensor<T>,
    masks: &Tensor<T>,
    weights: &LossWeights,
) -> Result<LossBreakdown<T>> {
    weights.validate()?;
    let (ce, mut grad_logits) = cross_entropy(logits, labels, class_weights)?;
    let (bce, g_bce) = bce_attention(attention, masks)?;
    let (dice, g_dice) = dice_loss(attention, masks, weights.dice_eps)?;
    if attention.shape()[0] != labels.len() {
        return Err(Error::shape("total_loss", "attention batch differs from label batch"));
    }
    let a_bce = weights.beta * weights.zeta;
    let a_dice = weights.beta * weights.gamma;
    grad_logits = grad_logits.map(|g| T::from_f64_lossy(weights.alpha * g.as_f64()));
    let mut grad_attention = Tensor::zeros(attention.shape());
    for ((dst, &x), &y) in grad_attention.data_mut().iter_mut().zip(g_bce.data()).zip(g_dice.data()) {
        *dst = T::from_f64_lossy(a_bce * x.as_f64() + a_dice * y.as_f64());
    }
    Ok(LossBreakdown {
        total: weights.alpha * ce + a_bce * bce + a_dice * dice,
        classification: ce,
        bce,
        dice,
        grad_logits,
        grad_attention,
    })
}

/// Inverse-frequency weights over `labels`, normalised to mean 1.
/// Classes absent from `labels` get weight 0 before normalisation.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::Data("cannot derive class weights from an empty split".into()));
    }
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(Error::InvalidArgument(format!("label {l} out of range for {num_classes} classes")));
        }
        counts[l] += 1;
    }
    let raw: Vec<f64> = counts.iter().map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect();
    let mean = raw.iter().sum::<f64>() / num_classes as f64;
    Ok(raw.iter().map(|w| w / mean).collect())
}
