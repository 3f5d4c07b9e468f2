//! AdamW with decoupled weight decay, global-norm clipping, a plateau
//! learning-rate scheduler and early stopping.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> impl Iterator<Item = &f64> {
        self.second.iter().flatten()
    }

    /// One update over parameters and gradients given in the same order.
    pub fn step<T: Real>(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "adamw",
                format!("{} parameters but {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            p.check_same_shape("adamw", g)?;
            if let Some(m) = self.first.get(i) {
                if m.len() != p.len() {
                    return Err(Error::shape("adamw", format!("parameter {i} changed size")));
                }
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len() {
            return Err(Error::shape("adamw", "parameter count changed between steps"));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = self.lr * self.weight_decay;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gv = gv.as_f64();
                let mut x = pv.as_f64();
                x -= decay * x;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gv;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gv * gv;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                *pv = T::from_f64_lossy(x);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut [&mut Tensor<T>], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v = T::from_f64_lossy(v.as_f64() * scale);
            }
        }
    }
    norm
}

/// Multiplies the learning rate by `factor` once the monitored value has
/// failed to improve by more than `threshold` for `patience` consecutive
/// steps; the counter restarts after every reduction.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    num_bad: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        PlateauScheduler {
            lr,
            factor,
            patience,
            threshold: 1e-4,
            best: f64::INFINITY,
            num_bad: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, value: f64) -> f64 {
        if value < self.best - self.threshold {
            self.best = value;
            self.num_bad = 0;
        } else {
            self.num_bad += 1;
            if self.num_bad >= self.patience {
                self.lr *= self.factor;
                self.num_bad = 0;
            }
        }
        self.lr
    }
}

#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    num_bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            threshold: 1e-4,
            best: f64::INFINITY,
            num_bad: 0,
        }
    }

    /// Records a validation value; returns whether it is a new best.
    pub fn update(&mut self, value: f64) -> bool {
        if value < self.best - self.threshold {
            self.best = value;
            self.num_bad = 0;
            true
        } else {
            self.num_bad += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.num_bad >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}
