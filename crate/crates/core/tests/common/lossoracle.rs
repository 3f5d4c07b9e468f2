//! Loss values from their textbook definitions, written without sharing code
//! with the library.

use hqcm::loss::{bce_attention, cross_entropy, dice_loss};
use hqcm::Tensor;
use rand::Rng;

use super::rng;

pub fn ce_oracle(logits: &[Vec<f64>], labels: &[usize], w: &[f64]) -> f64 {
    let b = logits.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(row, &y)| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            -w[y] * (row[y].exp() / z).ln()
        })
        .sum::<f64>()
        / b
}

pub fn bce_oracle(a: &[f64], t: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter()
        .zip(t)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum::<f64>()
        / n
}

pub fn dice_oracle(a: &[Vec<f64>], t: &[Vec<f64>], eps: f64) -> f64 {
    let b = a.len() as f64;
    a.iter()
        .zip(t)
        .map(|(x, y)| {
            let inter: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            let total: f64 = x.iter().sum::<f64>() + y.iter().sum::<f64>();
            1.0 - (2.0 * inter + eps) / (total + eps)
        })
        .sum::<f64>()
        / b
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LossErrors {
    pub ce: f64,
    pub bce: f64,
    pub dice: f64,
    pub uniform_ce: f64,
    /// Largest Dice loss seen for a binary map scored against itself.
    pub dice_self: f64,
}

fn flat(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

pub fn loss_suite(instances: usize, seed: u64) -> LossErrors {
    let mut r = rng(seed);
    let mut e = LossErrors::default();
    for _ in 0..instances {
        let b = r.random_range(1..=6usize);
        let k = r.random_range(2..=5usize);
        let logits: Vec<Vec<f64>> = (0..b).map(|_| (0..k).map(|_| r.random_range(-4.0..4.0)).collect()).collect();
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
        let w: Vec<f64> = (0..k).map(|_| r.random_range(0.2..2.0)).collect();
        let lt = Tensor::from_vec(&[b, k], flat(&logits)).unwrap();
        let (ce, _) = cross_entropy(&lt, &labels, &w).unwrap();
        e.ce = e.ce.max((ce - ce_oracle(&logits, &labels, &w)).abs());

        let ones = vec![1.0; k];
        let uniform = Tensor::from_vec(&[b, k], vec![r.random_range(-3.0..3.0); b * k]).unwrap();
        let (u, _) = cross_entropy(&uniform, &labels, &ones).unwrap();
        e.uniform_ce = e.uniform_ce.max((u - (k as f64).ln()).abs());

        let hw = r.random_range(1..=5usize).pow(2);
        let a: Vec<Vec<f64>> = (0..b).map(|_| (0..hw).map(|_| r.random_range(0.01..0.99)).collect()).collect();
        let t: Vec<Vec<f64>> = (0..b).map(|_| (0..hw).map(|_| r.random_bool(0.4) as u8 as f64).collect()).collect();
        let at = Tensor::from_vec(&[b, 1, hw, 1], flat(&a)).unwrap();
        let tt = Tensor::from_vec(&[b, 1, hw, 1], flat(&t)).unwrap();
        let (bce, _) = bce_attention(&at, &tt).unwrap();
        e.bce = e.bce.max((bce - bce_oracle(&flat(&a), &flat(&t))).abs());
        let eps = r.random_range(1e-3..2.0);
        let (dice, _) = dice_loss(&at, &tt, eps).unwrap();
        e.dice = e.dice.max((dice - dice_oracle(&a, &t, eps)).abs());
        let (same, _) = dice_loss(&tt, &tt, eps).unwrap();
        e.dice_self = e.dice_self.max(same.abs());
    }
    e
}
