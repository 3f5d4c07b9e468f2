use serde::Serialize;

use crate::error::{Error, Result};

pub fn check_threshold(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("threshold {tau} must lie strictly between 0 and 1")))
    }
}

/// `attention ≥ τ · max(attention)`.
pub fn binarize(attention: &[f32], tau: f64) -> Vec<bool> {
    let max = attention.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let cut = tau * max;
    attention.iter().map(|&a| a as f64 >= cut).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JaccardScore {
    pub score: f64,
    /// Both sets were empty; the score is defined as 1.
    pub empty_union: bool,
}

pub fn jaccard_sets(a: &[bool], m: &[bool]) -> Result<JaccardScore> {
    if a.len() != m.len() {
        return Err(Error::shape("jaccard", format!("{} vs {} pixels", a.len(), m.len())));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(m) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 {
        JaccardScore {
            score: 1.0,
            empty_union: true,
        }
    } else {
        JaccardScore {
            score: inter as f64 / union as f64,
            empty_union: false,
        }
    })
}

/// Intersection over union of the relatively thresholded attention map and a
/// binary mask (`mask > 0.5`).
pub fn jaccard_at(attention: &[f32], mask: &[f32], tau: f64) -> Result<JaccardScore> {
    check_threshold(tau)?;
    if attention.len() != mask.len() {
        return Err(Error::shape("jaccard", format!("{} vs {} pixels", attention.len(), mask.len())));
    }
    let m: Vec<bool> = mask.iter().map(|&v| v > 0.5).collect();
    jaccard_sets(&binarize(attention, tau), &m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JaccardResult {
    pub threshold: f64,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub empty_unions: usize,
}

pub fn jaccard_many(attention: &[Vec<f32>], masks: &[Vec<f32>], tau: f64) -> Result<JaccardResult> {
    if attention.len() != masks.len() || attention.is_empty() {
        return Err(Error::InvalidArgument("need equally many (non-zero) attention maps and masks".into()));
    }
    let mut scores = Vec::with_capacity(attention.len());
    let mut empty_unions = 0;
    for (a, m) in attention.iter().zip(masks) {
        let s = jaccard_at(a, m, tau)?;
        empty_unions += s.empty_union as usize;
        scores.push(s.score);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(JaccardResult {
        threshold: tau,
        scores,
        mean,
        empty_unions,
    })
}
