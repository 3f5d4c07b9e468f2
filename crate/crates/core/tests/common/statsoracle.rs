//! Brute-force references for the evaluation statistics.

use hqcm::eval::{confusion_and_report, wilcoxon_signed_rank};
use rand::Rng;

use super::rng;

/// Average ranks by counting smaller and equal magnitudes.
fn ranks(abs: &[f64]) -> Vec<f64> {
    abs.iter()
        .map(|&x| {
            let below = abs.iter().filter(|&&y| y < x).count() as f64;
            let equal = abs.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Two-sided exact p-value by enumerating all `2^n` sign patterns.
pub fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return 1.0;
    }
    let r = ranks(&d.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let observed: f64 = r.iter().zip(&d).filter(|(_, x)| **x > 0.0).map(|(r, _)| r).sum();
    let n = d.len();
    let (mut lo, mut hi) = (0u64, 0u64);
    for mask in 0u64..1 << n {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| r[i]).sum();
        lo += (w <= observed) as u64;
        hi += (w >= observed) as u64;
    }
    let total = (1u64 << n) as f64;
    (2.0 * (lo as f64 / total).min(hi as f64 / total)).min(1.0)
}

/// Instances with `n ≤ 10`, integer-valued scores so ties and zeros occur.
/// Returns how many p-values differed from enumeration.
pub fn wilcoxon_enumeration_mismatches(instances: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    (0..instances)
        .filter(|_| {
            let n = r.random_range(1..=10usize);
            let a: Vec<f64> = (0..n).map(|_| r.random_range(0..8) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| r.random_range(0..8) as f64).collect();
            wilcoxon_signed_rank(&a, &b).unwrap().p_value != enumerate_p(&a, &b)
        })
        .count()
}

/// Worst gap between the normal approximation used at `n = 25` and the exact
/// null distribution of `W+` over ranks `1..=25`.
pub fn normal_vs_exact_n25(instances: usize, seed: u64) -> f64 {
    let n = 25usize;
    let max = n * (n + 1) / 2;
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    for k in 1..=n {
        for s in (k..=max).rev() {
            counts[s] += counts[s - k];
        }
    }
    let total = 2f64.powi(n as i32);
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let a: Vec<f64> = (1..=n).map(|i| i as f64 * if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let res = wilcoxon_signed_rank(&a, &vec![0.0; n]).unwrap();
        let w = res.w_plus as usize;
        let lo: f64 = counts[..=w].iter().sum::<f64>() / total;
        let hi: f64 = counts[w..].iter().sum::<f64>() / total;
        let exact = (2.0 * lo.min(hi)).min(1.0);
        worst = worst.max((exact - res.p_value).abs());
    }
    worst
}

/// Worst metric gap against per-class counting over random predictions.
pub fn confusion_oracle_error(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = r.random_range(2..=5usize);
        let n = r.random_range(1..=60usize);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let preds: Vec<usize> = labels
            .iter()
            .map(|&l| if r.random_bool(0.6) { l } else { r.random_range(0..k) })
            .collect();
        let names: Vec<String> = (0..k).map(|c| format!("c{c}")).collect();
        let rep = confusion_and_report(&preds, &labels, &names).unwrap();
        let pairs = || preds.iter().zip(&labels);
        let mut gaps = Vec::new();
        let correct = pairs().filter(|(p, l)| p == l).count();
        gaps.push(rep.overall_accuracy - correct as f64 / n as f64);
        let (mut mp, mut mr, mut mf, mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for c in 0..k {
            let tp = pairs().filter(|&(&p, &l)| p == c && l == c).count() as f64;
            let fp = pairs().filter(|&(&p, &l)| p == c && l != c).count() as f64;
            let fnn = pairs().filter(|&(&p, &l)| p != c && l == c).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rc = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
            let f = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fnn) } else { 0.0 };
            let m = &rep.per_class[c];
            gaps.extend([m.precision - p, m.recall - rc, m.f1 - f, m.support as f64 - (tp + fnn)]);
            for (col, &cnt) in rep.confusion_matrix[c].iter().enumerate() {
                let expect = pairs().filter(|&(&p, &l)| l == c && p == col).count();
                gaps.push(cnt as f64 - expect as f64);
            }
            let s = tp + fnn;
            mp += p;
            mr += rc;
            mf += f;
            wp += p * s;
            wr += rc * s;
            wf += f * s;
        }
        let (kf, nf) = (k as f64, n as f64);
        gaps.extend([
            rep.macro_avg.precision - mp / kf,
            rep.macro_avg.recall - mr / kf,
            rep.macro_avg.f1 - mf / kf,
            rep.weighted_avg.precision - wp / nf,
            rep.weighted_avg.recall - wr / nf,
            rep.weighted_avg.f1 - wf / nf,
        ]);
        worst = gaps.iter().fold(worst, |w, g| w.max(g.abs()));
    }
    worst
}
