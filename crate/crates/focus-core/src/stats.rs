//! Small deterministic statistics toolbox: percentiles, an exact paired
//! one-sided Wilcoxon signed-rank test, a seeded percentile bootstrap, and
//! Spearman rank correlation.
//!
//! Everything here is pure and fully reproducible: randomness enters only
//! through explicit seeds, ties are handled with midranks, and the Wilcoxon
//! test enumerates the exact null distribution rather than using a normal
//! approximation (sample sizes in this project are tiny).

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest number of nonzero differences the exact Wilcoxon enumeration
/// accepts (2^n sign vectors are enumerated).
const WILCOXON_MAX_N: usize = 25;

fn check_finite(values: &[f64], context: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{context}: non-finite value")));
    }
    Ok(())
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("mean of empty slice".into()));
    }
    check_finite(values, "mean")?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Percentile with linear interpolation between order statistics:
/// rank = p/100 * (n-1), value = lerp between the two bracketing samples.
pub fn percentile_linear(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("percentile of empty slice".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
    }
    check_finite(values, "percentile")?;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare totally"));
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

/// Midranks (1-based; ties share the average of their positions), doubled so
/// they stay exact integers. `[1.0, 2.5, 2.5, 4.0]` is returned as
/// `[2, 5, 5, 8]`.
fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite"));
    let mut ranks = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j+1 (1-based); doubled midrank = (i+1) + (j+1)
        let doubled = (i as u64 + 1) + (j as u64 + 1);
        for &idx in &order[i..=j] {
            ranks[idx] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Exact paired one-sided Wilcoxon signed-rank test for the alternative
/// "xs tends to be SMALLER than ys".
///
/// Differences d = x - y; zeros are dropped; |d| values get midranks; the
/// statistic is the rank sum over positive differences, and the p-value is
/// the exact probability, over all 2^n equally likely sign assignments, of a
/// rank sum at most as large as observed. No nonzero differences yields
/// p = 1.0 (a self-comparison is never significant).
pub fn wilcoxon_signed_rank_less(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            got: ys.len(),
            context: "wilcoxon paired samples".into(),
        });
    }
    check_finite(xs, "wilcoxon")?;
    check_finite(ys, "wilcoxon")?;
    let diffs: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(1.0);
    }
    if n > WILCOXON_MAX_N {
        return Err(Error::Config(format!(
            "exact wilcoxon supports at most {WILCOXON_MAX_N} nonzero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let observed: u64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let mut at_most = 0u64;
    for mask in 0u64..(1u64 << n) {
        let w: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if w <= observed {
            at_most += 1;
        }
    }
    Ok(at_most as f64 / (1u64 << n) as f64)
}

/// Percentile-bootstrap confidence interval for the mean: `b` resamples of
/// size n drawn with a ChaCha8 stream from `seed`, linear-interpolated
/// percentiles of the resampled means at `alpha/2` and `1 - alpha/2`.
pub fn bootstrap_mean_ci(values: &[f64], b: usize, alpha: f64, seed: u64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Data("bootstrap of empty slice".into()));
    }
    if b == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config("bootstrap alpha must lie in (0, 1)".into()));
    }
    check_finite(values, "bootstrap")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means = Vec::with_capacity(b);
    for _ in 0..b {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.gen_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    Ok((
        percentile_linear(&means, 100.0 * alpha / 2.0)?,
        percentile_linear(&means, 100.0 * (1.0 - alpha / 2.0))?,
    ))
}

/// Spearman rank correlation (Pearson correlation of midranks).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            got: ys.len(),
            context: "spearman samples".into(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Data("spearman needs at least two pairs".into()));
    }
    check_finite(xs, "spearman")?;
    check_finite(ys, "spearman")?;
    let rx: Vec<f64> = doubled_midranks(xs).iter().map(|&r| r as f64).collect();
    let ry: Vec<f64> = doubled_midranks(ys).iter().map(|&r| r as f64).collect();
    let mx = mean(&rx)?;
    let my = mean(&ry)?;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Numeric("spearman undefined for constant input".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}
