//! Nonparametric tests: Mann-Whitney U, Wilcoxon signed-rank, Fisher's
//! exact test and Spearman rank correlation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::factorial::ln_factorial;

use crate::error::StatsError;

/// Combined sample size up to which Mann-Whitney is enumerated exactly.
pub const MANN_WHITNEY_EXACT_LIMIT: usize = 12;
/// Nonzero differences up to which Wilcoxon is computed exactly.
pub const WILCOXON_EXACT_LIMIT: usize = 20;
/// Largest n for exhaustive Spearman permutation p-values.
pub const SPEARMAN_EXACT_LIMIT: usize = 10;

/// Relative slack when comparing a statistic against the observed one, so
/// that ties in floating point are counted as "at least as extreme".
const EXTREME_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// True when the p-value was enumerated rather than approximated.
    pub exact: bool,
}

/// Midranks (1-based, ties averaged) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of tie groups among `values`.
fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        groups.push(j - i + 1);
        i = j + 1;
    }
    groups
}

fn normal_two_sided(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * (1.0 - n.cdf(z.abs()))).min(1.0)
}

/// Two-sided Mann-Whitney U test. `statistic` is U for `x`.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let combined: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&combined);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;

    if n <= MANN_WHITNEY_EXACT_LIMIT {
        // Every way of drawing the x-group's ranks from the pooled midranks.
        let observed = (u - mean).abs();
        let (mut extreme, mut total) = (0u64, 0u64);
        let mut chosen = Vec::with_capacity(n1);
        fn walk(ranks: &[f64], start: usize, need: usize, chosen: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])) {
            if need == 0 {
                visit(chosen);
                return;
            }
            for i in start..=ranks.len() - need {
                chosen.push(ranks[i]);
                walk(ranks, i + 1, need - 1, chosen, visit);
                chosen.pop();
            }
        }
        let offset = (n1 * (n1 + 1)) as f64 / 2.0;
        walk(&ranks, 0, n1, &mut chosen, &mut |group| {
            let u_perm = group.iter().sum::<f64>() - offset;
            total += 1;
            if (u_perm - mean).abs() >= observed - EXTREME_SLACK * (1.0 + observed) {
                extreme += 1;
            }
        });
        return Ok(TestResult { statistic: u, p_value: extreme as f64 / total as f64, exact: true });
    }

    let tie_term: f64 = tie_groups(&combined).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(TestResult { statistic: u, p_value: 1.0, exact: false });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestResult { statistic: u, p_value: normal_two_sided(z), exact: false })
}

/// Two-sided Wilcoxon signed-rank test on paired samples `(a, b)`, using
/// `a - b`. Zero differences are dropped. `statistic` is `min(W+, W-)`.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<TestResult, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let w = w_plus.min(w_minus);

    if n <= WILCOXON_EXACT_LIMIT {
        // Midranks are multiples of 1/2, so doubled ranks are integers.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let max: usize = doubled.iter().sum();
        let mut counts = vec![0u64; max + 1];
        counts[0] = 1;
        for &r in &doubled {
            for s in (r..=max).rev() {
                counts[s] += counts[s - r];
            }
        }
        let w2 = (2.0 * w).round() as usize;
        let extreme: u64 = counts.iter().enumerate().filter(|(s, _)| *s <= w2 || *s >= max - w2).map(|(_, c)| *c).sum();
        let p = (extreme as f64 / 2f64.powi(n as i32)).min(1.0);
        return Ok(TestResult { statistic: w, p_value: p, exact: true });
    }

    let nf = n as f64;
    let tie_term: f64 = tie_groups(&abs).iter().map(|&t| (t * t * t - t) as f64).sum();
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let mean = total / 2.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(TestResult { statistic: w, p_value: normal_two_sided(z), exact: false })
}

fn ln_hypergeometric(a: u64, row1: u64, row2: u64, col1: u64, n: u64) -> f64 {
    let b = row1 - a;
    let c = col1 - a;
    let d = row2 - c;
    ln_factorial(row1) + ln_factorial(row2) + ln_factorial(col1) + ln_factorial(n - col1)
        - ln_factorial(n)
        - ln_factorial(a)
        - ln_factorial(b)
        - ln_factorial(c)
        - ln_factorial(d)
}

/// Two-sided Fisher's exact test on `[[a, b], [c, d]]`: the total
/// probability of tables with the observed margins that are no more likely
/// than the observed one.
pub fn fisher_exact(table: [[u64; 2]; 2]) -> Result<f64, StatsError> {
    let [[a, b], [c, d]] = table;
    let n = a + b + c + d;
    if n == 0 {
        return Err(StatsError::ZeroMargin);
    }
    let (row1, row2, col1) = (a + b, c + d, a + c);
    let lo = col1.saturating_sub(row2);
    let hi = row1.min(col1);
    let observed = ln_hypergeometric(a, row1, row2, col1, n);
    let threshold = observed + 1e-7;
    let p: f64 =
        (lo..=hi).map(|x| ln_hypergeometric(x, row1, row2, col1, n)).filter(|&lp| lp <= threshold).map(f64::exp).sum();
    Ok(p.min(1.0))
}

/// Pearson correlation of two equally long samples.
fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn spearman_inputs(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { needed: 3, got: x.len() });
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let rho = pearson(&rx, &ry).ok_or(StatsError::ConstantInput)?;
    Ok((rx, ry, rho))
}

/// Spearman's rho (Pearson correlation of midranks) with a two-sided
/// t-approximation p-value on `n - 2` degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    let (_, _, rho) = spearman_inputs(x, y)?;
    let df = (x.len() - 2) as f64;
    if rho.abs() >= 1.0 {
        return Ok(TestResult { statistic: rho, p_value: 0.0, exact: false });
    }
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0);
    Ok(TestResult { statistic: rho, p_value: p, exact: false })
}

/// Spearman's rho with a two-sided p-value from all `n!` pairings of the
/// ranks. Limited to `n <= 10`.
pub fn spearman_exact(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    let (rx, ry, rho) = spearman_inputs(x, y)?;
    let n = x.len();
    if n > SPEARMAN_EXACT_LIMIT {
        return Err(StatsError::TooLarge { n, limit: SPEARMAN_EXACT_LIMIT });
    }
    let observed = rho.abs();
    let mut perm = ry.clone();
    let (mut extreme, mut total) = (0u64, 0u64);
    // Heap's algorithm over the y ranks.
    let mut c = vec![0usize; n];
    let mut check = |perm: &[f64]| {
        total += 1;
        let r = pearson(&rx, perm).unwrap_or(0.0);
        if r.abs() >= observed - EXTREME_SLACK {
            extreme += 1;
        }
    };
    check(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            check(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(TestResult { statistic: rho, p_value: extreme as f64 / total as f64, exact: true })
}
