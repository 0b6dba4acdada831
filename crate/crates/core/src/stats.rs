//! Sample summaries, two-sample Kolmogorov–Smirnov test and small regressions.
//!
//! All sums go through [`pairwise_sum`] so that aggregation order is fixed by
//! the data layout alone.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Recursive pairwise summation (error `O(ε log n)`), fixed evaluation order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        s
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        Self { value, se }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// `|value − target| ≤ k · se`
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }

    /// Number of standard errors between the estimate and `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target) / self.se
    }

    /// Applies `x ↦ c·x` to value and error.
    pub fn scale(&self, c: f64) -> Self {
        Self {
            value: self.value * c,
            se: self.se * c.abs(),
        }
    }
}

/// Mean, variance and their standard errors for an i.i.d. sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub se_mean: f64,
    /// Large-sample SE of the variance, `sqrt((m4 − m2²)/n)`.
    pub se_variance: f64,
    /// Mean of squares, `E[x²]`.
    pub second_moment: f64,
    pub se_second_moment: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::domain("need at least two samples"));
        }
        let nf = n as f64;
        let m = mean(xs);
        let dev2: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
        let m2 = pairwise_sum(&dev2) / nf;
        let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
        let m4 = pairwise_sum(&dev4) / nf;
        let variance = m2 * nf / (nf - 1.0);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let second = pairwise_sum(&sq) / nf;
        let sq_dev: Vec<f64> = sq.iter().map(|s| (s - second) * (s - second)).collect();
        let var_sq = pairwise_sum(&sq_dev) / (nf - 1.0);
        Ok(Self {
            n,
            mean: m,
            variance,
            se_mean: math::sqrt(variance / nf),
            se_variance: math::sqrt(((m4 - m2 * m2) / nf).max(0.0)),
            second_moment: second,
            se_second_moment: math::sqrt(var_sq / nf),
        })
    }

    pub fn mean_estimate(&self) -> Estimate {
        Estimate::new(self.mean, self.se_mean)
    }

    pub fn variance_estimate(&self) -> Estimate {
        Estimate::new(self.variance, self.se_variance)
    }

    pub fn second_moment_estimate(&self) -> Estimate {
        Estimate::new(self.second_moment, self.se_second_moment)
    }
}

/// Mean of a stationary but correlated sequence with its batch-means SE:
/// the spread of `batches` contiguous block means stands in for the long-run
/// variance. Trailing samples that do not fill a block are dropped.
pub fn batch_means(xs: &[f64], batches: usize) -> Result<Estimate> {
    if batches < 2 || xs.len() < 2 * batches {
        return Err(Error::domain("need at least two batches of two samples"));
    }
    let size = xs.len() / batches;
    let means: Vec<f64> = xs[..size * batches].chunks(size).map(mean).collect();
    let s = Summary::of(&means)?;
    Ok(s.mean_estimate())
}

/// Linear-interpolated quantile of an already sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(n - 1);
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = math::exp(-2.0 * kf * kf * lambda * lambda);
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    /// `sup |F₁ − F₂|`
    pub statistic: f64,
    /// Asymptotic p-value with the Stephens small-sample correction.
    pub p_value: f64,
    /// Asymptotic critical value of the statistic at `alpha`.
    pub critical_value: f64,
    pub alpha: f64,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.statistic <= self.critical_value
    }
}

/// Two-sample Kolmogorov–Smirnov test at level `alpha`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS test needs two nonempty samples"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha must lie in (0, 1)"));
    }
    let xs = sorted(a);
    let ys = sorted(b);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = if xs[i] <= ys[j] { xs[i] } else { ys[j] };
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let sq = math::sqrt(ne);
    let p_value = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
    let c_alpha = math::sqrt(-0.5 * math::ln(alpha / 2.0));
    Ok(KsResult {
        statistic: d,
        p_value,
        critical_value: c_alpha / sq,
        alpha,
    })
}

/// Least-squares line `y ≈ intercept + slope·x` with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain("linear fit needs ≥ 2 paired points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(Error::domain("degenerate abscissae"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Sample covariance of columns `i`, `k` of row-major `rows` with its SE,
/// estimated from the spread of centred products.
pub fn covariance_with_se(rows: &[Vec<f64>], i: usize, k: usize) -> Estimate {
    let n = rows.len() as f64;
    let ci: Vec<f64> = rows.iter().map(|r| r[i]).collect();
    let ck: Vec<f64> = rows.iter().map(|r| r[k]).collect();
    let (mi, mk) = (mean(&ci), mean(&ck));
    let prods: Vec<f64> = ci
        .iter()
        .zip(&ck)
        .map(|(a, b)| (a - mi) * (b - mk))
        .collect();
    let c = pairwise_sum(&prods) / (n - 1.0);
    let dev: Vec<f64> = prods.iter().map(|p| (p - c) * (p - c)).collect();
    let se = math::sqrt(pairwise_sum(&dev) / (n - 1.0) / n);
    Estimate::new(c, se)
}
