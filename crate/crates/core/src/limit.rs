//! The limit experiment: log-likelihood `ℓ(u) = W̃(uJ) − J|u|/2` with `W̃` a
//! two-sided Brownian motion, its argmax `û` and its Pitman estimator
//! `u* = ∫u e^ℓ du / ∫e^ℓ du`.
//!
//! Fields live on the uniform grid `u_i = i·du`, `i = −M..=M`. Under the
//! shifted law `P̃_{u₀}` the field gains the mean `J·(|u| ∧ |u₀|)` on the
//! branch carrying `u₀`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::{seed_stream, Stream};
use crate::runner::{map_chunked, Executor};
use crate::stats::{ks_two_sample, linear_fit, Estimate, KsResult, LinearFit, Summary};

/// Points whose log-weight is this far below the maximum are dropped from the
/// Pitman quadrature; their share of the mass is below `e^{−60}` per point.
const LOG_CUTOFF: f64 = -60.0;

/// Share of stabilised mass tolerated in the outer tenth of the grid.
pub const MAX_TAIL_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitField {
    pub k: f64,
    pub du: f64,
    pub j: f64,
    pub shift: f64,
    /// `W̃(u_i J)` plus the shift profile, index `M + i` for `u_i = i·du`.
    pub values: Vec<f64>,
}

impl LimitField {
    pub fn half_len(&self) -> usize {
        (self.values.len() - 1) / 2
    }

    pub fn u(&self, idx: usize) -> f64 {
        (idx as f64 - self.half_len() as f64) * self.du
    }

    pub fn at(&self, u: f64) -> f64 {
        let i = math::round(u / self.du) as i64 + self.half_len() as i64;
        self.values[i as usize]
    }

    /// `ℓ(u_i) = field − J|u_i|/2`.
    pub fn log_likelihood(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| self.values[i] - 0.5 * self.j * self.u(i).abs())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitEstimates {
    pub u_hat: f64,
    pub u_star: f64,
    pub max_log_l: f64,
    /// Share of the stabilised mass with `|u| > 0.9K`.
    pub mass_tail_fraction: f64,
    /// `û` within two cells of `±K`.
    pub tail_touch: bool,
}

impl LimitEstimates {
    pub fn accepted(&self) -> bool {
        !self.tail_touch && self.mass_tail_fraction < MAX_TAIL_FRACTION
    }
}

fn grid_half_len(k: f64, du: f64) -> usize {
    math::ceil(k / du - 1e-9) as usize
}

fn check_field_args(k: f64, du: f64, j: f64) -> Result<()> {
    if !(du > 0.0 && du <= 0.05) {
        return Err(Error::domain("need 0 < du ≤ 0.05"));
    }
    if !(k >= 50.0 && k.is_finite()) {
        return Err(Error::domain("need K ≥ 50"));
    }
    if !(j > 0.0 && j.is_finite()) {
        return Err(Error::domain("need J > 0"));
    }
    Ok(())
}

/// Fills `out` (length `2M+1`) with a field: right branch first, then left,
/// both from `stream`.
fn fill_field(out: &mut [f64], du: f64, j: f64, shift: f64, stream: &mut Stream) {
    let m = (out.len() - 1) / 2;
    let step = math::sqrt(j * du);
    out[m] = 0.0;
    let mut w = 0.0;
    for i in 1..=m {
        w += step * stream.normal();
        out[m + i] = w;
    }
    w = 0.0;
    for i in 1..=m {
        w += step * stream.normal();
        out[m - i] = w;
    }
    if shift != 0.0 {
        let reach = shift.abs();
        for i in 1..=m {
            let bump = j * (i as f64 * du).min(reach);
            if shift > 0.0 {
                out[m + i] += bump;
            } else {
                out[m - i] += bump;
            }
        }
    }
}

pub fn sample_field(k: f64, du: f64, j: f64, shift_u0: f64, seed: u64) -> Result<LimitField> {
    check_field_args(k, du, j)?;
    let m = grid_half_len(k, du);
    let mut values = vec![0.0; 2 * m + 1];
    fill_field(&mut values, du, j, shift_u0, &mut Stream::new(seed));
    Ok(LimitField {
        k: m as f64 * du,
        du,
        j,
        shift: shift_u0,
        values,
    })
}

/// `û` and `u*` from the field values in one pass over the grid.
fn estimates_from_values(values: &[f64], du: f64, j: f64) -> LimitEstimates {
    let m = (values.len() - 1) / 2;
    let u = |i: usize| (i as f64 - m as f64) * du;
    let ll = |i: usize| values[i] - 0.5 * j * u(i).abs();
    let mut best = 0;
    let mut best_l = ll(0);
    for i in 1..values.len() {
        let l = ll(i);
        // strict comparison keeps the smallest u among ties
        if l > best_l {
            best = i;
            best_l = l;
        }
    }
    let n = values.len();
    let outer = (0.9 * m as f64) as usize;
    let (mut mass, mut first, mut tail) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let d = ll(i) - best_l;
        if d < LOG_CUTOFF {
            continue;
        }
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let e = w * math::exp(d);
        mass += e;
        first += e * u(i);
        if i.abs_diff(m) > outer {
            tail += e;
        }
    }
    LimitEstimates {
        u_hat: u(best),
        u_star: first / mass,
        max_log_l: best_l,
        mass_tail_fraction: tail / mass,
        tail_touch: best <= 2 || best >= n - 3,
    }
}

/// Grid argmax of `ℓ` with minimum-`u` tie-break.
pub fn limit_mle(field: &LimitField) -> LimitEstimates {
    estimates_from_values(&field.values, field.du, field.j)
}

/// Pitman estimator; same pass as [`limit_mle`], kept separate for clarity at
/// call sites.
pub fn limit_bayes(field: &LimitField) -> LimitEstimates {
    estimates_from_values(&field.values, field.du, field.j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitConfig {
    pub j: f64,
    pub k: f64,
    pub du: f64,
    pub replicates: usize,
    pub seed: u64,
    pub shift: f64,
}

impl LimitConfig {
    /// `K = 150`, `du = 0.02`, `2×10⁵` fields, `J = 1`.
    pub fn standard(seed: u64) -> Self {
        Self {
            j: 1.0,
            k: 150.0,
            du: 0.02,
            replicates: 200_000,
            seed,
            shift: 0.0,
        }
    }
}

/// Per-field estimates of a batch; field `i` uses `seed_stream(seed, i)`.
pub fn run_fields<E: Executor>(cfg: &LimitConfig, exec: &E) -> Result<Vec<LimitEstimates>> {
    check_field_args(cfg.k, cfg.du, cfg.j)?;
    if cfg.replicates < 2 {
        return Err(Error::domain("need at least two fields"));
    }
    let m = grid_half_len(cfg.k, cfg.du);
    Ok(map_chunked(exec, cfg.replicates, 256, |range, out| {
        let mut buf = vec![0.0; 2 * m + 1];
        for i in range {
            let mut s = Stream::for_replicate(cfg.seed, i as u64);
            fill_field(&mut buf, cfg.du, cfg.j, cfg.shift, &mut s);
            out.push(estimates_from_values(&buf, cfg.du, cfg.j));
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    /// `Var(û)·J²`
    pub mle_scaled: Estimate,
    /// `Var(u*)·J²`
    pub bayes_scaled: Estimate,
    pub mle_mean: Estimate,
    pub bayes_mean: Estimate,
    /// `E[(u*)²]` (unscaled)
    pub bayes_second_moment: Estimate,
    pub accepted: usize,
    pub tail_touch: usize,
    pub mass_violations: usize,
    pub max_tail_fraction: f64,
}

pub fn variance_report(results: &[LimitEstimates], j: f64) -> Result<VarianceReport> {
    let ok: Vec<&LimitEstimates> = results.iter().filter(|e| e.accepted()).collect();
    let uh: Vec<f64> = ok.iter().map(|e| e.u_hat).collect();
    let us: Vec<f64> = ok.iter().map(|e| e.u_star).collect();
    let sh = Summary::of(&uh)?;
    let ss = Summary::of(&us)?;
    Ok(VarianceReport {
        mle_scaled: sh.variance_estimate().scale(j * j),
        bayes_scaled: ss.variance_estimate().scale(j * j),
        mle_mean: sh.mean_estimate(),
        bayes_mean: ss.mean_estimate(),
        bayes_second_moment: ss.second_moment_estimate(),
        accepted: ok.len(),
        tail_touch: results.iter().filter(|e| e.tail_touch).count(),
        mass_violations: results
            .iter()
            .filter(|e| e.mass_tail_fraction >= MAX_TAIL_FRACTION)
            .count(),
        max_tail_fraction: results
            .iter()
            .map(|e| e.mass_tail_fraction)
            .fold(0.0, f64::max),
    })
}

/// Limit variances `Var(û)J² = 26` and `Var(u*)J² = 16ζ(3)`.
pub const MLE_VARIANCE: f64 = 26.0;
pub const BAYES_VARIANCE: f64 = 16.0 * math::ZETA_3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HellingerCheck {
    pub delta_u: f64,
    pub sq_root_gap: Estimate,
    pub fourth_root_gap: Estimate,
    pub root_mean: Estimate,
    /// Closed forms in the same order.
    pub exact: (f64, f64, f64),
}

impl HellingerCheck {
    pub fn within_se(&self, k: f64) -> bool {
        self.sq_root_gap.within_se(self.exact.0, k)
            && self.fourth_root_gap.within_se(self.exact.1, k)
            && self.root_mean.within_se(self.exact.2, k)
    }
}

/// Moments of `L̃ = exp(ℓ(Δ))` read off simulated fields (`K = 50`) at
/// `u = Δ`, which must be a multiple of `du`.
pub fn hellinger_exact<E: Executor>(
    j: f64,
    delta_u: f64,
    du: f64,
    replicates: usize,
    seed: u64,
    exec: &E,
) -> Result<HellingerCheck> {
    check_field_args(50.0, du, j)?;
    if replicates < 10_000 {
        return Err(Error::domain("need at least 10⁴ replicates"));
    }
    let steps = math::round(delta_u.abs() / du);
    if steps < 1.0 || (steps * du - delta_u.abs()).abs() > 1e-9 * du {
        return Err(Error::domain("|Δ| must be a positive multiple of du"));
    }
    let m = grid_half_len(50.0, du);
    if steps as usize > m {
        return Err(Error::domain("|Δ| beyond the field"));
    }
    let idx = if delta_u > 0.0 {
        m + steps as usize
    } else {
        m - steps as usize
    };
    let logs = map_chunked(exec, replicates, 256, |range, out| {
        let mut buf = vec![0.0; 2 * m + 1];
        for i in range {
            let mut s = Stream::for_replicate(seed, i as u64);
            fill_field(&mut buf, du, j, 0.0, &mut s);
            out.push(buf[idx] - 0.5 * j * delta_u.abs());
        }
    });
    let est = crate::likelihood::hellinger_from_log_lr(&logs)?;
    Ok(HellingerCheck {
        delta_u,
        sq_root_gap: est.sq_root_gap,
        fourth_root_gap: est.fourth_root_gap,
        root_mean: est.root_mean,
        exact: crate::likelihood::gaussian_hellinger_forms(j, delta_u),
    })
}

/// `lim_{Δ→0} H²/|Δ| = J/8` with `H² = ½E[(1 − √L̃)²]`; returns the closed-form
/// ratio at `Δ`.
pub fn hellinger_holder_ratio(j: f64, delta_u: f64) -> f64 {
    0.5 * crate::likelihood::gaussian_hellinger_forms(j, delta_u).0 / delta_u.abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivarianceReport {
    pub u0: Vec<f64>,
    /// `u* − u₀` samples per `u₀`.
    pub samples: Vec<Vec<f64>>,
    pub means: Vec<Estimate>,
    /// `(a, b, KS)` for every pair `a < b`.
    pub pairs: Vec<(usize, usize, KsResult)>,
}

impl EquivarianceReport {
    pub fn all_pass(&self) -> bool {
        self.pairs.iter().all(|p| p.2.passes())
    }
}

/// KS comparison of the laws of `u* − u₀` across shifts; shift `k` uses master
/// seed `seed_stream(seed, k)`.
pub fn equivariance_check<E: Executor>(
    cfg: &LimitConfig,
    u0_list: &[f64],
    alpha: f64,
    exec: &E,
) -> Result<EquivarianceReport> {
    if u0_list.iter().any(|u| u.abs() > cfg.k / 4.0) {
        return Err(Error::domain("need |u₀| ≤ K/4"));
    }
    let mut samples = Vec::with_capacity(u0_list.len());
    let mut means = Vec::with_capacity(u0_list.len());
    for (k, &u0) in u0_list.iter().enumerate() {
        let c = LimitConfig {
            shift: u0,
            seed: seed_stream(cfg.seed, k as u64),
            ..*cfg
        };
        let res = run_fields(&c, exec)?;
        let v: Vec<f64> = res
            .iter()
            .filter(|e| e.accepted())
            .map(|e| e.u_star - u0)
            .collect();
        means.push(Summary::of(&v)?.mean_estimate());
        samples.push(v);
    }
    let mut pairs = Vec::new();
    for a in 0..samples.len() {
        for b in a + 1..samples.len() {
            pairs.push((a, b, ks_two_sample(&samples[a], &samples[b], alpha)?));
        }
    }
    Ok(EquivarianceReport {
        u0: u0_list.to_vec(),
        samples,
        means,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailReport {
    pub k_list: Vec<f64>,
    /// `P(sup_{|u|>K} L̃ ≥ 1)`
    pub probabilities: Vec<Estimate>,
    pub strictly_decreasing: bool,
    /// Fit of `ln p` against `K` over the positive probabilities.
    pub fit: Option<LinearFit>,
}

/// Exceedance probabilities of the field beyond each `K` in `k_list`, on fields
/// of half-width `cfg.k`. `K ≥ cfg.k` gives an empty supremum, probability 0.
pub fn tail_decay_check<E: Executor>(
    cfg: &LimitConfig,
    k_list: &[f64],
    exec: &E,
) -> Result<TailReport> {
    check_field_args(cfg.k, cfg.du, cfg.j)?;
    if k_list.windows(2).any(|w| w[1] <= w[0]) || k_list.is_empty() {
        return Err(Error::domain("K list must be nonempty and increasing"));
    }
    let m = grid_half_len(cfg.k, cfg.du);
    let n = cfg.replicates;
    let hits = map_chunked(exec, n, 256, |range, out| {
        let mut buf = vec![0.0; 2 * m + 1];
        for i in range {
            let mut s = Stream::for_replicate(cfg.seed, i as u64);
            fill_field(&mut buf, cfg.du, cfg.j, cfg.shift, &mut s);
            // running sup of ℓ over |u| > K, scanning inwards from the edges
            let mut flags = vec![false; k_list.len()];
            let mut sup = f64::NEG_INFINITY;
            let mut kk = k_list.len();
            for step in (1..=m).rev() {
                let u = step as f64 * cfg.du;
                while kk > 0 && u <= k_list[kk - 1] {
                    kk -= 1;
                    flags[kk] = sup >= 0.0;
                }
                let pen = 0.5 * cfg.j * u;
                sup = sup.max(buf[m + step] - pen).max(buf[m - step] - pen);
            }
            while kk > 0 {
                kk -= 1;
                flags[kk] = sup >= 0.0;
            }
            out.push(flags);
        }
    });
    let nf = n as f64;
    let probabilities: Vec<Estimate> = (0..k_list.len())
        .map(|q| {
            let c = hits.iter().filter(|f| f[q]).count() as f64;
            let p = c / nf;
            Estimate::new(p, math::sqrt(p * (1.0 - p) / nf))
        })
        .collect();
    let strictly_decreasing = probabilities.windows(2).all(|w| w[1].value < w[0].value);
    let pos: Vec<(f64, f64)> = k_list
        .iter()
        .zip(&probabilities)
        .filter(|(_, p)| p.value > 0.0)
        .map(|(&k, p)| (k, math::ln(p.value)))
        .collect();
    let fit = if pos.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pos.into_iter().unzip();
        Some(linear_fit(&x, &y)?)
    } else {
        None
    };
    Ok(TailReport {
        k_list: k_list.to_vec(),
        probabilities,
        strictly_decreasing,
        fit,
    })
}

/// `P(sup_{|u|>K} ℓ ≥ 0)` for the continuous field: one branch exceeds with
/// probability `2Φ(−√(JK)/2)`, branches are independent.
pub fn tail_probability_exact(j: f64, k: f64) -> f64 {
    let p1 = 2.0 * math::norm_cdf(-0.5 * math::sqrt(j * k));
    1.0 - (1.0 - p1) * (1.0 - p1)
}

/// `E[(u*)²]` under `P̃₀`.
pub fn lam_target<E: Executor>(cfg: &LimitConfig, exec: &E) -> Result<Estimate> {
    let res = run_fields(&LimitConfig { shift: 0.0, ..*cfg }, exec)?;
    Ok(variance_report(&res, cfg.j)?.bayes_second_moment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::Sequential;

    fn flat(k: f64, du: f64, j: f64) -> LimitField {
        let m = grid_half_len(k, du);
        LimitField {
            k,
            du,
            j,
            shift: 0.0,
            values: vec![0.0; 2 * m + 1],
        }
    }

    #[test]
    fn zero_field_estimates_are_zero() {
        let f = flat(50.0, 0.05, 1.0);
        let e = limit_mle(&f);
        assert_eq!(e.u_hat, 0.0);
        assert!(e.u_star.abs() < 1e-12);
        assert!(e.accepted());
    }

    #[test]
    fn planted_spike_wins() {
        let mut f = flat(50.0, 0.05, 1.0);
        let i = f.half_len() + 140;
        f.values[i] = 100.0;
        assert!((limit_mle(&f).u_hat - 7.0).abs() < 1e-12);
    }

    #[test]
    fn ties_take_smallest_u() {
        let mut f = flat(50.0, 0.05, 1.0);
        let m = f.half_len();
        f.values[m - 20] = 50.0 + 0.5;
        f.values[m + 20] = 50.0 + 0.5;
        assert_eq!(limit_mle(&f).u_hat, -1.0);
    }

    #[test]
    fn field_starts_at_zero() {
        let f = sample_field(50.0, 0.05, 2.0, 0.0, 9).unwrap();
        assert_eq!(f.at(0.0), 0.0);
        assert_eq!(f.log_likelihood()[f.half_len()], 0.0);
    }

    #[test]
    fn preconditions() {
        assert!(sample_field(40.0, 0.02, 1.0, 0.0, 1).is_err());
        assert!(sample_field(50.0, 0.1, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn shift_profile_is_deterministic_part() {
        let a = sample_field(50.0, 0.05, 1.0, 0.0, 4).unwrap();
        let b = sample_field(50.0, 0.05, 1.0, 3.0, 4).unwrap();
        assert!((b.at(5.0) - a.at(5.0) - 3.0).abs() < 1e-12);
        assert!((b.at(2.0) - a.at(2.0) - 2.0).abs() < 1e-12);
        assert_eq!(b.at(-5.0), a.at(-5.0));
    }

    #[test]
    fn tail_formula_values() {
        assert!((tail_probability_exact(1.0, 5.0) - 0.4583).abs() < 1e-3);
        assert!((tail_probability_exact(1.0, 20.0) - 0.0495).abs() < 1e-3);
    }

    #[test]
    fn empty_supremum_is_zero() {
        let cfg = LimitConfig {
            j: 1.0,
            k: 50.0,
            du: 0.05,
            replicates: 200,
            seed: 1,
            shift: 0.0,
        };
        let r = tail_decay_check(&cfg, &[5.0, 50.0, 60.0], &Sequential).unwrap();
        assert_eq!(r.probabilities[1].value, 0.0);
        assert_eq!(r.probabilities[2].value, 0.0);
        assert!(r.probabilities[0].value > 0.2);
    }

    #[test]
    fn holder_ratio_near_j_over_eight() {
        let r = hellinger_holder_ratio(1.0, 0.01);
        assert!((r / 0.125 - 1.0).abs() < 1e-3);
    }
}
