//! Oscillating stationary regime and laws of large numbers for periodic
//! functionals of the path.
//!
//! For `dξ = (S(t) + β − γξ) dt + σ0 dW` the period-sampled marginals
//! converge to `N(M(r), σ0²/2γ)` with
//!
//! ```text
//! M(r) = ∫₀^∞ e^{−γv} (S(r − v) + β) dv
//!      = β/γ + (1 − e^{−γT})^{−1} ∫₀^T e^{−γv} S(r − v) dv
//! ```
//!
//! Both forms are implemented and are expected to agree to quadrature
//! accuracy. For non-constant σ the marginals come from [`crate::semigroup`].

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::{phase_of, CoefFn, DiffusionModel, SignalSpec};
use crate::quadrature::{integrate, integrate_piecewise, normal_expectation};
use crate::semigroup::{FokkerPlanckConfig, PeriodicMarginals};
use crate::simulate::PathGrid;
use crate::stats::{batch_means, quantile_sorted, sorted, Estimate, Summary};

const QUAD_TOL: f64 = 1e-13;

/// Closed-form Ornstein–Uhlenbeck description of the periodic regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OUAnalytic {
    pub gamma: f64,
    /// Constant part `β` of the affine drift `β − γx`.
    pub beta: f64,
    pub sigma0: f64,
    pub signal: SignalSpec,
}

impl OUAnalytic {
    pub fn new(gamma: f64, sigma0: f64, signal: SignalSpec) -> Result<Self> {
        if !(gamma > 0.0 && sigma0 > 0.0) {
            return Err(Error::domain("need γ > 0 and σ0 > 0"));
        }
        Ok(Self {
            gamma,
            beta: 0.0,
            sigma0,
            signal,
        })
    }

    /// Requires affine drift with `γ > 0` and constant σ.
    pub fn from_model(model: &DiffusionModel) -> Result<Self> {
        let (beta, gamma) = match model.drift {
            CoefFn::Affine { beta, gamma } if gamma > 0.0 => (beta, gamma),
            _ => {
                return Err(Error::unsupported(
                    "analytic OU regime needs affine drift with γ > 0",
                ))
            }
        };
        let sigma0 = match model.sigma {
            CoefFn::Constant(s) => s,
            _ => return Err(Error::unsupported("analytic OU regime needs constant σ")),
        };
        Ok(Self {
            beta,
            ..Self::new(gamma, sigma0, model.signal)?
        })
    }

    pub fn variance(&self) -> f64 {
        self.sigma0 * self.sigma0 / (2.0 * self.gamma)
    }

    fn s_back(&self, r: f64, v: f64) -> f64 {
        let sig = &self.signal;
        sig.value_at_phase(phase_of(r - v, sig.period), sig.theta)
    }

    /// Lags `v ∈ [0, span)` at which `S(r − v)` jumps.
    fn jump_lags(&self, r: f64, periods: usize) -> Vec<f64> {
        let sig = &self.signal;
        let first = [
            phase_of(r - sig.theta, sig.period),
            phase_of(r - sig.theta - sig.duration, sig.period),
        ];
        let mut out = Vec::with_capacity(2 * periods);
        for k in 0..periods {
            for v in first {
                out.push(v + k as f64 * sig.period);
            }
        }
        out
    }

    /// `M(r)` by the one-period integral and the geometric-series prefactor.
    pub fn mean_geometric(&self, r: f64) -> Result<f64> {
        let (g, t) = (self.gamma, self.signal.period);
        let body = integrate_piecewise(
            |v| math::exp(-g * v) * self.s_back(r, v),
            0.0,
            t,
            &self.jump_lags(r, 1),
            QUAD_TOL,
        )?;
        Ok(self.beta / g + body / (-math::expm1(-g * t)))
    }

    /// `M(r)` by direct integration over `periods` periods of lag.
    pub fn mean_truncated(&self, r: f64, periods: usize) -> Result<f64> {
        let (g, t) = (self.gamma, self.signal.period);
        let span = periods as f64 * t;
        let body = integrate_piecewise(
            |v| math::exp(-g * v) * self.s_back(r, v),
            0.0,
            span,
            &self.jump_lags(r, periods),
            QUAD_TOL,
        )?;
        let tail_beta = self.beta / g;
        Ok(tail_beta + body)
    }
}

/// `(M(r), σ0²/2γ)`.
pub fn ou_moments(ou: &OUAnalytic, r: f64) -> Result<(f64, f64)> {
    if !(0.0..ou.signal.period).contains(&r) {
        return Err(Error::domain("r must lie in [0, T)"));
    }
    Ok((ou.mean_geometric(r)?, ou.variance()))
}

/// Functions admitted in the law-of-large-numbers functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    Coef(CoefFn),
    Identity,
    Square,
    /// `x ↦ 1{x < c}`
    IndicatorBelow(f64),
    /// `x ↦ 1/σ(x)²` for the given diffusion coefficient.
    InverseSquare(CoefFn),
}

impl Observable {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Observable::Coef(c) => c.eval(x),
            Observable::Identity => x,
            Observable::Square => x * x,
            Observable::IndicatorBelow(c) => {
                if x < c {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::InverseSquare(s) => {
                let v = s.eval(x);
                1.0 / (v * v)
            }
        }
    }

    /// `E[f(X)]` for `X ~ N(m, v)`, closed form where one exists.
    pub fn gaussian_expectation(&self, m: f64, v: f64) -> Result<f64> {
        match *self {
            Observable::Identity => Ok(m),
            Observable::Square => Ok(m * m + v),
            Observable::IndicatorBelow(c) => Ok(math::norm_cdf((c - m) / math::sqrt(v))),
            Observable::Coef(CoefFn::Affine { beta, gamma }) => Ok(beta - gamma * m),
            Observable::Coef(CoefFn::Constant(s)) => Ok(s),
            Observable::InverseSquare(CoefFn::Constant(s)) => Ok(1.0 / (s * s)),
            _ => normal_expectation(|x| self.eval(x), m, v, 1e-12),
        }
    }
}

/// `(μ P_{0,r})(f)` for each phase in `phases`: Gaussian closed form for
/// constant σ, periodic Fokker–Planck solution otherwise.
pub fn invariant_expectations(
    model: &DiffusionModel,
    phases: &[f64],
    f: Observable,
) -> Result<Vec<f64>> {
    match OUAnalytic::from_model(model) {
        Ok(ou) => phases
            .iter()
            .map(|&r| {
                let (m, v) = ou_moments(&ou, phase_of(r, ou.signal.period))?;
                f.gaussian_expectation(m, v)
            })
            .collect(),
        Err(_) if model.h1_guaranteed() => {
            let pm = PeriodicMarginals::solve(model, phases, &FokkerPlanckConfig::default())?;
            Ok((0..phases.len())
                .map(|k| pm.expectation(k, |x| f.eval(x)))
                .collect())
        }
        Err(e) => Err(e),
    }
}

/// `(μ P_{0,r})(1/σ²)`.
pub fn inverse_sigma_sq_mean(model: &DiffusionModel, r: f64) -> Result<f64> {
    if let CoefFn::Constant(s) = model.sigma {
        return Ok(1.0 / (s * s));
    }
    Ok(invariant_expectations(model, &[r], Observable::InverseSquare(model.sigma))?[0])
}

/// Empirical law of a sampled marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pub samples: Vec<f64>,
    pub summary: Summary,
    /// Quantiles at 5%, 25%, 50%, 75%, 95%.
    pub quantiles: [f64; 5],
}

impl EmpiricalLaw {
    pub fn mean(&self) -> Estimate {
        self.summary.mean_estimate()
    }

    pub fn variance(&self) -> Estimate {
        self.summary.variance_estimate()
    }

    /// Mean with a batch-means SE, for samples taken along one path.
    pub fn mean_batched(&self, batches: usize) -> Result<Estimate> {
        batch_means(&self.samples, batches)
    }

    /// Variance with a batch-means SE on the squared deviations.
    pub fn variance_batched(&self, batches: usize) -> Result<Estimate> {
        let m = self.summary.mean;
        let n = self.samples.len() as f64;
        let dev: Vec<f64> = self.samples.iter().map(|x| (x - m) * (x - m)).collect();
        Ok(batch_means(&dev, batches)?.scale(n / (n - 1.0)))
    }
}

/// Empirical law of `samples[burn_in..]`; at least 100 samples must remain.
pub fn empirical_invariant(samples: &[f64], burn_in: usize) -> Result<EmpiricalLaw> {
    if samples.len() < burn_in + 100 {
        return Err(Error::domain("need at least 100 samples after burn-in"));
    }
    let kept = samples[burn_in..].to_vec();
    let summary = Summary::of(&kept)?;
    let s = sorted(&kept);
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95].map(|p| quantile_sorted(&s, p));
    Ok(EmpiricalLaw {
        samples: kept,
        summary,
        quantiles,
    })
}

/// Additive functionals `A_t` of the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `Σ_{kT + r ≤ t} f(ξ_{kT+r})`
    PointSample { r: f64 },
    /// `∫₀ᵗ f(ξ_s) 1{(r, r')}(s mod T) ds`
    IntervalIntegral { r: f64, r_end: f64 },
    /// `∫₀ᵗ f(ξ_s) Λ_T(ds)` with `Λ_T` the Dirac comb at `kT + r`.
    DiracComb { r: f64 },
}

/// Running averages `A_t/t` at every period end after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct LlnResult {
    /// Times measured from the end of the burn-in.
    pub times: Vec<f64>,
    pub running_average: Vec<f64>,
    pub terminal: Estimate,
    /// `(1/T)(μP_{0,r})(f)` or `(1/T)∫_r^{r'} (μP_{0,s})(f) ds` when available.
    pub limit: Option<f64>,
}

/// Exact integral over `[lo, hi]` of the piecewise-linear interpolant of
/// `f(seg[i])` placed at `i·dt`.
pub(crate) fn windowed_integral<F: Fn(f64) -> f64>(
    seg: &[f64],
    dt: f64,
    lo: f64,
    hi: f64,
    f: F,
) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let last = seg.len() - 1;
    let i0 = (math::floor(lo / dt) as usize).min(last.saturating_sub(1));
    let i1 = (math::ceil(hi / dt) as usize).min(last);
    let mut acc = 0.0;
    for i in i0..i1 {
        let (ta, tb) = (i as f64 * dt, (i + 1) as f64 * dt);
        let (a, b) = (lo.max(ta), hi.min(tb));
        if b <= a {
            continue;
        }
        let (fa, fb) = (f(seg[i]), f(seg[i + 1]));
        // linear interpolant evaluated at the sub-interval ends
        let wa = (a - ta) / dt;
        let wb = (b - ta) / dt;
        let ya = fa + (fb - fa) * wa;
        let yb = fa + (fb - fa) * wb;
        acc += 0.5 * (ya + yb) * (b - a);
    }
    acc
}

pub fn lln_functional(
    path: &PathGrid,
    functional: Functional,
    f: Observable,
    burn_in: usize,
) -> Result<LlnResult> {
    let n_total = path.whole_periods()?;
    if n_total < burn_in + 50 {
        return Err(Error::domain("need at least 50 periods after burn-in"));
    }
    let model = &path.model;
    let period = model.period();
    let s = path.steps_per_period;
    let dt = path.dt;
    let per_period: Vec<f64> = match functional {
        Functional::PointSample { r } | Functional::DiracComb { r } => {
            let xs = path.phase_samples(r)?;
            xs[burn_in..].iter().map(|&x| f.eval(x)).collect()
        }
        Functional::IntervalIntegral { r, r_end } => {
            if !(0.0 <= r && r < r_end && r_end <= period) {
                return Err(Error::domain("interval functional needs 0 ≤ r < r' ≤ T"));
            }
            (burn_in..n_total)
                .map(|k| {
                    let seg = &path.values[k * s..(k + 1) * s + 1];
                    windowed_integral(seg, dt, r, r_end, |x| f.eval(x))
                })
                .collect()
        }
    };
    let n = per_period.len();
    let mut times = Vec::with_capacity(n);
    let mut running = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (k, v) in per_period.iter().enumerate() {
        acc += v;
        let t = (k + 1) as f64 * period;
        times.push(t);
        running.push(acc / t);
    }
    let summ = Summary::of(&per_period)?;
    let terminal = Estimate::new(*running.last().unwrap(), summ.se_mean / period);
    let limit = lln_limit(model, functional, f).ok();
    Ok(LlnResult {
        times,
        running_average: running,
        terminal,
        limit,
    })
}

/// Theoretical limit of `A_t / t`.
pub fn lln_limit(model: &DiffusionModel, functional: Functional, f: Observable) -> Result<f64> {
    let period = model.period();
    match functional {
        Functional::PointSample { r } | Functional::DiracComb { r } => {
            Ok(invariant_expectations(model, &[r], f)?[0] / period)
        }
        Functional::IntervalIntegral { r, r_end } => {
            let sig = &model.signal;
            let kinks = [sig.theta, sig.theta + sig.duration];
            if let Ok(ou) = OUAnalytic::from_model(model) {
                let inner = |s: f64| -> f64 {
                    let m = ou.mean_geometric(phase_of(s, period)).unwrap_or(f64::NAN);
                    f.gaussian_expectation(m, ou.variance()).unwrap_or(f64::NAN)
                };
                let v = integrate_piecewise(inner, r, r_end, &kinks, 1e-10)?;
                if !v.is_finite() {
                    return Err(Error::Numeric("interval limit quadrature failed".into()));
                }
                Ok(v / period)
            } else {
                // composite Simpson over Fokker–Planck marginals
                let m = 128;
                let phases: Vec<f64> = (0..=m)
                    .map(|i| (r + (r_end - r) * i as f64 / m as f64).min(period * (1.0 - 1e-15)))
                    .collect();
                let vals = invariant_expectations(model, &phases, f)?;
                let h = (r_end - r) / m as f64;
                let mut acc = vals[0] + vals[m];
                for (i, v) in vals.iter().enumerate().take(m).skip(1) {
                    acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
                }
                Ok(acc * h / 3.0 / period)
            }
        }
    }
}

/// `∫ e^{−γv}S(r−v)dv` over a single smooth stretch, exposed for tests of the
/// quadrature splitting.
pub fn discounted_signal_integral(ou: &OUAnalytic, r: f64, lo: f64, hi: f64) -> Result<f64> {
    integrate(
        |v| math::exp(-ou.gamma * v) * ou.s_back(r, v),
        lo,
        hi,
        QUAD_TOL,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PeriodicFn;
    use crate::simulate::simulate_path;

    fn signal(lambda: f64, lambda_star: f64) -> SignalSpec {
        SignalSpec::new_allow_null(
            PeriodicFn::constant(lambda, 10.0).unwrap(),
            PeriodicFn::constant(lambda_star, 10.0).unwrap(),
            10.0,
            3.0,
            4.0,
        )
        .unwrap()
    }

    #[test]
    fn constant_input_mean_is_c_over_gamma() {
        let ou = OUAnalytic::new(2.0, 1.0, signal(3.0, 0.0)).unwrap();
        for r in [0.0, 2.5, 5.5, 9.9] {
            let (m, v) = ou_moments(&ou, r).unwrap();
            assert!((m - 1.5).abs() < 1e-12, "r={r}: {m}");
            assert_eq!(v, 0.25);
        }
    }

    #[test]
    fn unit_variance_constant() {
        let ou = OUAnalytic::new(1.0, 1.0, signal(1.0, 2.0)).unwrap();
        assert_eq!(ou_moments(&ou, 0.0).unwrap().1, 0.5);
    }

    /// Closed form for λ ≡ 0, λ* ≡ 1, T=10, a=3, θ=4, γ=1 at r=0:
    /// S(−v)=1 iff v mod 10 ∈ (3, 6), so the one-period integral is
    /// e^{-3} − e^{-6}, divided by 1 − e^{-10}.
    #[test]
    fn window_signal_mean_at_zero_matches_closed_form() {
        let ou = OUAnalytic::new(1.0, 1.0, signal(0.0, 1.0)).unwrap();
        let exact = ((-3.0f64).exp() - (-6.0f64).exp()) / (1.0 - (-10.0f64).exp());
        let g = ou.mean_geometric(0.0).unwrap();
        let t = ou.mean_truncated(0.0, 40).unwrap();
        assert!((g - exact).abs() < 1e-13, "{g} vs {exact}");
        assert!((g - t).abs() < 1e-10, "{g} vs {t}");
    }

    #[test]
    fn signal_on_raises_mean() {
        let ou = OUAnalytic::new(1.0, 1.0, signal(1.0, 2.0)).unwrap();
        let on = ou_moments(&ou, 5.5).unwrap().0;
        let off = ou_moments(&ou, 3.9).unwrap().0;
        assert!(on > off + 1.0, "on {on} off {off}");
    }

    #[test]
    fn observables_have_gaussian_closed_forms() {
        assert_eq!(
            Observable::Square.gaussian_expectation(1.0, 0.5).unwrap(),
            1.5
        );
        let p = Observable::IndicatorBelow(0.0)
            .gaussian_expectation(0.0, 2.0)
            .unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        let br = Observable::Coef(CoefFn::BoundedRational { s0: 1.0, s1: 1.0 });
        let q = br.gaussian_expectation(0.0, 1e-8).unwrap();
        assert!((q - 2.0).abs() < 1e-6);
    }

    #[test]
    fn empirical_law_needs_enough_samples() {
        assert!(empirical_invariant(&[0.0; 150], 60).is_err());
        let law =
            empirical_invariant(&(0..200).map(|i| i as f64).collect::<Vec<_>>(), 100).unwrap();
        assert_eq!(law.samples.len(), 100);
        assert!(law.quantiles.windows(2).all(|w| w[0] <= w[1]));
        assert!(law.summary.variance >= 0.0);
    }

    #[test]
    fn windowed_integral_of_linear_data_is_exact() {
        let seg: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect(); // x = t on dt = 0.1
        let v = windowed_integral(&seg, 0.1, 0.25, 0.73, |x| x);
        let exact = 0.5 * (0.73f64 * 0.73 - 0.25 * 0.25);
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn constant_function_interval_average_is_window_fraction() {
        let sig = signal(1.0, 2.0);
        let m = DiffusionModel::new(
            sig,
            CoefFn::Affine {
                beta: 0.0,
                gamma: 1.0,
            },
            CoefFn::Constant(1.0),
        )
        .unwrap();
        let p = simulate_path(&m, 0.0, 80, 100, 3).unwrap();
        let res = lln_functional(
            &p,
            Functional::IntervalIntegral { r: 2.0, r_end: 5.0 },
            Observable::Coef(CoefFn::Constant(1.0)),
            20,
        )
        .unwrap();
        assert!((res.terminal.value - 0.3).abs() < 1e-12);
        assert!((res.limit.unwrap() - 0.3).abs() < 1e-10);
    }

    #[test]
    fn lln_needs_fifty_periods_after_burn_in() {
        let m = DiffusionModel::new(
            signal(1.0, 2.0),
            CoefFn::Affine {
                beta: 0.0,
                gamma: 1.0,
            },
            CoefFn::Constant(1.0),
        )
        .unwrap();
        let p = simulate_path(&m, 0.0, 60, 50, 3).unwrap();
        assert!(lln_functional(
            &p,
            Functional::PointSample { r: 0.0 },
            Observable::Identity,
            20
        )
        .is_err());
    }
}
