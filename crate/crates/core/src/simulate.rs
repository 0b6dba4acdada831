//! Euler–Maruyama simulation on a grid that divides the period exactly.
//!
//! The grid step is `dt = T / steps_per_period`, and every grid time is
//! tracked by its integer index so that phases `j·dt` are computed the same
//! way by the simulator, the likelihood code and the estimators.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::DiffusionModel;
use crate::rng::Stream;
use crate::runner::{map_chunked, Executor};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
        }
    }
}

/// A trajectory sampled at `t0 + i·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    /// Grid index of the first sample; `t0 = start_index · dt`.
    pub start_index: u64,
    pub dt: f64,
    pub steps_per_period: usize,
    pub values: Vec<f64>,
    pub model: DiffusionModel,
    pub seed: u64,
    pub scheme: Scheme,
}

impl PathGrid {
    pub fn t0(&self) -> f64 {
        self.start_index as f64 * self.dt
    }

    pub fn time(&self, i: usize) -> f64 {
        (self.start_index + i as u64) as f64 * self.dt
    }

    /// Phase index `(start_index + i) mod steps_per_period` of sample `i`.
    #[inline]
    pub fn phase_index(&self, i: usize) -> usize {
        ((self.start_index + i as u64) % self.steps_per_period as u64) as usize
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn duration(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    /// Number of whole periods when the path starts on a period boundary.
    pub fn whole_periods(&self) -> Result<usize> {
        let s = self.steps_per_period;
        if self.start_index % s as u64 != 0 {
            return Err(Error::domain("path does not start on a period boundary"));
        }
        if self.n_steps() % s != 0 {
            return Err(Error::domain(alloc::format!(
                "path of {} steps is not a whole number of {s}-step periods",
                self.n_steps()
            )));
        }
        Ok(self.n_steps() / s)
    }

    /// `ξ_{kT + r}` for every whole period `k`, linearly interpolated when
    /// `r` falls between grid points.
    pub fn phase_samples(&self, r: f64) -> Result<Vec<f64>> {
        let n = self.whole_periods()?;
        let period = self.model.period();
        if !(0.0..period).contains(&r) {
            return Err(Error::domain("phase must lie in [0, T)"));
        }
        let pos = r / self.dt;
        let j = math::floor(pos) as usize;
        let w = pos - j as f64;
        let s = self.steps_per_period;
        Ok((0..n)
            .map(|k| {
                let i = k * s + j;
                if w == 0.0 {
                    self.values[i]
                } else {
                    self.values[i] * (1.0 - w) + self.values[i + 1] * w
                }
            })
            .collect())
    }
}

/// Period-by-period Euler stepper with the signal tabulated on the phase grid.
#[derive(Debug, Clone)]
pub struct EulerStepper {
    model: DiffusionModel,
    table: Vec<f64>,
    dt: f64,
    sqrt_dt: f64,
    x: f64,
    steps_done: usize,
}

impl EulerStepper {
    /// Stepper for the model's own `θ`.
    pub fn new(model: &DiffusionModel, steps_per_period: usize, x0: f64) -> Result<Self> {
        Self::with_phase(model, model.signal.theta, steps_per_period, x0)
    }

    /// Stepper simulating under parameter `zeta` (not required to equal the model's θ).
    pub fn with_phase(
        model: &DiffusionModel,
        zeta: f64,
        steps_per_period: usize,
        x0: f64,
    ) -> Result<Self> {
        if steps_per_period == 0 {
            return Err(Error::domain("steps_per_period must be positive"));
        }
        if !x0.is_finite() {
            return Err(Error::domain("x0 must be finite"));
        }
        model.signal.check_theta(zeta)?;
        let table = signal_table(model, zeta, steps_per_period);
        let dt = model.period() / steps_per_period as f64;
        Ok(Self {
            model: *model,
            table,
            dt,
            sqrt_dt: math::sqrt(dt),
            x: x0,
            steps_done: 0,
        })
    }

    pub fn state(&self) -> f64 {
        self.x
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_per_period(&self) -> usize {
        self.table.len()
    }

    /// Advances one period; `out` (length `steps_per_period + 1`) receives the
    /// period's grid values, starting with the current state.
    pub fn advance_period(&mut self, stream: &mut Stream, out: &mut [f64]) -> Result<()> {
        let s = self.table.len();
        debug_assert_eq!(out.len(), s + 1);
        let (b, sig) = (self.model.drift, self.model.sigma);
        let (dt, sq) = (self.dt, self.sqrt_dt);
        let mut x = self.x;
        out[0] = x;
        for j in 0..s {
            x += (self.table[j] + b.eval(x)) * dt + sig.eval(x) * sq * stream.normal();
            if !x.is_finite() {
                return Err(Error::Simulation {
                    index: self.steps_done + j + 1,
                });
            }
            out[j + 1] = x;
        }
        self.x = x;
        self.steps_done += s;
        Ok(())
    }

    /// Advances `periods` whole periods without storing the trajectory.
    pub fn skip_periods(&mut self, periods: usize, stream: &mut Stream) -> Result<()> {
        let s = self.table.len();
        let (b, sig) = (self.model.drift, self.model.sigma);
        let (dt, sq) = (self.dt, self.sqrt_dt);
        let mut x = self.x;
        for p in 0..periods {
            for j in 0..s {
                x += (self.table[j] + b.eval(x)) * dt + sig.eval(x) * sq * stream.normal();
            }
            if !x.is_finite() {
                return Err(Error::Simulation {
                    index: self.steps_done + (p + 1) * s,
                });
            }
        }
        self.x = x;
        self.steps_done += periods * s;
        Ok(())
    }
}

/// `S(ζ, j·dt)` for `j = 0..steps_per_period`.
pub fn signal_table(model: &DiffusionModel, zeta: f64, steps_per_period: usize) -> Vec<f64> {
    let dt = model.period() / steps_per_period as f64;
    (0..steps_per_period)
        .map(|j| model.signal.value_at_phase(j as f64 * dt, zeta))
        .collect()
}

/// Burn-in used by ergodic studies: `max(20, ⌈10/(γT)⌉)` periods for OU drift.
pub fn default_burn_in(model: &DiffusionModel) -> usize {
    match model.ou_drift() {
        Some((_, gamma)) if gamma > 0.0 => {
            let k = math::ceil(10.0 / (gamma * model.period()));
            20usize.max(k as usize)
        }
        _ => 20,
    }
}

/// Euler–Maruyama path of `n_periods` whole periods started at `x0` at time 0.
pub fn simulate_path(
    model: &DiffusionModel,
    x0: f64,
    n_periods: usize,
    steps_per_period: usize,
    seed: u64,
) -> Result<PathGrid> {
    simulate_path_after_burn_in(
        model,
        model.signal.theta,
        x0,
        0,
        n_periods,
        steps_per_period,
        seed,
    )
}

/// Simulates under `zeta`, discards `burn_in` periods, and returns the next
/// `n_periods` with the time origin reset to the end of the burn-in (a period
/// boundary, so phases are unchanged).
pub fn simulate_path_after_burn_in(
    model: &DiffusionModel,
    zeta: f64,
    x0: f64,
    burn_in: usize,
    n_periods: usize,
    steps_per_period: usize,
    seed: u64,
) -> Result<PathGrid> {
    if n_periods == 0 {
        return Err(Error::domain("n_periods must be positive"));
    }
    let mut stream = Stream::new(seed);
    let mut stepper = EulerStepper::with_phase(model, zeta, steps_per_period, x0)?;
    stepper.skip_periods(burn_in, &mut stream)?;
    let s = steps_per_period;
    let mut values = alloc::vec![0.0; n_periods * s + 1];
    for k in 0..n_periods {
        stepper.advance_period(&mut stream, &mut values[k * s..(k + 1) * s + 1])?;
    }
    let meta = model.with_theta(zeta)?;
    Ok(PathGrid {
        start_index: 0,
        dt: stepper.dt(),
        steps_per_period: s,
        values,
        model: meta,
        seed,
        scheme: Scheme::Euler,
    })
}

/// The chain of period segments `X_k = (ξ_{(k−1)T + s})_{0 ≤ s ≤ T}`.
#[derive(Debug, Clone)]
pub struct SegmentChain<'a> {
    pub segments: Vec<&'a [f64]>,
}

impl SegmentChain<'_> {
    pub fn count(&self) -> usize {
        self.segments.len()
    }
}

/// Splits a whole-period path into borrowed period segments; consecutive
/// segments share their boundary grid point.
pub fn extract_segments(path: &PathGrid) -> Result<SegmentChain<'_>> {
    let n = path.whole_periods()?;
    let s = path.steps_per_period;
    let segments = (0..n)
        .map(|k| &path.values[k * s..(k + 1) * s + 1])
        .collect();
    Ok(SegmentChain { segments })
}

/// Parameters of the small-time fluctuation probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationProbe {
    pub t1: f64,
    pub delta: f64,
    /// Exponent `λ ∈ (0, ½)` of the exceedance level `Δ^λ`.
    pub lambda_exp: f64,
    /// Exponent `η ∈ (½, 1 − λ)` of the localisation level `Δ^{−η}`.
    pub eta_exp: f64,
    pub replicates: usize,
    pub seed: u64,
    pub steps_per_period: usize,
    /// Sub-steps used to resolve the supremum over `[t1, t1 + Δ]`.
    pub window_steps: usize,
}

impl FluctuationProbe {
    fn validate(&self) -> Result<()> {
        if !(self.lambda_exp > 0.0 && self.lambda_exp < 0.5) {
            return Err(Error::domain("λ must lie in (0, 1/2)"));
        }
        if !(self.eta_exp > 0.5 && self.eta_exp < 1.0 - self.lambda_exp) {
            return Err(Error::domain("η must lie in (1/2, 1 − λ)"));
        }
        if !(self.delta > 0.0) || !(self.t1 >= 0.0) {
            return Err(Error::domain("need Δ > 0 and t1 ≥ 0"));
        }
        if math::powf(self.delta, self.lambda_exp) >= math::powf(self.delta, -self.eta_exp) {
            return Err(Error::domain("Δ too large: Δ^λ must be below Δ^(−η)"));
        }
        if self.replicates == 0 || self.window_steps == 0 || self.steps_per_period == 0 {
            return Err(Error::domain("replicates and step counts must be positive"));
        }
        Ok(())
    }
}

/// Monte Carlo estimate of
/// `P(sup_{t1 ≤ t ≤ t1+Δ} |ξ_t − ξ_{t1}| > Δ^λ, |ξ_{t1}| ≤ Δ^{−η})`
/// for paths started from an empirical draw of the period-sampled chain.
pub fn fluctuation_probe<E: Executor>(
    model: &DiffusionModel,
    probe: &FluctuationProbe,
    exec: &E,
) -> Result<Estimate> {
    probe.validate()?;
    // empirical stationary pool from one long path
    let pool_path = simulate_path_after_burn_in(
        model,
        model.signal.theta,
        0.0,
        default_burn_in(model),
        1000,
        probe.steps_per_period,
        crate::rng::seed_stream(probe.seed, u64::MAX),
    )?;
    let pool = pool_path.phase_samples(0.0)?;
    let level = math::powf(probe.delta, probe.lambda_exp);
    let bound = math::powf(probe.delta, -probe.eta_exp);
    let h = model.period() / probe.steps_per_period as f64;
    let hits = map_chunked(exec, probe.replicates, 64, |range, out| {
        for i in range {
            out.push(probe_once(model, probe, &pool, h, level, bound, i as u64));
        }
    });
    let mut count = 0usize;
    for r in hits {
        if r? {
            count += 1;
        }
    }
    let n = probe.replicates as f64;
    let p = count as f64 / n;
    Ok(Estimate::new(p, math::sqrt(p * (1.0 - p) / n)))
}

fn probe_once(
    model: &DiffusionModel,
    probe: &FluctuationProbe,
    pool: &[f64],
    h: f64,
    level: f64,
    bound: f64,
    index: u64,
) -> Result<bool> {
    let mut stream = Stream::for_replicate(probe.seed, index);
    let theta = model.signal.theta;
    let pick = (stream.next_u64() % pool.len() as u64) as usize;
    let mut x = pool[pick];
    let mut t = 0.0;
    let step = |x: &mut f64, t: &mut f64, dt: f64, stream: &mut Stream| {
        *x += model.drift_at(*t, *x, theta) * dt
            + model.sigma.eval(*x) * math::sqrt(dt) * stream.normal();
        *t += dt;
    };
    let full = math::floor(probe.t1 / h) as usize;
    for _ in 0..full {
        step(&mut x, &mut t, h, &mut stream);
    }
    let rest = probe.t1 - full as f64 * h;
    if rest > 0.0 {
        step(&mut x, &mut t, rest, &mut stream);
    }
    let x1 = x;
    let hw = probe.delta / probe.window_steps as f64;
    let mut sup: f64 = 0.0;
    for _ in 0..probe.window_steps {
        step(&mut x, &mut t, hw, &mut stream);
        sup = sup.max((x - x1).abs());
    }
    if !x.is_finite() {
        return Err(Error::Simulation {
            index: index as usize,
        });
    }
    Ok(sup > level && x1.abs() <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefFn, PeriodicFn, SignalSpec};
    use crate::runner::Sequential;
    use crate::stats::Summary;

    fn ou(lambda: f64, lambda_star: f64) -> DiffusionModel {
        let sig = SignalSpec::new_allow_null(
            PeriodicFn::constant(lambda, 10.0).unwrap(),
            PeriodicFn::constant(lambda_star, 10.0).unwrap(),
            10.0,
            3.0,
            4.0,
        )
        .unwrap();
        DiffusionModel::new(
            sig,
            CoefFn::Affine {
                beta: 0.0,
                gamma: 1.0,
            },
            CoefFn::Constant(1.0),
        )
        .unwrap()
    }

    #[test]
    fn path_length_and_determinism() {
        let m = ou(1.0, 2.0);
        let a = simulate_path(&m, 0.0, 3, 200, 9).unwrap();
        let b = simulate_path(&m, 0.0, 3, 200, 9).unwrap();
        assert_eq!(a.len(), 3 * 200 + 1);
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = simulate_path(&m, 0.0, 3, 200, 10).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn segments_share_boundary_points() {
        let m = ou(1.0, 2.0);
        let p = simulate_path(&m, 0.0, 5, 1000, 1).unwrap();
        let chain = extract_segments(&p).unwrap();
        assert_eq!(chain.count(), 5);
        assert!(chain.segments.iter().all(|s| s.len() == 1001));
        for k in 0..4 {
            assert_eq!(chain.segments[k][1000], chain.segments[k + 1][0]);
        }
        let one = simulate_path(&m, 0.0, 1, 1000, 1).unwrap();
        assert_eq!(extract_segments(&one).unwrap().count(), 1);
    }

    #[test]
    fn partial_period_paths_are_rejected() {
        let m = ou(1.0, 2.0);
        let mut p = simulate_path(&m, 0.0, 2, 100, 1).unwrap();
        p.values.truncate(150);
        assert!(extract_segments(&p).is_err());
    }

    #[test]
    fn non_finite_state_reports_index() {
        let sig = SignalSpec::new(
            PeriodicFn::constant(0.0, 1.0).unwrap(),
            PeriodicFn::constant(1.0, 1.0).unwrap(),
            1.0,
            0.3,
            0.2,
        )
        .unwrap();
        // explosive linear drift with a coarse grid overflows quickly
        let m = DiffusionModel::new(
            sig,
            CoefFn::Affine {
                beta: 0.0,
                gamma: -2000.0,
            },
            CoefFn::Constant(1.0),
        )
        .unwrap();
        match simulate_path(&m, 1.0, 50, 10, 3) {
            Err(Error::Simulation { index }) => assert!(index > 0),
            other => panic!("expected simulation error, got {other:?}"),
        }
    }

    #[test]
    fn symmetric_ou_has_zero_mean() {
        let m = ou(0.0, 0.0);
        let p = simulate_path(&m, 0.0, 1001, 100, 77).unwrap();
        let xs = &p.phase_samples(0.0).unwrap()[100..];
        let s = Summary::of(xs).unwrap();
        assert!(s.mean.abs() < 3.0 * s.se_mean, "{} ± {}", s.mean, s.se_mean);
    }

    #[test]
    fn constant_input_shifts_mean_to_c_over_gamma() {
        let m = ou(1.5, 0.0);
        let p = simulate_path(&m, 0.0, 1001, 100, 78).unwrap();
        let xs = &p.phase_samples(0.0).unwrap()[100..];
        let s = Summary::of(xs).unwrap();
        assert!(
            (s.mean - 1.5).abs() < 3.0 * s.se_mean,
            "{} ± {}",
            s.mean,
            s.se_mean
        );
    }

    #[test]
    fn probe_rejects_bad_exponents() {
        let m = ou(1.0, 2.0);
        let mut p = FluctuationProbe {
            t1: 1.0,
            delta: 0.5,
            lambda_exp: 0.3,
            eta_exp: 0.6,
            replicates: 10,
            seed: 1,
            steps_per_period: 100,
            window_steps: 50,
        };
        p.eta_exp = 0.8;
        assert!(fluctuation_probe(&m, &p, &Sequential).is_err());
        p.eta_exp = 0.6;
        p.lambda_exp = 0.6;
        assert!(fluctuation_probe(&m, &p, &Sequential).is_err());
    }
}
