//! Periodic marginals `μ P_{0,r}` of the oscillating regime by solving the
//! forward Kolmogorov equation
//!
//! ```text
//! ∂p/∂t = −∂x[(S(θ,t) + b(x)) p] + ½ ∂xx[σ²(x) p]
//! ```
//!
//! over whole periods until the start-of-period density is a fixed point.
//! Finite volumes in x with zero-flux walls, Crank–Nicolson in t. Jumps of `S`
//! and the requested phases are time nodes, so no step straddles a jump.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::model::DiffusionModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FokkerPlanckConfig {
    pub cells: usize,
    pub steps_per_period: usize,
    /// Half-width of the domain beyond the range of drift equilibria, in
    /// stationary standard deviations.
    pub half_width_sd: f64,
    /// L¹ change of the start-of-period density that counts as converged.
    pub tol: f64,
    pub max_periods: usize,
}

impl Default for FokkerPlanckConfig {
    fn default() -> Self {
        Self {
            cells: 1600,
            steps_per_period: 4000,
            half_width_sd: 10.0,
            tol: 1e-12,
            max_periods: 5000,
        }
    }
}

/// Densities on a cell-centred grid at the requested phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicMarginals {
    pub x: Vec<f64>,
    pub h: f64,
    pub phases: Vec<f64>,
    pub densities: Vec<Vec<f64>>,
    pub periods_used: usize,
}

impl PeriodicMarginals {
    /// Requires affine drift with `γ > 0`.
    pub fn solve(model: &DiffusionModel, phases: &[f64], cfg: &FokkerPlanckConfig) -> Result<Self> {
        let (beta, gamma) = match model.ou_drift() {
            Some((b, g)) if g > 0.0 => (b, g),
            _ => {
                return Err(Error::unsupported(
                    "periodic marginals need affine drift with γ > 0",
                ))
            }
        };
        let period = model.period();
        if phases.iter().any(|&r| !(0.0..period).contains(&r)) {
            return Err(Error::domain("phases must lie in [0, T)"));
        }
        if cfg.cells < 16 || cfg.steps_per_period < 4 {
            return Err(Error::domain("Fokker–Planck grid too coarse"));
        }
        let sig = &model.signal;
        let (lmin, lmax) = sig.lambda.range();
        let (_, smax_star) = sig.lambda_star.range();
        let (_, sig_hi) = model.sigma.sigma_range()?;
        let sd = sig_hi / math::sqrt(2.0 * gamma);
        let lo = (lmin + beta) / gamma - cfg.half_width_sd * sd;
        let hi = (lmax + smax_star + beta) / gamma + cfg.half_width_sd * sd;
        let n = cfg.cells;
        let h = (hi - lo) / n as f64;
        let x: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
        let diff: Vec<f64> = x
            .iter()
            .map(|&xi| {
                let v = model.sigma.eval(xi);
                0.5 * v * v
            })
            .collect();
        let faces: Vec<f64> = (0..n - 1).map(|i| lo + (i + 1) as f64 * h).collect();

        // time nodes over one period
        let mut nodes: Vec<f64> = (0..=cfg.steps_per_period)
            .map(|k| period * k as f64 / cfg.steps_per_period as f64)
            .collect();
        nodes.push(sig.theta);
        nodes.push(sig.theta + sig.duration);
        nodes.extend_from_slice(phases);
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * period);
        *nodes.last_mut().unwrap() = period;

        let mut p: Vec<f64> = {
            let m0 = 0.5 * (lo + hi);
            let v0 = sd * sd * 4.0;
            let raw: Vec<f64> = x
                .iter()
                .map(|&xi| math::exp(-(xi - m0) * (xi - m0) / (2.0 * v0)))
                .collect();
            let z: f64 = raw.iter().sum::<f64>() * h;
            raw.iter().map(|r| r / z).collect()
        };

        let mut stepper = CnStepper::new(n);
        let mut periods_used = 0;
        loop {
            let start = p.clone();
            for w in nodes.windows(2) {
                let tm = 0.5 * (w[0] + w[1]);
                let s = sig.value_at_phase(tm, sig.theta);
                stepper.step(&mut p, w[1] - w[0], h, &faces, &diff, s + beta, gamma);
            }
            periods_used += 1;
            let change: f64 = p
                .iter()
                .zip(&start)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * h;
            if change < cfg.tol {
                break;
            }
            if periods_used >= cfg.max_periods {
                return Err(Error::Numeric("periodic regime did not converge".into()));
            }
        }

        // one recorded period from the fixed point
        let mut densities = vec![Vec::new(); phases.len()];
        let mut t = 0.0;
        let record = |t: f64, p: &[f64], out: &mut Vec<Vec<f64>>| {
            for (k, &r) in phases.iter().enumerate() {
                if (r - t).abs() < 1e-14 * period {
                    out[k] = p.to_vec();
                }
            }
        };
        record(t, &p, &mut densities);
        for w in nodes.windows(2) {
            let tm = 0.5 * (w[0] + w[1]);
            let s = sig.value_at_phase(tm, sig.theta);
            stepper.step(&mut p, w[1] - w[0], h, &faces, &diff, s + beta, gamma);
            t = w[1];
            record(t, &p, &mut densities);
        }
        if densities.iter().any(|d| d.is_empty()) {
            return Err(Error::Numeric(
                "requested phase missed by the time grid".into(),
            ));
        }
        Ok(Self {
            x,
            h,
            phases: phases.to_vec(),
            densities,
            periods_used,
        })
    }

    /// `∫ f(x) p_k(x) dx` by the midpoint rule on the cells.
    pub fn expectation<F: Fn(f64) -> f64>(&self, k: usize, f: F) -> f64 {
        let d = &self.densities[k];
        let mut acc = 0.0;
        for (xi, pi) in self.x.iter().zip(d) {
            acc += f(*xi) * pi;
        }
        acc * self.h
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.expectation(k, |_| 1.0)
    }
}

/// Crank–Nicolson stepper for the finite-volume generator. The operator and
/// its LU factors are rebuilt only when the drift offset or step length change.
struct CnStepper {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    // Thomas factors of I − ½τL
    c: Vec<f64>,
    inv_b: Vec<f64>,
    key: Option<(f64, f64)>,
}

impl CnStepper {
    fn new(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            rhs: vec![0.0; n],
            c: vec![0.0; n],
            inv_b: vec![0.0; n],
            key: None,
        }
    }

    /// Flux through face `i + ½` is `α_i p_i + β_i p_{i+1}` with central
    /// advection `offset − γx` and the `∂x(D p)` diffusion form.
    fn build(&mut self, tau: f64, h: f64, faces: &[f64], diff: &[f64], offset: f64, gamma: f64) {
        let n = self.diag.len();
        for i in 0..n {
            self.lower[i] = 0.0;
            self.diag[i] = 0.0;
            self.upper[i] = 0.0;
        }
        for (i, &f) in faces.iter().enumerate() {
            let a = offset - gamma * f;
            let alpha = 0.5 * a + diff[i] / h;
            let beta = 0.5 * a - diff[i + 1] / h;
            // −F/h into row i, +F/h into row i+1
            self.diag[i] -= alpha / h;
            self.upper[i] -= beta / h;
            self.lower[i + 1] += alpha / h;
            self.diag[i + 1] += beta / h;
        }
        let half = 0.5 * tau;
        let b0 = 1.0 - half * self.diag[0];
        self.inv_b[0] = 1.0 / b0;
        self.c[0] = -half * self.upper[0] / b0;
        for i in 1..n {
            let a = -half * self.lower[i];
            let b = 1.0 - half * self.diag[i] - a * self.c[i - 1];
            self.inv_b[i] = 1.0 / b;
            self.c[i] = if i + 1 < n {
                -half * self.upper[i] / b
            } else {
                0.0
            };
        }
        self.key = Some((offset, tau));
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        p: &mut [f64],
        tau: f64,
        h: f64,
        faces: &[f64],
        diff: &[f64],
        offset: f64,
        gamma: f64,
    ) {
        // node spacings agree only up to rounding
        let fresh = match self.key {
            Some((o, t)) => o != offset || (t - tau).abs() > 1e-12 * tau,
            None => true,
        };
        if fresh {
            self.build(tau, h, faces, diff, offset, gamma);
        }
        let n = p.len();
        // the cached step length, so both halves of the scheme match
        let half = 0.5 * self.key.map_or(tau, |k| k.1);
        for i in 0..n {
            let mut lp = self.diag[i] * p[i];
            if i > 0 {
                lp += self.lower[i] * p[i - 1];
            }
            if i + 1 < n {
                lp += self.upper[i] * p[i + 1];
            }
            self.rhs[i] = p[i] + half * lp;
        }
        p[0] = self.rhs[0] * self.inv_b[0];
        for i in 1..n {
            let a = -half * self.lower[i];
            p[i] = (self.rhs[i] - a * p[i - 1]) * self.inv_b[i];
        }
        for i in (0..n - 1).rev() {
            p[i] -= self.c[i] * p[i + 1];
        }
    }
}
