//! `J_θ`, the grid MLE and the uniform-prior Bayes estimator of the phase, and
//! Monte Carlo studies of their rescaled errors.

use alloc::vec::Vec;

use crate::ergodic::{inverse_sigma_sq_mean, Observable};
use crate::error::{Error, Result};
use crate::likelihood::{simulate_profile, FastCurve, PhaseProfile};
use crate::math;
use crate::model::DiffusionModel;
use crate::quadrature::log_trapezoid_mean;
use crate::rng::seed_stream;
use crate::runner::{map_chunked, Executor};
use crate::simulate::{default_burn_in, simulate_path_after_burn_in, PathGrid};
use crate::stats::{Estimate, Summary};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JMode {
    /// Invariant marginals from the Gaussian closed form (constant σ) or the
    /// periodic Fokker–Planck solution.
    Analytic,
    /// Per-replicate averages of `1/σ²(ξ_{kT+r})` over `n_periods` periods.
    Empirical {
        n_periods: usize,
        replicates: usize,
        seed: u64,
        steps_per_period: usize,
    },
}

/// `J_θ = λ*(θ)² (μP_{0,θ})(1/σ²) + λ*(θ+a)² (μP_{0,θ+a})(1/σ²)`.
pub fn j_theta<E: Executor>(
    model: &DiffusionModel,
    theta: f64,
    mode: JMode,
    exec: &E,
) -> Result<Estimate> {
    let sig = &model.signal;
    sig.check_theta(theta)?;
    let m = model.with_theta(theta)?;
    let r1 = theta;
    let r2 = theta + sig.duration;
    let l1 = sig.lambda_star.value_at_phase(r1);
    let l2 = sig.lambda_star.value_at_phase(r2);
    match mode {
        JMode::Analytic => {
            if !model.h1_guaranteed() {
                return Err(Error::unsupported(
                    "analytic J_θ needs affine drift with γ > 0",
                ));
            }
            let g1 = inverse_sigma_sq_mean(&m, r1)?;
            let g2 = inverse_sigma_sq_mean(&m, r2)?;
            Ok(Estimate::exact(l1 * l1 * g1 + l2 * l2 * g2))
        }
        JMode::Empirical {
            n_periods,
            replicates,
            seed,
            steps_per_period,
        } => {
            if replicates < 2 || n_periods == 0 {
                return Err(Error::domain(
                    "empirical J_θ needs ≥ 2 replicates and ≥ 1 period",
                ));
            }
            let f = Observable::InverseSquare(model.sigma);
            let burn_in = default_burn_in(&m);
            let per_rep = map_chunked(exec, replicates, 4, |range, out| {
                for i in range {
                    let v = simulate_path_after_burn_in(
                        &m,
                        theta,
                        0.0,
                        burn_in,
                        n_periods,
                        steps_per_period,
                        seed_stream(seed, i as u64),
                    )
                    .and_then(|p| {
                        let a = p.phase_samples(r1)?;
                        let b = p.phase_samples(r2)?;
                        let ma = a.iter().map(|&x| f.eval(x)).sum::<f64>() / a.len() as f64;
                        let mb = b.iter().map(|&x| f.eval(x)).sum::<f64>() / b.len() as f64;
                        Ok(l1 * l1 * ma + l2 * l2 * mb)
                    });
                    out.push(v);
                }
            });
            let vals = per_rep.into_iter().collect::<Result<Vec<f64>>>()?;
            Ok(Summary::of(&vals)?.mean_estimate())
        }
    }
}

/// Grid `{k·dt}` strictly inside `Θ`, i.e. `[ε, T−a−ε]` with `ε = dt`.
pub fn zeta_grid(model: &DiffusionModel, steps_per_period: usize) -> Vec<f64> {
    let dt = model.period() / steps_per_period as f64;
    let sig = &model.signal;
    (1..)
        .map(|k| k as f64 * dt)
        .take_while(|&z| z < sig.theta_max())
        .filter(|&z| sig.contains(z))
        .collect()
}

/// Smallest grid value attaining the maximum of `logl`.
pub fn mle_on_curve(zetas: &[f64], logl: &[f64]) -> Result<f64> {
    if zetas.is_empty() || zetas.len() != logl.len() {
        return Err(Error::domain("empty or mismatched grid"));
    }
    let mut best = 0;
    for i in 1..zetas.len() {
        let better = logl[i] > logl[best] || (logl[i] == logl[best] && zetas[i] < zetas[best]);
        if better {
            best = i;
        }
    }
    if !logl[best].is_finite() {
        return Err(Error::Numeric("log-likelihood is not finite".into()));
    }
    Ok(zetas[best])
}

/// Posterior mean under the uniform prior, trapezoid rule in the log domain.
pub fn bayes_on_curve(zetas: &[f64], logl: &[f64]) -> Result<f64> {
    if zetas.is_empty() || zetas.len() != logl.len() {
        return Err(Error::domain("empty or mismatched grid"));
    }
    if zetas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("grid must be strictly increasing"));
    }
    Ok(log_trapezoid_mean(zetas, logl)?.0)
}

fn check_grid(model: &DiffusionModel, zetas: &[f64]) -> Result<()> {
    if zetas.is_empty() {
        return Err(Error::domain("empty parameter grid"));
    }
    if zetas.iter().any(|&z| !model.signal.contains(z)) {
        return Err(Error::domain("parameter grid leaves Θ"));
    }
    Ok(())
}

fn curve_values(curve: &FastCurve, zetas: &[f64]) -> Vec<f64> {
    zetas.iter().map(|&z| curve.log_lr(z)).collect()
}

/// Grid MLE with reference `ζ₀` = midpoint of `Θ`.
pub fn mle(path: &PathGrid, model: &DiffusionModel, zetas: &[f64]) -> Result<f64> {
    check_grid(model, zetas)?;
    let prof = PhaseProfile::from_path(path, model, model.signal.midpoint())?;
    mle_on_curve(zetas, &curve_values(&prof.curve(), zetas))
}

/// Uniform-prior Bayes estimator on the grid, reference `ζ₀` = midpoint of `Θ`.
pub fn bayes(path: &PathGrid, model: &DiffusionModel, zetas: &[f64]) -> Result<f64> {
    check_grid(model, zetas)?;
    if zetas.len() == 1 {
        return Ok(zetas[0]);
    }
    let prof = PhaseProfile::from_path(path, model, model.signal.midpoint())?;
    bayes_on_curve(zetas, &curve_values(&prof.curve(), zetas))
}

/// One replicate of a Monte Carlo study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub replicate: usize,
    pub theta_hat: f64,
    pub theta_star: f64,
    /// Parameter the data were simulated under, `θ + u/n`.
    pub true_theta: f64,
    pub n_periods: usize,
    pub err_mle_rescaled: f64,
    pub err_be_rescaled: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: Estimate,
    pub variance: Estimate,
    /// Quadratic risk `E[err²]`.
    pub second_moment: Estimate,
}

impl MomentSummary {
    fn of(xs: &[f64]) -> Result<Self> {
        let s = Summary::of(xs)?;
        Ok(Self {
            mean: s.mean_estimate(),
            variance: s.variance_estimate(),
            second_moment: s.second_moment_estimate(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub theta: f64,
    pub n_periods: usize,
    pub replicates: usize,
    pub seed: u64,
    pub steps_per_period: usize,
    /// `None` uses the model default.
    pub burn_in: Option<usize>,
    /// Simulate under `θ + u/n` and measure errors against it.
    pub contiguous_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub records: Vec<EstimateRecord>,
    pub mle: MomentSummary,
    pub bayes: MomentSummary,
    pub true_theta: f64,
    pub j: f64,
}

impl StudySummary {
    /// `(26, 16ζ(3))` divided by `J²`: the limit variances of the rescaled errors.
    pub fn targets(&self) -> (f64, f64) {
        let j2 = self.j * self.j;
        (26.0 / j2, 16.0 * math::ZETA_3 / j2)
    }
}

pub fn mc_study<E: Executor>(
    model: &DiffusionModel,
    cfg: &StudyConfig,
    exec: &E,
) -> Result<StudySummary> {
    let sig = &model.signal;
    sig.check_theta(cfg.theta)?;
    if cfg.replicates < 2 || cfg.n_periods == 0 || cfg.steps_per_period == 0 {
        return Err(Error::domain(
            "need replicates ≥ 2, n_periods ≥ 1, steps_per_period ≥ 1",
        ));
    }
    let n = cfg.n_periods as f64;
    let truth = cfg.theta + cfg.contiguous_u.unwrap_or(0.0) / n;
    sig.check_theta(truth)?;
    let base = model.with_theta(truth)?;
    let zetas = zeta_grid(model, cfg.steps_per_period);
    check_grid(model, &zetas)?;
    let reference = sig.midpoint();
    let burn_in = cfg.burn_in.unwrap_or_else(|| default_burn_in(&base));
    let records = map_chunked(exec, cfg.replicates, 4, |range, out| {
        let mut logl = alloc::vec![0.0; zetas.len()];
        for i in range {
            let seed = seed_stream(cfg.seed, i as u64);
            let rec = simulate_profile(
                &base,
                truth,
                reference,
                burn_in,
                cfg.n_periods,
                cfg.steps_per_period,
                seed,
            )
            .and_then(|prof| {
                let c = prof.curve();
                for (l, &z) in logl.iter_mut().zip(&zetas) {
                    *l = c.log_lr(z);
                }
                let th = mle_on_curve(&zetas, &logl)?;
                let ts = bayes_on_curve(&zetas, &logl)?;
                Ok(EstimateRecord {
                    replicate: i,
                    theta_hat: th,
                    theta_star: ts,
                    true_theta: truth,
                    n_periods: cfg.n_periods,
                    err_mle_rescaled: n * (th - truth),
                    err_be_rescaled: n * (ts - truth),
                    seed,
                })
            });
            out.push(rec);
        }
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let e1: Vec<f64> = records.iter().map(|r| r.err_mle_rescaled).collect();
    let e2: Vec<f64> = records.iter().map(|r| r.err_be_rescaled).collect();
    let j = j_theta(
        model,
        cfg.theta,
        JMode::Analytic,
        &crate::runner::Sequential,
    )
    .map(|e| e.value)
    .unwrap_or(f64::NAN);
    Ok(StudySummary {
        mle: MomentSummary::of(&e1)?,
        bayes: MomentSummary::of(&e2)?,
        records,
        true_theta: truth,
        j,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefFn, PeriodicFn, SignalSpec};
    use crate::runner::Sequential;

    fn model(sigma: f64, lambda_star: f64) -> DiffusionModel {
        let sig = SignalSpec::new(
            PeriodicFn::constant(1.0, 1.0).unwrap(),
            PeriodicFn::constant(lambda_star, 1.0).unwrap(),
            1.0,
            0.25,
            0.375,
        )
        .unwrap();
        DiffusionModel::new(
            sig,
            CoefFn::Affine {
                beta: 0.0,
                gamma: 1.0,
            },
            CoefFn::Constant(sigma),
        )
        .unwrap()
    }

    #[test]
    fn j_constant_coefficients() {
        let j = j_theta(&model(1.0, 2.0), 0.375, JMode::Analytic, &Sequential).unwrap();
        assert_eq!(j.value, 8.0);
        let j = j_theta(&model(0.5, 3.0), 0.1, JMode::Analytic, &Sequential).unwrap();
        assert!((j.value - 2.0 * 9.0 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn tie_break_takes_smallest() {
        assert_eq!(
            mle_on_curve(&[0.1, 0.2, 0.3], &[1.0, 2.0, 2.0]).unwrap(),
            0.2
        );
        assert_eq!(mle_on_curve(&[0.3, 0.1], &[5.0, 5.0]).unwrap(), 0.1);
        assert_eq!(mle_on_curve(&[0.4], &[-3.0]).unwrap(), 0.4);
        assert!(mle_on_curve(&[], &[]).is_err());
    }

    #[test]
    fn flat_curve_bayes_is_grid_midpoint() {
        let z: Vec<f64> = (1..100).map(|k| k as f64 * 0.01).collect();
        let b = bayes_on_curve(&z, &alloc::vec![0.0; z.len()]).unwrap();
        assert!((b - 0.5).abs() < 1e-14);
    }

    #[test]
    fn grid_is_inside_theta() {
        let m = model(1.0, 2.0);
        let g = zeta_grid(&m, 64);
        assert_eq!(g.first().copied(), Some(1.0 / 64.0));
        assert_eq!(g.last().copied(), Some(0.75 - 1.0 / 64.0));
        assert_eq!(g.len(), 47);
    }
}
