//! Girsanov log-likelihood ratios on the simulation grid.
//!
//! With increments `dB_i` recovered under a reference `ζ`,
//!
//! ```text
//! log L^{ζ'/ζ} = Σ δ_i dB_i − ½ Σ δ_i² dt,   δ_i = (S(ζ', t_i) − S(ζ, t_i)) / σ(ξ_{t_i})
//! ```
//!
//! with `t_i` the left end of step `i`. This is exactly the ratio of the Euler
//! transition densities, so the chain rule holds on the grid with or without
//! re-recovering the increments.
//!
//! Since `S(ζ',·) − S(ζ,·) = λ*·(1_{(ζ',ζ'+a)} − 1_{(ζ,ζ+a)})`, the whole curve
//! `ζ' ↦ log L^{ζ'/ζ}` only needs the per-phase sums
//! `c_j = Σ_k λ*(t_j) σ^{−1} dB` and `q_j = Σ_k λ*(t_j)² σ^{−2} dt`; see
//! [`PhaseProfile`].

use alloc::vec;
use alloc::vec::Vec;

use crate::ergodic::{inverse_sigma_sq_mean, windowed_integral};
use crate::error::{Error, Result};
use crate::math;
use crate::model::DiffusionModel;
use crate::rng::Stream;
use crate::runner::{map_chunked, Executor};
use crate::simulate::{default_burn_in, signal_table, EulerStepper, PathGrid};
use crate::stats::{covariance_with_se, Estimate, Summary};

fn check_grid(path: &PathGrid, model: &DiffusionModel) -> Result<()> {
    let dt = model.period() / path.steps_per_period as f64;
    if (dt - path.dt).abs() > 1e-15 * dt.max(1.0) {
        return Err(Error::domain("path grid does not divide the model period"));
    }
    if path.len() < 2 {
        return Err(Error::domain("path needs at least one step"));
    }
    Ok(())
}

/// `dB_i = (ξ_{i+1} − ξ_i − [S(ζ,t_i) + b(ξ_i)] dt) / σ(ξ_i)`.
pub fn recover_increments(path: &PathGrid, model: &DiffusionModel, zeta: f64) -> Result<Vec<f64>> {
    model.signal.check_theta(zeta)?;
    check_grid(path, model)?;
    let table = signal_table(model, zeta, path.steps_per_period);
    let dt = path.dt;
    Ok(path
        .values
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let x = w[0];
            (w[1] - x - (table[path.phase_index(i)] + model.drift.eval(x)) * dt)
                / model.sigma.eval(x)
        })
        .collect())
}

/// `log L^{ζ'/ζ}` over the whole path, summed step by step.
pub fn log_lr(path: &PathGrid, model: &DiffusionModel, zeta_prime: f64, zeta: f64) -> Result<f64> {
    model.signal.check_theta(zeta_prime)?;
    let db = recover_increments(path, model, zeta)?;
    if zeta_prime == zeta {
        return Ok(0.0);
    }
    let s = path.steps_per_period;
    let t1 = signal_table(model, zeta_prime, s);
    let t0 = signal_table(model, zeta, s);
    let dt = path.dt;
    let (mut lin, mut quad) = (0.0, 0.0);
    for (i, d) in db.iter().enumerate() {
        let j = path.phase_index(i);
        let diff = t1[j] - t0[j];
        if diff != 0.0 {
            let delta = diff / model.sigma.eval(path.values[i]);
            lin += delta * d;
            quad += delta * delta;
        }
    }
    Ok(lin - 0.5 * quad * dt)
}

/// Phase indices `j` with `ζ < j·dt < ζ + a`, as the half-open range `lo..hi`.
pub fn window_range(model: &DiffusionModel, steps_per_period: usize, zeta: f64) -> (usize, usize) {
    let sig = &model.signal;
    let dt = model.period() / steps_per_period as f64;
    let on = |j: usize| sig.switched_on(j as f64 * dt, zeta);
    let first_above = |x: f64, strict: bool| -> usize {
        let mut j = (math::floor(x / dt).max(0.0) as usize).min(steps_per_period);
        while j > 0 && ((j - 1) as f64 * dt > x || (!strict && (j - 1) as f64 * dt >= x)) {
            j -= 1;
        }
        while j < steps_per_period && (j as f64 * dt < x || (strict && j as f64 * dt == x)) {
            j += 1;
        }
        j
    };
    let lo = first_above(zeta, true);
    let hi = first_above(zeta + sig.duration, false);
    debug_assert!((lo..hi).all(on));
    (lo, hi.max(lo))
}

/// Per-phase sufficient statistics of the likelihood curve with respect to a
/// fixed reference `ζ₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfile {
    pub model: DiffusionModel,
    pub reference: f64,
    pub steps_per_period: usize,
    pub periods: usize,
    c: Vec<f64>,
    q: Vec<f64>,
    ref_table: Vec<f64>,
    lstar: Vec<f64>,
}

impl PhaseProfile {
    pub fn new(model: &DiffusionModel, reference: f64, steps_per_period: usize) -> Result<Self> {
        model.signal.check_theta(reference)?;
        if steps_per_period == 0 {
            return Err(Error::domain("steps_per_period must be positive"));
        }
        let dt = model.period() / steps_per_period as f64;
        let lstar = (0..steps_per_period)
            .map(|j| model.signal.lambda_star.value_at_phase(j as f64 * dt))
            .collect();
        Ok(Self {
            model: *model,
            reference,
            steps_per_period,
            periods: 0,
            c: vec![0.0; steps_per_period],
            q: vec![0.0; steps_per_period],
            ref_table: signal_table(model, reference, steps_per_period),
            lstar,
        })
    }

    pub fn dt(&self) -> f64 {
        self.model.period() / self.steps_per_period as f64
    }

    /// Adds one period `seg` (length `steps_per_period + 1`) that starts on a
    /// period boundary.
    pub fn add_period(&mut self, seg: &[f64]) {
        debug_assert_eq!(seg.len(), self.steps_per_period + 1);
        let dt = self.dt();
        let (b, sig) = (self.model.drift, self.model.sigma);
        for j in 0..self.steps_per_period {
            let x = seg[j];
            let inv = 1.0 / sig.eval(x);
            let db = (seg[j + 1] - x - (self.ref_table[j] + b.eval(x)) * dt) * inv;
            let w = self.lstar[j] * inv;
            self.c[j] += w * db;
            self.q[j] += w * w * dt;
        }
        self.periods += 1;
    }

    pub fn from_path(path: &PathGrid, model: &DiffusionModel, reference: f64) -> Result<Self> {
        check_grid(path, model)?;
        let n = path.whole_periods()?;
        let s = path.steps_per_period;
        let mut p = Self::new(model, reference, s)?;
        for k in 0..n {
            p.add_period(&path.values[k * s..(k + 1) * s + 1]);
        }
        Ok(p)
    }

    /// Prefix sums for O(1) evaluation of `log L^{ζ/ζ₀}`.
    pub fn curve(&self) -> FastCurve {
        let s = self.steps_per_period;
        let mut pc = Vec::with_capacity(s + 1);
        let mut pq = Vec::with_capacity(s + 1);
        let (mut ac, mut aq) = (0.0, 0.0);
        pc.push(0.0);
        pq.push(0.0);
        for j in 0..s {
            ac += self.c[j];
            aq += self.q[j];
            pc.push(ac);
            pq.push(aq);
        }
        FastCurve {
            model: self.model,
            steps_per_period: s,
            reference: self.reference,
            ref_window: window_range(&self.model, s, self.reference),
            prefix_c: pc,
            prefix_q: pq,
        }
    }
}

/// `ζ ↦ log L^{ζ/ζ₀}` from prefix sums of a [`PhaseProfile`].
#[derive(Debug, Clone, PartialEq)]
pub struct FastCurve {
    model: DiffusionModel,
    steps_per_period: usize,
    pub reference: f64,
    ref_window: (usize, usize),
    prefix_c: Vec<f64>,
    prefix_q: Vec<f64>,
}

impl FastCurve {
    fn sum(prefix: &[f64], (lo, hi): (usize, usize)) -> f64 {
        if hi > lo {
            prefix[hi] - prefix[lo]
        } else {
            0.0
        }
    }

    /// `log L^{ζ/ζ₀}` for `ζ ∈ Θ` (unchecked).
    pub fn log_lr(&self, zeta: f64) -> f64 {
        let w = window_range(&self.model, self.steps_per_period, zeta);
        let r = self.ref_window;
        if w == r {
            return 0.0;
        }
        let inter = (w.0.max(r.0), w.1.min(r.1));
        let lin = Self::sum(&self.prefix_c, w) - Self::sum(&self.prefix_c, r);
        let quad = Self::sum(&self.prefix_q, w) + Self::sum(&self.prefix_q, r)
            - 2.0 * Self::sum(&self.prefix_q, inter);
        lin - 0.5 * quad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMode {
    GlobalZeta,
    LocalU,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodCurve {
    pub reference: f64,
    /// `(parameter, log-likelihood ratio)`.
    pub points: Vec<(f64, f64)>,
    /// Requested parameters that fell outside the parameter space.
    pub excluded: Vec<f64>,
    pub mode: CurveMode,
    pub n_periods: usize,
}

/// 801 points spanning `[−40, 40]`.
pub fn default_u_grid() -> Vec<f64> {
    (0..=800).map(|i| -40.0 + 0.1 * i as f64).collect()
}

/// `u ↦ log Z_{n,θ}(u) = log L^{(θ+u/n)/θ}` on the path's `n` whole periods.
pub fn local_curve(
    path: &PathGrid,
    model: &DiffusionModel,
    theta: f64,
    u_grid: &[f64],
) -> Result<LikelihoodCurve> {
    let profile = PhaseProfile::from_path(path, model, theta)?;
    Ok(local_curve_from_profile(&profile, u_grid))
}

pub fn local_curve_from_profile(profile: &PhaseProfile, u_grid: &[f64]) -> LikelihoodCurve {
    let n = profile.periods;
    let theta = profile.reference;
    let curve = profile.curve();
    let sig = &profile.model.signal;
    let mut points = Vec::with_capacity(u_grid.len());
    let mut excluded = Vec::new();
    for &u in u_grid {
        let zeta = theta + u / n as f64;
        if sig.contains(zeta) {
            points.push((u, if u == 0.0 { 0.0 } else { curve.log_lr(zeta) }));
        } else {
            excluded.push(u);
        }
    }
    LikelihoodCurve {
        reference: theta,
        points,
        excluded,
        mode: CurveMode::LocalU,
        n_periods: n,
    }
}

/// Simulates `n_periods` under `truth` after `burn_in` periods (started at 0)
/// and accumulates the profile against `reference`, without storing the path.
pub fn simulate_profile(
    model: &DiffusionModel,
    truth: f64,
    reference: f64,
    burn_in: usize,
    n_periods: usize,
    steps_per_period: usize,
    seed: u64,
) -> Result<PhaseProfile> {
    let mut stream = Stream::new(seed);
    let mut stepper = EulerStepper::with_phase(model, truth, steps_per_period, 0.0)?;
    stepper.skip_periods(burn_in, &mut stream)?;
    let mut profile = PhaseProfile::new(model, reference, steps_per_period)?;
    let mut seg = vec![0.0; steps_per_period + 1];
    for _ in 0..n_periods {
        stepper.advance_period(&mut stream, &mut seg)?;
        profile.add_period(&seg);
    }
    Ok(profile)
}

/// Monte Carlo design shared by the replicate-based checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McDesign {
    pub n_periods: usize,
    pub replicates: usize,
    pub seed: u64,
    pub steps_per_period: usize,
    /// Periods discarded before observation; `None` uses the model default.
    pub burn_in: Option<usize>,
}

impl McDesign {
    fn burn_in(&self, model: &DiffusionModel) -> usize {
        self.burn_in.unwrap_or_else(|| default_burn_in(model))
    }

    fn validate(&self) -> Result<()> {
        if self.n_periods == 0 || self.replicates < 2 || self.steps_per_period == 0 {
            return Err(Error::domain(
                "need n_periods ≥ 1, replicates ≥ 2, steps_per_period ≥ 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HellingerEstimates {
    /// `E_ζ[(1 − √L)²]`
    pub sq_root_gap: Estimate,
    /// `E_ζ[(1 − L^{1/4})⁴]`
    pub fourth_root_gap: Estimate,
    /// `E_ζ[√L]`
    pub root_mean: Estimate,
    /// `E_ζ[L]`, equal to 1 by the martingale property.
    pub mean: Estimate,
}

/// Hellinger-type moments of `L^{ζ'/ζ}` under `ζ`.
pub fn hellinger_mc<E: Executor>(
    model: &DiffusionModel,
    zeta: f64,
    zeta_prime: f64,
    design: &McDesign,
    exec: &E,
) -> Result<HellingerEstimates> {
    design.validate()?;
    model.signal.check_theta(zeta)?;
    model.signal.check_theta(zeta_prime)?;
    if zeta == zeta_prime {
        return Ok(HellingerEstimates {
            sq_root_gap: Estimate::exact(0.0),
            fourth_root_gap: Estimate::exact(0.0),
            root_mean: Estimate::exact(1.0),
            mean: Estimate::exact(1.0),
        });
    }
    let burn_in = design.burn_in(model);
    let logs = map_chunked(exec, design.replicates, 8, |range, out| {
        for i in range {
            let seed = crate::rng::seed_stream(design.seed, i as u64);
            out.push(
                simulate_profile(
                    model,
                    zeta,
                    zeta,
                    burn_in,
                    design.n_periods,
                    design.steps_per_period,
                    seed,
                )
                .map(|p| p.curve().log_lr(zeta_prime)),
            );
        }
    });
    let logs = logs.into_iter().collect::<Result<Vec<f64>>>()?;
    hellinger_from_log_lr(&logs)
}

/// The three Hellinger-type moments and `E[L]` from a sample of `log L`.
pub fn hellinger_from_log_lr(logs: &[f64]) -> Result<HellingerEstimates> {
    let col = |f: &dyn Fn(f64) -> f64| -> Result<Estimate> {
        let v: Vec<f64> = logs.iter().map(|&l| f(l)).collect();
        Ok(Summary::of(&v)?.mean_estimate())
    };
    Ok(HellingerEstimates {
        sq_root_gap: col(&|l| {
            let g = 1.0 - math::exp(0.5 * l);
            g * g
        })?,
        fourth_root_gap: col(&|l| {
            let g = 1.0 - math::exp(0.25 * l);
            (g * g) * (g * g)
        })?,
        root_mean: col(&|l| math::exp(0.5 * l))?,
        mean: col(&|l| math::exp(l))?,
    })
}

/// Closed forms of the three moments for `log L ~ N(−v/2, v)`, `v = J|Δu|`:
/// `(2(1 − e^{−v/8}), 2 + 6e^{−v/8} − 8e^{−3v/32}, e^{−v/8})`.
pub fn gaussian_hellinger_forms(j: f64, delta_u: f64) -> (f64, f64, f64) {
    let v = j * delta_u.abs();
    let e8 = math::exp(-v / 8.0);
    (
        2.0 * (1.0 - e8),
        2.0 + 6.0 * e8 - 8.0 * math::exp(-3.0 * v / 32.0),
        e8,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketResult {
    /// `∫₀^{nT} σ^{−2}(ξ_s) 1_window(i_T(s)) ds`
    pub lhs: f64,
    /// `|h| · (1/n) Σ_k σ^{−2}(ξ_{kT+r})`
    pub rhs: f64,
    /// `|h| · (μP_{0,r})(1/σ²)`
    pub limit: f64,
    /// Fewer than four grid steps per window.
    pub underresolved: bool,
}

/// Window `(r, r + h/n)` for `h > 0`, `(r − |h|/n, r)` for `h < 0`.
fn shrinking_window(r: f64, h: f64, n: usize) -> (f64, f64) {
    let w = h.abs() / n as f64;
    if h > 0.0 {
        (r, r + w)
    } else {
        (r - w, r)
    }
}

pub fn bracket_check(
    model: &DiffusionModel,
    r: f64,
    h: f64,
    n: usize,
    steps_per_period: usize,
    seed: u64,
) -> Result<BracketResult> {
    let period = model.period();
    if !(r > 0.0 && r < period) || h == 0.0 || n == 0 {
        return Err(Error::domain("need 0 < r < T, h ≠ 0, n ≥ 1"));
    }
    if h.abs() / n as f64 >= r.min(period - r) {
        return Err(Error::domain("|h|/n must be below min(r, T − r)"));
    }
    let (lo, hi) = shrinking_window(r, h, n);
    let path = crate::simulate::simulate_path_after_burn_in(
        model,
        model.signal.theta,
        0.0,
        default_burn_in(model),
        n,
        steps_per_period,
        seed,
    )?;
    let s = steps_per_period;
    let inv_sq = |x: f64| {
        let v = model.sigma.eval(x);
        1.0 / (v * v)
    };
    let mut lhs = 0.0;
    for k in 0..n {
        lhs += windowed_integral(
            &path.values[k * s..(k + 1) * s + 1],
            path.dt,
            lo,
            hi,
            inv_sq,
        );
    }
    let samples = path.phase_samples(r)?;
    let avg = samples.iter().map(|&x| inv_sq(x)).sum::<f64>() / n as f64;
    let limit = h.abs() * inverse_sigma_sq_mean(model, r)?;
    Ok(BracketResult {
        lhs,
        rhs: h.abs() * avg,
        limit,
        underresolved: (hi - lo) / path.dt < 4.0,
    })
}

/// Empirical covariance of `Y^{n,r_j,h_i}` against the block target.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleVector {
    pub r_points: Vec<f64>,
    pub h_points: Vec<f64>,
    /// `Γ_j = (μP_{0,r_j})(1/σ²)`
    pub gamma: Vec<f64>,
    /// One row per replicate, entry `j·m + i` for `(r_j, h_i)`.
    pub values: Vec<Vec<f64>>,
    /// Row-major `ℓm × ℓm` empirical covariances.
    pub covariance: Vec<Estimate>,
    /// Row-major block-diagonal target `diag(𝔸Γ_1, …, 𝔸Γ_ℓ)`.
    pub target: Vec<f64>,
    pub underresolved: bool,
}

impl MartingaleVector {
    pub fn dim(&self) -> usize {
        self.r_points.len() * self.h_points.len()
    }

    /// Largest `|estimate − target| / se` over all entries (zero-SE entries
    /// compare exactly).
    pub fn max_z(&self) -> f64 {
        self.covariance
            .iter()
            .zip(&self.target)
            .map(|(e, &t)| {
                if e.se > 0.0 {
                    e.z_score(t).abs()
                } else if e.value == t {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `𝔸_{ii'}`: `h_i ∧ h_i'` for two positive, `|h_i| ∧ |h_i'|` for two
/// negative, 0 for opposite signs.
pub fn a_matrix_entry(h1: f64, h2: f64) -> f64 {
    if h1 > 0.0 && h2 > 0.0 {
        h1.min(h2)
    } else if h1 < 0.0 && h2 < 0.0 {
        h1.abs().min(h2.abs())
    } else {
        0.0
    }
}

/// Grid cells meeting `(lo, hi)` within one period, with the covered fraction.
fn cell_overlaps(lo: f64, hi: f64, dt: f64, steps: usize) -> Vec<(usize, f64)> {
    let first = (math::floor(lo / dt).max(0.0) as usize).min(steps);
    let last = (math::ceil(hi / dt).max(0.0) as usize).min(steps);
    (first..last)
        .filter_map(|j| {
            let a = lo.max(j as f64 * dt);
            let b = hi.min((j + 1) as f64 * dt);
            (b > a).then(|| (j, (b - a) / dt))
        })
        .collect()
}

pub fn martingale_clt_check<E: Executor>(
    model: &DiffusionModel,
    r_points: &[f64],
    h_points: &[f64],
    design: &McDesign,
    exec: &E,
) -> Result<MartingaleVector> {
    design.validate()?;
    let period = model.period();
    let n = design.n_periods;
    if r_points.is_empty() || h_points.is_empty() {
        return Err(Error::domain("need at least one r and one h"));
    }
    if r_points.iter().any(|&r| !(r > 0.0 && r < period)) || h_points.contains(&0.0) {
        return Err(Error::domain("r must lie in (0, T) and h must be nonzero"));
    }
    let hmax = h_points.iter().fold(0.0f64, |m, h| m.max(h.abs())) / n as f64;
    let mut rs = r_points.to_vec();
    rs.sort_by(f64::total_cmp);
    let spacing = rs
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain([rs[0], period - rs[rs.len() - 1]])
        .fold(f64::INFINITY, f64::min);
    if 2.0 * hmax >= spacing {
        return Err(Error::domain(
            "windows of distinct r-points overlap; increase n",
        ));
    }
    let s = design.steps_per_period;
    let dt = period / s as f64;
    let windows: Vec<Vec<(usize, f64)>> = r_points
        .iter()
        .flat_map(|&r| h_points.iter().map(move |&h| shrinking_window(r, h, n)))
        .map(|(lo, hi)| cell_overlaps(lo, hi, dt, s))
        .collect();
    let underresolved = r_points
        .iter()
        .any(|_| h_points.iter().any(|h| h.abs() / n as f64 / dt < 4.0));
    let burn_in = design.burn_in(model);
    let theta = model.signal.theta;
    let table = signal_table(model, theta, s);
    let rows = map_chunked(exec, design.replicates, 8, |range, out| {
        let mut seg = vec![0.0; s + 1];
        for i in range {
            let mut run = || -> Result<Vec<f64>> {
                let mut stream = Stream::for_replicate(design.seed, i as u64);
                let mut stepper = EulerStepper::new(model, s, 0.0)?;
                stepper.skip_periods(burn_in, &mut stream)?;
                let mut y = vec![0.0; windows.len()];
                for _ in 0..n {
                    stepper.advance_period(&mut stream, &mut seg)?;
                    for (slot, cells) in y.iter_mut().zip(&windows) {
                        for &(j, w) in cells {
                            let x = seg[j];
                            let sg = model.sigma.eval(x);
                            let db = (seg[j + 1] - x - (table[j] + model.drift.eval(x)) * dt) / sg;
                            *slot += w * db / sg;
                        }
                    }
                }
                Ok(y)
            };
            out.push(run());
        }
    });
    let values = rows.into_iter().collect::<Result<Vec<Vec<f64>>>>()?;
    let gamma = r_points
        .iter()
        .map(|&r| inverse_sigma_sq_mean(model, r))
        .collect::<Result<Vec<f64>>>()?;
    let (l, m) = (r_points.len(), h_points.len());
    let d = l * m;
    let mut covariance = Vec::with_capacity(d * d);
    let mut target = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            covariance.push(covariance_with_se(&values, a, b));
            let (ja, ia) = (a / m, a % m);
            let (jb, ib) = (b / m, b % m);
            target.push(if ja == jb {
                a_matrix_entry(h_points[ia], h_points[ib]) * gamma[ja]
            } else {
                0.0
            });
        }
    }
    Ok(MartingaleVector {
        r_points: r_points.to_vec(),
        h_points: h_points.to_vec(),
        gamma,
        values,
        covariance,
        target,
        underresolved,
    })
}
