//! Periodic signal, coefficient registry and occupation-time arithmetic.
//!
//! The drift of the observed diffusion is `S(θ, t) + b(x)` with
//!
//! ```text
//! S(θ, t) = λ(t) + λ*(t) · 1{(θ, θ + a)}(t mod T)
//! ```
//!
//! and diffusion coefficient `σ(x)`. Coefficients come from a closed registry
//! so that Lipschitz constants and the bounds `1/M ≤ σ ≤ M` are certifiable.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{self, PI};

/// Position of `t` inside its period, `t mod T` in `[0, T)`.
#[inline]
pub fn phase_of(t: f64, period: f64) -> f64 {
    let r = t - period * math::floor(t / period);
    // floor rounding can leave r == period for t just below a multiple of T
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Shape of a `T`-periodic input function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodicShape {
    Constant(f64),
    /// `c0 + c1 · sin(2πt/T + phase)`
    Sinusoid {
        c0: f64,
        c1: f64,
        phase: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicFn {
    pub shape: PeriodicShape,
    pub period: f64,
}

impl PeriodicFn {
    pub fn new(shape: PeriodicShape, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::domain("period must be positive and finite"));
        }
        let finite = match shape {
            PeriodicShape::Constant(c) => c.is_finite(),
            PeriodicShape::Sinusoid { c0, c1, phase } => {
                c0.is_finite() && c1.is_finite() && phase.is_finite()
            }
        };
        if !finite {
            return Err(Error::domain("periodic function parameters must be finite"));
        }
        Ok(Self { shape, period })
    }

    pub fn constant(c: f64, period: f64) -> Result<Self> {
        Self::new(PeriodicShape::Constant(c), period)
    }

    pub fn sinusoid(c0: f64, c1: f64, phase: f64, period: f64) -> Result<Self> {
        Self::new(PeriodicShape::Sinusoid { c0, c1, phase }, period)
    }

    /// Value at time `t`; the argument is reduced modulo the period first.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        self.value_at_phase(phase_of(t, self.period))
    }

    /// Value at a phase already reduced to `[0, T)`.
    #[inline]
    pub fn value_at_phase(&self, r: f64) -> f64 {
        match self.shape {
            PeriodicShape::Constant(c) => c,
            PeriodicShape::Sinusoid { c0, c1, phase } => {
                c0 + c1 * math::sin(2.0 * PI * r / self.period + phase)
            }
        }
    }

    /// Closed-form `(inf, sup)` over a period.
    pub fn range(&self) -> (f64, f64) {
        match self.shape {
            PeriodicShape::Constant(c) => (c, c),
            PeriodicShape::Sinusoid { c0, c1, .. } => (c0 - c1.abs(), c0 + c1.abs()),
        }
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.range().0 > 0.0
    }

    pub fn is_nonnegative(&self) -> bool {
        self.range().0 >= 0.0
    }

    fn with_period(self, period: f64) -> Self {
        Self { period, ..self }
    }
}

impl fmt::Display for PeriodicFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            PeriodicShape::Constant(c) => write!(f, "constant({c:?})"),
            PeriodicShape::Sinusoid { c0, c1, phase } => {
                write!(f, "sinusoid({c0:?},{c1:?},{phase:?})")
            }
        }
    }
}

/// Parses `name(arg, arg, ...)` into its name and numeric arguments.
fn parse_call(s: &str) -> Result<(String, Vec<f64>)> {
    let s = s.trim();
    let open = s
        .find('(')
        .ok_or_else(|| Error::domain(format!("expected `name(args)`, got `{s}`")))?;
    if !s.ends_with(')') {
        return Err(Error::domain(format!(
            "missing closing parenthesis in `{s}`"
        )));
    }
    let name = s[..open].trim().to_ascii_lowercase();
    let inner = &s[open + 1..s.len() - 1];
    let mut args = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let v: f64 = part
            .parse()
            .map_err(|_| Error::domain(format!("`{part}` is not a number in `{s}`")))?;
        args.push(v);
    }
    Ok((name, args))
}

fn expect_args(name: &str, args: &[f64], n: usize) -> Result<()> {
    if args.len() != n {
        return Err(Error::domain(format!(
            "`{name}` takes {n} argument(s), got {}",
            args.len()
        )));
    }
    Ok(())
}

/// Parses `constant(c)` or `sinusoid(c0,c1,phase)`; the period is supplied separately.
pub fn parse_periodic(s: &str, period: f64) -> Result<PeriodicFn> {
    let (name, args) = parse_call(s)?;
    match name.as_str() {
        "constant" => {
            expect_args(&name, &args, 1)?;
            PeriodicFn::constant(args[0], period)
        }
        "sinusoid" => {
            expect_args(&name, &args, 3)?;
            PeriodicFn::sinusoid(args[0], args[1], args[2], period)
        }
        _ => Err(Error::domain(format!(
            "unknown periodic function kind `{name}`"
        ))),
    }
}

/// The periodic input `S(θ, ·)` together with its discontinuity window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub lambda: PeriodicFn,
    pub lambda_star: PeriodicFn,
    pub period: f64,
    /// Duration `a` of the switched component.
    pub duration: f64,
    pub theta: f64,
}

impl SignalSpec {
    pub fn new(
        lambda: PeriodicFn,
        lambda_star: PeriodicFn,
        period: f64,
        duration: f64,
        theta: f64,
    ) -> Result<Self> {
        Self::build(lambda, lambda_star, period, duration, theta, true)
    }

    /// Same as [`new`](Self::new) but only requires `λ* ≥ 0`, admitting the
    /// signal-free reference models.
    pub fn new_allow_null(
        lambda: PeriodicFn,
        lambda_star: PeriodicFn,
        period: f64,
        duration: f64,
        theta: f64,
    ) -> Result<Self> {
        Self::build(lambda, lambda_star, period, duration, theta, false)
    }

    fn build(
        lambda: PeriodicFn,
        lambda_star: PeriodicFn,
        period: f64,
        duration: f64,
        theta: f64,
        strict: bool,
    ) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::domain("T must be positive"));
        }
        if !(duration > 0.0 && duration < period) {
            return Err(Error::domain(format!(
                "0 < a < T violated: a = {duration}, T = {period}"
            )));
        }
        if !lambda.is_nonnegative() {
            return Err(Error::domain("λ must be nonnegative over the period"));
        }
        if strict && !lambda_star.is_strictly_positive() {
            return Err(Error::domain(
                "λ* must be strictly positive over the period",
            ));
        }
        if !lambda_star.is_nonnegative() {
            return Err(Error::domain("λ* must be nonnegative over the period"));
        }
        let spec = Self {
            lambda: lambda.with_period(period),
            lambda_star: lambda_star.with_period(period),
            period,
            duration,
            theta,
        };
        spec.check_theta(theta)?;
        Ok(spec)
    }

    /// Upper end of the parameter space `Θ = (0, T − a)`.
    #[inline]
    pub fn theta_max(&self) -> f64 {
        self.period - self.duration
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta > 0.0 && theta < self.theta_max()
    }

    pub fn contains_closed(&self, theta: f64) -> bool {
        (0.0..=self.theta_max()).contains(&theta)
    }

    pub fn check_theta(&self, theta: f64) -> Result<()> {
        if self.contains(theta) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "θ = {theta} outside Θ = (0, {})",
                self.theta_max()
            )))
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * self.theta_max()
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        self.check_theta(theta)?;
        Ok(Self { theta, ..*self })
    }

    /// Open-interval indicator `1{(ζ, ζ + a)}(r)` at a reduced phase.
    #[inline]
    pub fn switched_on(&self, phase: f64, zeta: f64) -> bool {
        zeta < phase && phase < zeta + self.duration
    }

    /// `S(ζ, ·)` at a reduced phase, without domain checks on `ζ`.
    #[inline]
    pub fn value_at_phase(&self, phase: f64, zeta: f64) -> f64 {
        let base = self.lambda.value_at_phase(phase);
        if self.switched_on(phase, zeta) {
            base + self.lambda_star.value_at_phase(phase)
        } else {
            base
        }
    }

    /// `S(θ, t)` with the stored `θ` or an override inside `Θ`.
    pub fn signal_value(&self, t: f64, theta_override: Option<f64>) -> Result<f64> {
        let zeta = match theta_override {
            Some(z) => {
                self.check_theta(z)?;
                z
            }
            None => self.theta,
        };
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::domain("t must be finite and nonnegative"));
        }
        Ok(self.value_at_phase(phase_of(t, self.period), zeta))
    }
}

/// Lebesgue measure of `{s ∈ [0, t] : s mod T ∈ (r1, r2)}`, in closed form.
pub fn occupation_measure(period: f64, r1: f64, r2: f64, t: f64) -> Result<f64> {
    if !(period > 0.0) {
        return Err(Error::domain("T must be positive"));
    }
    if !(0.0 <= r1 && r1 < r2 && r2 <= period) {
        return Err(Error::domain(format!(
            "need 0 ≤ r1 < r2 ≤ T, got r1 = {r1}, r2 = {r2}, T = {period}"
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("t must be nonnegative"));
    }
    let full = math::floor(t / period);
    let rem = t - full * period;
    let partial = (rem - r1).clamp(0.0, r2 - r1);
    Ok(full * (r2 - r1) + partial)
}

/// Registry of scalar coefficient functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefFn {
    /// `x ↦ beta − gamma·x`
    Affine {
        beta: f64,
        gamma: f64,
    },
    Constant(f64),
    /// `x ↦ s0 + s1 / (1 + x²)`
    BoundedRational {
        s0: f64,
        s1: f64,
    },
}

impl CoefFn {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            CoefFn::Affine { beta, gamma } => beta - gamma * x,
            CoefFn::Constant(s) => s,
            CoefFn::BoundedRational { s0, s1 } => s0 + s1 / (1.0 + x * x),
        }
    }

    /// A valid global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            CoefFn::Affine { gamma, .. } => gamma.abs(),
            CoefFn::Constant(_) => 0.0,
            // sup |d/dx 1/(1+x²)| = 3√3/8, attained at x = ±1/√3
            CoefFn::BoundedRational { s1, .. } => 3.0 * math::sqrt(3.0) / 8.0 * s1.abs(),
        }
    }

    /// Bound `M` with `1/M ≤ σ ≤ M` when used as a diffusion coefficient.
    pub fn sigma_bound(&self) -> Result<f64> {
        match *self {
            CoefFn::Constant(s) if s > 0.0 && s.is_finite() => Ok(s.max(1.0 / s)),
            CoefFn::BoundedRational { s0, s1 } if s0 > 0.0 && s1 >= 0.0 && s1.is_finite() => {
                Ok((s0 + s1).max(1.0 / s0))
            }
            CoefFn::Affine { .. } => {
                Err(Error::domain("affine σ is not bounded away from 0 and ∞"))
            }
            _ => Err(Error::domain(format!("σ = {self} violates 1/M ≤ σ ≤ M"))),
        }
    }

    /// `(inf σ, sup σ)` over the real line for a valid diffusion coefficient.
    pub fn sigma_range(&self) -> Result<(f64, f64)> {
        self.sigma_bound()?;
        Ok(match *self {
            CoefFn::Constant(s) => (s, s),
            CoefFn::BoundedRational { s0, s1 } => (s0, s0 + s1),
            CoefFn::Affine { .. } => unreachable!(),
        })
    }

    fn is_finite(&self) -> bool {
        match *self {
            CoefFn::Affine { beta, gamma } => beta.is_finite() && gamma.is_finite(),
            CoefFn::Constant(s) => s.is_finite(),
            CoefFn::BoundedRational { s0, s1 } => s0.is_finite() && s1.is_finite(),
        }
    }
}

impl fmt::Display for CoefFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CoefFn::Affine { beta, gamma } => write!(f, "affine({beta:?},{gamma:?})"),
            CoefFn::Constant(s) => write!(f, "constant({s:?})"),
            CoefFn::BoundedRational { s0, s1 } => write!(f, "bounded_rational({s0:?},{s1:?})"),
        }
    }
}

impl FromStr for CoefFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = parse_call(s)?;
        let f = match name.as_str() {
            "affine" => {
                expect_args(&name, &args, 2)?;
                CoefFn::Affine {
                    beta: args[0],
                    gamma: args[1],
                }
            }
            "constant" => {
                expect_args(&name, &args, 1)?;
                CoefFn::Constant(args[0])
            }
            "bounded_rational" => {
                expect_args(&name, &args, 2)?;
                CoefFn::BoundedRational {
                    s0: args[0],
                    s1: args[1],
                }
            }
            _ => return Err(Error::domain(format!("unknown coefficient kind `{name}`"))),
        };
        if !f.is_finite() {
            return Err(Error::domain("coefficient parameters must be finite"));
        }
        Ok(f)
    }
}

/// `dξ = [S(θ, t) + b(ξ)] dt + σ(ξ) dW`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionModel {
    pub signal: SignalSpec,
    pub drift: CoefFn,
    pub sigma: CoefFn,
}

impl DiffusionModel {
    pub fn new(signal: SignalSpec, drift: CoefFn, sigma: CoefFn) -> Result<Self> {
        if !drift.is_finite() {
            return Err(Error::domain("drift parameters must be finite"));
        }
        sigma.sigma_bound()?;
        Ok(Self {
            signal,
            drift,
            sigma,
        })
    }

    /// Ornstein–Uhlenbeck drift with `γ > 0`: the period-sampled chain is
    /// positive Harris for any admissible σ.
    pub fn h1_guaranteed(&self) -> bool {
        matches!(self.drift, CoefFn::Affine { gamma, .. } if gamma > 0.0)
    }

    /// `(β, γ)` when the drift is affine.
    pub fn ou_drift(&self) -> Option<(f64, f64)> {
        match self.drift {
            CoefFn::Affine { beta, gamma } => Some((beta, gamma)),
            _ => None,
        }
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        Ok(Self {
            signal: self.signal.with_theta(theta)?,
            ..*self
        })
    }

    #[inline]
    pub fn period(&self) -> f64 {
        self.signal.period
    }

    /// Whole-drift value at time `t` and state `x` under parameter `ζ`.
    #[inline]
    pub fn drift_at(&self, t: f64, x: f64, zeta: f64) -> f64 {
        self.signal.value_at_phase(phase_of(t, self.period()), zeta) + self.drift.eval(x)
    }

    /// One-line descriptor, `key=value` pairs separated by spaces.
    pub fn descriptor(&self) -> String {
        let s = &self.signal;
        format!(
            "T={:?} a={:?} theta={:?} lambda={} lambda_star={} b={} sigma={}",
            s.period, s.duration, s.theta, s.lambda, s.lambda_star, self.drift, self.sigma
        )
    }

    /// Inverse of [`descriptor`](Self::descriptor) for the seven model keys.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let get = |want: &str, pairs: &[(&'a str, &'a str)]| -> Result<String> {
            pairs
                .iter()
                .find(|(k, _)| *k == want)
                .map(|(_, v)| v.to_string())
                .ok_or_else(|| Error::domain(format!("missing model key `{want}`")))
        };
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let num = |key: &str, v: String| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::domain(format!("`{key}` is not a number: `{v}`")))
        };
        let period = num("T", get("T", &pairs)?)?;
        let duration = num("a", get("a", &pairs)?)?;
        let theta = num("theta", get("theta", &pairs)?)?;
        let lambda = parse_periodic(&get("lambda", &pairs)?, period)?;
        let lambda_star = parse_periodic(&get("lambda_star", &pairs)?, period)?;
        let drift: CoefFn = get("b", &pairs)?.parse()?;
        let sigma: CoefFn = get("sigma", &pairs)?.parse()?;
        let signal = SignalSpec::new_allow_null(lambda, lambda_star, period, duration, theta)?;
        Self::new(signal, drift, sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_spec() -> SignalSpec {
        SignalSpec::new(
            PeriodicFn::constant(1.0, 10.0).unwrap(),
            PeriodicFn::constant(2.0, 10.0).unwrap(),
            10.0,
            3.0,
            4.0,
        )
        .unwrap()
    }

    #[test]
    fn signal_value_examples() {
        let s = unit_spec();
        assert_eq!(s.signal_value(5.0, None).unwrap(), 3.0);
        assert_eq!(s.signal_value(2.0, None).unwrap(), 1.0);
        assert_eq!(s.signal_value(14.5, None).unwrap(), 3.0);
    }

    #[test]
    fn indicator_is_open_at_both_ends() {
        let s = unit_spec();
        assert_eq!(s.signal_value(4.0, None).unwrap(), 1.0);
        assert_eq!(s.signal_value(7.0, None).unwrap(), 1.0);
        assert_eq!(s.signal_value(24.0, None).unwrap(), 1.0);
    }

    #[test]
    fn theta_override_outside_theta_space_is_rejected() {
        let s = unit_spec();
        assert!(matches!(
            s.signal_value(1.0, Some(7.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            s.signal_value(1.0, Some(0.0)),
            Err(Error::Domain(_))
        ));
        assert_eq!(s.signal_value(1.5, Some(1.0)).unwrap(), 3.0);
    }

    #[test]
    fn duration_must_be_shorter_than_period() {
        let l = PeriodicFn::constant(1.0, 10.0).unwrap();
        let err = SignalSpec::new(l, l, 10.0, 10.0, 1.0).unwrap_err();
        assert!(alloc::format!("{err}").contains("0 < a < T"));
    }

    #[test]
    fn lambda_star_positivity() {
        let l = PeriodicFn::constant(1.0, 10.0).unwrap();
        let bad = PeriodicFn::sinusoid(1.0, 1.5, 0.0, 10.0).unwrap();
        assert!(SignalSpec::new(l, bad, 10.0, 3.0, 4.0).is_err());
        let good = PeriodicFn::sinusoid(1.0, 0.5, 0.0, 10.0).unwrap();
        assert!(SignalSpec::new(l, good, 10.0, 3.0, 4.0).is_ok());
    }

    #[test]
    fn occupation_measure_examples() {
        assert_eq!(occupation_measure(10.0, 4.0, 7.0, 25.0).unwrap(), 7.0);
        assert_eq!(occupation_measure(10.0, 4.0, 7.0, 0.0).unwrap(), 0.0);
        assert_eq!(occupation_measure(10.0, 4.0, 7.0, 30.0).unwrap(), 9.0);
        assert!(occupation_measure(10.0, 7.0, 4.0, 1.0).is_err());
        assert!(occupation_measure(10.0, 4.0, 4.0, 1.0).is_err());
    }

    #[test]
    fn sigma_validation() {
        assert!(CoefFn::Constant(0.0).sigma_bound().is_err());
        assert!(CoefFn::BoundedRational { s0: 0.0, s1: 1.0 }
            .sigma_bound()
            .is_err());
        assert!(CoefFn::BoundedRational { s0: 1.0, s1: -0.5 }
            .sigma_bound()
            .is_err());
        assert_eq!(
            CoefFn::BoundedRational { s0: 0.5, s1: 1.0 }
                .sigma_bound()
                .unwrap(),
            2.0
        );
        assert_eq!(
            CoefFn::BoundedRational { s0: 1.0, s1: 2.0 }
                .sigma_bound()
                .unwrap(),
            3.0
        );
    }

    #[test]
    fn registry_strings_round_trip() {
        for s in [
            "affine(0.5,1.0)",
            "constant(2.0)",
            "bounded_rational(1.0,0.5)",
        ] {
            let f: CoefFn = s.parse().unwrap();
            assert_eq!(alloc::format!("{f}"), s);
        }
        let p = parse_periodic("sinusoid(1.0, 0.5, 0.25)", 10.0).unwrap();
        assert_eq!(alloc::format!("{p}"), "sinusoid(1.0,0.5,0.25)");
        assert!("cubic(1)".parse::<CoefFn>().is_err());
        assert!("affine(1)".parse::<CoefFn>().is_err());
        assert!(parse_periodic("constant(x)", 1.0).is_err());
    }

    #[test]
    fn descriptor_round_trips() {
        let m = DiffusionModel::new(
            unit_spec(),
            CoefFn::Affine {
                beta: 0.0,
                gamma: 1.0,
            },
            CoefFn::BoundedRational { s0: 1.0, s1: 0.5 },
        )
        .unwrap();
        let d = m.descriptor();
        let pairs: Vec<(&str, &str)> = d.split(' ').map(|kv| kv.split_once('=').unwrap()).collect();
        assert_eq!(DiffusionModel::from_pairs(pairs).unwrap(), m);
        assert!(m.h1_guaranteed());
    }
}
