//! Named checks over one configuration, each turned into report entries.

use std::collections::HashMap;

use anyhow::{bail, Context};
use perphase_core::ergodic::{empirical_invariant, ou_moments, OUAnalytic};
use perphase_core::estimators::{mc_study, StudyConfig, StudySummary};
use perphase_core::likelihood::{bracket_check, martingale_clt_check, McDesign};
use perphase_core::limit::{
    equivariance_check, hellinger_exact, hellinger_holder_ratio, run_fields, tail_decay_check,
    variance_report, LimitConfig, VarianceReport, BAYES_VARIANCE, MLE_VARIANCE,
};
use perphase_core::rng::seed_stream;
use perphase_core::simulate::{default_burn_in, simulate_path_after_burn_in};
use perphase_core::stats::Estimate;
use perphase_core::{DiffusionModel, Executor};

use crate::config::{CheckName, ExperimentConfig};
use crate::report::{ReportEntry, Rule};

/// Master seed of a check family, fixed by name so that adding or reordering
/// checks leaves the others unchanged.
fn family_seed(master: u64, family: u64) -> u64 {
    seed_stream(master, family)
}

const LIMIT: u64 = 1;
const HELLINGER: u64 = 2;
const HOLDER: u64 = 3;
const EQUIVARIANCE: u64 = 4;
const ERGODIC: u64 = 5;
const BRACKET: u64 = 6;
const CLT: u64 = 7;
const STUDY: u64 = 8;
const TAIL: u64 = 9;

/// Finite-n study together with the seed it ran with.
pub struct StudyRun {
    pub u: f64,
    pub summary: StudySummary,
}

pub struct Session<'a, E: Executor> {
    pub cfg: &'a ExperimentConfig,
    pub model: DiffusionModel,
    exec: &'a E,
    limit: Option<VarianceReport>,
    studies: HashMap<u64, StudySummary>,
}

impl<'a, E: Executor> Session<'a, E> {
    pub fn new(cfg: &'a ExperimentConfig, exec: &'a E) -> anyhow::Result<Self> {
        Ok(Self {
            cfg,
            model: cfg.model.build()?,
            exec,
            limit: None,
            studies: HashMap::new(),
        })
    }

    fn seed(&self, family: u64) -> u64 {
        family_seed(self.cfg.run.seed, family)
    }

    fn limit_config(&self, family: u64, replicates: usize) -> LimitConfig {
        let l = &self.cfg.study.limit;
        LimitConfig {
            j: l.j,
            k: l.k,
            du: l.du,
            replicates,
            seed: self.seed(family),
            shift: 0.0,
        }
    }

    pub fn run(&mut self, check: CheckName) -> anyhow::Result<Vec<ReportEntry>> {
        let out = match check {
            CheckName::LimitVariance => self.limit_variance(),
            CheckName::Hellinger => self.hellinger(),
            CheckName::Holder => self.holder(),
            CheckName::Equivariance => self.equivariance(),
            CheckName::OuErgodic => self.ou_ergodic(),
            CheckName::Bracket => self.bracket(),
            CheckName::Clt => self.clt(),
            CheckName::FiniteN => self.finite_n(),
            CheckName::Contiguous => self.contiguous(),
            CheckName::Lam => self.lam(),
            CheckName::TailDecay => self.tail_decay(),
        };
        out.with_context(|| format!("check `{}`", check.as_str()))
    }

    /// Limit-engine variances at shift 0, computed once per session.
    pub fn limit_report(&mut self) -> anyhow::Result<VarianceReport> {
        if let Some(r) = self.limit {
            return Ok(r);
        }
        let cfg = self.limit_config(LIMIT, self.cfg.study.limit.fields);
        let res = run_fields(&cfg, self.exec)?;
        let r = variance_report(&res, cfg.j)?;
        self.limit = Some(r);
        Ok(r)
    }

    /// Finite-n study with data generated under `θ + u/n`.
    pub fn study(&mut self, u: f64) -> anyhow::Result<&StudySummary> {
        let key = u.to_bits();
        if !self.studies.contains_key(&key) {
            let r = &self.cfg.run;
            let sc = StudyConfig {
                theta: self.model.signal.theta,
                n_periods: r.n_periods,
                replicates: r.replicates,
                seed: seed_stream(self.seed(STUDY), key),
                steps_per_period: r.steps_per_period,
                burn_in: r.burn_in_periods,
                contiguous_u: (u != 0.0).then_some(u),
            };
            let s = mc_study(&self.model, &sc, self.exec)?;
            if !s.j.is_finite() {
                bail!("finite-n targets need an analytic J (affine drift with γ > 0)");
            }
            self.studies.insert(key, s);
        }
        Ok(&self.studies[&key])
    }

    /// Studies run so far, in increasing `u`.
    pub fn studies(&self) -> Vec<StudyRun> {
        let mut v: Vec<StudyRun> = self
            .studies
            .iter()
            .map(|(k, s)| StudyRun {
                u: f64::from_bits(*k),
                summary: s.clone(),
            })
            .collect();
        v.sort_by(|a, b| a.u.total_cmp(&b.u));
        v
    }

    fn limit_variance(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let t = self.cfg.study.tolerances.clone();
        let r = self.limit_report()?;
        Ok(vec![
            ReportEntry::new(
                "limit-variance/mle",
                r.mle_scaled,
                MLE_VARIANCE,
                t.limit_mle,
                Rule::Absolute,
            ),
            ReportEntry::new(
                "limit-variance/bayes",
                r.bayes_scaled,
                BAYES_VARIANCE,
                t.limit_bayes,
                Rule::Absolute,
            ),
        ])
    }

    fn hellinger(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let l = &self.cfg.study.limit;
        let tol = self.cfg.study.tolerances.hellinger_se;
        let seed = self.seed(HELLINGER);
        let mut out = Vec::new();
        for (i, &d) in self.cfg.study.params.hellinger_deltas.iter().enumerate() {
            let h = hellinger_exact(
                l.j,
                d,
                l.du,
                l.hellinger_fields,
                seed_stream(seed, i as u64),
                self.exec,
            )?;
            let name = |what: &str| format!("hellinger/delta={d}/{what}");
            out.push(ReportEntry::new(
                name("sq-root-gap"),
                h.sq_root_gap,
                h.exact.0,
                tol,
                Rule::StandardErrors,
            ));
            out.push(ReportEntry::new(
                name("fourth-root-gap"),
                h.fourth_root_gap,
                h.exact.1,
                tol,
                Rule::StandardErrors,
            ));
            out.push(ReportEntry::new(
                name("root-mean"),
                h.root_mean,
                h.exact.2,
                tol,
                Rule::StandardErrors,
            ));
        }
        Ok(out)
    }

    fn holder(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let l = &self.cfg.study.limit;
        let t = &self.cfg.study.tolerances;
        let d = self.cfg.study.params.holder_delta;
        let target = l.j / 8.0;
        let closed = Estimate::exact(hellinger_holder_ratio(l.j, d));
        // fields on a grid of step Δ so that u = Δ is a node
        let h = hellinger_exact(
            l.j,
            d,
            d.abs(),
            l.hellinger_fields,
            self.seed(HOLDER),
            self.exec,
        )?;
        let mc = h.sq_root_gap.scale(0.5 / d.abs());
        Ok(vec![
            ReportEntry::new(
                "holder/closed-form",
                closed,
                target,
                t.holder_rel,
                Rule::Relative,
            ),
            ReportEntry::new(
                "holder/monte-carlo",
                mc,
                target,
                t.holder_se,
                Rule::StandardErrors,
            ),
            // E[(1 − √L̃)²]/|Δ| itself, without the ½ of H²
            ReportEntry::new(
                "holder/unhalved-closed-form",
                closed.scale(2.0),
                2.0 * target,
                t.holder_rel,
                Rule::Relative,
            ),
        ])
    }

    fn equivariance(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let cfg = self.limit_config(EQUIVARIANCE, self.cfg.study.limit.equivariance_fields);
        let u0 = &self.cfg.study.params.equivariance_u0;
        let alpha = self.cfg.study.tolerances.ks_alpha;
        let rep = equivariance_check(&cfg, u0, alpha, self.exec)?;
        Ok(rep
            .pairs
            .iter()
            .map(|(a, b, ks)| {
                ReportEntry::new(
                    format!("equivariance/ks(u0={},u0={})", u0[*a], u0[*b]),
                    Estimate::exact(ks.statistic),
                    ks.critical_value,
                    alpha,
                    Rule::AtMost,
                )
            })
            .collect())
    }

    fn ou_ergodic(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let m = &self.model;
        let ou = OUAnalytic::from_model(m)?;
        let r = &self.cfg.run;
        let p = &self.cfg.study.params;
        let t = &self.cfg.study.tolerances;
        let sig = &m.signal;
        let phases = p
            .ergodic_phases
            .clone()
            .unwrap_or_else(|| vec![0.0, sig.theta + 0.5 * sig.duration]);
        let burn = r.burn_in_periods.unwrap_or_else(|| default_burn_in(m));
        let path = simulate_path_after_burn_in(
            m,
            sig.theta,
            0.0,
            burn,
            r.n_periods,
            r.steps_per_period,
            self.seed(ERGODIC),
        )?;
        // enough periods that the geometric tail is below double precision
        let periods = ((40.0 / (ou.gamma * sig.period)).ceil().max(4.0) as usize) * 10;
        let mut out = Vec::new();
        for &ph in &phases {
            let law = empirical_invariant(&path.phase_samples(ph)?, 0)?;
            let (mean, var) = ou_moments(&ou, ph)?;
            let g = ou.mean_geometric(ph)?;
            let tr = ou.mean_truncated(ph, periods)?;
            let name = |what: &str| format!("ou-ergodic/r={ph}/{what}");
            out.push(ReportEntry::new(
                name("mean"),
                law.mean_batched(p.ergodic_batches)?,
                mean,
                t.ergodic_se,
                Rule::StandardErrors,
            ));
            out.push(ReportEntry::new(
                name("variance"),
                law.variance_batched(p.ergodic_batches)?,
                var,
                t.ergodic_se,
                Rule::StandardErrors,
            ));
            out.push(ReportEntry::new(
                name("routes"),
                Estimate::exact(g - tr),
                0.0,
                t.ergodic_routes,
                Rule::Absolute,
            ));
        }
        Ok(out)
    }

    fn bracket(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let r = &self.cfg.run;
        let p = &self.cfg.study.params;
        let t = &self.cfg.study.tolerances;
        let b = bracket_check(
            &self.model,
            p.bracket_r,
            p.bracket_h,
            r.n_periods,
            r.steps_per_period,
            self.seed(BRACKET),
        )?;
        if b.underresolved {
            bail!("window h/n spans fewer than four grid steps; raise steps_per_period");
        }
        Ok(vec![
            ReportEntry::new(
                "bracket/lhs-vs-rhs",
                Estimate::exact(b.lhs),
                b.rhs,
                t.bracket_rel,
                Rule::Relative,
            ),
            ReportEntry::new(
                "bracket/lhs-vs-limit",
                Estimate::exact(b.lhs),
                b.limit,
                t.bracket_limit_rel,
                Rule::Relative,
            ),
            ReportEntry::new(
                "bracket/rhs-vs-limit",
                Estimate::exact(b.rhs),
                b.limit,
                t.bracket_limit_rel,
                Rule::Relative,
            ),
        ])
    }

    fn clt(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let r = &self.cfg.run;
        let p = &self.cfg.study.params;
        let tol = self.cfg.study.tolerances.clt_se;
        let design = McDesign {
            n_periods: r.n_periods,
            replicates: r.replicates,
            seed: self.seed(CLT),
            steps_per_period: r.steps_per_period,
            burn_in: r.burn_in_periods,
        };
        let v = martingale_clt_check(&self.model, &p.clt_r, &p.clt_h, &design, self.exec)?;
        if v.underresolved {
            bail!("window h/n spans fewer than four grid steps; raise steps_per_period");
        }
        let d = v.dim();
        let m = p.clt_h.len();
        let label = |a: usize| format!("r={},h={}", p.clt_r[a / m], p.clt_h[a % m]);
        let mut out = Vec::new();
        for a in 0..d {
            for b in a..d {
                out.push(ReportEntry::new(
                    format!("clt/cov({};{})", label(a), label(b)),
                    v.covariance[a * d + b],
                    v.target[a * d + b],
                    tol,
                    Rule::StandardErrors,
                ));
            }
        }
        Ok(out)
    }

    fn finite_n(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let tol = self.cfg.study.tolerances.finite_n_rel;
        let s = self.study(0.0)?;
        let (t_mle, t_be) = s.targets();
        Ok(vec![
            ReportEntry::new(
                "finite-n/mle-variance",
                s.mle.variance,
                t_mle,
                tol,
                Rule::Relative,
            ),
            ReportEntry::new(
                "finite-n/bayes-variance",
                s.bayes.variance,
                t_be,
                tol,
                Rule::Relative,
            ),
        ])
    }

    fn contiguous(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let tol = self.cfg.study.tolerances.contiguous_se;
        let u = self.cfg.study.params.contiguous_u;
        let a = self.study(0.0)?.bayes.second_moment;
        let b = self.study(u)?.bayes.second_moment;
        let diff = Estimate::new(b.value - a.value, (a.se * a.se + b.se * b.se).sqrt());
        Ok(vec![ReportEntry::new(
            format!("contiguous/bayes-risk(u={u})-minus-risk(u=0)"),
            diff,
            0.0,
            tol,
            Rule::StandardErrors,
        )])
    }

    fn lam(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let tol = self.cfg.study.tolerances.lam_rel;
        let jl = self.cfg.study.limit.j;
        let scaled = self.limit_report()?.bayes_second_moment.scale(jl * jl);
        let mut worst: Option<Estimate> = None;
        let mut j = f64::NAN;
        for &u in &self.cfg.study.params.lam_u.clone() {
            let s = self.study(u)?;
            j = s.j;
            let risk = s.bayes.second_moment;
            if worst.is_none_or(|w| risk.value > w.value) {
                worst = Some(risk);
            }
        }
        let Some(worst) = worst else {
            bail!("params.lam_u is empty");
        };
        Ok(vec![ReportEntry::new(
            "lam/max-bayes-risk",
            worst,
            scaled.value / (j * j),
            tol,
            Rule::AtLeastFraction,
        )])
    }

    fn tail_decay(&mut self) -> anyhow::Result<Vec<ReportEntry>> {
        let cfg = self.limit_config(TAIL, self.cfg.study.limit.tail_fields);
        let k = &self.cfg.study.params.tail_k;
        let rep = tail_decay_check(&cfg, k, self.exec)?;
        let max_step = rep
            .probabilities
            .windows(2)
            .map(|w| w[1].value - w[0].value)
            .fold(f64::NEG_INFINITY, f64::max);
        let r2 = rep.fit.map_or(0.0, |f| f.r_squared);
        Ok(vec![
            ReportEntry::new(
                "tail-decay/max-increment",
                Estimate::exact(max_step),
                0.0,
                0.0,
                Rule::Below,
            ),
            ReportEntry::new(
                "tail-decay/log-linear-r-squared",
                Estimate::exact(r2),
                self.cfg.study.tolerances.tail_r_squared,
                0.0,
                Rule::Above,
            ),
        ])
    }
}
