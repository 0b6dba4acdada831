use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use perphase::config::{ConfigError, ModelBlock};
use perphase::parallel::Pool;
use perphase::pathio::{read_path, write_path};
use perphase::report::{write_atomic, ReportEntry, Rule};
use perphase::{run_config_file, study_csv};
use perphase_core::ergodic::{lln_functional, Functional, Observable};
use perphase_core::estimators::{bayes, j_theta, mc_study, mle, zeta_grid, JMode, StudyConfig};
use perphase_core::likelihood::{
    bracket_check, default_u_grid, gaussian_hellinger_forms, hellinger_mc, local_curve,
    martingale_clt_check, McDesign,
};
use perphase_core::limit::{
    equivariance_check, hellinger_exact, lam_target, run_fields, tail_decay_check,
    tail_probability_exact, variance_report, LimitConfig, BAYES_VARIANCE, MLE_VARIANCE,
};
use perphase_core::simulate::{
    default_burn_in, fluctuation_probe, simulate_path_after_burn_in, FluctuationProbe,
};
use perphase_core::stats::Estimate;
use perphase_core::DiffusionModel;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "perphase",
    version,
    about = "Phase inference for diffusions with a periodic switched drift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one Euler path and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate the phase from a path CSV.
    Estimate(EstimateArgs),
    /// Monte Carlo study of the rescaled estimator errors.
    McStudy(McStudyArgs),
    /// Checks on the limit experiment.
    Limit(LimitArgs),
    /// Diagnostics on the diffusion model.
    Diagnose(DiagnoseArgs),
    /// Run every check of a TOML config.
    Run { config: PathBuf },
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long = "period", default_value_t = 1.0)]
    period: f64,
    #[arg(long, default_value_t = 0.25)]
    a: f64,
    #[arg(long, default_value_t = 0.375)]
    theta: f64,
    #[arg(long, default_value = "constant(1)")]
    lambda: String,
    #[arg(long, default_value = "constant(2)")]
    lambda_star: String,
    #[arg(long, default_value = "affine(0,1)")]
    drift: String,
    #[arg(long, default_value = "constant(1)")]
    sigma: String,
}

impl ModelArgs {
    fn build(&self) -> Result<DiffusionModel, ConfigError> {
        ModelBlock {
            period: self.period,
            a: self.a,
            theta: self.theta,
            lambda: self.lambda.clone(),
            lambda_star: self.lambda_star.clone(),
            b: self.drift.clone(),
            sigma: self.sigma.clone(),
        }
        .build()
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n_periods: usize,
    #[arg(long, default_value_t = 1024)]
    steps_per_period: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    x0: f64,
    /// Periods discarded before recording; 0 keeps the start.
    #[arg(long, default_value_t = 0)]
    burn_in: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimateKind {
    Mle,
    Bayes,
    Curve,
}

#[derive(Args)]
struct EstimateArgs {
    kind: EstimateKind,
    #[arg(long)]
    path: PathBuf,
    /// Reference phase of the local curve (defaults to the header θ).
    #[arg(long)]
    reference: Option<f64>,
    /// Output CSV for `curve`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McStudyArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    n_periods: usize,
    #[arg(long)]
    replicates: usize,
    #[arg(long, default_value_t = 8192)]
    steps_per_period: usize,
    #[arg(long)]
    contiguous_u: Option<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum LimitCheck {
    Variance,
    Hellinger,
    Equivariance,
    Tails,
    Lam,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    #[arg(long, default_value_t = 150.0)]
    k: f64,
    #[arg(long, default_value_t = 0.02)]
    du: f64,
    #[arg(long, default_value_t = 200_000)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum)]
    check: LimitCheck,
    /// Shift for `hellinger`.
    #[arg(long, default_value_t = 2.0)]
    delta: f64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,3,-5",
        allow_hyphen_values = true
    )]
    u0: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    tail_k: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagnoseKind {
    Lln,
    Bracket,
    Clt,
    Hellinger,
    Fluctuation,
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionalKind {
    Point,
    Interval,
    Dirac,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObservableKind {
    Identity,
    Square,
    InverseSigmaSquare,
}

#[derive(Args)]
struct DiagnoseArgs {
    kind: DiagnoseKind,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 200)]
    n_periods: usize,
    #[arg(long, default_value_t = 2000)]
    steps_per_period: usize,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    /// Phase `r` (lln, bracket) or `t1` (fluctuation).
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    #[arg(long)]
    r_end: Option<f64>,
    #[arg(long, value_enum, default_value = "point")]
    functional: FunctionalKind,
    #[arg(long, value_enum, default_value = "identity")]
    observable: ObservableKind,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    h: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.375,0.625")]
    r_list: Vec<f64>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "-1,0.5,1",
        allow_hyphen_values = true
    )]
    h_list: Vec<f64>,
    /// Alternative phase for `hellinger`.
    #[arg(long)]
    zeta_prime: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 0.3)]
    lambda_exp: f64,
    #[arg(long, default_value_t = 0.6)]
    eta_exp: f64,
    #[arg(long, default_value_t = 64)]
    window_steps: usize,
}

/// One line of CLI check output.
#[derive(Serialize)]
struct CheckLine {
    check: String,
    estimate: f64,
    se: f64,
    target: f64,
    pass: bool,
}

impl From<&ReportEntry> for CheckLine {
    fn from(e: &ReportEntry) -> Self {
        Self {
            check: e.check_name.clone(),
            estimate: e.estimate,
            se: e.standard_error,
            target: e.target,
            pass: e.pass,
        }
    }
}

fn emit(entries: &[ReportEntry]) -> anyhow::Result<bool> {
    emit_with(entries, serde_json::Value::Null)
}

/// Prints `{checks, info}`; `info` carries values that have no pass rule.
fn emit_with(entries: &[ReportEntry], info: serde_json::Value) -> anyhow::Result<bool> {
    let lines: Vec<CheckLine> = entries.iter().map(CheckLine::from).collect();
    let out = serde_json::json!({ "checks": lines, "info": info });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(entries.iter().all(|e| e.pass))
}

fn simulate(a: SimulateArgs) -> anyhow::Result<bool> {
    let m = a.model.build()?;
    let p = simulate_path_after_burn_in(
        &m,
        m.signal.theta,
        a.x0,
        a.burn_in,
        a.n_periods,
        a.steps_per_period,
        a.seed,
    )?;
    let mut buf = Vec::new();
    write_path(&p, &mut buf)?;
    write_atomic(&a.out, &buf)?;
    Ok(true)
}

fn estimate(a: EstimateArgs) -> anyhow::Result<bool> {
    let file = File::open(&a.path).with_context(|| format!("opening {}", a.path.display()))?;
    let path = read_path(BufReader::new(file))?;
    let m = path.model;
    match a.kind {
        EstimateKind::Mle | EstimateKind::Bayes => {
            let grid = zeta_grid(&m, path.steps_per_period);
            let v = if matches!(a.kind, EstimateKind::Mle) {
                mle(&path, &m, &grid)?
            } else {
                bayes(&path, &m, &grid)?
            };
            println!(
                "{}",
                serde_json::json!({ "estimate": v, "grid_points": grid.len() })
            );
        }
        EstimateKind::Curve => {
            let Some(out) = a.out else {
                bail!("`estimate curve` needs --out");
            };
            let reference = a.reference.unwrap_or(m.signal.theta);
            let c = local_curve(&path, &m, reference, &default_u_grid())?;
            let mut s = String::from("u,log_z\n");
            for (u, l) in &c.points {
                s.push_str(&format!("{u:e},{l:e}\n"));
            }
            write_atomic(&out, s.as_bytes())?;
            println!(
                "{}",
                serde_json::json!({ "points": c.points.len(), "excluded": c.excluded.len(), "n_periods": c.n_periods })
            );
        }
    }
    Ok(true)
}

fn study(a: McStudyArgs, pool: &Pool) -> anyhow::Result<bool> {
    let m = a.model.build()?;
    let cfg = StudyConfig {
        theta: m.signal.theta,
        n_periods: a.n_periods,
        replicates: a.replicates,
        seed: a.seed,
        steps_per_period: a.steps_per_period,
        burn_in: None,
        contiguous_u: a.contiguous_u,
    };
    let s = mc_study(&m, &cfg, pool)?;
    let (t_mle, t_be) = s.targets();
    let summary = serde_json::json!({
        "j": s.j,
        "true_theta": s.true_theta,
        "mle": { "mean": s.mle.mean.value, "variance": s.mle.variance.value, "variance_se": s.mle.variance.se,
                 "risk": s.mle.second_moment.value, "risk_se": s.mle.second_moment.se, "target_variance": t_mle },
        "bayes": { "mean": s.bayes.mean.value, "variance": s.bayes.variance.value, "variance_se": s.bayes.variance.se,
                   "risk": s.bayes.second_moment.value, "risk_se": s.bayes.second_moment.se, "target_variance": t_be },
    });
    write_atomic(&a.out.join("records.csv"), study_csv(&s).as_bytes())?;
    let text = serde_json::to_string_pretty(&summary)?;
    write_atomic(&a.out.join("summary.json"), text.as_bytes())?;
    println!("{text}");
    Ok(true)
}

fn limit(a: LimitArgs, pool: &Pool) -> anyhow::Result<bool> {
    let cfg = LimitConfig {
        j: a.j,
        k: a.k,
        du: a.du,
        replicates: a.replicates,
        seed: a.seed,
        shift: 0.0,
    };
    let entries = match a.check {
        LimitCheck::Variance => {
            let r = variance_report(&run_fields(&cfg, pool)?, a.j)?;
            vec![
                ReportEntry::new(
                    "limit-variance/mle",
                    r.mle_scaled,
                    MLE_VARIANCE,
                    0.8,
                    Rule::Absolute,
                ),
                ReportEntry::new(
                    "limit-variance/bayes",
                    r.bayes_scaled,
                    BAYES_VARIANCE,
                    0.6,
                    Rule::Absolute,
                ),
            ]
        }
        LimitCheck::Hellinger => {
            let h = hellinger_exact(a.j, a.delta, a.du, a.replicates, a.seed, pool)?;
            vec![
                ReportEntry::new(
                    "hellinger/sq-root-gap",
                    h.sq_root_gap,
                    h.exact.0,
                    3.0,
                    Rule::StandardErrors,
                ),
                ReportEntry::new(
                    "hellinger/fourth-root-gap",
                    h.fourth_root_gap,
                    h.exact.1,
                    3.0,
                    Rule::StandardErrors,
                ),
                ReportEntry::new(
                    "hellinger/root-mean",
                    h.root_mean,
                    h.exact.2,
                    3.0,
                    Rule::StandardErrors,
                ),
            ]
        }
        LimitCheck::Equivariance => {
            let r = equivariance_check(&cfg, &a.u0, 0.01, pool)?;
            r.pairs
                .iter()
                .map(|(i, k, ks)| {
                    ReportEntry::new(
                        format!("equivariance/ks(u0={},u0={})", a.u0[*i], a.u0[*k]),
                        Estimate::exact(ks.statistic),
                        ks.critical_value,
                        0.01,
                        Rule::AtMost,
                    )
                })
                .collect()
        }
        LimitCheck::Tails => {
            let r = tail_decay_check(&cfg, &a.tail_k, pool)?;
            let max_step = r
                .probabilities
                .windows(2)
                .map(|w| w[1].value - w[0].value)
                .fold(f64::NEG_INFINITY, f64::max);
            let entries = [
                ReportEntry::new(
                    "tails/max-increment",
                    Estimate::exact(max_step),
                    0.0,
                    0.0,
                    Rule::Below,
                ),
                ReportEntry::new(
                    "tails/log-linear-r-squared",
                    Estimate::exact(r.fit.map_or(0.0, |f| f.r_squared)),
                    0.9,
                    0.0,
                    Rule::Above,
                ),
            ];
            // grid suprema sit below the continuous ones, so these bound from above
            let info: Vec<serde_json::Value> = a
                .tail_k
                .iter()
                .zip(&r.probabilities)
                .map(|(k, p)| {
                    serde_json::json!({ "k": k, "p": p.value, "se": p.se, "continuous": tail_probability_exact(a.j, *k) })
                })
                .collect();
            return emit_with(&entries, info.into());
        }
        LimitCheck::Lam => {
            let t = lam_target(&cfg, pool)?;
            vec![ReportEntry::new(
                "lam/limit-bayes-risk",
                t,
                BAYES_VARIANCE / (a.j * a.j),
                0.6 / (a.j * a.j),
                Rule::Absolute,
            )]
        }
    };
    emit(&entries)
}

fn diagnose(a: DiagnoseArgs, pool: &Pool) -> anyhow::Result<bool> {
    let m = a.model.build()?;
    let theta = m.signal.theta;
    let entries = match a.kind {
        DiagnoseKind::Lln => {
            let f = match a.observable {
                ObservableKind::Identity => Observable::Identity,
                ObservableKind::Square => Observable::Square,
                ObservableKind::InverseSigmaSquare => Observable::InverseSquare(m.sigma),
            };
            let func = match a.functional {
                FunctionalKind::Point => Functional::PointSample { r: a.r },
                FunctionalKind::Dirac => Functional::DiracComb { r: a.r },
                FunctionalKind::Interval => {
                    let Some(r_end) = a.r_end else {
                        bail!("interval functional needs --r-end");
                    };
                    Functional::IntervalIntegral { r: a.r, r_end }
                }
            };
            let burn = default_burn_in(&m);
            let p = simulate_path_after_burn_in(
                &m,
                theta,
                0.0,
                0,
                burn + a.n_periods,
                a.steps_per_period,
                a.seed,
            )?;
            let res = lln_functional(&p, func, f, burn)?;
            let target = res.limit.unwrap_or(f64::NAN);
            vec![ReportEntry::new(
                "lln/terminal",
                res.terminal,
                target,
                4.0,
                Rule::StandardErrors,
            )]
        }
        DiagnoseKind::Bracket => {
            let b = bracket_check(&m, a.r, a.h, a.n_periods, a.steps_per_period, a.seed)?;
            vec![
                ReportEntry::new(
                    "bracket/lhs-vs-rhs",
                    Estimate::exact(b.lhs),
                    b.rhs,
                    0.05,
                    Rule::Relative,
                ),
                ReportEntry::new(
                    "bracket/lhs-vs-limit",
                    Estimate::exact(b.lhs),
                    b.limit,
                    0.10,
                    Rule::Relative,
                ),
                ReportEntry::new(
                    "bracket/rhs-vs-limit",
                    Estimate::exact(b.rhs),
                    b.limit,
                    0.10,
                    Rule::Relative,
                ),
            ]
        }
        DiagnoseKind::Clt => {
            let design = McDesign {
                n_periods: a.n_periods,
                replicates: a.replicates,
                seed: a.seed,
                steps_per_period: a.steps_per_period,
                burn_in: None,
            };
            let v = martingale_clt_check(&m, &a.r_list, &a.h_list, &design, pool)?;
            let d = v.dim();
            let mut out = Vec::new();
            for i in 0..d {
                for k in i..d {
                    out.push(ReportEntry::new(
                        format!("clt/cov({i},{k})"),
                        v.covariance[i * d + k],
                        v.target[i * d + k],
                        4.0,
                        Rule::StandardErrors,
                    ));
                }
            }
            out
        }
        DiagnoseKind::Hellinger => {
            let Some(zp) = a.zeta_prime else {
                bail!("hellinger needs --zeta-prime");
            };
            let design = McDesign {
                n_periods: a.n_periods,
                replicates: a.replicates,
                seed: a.seed,
                steps_per_period: a.steps_per_period,
                burn_in: None,
            };
            let h = hellinger_mc(&m, theta, zp, &design, pool)?;
            let j = j_theta(&m, theta, JMode::Analytic, pool)
                .map(|e| e.value)
                .unwrap_or(f64::NAN);
            let exact = gaussian_hellinger_forms(j, a.n_periods as f64 * (zp - theta));
            vec![
                ReportEntry::new(
                    "hellinger/sq-root-gap",
                    h.sq_root_gap,
                    exact.0,
                    3.0,
                    Rule::StandardErrors,
                ),
                ReportEntry::new(
                    "hellinger/fourth-root-gap",
                    h.fourth_root_gap,
                    exact.1,
                    3.0,
                    Rule::StandardErrors,
                ),
                ReportEntry::new(
                    "hellinger/root-mean",
                    h.root_mean,
                    exact.2,
                    3.0,
                    Rule::StandardErrors,
                ),
                ReportEntry::new("hellinger/mean", h.mean, 1.0, 3.0, Rule::StandardErrors),
            ]
        }
        DiagnoseKind::Fluctuation => {
            let probe = FluctuationProbe {
                t1: a.r,
                delta: a.delta,
                lambda_exp: a.lambda_exp,
                eta_exp: a.eta_exp,
                replicates: a.replicates,
                seed: a.seed,
                steps_per_period: a.steps_per_period,
                window_steps: a.window_steps,
            };
            let p = fluctuation_probe(&m, &probe, pool)?;
            let info = serde_json::json!({ "probability": p.value, "se": p.se, "delta": a.delta });
            return emit_with(&[], info);
        }
    };
    emit(&entries)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let pool = Pool::from_env()?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::McStudy(a) => study(a, &pool),
        Command::Limit(a) => limit(a, &pool),
        Command::Diagnose(a) => diagnose(a, &pool),
        Command::Run { config } => {
            let out = run_config_file(&config, &pool, pool.workers())?;
            for e in &out.report.entries {
                println!(
                    "{} {} estimate={:e} target={:e}",
                    if e.pass { "PASS" } else { "FAIL" },
                    e.check_name,
                    e.estimate,
                    e.target
                );
            }
            Ok(out.report.all_pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
