//! Configuration, persistence, parallel execution and reporting on top of
//! `perphase-core`.

pub mod checks;
pub mod config;
pub mod parallel;
pub mod pathio;
pub mod report;

use std::path::Path;
use std::time::Instant;

use perphase_core::Executor;

use crate::checks::{Session, StudyRun};
use crate::config::{ExperimentConfig, Format};
use crate::report::{write_atomic, Report, Timings};

pub struct RunOutcome {
    pub report: Report,
    pub timings: Timings,
}

/// Runs every requested check in config order and writes the artifacts.
pub fn run_config<E: Executor>(
    cfg: &ExperimentConfig,
    exec: &E,
    workers: usize,
) -> anyhow::Result<RunOutcome> {
    let mut session = Session::new(cfg, exec)?;
    let mut report = Report::default();
    let mut timings = Timings {
        workers,
        ..Timings::default()
    };
    for &check in &cfg.study.checks {
        let start = Instant::now();
        report.extend(session.run(check)?);
        timings
            .checks
            .push((check.as_str().to_string(), start.elapsed().as_secs_f64()));
    }
    write_artifacts(cfg, &report, &session.studies(), &timings)?;
    Ok(RunOutcome { report, timings })
}

pub fn run_config_file<E: Executor>(
    path: &Path,
    exec: &E,
    workers: usize,
) -> anyhow::Result<RunOutcome> {
    let cfg = ExperimentConfig::load(path)?;
    run_config(&cfg, exec, workers)
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    report: &Report,
    studies: &[StudyRun],
    timings: &Timings,
) -> anyhow::Result<()> {
    let dir = &cfg.output.directory;
    for f in &cfg.output.formats {
        match f {
            Format::Json => write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?,
            Format::Csv => {
                write_atomic(&dir.join("report.csv"), report.to_csv().as_bytes())?;
                for s in studies {
                    let name = format!("study_u{}.csv", s.u);
                    write_atomic(&dir.join(name), study_csv(&s.summary).as_bytes())?;
                }
            }
        }
    }
    write_atomic(
        &dir.join("timings.json"),
        serde_json::to_string_pretty(timings)?.as_bytes(),
    )?;
    Ok(())
}

pub fn study_csv(s: &perphase_core::estimators::StudySummary) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("replicate,seed,true_theta,n_periods,theta_hat,theta_star,err_mle_rescaled,err_be_rescaled\n");
    for r in &s.records {
        let _ = writeln!(
            out,
            "{},{},{:e},{},{:e},{:e},{:e},{:e}",
            r.replicate,
            r.seed,
            r.true_theta,
            r.n_periods,
            r.theta_hat,
            r.theta_star,
            r.err_mle_rescaled,
            r.err_be_rescaled
        );
    }
    out
}
