//! Check results and atomic artifact writes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use perphase_core::stats::Estimate;
use serde::{Deserialize, Serialize};

/// How an entry turns `(estimate, se, target, tolerance)` into pass/fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `|e − t| ≤ tol`
    Absolute,
    /// `|e − t| ≤ tol·|t|`
    Relative,
    /// `|e − t| ≤ tol·se`
    StandardErrors,
    /// `e ≥ (1 − tol)·t`
    AtLeastFraction,
    /// `e > t`
    Above,
    /// `e < t`
    Below,
    /// `e ≤ t`
    AtMost,
}

impl Rule {
    pub fn passes(self, estimate: f64, se: f64, target: f64, tolerance: f64) -> bool {
        let gap = (estimate - target).abs();
        match self {
            Rule::Absolute => gap <= tolerance,
            Rule::Relative => gap <= tolerance * target.abs(),
            Rule::StandardErrors => gap <= tolerance * se,
            Rule::AtLeastFraction => estimate >= (1.0 - tolerance) * target,
            Rule::Above => estimate > target,
            Rule::Below => estimate < target,
            Rule::AtMost => estimate <= target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub check_name: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub target: f64,
    pub tolerance: f64,
    pub rule: Rule,
    pub pass: bool,
}

impl ReportEntry {
    pub fn new(
        name: impl Into<String>,
        est: Estimate,
        target: f64,
        tolerance: f64,
        rule: Rule,
    ) -> Self {
        Self {
            check_name: name.into(),
            estimate: est.value,
            standard_error: est.se,
            target,
            tolerance,
            rule,
            pass: rule.passes(est.value, est.se, target, tolerance),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub entries: Vec<ReportEntry>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = ReportEntry>) {
        self.entries.extend(entries);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check_name,estimate,standard_error,target,tolerance,rule,pass\n");
        for e in &self.entries {
            let rule = serde_json::to_value(e.rule).expect("rule serializes");
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{},{}",
                e.check_name,
                e.estimate,
                e.standard_error,
                e.target,
                e.tolerance,
                rule.as_str().unwrap_or_default(),
                e.pass
            );
        }
        s
    }
}

/// Wall-clock time per check. Kept out of [`Report`] so reports stay
/// byte-identical across runs.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub checks: Vec<(String, f64)>,
    pub workers: usize,
}

/// Writes to a temporary file in the target directory, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules() {
        assert!(Rule::Absolute.passes(26.5, 0.2, 26.0, 0.8));
        assert!(!Rule::Absolute.passes(27.0, 0.2, 26.0, 0.8));
        assert!(Rule::Relative.passes(0.45, 0.0, 0.40625, 0.15));
        assert!(!Rule::Relative.passes(0.48, 0.0, 0.40625, 0.15));
        assert!(Rule::StandardErrors.passes(1.05, 0.02, 1.0, 3.0));
        assert!(!Rule::StandardErrors.passes(1.07, 0.02, 1.0, 3.0));
        assert!(Rule::AtLeastFraction.passes(0.25, 0.0, 0.3, 0.2));
        assert!(!Rule::AtLeastFraction.passes(0.23, 0.0, 0.3, 0.2));
        assert!(Rule::Above.passes(0.95, 0.0, 0.9, 0.0));
        assert!(!Rule::Below.passes(0.0, 0.0, 0.0, 0.0));
        assert!(Rule::AtMost.passes(0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn csv_has_one_row_per_entry() {
        let mut r = Report::default();
        r.extend([
            ReportEntry::new("a", Estimate::new(1.0, 0.1), 1.0, 3.0, Rule::StandardErrors),
            ReportEntry::new("b", Estimate::exact(2.0), 1.0, 0.5, Rule::Absolute),
        ]);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("a,1e0,1e-1,1e0,3e0,standard_errors,true"));
        assert!(!r.all_pass());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
