//! Machine-readable check reports: one record per check with the worst
//! sample attached, plus rendering to a human table or CSV. Reports are
//! deterministic given (scenario, seed) once the timestamp is suppressed.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    /// Stable check id, e.g. "kernel.l-identity".
    pub name: String,
    /// What the check asserts, written out as the formula or property.
    pub reference: String,
    /// Worst sample for this check, when sample-based.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SamplePoint>,
    /// Worst relative residual observed.
    pub residual: f64,
    pub tolerance: f64,
    /// Where the tolerance came from: "default", "scenario", or "override".
    pub tolerance_source: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

impl Report {
    pub fn new(
        scenario: String,
        seed: u64,
        timestamp: Option<u64>,
        checks: Vec<CheckRecord>,
    ) -> Report {
        let passed = checks.iter().filter(|c| c.pass).count();
        let summary = Summary {
            total: checks.len(),
            passed,
            failed: checks.len() - passed,
        };
        Report {
            scenario,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            checks,
            summary,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn from_path(path: &Path) -> Result<Report> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidScenario(format!("malformed report: {e}")))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,reference,residual,tolerance,tolerance_source,pass\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},\"{}\",{:e},{:e},{},{}\n",
                c.name, c.reference, c.residual, c.tolerance, c.tolerance_source, c.pass
            ));
        }
        out
    }

    /// Human-readable table with failures listed first.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<&CheckRecord> = self.checks.iter().collect();
        rows.sort_by_key(|c| (c.pass, c.name.clone()));
        let mut out = String::new();
        out.push_str(&format!(
            "scenario: {}   seed: {}   checks: {} ({} passed, {} failed)\n",
            self.scenario, self.seed, self.summary.total, self.summary.passed, self.summary.failed
        ));
        out.push_str(&format!(
            "{:<6} {:<34} {:>12} {:>10}  {}\n",
            "status", "check", "residual", "tolerance", "reference"
        ));
        for c in rows {
            out.push_str(&format!(
                "{:<6} {:<34} {:>12.3e} {:>10.1e}  {}\n",
                if c.pass { "pass" } else { "FAIL" },
                c.name,
                c.residual,
                c.tolerance,
                c.reference
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(name: &str, pass: bool) -> CheckRecord {
        CheckRecord {
            name: name.into(),
            reference: "r".into(),
            sample: None,
            residual: if pass { 1e-12 } else { 1.0 },
            tolerance: 1e-9,
            tolerance_source: "default".into(),
            pass,
        }
    }

    #[test]
    fn summary_counts() {
        let r = Report::new(
            "s".into(),
            7,
            None,
            vec![record("a", true), record("b", false)],
        );
        assert_eq!(r.summary.total, 2);
        assert_eq!(r.summary.passed, 1);
        assert!(!r.all_passed());
    }

    #[test]
    fn failures_render_first() {
        let r = Report::new(
            "s".into(),
            7,
            None,
            vec![record("aaa", true), record("zzz", false)],
        );
        let table = r.render_table();
        let fail_pos = table.find("zzz").unwrap();
        let pass_pos = table.find("aaa").unwrap();
        assert!(
            fail_pos < pass_pos,
            "failures must be listed first:\n{table}"
        );
    }

    #[test]
    fn csv_round_trip_counts() {
        let r = Report::new(
            "s".into(),
            7,
            None,
            vec![record("a", true), record("b", false)],
        );
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len() - 1, r.summary.total);
        assert!(lines[2].contains("false"));
    }

    #[test]
    fn empty_report_renders_header_only() {
        let r = Report::new("s".into(), 0, None, vec![]);
        let table = r.render_table();
        assert_eq!(table.lines().count(), 2);
    }
}
