use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub check: String,
    pub instance: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundReport {
    pub fn new(check: impl Into<String>, instance: impl Into<String>, measured: f64, bound: f64) -> Self {
        BoundReport {
            check: check.into(),
            instance: instance.into(),
            measured,
            bound,
            pass: measured <= bound + BOUND_SLACK,
        }
    }
}

pub fn write_jsonl(reports: &[BoundReport], mut out: impl Write) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// One line per check: pass count, worst margin.
pub fn summary_table(reports: &[BoundReport]) -> String {
    let mut checks: Vec<&str> = Vec::new();
    for r in reports {
        if !checks.contains(&r.check.as_str()) {
            checks.push(&r.check);
        }
    }
    let mut s = format!("{:<24} {:>8} {:>8} {:>14}\n", "check", "pass", "total", "worst margin");
    for c in checks {
        let rows: Vec<&BoundReport> = reports.iter().filter(|r| r.check == c).collect();
        let pass = rows.iter().filter(|r| r.pass).count();
        let worst = rows.iter().map(|r| r.bound - r.measured).fold(f64::INFINITY, f64::min);
        let _ = writeln!(s, "{:<24} {:>8} {:>8} {:>14.6e}", c, pass, rows.len(), worst);
    }
    s
}
