use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::protocol::Protocol;
use super::run::{RunRecord, ScenarioStat};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub protocol: String,
    pub protocol_hash: String,
    pub seeds: Vec<u64>,
    pub records: usize,
    pub failed: usize,
    pub files: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "method",
        "seed",
        "eval_mean",
        "eval_sd",
        "eval_episodes",
        "final_train_cashflow",
        "wall_ms",
        "error",
    ])?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            r.seed.to_string(),
            r.eval_mean.to_string(),
            r.eval_sd.to_string(),
            r.eval_episodes.to_string(),
            r.final_train_cashflow.to_string(),
            r.wall_ms.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, stats: &[ScenarioStat]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "control",
        "treatment",
        "mean_control",
        "mean_treatment",
        "rel_diff",
        "t",
        "df",
        "p_raw",
        "p_holm",
        "cohens_d",
        "significant",
        "tost_p",
        "tost_equivalent",
    ])?;
    for s in stats {
        w.write_record([
            s.scenario.clone(),
            s.control.to_string(),
            s.treatment.to_string(),
            s.mean_control.to_string(),
            s.mean_treatment.to_string(),
            s.rel_diff.to_string(),
            s.t.to_string(),
            s.df.to_string(),
            s.p_raw.to_string(),
            s.p_holm.to_string(),
            s.cohens_d.to_string(),
            s.significant.to_string(),
            opt(s.tost.map(|t| t.p)),
            s.tost.map_or_else(String::new, |t| t.equivalent.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "method", "seed", "episode", "epsilon", "train_cashflow", "eval_revenue"])?;
    for r in records {
        for c in &r.curve {
            w.write_record([
                r.scenario.clone(),
                r.method.to_string(),
                r.seed.to_string(),
                c.episode.to_string(),
                c.epsilon.to_string(),
                c.train_cashflow.to_string(),
                opt(c.eval_revenue),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_runs_csv`]; curves are not part of the file.
pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let num =
        |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number {s:?} in runs file"))) };
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        if row.len() != 9 {
            return Err(Error::Parse(format!("runs row has {} fields, expected 9", row.len())));
        }
        out.push(RunRecord {
            scenario: row[0].to_string(),
            method: row[1].parse()?,
            seed: row[2].parse().map_err(|_| Error::Parse(format!("bad seed {:?}", &row[2])))?,
            eval_mean: num(&row[3])?,
            eval_sd: num(&row[4])?,
            eval_episodes: num(&row[5])? as usize,
            final_train_cashflow: num(&row[6])?,
            curve: Vec::new(),
            wall_ms: num(&row[7])? as u64,
            error: if row[8].is_empty() { None } else { Some(row[8].to_string()) },
        });
    }
    Ok(out)
}

/// Writes runs.csv, summary.csv, curves.csv (only when some record carries a
/// curve) and bench_manifest.json into `dir`, returning the paths.
pub fn emit_report(
    protocol: &Protocol,
    records: &[RunRecord],
    stats: &[ScenarioStat],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Invalid("no run records to report".into()));
    }
    fs::create_dir_all(dir)?;
    let mut files = vec!["runs.csv", "summary.csv"];
    write_runs_csv(&dir.join(files[0]), records)?;
    write_summary_csv(&dir.join(files[1]), stats)?;
    if records.iter().any(|r| !r.curve.is_empty()) {
        files.push("curves.csv");
        write_curves_csv(&dir.join("curves.csv"), records)?;
    }
    let manifest = BenchManifest {
        protocol: protocol.name.clone(),
        protocol_hash: protocol.hash(),
        seeds: protocol.seeds.clone(),
        records: records.len(),
        failed: records.iter().filter(|r| !r.ok()).count(),
        files: files.iter().map(|s| s.to_string()).collect(),
    };
    files.push("bench_manifest.json");
    fs::write(dir.join("bench_manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(files.iter().map(|n| dir.join(n)).collect())
}
