use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::json;

use super::{ExperimentConfig, RunRecord, WinRateCell};
use crate::error::{Error, Result};

pub const RUNS_HEADER: [&str; 16] = [
    "run_id",
    "task",
    "method",
    "eta",
    "lambda",
    "rounds",
    "seed",
    "estimate",
    "true_mean",
    "abs_error",
    "final_wealth",
    "alpha",
    "threshold",
    "exceeds",
    "acceptance_rate",
    "failed_experts",
];
pub const WINRATES_HEADER: [&str; 7] = ["method", "task", "eta", "rounds", "wins", "n_seeds", "win_rate"];
pub const WEALTH_HEADER: [&str; 8] = ["run_id", "task", "method", "eta", "rounds", "seed", "t", "wealth"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_runs_csv<W: Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUNS_HEADER)?;
    for r in records {
        w.write_record([
            r.run_id.to_string(),
            r.task.clone(),
            r.method.clone(),
            opt(r.eta),
            opt(r.lambda),
            r.rounds.to_string(),
            r.seed.to_string(),
            r.estimate.to_string(),
            r.true_mean.to_string(),
            r.abs_error.to_string(),
            opt(r.final_wealth),
            r.alpha.to_string(),
            r.threshold.to_string(),
            r.exceeds.map(|b| b.to_string()).unwrap_or_default(),
            opt(r.acceptance_rate),
            r.failed_experts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_winrates_csv<W: Write>(out: W, cells: &[WinRateCell]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WINRATES_HEADER)?;
    for c in cells {
        w.write_record([
            c.method.clone(),
            c.task.clone(),
            opt(c.eta),
            c.rounds.to_string(),
            c.wins.to_string(),
            c.n_seeds.to_string(),
            c.win_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_wealth_csv<W: Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WEALTH_HEADER)?;
    for r in records {
        let Some(traj) = &r.wealth else { continue };
        for (t, wealth) in traj.iter().enumerate() {
            w.write_record([
                r.run_id.to_string(),
                r.task.clone(),
                r.method.clone(),
                opt(r.eta),
                r.rounds.to_string(),
                r.seed.to_string(),
                t.to_string(),
                wealth.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn unix(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).unwrap_or(Duration::ZERO).as_secs_f64()
}

/// Writes runs.csv, winrates.csv, wealth.csv and meta.json into `dir`.
/// Wall-clock data only ever goes to meta.json.
pub fn emit_results(
    records: &[RunRecord],
    cells: &[WinRateCell],
    config: &ExperimentConfig,
    dir: &Path,
    started: SystemTime,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_file = |name: &str, write: &dyn Fn(fs::File) -> csv::Result<()>| {
        let path = dir.join(name);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write(f).map_err(|e| csv_err(&path, e))
    };
    csv_file("runs.csv", &|f| write_runs_csv(f, records))?;
    csv_file("winrates.csv", &|f| write_winrates_csv(f, cells))?;
    csv_file("wealth.csv", &|f| write_wealth_csv(f, records))?;
    let finished = SystemTime::now();
    let meta = json!({
        "artifact": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": unix(started),
        "finished_unix": unix(finished),
        "elapsed_secs": finished.duration_since(started).unwrap_or(Duration::ZERO).as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "runs": records.len(),
        "cells": cells.len(),
        "config": config,
    });
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("meta is serializable");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
