use std::collections::HashMap;

use super::RunRecord;
use crate::error::{Error, Result};

/// Paired win rate of one method against Monte Carlo on one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct WinRateCell {
    pub method: String,
    pub task: String,
    pub eta: Option<f64>,
    pub rounds: usize,
    pub wins: usize,
    pub n_seeds: usize,
    pub win_rate: f64,
}

type CellKey = (String, String, Option<u64>, usize);

/// Groups non-MC records by `(method, task, eta, T)` and counts seeds whose
/// error is strictly below the MC error for the same `(task, seed, T)`.
/// Ties are losses. Cells keep the order of first appearance.
pub fn win_rate(records: &[RunRecord]) -> Result<Vec<WinRateCell>> {
    let mc: HashMap<(&str, usize, usize), f64> = records
        .iter()
        .filter(|r| r.method == "mc")
        .map(|r| ((r.task.as_str(), r.seed, r.rounds), r.abs_error))
        .collect();
    let mut index: HashMap<CellKey, usize> = HashMap::new();
    let mut cells: Vec<WinRateCell> = Vec::new();
    for r in records.iter().filter(|r| r.method != "mc") {
        let baseline = *mc.get(&(r.task.as_str(), r.seed, r.rounds)).ok_or_else(|| Error::MissingPair {
            task: r.task.clone(),
            seed: r.seed as u64,
            rounds: r.rounds,
        })?;
        let key = (r.method.clone(), r.task.clone(), r.eta.map(f64::to_bits), r.rounds);
        let i = *index.entry(key).or_insert_with(|| {
            cells.push(WinRateCell {
                method: r.method.clone(),
                task: r.task.clone(),
                eta: r.eta,
                rounds: r.rounds,
                wins: 0,
                n_seeds: 0,
                win_rate: 0.0,
            });
            cells.len() - 1
        });
        let cell = &mut cells[i];
        cell.n_seeds += 1;
        if r.abs_error < baseline {
            cell.wins += 1;
        }
    }
    for c in &mut cells {
        c.win_rate = c.wins as f64 / c.n_seeds as f64;
    }
    Ok(cells)
}
