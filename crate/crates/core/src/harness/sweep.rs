use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::incentives::{calibrate_min_fee, CalibrationProblem};
use crate::market::EntryMode;
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["delta", "b", "entry_mode", "B_over_M", "min_fee", "reason"];

/// Calibration grid. Multiple-entry rows do not depend on `b` and are emitted
/// once per `(delta, B/M)` with `b = inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub liquidities: Vec<f64>,
    pub b_over_m: Vec<f64>,
    pub entry_modes: Vec<EntryMode>,
    #[serde(default = "default_total_loss")]
    pub total_loss: f64,
}

fn default_total_loss() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub b: Option<f64>,
    pub entry_mode: EntryMode,
    pub b_over_m: f64,
    /// `NaN` when the point is infeasible.
    pub min_fee: f64,
    pub reason: String,
}

pub fn sweep_calibration(grid: &GridSpec) -> Result<Vec<SweepRow>> {
    if grid.entry_modes.contains(&EntryMode::Single) && grid.liquidities.is_empty() {
        return Err(Error::invalid("liquidities", "single-entry rows need at least one b"));
    }
    let mut rows = Vec::new();
    for &entry_mode in &grid.entry_modes {
        let liquidities: Vec<Option<f64>> = match entry_mode {
            EntryMode::Single => grid.liquidities.iter().copied().map(Some).collect(),
            EntryMode::Multiple => vec![None],
        };
        for &delta in &grid.deltas {
            for &b in &liquidities {
                for &ratio in &grid.b_over_m {
                    let problem = CalibrationProblem {
                        delta,
                        budget: ratio * grid.total_loss,
                        total_loss: grid.total_loss,
                        liquidity: b,
                        entry_mode,
                    };
                    let (min_fee, reason) = match calibrate_min_fee(&problem) {
                        Ok(f) => (f, String::new()),
                        Err(e) => (f64::NAN, e.to_string()),
                    };
                    rows.push(SweepRow {
                        delta,
                        b,
                        entry_mode,
                        b_over_m: ratio,
                        min_fee,
                        reason,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.delta.to_string(),
            r.b.map_or_else(|| "inf".to_owned(), |b| b.to_string()),
            r.entry_mode.to_string(),
            r.b_over_m.to_string(),
            r.min_fee.to_string(),
            r.reason.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
