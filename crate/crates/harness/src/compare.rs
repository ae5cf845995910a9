//! Simulation-versus-theory gap statistics.

use serde::{Deserialize, Serialize};

use crate::csv_io::{CsvRow, CurveTable};
use crate::error::{HarnessError, Result};
use crate::metrics::{db, from_db, window_start, Metric};
use crate::predict::TheoryReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Iterations excluded from the curve statistics.
    pub skip: usize,
    /// Allowed steady-state gap.
    pub steady_tolerance_db: f64,
    /// Allowed per-iteration gap after `skip`.
    pub curve_tolerance_db: f64,
    /// Trailing fraction of the horizon averaged for the simulated steady state.
    pub window: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            skip: 50,
            steady_tolerance_db: 1.0,
            curve_tolerance_db: 2.0,
            window: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGap {
    pub metric: Metric,
    /// Largest `|sim − theory|` over iterations `skip..`; absent without
    /// theory curves.
    pub max_gap_db: Option<f64>,
    pub mean_gap_db: Option<f64>,
    /// `sim − theory` for the network steady state.
    pub steady_gap_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub horizon: usize,
    pub options: CompareOptions,
    pub gaps: Vec<MetricGap>,
    pub within_tolerance: bool,
}

fn sim_value(row: &CsvRow, m: Metric) -> f64 {
    match m {
        Metric::MsdW => row.msd_w,
        Metric::MsdH => row.msd_h,
        Metric::Emse => row.emse,
    }
}

pub fn compare(sim: &CurveTable, theory: &TheoryReport, opts: CompareOptions) -> Result<CompareReport> {
    if sim.nodes != theory.nodes {
        return Err(HarnessError::schema(format!(
            "simulation has {} nodes, theory {}",
            sim.nodes, theory.nodes
        )));
    }
    let horizon = sim.horizon();
    if let Some(c) = &theory.learning_curves {
        for (name, len) in [("msd_w", c.msd_w_db.len()), ("msd_h", c.msd_h_db.len()), ("emse", c.emse_db.len())] {
            if len != horizon {
                return Err(HarnessError::schema(format!(
                    "theory {name} curve has {len} iterations, simulation {horizon}"
                )));
            }
        }
    }
    if opts.skip >= horizon {
        return Err(HarnessError::config(format!("skip {} leaves no iterations of {horizon}", opts.skip)));
    }
    let from = window_start(horizon, opts.window);
    let mut gaps = Vec::new();
    let mut ok = true;
    for m in Metric::ALL {
        let sim_db: Vec<f64> = sim.net_rows.iter().map(|r| sim_value(r, m)).collect();
        if sim_db.iter().all(|v| v.is_nan()) {
            continue;
        }
        let curve = theory.learning_curves.as_ref().map(|c| match m {
            Metric::MsdW => &c.msd_w_db,
            Metric::MsdH => &c.msd_h_db,
            Metric::Emse => &c.emse_db,
        });
        let (max_gap, mean_gap) = match curve {
            Some(c) => {
                let diffs: Vec<f64> = (opts.skip..horizon).map(|i| gap(sim_db[i], c[i])).collect();
                let max = diffs.iter().copied().fold(0.0, f64::max);
                let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
                (Some(max), Some(mean))
            }
            None => (None, None),
        };
        let steady_gap = theory.steady_state_db.as_ref().map(|ss| {
            let tail = &sim_db[from..];
            let lin = tail.iter().map(|&v| from_db(v)).sum::<f64>() / tail.len() as f64;
            db(lin) - ss.get(m).network
        });
        if m != Metric::Emse {
            ok &= steady_gap.is_none_or(|g| g.abs() <= opts.steady_tolerance_db);
            ok &= max_gap.is_none_or(|g| g <= opts.curve_tolerance_db);
        }
        gaps.push(MetricGap {
            metric: m,
            max_gap_db: max_gap,
            mean_gap_db: mean_gap,
            steady_gap_db: steady_gap,
        });
    }
    Ok(CompareReport {
        horizon,
        options: opts,
        gaps,
        within_tolerance: ok,
    })
}

/// `|a − b|` in dB; equal infinities have no gap.
fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}
