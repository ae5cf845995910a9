//! Ensemble metrics, network averages and dB conversion.

use serde::{Deserialize, Serialize};
use sdlms_core::estimators::Trajectory;

/// `10·log₁₀(x)`; `−∞` for zero, NaN stays NaN.
pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MsdW,
    MsdH,
    Emse,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::MsdW, Metric::MsdH, Metric::Emse];

    pub fn of(self, t: &Trajectory) -> &[f64] {
        match self {
            Metric::MsdW => &t.msd_w,
            Metric::MsdH => &t.msd_h,
            Metric::Emse => &t.emse,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::MsdW => "msd_w",
            Metric::MsdH => "msd_h",
            Metric::Emse => "emse",
        }
    }
}

/// Simulated ensemble averages of one algorithm with an optional theory
/// overlay of the same shape.
#[derive(Debug, Clone)]
pub struct MetricsSeries {
    pub label: String,
    pub trials: usize,
    pub sim: Trajectory,
    pub theory: Option<Trajectory>,
}

/// Linear per-node values and their network mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub network: f64,
    pub nodes: Vec<f64>,
}

impl Levels {
    pub fn from_nodes(nodes: Vec<f64>) -> Self {
        let network = nodes.iter().sum::<f64>() / nodes.len() as f64;
        Self { network, nodes }
    }

    pub fn to_db(&self) -> Self {
        Self {
            network: db(self.network),
            nodes: self.nodes.iter().map(|&v| db(v)).collect(),
        }
    }
}

/// Steady-state levels of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyLevels {
    pub msd_w: Levels,
    pub msd_h: Levels,
    pub emse: Levels,
}

impl SteadyLevels {
    pub fn get(&self, m: Metric) -> &Levels {
        match m {
            Metric::MsdW => &self.msd_w,
            Metric::MsdH => &self.msd_h,
            Metric::Emse => &self.emse,
        }
    }

    pub fn to_db(&self) -> Self {
        Self {
            msd_w: self.msd_w.to_db(),
            msd_h: self.msd_h.to_db(),
            emse: self.emse.to_db(),
        }
    }
}

/// First iteration of the trailing `window` fraction of the horizon.
pub fn window_start(horizon: usize, window: f64) -> usize {
    let len = ((horizon as f64 * window).ceil() as usize).clamp(1, horizon);
    horizon - len
}

/// Per-node time average of a metric over iterations `from..horizon`.
pub fn tail_average(t: &Trajectory, metric: Metric, from: usize) -> Vec<f64> {
    let values = metric.of(t);
    let count = (t.horizon - from) as f64;
    (0..t.nodes)
        .map(|k| (from..t.horizon).map(|i| values[t.index(i, k)]).sum::<f64>() / count)
        .collect()
}

pub fn steady_from_tail(t: &Trajectory, window: f64) -> SteadyLevels {
    let from = window_start(t.horizon, window);
    SteadyLevels {
        msd_w: Levels::from_nodes(tail_average(t, Metric::MsdW, from)),
        msd_h: Levels::from_nodes(tail_average(t, Metric::MsdH, from)),
        emse: Levels::from_nodes(tail_average(t, Metric::Emse, from)),
    }
}

/// Network-averaged curve of a metric, linear.
pub fn network_curve(t: &Trajectory, metric: Metric) -> Vec<f64> {
    (0..t.horizon).map(|i| t.network(metric.of(t), i)).collect()
}

/// Largest `|sim − theory|` in dB over iterations `from..horizon` of the
/// network curves.
pub fn max_curve_gap_db(sim: &Trajectory, theory: &Trajectory, metric: Metric, from: usize) -> f64 {
    let a = network_curve(sim, metric);
    let b = network_curve(theory, metric);
    (from..sim.horizon.min(theory.horizon))
        .map(|i| (db(a[i]) - db(b[i])).abs())
        .fold(0.0, f64::max)
}
