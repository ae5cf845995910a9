//! `run`: Monte Carlo for every configured algorithm, with theory overlays,
//! CSV, SVG and a JSON summary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sdlms_core::estimators::Algorithm;
use sdlms_core::theory::Verdict;

use crate::config::{AlgorithmConfig, ExperimentConfig, SCHEMA_VERSION};
use crate::csv_io::{write_series, write_text};
use crate::error::Result;
use crate::metrics::{db, network_curve, steady_from_tail, Metric, MetricsSeries, SteadyLevels};
use crate::predict::{predict, Prediction};
use crate::runner::monte_carlo;
use crate::setup::Experiment;
use crate::svg::{learning_curves, Curve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryBrief {
    pub headline: String,
    pub verdict: Verdict,
    pub spectral_radius: f64,
    pub spectral_radius_bound: f64,
    pub step_size_bounds: Vec<f64>,
    pub steady_state_db: Option<SteadyLevels>,
}

/// Network steady-state `sim − theory` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub msd_w_db: f64,
    pub msd_h_db: f64,
    pub emse_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub label: String,
    /// Centralized step size, when applicable.
    pub step: Option<f64>,
    pub steady_state_db: SteadyLevels,
    pub theory: Option<TheoryBrief>,
    pub delta: Option<Deltas>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    pub horizon: usize,
    pub steady_window: f64,
    pub algorithms: Vec<AlgorithmSummary>,
    pub runtime_seconds: f64,
}

pub struct RunOutput {
    pub series: Vec<MetricsSeries>,
    pub predictions: Vec<Option<Prediction>>,
    pub summary: RunSummary,
    pub files: Vec<PathBuf>,
}

pub fn artifact(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}"))
}

/// Simulates one algorithm without writing anything.
pub fn simulate_series(exp: &Experiment, a: AlgorithmConfig) -> Result<MetricsSeries> {
    let cfg = &exp.config;
    let sim = monte_carlo(
        &exp.scenario,
        &exp.source,
        exp.algorithm(a),
        cfg.horizon,
        cfg.trials,
        cfg.seed,
        exp.global.as_ref(),
    )?;
    Ok(MetricsSeries {
        label: a.label().to_string(),
        trials: cfg.trials,
        sim,
        theory: None,
    })
}

fn plot(series: &MetricsSeries, name: &str) -> String {
    let dbs = |t, m| network_curve(t, m).into_iter().map(db).collect::<Vec<_>>();
    let mut data: Vec<(String, Vec<f64>, bool)> = Vec::new();
    for (m, tag) in [(Metric::MsdW, "w"), (Metric::MsdH, "h")] {
        data.push((format!("MSD_{tag} sim"), dbs(&series.sim, m), false));
        if let Some(th) = &series.theory {
            data.push((format!("MSD_{tag} theory"), dbs(th, m), true));
        }
    }
    let curves: Vec<Curve<'_>> = data
        .iter()
        .map(|(l, v, d)| Curve {
            label: l,
            values: v,
            dashed: *d,
        })
        .collect();
    learning_curves(
        &format!("{name}: network MSD, {} ({} trials)", series.label, series.trials),
        "MSD (dB)",
        &curves,
    )
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let started = Instant::now();
    let exp = Experiment::build(cfg)?;
    let dir = &cfg.output_dir;
    let mut series = Vec::new();
    let mut predictions = Vec::new();
    let mut summaries = Vec::new();
    let mut files = Vec::new();
    for &a in &cfg.algorithms {
        let prediction = predict(&exp, a)?;
        let mut s = simulate_series(&exp, a)?;
        s.theory = prediction.as_ref().and_then(|p| p.curves.clone());
        let steady = steady_from_tail(&s.sim, cfg.steady_window).to_db();
        let theory = prediction.as_ref().map(|p| TheoryBrief {
            headline: p.report.headline.clone(),
            verdict: p.report.verdict,
            spectral_radius: p.report.spectral_radius,
            spectral_radius_bound: p.report.spectral_radius_bound,
            step_size_bounds: p.report.step_size_bounds.clone(),
            steady_state_db: p.report.steady_state_db.clone(),
        });
        let delta = theory.as_ref().and_then(|t| t.steady_state_db.as_ref()).map(|th| Deltas {
            msd_w_db: steady.msd_w.network - th.msd_w.network,
            msd_h_db: steady.msd_h.network - th.msd_h.network,
            emse_db: steady.emse.network - th.emse.network,
        });
        let step = match exp.algorithm(a) {
            Algorithm::Centralized { step } => Some(step),
            _ => None,
        };

        let csv = artifact(dir, &cfg.name, &format!("{}.csv", s.label));
        write_series(&csv, &s)?;
        let svg = artifact(dir, &cfg.name, &format!("{}.svg", s.label));
        write_text(&svg, &plot(&s, &cfg.name))?;
        files.extend([csv, svg]);
        if let Some(p) = &prediction {
            let path = artifact(dir, &cfg.name, &format!("{}_theory.json", s.label));
            p.report.write(&path)?;
            files.push(path);
        }
        summaries.push(AlgorithmSummary {
            label: s.label.clone(),
            step,
            steady_state_db: steady,
            theory,
            delta,
        });
        series.push(s);
        predictions.push(prediction);
    }
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        seed: cfg.seed,
        trials: cfg.trials,
        horizon: cfg.horizon,
        steady_window: cfg.steady_window,
        algorithms: summaries,
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    let path = artifact(dir, &cfg.name, "summary.json");
    write_text(&path, &(serde_json::to_string_pretty(&summary).expect("summaries serialize") + "\n"))?;
    files.push(path);
    Ok(RunOutput {
        series,
        predictions,
        summary,
        files,
    })
}
