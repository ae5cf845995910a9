//! Theory-only report: classification, step-size bounds, steady state and
//! learning curves.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sdlms_core::estimators::Trajectory;
use sdlms_core::theory::{
    classify, learning_curves, mean_limit, replicate, spectral_radii, steady_state, step_size_bound,
    unit_space_for, SteadyStateMethod, TheoryArtifacts, Verdict, DEFAULT_UNIT_TOL,
};

use crate::config::{AlgorithmConfig, SCHEMA_VERSION};
use crate::csv_io::write_text;
use crate::error::{HarnessError, Result};
use crate::metrics::{db, network_curve, Levels, Metric, SteadyLevels};
use crate::setup::Experiment;

/// Learning curves are skipped when `D³·horizon` exceeds this many
/// multiply-adds (about a minute of dense work).
pub const MAX_CURVE_WORK: f64 = 4e10;

/// Network learning curves in dB, one entry per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCurves {
    pub msd_w_db: Vec<f64>,
    pub msd_h_db: Vec<f64>,
    pub emse_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub schema_version: u32,
    pub name: String,
    pub algorithm: String,
    pub nodes: usize,
    pub dim: usize,
    pub horizon: usize,
    /// One-line verdict for humans.
    pub headline: String,
    pub verdict: Verdict,
    pub spectral_radius: f64,
    /// `ρ(I − ℳℛ)`, an upper bound on `ρ(ℬ)`.
    pub spectral_radius_bound: f64,
    pub unit_eigenvalues: usize,
    pub nullity: usize,
    pub reasons: Vec<String>,
    /// `(re, im)` of the eigenvalue closest to `−1`.
    pub nearest_to_minus_one: Option<(f64, f64)>,
    pub step_sizes: Vec<f64>,
    /// `2/λ_max(R_k)`.
    pub step_size_bounds: Vec<f64>,
    /// `‖lim E w_i − 𝟙 ⊗ w°‖`; absent when the mean does not converge.
    pub bias_norm: Option<f64>,
    pub steady_state: Option<SteadyLevels>,
    pub steady_state_db: Option<SteadyLevels>,
    pub learning_curves: Option<NetworkCurves>,
}

/// A report plus the per-node curves it summarizes.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub report: TheoryReport,
    pub curves: Option<Trajectory>,
}

impl TheoryReport {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let r: Self = serde_json::from_str(&text).map_err(|e| HarnessError::json(path, e))?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::schema(format!(
                "{}: theory report schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                r.schema_version
            )));
        }
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(serde_json::to_string_pretty(self).expect("reports serialize") + "\n"))
    }
}

fn headline(verdict: Verdict, rho: f64, minus_one: Option<(f64, f64)>, reasons: &[String]) -> String {
    match verdict {
        Verdict::StrictlyStable => format!("strictly stable, ρ(ℬ) = {rho:.9}"),
        Verdict::PowerConvergent => format!("power-convergent, ρ(ℬ) = {rho:.9}"),
        Verdict::NonConvergent => match minus_one {
            Some((re, im)) if (re + 1.0).hypot(im) <= DEFAULT_UNIT_TOL => {
                "non-convergent, eigenvalue at −1".to_string()
            }
            _ => format!("non-convergent, {}", reasons.first().map_or("", String::as_str)),
        },
    }
}

/// Predicts the behaviour of algorithm `a` without simulating. A
/// non-convergent network yields a report without steady-state values.
pub fn predict(exp: &Experiment, a: AlgorithmConfig) -> Result<Option<Prediction>> {
    let Some(spec) = &exp.spec else {
        return Ok(None);
    };
    let Some(scenario) = exp.theory_scenario(a)? else {
        return Ok(None);
    };
    let art = TheoryArtifacts::assemble(&scenario, spec, &exp.truth)?;
    let cls = classify(&art, DEFAULT_UNIT_TOL)?;
    let (_, rho_bound) = spectral_radii(&art)?;
    let minus_one = cls.closest_to((-1.0, 0.0));
    let horizon = exp.config.horizon;

    let mut bias_norm = None;
    let mut steady = None;
    let mut curves = None;
    if cls.verdict != Verdict::NonConvergent {
        let unit = unit_space_for(&art, &cls)?;
        if let Some(w) = &exp.global {
            let lim = mean_limit(&art, &unit, &art.initial_mean)?;
            bias_norm = Some((lim - replicate(w, art.nodes())).norm());
            let ss = steady_state(&art, &unit, SteadyStateMethod::Auto)?;
            steady = Some(SteadyLevels {
                msd_w: Levels::from_nodes(ss.msd_w),
                msd_h: Levels::from_nodes(ss.msd_h),
                emse: Levels::from_nodes(ss.emse),
            });
            let d = art.dim() as f64;
            if d * d * d * horizon as f64 <= MAX_CURVE_WORK {
                curves = Some(learning_curves(&art, horizon)?);
            }
        }
    }
    let network = curves.as_ref().map(|t| {
        let curve = |m| network_curve(t, m).into_iter().map(db).collect();
        NetworkCurves {
            msd_w_db: curve(Metric::MsdW),
            msd_h_db: curve(Metric::MsdH),
            emse_db: curve(Metric::Emse),
        }
    });
    let report = TheoryReport {
        schema_version: SCHEMA_VERSION,
        name: exp.config.name.clone(),
        algorithm: a.label().to_string(),
        nodes: art.nodes(),
        dim: art.dim(),
        horizon,
        headline: headline(cls.verdict, cls.spectral_radius, minus_one, &cls.reasons),
        verdict: cls.verdict,
        spectral_radius: cls.spectral_radius,
        spectral_radius_bound: rho_bound,
        unit_eigenvalues: cls.unit_count,
        nullity: cls.nullity,
        reasons: cls.reasons.clone(),
        nearest_to_minus_one: minus_one,
        step_sizes: art.step_sizes.clone(),
        step_size_bounds: step_size_bound(&art),
        bias_norm,
        steady_state_db: steady.as_ref().map(SteadyLevels::to_db),
        steady_state: steady,
        learning_curves: network,
    };
    Ok(Some(Prediction { report, curves }))
}
