//! Versioned JSON experiment configuration.
//!
//! Per-node quantities (step sizes, noise variances, covariances) accept
//! either one shared value or exactly `N` values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sdlms_core::network::CombinationRule;
use sdlms_core::pde_model::JacobiSettings;

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Nodes equally spaced on `[0, 1]`, Gaussian regressors.
    #[serde(rename = "line-1d")]
    Line1d,
    /// Interior of a square grid, input estimation for the Poisson equation.
    #[serde(rename = "poisson-2d")]
    Poisson2d,
    /// Like `line-1d` with explicit positions or topology.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Topology {
    Line,
    Complete,
    Grid { nx: usize, ny: usize },
    Edges { edges: Vec<(usize, usize)> },
}

/// A named rule or an explicit `N × N` matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weights {
    Rule(CombinationRule),
    Matrix(Vec<Vec<f64>>),
}

/// `A₁`, `A₂` are left-stochastic. Matrices given for `C` are
/// right-stochastic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Combination {
    pub a1: Weights,
    pub a2: Weights,
    pub c: Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode<T> {
    Shared(T),
    Each(Vec<T>),
}

impl<T: Clone> PerNode<T> {
    pub fn expand(&self, n: usize, what: &str) -> Result<Vec<T>> {
        match self {
            PerNode::Shared(v) => Ok(vec![v.clone(); n]),
            PerNode::Each(vs) if vs.len() == n => Ok(vs.clone()),
            PerNode::Each(vs) if vs.len() == 1 => Ok(vec![vs[0].clone(); n]),
            PerNode::Each(vs) => Err(HarnessError::config(format!(
                "{what}: expected 1 or {n} values, got {}",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Regressors {
    /// `R_{u,k} = (Tr/M)·I` with `Tr ~ U[trace_range]`, `σ²_{v,k} ~ U[noise_range]`.
    RandomIsotropic {
        trace_range: [f64; 2],
        noise_range: [f64; 2],
    },
    /// Positive semi-definite covariances, row-major.
    Explicit {
        covariances: PerNode<Vec<Vec<f64>>>,
        noise: PerNode<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum Truth {
    /// Entries of `w°` drawn uniformly from `range`.
    Random { range: [f64; 2] },
    Global { w: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum AlgorithmConfig {
    Diffusion,
    Atc,
    /// Defaults to the mean diffusion step divided by `N`.
    Centralized {
        #[serde(default)]
        step: Option<f64>,
    },
}

impl AlgorithmConfig {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmConfig::Diffusion => "diffusion",
            AlgorithmConfig::Atc => "atc",
            AlgorithmConfig::Centralized { .. } => "centralized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonConfig {
    pub nx: usize,
    pub ny: usize,
    /// Per-node design SNR range in dB; absent means noise-free.
    #[serde(default)]
    pub snr_db: Option<[f64; 2]>,
    #[serde(default)]
    pub jacobi: JacobiSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub scenario: ScenarioKind,
    /// `N`; for `poisson-2d` it must equal `nx·ny`.
    pub nodes: usize,
    pub m: usize,
    /// `N_b` (first axis in 2D).
    pub n_b: usize,
    /// Second-axis basis count in 2D.
    #[serde(default)]
    pub n_b2: Option<usize>,
    /// Node positions on `[0, 1]`; default `k/(N+1)`.
    #[serde(default)]
    pub positions: Option<Vec<f64>>,
    pub topology: Topology,
    pub combination: Combination,
    pub step_size: PerNode<f64>,
    #[serde(default)]
    pub regressors: Option<Regressors>,
    #[serde(default)]
    pub truth: Option<Truth>,
    /// `w_{k,−1}` for every node; default zero.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    pub algorithms: Vec<AlgorithmConfig>,
    pub trials: usize,
    pub horizon: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Trailing fraction of the horizon averaged for simulated steady state.
    #[serde(default = "default_window")]
    pub steady_window: f64,
    #[serde(default)]
    pub poisson: Option<PoissonConfig>,
}

fn default_window() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::json(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn is_2d(&self) -> bool {
        self.scenario == ScenarioKind::Poisson2d
    }

    /// Rejects every inconsistency that can be detected without building
    /// matrices.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HarnessError::config(m));
        if self.schema_version != SCHEMA_VERSION {
            return err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.trials == 0 {
            return err("trials must be at least 1".into());
        }
        if self.horizon == 0 {
            return err("horizon must be at least 1".into());
        }
        if self.nodes == 0 || self.m == 0 || self.n_b == 0 {
            return err("nodes, m and n_b must be positive".into());
        }
        if self.algorithms.is_empty() {
            return err("at least one algorithm is required".into());
        }
        if !(self.steady_window > 0.0 && self.steady_window <= 1.0) {
            return err(format!("steady_window must lie in (0, 1], got {}", self.steady_window));
        }
        for mu in self.step_size.expand(self.nodes, "step_size")? {
            if !(mu >= 0.0 && mu.is_finite()) {
                return err(format!("step sizes must be finite and non-negative, got {mu}"));
            }
        }
        if let Some(AlgorithmConfig::Centralized { step: Some(s) }) = self
            .algorithms
            .iter()
            .find(|a| matches!(a, AlgorithmConfig::Centralized { step: Some(_) }))
        {
            if !(*s >= 0.0 && s.is_finite()) {
                return err(format!("centralized step must be finite and non-negative, got {s}"));
            }
        }
        if let Some(w) = &self.initial {
            if w.len() != self.block() {
                return err(format!("initial has {} entries, expected M·N_b = {}", w.len(), self.block()));
            }
        }
        if let Some(p) = &self.positions {
            if p.len() != self.nodes {
                return err(format!("{} positions for {} nodes", p.len(), self.nodes));
            }
            if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return err("positions must lie in [0, 1]".into());
            }
        }
        match self.scenario {
            ScenarioKind::Poisson2d => {
                let Some(p) = &self.poisson else {
                    return err("poisson-2d needs a `poisson` section".into());
                };
                if p.nx * p.ny != self.nodes {
                    return err(format!("nodes = {} but the grid has {}", self.nodes, p.nx * p.ny));
                }
                if self.m != 1 {
                    return err("poisson-2d has scalar regressors (m = 1)".into());
                }
                if self.n_b2.is_none() {
                    return err("poisson-2d needs n_b2".into());
                }
                if let Some([lo, hi]) = p.snr_db {
                    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                        return err(format!("snr_db range [{lo}, {hi}] is invalid"));
                    }
                }
            }
            ScenarioKind::Line1d | ScenarioKind::Custom => {
                if self.regressors.is_none() {
                    return err("regressors are required".into());
                }
                if self.truth.is_none() {
                    return err("truth is required".into());
                }
                if self.scenario == ScenarioKind::Line1d && self.positions.is_some() {
                    return err("line-1d places nodes itself; use scenario `custom`".into());
                }
                if let Some(Truth::Global { w }) = &self.truth {
                    if w.len() != self.block() {
                        return err(format!("w has {} entries, expected M·N_b = {}", w.len(), self.block()));
                    }
                }
                if let Some(Regressors::RandomIsotropic {
                    trace_range,
                    noise_range,
                }) = &self.regressors
                {
                    for (name, [lo, hi]) in [("trace_range", trace_range), ("noise_range", noise_range)] {
                        if !(0.0 <= *lo && lo <= hi && hi.is_finite()) {
                            return err(format!("{name} [{lo}, {hi}] is invalid"));
                        }
                    }
                }
            }
        }
        for (name, w) in [
            ("a1", &self.combination.a1),
            ("a2", &self.combination.a2),
            ("c", &self.combination.c),
        ] {
            if let Weights::Matrix(rows) = w {
                if rows.len() != self.nodes || rows.iter().any(|r| r.len() != self.nodes) {
                    return err(format!("{name} must be {0} × {0}", self.nodes));
                }
            }
        }
        Ok(())
    }

    /// `M·N_b` (`N_b = n_b·n_b2` in 2D).
    pub fn block(&self) -> usize {
        self.m * self.n_b * self.n_b2.unwrap_or(1)
    }
}
