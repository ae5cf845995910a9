//! Turns a validated configuration into scenario, data source and truth.
//!
//! Random experiment parameters (`w°`, covariances, noise levels) come from
//! the stream `derive_seed(seed, &[SETUP_STREAM])`, disjoint from the trial
//! streams `derive_seed(seed, &[t])` for any realistic trial count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use sdlms_core::basis::{BasisSet, BasisSet2D};
use sdlms_core::estimators::Algorithm;
use sdlms_core::network::{CombinationPolicy, NetworkGraph};
use sdlms_core::pde_model::{
    poisson_solve, GaussianStream, GroundTruthModel, Poisson2DProblem, PoissonField,
    PoissonStream, RegressorSpec, SampleBatch, SampleSource,
};
use sdlms_core::rng;
use sdlms_core::scenario::Scenario;

use crate::config::{AlgorithmConfig, ExperimentConfig, Regressors, ScenarioKind, Topology, Truth, Weights};
use crate::error::{HarnessError, Result};

pub const SETUP_STREAM: u64 = u64::MAX;

pub enum Source {
    Gaussian(GaussianStream),
    Poisson {
        stream: PoissonStream,
        problem: Poisson2DProblem,
        field: PoissonField,
    },
}

impl SampleSource for Source {
    fn nodes(&self) -> usize {
        match self {
            Source::Gaussian(s) => s.nodes(),
            Source::Poisson { stream, .. } => stream.nodes(),
        }
    }

    fn m(&self) -> usize {
        match self {
            Source::Gaussian(s) => s.m(),
            Source::Poisson { stream, .. } => stream.m(),
        }
    }

    fn truth(&self) -> &[DVector<f64>] {
        match self {
            Source::Gaussian(s) => s.truth(),
            Source::Poisson { stream, .. } => stream.truth(),
        }
    }

    fn fill(&self, seed: u64, i: u64, batch: &mut SampleBatch) {
        match self {
            Source::Gaussian(s) => s.fill(seed, i, batch),
            Source::Poisson { stream, .. } => stream.fill(seed, i, batch),
        }
    }
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: NetworkGraph,
    pub scenario: Scenario,
    pub source: Source,
    /// Gaussian scenarios only.
    pub spec: Option<RegressorSpec>,
    pub truth: GroundTruthModel,
    /// `w°`, when the truth lies in the basis span by construction.
    pub global: Option<DVector<f64>>,
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.first().map_or(0, Vec::len), |r, c| rows[r][c])
}

fn policy(cfg: &ExperimentConfig, graph: &NetworkGraph) -> Result<CombinationPolicy> {
    let c = &cfg.combination;
    let left = |w: &Weights| match w {
        Weights::Rule(r) => r.left_stochastic(graph),
        Weights::Matrix(m) => matrix(m),
    };
    let right = |w: &Weights| match w {
        Weights::Rule(r) => r.right_stochastic(graph),
        Weights::Matrix(m) => matrix(m),
    };
    Ok(CombinationPolicy::new(left(&c.a1), left(&c.a2), right(&c.c), Some(graph))?)
}

fn graph(cfg: &ExperimentConfig) -> Result<NetworkGraph> {
    let g = match &cfg.topology {
        Topology::Line => NetworkGraph::line(cfg.nodes)?,
        Topology::Complete => NetworkGraph::complete(cfg.nodes)?,
        Topology::Grid { nx, ny } => {
            if nx * ny != cfg.nodes {
                return Err(HarnessError::config(format!(
                    "grid {nx} × {ny} does not have {} nodes",
                    cfg.nodes
                )));
            }
            NetworkGraph::grid(*nx, *ny)?
        }
        Topology::Edges { edges } => NetworkGraph::from_edges(cfg.nodes, edges)?,
    };
    Ok(g)
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let cfg = config.clone();
        let n = cfg.nodes;
        let graph = graph(&cfg)?;
        let policy = policy(&cfg, &graph)?;
        let steps = cfg.step_size.expand(n, "step_size")?;
        let mut setup_rng = rng::stream(cfg.seed, &[SETUP_STREAM]);

        let (basis, source, spec, truth, global) = match cfg.scenario {
            ScenarioKind::Poisson2d => {
                let p = cfg.poisson.as_ref().expect("validated");
                let n_b2 = cfg.n_b2.expect("validated");
                let basis = BasisSet2D::sample_interior(p.nx, p.ny, 1.0, 1.0, cfg.n_b, n_b2)?.into_set();
                let problem = Poisson2DProblem::with_grid(p.nx, p.ny)?;
                let field = poisson_solve(&problem, p.jacobi)?;
                let noise = match p.snr_db {
                    Some([lo, hi]) => PoissonStream::noise_for_snr(&problem, &mut setup_rng, (lo, hi))?,
                    None => vec![0.0; n],
                };
                let stream = PoissonStream::new(&problem, &field, noise)?;
                let truth = GroundTruthModel::from_local(stream.truth().to_vec())?;
                let source = Source::Poisson {
                    stream,
                    problem,
                    field,
                };
                (basis, source, None, truth, None)
            }
            ScenarioKind::Line1d | ScenarioKind::Custom => {
                let positions = cfg
                    .positions
                    .clone()
                    .unwrap_or_else(|| (1..=n).map(|k| k as f64 / (n + 1) as f64).collect());
                let basis = BasisSet::sample(&positions, 1.0, cfg.n_b)?;
                let w = match cfg.truth.as_ref().expect("validated") {
                    Truth::Random { range: [lo, hi] } => {
                        DVector::from_fn(cfg.block(), |_, _| setup_rng.random_range(*lo..=*hi))
                    }
                    Truth::Global { w } => DVector::from_column_slice(w),
                };
                let spec = match cfg.regressors.as_ref().expect("validated") {
                    Regressors::RandomIsotropic {
                        trace_range,
                        noise_range,
                    } => RegressorSpec::random_isotropic(
                        &mut setup_rng,
                        n,
                        cfg.m,
                        (trace_range[0], trace_range[1]),
                        (noise_range[0], noise_range[1]),
                    )?,
                    Regressors::Explicit { covariances, noise } => {
                        let covs = covariances.expand(n, "covariances")?;
                        RegressorSpec::new_semidefinite(
                            covs.iter().map(|c| matrix(c)).collect(),
                            noise.expand(n, "noise")?,
                        )?
                    }
                };
                let truth = GroundTruthModel::from_global(&basis, cfg.m, w.clone())?;
                let source = Source::Gaussian(GaussianStream::new(truth.clone(), spec.clone())?);
                (basis, source, Some(spec), truth, Some(w))
            }
        };

        let mut scenario = Scenario::new(basis, cfg.m, policy, steps)?;
        if let Some(init) = &cfg.initial {
            scenario = scenario.with_initial(vec![DVector::from_column_slice(init); n])?;
        }
        Ok(Self {
            config: cfg,
            graph,
            scenario,
            source,
            spec,
            truth,
            global,
        })
    }

    /// Core algorithm for a configured entry.
    pub fn algorithm(&self, a: AlgorithmConfig) -> Algorithm {
        match a {
            AlgorithmConfig::Diffusion => Algorithm::Diffusion,
            AlgorithmConfig::Atc => Algorithm::Atc,
            AlgorithmConfig::Centralized { step } => Algorithm::Centralized {
                step: step.unwrap_or_else(|| {
                    let mu = self.scenario.step_sizes();
                    mu.iter().sum::<f64>() / (mu.len() * mu.len()) as f64
                }),
            },
        }
    }

    /// The scenario whose theory describes algorithm `a`: ATC runs with
    /// `(I, A₂, I)`; the centralized solution has no network theory.
    pub fn theory_scenario(&self, a: AlgorithmConfig) -> Result<Option<Scenario>> {
        Ok(match a {
            AlgorithmConfig::Diffusion => Some(self.scenario.clone()),
            AlgorithmConfig::Atc => {
                let policy = CombinationPolicy::atc(self.scenario.policy().a2().clone(), Some(&self.graph))?;
                Some(
                    Scenario::new(
                        self.scenario.basis().clone(),
                        self.scenario.m(),
                        policy,
                        self.scenario.step_sizes().to_vec(),
                    )?
                    .with_initial(self.scenario.initial().to_vec())?,
                )
            }
            AlgorithmConfig::Centralized { .. } => None,
        })
    }
}
