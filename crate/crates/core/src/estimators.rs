//! Centralized LMS, general diffusion LMS, adapt-then-combine diffusion and
//! the Monte-Carlo trial driver.
//!
//! Every step is synchronous: all reads come from the state at `i − 1` and
//! all writes go to separate buffers, so the node visiting order is
//! irrelevant.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{check_len, Error, Result};
use crate::network::SparseColumns;
use crate::pde_model::{SampleBatch, SampleSource};
use crate::scenario::Scenario;

/// Per-node state of a diffusion network.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    w: Vec<DVector<f64>>,
    phi: Vec<DVector<f64>>,
    psi: Vec<DVector<f64>>,
    h: Vec<DVector<f64>>,
    iteration: u64,
}

impl EstimatorState {
    /// State at `i = −1` from the scenario's initial estimates.
    pub fn new(scenario: &Scenario) -> Self {
        let w = scenario.initial().to_vec();
        let h = refresh_h(scenario.basis(), &w);
        Self {
            phi: w.clone(),
            psi: w.clone(),
            w,
            h,
            iteration: 0,
        }
    }

    /// `w_{k,i}`.
    pub fn w(&self) -> &[DVector<f64>] {
        &self.w
    }

    /// `h_{k,i} = B_k w_{k,i}`.
    pub fn h(&self) -> &[DVector<f64>] {
        &self.h
    }

    /// Number of completed steps.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }
}

/// Single fusion-centre estimate shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedState {
    w: DVector<f64>,
    h: Vec<DVector<f64>>,
    step: f64,
    iteration: u64,
}

impl CentralizedState {
    pub fn new(basis: &BasisSet, initial: DVector<f64>, step: f64) -> Result<Self> {
        if initial.is_empty() || !initial.len().is_multiple_of(basis.count()) {
            return Err(Error::domain("centralized estimate length is not a multiple of N_b"));
        }
        if !(step.is_finite() && step >= 0.0) {
            return Err(Error::domain(format!("step size is {step}")));
        }
        let h = (0..basis.nodes()).map(|k| basis.apply(k, &initial)).collect();
        Ok(Self {
            w: initial,
            h,
            step,
            iteration: 0,
        })
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn h(&self) -> &[DVector<f64>] {
        &self.h
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }
}

fn refresh_h(basis: &BasisSet, w: &[DVector<f64>]) -> Vec<DVector<f64>> {
    w.iter().enumerate().map(|(k, wk)| basis.apply(k, wk)).collect()
}

fn check_batch(batch: &SampleBatch, nodes: usize, m: usize) -> Result<()> {
    check_len("sample batch nodes", nodes, batch.nodes())?;
    check_len("sample batch regressors", nodes, batch.u.len())?;
    for u in &batch.u {
        check_len("regressor length", m, u.len())?;
    }
    Ok(())
}

/// `out += scale · B_ℓᵀ u_ℓᵀ (d_ℓ − u_ℓ B_ℓ at)`, using `B_ℓ = I_M ⊗ b_ℓᵀ`.
fn accumulate_gradient(
    b: &DVector<f64>,
    u: &DVector<f64>,
    d: f64,
    at: &DVector<f64>,
    scale: f64,
    out: &mut DVector<f64>,
) {
    let n_b = b.len();
    let mut pred = 0.0;
    for (m, &um) in u.iter().enumerate() {
        pred += um * b.dot(&at.rows(m * n_b, n_b));
    }
    let e = scale * (d - pred);
    for (m, &um) in u.iter().enumerate() {
        out.rows_mut(m * n_b, n_b).axpy(e * um, b, 1.0);
    }
}

/// `dst_k = Σ_ℓ a_{ℓk} src_ℓ`.
fn combine(cols: &SparseColumns, src: &[DVector<f64>], dst: &mut [DVector<f64>]) {
    for (k, out) in dst.iter_mut().enumerate() {
        out.fill(0.0);
        for &(l, a) in &cols[k] {
            out.axpy(a, &src[l], 1.0);
        }
    }
}

fn finish(state: &mut EstimatorState, basis: &BasisSet) {
    for (k, (h, w)) in state.h.iter_mut().zip(&state.w).enumerate() {
        h.copy_from(&basis.apply(k, w));
    }
    state.iteration += 1;
}

/// One iteration of general diffusion LMS with `{A₁, A₂, C}`:
/// combine with `A₁`, adapt on `C`-weighted neighbourhood data, combine
/// with `A₂`, then refresh `h_k = B_k w_k`.
pub fn diffusion_step(
    state: &mut EstimatorState,
    batch: &SampleBatch,
    scenario: &Scenario,
) -> Result<()> {
    let n = scenario.nodes();
    check_batch(batch, n, scenario.m())?;
    check_len("estimator state nodes", n, state.w.len())?;
    let basis = scenario.basis();
    let policy = scenario.policy();

    combine(policy.a1_cols(), &state.w, &mut state.phi);
    let c_cols = policy.c_cols();
    for k in 0..n {
        let mu = scenario.step_sizes()[k];
        let psi = &mut state.psi[k];
        psi.copy_from(&state.phi[k]);
        for &(l, c) in &c_cols[k] {
            accumulate_gradient(basis.row(l), &batch.u[l], batch.d[l], &state.phi[k], mu * c, psi);
        }
    }
    combine(policy.a2_cols(), &state.psi, &mut state.w);
    finish(state, basis);
    Ok(())
}

/// Adapt-then-combine: each node adapts on its own data, then combines
/// with the policy's `A₂`. `A₁` and `C` are taken to be identity.
pub fn atc_step(state: &mut EstimatorState, batch: &SampleBatch, scenario: &Scenario) -> Result<()> {
    let n = scenario.nodes();
    check_batch(batch, n, scenario.m())?;
    check_len("estimator state nodes", n, state.w.len())?;
    let basis = scenario.basis();
    for k in 0..n {
        let psi = &mut state.psi[k];
        psi.copy_from(&state.w[k]);
        let mu = scenario.step_sizes()[k];
        accumulate_gradient(basis.row(k), &batch.u[k], batch.d[k], &state.w[k], mu, psi);
    }
    combine(scenario.policy().a2_cols(), &state.psi, &mut state.w);
    finish(state, basis);
    Ok(())
}

/// `w ← w + μ Σ_k B_kᵀ u_kᵀ (d_k − u_k B_k w)`, then `h_k = B_k w`.
pub fn centralized_step(
    state: &mut CentralizedState,
    batch: &SampleBatch,
    basis: &BasisSet,
) -> Result<()> {
    let n = basis.nodes();
    let m = state.w.len() / basis.count();
    check_batch(batch, n, m)?;
    let prev = state.w.clone();
    for k in 0..n {
        accumulate_gradient(basis.row(k), &batch.u[k], batch.d[k], &prev, state.step, &mut state.w);
    }
    for (k, h) in state.h.iter_mut().enumerate() {
        h.copy_from(&basis.apply(k, &state.w));
    }
    state.iteration += 1;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Algorithm {
    /// General diffusion with the scenario's `{A₁, A₂, C}`.
    Diffusion,
    /// ATC with the scenario's `A₂`.
    Atc,
    /// Fusion centre with a single step size.
    Centralized { step: f64 },
}

/// Everything visible after step `i`.
pub struct StepRecord<'a> {
    pub iteration: u64,
    pub batch: &'a SampleBatch,
    /// `h_{k,i−1}`, used for a-priori errors.
    pub prior_h: &'a [DVector<f64>],
    pub w: &'a [DVector<f64>],
    pub h: &'a [DVector<f64>],
}

/// Runs `horizon` iterations on the samples of `source` keyed by `seed`,
/// calling `observer` after each one.
pub fn simulate<S, F>(
    scenario: &Scenario,
    source: &S,
    algorithm: Algorithm,
    horizon: usize,
    seed: u64,
    mut observer: F,
) -> Result<()>
where
    S: SampleSource + ?Sized,
    F: FnMut(&StepRecord<'_>),
{
    let n = scenario.nodes();
    check_len("sample source nodes", n, source.nodes())?;
    check_len("sample source regressor length", scenario.m(), source.m())?;
    let mut batch = SampleBatch::zeros(n, scenario.m());
    let mut prior_h: Vec<DVector<f64>>;
    match algorithm {
        Algorithm::Diffusion | Algorithm::Atc => {
            let mut state = EstimatorState::new(scenario);
            for i in 0..horizon as u64 {
                source.fill(seed, i, &mut batch);
                prior_h = state.h.clone();
                if algorithm == Algorithm::Diffusion {
                    diffusion_step(&mut state, &batch, scenario)?;
                } else {
                    atc_step(&mut state, &batch, scenario)?;
                }
                observer(&StepRecord {
                    iteration: i,
                    batch: &batch,
                    prior_h: &prior_h,
                    w: &state.w,
                    h: &state.h,
                });
            }
        }
        Algorithm::Centralized { step } => {
            let init = scenario.initial()[0].clone();
            let mut state = CentralizedState::new(scenario.basis(), init, step)?;
            let mut copies = vec![state.w.clone(); n];
            for i in 0..horizon as u64 {
                source.fill(seed, i, &mut batch);
                prior_h = state.h.clone();
                centralized_step(&mut state, &batch, scenario.basis())?;
                for c in copies.iter_mut() {
                    c.copy_from(&state.w);
                }
                observer(&StepRecord {
                    iteration: i,
                    batch: &batch,
                    prior_h: &prior_h,
                    w: &copies,
                    h: &state.h,
                });
            }
        }
    }
    Ok(())
}

/// Squared errors of one trial, stored row-major by iteration
/// (`[i·N + k]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: usize,
    pub horizon: usize,
    /// `‖w° − w_{k,i}‖²`; NaN when `w°` is unknown.
    pub msd_w: Vec<f64>,
    /// `‖h°_k − h_{k,i}‖²`.
    pub msd_h: Vec<f64>,
    /// `|u_{k,i}(h°_k − h_{k,i−1})|²`.
    pub emse: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(nodes: usize, horizon: usize) -> Self {
        Self {
            nodes,
            horizon,
            msd_w: vec![0.0; nodes * horizon],
            msd_h: vec![0.0; nodes * horizon],
            emse: vec![0.0; nodes * horizon],
        }
    }

    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.nodes + k
    }

    /// Network average of a metric at iteration `i`.
    pub fn network(&self, metric: &[f64], i: usize) -> f64 {
        let row = &metric[i * self.nodes..(i + 1) * self.nodes];
        row.iter().sum::<f64>() / self.nodes as f64
    }

    /// Adds `other` element-wise (for Monte-Carlo accumulation).
    pub fn accumulate(&mut self, other: &Trajectory) -> Result<()> {
        check_len("trajectory length", self.msd_w.len(), other.msd_w.len())?;
        for (a, b) in [
            (&mut self.msd_w, &other.msd_w),
            (&mut self.msd_h, &other.msd_h),
            (&mut self.emse, &other.emse),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self
            .msd_w
            .iter_mut()
            .chain(self.msd_h.iter_mut())
            .chain(self.emse.iter_mut())
        {
            *v *= factor;
        }
    }
}

/// Runs one trial and records squared errors against `source.truth()` and,
/// when given, the global truth `w°`.
pub fn run_trial<S: SampleSource + ?Sized>(
    scenario: &Scenario,
    source: &S,
    algorithm: Algorithm,
    horizon: usize,
    seed: u64,
    global: Option<&DVector<f64>>,
) -> Result<Trajectory> {
    if let Some(w) = global {
        check_len("global truth", scenario.block(), w.len())?;
    }
    let n = scenario.nodes();
    let truth = source.truth();
    let mut out = Trajectory::zeros(n, horizon);
    simulate(scenario, source, algorithm, horizon, seed, |rec| {
        let i = rec.iteration as usize;
        for k in 0..n {
            let idx = i * n + k;
            out.msd_w[idx] = global.map_or(f64::NAN, |w| (w - &rec.w[k]).norm_squared());
            out.msd_h[idx] = (&truth[k] - &rec.h[k]).norm_squared();
            let ea = rec.batch.u[k].dot(&(&truth[k] - &rec.prior_h[k]));
            out.emse[idx] = ea * ea;
        }
    })?;
    Ok(out)
}
