//! Ground truth and synthetic measurement streams.
//!
//! Two data models are provided. [`GaussianStream`] draws coloured Gaussian
//! regressors and white observation noise around a space-varying truth
//! `h°_k`. [`PoissonStream`] builds the reference signal of a 2D Poisson
//! input-estimation problem from noisy field samples through the five-point
//! stencil, with the deterministic regressor `u = 1`.
//!
//! Both are pure functions of `(seed, i)`: the sample of node `k` at
//! iteration `i` comes from the stream `rng::stream(seed, &[i, k])`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::{chebyshev_shifted, BasisSet};
use crate::error::{check_len, Error, Result};
use crate::linalg::{is_symmetric, sqrt_psd};
use crate::rng;

/// Uniform 1D discretization: `Δx = L/(N+1)`, nodes at `kΔx`, `k = 1..N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialDomain {
    length: f64,
    nodes: usize,
    dt: f64,
}

impl SpatialDomain {
    pub fn new(length: f64, nodes: usize, dt: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("domain length must be positive, got {length}")));
        }
        if nodes == 0 {
            return Err(Error::domain("domain needs at least one node"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { length, nodes, dt })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dx(&self) -> f64 {
        self.length / (self.nodes + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `ν = Δt/Δx²`.
    pub fn nu(&self) -> f64 {
        self.dt / (self.dx() * self.dx())
    }

    pub fn positions(&self) -> Vec<f64> {
        let dx = self.dx();
        (1..=self.nodes).map(|k| k as f64 * dx).collect()
    }
}

/// Maps samples `θ_0..θ_{N+1}` to the three stencil weights of the explicit
/// scheme at each interior node:
/// `h°_k = [ν/4(θ_{k−1}+4θ_k−θ_{k+1}), 1−2νθ_k, ν/4(−θ_{k−1}+4θ_k+θ_{k+1})]`.
pub fn discretize_theta_to_h(theta: &[f64], nu: f64) -> Result<Vec<DVector<f64>>> {
    if theta.len() < 3 {
        return Err(Error::domain(format!(
            "need at least 3 diffusivity samples, got {}",
            theta.len()
        )));
    }
    Ok(theta
        .windows(3)
        .map(|w| stencil_weights(w[0], w[1], w[2], nu))
        .collect())
}

fn stencil_weights(prev: f64, here: f64, next: f64, nu: f64) -> DVector<f64> {
    DVector::from_vec(vec![
        nu / 4.0 * (prev + 4.0 * here - next),
        1.0 - 2.0 * nu * here,
        nu / 4.0 * (-prev + 4.0 * here + next),
    ])
}

/// Reference signal of the 1D model with a known input: `d_k(i) = z_k(i) − Δt·q_k(i−1)`.
pub fn heat_reference(z: f64, dt: f64, q_prev: f64) -> f64 {
    z - dt * q_prev
}

/// Space-varying truth `h°_k`, optionally backed by a global coefficient
/// vector `w° = vec(W°ᵀ)` with `h°_k = B_k w°`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    m: usize,
    local: Vec<DVector<f64>>,
    global: Option<DVector<f64>>,
}

impl GroundTruthModel {
    /// Truth generated by a global vector; `h°_k` is computed as `B_k w°`.
    pub fn from_global(basis: &BasisSet, m: usize, w: DVector<f64>) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("parameter dimension M must be positive"));
        }
        check_len("global coefficient vector", m * basis.count(), w.len())?;
        let local = (0..basis.nodes()).map(|k| basis.apply(k, &w)).collect();
        Ok(Self {
            m,
            local,
            global: Some(w),
        })
    }

    /// Truth from the `M × N_b` coefficient matrix `W°` (row `m` holds the
    /// coefficients of component `m`).
    pub fn from_coefficients(basis: &BasisSet, coefficients: &DMatrix<f64>) -> Result<Self> {
        check_len("coefficient columns", basis.count(), coefficients.ncols())?;
        let w = DVector::from_iterator(
            coefficients.len(),
            coefficients.transpose().iter().copied(),
        );
        Self::from_global(basis, coefficients.nrows(), w)
    }

    /// Truth given only node-wise; the basis may or may not span it.
    pub fn from_local(local: Vec<DVector<f64>>) -> Result<Self> {
        let m = local
            .first()
            .map(|h| h.len())
            .ok_or_else(|| Error::domain("truth needs at least one node"))?;
        if m == 0 {
            return Err(Error::domain("parameter dimension M must be positive"));
        }
        for h in &local {
            check_len("local truth", m, h.len())?;
        }
        Ok(Self {
            m,
            local,
            global: None,
        })
    }

    /// Diffusion-PDE truth. The diffusivity is `θ(x) = Σ_n c_n b_n(x/L)`, so
    /// each stencil weight is itself a polynomial of degree `< N_b` in `x`
    /// and is represented exactly by the basis. `W°` is recovered by
    /// interpolation at `N_b` Chebyshev points.
    pub fn from_theta(domain: &SpatialDomain, basis: &BasisSet, theta: &[f64]) -> Result<Self> {
        let n_b = basis.count();
        check_len("diffusivity coefficients", n_b, theta.len())?;
        check_len("basis nodes", domain.nodes(), basis.nodes())?;
        let l = domain.length();
        let dx = domain.dx();
        let nu = domain.nu();
        let theta_at = |x: f64| -> Result<f64> {
            let mut acc = 0.0;
            for (n, c) in theta.iter().enumerate() {
                acc += c * chebyshev_shifted(n + 1, x / l)?;
            }
            Ok(acc)
        };

        let points: Vec<f64> = (0..n_b)
            .map(|j| {
                let t = ((2 * j + 1) as f64 * std::f64::consts::PI / (2 * n_b) as f64).cos();
                0.5 * l * (1.0 + t)
            })
            .collect();
        let mut vander = DMatrix::zeros(n_b, n_b);
        let mut rhs = DMatrix::zeros(n_b, 3);
        for (j, &x) in points.iter().enumerate() {
            for n in 0..n_b {
                vander[(j, n)] = chebyshev_shifted(n + 1, x / l)?;
            }
            let h = stencil_weights(theta_at(x - dx)?, theta_at(x)?, theta_at(x + dx)?, nu);
            rhs.row_mut(j).copy_from(&h.transpose());
        }
        let coeffs = vander
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular Chebyshev interpolation matrix".into()))?;
        Self::from_coefficients(basis, &coeffs.transpose())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.local.len()
    }

    /// `h°_k`.
    pub fn local(&self, k: usize) -> &DVector<f64> {
        &self.local[k]
    }

    pub fn locals(&self) -> &[DVector<f64>] {
        &self.local
    }

    /// `w°`, when the truth is generated by a global vector.
    pub fn global(&self) -> Option<&DVector<f64>> {
        self.global.as_ref()
    }
}

/// Per-node regressor covariances `R_{u,k}` and noise variances `σ²_{v,k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSpec {
    covariances: Vec<DMatrix<f64>>,
    noise: Vec<f64>,
    colorings: Vec<DMatrix<f64>>,
}

impl RegressorSpec {
    /// Requires every `R_{u,k}` symmetric positive-definite and every
    /// `σ²_{v,k} ≥ 0` (zero gives noise-free data).
    pub fn new(covariances: Vec<DMatrix<f64>>, noise: Vec<f64>) -> Result<Self> {
        Self::build(covariances, noise, true)
    }

    /// As [`RegressorSpec::new`] but accepts singular PSD covariances.
    pub fn new_semidefinite(covariances: Vec<DMatrix<f64>>, noise: Vec<f64>) -> Result<Self> {
        Self::build(covariances, noise, false)
    }

    fn build(covariances: Vec<DMatrix<f64>>, noise: Vec<f64>, definite: bool) -> Result<Self> {
        check_len("noise variances", covariances.len(), noise.len())?;
        let m = covariances
            .first()
            .map(|r| r.nrows())
            .ok_or_else(|| Error::domain("regressor spec needs at least one node"))?;
        let mut colorings = Vec::with_capacity(covariances.len());
        for (k, r) in covariances.iter().enumerate() {
            if r.nrows() != m || r.ncols() != m {
                return Err(Error::domain(format!("covariance of node {k} is not {m}×{m}")));
            }
            let scale = r.amax().max(1.0);
            if !is_symmetric(r, 1e-12 * scale) {
                return Err(Error::domain(format!("covariance of node {k} is not symmetric")));
            }
            if definite {
                if r.clone().cholesky().is_none() {
                    return Err(Error::domain(format!(
                        "covariance of node {k} is not positive-definite"
                    )));
                }
            } else {
                let min = r.clone().symmetric_eigenvalues().min();
                if min < -1e-12 * scale {
                    return Err(Error::domain(format!(
                        "covariance of node {k} has negative eigenvalue {min:e}"
                    )));
                }
            }
            colorings.push(sqrt_psd(r));
        }
        if let Some((k, s)) = noise
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s >= 0.0))
        {
            return Err(Error::domain(format!("noise variance of node {k} is {s}")));
        }
        Ok(Self {
            covariances,
            noise,
            colorings,
        })
    }

    /// Draws `Tr(R_{u,k}) ~ U[trace]` and `σ²_{v,k} ~ U[noise]`, with
    /// `R_{u,k} = (Tr/M)·I`.
    pub fn random_isotropic<R: Rng + ?Sized>(
        rng: &mut R,
        nodes: usize,
        m: usize,
        trace: (f64, f64),
        noise: (f64, f64),
    ) -> Result<Self> {
        if m == 0 || nodes == 0 {
            return Err(Error::domain("regressor spec needs M ≥ 1 and N ≥ 1"));
        }
        let draw = |rng: &mut R, (lo, hi): (f64, f64)| -> Result<f64> {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::domain(format!("invalid range [{lo}, {hi}]")));
            }
            Ok(if lo == hi { lo } else { rng.random_range(lo..hi) })
        };
        let mut covs = Vec::with_capacity(nodes);
        let mut vars = Vec::with_capacity(nodes);
        for _ in 0..nodes {
            let tr = draw(rng, trace)?;
            covs.push(DMatrix::identity(m, m) * (tr / m as f64));
            vars.push(draw(rng, noise)?);
        }
        Self::new(covs, vars)
    }

    pub fn nodes(&self) -> usize {
        self.covariances.len()
    }

    pub fn m(&self) -> usize {
        self.covariances[0].nrows()
    }

    pub fn covariance(&self, k: usize) -> &DMatrix<f64> {
        &self.covariances[k]
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn noise_variance(&self, k: usize) -> f64 {
        self.noise[k]
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise
    }

    /// Symmetric square root `F` with `F Fᵀ = R_{u,k}`.
    pub fn coloring(&self, k: usize) -> &DMatrix<f64> {
        &self.colorings[k]
    }
}

/// One iteration's data at every node. `u[k]` holds the row regressor
/// `u_{k,i}` as a column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub iteration: u64,
    pub u: Vec<DVector<f64>>,
    pub d: Vec<f64>,
    /// Observation noise actually added, `d_k − u_k h°_k`.
    pub v: Vec<f64>,
}

impl SampleBatch {
    pub fn zeros(nodes: usize, m: usize) -> Self {
        Self {
            iteration: 0,
            u: vec![DVector::zeros(m); nodes],
            d: vec![0.0; nodes],
            v: vec![0.0; nodes],
        }
    }

    pub fn nodes(&self) -> usize {
        self.d.len()
    }
}

/// A deterministic source of per-iteration samples.
pub trait SampleSource: Sync {
    fn nodes(&self) -> usize;

    /// Regressor length `M`.
    fn m(&self) -> usize;

    /// `h°_k` for every node.
    fn truth(&self) -> &[DVector<f64>];

    /// Overwrites `batch` with the samples of iteration `i`.
    fn fill(&self, seed: u64, i: u64, batch: &mut SampleBatch);

    fn batch(&self, seed: u64, i: u64) -> SampleBatch {
        let mut b = SampleBatch::zeros(self.nodes(), self.m());
        self.fill(seed, i, &mut b);
        b
    }
}

/// `d_k(i) = u_{k,i} h°_k + v_k(i)` with `u_{k,i} ~ N(0, R_{u,k})` and
/// `v_k(i) ~ N(0, σ²_{v,k})`, independent over `k` and `i`.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    truth: GroundTruthModel,
    spec: RegressorSpec,
}

impl GaussianStream {
    pub fn new(truth: GroundTruthModel, spec: RegressorSpec) -> Result<Self> {
        check_len("regressor spec nodes", truth.nodes(), spec.nodes())?;
        check_len("regressor dimension", truth.m(), spec.m())?;
        Ok(Self { truth, spec })
    }

    pub fn ground_truth(&self) -> &GroundTruthModel {
        &self.truth
    }

    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }
}

impl SampleSource for GaussianStream {
    fn nodes(&self) -> usize {
        self.truth.nodes()
    }

    fn m(&self) -> usize {
        self.truth.m()
    }

    fn truth(&self) -> &[DVector<f64>] {
        self.truth.locals()
    }

    fn fill(&self, seed: u64, i: u64, batch: &mut SampleBatch) {
        let m = self.m();
        let mut z = DVector::zeros(m);
        batch.iteration = i;
        for k in 0..self.nodes() {
            let mut r = rng::stream(seed, &[i, k as u64]);
            for zj in z.iter_mut() {
                *zj = StandardNormal.sample(&mut r);
            }
            let n: f64 = StandardNormal.sample(&mut r);
            let u = &mut batch.u[k];
            u.gemv(1.0, self.spec.coloring(k), &z, 0.0);
            let v = self.spec.noise_variance(k).sqrt() * n;
            batch.v[k] = v;
            batch.d[k] = u.dot(self.truth.local(k)) + v;
        }
    }
}

/// Signal-to-noise ratio of one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Snr {
    Finite(f64),
    /// Noise-free node.
    Infinite,
}

impl Snr {
    fn from_powers(signal: f64, noise: f64) -> Self {
        if noise == 0.0 {
            Snr::Infinite
        } else {
            Snr::Finite(10.0 * (signal / noise).log10())
        }
    }

    pub fn db(self) -> f64 {
        match self {
            Snr::Finite(db) => db,
            Snr::Infinite => f64::INFINITY,
        }
    }
}

/// `10·log₁₀(h°_kᵀ R_{u,k} h°_k / σ²_{v,k})`.
pub fn node_snr(spec: &RegressorSpec, truth: &GroundTruthModel, k: usize) -> Result<Snr> {
    if k >= spec.nodes() || k >= truth.nodes() {
        return Err(Error::domain(format!("node {k} out of range")));
    }
    let h = truth.local(k);
    let signal = (spec.covariance(k) * h).dot(h);
    Ok(Snr::from_powers(signal, spec.noise_variance(k)))
}

/// 2D input-estimation problem on an `(N_x+2) × (N_y+2)` grid with zero
/// Dirichlet boundary. Interior node `(k1, k2)`, 1-based, has flat index
/// `(k1−1)·N_y + (k2−1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poisson2DProblem {
    pub nx: usize,
    pub ny: usize,
    /// Common spacing `Δx = Δy`.
    pub dx: f64,
    pub kappa: f64,
    /// `h°` on the interior, entry `(k1−1, k2−1)`.
    pub input: DMatrix<f64>,
}

impl Poisson2DProblem {
    /// 13 × 13 grid on the unit square, `κ = (N_x−1)²/4`.
    pub fn standard() -> Self {
        Self::with_grid(11, 11).expect("11 × 11 is a valid grid")
    }

    /// `N_x × N_y` interior nodes on the unit square (`Δx = 1/(N_x+1)`) with
    /// `h° = exp(−κ|k−(4,4)|²) − 5·exp(−κ|k−(8,8)|²) + 1`, `κ = (N_x−1)²/4`.
    pub fn with_grid(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::domain("Poisson grid needs interior nodes"));
        }
        let kappa = ((nx - 1) * (nx - 1)) as f64 / 4.0;
        let input = DMatrix::from_fn(nx, ny, |a, b| {
            let (k1, k2) = ((a + 1) as f64, (b + 1) as f64);
            let bump = |c: f64| (-kappa * ((k1 - c).powi(2) + (k2 - c).powi(2))).exp();
            bump(4.0) - 5.0 * bump(8.0) + 1.0
        });
        Ok(Self {
            nx,
            ny,
            dx: 1.0 / (nx + 1) as f64,
            kappa,
            input,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    /// `h°` flattened to one scalar per node.
    pub fn truth(&self) -> Vec<DVector<f64>> {
        (0..self.nx)
            .flat_map(|a| (0..self.ny).map(move |b| (a, b)))
            .map(|(a, b)| DVector::from_element(1, self.input[(a, b)]))
            .collect()
    }
}

/// Weighted Jacobi parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiSettings {
    pub omega: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for JacobiSettings {
    fn default() -> Self {
        Self {
            omega: 0.9,
            tolerance: 1e-8,
            max_iterations: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonField {
    /// Full grid including the zero boundary, `(N_x+2) × (N_y+2)`.
    pub f: DMatrix<f64>,
    pub iterations: usize,
    /// Max-norm of the stencil residual on the interior.
    pub residual: f64,
}

/// Five-point Laplacian `Δx⁻²(f_E + f_N + f_W + f_S − 4f)` on the interior.
pub fn discrete_laplacian(f: &DMatrix<f64>, dx: f64) -> DMatrix<f64> {
    let (rows, cols) = (f.nrows() - 2, f.ncols() - 2);
    let inv = 1.0 / (dx * dx);
    DMatrix::from_fn(rows, cols, |a, b| {
        let (p, q) = (a + 1, b + 1);
        inv * (f[(p + 1, q)] + f[(p, q + 1)] + f[(p - 1, q)] + f[(p, q - 1)] - 4.0 * f[(p, q)])
    })
}

/// Solves `∇²f = h°` with zero boundary by weighted Jacobi sweeps until the
/// stencil residual is at most `settings.tolerance`.
pub fn poisson_solve(problem: &Poisson2DProblem, settings: JacobiSettings) -> Result<PoissonField> {
    if !(settings.omega > 0.0 && settings.omega <= 1.0) {
        return Err(Error::domain(format!(
            "relaxation factor must lie in (0, 1], got {}",
            settings.omega
        )));
    }
    let (nx, ny) = (problem.nx, problem.ny);
    check_len("Poisson input rows", nx, problem.input.nrows())?;
    check_len("Poisson input columns", ny, problem.input.ncols())?;
    let h2 = problem.dx * problem.dx;
    let mut f = DMatrix::zeros(nx + 2, ny + 2);
    let mut next = f.clone();
    let residual_of = |f: &DMatrix<f64>| {
        (discrete_laplacian(f, problem.dx) - &problem.input).amax()
    };
    let mut residual = residual_of(&f);
    for iteration in 0..settings.max_iterations {
        if residual <= settings.tolerance {
            return Ok(PoissonField {
                f,
                iterations: iteration,
                residual,
            });
        }
        for p in 1..=nx {
            for q in 1..=ny {
                let jacobi = 0.25
                    * (f[(p + 1, q)] + f[(p, q + 1)] + f[(p - 1, q)] + f[(p, q - 1)]
                        - h2 * problem.input[(p - 1, q - 1)]);
                next[(p, q)] = (1.0 - settings.omega) * f[(p, q)] + settings.omega * jacobi;
            }
        }
        std::mem::swap(&mut f, &mut next);
        residual = residual_of(&f);
    }
    if residual <= settings.tolerance {
        return Ok(PoissonField {
            f,
            iterations: settings.max_iterations,
            residual,
        });
    }
    Err(Error::IterationLimit {
        iterations: settings.max_iterations,
        residual,
    })
}

/// Reference stream of the Poisson problem. Interior samples are
/// `z(i) = f + n(i)` with `n ~ N(0, σ²_n)` per node; boundary values are the
/// known zeros. `d(i)` is the five-point Laplacian of `z(i)`, and `u = 1`.
#[derive(Debug, Clone)]
pub struct PoissonStream {
    nx: usize,
    ny: usize,
    dx: f64,
    field: DMatrix<f64>,
    noise: Vec<f64>,
    truth: Vec<DVector<f64>>,
}

impl PoissonStream {
    /// `noise[k]` is the variance of the field measurement at interior node `k`.
    pub fn new(problem: &Poisson2DProblem, field: &PoissonField, noise: Vec<f64>) -> Result<Self> {
        check_len("Poisson noise variances", problem.nodes(), noise.len())?;
        check_len("Poisson field rows", problem.nx + 2, field.f.nrows())?;
        check_len("Poisson field columns", problem.ny + 2, field.f.ncols())?;
        if let Some(s) = noise.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::domain(format!("invalid measurement noise variance {s}")));
        }
        // d is exactly h° only up to the solver residual.
        let truth = discrete_laplacian(&field.f, problem.dx);
        let truth = (0..problem.nx)
            .flat_map(|a| (0..problem.ny).map(move |b| (a, b)))
            .map(|(a, b)| DVector::from_element(1, truth[(a, b)]))
            .collect();
        Ok(Self {
            nx: problem.nx,
            ny: problem.ny,
            dx: problem.dx,
            field: field.f.clone(),
            noise,
            truth,
        })
    }

    /// Measurement noise sized so the reference signal at node `k` has
    /// SNR `s_k ~ U[snr_db]`, taking every stencil sample to carry the same
    /// variance: `σ²_{n,k} = h°_k² Δx⁴ / (20·10^{s_k/10})`.
    pub fn noise_for_snr<R: Rng + ?Sized>(
        problem: &Poisson2DProblem,
        rng: &mut R,
        snr_db: (f64, f64),
    ) -> Result<Vec<f64>> {
        let (lo, hi) = snr_db;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain(format!("invalid SNR range [{lo}, {hi}]")));
        }
        let dx4 = problem.dx.powi(4);
        Ok((0..problem.nx)
            .flat_map(|a| (0..problem.ny).map(move |b| (a, b)))
            .map(|(a, b)| {
                let s = if lo == hi { lo } else { rng.random_range(lo..hi) };
                let h = problem.input[(a, b)];
                h * h * dx4 / (20.0 * 10f64.powf(s / 10.0))
            })
            .collect())
    }

    fn index(&self, k1: usize, k2: usize) -> usize {
        (k1 - 1) * self.ny + (k2 - 1)
    }

    fn is_interior(&self, k1: usize, k2: usize) -> bool {
        (1..=self.nx).contains(&k1) && (1..=self.ny).contains(&k2)
    }

    pub fn measurement_noise(&self) -> &[f64] {
        &self.noise
    }

    /// Variance of `d_k − h°_k`: `(Σ_{neighbours} σ²_n + 16σ²_{n,k}) / Δx⁴`.
    pub fn effective_noise_variance(&self, k: usize) -> f64 {
        let (k1, k2) = (k / self.ny + 1, k % self.ny + 1);
        let mut total = 16.0 * self.noise[k];
        for (a, b) in neighbours(k1, k2) {
            if self.is_interior(a, b) {
                total += self.noise[self.index(a, b)];
            }
        }
        total / self.dx.powi(4)
    }

    /// SNR of the reference signal at node `k`, `h°_k² / Var(d_k − h°_k)`.
    pub fn node_snr(&self, k: usize) -> Snr {
        let h = self.truth[k][0];
        Snr::from_powers(h * h, self.effective_noise_variance(k))
    }

    /// Noisy field samples of iteration `i` on the full grid.
    pub fn measurements(&self, seed: u64, i: u64) -> DMatrix<f64> {
        let mut z = self.field.clone();
        for k1 in 1..=self.nx {
            for k2 in 1..=self.ny {
                let k = self.index(k1, k2);
                if self.noise[k] > 0.0 {
                    let mut r = rng::stream(seed, &[i, k as u64]);
                    let n: f64 = StandardNormal.sample(&mut r);
                    z[(k1, k2)] += self.noise[k].sqrt() * n;
                }
            }
        }
        z
    }

    /// `d_{k1,k2}(i)` for 1-based interior coordinates.
    pub fn reference_at(&self, seed: u64, i: u64, (k1, k2): (usize, usize)) -> Result<f64> {
        if !self.is_interior(k1, k2) {
            return Err(Error::domain(format!(
                "node ({k1}, {k2}) is on the boundary or outside the grid"
            )));
        }
        let z = self.measurements(seed, i);
        Ok(stencil(&z, k1, k2, self.dx))
    }
}

fn neighbours(k1: usize, k2: usize) -> [(usize, usize); 4] {
    [(k1 + 1, k2), (k1, k2 + 1), (k1 - 1, k2), (k1, k2 - 1)]
}

fn stencil(z: &DMatrix<f64>, p: usize, q: usize, dx: f64) -> f64 {
    (z[(p + 1, q)] + z[(p, q + 1)] + z[(p - 1, q)] + z[(p, q - 1)] - 4.0 * z[(p, q)]) / (dx * dx)
}

impl SampleSource for PoissonStream {
    fn nodes(&self) -> usize {
        self.nx * self.ny
    }

    fn m(&self) -> usize {
        1
    }

    fn truth(&self) -> &[DVector<f64>] {
        &self.truth
    }

    fn fill(&self, seed: u64, i: u64, batch: &mut SampleBatch) {
        let z = self.measurements(seed, i);
        batch.iteration = i;
        for k1 in 1..=self.nx {
            for k2 in 1..=self.ny {
                let k = self.index(k1, k2);
                let d = stencil(&z, k1, k2, self.dx);
                batch.u[k][0] = 1.0;
                batch.d[k] = d;
                batch.v[k] = d - self.truth[k][0];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn domain_geometry() {
        let d = SpatialDomain::new(1.0, 4, 0.001).unwrap();
        assert_relative_eq!(d.dx(), 0.2);
        assert_relative_eq!(d.nu(), 0.025, epsilon = 1e-15);
        assert_eq!(d.positions().len(), 4);
        assert!(d.positions().iter().all(|&x| x > 0.0 && x < 1.0));
        assert!(SpatialDomain::new(1.0, 4, 0.0).is_err());
    }

    #[test]
    fn constant_theta_gives_symmetric_stencil() {
        let h = discretize_theta_to_h(&[0.3; 6], 0.5).unwrap();
        assert_eq!(h.len(), 4);
        for hk in h {
            assert_relative_eq!(hk[0], 0.15);
            assert_relative_eq!(hk[1], 0.7);
            assert_relative_eq!(hk[2], 0.15);
        }
    }

    #[test]
    fn theta_hand_case() {
        let h = discretize_theta_to_h(&[1.0, 2.0, 3.0], 1.0).unwrap();
        assert_eq!(h[0].as_slice(), &[1.5, -3.0, 2.5]);
    }

    #[test]
    fn frozen_field_at_zero_nu() {
        let h = discretize_theta_to_h(&[0.4, 1.0, 2.0, 0.1], 0.0).unwrap();
        for hk in h {
            assert_eq!(hk.as_slice(), &[0.0, 1.0, 0.0]);
        }
        assert!(discretize_theta_to_h(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn one_step_matches_explicit_euler() {
        // Constant diffusivity: f_k(i) = ν f_{k−1} + (1−2ν) f_k + ν f_{k+1}.
        let nu = 0.2;
        let f: Vec<f64> = (0..7).map(|k| (k as f64 * 0.4).sin()).collect();
        let h = discretize_theta_to_h(&[1.0; 7], nu).unwrap();
        for (k, hk) in h.iter().enumerate() {
            let stepped = hk[0] * f[k] + hk[1] * f[k + 1] + hk[2] * f[k + 2];
            let euler = nu * f[k] + (1.0 - 2.0 * nu) * f[k + 1] + nu * f[k + 2];
            assert_relative_eq!(stepped, euler, epsilon = 1e-15);
        }
    }

    #[test]
    fn theta_truth_is_spanned_by_basis() {
        let domain = SpatialDomain::new(1.0, 6, 0.002).unwrap();
        let basis = BasisSet::sample(&domain.positions(), 1.0, 4).unwrap();
        let coeffs = [1.0, 0.3, -0.2, 0.05];
        let truth = GroundTruthModel::from_theta(&domain, &basis, &coeffs).unwrap();
        let dx = domain.dx();
        let theta: Vec<f64> = (0..8)
            .map(|j| {
                let x = j as f64 * dx;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(n, c)| c * chebyshev_shifted(n + 1, x).unwrap())
                    .sum()
            })
            .collect();
        let direct = discretize_theta_to_h(&theta, domain.nu()).unwrap();
        for k in 0..6 {
            for m in 0..3 {
                assert_relative_eq!(truth.local(k)[m], direct[k][m], epsilon = 1e-10);
            }
        }
        assert_eq!(truth.global().unwrap().len(), 12);
    }

    #[test]
    fn coefficient_layout_is_row_blocks() {
        let basis = BasisSet::sample(&[0.25, 0.75], 1.0, 2).unwrap();
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let t = GroundTruthModel::from_coefficients(&basis, &w).unwrap();
        assert_eq!(t.global().unwrap().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        // b(0.25) = [1, −0.5]
        assert_relative_eq!(t.local(0)[0], 0.0);
        assert_relative_eq!(t.local(0)[1], 1.0);
    }

    #[test]
    fn spec_rejects_indefinite_and_accepts_semidefinite() {
        let singular = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(RegressorSpec::new(vec![singular.clone()], vec![0.1]).is_err());
        assert!(RegressorSpec::new_semidefinite(vec![singular], vec![0.1]).is_ok());
        let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.1]));
        assert!(RegressorSpec::new_semidefinite(vec![indefinite], vec![0.1]).is_err());
        assert!(RegressorSpec::new(vec![DMatrix::identity(2, 2)], vec![-1.0]).is_err());
    }

    fn line_stream(noise: f64) -> GaussianStream {
        let basis = BasisSet::sample(&[0.2, 0.4, 0.6, 0.8], 1.0, 3).unwrap();
        let w = DVector::from_vec(vec![0.5, -1.0, 0.25, 2.0, 0.1, -0.3]);
        let truth = GroundTruthModel::from_global(&basis, 2, w).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let spec = RegressorSpec::new(vec![r; 4], vec![noise; 4]).unwrap();
        GaussianStream::new(truth, spec).unwrap()
    }

    #[test]
    fn noise_free_samples_fit_model() {
        let s = line_stream(0.0);
        for i in 0..20 {
            let b = s.batch(3, i);
            for k in 0..4 {
                assert_eq!(b.v[k], 0.0);
                assert_relative_eq!(b.d[k], b.u[k].dot(&s.truth()[k]), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn replay_is_identical() {
        let s = line_stream(0.1);
        assert_eq!(s.batch(11, 7), s.batch(11, 7));
        assert_ne!(s.batch(11, 7), s.batch(12, 7));
        assert_ne!(s.batch(11, 7).d, s.batch(11, 8).d);
    }

    #[test]
    fn snr_values() {
        let basis = BasisSet::sample(&[0.5], 1.0, 1).unwrap();
        let truth =
            GroundTruthModel::from_global(&basis, 2, DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let unit = RegressorSpec::new(vec![DMatrix::identity(2, 2)], vec![1.0]).unwrap();
        assert_relative_eq!(node_snr(&unit, &truth, 0).unwrap().db(), 0.0);
        let tenth = RegressorSpec::new(vec![DMatrix::identity(2, 2)], vec![0.1]).unwrap();
        assert_relative_eq!(node_snr(&tenth, &truth, 0).unwrap().db(), 10.0, epsilon = 1e-12);
        let clean = RegressorSpec::new(vec![DMatrix::identity(2, 2)], vec![0.0]).unwrap();
        assert_eq!(node_snr(&clean, &truth, 0).unwrap(), Snr::Infinite);
        assert!(node_snr(&clean, &truth, 1).is_err());
    }

    #[test]
    fn isotropic_draws_in_range() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let spec = RegressorSpec::random_isotropic(&mut r, 10, 2, (1.0, 5.0), (0.05, 0.1)).unwrap();
        for k in 0..10 {
            let tr = spec.covariance(k).trace();
            assert!((1.0..5.0).contains(&tr));
            assert!((0.05..0.1).contains(&spec.noise_variance(k)));
            assert_relative_eq!(spec.covariance(k)[(0, 0)], spec.covariance(k)[(1, 1)]);
        }
    }

    #[test]
    fn zero_input_gives_zero_field() {
        let mut p = Poisson2DProblem::with_grid(5, 5).unwrap();
        p.input.fill(0.0);
        let sol = poisson_solve(&p, JacobiSettings::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_problem_shape() {
        let p = Poisson2DProblem::standard();
        assert_eq!((p.nx, p.ny), (11, 11));
        assert_relative_eq!(p.kappa, 25.0);
        assert_relative_eq!(p.dx, 1.0 / 12.0);
        assert_relative_eq!(p.input[(3, 3)], 2.0, epsilon = 1e-9);
        assert_relative_eq!(p.input[(7, 7)], -4.0, epsilon = 1e-9);
    }

    #[test]
    fn iteration_limit_carries_residual() {
        let p = Poisson2DProblem::standard();
        let settings = JacobiSettings {
            max_iterations: 5,
            ..JacobiSettings::default()
        };
        match poisson_solve(&p, settings) {
            Err(Error::IterationLimit { iterations, residual }) => {
                assert_eq!(iterations, 5);
                assert!(residual > 1e-8);
            }
            other => panic!("expected iteration limit, got {other:?}"),
        }
    }

    #[test]
    fn reference_hand_case() {
        // 1×1 interior: d = (0 + 0 + 0 + 0 − 4 z) / Δx² with Δx = 1/2.
        let mut p = Poisson2DProblem::with_grid(1, 1).unwrap();
        p.input[(0, 0)] = -8.0;
        let field = poisson_solve(&p, JacobiSettings::default()).unwrap();
        assert_relative_eq!(field.f[(1, 1)], 0.5, epsilon = 1e-8);
        let s = PoissonStream::new(&p, &field, vec![0.01]).unwrap();
        let z = s.measurements(9, 4);
        let d = s.reference_at(9, 4, (1, 1)).unwrap();
        assert_relative_eq!(d, -16.0 * z[(1, 1)], epsilon = 1e-12);
        assert!(s.reference_at(9, 4, (0, 1)).is_err());
        assert!(s.reference_at(9, 4, (1, 2)).is_err());
    }

    #[test]
    fn noise_free_reference_equals_input() {
        let p = Poisson2DProblem::standard();
        let field = poisson_solve(&p, JacobiSettings::default()).unwrap();
        let s = PoissonStream::new(&p, &field, vec![0.0; 121]).unwrap();
        let b = s.batch(1, 0);
        for a in 0..11 {
            for c in 0..11 {
                assert_relative_eq!(b.d[a * 11 + c], p.input[(a, c)], epsilon = 1e-8);
            }
        }
    }
}
