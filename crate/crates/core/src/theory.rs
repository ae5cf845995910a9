//! Closed-form mean and mean-square behaviour of diffusion LMS.
//!
//! All quantities live in the stacked network space of dimension
//! `D = N·M·N_b`, node `k` occupying the `k`-th block of length `M·N_b`.
//!
//! * `ℬ = 𝒜₂ᵀ(I − ℳℛ)𝒜₁ᵀ` drives the mean error, `E w̃_i = ℬ E w̃_{i−1}`.
//! * `𝒴 = 𝒜₂ᵀℳ𝒢ℳ𝒜₂` is the gradient-noise covariance injected per step.
//! * `P = Z₂Z̄₂` is the spectral projector onto the eigenvalue-1 eigenspace of
//!   `ℬ`; it is zero when `ρ(ℬ) < 1`.
//!
//! Second moments follow `K_i = ℬK_{i−1}ℬᵀ + 𝒴` with `K_{−1} = w̃_{−1}w̃_{−1}ᵀ`,
//! so `E‖w̃_i‖²_Σ = Tr(ΣK_i)`. This drops `O(μ²)` terms of the exact
//! recursion and is accurate for small step sizes only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::estimators::Trajectory;
use crate::linalg::{
    block_diag, block_max_norm, complex_eigenvalues, kron_identity, max_abs, null_spaces_at_most,
    pinv_symmetric, spectral_radius, stack,
};
use crate::pde_model::{GroundTruthModel, RegressorSpec};
use crate::scenario::Scenario;

/// Moduli within this distance of one count as unit eigenvalues.
pub const DEFAULT_UNIT_TOL: f64 = 1e-8;

/// Relative threshold below which an eigenvalue of `R_k` counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Largest `D` for which the Kronecker path is chosen automatically.
pub const KRONECKER_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryArtifacts {
    nodes: usize,
    block: usize,
    /// `R̄_{u,k} = B_kᵀR_{u,k}B_k`.
    pub transformed_cov: Vec<DMatrix<f64>>,
    /// `r̄_{du,k} = B_kᵀR_{u,k}h°_k`.
    pub transformed_cross: Vec<DVector<f64>>,
    /// `R_k = Σ_ℓ c_{ℓk} R̄_{u,ℓ}`.
    pub aggregated_cov: Vec<DMatrix<f64>>,
    /// `r_k = Σ_ℓ c_{ℓk} r̄_{du,ℓ}`.
    pub aggregated_cross: Vec<DVector<f64>>,
    /// `B_kᵀB_k`.
    pub grams: Vec<DMatrix<f64>>,
    pub step_sizes: Vec<f64>,
    pub noise: Vec<f64>,
    /// `ℬ`.
    pub b: DMatrix<f64>,
    /// `𝒴`.
    pub y: DMatrix<f64>,
    /// `I − ℳℛ`.
    pub i_minus_mr: DMatrix<f64>,
    /// `𝒜₂ᵀℳr`.
    pub driving: DVector<f64>,
    /// `E w_{−1}`, stacked.
    pub initial_mean: DVector<f64>,
    /// `w̃_{−1} = 𝟙 ⊗ w° − w_{−1}`, when `w°` is known.
    pub initial_error: Option<DVector<f64>>,
}

impl TheoryArtifacts {
    /// Builds every moment from the scenario, the regressor statistics and
    /// the truth. Singular `R_{u,k}` are allowed.
    pub fn assemble(
        scenario: &Scenario,
        spec: &RegressorSpec,
        truth: &GroundTruthModel,
    ) -> Result<Self> {
        let n = scenario.nodes();
        let m = scenario.m();
        let block = scenario.block();
        check_len("regressor spec nodes", n, spec.nodes())?;
        check_len("regressor dimension", m, spec.m())?;
        check_len("truth nodes", n, truth.nodes())?;
        check_len("truth dimension", m, truth.m())?;
        let basis = scenario.basis();
        let policy = scenario.policy();

        let mut transformed_cov = Vec::with_capacity(n);
        let mut transformed_cross = Vec::with_capacity(n);
        let mut grams = Vec::with_capacity(n);
        for k in 0..n {
            let bk = basis.block_matrix(k, m);
            let r = spec.covariance(k);
            transformed_cov.push(bk.transpose() * r * &bk);
            transformed_cross.push(bk.transpose() * (r * truth.local(k)));
            grams.push(bk.transpose() * &bk);
        }
        let c = policy.c();
        let aggregated_cov: Vec<DMatrix<f64>> = (0..n)
            .map(|k| {
                (0..n).fold(DMatrix::zeros(block, block), |acc, l| {
                    acc + &transformed_cov[l] * c[(l, k)]
                })
            })
            .collect();
        let aggregated_cross: Vec<DVector<f64>> = (0..n)
            .map(|k| {
                (0..n).fold(DVector::zeros(block), |acc, l| {
                    acc + &transformed_cross[l] * c[(l, k)]
                })
            })
            .collect();

        let dim = n * block;
        let mu = scenario.step_sizes();
        let mu_diag = DVector::from_fn(dim, |j, _| mu[j / block]);
        let script_r = block_diag(&aggregated_cov);
        let mut i_minus_mr = -script_r;
        for j in 0..dim {
            i_minus_mr.row_mut(j).scale_mut(mu_diag[j]);
            i_minus_mr[(j, j)] += 1.0;
        }
        let a1t = policy.extended_a1(block).transpose();
        let a2t = policy.extended_a2(block).transpose();
        let b = &a2t * &i_minus_mr * &a1t;

        let noisy: Vec<DMatrix<f64>> = transformed_cov
            .iter()
            .zip(spec.noise_variances())
            .map(|(r, s)| r * *s)
            .collect();
        let c_ext = policy.extended_c(block);
        let g = c_ext.transpose() * block_diag(&noisy) * &c_ext;
        let mut mg = g;
        for j in 0..dim {
            mg.row_mut(j).scale_mut(mu_diag[j]);
        }
        for j in 0..dim {
            mg.column_mut(j).scale_mut(mu_diag[j]);
        }
        let y = &a2t * mg * a2t.transpose();
        let y = (&y + y.transpose()) * 0.5;

        let r = stack(&aggregated_cross);
        let driving = &a2t * r.component_mul(&mu_diag);
        let initial_mean = stack(scenario.initial());
        let initial_error = truth.global().map(|w| {
            let target = stack(&vec![w.clone(); n]);
            target - &initial_mean
        });

        Ok(Self {
            nodes: n,
            block,
            transformed_cov,
            transformed_cross,
            aggregated_cov,
            aggregated_cross,
            grams,
            step_sizes: mu.to_vec(),
            noise: spec.noise_variances().to_vec(),
            b,
            y,
            i_minus_mr,
            driving,
            initial_mean,
            initial_error,
        })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// `M·N_b`.
    pub fn block(&self) -> usize {
        self.block
    }

    /// `D = N·M·N_b`.
    pub fn dim(&self) -> usize {
        self.nodes * self.block
    }

    /// Eigendecomposition of `R_k`: eigenvectors, eigenvalues (descending)
    /// and numerical rank.
    pub fn node_eigen(&self, k: usize) -> (DMatrix<f64>, DVector<f64>, usize) {
        let eig = self.aggregated_cov[k].clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..self.block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let q = DMatrix::from_fn(self.block, self.block, |r, c| eig.eigenvectors[(r, order[c])]);
        let lambda = DVector::from_fn(self.block, |j, _| eig.eigenvalues[order[j]]);
        let cutoff = RANK_TOL * lambda[0].max(f64::MIN_POSITIVE);
        let rank = lambda.iter().filter(|&&l| l > cutoff).count();
        (q, lambda, rank)
    }

    fn require_initial_error(&self) -> Result<&DVector<f64>> {
        self.initial_error
            .as_ref()
            .ok_or_else(|| Error::Unsupported("the truth has no global coefficient vector".into()))
    }
}

/// `2/λ_max(R_k)` per node; infinite for a zero `R_k`.
pub fn step_size_bound(art: &TheoryArtifacts) -> Vec<f64> {
    art.aggregated_cov
        .iter()
        .map(|r| {
            let lmax = r.clone().symmetric_eigenvalues().max();
            if lmax > 0.0 {
                2.0 / lmax
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Default step sizes: `0.1 × 2/λ_max(R_k)`.
pub fn default_step_sizes(art: &TheoryArtifacts) -> Vec<f64> {
    step_size_bound(art).into_iter().map(|b| 0.1 * b).collect()
}

/// `(ρ(ℬ), ρ(I − ℳℛ))`.
pub fn spectral_radii(art: &TheoryArtifacts) -> Result<(f64, f64)> {
    Ok((spectral_radius(&art.b)?, spectral_radius(&art.i_minus_mr)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StrictlyStable,
    PowerConvergent,
    NonConvergent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralClassification {
    pub spectral_radius: f64,
    pub verdict: Verdict,
    /// `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Whether each eigenvalue has modulus within `tol` of one.
    pub on_unit_circle: Vec<bool>,
    /// Eigenvalues within `tol` of `1` (algebraic multiplicity).
    pub unit_count: usize,
    /// `dim null(I − ℬ)` (geometric multiplicity).
    pub nullity: usize,
    pub defective: bool,
    pub reasons: Vec<String>,
}

impl SpectralClassification {
    /// Eigenvalue closest to `target`, if any.
    pub fn closest_to(&self, target: (f64, f64)) -> Option<(f64, f64)> {
        self.eigenvalues.iter().copied().min_by(|a, b| {
            let da = (a.0 - target.0).hypot(a.1 - target.1);
            let db = (b.0 - target.0).hypot(b.1 - target.1);
            da.total_cmp(&db)
        })
    }
}

fn nullity_tol(b: &DMatrix<f64>) -> f64 {
    DEFAULT_UNIT_TOL * b.norm().max(1.0)
}

/// Power-convergence test: every `|λ| ≤ 1`, unit-modulus eigenvalues equal
/// one, and the eigenvalue `1` is semisimple (its count matches the
/// nullity of `I − ℬ`).
pub fn classify(art: &TheoryArtifacts, tol: f64) -> Result<SpectralClassification> {
    let eigs = complex_eigenvalues(&art.b)?;
    let rho = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let on_unit_circle: Vec<bool> = eigs.iter().map(|z| (z.norm() - 1.0).abs() <= tol).collect();
    let unit_count = eigs
        .iter()
        .filter(|z| (z.re - 1.0).hypot(z.im) <= tol)
        .count();
    let x = DMatrix::identity(art.dim(), art.dim()) - &art.b;
    // Geometric multiplicity never exceeds algebraic; extra small singular
    // values come from slow modes near, but not at, one.
    let (_, right) = null_spaces_at_most(&x, nullity_tol(&art.b), unit_count)?;
    let nullity = right.ncols();
    let defective = nullity < unit_count;

    let mut reasons = Vec::new();
    for z in &eigs {
        if z.norm() > 1.0 + tol {
            reasons.push(format!("eigenvalue {:.6}{:+.6}i outside the unit disk", z.re, z.im));
        } else if (z.norm() - 1.0).abs() <= tol && (z.re - 1.0).hypot(z.im) > tol {
            reasons.push(format!("unit-modulus eigenvalue {:.6}{:+.6}i is not 1", z.re, z.im));
        }
    }
    if defective {
        reasons.push(format!(
            "eigenvalue 1 has multiplicity {unit_count} but I − ℬ has nullity {nullity}"
        ));
    }
    let verdict = if !reasons.is_empty() {
        Verdict::NonConvergent
    } else if on_unit_circle.iter().any(|&u| u) {
        Verdict::PowerConvergent
    } else {
        Verdict::StrictlyStable
    };
    Ok(SpectralClassification {
        spectral_radius: rho,
        verdict,
        eigenvalues: eigs.iter().map(|z| (z.re, z.im)).collect(),
        on_unit_circle,
        unit_count,
        nullity,
        defective,
        reasons,
    })
}

/// Factors of the eigenvalue-1 eigenspace: `P = Z₂Z̄₂`, `Z̄₂Z₂ = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSpace {
    pub z2: DMatrix<f64>,
    pub z2_bar: DMatrix<f64>,
    pub projector: DMatrix<f64>,
}

impl UnitSpace {
    /// Builds the factors from right and left null bases of `I − ℬ`.
    pub fn from_null_bases(right: DMatrix<f64>, left: &DMatrix<f64>) -> Result<Self> {
        let dim = right.nrows();
        if right.ncols() == 0 {
            return Ok(Self {
                z2: right,
                z2_bar: DMatrix::zeros(0, dim),
                projector: DMatrix::zeros(dim, dim),
            });
        }
        let gram = left.transpose() * &right;
        let inv = gram.try_inverse().ok_or_else(|| {
            Error::Numerical("left and right unit eigenspaces are not in duality".into())
        })?;
        let z2_bar = inv * left.transpose();
        let projector = &right * &z2_bar;
        Ok(Self {
            z2: right,
            z2_bar,
            projector,
        })
    }

    pub fn rank(&self) -> usize {
        self.z2.ncols()
    }
}

/// Spectral projector of `ℬ` at eigenvalue `1`.
pub fn unit_projector(art: &TheoryArtifacts) -> Result<UnitSpace> {
    let cls = classify(art, DEFAULT_UNIT_TOL)?;
    unit_space_for(art, &cls)
}

/// As [`unit_projector`] for an existing classification.
pub fn unit_space_for(art: &TheoryArtifacts, cls: &SpectralClassification) -> Result<UnitSpace> {
    if cls.verdict == Verdict::NonConvergent {
        return Err(Error::Unsupported(format!(
            "ℬ is not power convergent: {}",
            cls.reasons.join("; ")
        )));
    }
    let x = DMatrix::identity(art.dim(), art.dim()) - &art.b;
    let (left, right) = null_spaces_at_most(&x, nullity_tol(&art.b), cls.nullity)?;
    UnitSpace::from_null_bases(right, &left)
}

/// `X⁻ = (I − ℬ + P)⁻¹ − P`, the group inverse of `X = I − ℬ`.
pub fn generalized_inverse(art: &TheoryArtifacts, unit: &UnitSpace) -> Result<DMatrix<f64>> {
    let x = DMatrix::identity(art.dim(), art.dim()) - &art.b;
    let shifted = &x + &unit.projector;
    let inv = shifted
        .try_inverse()
        .ok_or_else(|| Error::Numerical("I − ℬ + P is singular".into()))?;
    Ok(inv - &unit.projector)
}

/// `lim E w_i = P·E w_{−1} + (I − ℬ)⁻ 𝒜₂ᵀℳr`.
pub fn mean_limit(
    art: &TheoryArtifacts,
    unit: &UnitSpace,
    initial_mean: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len("initial mean", art.dim(), initial_mean.len())?;
    let xm = generalized_inverse(art, unit)?;
    Ok(&unit.projector * initial_mean + xm * &art.driving)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedInverseReport {
    /// `max|XX⁻X − X|`.
    pub first: f64,
    /// `max|X⁻XX⁻ − X⁻|`.
    pub second: f64,
}

pub fn generalized_inverse_check(
    art: &TheoryArtifacts,
    unit: &UnitSpace,
) -> Result<GeneralizedInverseReport> {
    let x = DMatrix::identity(art.dim(), art.dim()) - &art.b;
    let xm = generalized_inverse(art, unit)?;
    Ok(GeneralizedInverseReport {
        first: max_abs(&(&x * &xm * &x - &x)),
        second: max_abs(&(&xm * &x * &xm - &xm)),
    })
}

/// `(‖Z̄₂𝒴‖_max, ‖𝒴Z̄₂ᵀ‖_max)`.
pub fn orthogonality_residuals(art: &TheoryArtifacts, unit: &UnitSpace) -> (f64, f64) {
    if unit.rank() == 0 {
        return (0.0, 0.0);
    }
    (
        max_abs(&(&unit.z2_bar * &art.y)),
        max_abs(&(&art.y * unit.z2_bar.transpose())),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyStateMethod {
    /// Kronecker solve for `D ≤ KRONECKER_MAX_DIM`, series otherwise.
    Auto,
    Kronecker,
    Series,
}

/// Terms of the series `Σ_j A^j X A^jᵀ` are added in doubling blocks; the
/// sum stops when a block changes it by less than this relative amount.
pub const SERIES_REL_TOL: f64 = 1e-14;
/// At most `2^SERIES_MAX_DOUBLINGS ≈ 3·10¹⁴` terms.
pub const SERIES_MAX_DOUBLINGS: usize = 48;
/// Blocks before this index hold fewer than 10 terms and never stop the sum.
const SERIES_MIN_DOUBLINGS: usize = 4;

/// `S = Σ_{j≥0} A^j X A^jᵀ`, the solution of `S = X + A S Aᵀ`.
pub fn discounted_sum(
    a: &DMatrix<f64>,
    x: &DMatrix<f64>,
    method: SteadyStateMethod,
) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let method = match method {
        SteadyStateMethod::Auto if d <= KRONECKER_MAX_DIM => SteadyStateMethod::Kronecker,
        SteadyStateMethod::Auto => SteadyStateMethod::Series,
        other => other,
    };
    match method {
        SteadyStateMethod::Kronecker => {
            let f = a.kronecker(a);
            let lhs = DMatrix::identity(d * d, d * d) - f;
            let rhs = DVector::from_column_slice(x.as_slice());
            let sol = lhs
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical("I − ℱ is singular".into()))?;
            Ok(DMatrix::from_column_slice(d, d, sol.as_slice()))
        }
        _ => {
            let mut s = x.clone();
            let mut power = a.clone();
            for doubling in 0..SERIES_MAX_DOUBLINGS {
                let inc = &power * &s * power.transpose();
                let small = inc.norm() <= SERIES_REL_TOL * s.norm();
                s += inc;
                if small && doubling >= SERIES_MIN_DOUBLINGS {
                    return Ok(s);
                }
                power = &power * &power;
            }
            Err(Error::Numerical(format!(
                "deflated series did not settle within 2^{SERIES_MAX_DOUBLINGS} terms"
            )))
        }
    }
}

/// `ℬ − P`, whose powers are `ℬ^j − P` for `j ≥ 1`.
fn deflated(art: &TheoryArtifacts, unit: &UnitSpace) -> DMatrix<f64> {
    &art.b - &unit.projector
}

/// `lim E‖w̃_i‖²_Σ = ‖w̃_{−1}‖²_{PᵀΣP} + Σ_j Tr((ℬ−P)^{jᵀ} Σ (ℬ−P)^j 𝒴)`.
pub fn steady_state_wmse(
    art: &TheoryArtifacts,
    unit: &UnitSpace,
    sigma: &DMatrix<f64>,
    method: SteadyStateMethod,
) -> Result<f64> {
    check_len("weighting matrix", art.dim(), sigma.nrows())?;
    let w0 = art.require_initial_error()?;
    let bias = &unit.projector * w0;
    let s = discounted_sum(&deflated(art, unit).transpose(), sigma, method)?;
    Ok((sigma * &bias).dot(&bias) + (s.component_mul(&art.y.transpose())).sum())
}

/// Limit of the error covariance, `K_∞ = Pw̃w̃ᵀPᵀ + Σ_j (ℬ−P)^j 𝒴 (ℬ−P)^{jᵀ}`,
/// so that the steady state under any weight is `Tr(ΣK_∞)`.
pub fn steady_state_covariance(
    art: &TheoryArtifacts,
    unit: &UnitSpace,
    method: SteadyStateMethod,
) -> Result<DMatrix<f64>> {
    let w0 = art.require_initial_error()?;
    let bias = &unit.projector * w0;
    let s = discounted_sum(&deflated(art, unit), &art.y, method)?;
    Ok(s + &bias * bias.transpose())
}

fn node_index_check(art: &TheoryArtifacts, k: usize) -> Result<()> {
    if k >= art.nodes {
        return Err(Error::domain(format!("node {k} out of range 0..{}", art.nodes)));
    }
    Ok(())
}

fn embed(art: &TheoryArtifacts, k: usize, blockm: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(art.dim(), art.dim());
    out.view_mut((k * art.block, k * art.block), (art.block, art.block))
        .copy_from(blockm);
    out
}

/// `(Σ_msd,k, Σ_emse,k) = (diag(e_k) ⊗ B_kᵀB_k, diag(e_k) ⊗ R̄_{u,k})`.
pub fn msd_emse_weights(art: &TheoryArtifacts, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    node_index_check(art, k)?;
    Ok((
        embed(art, k, &art.grams[k]),
        embed(art, k, &art.transformed_cov[k]),
    ))
}

/// `diag(e_k) ⊗ I`: MSD of `w̃_k`.
pub fn msd_w_weight(art: &TheoryArtifacts, k: usize) -> Result<DMatrix<f64>> {
    node_index_check(art, k)?;
    Ok(embed(art, k, &DMatrix::identity(art.block, art.block)))
}

/// `η(i) = ‖w̃_{−1}‖²_{Σ_{i+1}} + Σ_{j≤i} Tr(Σ_j 𝒴)` with `Σ_0 = Σ` and
/// `Σ_j = ℬᵀΣ_{j−1}ℬ`, for `i = 0..horizon`.
pub fn learning_curve(art: &TheoryArtifacts, sigma: &DMatrix<f64>, horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::domain("learning-curve horizon must be positive"));
    }
    check_len("weighting matrix", art.dim(), sigma.nrows())?;
    let w0 = art.require_initial_error()?;
    let bt = art.b.transpose();
    let mut s = sigma.clone();
    let mut noise = 0.0;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        noise += s.component_mul(&art.y.transpose()).sum();
        s = &bt * &s * &art.b;
        out.push((&s * w0).dot(w0) + noise);
    }
    Ok(out)
}

/// `Tr(W K_kk)` for the `k`-th diagonal block of `K`.
fn block_trace(w: &DMatrix<f64>, kmat: &DMatrix<f64>, k: usize, block: usize) -> f64 {
    let kk = kmat.view((k * block, k * block), (block, block));
    w.component_mul(&kk.transpose()).sum()
}

/// Per-node predictions of `‖w̃‖²`, `‖h̃‖²` and a-priori EMSE for
/// `i = 0..horizon`, from `K_i = ℬK_{i−1}ℬᵀ + 𝒴`. EMSE at `i` uses `K_{i−1}`.
pub fn learning_curves(art: &TheoryArtifacts, horizon: usize) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(Error::domain("learning-curve horizon must be positive"));
    }
    let w0 = art.require_initial_error()?;
    let (n, block) = (art.nodes, art.block);
    let ident = DMatrix::identity(block, block);
    let mut out = Trajectory::zeros(n, horizon);
    let mut kmat = w0 * w0.transpose();
    let bt = art.b.transpose();
    let mut settled = None;
    for i in 0..horizon {
        for k in 0..n {
            out.emse[i * n + k] = block_trace(&art.transformed_cov[k], &kmat, k, block);
        }
        let next = &art.b * &kmat * &bt + &art.y;
        let change = (&next - &kmat).amax();
        kmat = next;
        for k in 0..n {
            out.msd_w[i * n + k] = block_trace(&ident, &kmat, k, block);
            out.msd_h[i * n + k] = block_trace(&art.grams[k], &kmat, k, block);
        }
        // Once the recursion stalls at round-off, the rest is its fixed point.
        if change <= 4.0 * f64::EPSILON * kmat.amax() {
            settled = Some(i);
            break;
        }
    }
    if let Some(last) = settled {
        for i in last + 1..horizon {
            for k in 0..n {
                // EMSE at i uses K_{i−1}, already the fixed point.
                out.emse[i * n + k] = block_trace(&art.transformed_cov[k], &kmat, k, block);
                out.msd_w[i * n + k] = out.msd_w[last * n + k];
                out.msd_h[i * n + k] = out.msd_h[last * n + k];
            }
        }
    }
    Ok(out)
}

/// Steady-state MSD (w and h domains) and EMSE per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub msd_w: Vec<f64>,
    pub msd_h: Vec<f64>,
    pub emse: Vec<f64>,
}

impl SteadyState {
    pub fn network(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn steady_state(
    art: &TheoryArtifacts,
    unit: &UnitSpace,
    method: SteadyStateMethod,
) -> Result<SteadyState> {
    let kinf = steady_state_covariance(art, unit, method)?;
    let (n, block) = (art.nodes, art.block);
    let ident = DMatrix::identity(block, block);
    Ok(SteadyState {
        msd_w: (0..n).map(|k| block_trace(&ident, &kinf, k, block)).collect(),
        msd_h: (0..n).map(|k| block_trace(&art.grams[k], &kinf, k, block)).collect(),
        emse: (0..n)
            .map(|k| block_trace(&art.transformed_cov[k], &kinf, k, block))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanErrorBound {
    /// `‖I − Ind(Λ)‖_{b,∞}`.
    pub factor: f64,
    /// `factor · ‖E w̃_{−1}‖_{b,∞}`.
    pub bound: f64,
    /// `‖lim E w̃_i‖_{b,∞}` from the iterated mean recursion.
    pub limit: f64,
    pub holds: bool,
}

/// Bound on the limiting mean error in the block-maximum norm. `Ind(Λ)`
/// marks the non-zero eigenvalues of each `R_k`, so the factor is one when
/// any `R_k` is singular and zero otherwise. The limit is obtained by
/// repeated squaring of `ℬ` until the iterate stops changing.
pub fn mean_error_bound(art: &TheoryArtifacts, initial_error: &DVector<f64>) -> Result<MeanErrorBound> {
    check_len("initial mean error", art.dim(), initial_error.len())?;
    let deficient = (0..art.nodes).any(|k| art.node_eigen(k).2 < art.block);
    let factor = if deficient { 1.0 } else { 0.0 };
    let bound = factor * block_max_norm(initial_error, art.block);

    let current = power_limit(&art.b, 64) * initial_error;
    let limit = block_max_norm(&current, art.block);
    Ok(MeanErrorBound {
        factor,
        bound,
        limit,
        holds: limit <= bound + 1e-9 * (1.0 + bound),
    })
}

/// Per-node `R_k† r_k`: the minimum-norm solution each node reaches when
/// it does not share estimates.
pub fn min_norm_solutions(art: &TheoryArtifacts) -> Vec<DVector<f64>> {
    art.aggregated_cov
        .iter()
        .zip(&art.aggregated_cross)
        .map(|(r, x)| pinv_symmetric(r, RANK_TOL) * x)
        .collect()
}

/// `lim ℬ^i` by repeated squaring, at most `count` times.
///
/// Stops once a squaring no longer changes the iterate: rounding puts unit
/// eigenvalues at `1 ± ε`, and squaring past convergence amplifies that
/// drift without bound.
pub fn power_limit(b: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let mut p = b.clone();
    for _ in 0..count {
        let next = &p * &p;
        let change = (&next - &p).amax();
        p = next;
        if change <= 1e-12 * (1.0 + p.amax()) {
            break;
        }
    }
    p
}

/// Re-expresses `𝟙 ⊗ w` as a stacked vector.
pub fn replicate(w: &DVector<f64>, nodes: usize) -> DVector<f64> {
    stack(&vec![w.clone(); nodes])
}

/// `𝒜 = A ⊗ I` convenience re-export for callers assembling by hand.
pub fn extend(a: &DMatrix<f64>, block: usize) -> DMatrix<f64> {
    kron_identity(a, block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSet;
    use crate::network::{CombinationPolicy, CombinationRule, NetworkGraph};
    use approx::assert_relative_eq;

    fn scalar(mu: f64, lambda: f64, sigma2: f64) -> TheoryArtifacts {
        let basis = BasisSet::from_rows(vec![DVector::from_element(1, 1.0)]).unwrap();
        let sc = Scenario::new(basis.clone(), 1, CombinationPolicy::non_cooperative(1), vec![mu])
            .unwrap();
        let spec =
            RegressorSpec::new(vec![DMatrix::from_element(1, 1, lambda)], vec![sigma2]).unwrap();
        let truth = GroundTruthModel::from_global(&basis, 1, DVector::from_element(1, 0.7)).unwrap();
        TheoryArtifacts::assemble(&sc, &spec, &truth).unwrap()
    }

    #[test]
    fn scalar_moments() {
        let art = scalar(0.1, 2.0, 0.5);
        assert_relative_eq!(art.b[(0, 0)], 0.8, epsilon = 1e-15);
        assert_relative_eq!(art.y[(0, 0)], 0.01 * 2.0 * 0.5, epsilon = 1e-15);
        assert_relative_eq!(step_size_bound(&art)[0], 1.0);
    }

    #[test]
    fn scalar_steady_state_both_paths() {
        let (mu, lambda, s2): (f64, f64, f64) = (0.05, 1.7, 0.3);
        let art = scalar(mu, lambda, s2);
        let unit = unit_projector(&art).unwrap();
        assert_eq!(unit.rank(), 0);
        let expect = mu * mu * lambda * s2 / (1.0 - (1.0 - mu * lambda).powi(2));
        let sigma = DMatrix::identity(1, 1);
        for m in [SteadyStateMethod::Kronecker, SteadyStateMethod::Series] {
            assert_relative_eq!(
                steady_state_wmse(&art, &unit, &sigma, m).unwrap(),
                expect,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn learning_curve_unrolls_one_step() {
        // With zero noise, η(0) = ‖w̃_{−1}‖²_{ℬᵀΣℬ}.
        let art = scalar(0.1, 2.0, 0.0);
        let eta = learning_curve(&art, &DMatrix::identity(1, 1), 3).unwrap();
        assert_relative_eq!(eta[0], 0.49 * 0.64, epsilon = 1e-15);
        assert!(learning_curve(&art, &DMatrix::identity(1, 1), 0).is_err());
    }

    #[test]
    fn identity_operator_has_full_projector() {
        // μ = 0 makes ℬ = I.
        let art = scalar(0.0, 1.0, 0.1);
        let cls = classify(&art, DEFAULT_UNIT_TOL).unwrap();
        assert_eq!(cls.verdict, Verdict::PowerConvergent);
        let unit = unit_space_for(&art, &cls).unwrap();
        assert_relative_eq!(unit.projector[(0, 0)], 1.0, epsilon = 1e-12);
        let g = generalized_inverse_check(&art, &unit).unwrap();
        assert!(g.first < 1e-14 && g.second < 1e-14);
        assert_relative_eq!(generalized_inverse(&art, &unit).unwrap()[(0, 0)], 0.0);
    }

    fn line_network(rule: CombinationRule, n_b: usize) -> (Scenario, RegressorSpec, GroundTruthModel) {
        let g = NetworkGraph::line(3).unwrap();
        let basis = BasisSet::sample(&[0.25, 0.5, 0.75], 1.0, n_b).unwrap();
        let policy = CombinationPolicy::from_rules(&g, CombinationRule::Identity, rule, rule).unwrap();
        let sc = Scenario::new(basis.clone(), 2, policy, vec![0.05, 0.04, 0.06]).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
        let spec = RegressorSpec::new(vec![r.clone(), r.clone() * 1.3, r * 0.7], vec![0.1, 0.05, 0.2])
            .unwrap();
        let w = DVector::from_fn(2 * n_b, |j, _| (j as f64 * 0.7).sin());
        let truth = GroundTruthModel::from_global(&basis, 2, w).unwrap();
        (sc, spec, truth)
    }

    #[test]
    fn fixed_point_holds() {
        let (sc, spec, truth) = line_network(CombinationRule::Metropolis, 2);
        let art = TheoryArtifacts::assemble(&sc, &spec, &truth).unwrap();
        let target = replicate(truth.global().unwrap(), 3);
        let lhs = (DMatrix::identity(art.dim(), art.dim()) - &art.b) * &target;
        assert!((lhs - &art.driving).amax() < 1e-12);
    }

    #[test]
    fn hand_built_operator_matches() {
        let (sc, spec, truth) = line_network(CombinationRule::Uniform, 1);
        let art = TheoryArtifacts::assemble(&sc, &spec, &truth).unwrap();
        let block = 2;
        let a2 = extend(sc.policy().a2(), block);
        let a1 = extend(sc.policy().a1(), block);
        let mu = DMatrix::from_diagonal(&DVector::from_fn(6, |j, _| sc.step_sizes()[j / 2]));
        let r = block_diag(&art.aggregated_cov);
        let expect = a2.transpose() * (DMatrix::identity(6, 6) - mu * r) * a1.transpose();
        assert!((expect - &art.b).amax() < 1e-15);
    }

    #[test]
    fn full_rank_mean_limit_is_truth() {
        let (sc, spec, truth) = line_network(CombinationRule::Metropolis, 1);
        let art = TheoryArtifacts::assemble(&sc, &spec, &truth).unwrap();
        let cls = classify(&art, DEFAULT_UNIT_TOL).unwrap();
        assert_eq!(cls.verdict, Verdict::StrictlyStable);
        let unit = unit_space_for(&art, &cls).unwrap();
        let lim = mean_limit(&art, &unit, &art.initial_mean).unwrap();
        assert!((lim - replicate(truth.global().unwrap(), 3)).amax() < 1e-10);
        let bound = mean_error_bound(&art, art.initial_error.as_ref().unwrap()).unwrap();
        assert_eq!(bound.factor, 0.0);
        assert!(bound.holds);
    }

    #[test]
    fn paths_agree_on_rank_deficient_network() {
        let (sc, spec, truth) = line_network(CombinationRule::Metropolis, 2);
        let art = TheoryArtifacts::assemble(&sc, &spec, &truth).unwrap();
        assert_eq!(art.dim(), 12);
        let unit = unit_projector(&art).unwrap();
        let (sigma, _) = msd_emse_weights(&art, 1).unwrap();
        let a = steady_state_wmse(&art, &unit, &sigma, SteadyStateMethod::Kronecker).unwrap();
        let b = steady_state_wmse(&art, &unit, &sigma, SteadyStateMethod::Series).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-9, max_relative = 1e-9);
        let ss = steady_state(&art, &unit, SteadyStateMethod::Auto).unwrap();
        assert_relative_eq!(ss.msd_h[1], a, epsilon = 1e-12, max_relative = 1e-9);
    }

    #[test]
    fn sigma_and_covariance_curves_agree() {
        let (sc, spec, truth) = line_network(CombinationRule::Uniform, 2);
        let art = TheoryArtifacts::assemble(&sc, &spec, &truth).unwrap();
        let curves = learning_curves(&art, 40).unwrap();
        let (sigma, _) = msd_emse_weights(&art, 2).unwrap();
        let eta = learning_curve(&art, &sigma, 40).unwrap();
        for i in 0..40 {
            assert_relative_eq!(curves.msd_h[i * 3 + 2], eta[i], max_relative = 1e-10);
        }
    }
}
