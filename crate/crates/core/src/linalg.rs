//! Dense linear-algebra helpers shared by the theory and the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `a ⊗ I_block`.
pub fn kron_identity(a: &DMatrix<f64>, block: usize) -> DMatrix<f64> {
    a.kronecker(&DMatrix::identity(block, block))
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let len = blocks.iter().map(|b| b.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.len()).copy_from(b);
        at += b.len();
    }
    out
}

pub fn split(v: &DVector<f64>, block: usize) -> Vec<DVector<f64>> {
    assert_eq!(v.len() % block, 0, "vector length is not a multiple of the block size");
    (0..v.len() / block)
        .map(|k| v.rows(k * block, block).into_owned())
        .collect()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Block-maximum norm: largest Euclidean norm among consecutive blocks.
pub fn block_max_norm(v: &DVector<f64>, block: usize) -> f64 {
    assert!(block > 0 && v.len().is_multiple_of(block));
    (0..v.len() / block)
        .map(|k| v.rows(k * block, block).norm())
        .fold(0.0, f64::max)
}

/// Induced block-maximum norm of a block-diagonal matrix given by its blocks.
///
/// For block-diagonal operators the induced norm is the largest spectral norm
/// among the diagonal blocks.
pub fn block_diag_max_norm(blocks: &[DMatrix<f64>]) -> f64 {
    blocks
        .iter()
        .map(|b| b.clone().singular_values().max())
        .fold(0.0, f64::max)
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via its
/// eigendecomposition. Eigenvalues below `rel_tol · λ_max` count as zero.
pub fn pinv_symmetric(r: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = r.clone().symmetric_eigen();
    let cutoff = rel_tol * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut out = DMatrix::zeros(r.nrows(), r.ncols());
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            let q = eig.eigenvectors.column(j);
            out += (q * q.transpose()) / lambda;
        }
    }
    out
}

/// Symmetric square root of a symmetric PSD matrix. Tiny negative
/// eigenvalues from round-off are clamped to zero.
pub fn sqrt_psd(r: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = r.clone().symmetric_eigen();
    let mut out = DMatrix::zeros(r.nrows(), r.ncols());
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let q = eig.eigenvectors.column(j);
        out += (q * q.transpose()) * lambda.max(0.0).sqrt();
    }
    out
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= tol * m.amax().max(1.0)
}

/// Singular triplets split at `tol`: returns `(left_null, right_null)` whose
/// columns span the left and right null spaces of the square matrix `x`.
pub fn null_spaces(x: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    null_spaces_at_most(x, tol, x.nrows())
}

/// As [`null_spaces`], keeping at most `cap` directions (smallest singular
/// values first).
pub fn null_spaces_at_most(
    x: &DMatrix<f64>,
    tol: f64,
    cap: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let max_iter = 500 * n.max(10);
    let svd = [4.0 * f64::EPSILON, 1e-14, 1e-12]
        .into_iter()
        .find_map(|eps| x.clone().try_svd(true, true, eps, max_iter))
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..n).filter(|&j| svd.singular_values[j] <= tol).collect();
    idx.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    idx.truncate(cap);
    let mut left = DMatrix::zeros(n, idx.len());
    let mut right = DMatrix::zeros(n, idx.len());
    for (c, &j) in idx.iter().enumerate() {
        left.set_column(c, &u.column(j));
        right.set_column(c, &v_t.row(j).transpose());
    }
    Ok((left, right))
}

/// Spectral radius of a square matrix from its complex eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(complex_eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let max_iter = 500 * m.nrows().max(10);
    // Deflation at exactly machine epsilon can stall indefinitely; a few ulps
    // of slack changes eigenvalues only at round-off level.
    for eps in [4.0 * f64::EPSILON, 1e-14, 1e-12] {
        if let Some(schur) = nalgebra::linalg::Schur::try_new(m.clone(), eps, max_iter) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::Numerical("Schur decomposition did not converge".into()))
}
