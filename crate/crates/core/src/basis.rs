//! Shifted Chebyshev space basis and the per-node interpolation matrices.
//!
//! A node at position `x_k` carries the sampled basis row
//! `b_k = [b_1(x_k/L), …, b_{N_b}(x_k/L)]`. With `M` parameter functions the
//! global coefficient vector `w` stacks the rows of the `M × N_b` coefficient
//! matrix, and `h_k = B_k w` with `B_k = I_M ⊗ b_kᵀ`. The block matrix is never
//! needed by the estimators: `B_k w` is `M` inner products against `b_k`, and
//! `B_kᵀ x` places `x_m b_k` into block `m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

/// Shifted Chebyshev polynomial `b_n(x)` on `[0, 1]` (1-based `n`).
///
/// Uses `b_1 = 1`, `b_2 = 2x − 1` and `b_{n+1} = 2(2x − 1) b_n − b_{n−1}` for
/// every `n ≥ 2`.
pub fn chebyshev_shifted(n: usize, x: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("Chebyshev index starts at 1"));
    }
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite argument {x}")));
    }
    Ok(chebyshev_row(n, x)[n - 1])
}

/// `[b_1(x), …, b_count(x)]` by the three-term recurrence.
fn chebyshev_row(count: usize, x: f64) -> Vec<f64> {
    let t = 2.0 * x - 1.0;
    let mut row = Vec::with_capacity(count);
    for n in 0..count {
        let value = match n {
            0 => 1.0,
            1 => t,
            _ => 2.0 * t * row[n - 1] - row[n - 2],
        };
        row.push(value);
    }
    row
}

/// Where the nodes live, so rows can be evaluated at arbitrary positions.
#[derive(Debug, Clone, PartialEq)]
enum Layout {
    Line { length: f64 },
    Grid { width: f64, height: f64, counts: (usize, usize) },
}

/// Sampled basis vectors `b_k` for every node of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    count: usize,
    layout: Layout,
    rows: Vec<DVector<f64>>,
}

impl BasisSet {
    /// Samples `n_b` shifted Chebyshev functions at `positions ⊂ [0, length]`.
    /// Positions are rescaled by `length` before evaluation.
    pub fn sample(positions: &[f64], length: f64, n_b: usize) -> Result<Self> {
        if n_b < 1 {
            return Err(Error::domain("basis needs at least one function"));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("domain length must be positive, got {length}")));
        }
        let rows = positions
            .iter()
            .map(|&x| {
                if !(0.0..=length).contains(&x) {
                    return Err(Error::domain(format!("position {x} outside [0, {length}]")));
                }
                Ok(DVector::from_vec(chebyshev_row(n_b, x / length)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            count: n_b,
            layout: Layout::Line { length },
            rows,
        })
    }

    /// Builds a basis from explicit rows. Interpolation at new positions is
    /// unavailable for such sets.
    pub fn from_rows(rows: Vec<DVector<f64>>) -> Result<Self> {
        let count = rows.first().map_or(0, |r| r.len());
        if count == 0 {
            return Err(Error::domain("basis rows must be non-empty"));
        }
        for r in &rows {
            check_len("basis row", count, r.len())?;
        }
        Ok(Self {
            count,
            layout: Layout::Line { length: f64::NAN },
            rows,
        })
    }

    /// Number of basis functions `N_b`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &DVector<f64> {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[DVector<f64>] {
        &self.rows
    }

    /// Materializes `B_k = I_M ⊗ b_kᵀ` (shape `M × M·N_b`).
    pub fn block_matrix(&self, k: usize, m: usize) -> DMatrix<f64> {
        kron_row(&self.rows[k], m)
    }

    /// `B_k w` without forming `B_k`.
    pub fn apply(&self, k: usize, w: &DVector<f64>) -> DVector<f64> {
        apply_row(&self.rows[k], w)
    }

    /// `B_kᵀ x` for an `M`-vector `x`.
    pub fn apply_transpose(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        let b = &self.rows[k];
        let n_b = b.len();
        let mut out = DVector::zeros(x.len() * n_b);
        for (m, &xm) in x.iter().enumerate() {
            out.rows_mut(m * n_b, n_b).axpy(xm, b, 0.0);
        }
        out
    }

    /// `B_kᵀ B_k = I_M ⊗ b_k b_kᵀ`.
    pub fn gram(&self, k: usize, m: usize) -> DMatrix<f64> {
        let b = &self.rows[k];
        DMatrix::<f64>::identity(m, m).kronecker(&(b * b.transpose()))
    }

    /// Basis row at an arbitrary position on a line layout.
    pub fn row_at(&self, x: f64) -> Result<DVector<f64>> {
        match self.layout {
            Layout::Line { length } if length.is_finite() => {
                if !(0.0..=length).contains(&x) {
                    return Err(Error::domain(format!("position {x} outside [0, {length}]")));
                }
                Ok(DVector::from_vec(chebyshev_row(self.count, x / length)))
            }
            _ => Err(Error::domain("basis has no one-dimensional layout")),
        }
    }

    /// Evaluates `B(x) w` at any position `x ∈ [0, L]`, including points
    /// between nodes.
    pub fn interpolate(&self, w: &DVector<f64>, x: f64) -> Result<DVector<f64>> {
        if w.is_empty() || !w.len().is_multiple_of(self.count) {
            return Err(Error::domain(format!(
                "coefficient length {} is not a multiple of N_b = {}",
                w.len(),
                self.count
            )));
        }
        Ok(apply_row(&self.row_at(x)?, w))
    }

    /// Two-dimensional evaluation for sets built by [`BasisSet2D`].
    pub fn interpolate_2d(&self, w: &DVector<f64>, x: f64, y: f64) -> Result<f64> {
        match self.layout {
            Layout::Grid { width, height, counts } => {
                check_len("2D coefficient vector", self.count, w.len())?;
                if !(0.0..=width).contains(&x) || !(0.0..=height).contains(&y) {
                    return Err(Error::domain(format!("point ({x}, {y}) outside the grid")));
                }
                let row = tensor_row(
                    &chebyshev_row(counts.0, x / width),
                    &chebyshev_row(counts.1, y / height),
                );
                Ok(row.dot(w))
            }
            Layout::Line { .. } => Err(Error::domain("basis has no two-dimensional layout")),
        }
    }
}

/// Tensor-product shifted Chebyshev basis on a rectangular grid.
///
/// Nodes `(k1, k2)` and basis indices `(n1, n2)` are both flattened
/// row-major: node `(k1 − 1)·N_y + (k2 − 1)` and entry
/// `(n1 − 1)·N_b2 + (n2 − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet2D {
    counts: (usize, usize),
    grid: (usize, usize),
    axis_x: Vec<Vec<f64>>,
    axis_y: Vec<Vec<f64>>,
    set: BasisSet,
}

impl BasisSet2D {
    /// Samples on the interior of an `nx × ny` grid with spacings
    /// `width/(nx+1)` and `height/(ny+1)`.
    pub fn sample_interior(
        nx: usize,
        ny: usize,
        width: f64,
        height: f64,
        n_b1: usize,
        n_b2: usize,
    ) -> Result<Self> {
        if n_b1 == 0 || n_b2 == 0 {
            return Err(Error::domain("basis counts must be positive"));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::domain("grid must have interior nodes"));
        }
        let axis = |n: usize, len: f64, count: usize| -> Vec<Vec<f64>> {
            let dx = len / (n + 1) as f64;
            (1..=n).map(|k| chebyshev_row(count, k as f64 * dx / len)).collect()
        };
        let axis_x = axis(nx, width, n_b1);
        let axis_y = axis(ny, height, n_b2);
        let mut rows = Vec::with_capacity(nx * ny);
        for bx in &axis_x {
            for by in &axis_y {
                rows.push(tensor_row(bx, by));
            }
        }
        Ok(Self {
            counts: (n_b1, n_b2),
            grid: (nx, ny),
            axis_x,
            axis_y,
            set: BasisSet {
                count: n_b1 * n_b2,
                layout: Layout::Grid {
                    width,
                    height,
                    counts: (n_b1, n_b2),
                },
                rows,
            },
        })
    }

    pub fn counts(&self) -> (usize, usize) {
        self.counts
    }

    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    /// `p_{n,k1,k2}` with 1-based indices.
    pub fn entry(&self, (n1, n2): (usize, usize), (k1, k2): (usize, usize)) -> f64 {
        self.axis_x[k1 - 1][n1 - 1] * self.axis_y[k2 - 1][n2 - 1]
    }

    /// The flattened rows, usable wherever a [`BasisSet`] is expected.
    pub fn as_set(&self) -> &BasisSet {
        &self.set
    }

    pub fn into_set(self) -> BasisSet {
        self.set
    }
}

fn tensor_row(bx: &[f64], by: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        bx.len() * by.len(),
        bx.iter().flat_map(|&a| by.iter().map(move |&b| a * b)),
    )
}

fn kron_row(b: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let n_b = b.len();
    let mut out = DMatrix::zeros(m, m * n_b);
    for i in 0..m {
        out.view_mut((i, i * n_b), (1, n_b)).copy_from(&b.transpose());
    }
    out
}

fn apply_row(b: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let n_b = b.len();
    DVector::from_iterator(w.len() / n_b, (0..w.len() / n_b).map(|m| b.dot(&w.rows(m * n_b, n_b))))
}
