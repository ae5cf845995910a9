//! Network topologies and combination matrices.
//!
//! Orientation convention: entry `(ℓ, k)` of a combination matrix is the
//! weight node `k` assigns to node `ℓ`. `A₁` and `A₂` are left-stochastic
//! (every **column** sums to one, `Aᵀ𝟙 = 𝟙`); `C` is right-stochastic (every
//! **row** sums to one, `C𝟙 = 𝟙`). A transposed matrix silently changes the
//! algorithm, so [`CombinationPolicy::new`] validates all three.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::kron_identity;

/// Undirected graph with implied self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkGraph {
    neighbors: Vec<Vec<usize>>,
}

impl NetworkGraph {
    /// Builds a graph from undirected edges between 0-based node indices.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("network needs at least one node"));
        }
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::domain(format!("edge ({a}, {b}) references a missing node")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    /// Nodes on a line, `k ↔ k ± 1`.
    pub fn line(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
        Self::from_edges(n, &edges)
    }

    /// `nx × ny` grid with 4-neighbour links, nodes numbered row-major
    /// (`k1·ny + k2`).
    pub fn grid(nx: usize, ny: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for a in 0..nx {
            for b in 0..ny {
                let k = a * ny + b;
                if a + 1 < nx {
                    edges.push((k, k + ny));
                }
                if b + 1 < ny {
                    edges.push((k, k + 1));
                }
            }
        }
        Self::from_edges(nx * ny, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        Self::from_edges(n, &edges)
    }

    pub fn nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// `𝒩_k`, sorted and including `k`.
    pub fn neighborhood(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    /// `n_k = |𝒩_k|`.
    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn is_linked(&self, l: usize, k: usize) -> bool {
        self.neighbors[k].binary_search(&l).is_ok()
    }
}

/// Named combination rules. Each produces a left-stochastic matrix; see
/// [`CombinationRule::right_stochastic`] for the `C` orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombinationRule {
    Identity,
    Uniform,
    Metropolis,
    RelativeDegree,
}

impl CombinationRule {
    pub fn left_stochastic(self, g: &NetworkGraph) -> DMatrix<f64> {
        match self {
            CombinationRule::Identity => DMatrix::identity(g.nodes(), g.nodes()),
            CombinationRule::Uniform => uniform_weights(g),
            CombinationRule::Metropolis => metropolis_weights(g),
            CombinationRule::RelativeDegree => relative_degree_weights(g),
        }
    }

    /// The rule applied with rows and columns swapped, so rows sum to one.
    pub fn right_stochastic(self, g: &NetworkGraph) -> DMatrix<f64> {
        self.left_stochastic(g).transpose()
    }
}

/// `a_{ℓk} = 1/max(n_k, n_ℓ)` off the diagonal; the diagonal takes the rest.
/// Symmetric, hence doubly stochastic.
pub fn metropolis_weights(g: &NetworkGraph) -> DMatrix<f64> {
    let n = g.nodes();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut off = 0.0;
        for &l in g.neighborhood(k) {
            if l != k {
                let w = 1.0 / g.degree(k).max(g.degree(l)) as f64;
                a[(l, k)] = w;
                off += w;
            }
        }
        a[(k, k)] = 1.0 - off;
    }
    a
}

/// `a_{ℓk} = 1/n_k`.
pub fn uniform_weights(g: &NetworkGraph) -> DMatrix<f64> {
    let n = g.nodes();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let w = 1.0 / g.degree(k) as f64;
        for &l in g.neighborhood(k) {
            a[(l, k)] = w;
        }
    }
    a
}

/// `a_{ℓk} = n_ℓ / Σ_{m∈𝒩_k} n_m`.
pub fn relative_degree_weights(g: &NetworkGraph) -> DMatrix<f64> {
    let n = g.nodes();
    let mut a = DMatrix::zeros(n, n);
    for k in 0..n {
        let total: usize = g.neighborhood(k).iter().map(|&m| g.degree(m)).sum();
        for &l in g.neighborhood(k) {
            a[(l, k)] = g.degree(l) as f64 / total as f64;
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Columns sum to one.
    Left,
    /// Rows sum to one.
    Right,
    Doubly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NotSquare { rows: usize, cols: usize },
    Negative { row: usize, col: usize, value: f64 },
    NonFinite { row: usize, col: usize },
    ColumnSum { col: usize, sum: f64 },
    RowSum { row: usize, sum: f64 },
    /// Non-zero weight between nodes that are not neighbours.
    OffSupport { row: usize, col: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StochasticReport {
    pub violations: Vec<Violation>,
}

impl StochasticReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks sign, finiteness, sums for `orientation` and, when a graph is
/// given, that weights vanish off the neighbourhood support. Never fails;
/// problems are listed in the report.
pub fn validate_stochastic(
    m: &DMatrix<f64>,
    orientation: Orientation,
    tol: f64,
    graph: Option<&NetworkGraph>,
) -> StochasticReport {
    let mut violations = Vec::new();
    if !m.is_square() {
        violations.push(Violation::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
        return StochasticReport { violations };
    }
    let n = m.nrows();
    for col in 0..n {
        for row in 0..n {
            let value = m[(row, col)];
            if !value.is_finite() {
                violations.push(Violation::NonFinite { row, col });
            } else if value < 0.0 {
                violations.push(Violation::Negative { row, col, value });
            }
            if let Some(g) = graph {
                if g.nodes() == n && value != 0.0 && !g.is_linked(row, col) {
                    violations.push(Violation::OffSupport { row, col, value });
                }
            }
        }
    }
    if let Some(g) = graph {
        if g.nodes() != n {
            violations.push(Violation::NotSquare {
                rows: n,
                cols: g.nodes(),
            });
        }
    }
    if matches!(orientation, Orientation::Left | Orientation::Doubly) {
        for col in 0..n {
            let sum = m.column(col).sum();
            if (sum - 1.0).abs() > tol {
                violations.push(Violation::ColumnSum { col, sum });
            }
        }
    }
    if matches!(orientation, Orientation::Right | Orientation::Doubly) {
        for row in 0..n {
            let sum = m.row(row).sum();
            if (sum - 1.0).abs() > tol {
                violations.push(Violation::RowSum { row, sum });
            }
        }
    }
    StochasticReport { violations }
}

/// Sparse view of one matrix column: `(ℓ, weight)` for non-zero weights.
pub(crate) type SparseColumns = Vec<Vec<(usize, f64)>>;

fn sparse_columns(m: &DMatrix<f64>) -> SparseColumns {
    (0..m.ncols())
        .map(|k| {
            (0..m.nrows())
                .filter_map(|l| {
                    let w = m[(l, k)];
                    (w != 0.0).then_some((l, w))
                })
                .collect()
        })
        .collect()
}

/// The triple `{A₁, A₂, C}` driving the general diffusion recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationPolicy {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    c: DMatrix<f64>,
    a1_cols: SparseColumns,
    a2_cols: SparseColumns,
    c_cols: SparseColumns,
}

/// Tolerance on row/column sums accepted by [`CombinationPolicy::new`].
pub const STOCHASTIC_TOL: f64 = 1e-10;

impl CombinationPolicy {
    /// Validates orientation and support of each matrix against `graph`.
    pub fn new(
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        c: DMatrix<f64>,
        graph: Option<&NetworkGraph>,
    ) -> Result<Self> {
        for (name, m, o) in [
            ("A1", &a1, Orientation::Left),
            ("A2", &a2, Orientation::Left),
            ("C", &c, Orientation::Right),
        ] {
            let report = validate_stochastic(m, o, STOCHASTIC_TOL, graph);
            if !report.passed() {
                return Err(Error::domain(format!(
                    "{name} is not a valid {o:?}-stochastic combination matrix: {:?}",
                    report.violations
                )));
            }
        }
        if a1.nrows() != a2.nrows() || a1.nrows() != c.nrows() {
            return Err(Error::domain("combination matrices disagree in size"));
        }
        Ok(Self {
            a1_cols: sparse_columns(&a1),
            a2_cols: sparse_columns(&a2),
            c_cols: sparse_columns(&c),
            a1,
            a2,
            c,
        })
    }

    /// Builds the policy from named rules on `graph`.
    pub fn from_rules(
        graph: &NetworkGraph,
        a1: CombinationRule,
        a2: CombinationRule,
        c: CombinationRule,
    ) -> Result<Self> {
        Self::new(
            a1.left_stochastic(graph),
            a2.left_stochastic(graph),
            c.right_stochastic(graph),
            Some(graph),
        )
    }

    /// `A₁ = A₂ = C = I`: every node runs a stand-alone LMS filter.
    pub fn non_cooperative(n: usize) -> Self {
        let i = DMatrix::identity(n, n);
        Self::new(i.clone(), i.clone(), i, None).expect("identity is stochastic")
    }

    /// Adapt-then-combine: `A₁ = I`, `A₂ = a`, `C = I`.
    pub fn atc(a: DMatrix<f64>, graph: Option<&NetworkGraph>) -> Result<Self> {
        let n = a.nrows();
        Self::new(DMatrix::identity(n, n), a, DMatrix::identity(n, n), graph)
    }

    pub fn nodes(&self) -> usize {
        self.a1.nrows()
    }

    pub fn a1(&self) -> &DMatrix<f64> {
        &self.a1
    }

    pub fn a2(&self) -> &DMatrix<f64> {
        &self.a2
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub(crate) fn a1_cols(&self) -> &SparseColumns {
        &self.a1_cols
    }

    pub(crate) fn a2_cols(&self) -> &SparseColumns {
        &self.a2_cols
    }

    pub(crate) fn c_cols(&self) -> &SparseColumns {
        &self.c_cols
    }

    /// `𝒜₁ = A₁ ⊗ I_block`.
    pub fn extended_a1(&self, block: usize) -> DMatrix<f64> {
        kron_identity(&self.a1, block)
    }

    pub fn extended_a2(&self, block: usize) -> DMatrix<f64> {
        kron_identity(&self.a2, block)
    }

    pub fn extended_c(&self, block: usize) -> DMatrix<f64> {
        kron_identity(&self.c, block)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn line_neighborhoods() {
        let g = NetworkGraph::line(4).unwrap();
        assert_eq!(g.neighborhood(1), &[0, 1, 2]);
        assert_eq!(g.neighborhood(0), &[0, 1]);
        let single = NetworkGraph::line(1).unwrap();
        assert_eq!(single.neighborhood(0), &[0]);
    }

    #[test]
    fn grid_corner_and_center_degrees() {
        // 3×3 by hand: corners see two neighbours, edges three, center four.
        let g = NetworkGraph::grid(3, 3).unwrap();
        assert_eq!(g.neighborhood(0), &[0, 1, 3]);
        assert_eq!(g.neighborhood(1), &[0, 1, 2, 4]);
        assert_eq!(g.neighborhood(4), &[1, 3, 4, 5, 7]);
        let big = NetworkGraph::grid(11, 11).unwrap();
        assert_eq!(big.degree(0), 3);
        assert_eq!(big.degree(120), 3);
        assert_eq!(big.degree(60), 5);
    }

    #[test]
    fn two_node_metropolis() {
        let g = NetworkGraph::line(2).unwrap();
        let a = metropolis_weights(&g);
        assert_eq!(a, DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn uniform_column_on_line() {
        let g = NetworkGraph::line(4).unwrap();
        let a = uniform_weights(&g);
        let third = 1.0 / 3.0;
        assert_eq!(a.column(1).as_slice(), &[third, third, third, 0.0]);
    }

    #[test]
    fn relative_degree_by_hand() {
        // Line of 3: degrees 2, 3, 2. Node 0 sums 2 + 3 = 5.
        let g = NetworkGraph::line(3).unwrap();
        let a = relative_degree_weights(&g);
        assert_relative_eq!(a[(0, 0)], 0.4);
        assert_relative_eq!(a[(1, 0)], 0.6);
        assert_relative_eq!(a[(1, 1)], 3.0 / 7.0);
    }

    #[test]
    fn example_two_matrix_is_left_stochastic() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.0, 0.0, 0.5, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let g = NetworkGraph::line(3).unwrap();
        assert!(validate_stochastic(&a, Orientation::Left, 1e-12, Some(&g)).passed());
        assert!(!validate_stochastic(&a, Orientation::Right, 1e-12, None).passed());
    }

    #[test]
    fn identity_passes_every_orientation() {
        let i = DMatrix::<f64>::identity(3, 3);
        for o in [Orientation::Left, Orientation::Right, Orientation::Doubly] {
            assert!(validate_stochastic(&i, o, 1e-12, None).passed());
        }
    }

    #[test]
    fn negative_entry_reported_with_coordinates() {
        let m = DMatrix::from_row_slice(2, 2, &[1.1, 0.0, -0.1, 1.0]);
        let r = validate_stochastic(&m, Orientation::Left, 1e-12, None);
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Negative { row: 1, col: 0, .. })));
    }

    #[test]
    fn off_support_weight_is_flagged() {
        let g = NetworkGraph::line(3).unwrap();
        let mut a = uniform_weights(&g);
        a[(2, 0)] = 0.1;
        a[(0, 0)] -= 0.1;
        let r = validate_stochastic(&a, Orientation::Left, 1e-12, Some(&g));
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::OffSupport { row: 2, col: 0, .. })));
    }

    #[test]
    fn policy_rejects_transposed_c() {
        let g = NetworkGraph::line(3).unwrap();
        let a = relative_degree_weights(&g);
        let i = DMatrix::identity(3, 3);
        // Relative-degree is left- but not right-stochastic.
        assert!(CombinationPolicy::new(i.clone(), i, a, Some(&g)).is_err());
    }

    #[test]
    fn extension_preserves_orientation() {
        let g = NetworkGraph::line(4).unwrap();
        let p = CombinationPolicy::from_rules(
            &g,
            CombinationRule::Identity,
            CombinationRule::Uniform,
            CombinationRule::Uniform,
        )
        .unwrap();
        let ext_a = p.extended_a2(3);
        let ext_c = p.extended_c(3);
        assert!(validate_stochastic(&ext_a, Orientation::Left, 1e-12, None).passed());
        assert!(validate_stochastic(&ext_c, Orientation::Right, 1e-12, None).passed());
    }

    fn arb_graph() -> impl Strategy<Value = NetworkGraph> {
        (2usize..9, proptest::collection::vec((0usize..9, 0usize..9), 0..20)).prop_map(|(n, e)| {
            let mut edges: Vec<_> = e.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            // keep it connected with a spanning path
            edges.extend((1..n).map(|k| (k - 1, k)));
            NetworkGraph::from_edges(n, &edges).unwrap()
        })
    }

    proptest! {
        #[test]
        fn rules_honor_contracts(g in arb_graph()) {
            let m = metropolis_weights(&g);
            prop_assert!(validate_stochastic(&m, Orientation::Doubly, 1e-12, Some(&g)).passed());
            let u = uniform_weights(&g);
            prop_assert!(validate_stochastic(&u, Orientation::Left, 1e-12, Some(&g)).passed());
            let r = relative_degree_weights(&g);
            prop_assert!(validate_stochastic(&r, Orientation::Left, 1e-12, Some(&g)).passed());
            for rule in [CombinationRule::Uniform, CombinationRule::Metropolis, CombinationRule::RelativeDegree] {
                let c = rule.right_stochastic(&g);
                prop_assert!(validate_stochastic(&c, Orientation::Right, 1e-12, Some(&g)).passed());
            }
            for k in 0..g.nodes() {
                for l in 0..g.nodes() {
                    if !g.is_linked(l, k) {
                        prop_assert_eq!(m[(l, k)], 0.0);
                        prop_assert_eq!(u[(l, k)], 0.0);
                        prop_assert_eq!(r[(l, k)], 0.0);
                    }
                }
            }
        }
    }
}
