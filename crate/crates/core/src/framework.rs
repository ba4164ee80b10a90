//! Configurations, the complete-graph edge ordering, incidence and
//! stress-matrix assembly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result, UrfError};
use crate::spectral::{numerical_rank, sym_eig, DEFAULT_RANK_TOL};

/// Default relative threshold below which a stress counts as zero.
pub const DEFAULT_EDGE_TOL: f64 = 1e-6;

/// Target positions of `N` agents in `R^D`, one agent per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    positions: DMatrix<f64>,
}

impl Configuration {
    /// Validates `N ≥ D + 2` and that `[Pᵀ, 1]ᵀ` has full row rank.
    pub fn new(positions: DMatrix<f64>) -> Result<Self> {
        let d = positions.nrows();
        let n = positions.ncols();
        if d == 0 {
            return Err(invalid!("dimension must be positive"));
        }
        if n < d + 2 {
            return Err(invalid!("need at least D+2 = {} agents, got {n}", d + 2));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(invalid!("positions must be finite"));
        }
        let config = Self { positions };
        let p_bar = config.augmented();
        let eig = sym_eig(&(&p_bar * p_bar.transpose()))?;
        let rank = numerical_rank(eig.values.as_slice(), DEFAULT_RANK_TOL);
        if rank != d + 1 {
            return Err(UrfError::DegenerateConfiguration(format!(
                "augmented configuration has rank {rank}, need {}",
                d + 1
            )));
        }
        Ok(config)
    }

    /// Builds from a list of points, each of length `D`.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let d = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != d) {
            return Err(invalid!("points have inconsistent dimensions"));
        }
        let positions = DMatrix::from_fn(d, points.len(), |r, c| points[c][r]);
        Self::new(positions)
    }

    pub fn dim(&self) -> usize {
        self.positions.nrows()
    }

    pub fn len(&self) -> usize {
        self.positions.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.ncols() == 0
    }

    /// `P`, `D × N`.
    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    /// `P̄ = [Pᵀ, 1]ᵀ`, `(D+1) × N`.
    pub fn augmented(&self) -> DMatrix<f64> {
        let d = self.dim();
        let n = self.len();
        DMatrix::from_fn(
            d + 1,
            n,
            |r, c| {
                if r < d {
                    self.positions[(r, c)]
                } else {
                    1.0
                }
            },
        )
    }

    /// `p = vec(P)`: agent-major stacking `[p_1; p_2; …; p_N]`.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_column_slice(self.positions.as_slice())
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        self.positions
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    /// `P → A P + t 1ᵀ`.
    pub fn affine_image(&self, a: &DMatrix<f64>, t: &DVector<f64>) -> Result<Self> {
        let mut moved = a * &self.positions;
        for mut col in moved.column_iter_mut() {
            col += t;
        }
        Self::new(moved)
    }

    /// Relabels agents: new agent `k` is old agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if !is_permutation(perm, self.len()) {
            return Err(invalid!("not a permutation of 0..{}", self.len()));
        }
        let positions =
            DMatrix::from_fn(self.dim(), self.len(), |r, c| self.positions[(r, perm[c])]);
        Self::new(positions)
    }
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    perm.len() == n
        && perm
            .iter()
            .all(|&k| k < n && !std::mem::replace(&mut seen[k], true))
}

/// Vertices of a regular `N`-gon of the given circumradius, vertex `k` at
/// angle `2πk/N`.
pub fn regular_polygon(n: usize, radius: f64) -> Result<Configuration> {
    if n < 4 {
        return Err(invalid!(
            "a planar polygon needs at least 4 vertices, got {n}"
        ));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid!("radius must be positive, got {radius}"));
    }
    let positions = DMatrix::from_fn(2, n, |r, k| {
        let angle = 2.0 * PI * k as f64 / n as f64;
        radius * if r == 0 { angle.cos() } else { angle.sin() }
    });
    Configuration::new(positions)
}

/// Standard-normal coordinates from a seeded ChaCha stream; redraws while
/// the augmented matrix is rank deficient.
pub fn random_generic(n: usize, d: usize, seed: u64) -> Result<Configuration> {
    if d == 0 {
        return Err(invalid!("dimension must be positive"));
    }
    if n < d + 2 {
        return Err(invalid!("need at least D+2 = {} agents, got {n}", d + 2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let positions = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
        match Configuration::new(positions) {
            Ok(c) => return Ok(c),
            Err(UrfError::DegenerateConfiguration(_)) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Lexicographic list of the complete graph's edges `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeOrdering {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeOrdering {
    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Position of edge `{i, j}` in the ordering.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = (i.min(j), i.max(j));
        if i == j || j >= self.n {
            return None;
        }
        // edges before row i: sum_{k<i} (n-1-k)
        Some(i * (2 * self.n - i - 1) / 2 + (j - i - 1))
    }
}

pub fn canonical_edges(n: usize) -> Result<EdgeOrdering> {
    if n < 2 {
        return Err(invalid!("complete graph needs at least 2 nodes, got {n}"));
    }
    let edges = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    Ok(EdgeOrdering { n, edges })
}

/// `N × M̄` incidence matrix, column `e = (i, j)` equal to `e_i − e_j`.
pub fn incidence(ordering: &EdgeOrdering) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(ordering.n, ordering.len());
    for (e, &(i, j)) in ordering.edges.iter().enumerate() {
        b[(i, e)] = 1.0;
        b[(j, e)] = -1.0;
    }
    b
}

/// Per-edge stresses indexed by an [`EdgeOrdering`].
#[derive(Debug, Clone, PartialEq)]
pub struct StressVector(pub DVector<f64>);

impl StressVector {
    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().map(|w| w.abs()).sum()
    }
}

impl From<Vec<f64>> for StressVector {
    fn from(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }
}

/// Symmetric `N × N` stress matrix `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressMatrix(pub DMatrix<f64>);

impl StressMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn nodes(&self) -> usize {
        self.0.nrows()
    }
}

/// `Ω = B̄ diag(ω̄) B̄ᵀ`, accumulated edge by edge.
pub fn assemble_stress(ordering: &EdgeOrdering, stress: &StressVector) -> Result<StressMatrix> {
    if stress.len() != ordering.len() {
        return Err(invalid!(
            "stress vector has {} entries, ordering has {} edges",
            stress.len(),
            ordering.len()
        ));
    }
    let n = ordering.n;
    let mut omega = DMatrix::zeros(n, n);
    for (&(i, j), &w) in ordering.edges.iter().zip(stress.0.iter()) {
        omega[(i, i)] += w;
        omega[(j, j)] += w;
        omega[(i, j)] -= w;
        omega[(j, i)] -= w;
    }
    Ok(StressMatrix(omega))
}

/// Reads per-edge stresses back off a zero-row-sum matrix, `ω_ij = −Ω_ij`.
pub fn stress_from_matrix(ordering: &EdgeOrdering, omega: &DMatrix<f64>) -> Result<StressVector> {
    if omega.nrows() != ordering.n || omega.ncols() != ordering.n {
        return Err(invalid!(
            "matrix is {}x{}, ordering has {} nodes",
            omega.nrows(),
            omega.ncols(),
            ordering.n
        ));
    }
    Ok(StressVector(DVector::from_iterator(
        ordering.len(),
        ordering
            .edges
            .iter()
            .map(|&(i, j)| -0.5 * (omega[(i, j)] + omega[(j, i)])),
    )))
}

/// Edges surviving a relative magnitude threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseEdges {
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    /// Positions of the kept edges in the full ordering.
    pub indices: Vec<usize>,
}

impl SparseEdges {
    pub fn count(&self) -> usize {
        self.edges.len()
    }
}

/// Keeps edges with `|ω_e| > tau_rel · max|ω|`; an all-zero vector keeps none.
pub fn effective_edges(
    ordering: &EdgeOrdering,
    stress: &StressVector,
    tau_rel: f64,
) -> Result<SparseEdges> {
    if !(tau_rel > 0.0 && tau_rel < 1.0) {
        return Err(invalid!("threshold must lie in (0, 1), got {tau_rel}"));
    }
    if stress.len() != ordering.len() {
        return Err(invalid!(
            "stress vector has {} entries, ordering has {} edges",
            stress.len(),
            ordering.len()
        ));
    }
    let scale = stress.0.amax();
    let mut kept = SparseEdges {
        edges: Vec::new(),
        weights: Vec::new(),
        indices: Vec::new(),
    };
    if scale == 0.0 {
        return Ok(kept);
    }
    for (e, (&edge, &w)) in ordering.edges.iter().zip(stress.0.iter()).enumerate() {
        if w.abs() > tau_rel * scale {
            kept.edges.push(edge);
            kept.weights.push(w);
            kept.indices.push(e);
        }
    }
    Ok(kept)
}
