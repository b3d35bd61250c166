//! Network topologies, Laplacians, and the `√W` operator.
//!
//! The consensus constraint `x_1 = … = x_m` is encoded as `√W x = 0`, where
//! `W = W̄ ⊗ I_n` lifts the `m × m` graph Laplacian `W̄` to act on stacked
//! per-node blocks. Neither `W` nor `√W` is ever materialized at the lifted
//! size: [`NetworkGraph::apply_w`] works edge-by-edge (each call is one
//! neighbor-exchange communication round), and [`SqrtLaplacian`] applies
//! `√W̄` through the eigendecomposition, per block coordinate.
//!
//! `apply_sqrt_w` is *not* a local operator — a real deployment cannot
//! evaluate it with one round of gossip. The solvers are arranged (via the
//! barred change of variables) so that `√W` appears only where a central
//! simulator may compute it: initial/terminal transforms and diagnostics.

use crate::error::{Error, Result};
use crate::BlockVec;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Eigenvalues below this are treated as exact zeros (Laplacian kernel).
const EIGENVALUE_CLIP: f64 = 1e-12;

/// Topology descriptors accepted by [`build_graph`].
#[derive(Clone, Debug, PartialEq)]
pub enum Topology {
    Path,
    Cycle,
    Star,
    Complete,
    /// G(m, p) with a dedicated generator seed; resampled until connected.
    ErdosRenyi {
        p: f64,
        seed: u64,
    },
    /// Explicit unordered node pairs, 0-indexed.
    EdgeList(Vec<(usize, usize)>),
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Path => write!(f, "path"),
            Topology::Cycle => write!(f, "cycle"),
            Topology::Star => write!(f, "star"),
            Topology::Complete => write!(f, "complete"),
            Topology::ErdosRenyi { .. } => write!(f, "erdos_renyi"),
            Topology::EdgeList(_) => write!(f, "edge_list"),
        }
    }
}

impl FromStr for Topology {
    type Err = Error;

    /// Parses the data-free topology names (`path`, `cycle`/`ring`, `star`,
    /// `complete`). `erdos_renyi` and `edge_list` carry parameters and are
    /// assembled by the caller.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(Topology::Path),
            "cycle" | "ring" => Ok(Topology::Cycle),
            "star" => Ok(Topology::Star),
            "complete" => Ok(Topology::Complete),
            other => Err(Error::InvalidConfig(format!(
                "unknown topology '{other}' (expected path|cycle|star|complete|erdos_renyi|edge_list)"
            ))),
        }
    }
}

/// Undirected connected graph with its Laplacian spectrum.
///
/// Construction performs a dense symmetric eigendecomposition once;
/// everything downstream (spectral constants, `√W̄`, minimum-norm solves)
/// reuses it.
#[derive(Clone, Debug)]
pub struct NetworkGraph {
    m: usize,
    /// Edges as `(i, j)` with `i < j`, sorted and deduplicated.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    /// Laplacian eigenvalues, ascending, clipped to 0 below `1e-12`.
    eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors, column `c` paired with `eigenvalues[c]`.
    eigenvectors: Array2<f64>,
}

/// Spectral summary printed by the `graph-info` subcommand.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GraphInfo {
    pub m: usize,
    pub edges: usize,
    pub lambda_max: f64,
    pub lambda_min_plus: f64,
    pub chi: f64,
}

/// Builds a connected graph on `m ≥ 2` nodes from a topology descriptor.
///
/// # Errors
///
/// [`Error::DisconnectedGraph`] when the edge set does not connect all nodes
/// (for Erdős–Rényi, after 100 resampling attempts); [`Error::InvalidEdge`]
/// for self-loops or out-of-range endpoints; [`Error::InvalidConfig`] for
/// `m < 2` or `p ∉ [0, 1]`.
pub fn build_graph(topology: &Topology, m: usize) -> Result<NetworkGraph> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!(
            "topology '{topology}' needs m >= 2, got {m} (use NetworkGraph::single for the trivial graph)"
        )));
    }
    let edges = match topology {
        Topology::Path => (0..m - 1).map(|i| (i, i + 1)).collect(),
        Topology::Cycle => {
            let mut e: Vec<(usize, usize)> = (0..m - 1).map(|i| (i, i + 1)).collect();
            // For m = 2 the closing edge duplicates (0, 1); dedup below.
            e.push((0, m - 1));
            e
        }
        Topology::Star => (1..m).map(|i| (0, i)).collect(),
        Topology::Complete => {
            let mut e = Vec::with_capacity(m * (m - 1) / 2);
            for i in 0..m {
                for j in (i + 1)..m {
                    e.push((i, j));
                }
            }
            e
        }
        Topology::ErdosRenyi { p, seed } => erdos_renyi_edges(m, *p, *seed)?,
        Topology::EdgeList(pairs) => pairs.clone(),
    };
    NetworkGraph::from_edges(m, &edges)
}

fn erdos_renyi_edges(m: usize, p: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!(
            "erdos_renyi edge probability must lie in [0, 1], got {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components = 0;
    for _attempt in 0..100 {
        let mut edges = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        components = count_components(m, &edges);
        if components == 1 {
            return Ok(edges);
        }
    }
    Err(Error::DisconnectedGraph {
        multiplicity: components,
    })
}

fn count_components(m: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![Vec::new(); m];
    for &(i, j) in edges {
        if i < m && j < m && i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut seen = vec![false; m];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..m {
        if seen[start] {
            continue;
        }
        components += 1;
        stack.push(start);
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    components
}

impl NetworkGraph {
    /// Builds from an explicit edge list (`m ≥ 1`; pairs in any order).
    pub fn from_edges(m: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a == b {
                return Err(Error::InvalidEdge {
                    i: a,
                    j: b,
                    reason: "self-loops are not allowed",
                });
            }
            if a >= m || b >= m {
                return Err(Error::InvalidEdge {
                    i: a,
                    j: b,
                    reason: "endpoint out of range",
                });
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut neighbors = vec![Vec::new(); m];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }

        let laplacian = laplacian_matrix(m, &edges);
        let (mut eigenvalues, eigenvectors) = jacobi_eigh(&laplacian);
        for v in eigenvalues.iter_mut() {
            if *v < EIGENVALUE_CLIP {
                *v = 0.0;
            }
        }
        let zero_multiplicity = eigenvalues.iter().filter(|&&v| v == 0.0).count();
        if zero_multiplicity != 1 {
            return Err(Error::DisconnectedGraph {
                multiplicity: zero_multiplicity,
            });
        }
        Ok(NetworkGraph {
            m,
            edges,
            neighbors,
            eigenvalues,
            eigenvectors,
        })
    }

    /// The trivial single-node network: no edges, no constraint.
    ///
    /// Spectral conventions for this degenerate case: `λ_max = λ_min⁺ = 0`
    /// and `χ = 1` (an absent constraint is perfectly conditioned). Solvers
    /// on it need an explicit smoothness constant, since `λ_max/μ = 0` is
    /// not a usable default.
    pub fn single() -> Self {
        NetworkGraph {
            m: 1,
            edges: Vec::new(),
            neighbors: vec![Vec::new()],
            eigenvalues: Array1::zeros(1),
            eigenvectors: Array2::eye(1),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Laplacian eigenvalues, ascending, zeros exact.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eigenvalues
    }

    /// Dense Laplacian (diagnostics only; the solvers never form it).
    pub fn laplacian_matrix(&self) -> Array2<f64> {
        laplacian_matrix(self.m, &self.edges)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.m - 1]
    }

    /// Smallest nonzero eigenvalue (0 for the single-node graph).
    pub fn lambda_min_plus(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .find(|&v| v > 0.0)
            .unwrap_or(0.0)
    }

    /// Condition number `χ = λ_max / λ_min⁺`; 1 for the single-node graph.
    pub fn chi(&self) -> f64 {
        if self.m == 1 {
            1.0
        } else {
            self.lambda_max() / self.lambda_min_plus()
        }
    }

    pub fn info(&self) -> GraphInfo {
        GraphInfo {
            m: self.m,
            edges: self.edges.len(),
            lambda_max: self.lambda_max(),
            lambda_min_plus: self.lambda_min_plus(),
            chi: self.chi(),
        }
    }

    /// Applies the lifted Laplacian `W = W̄ ⊗ I_n` to an `m × n` block stack.
    ///
    /// Row `i` of the result is `deg(i)·X_i − Σ_{j ∈ N(i)} X_j`: node `i`
    /// reads only its neighbors' blocks, so one call is one communication
    /// round of the simulated network.
    pub fn apply_w(&self, x: &BlockVec) -> Result<BlockVec> {
        if x.nrows() != self.m {
            return Err(Error::DimensionMismatch {
                context: "apply_w",
                expected: format!("{} block rows", self.m),
                got: format!("{}", x.nrows()),
            });
        }
        let n = x.ncols();
        let mut out = BlockVec::zeros((self.m, n));
        for i in 0..self.m {
            let deg = self.neighbors[i].len() as f64;
            for c in 0..n {
                out[[i, c]] = deg * x[[i, c]];
            }
            for &j in &self.neighbors[i] {
                for c in 0..n {
                    out[[i, c]] -= x[[j, c]];
                }
            }
        }
        Ok(out)
    }
}

fn laplacian_matrix(m: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut l = Array2::zeros((m, m));
    for &(i, j) in edges {
        l[[i, j]] = -1.0;
        l[[j, i]] = -1.0;
        l[[i, i]] += 1.0;
        l[[j, j]] += 1.0;
    }
    l
}

/// The matrix square root `√W̄`, held in factored form `U diag(√λ) Uᵀ`.
///
/// Applying it is a global operation (every node's block mixes into every
/// other's); see the module docs for why that is acceptable here.
#[derive(Clone, Debug)]
pub struct SqrtLaplacian {
    m: usize,
    sqrt_eigenvalues: Array1<f64>,
    eigenvectors: Array2<f64>,
    rank: usize,
}

impl SqrtLaplacian {
    pub fn from_graph(g: &NetworkGraph) -> Self {
        let sqrt_eigenvalues = g.eigenvalues.mapv(f64::sqrt);
        let rank = sqrt_eigenvalues.iter().filter(|&&v| v > 0.0).count();
        SqrtLaplacian {
            m: g.m,
            sqrt_eigenvalues,
            eigenvectors: g.eigenvectors.clone(),
            rank,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of nonzero eigenvalues (`m − 1` for a connected graph).
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Applies `√W = √W̄ ⊗ I_n` to an `m × n` block stack.
    pub fn apply(&self, x: &BlockVec) -> Result<BlockVec> {
        self.scaled_transform(x, |s| s, "apply_sqrt_w")
    }

    /// Minimum-norm solution of `√W̄ Y = RHS` (Moore–Penrose applied to the
    /// factored form): components of `RHS` in the kernel are dropped, so the
    /// result both solves the system on `range(√W̄)` and is orthogonal to
    /// the consensus direction.
    pub fn min_norm_solve(&self, rhs: &BlockVec) -> Result<BlockVec> {
        self.scaled_transform(
            rhs,
            |s| if s > 0.0 { 1.0 / s } else { 0.0 },
            "min_norm_solve",
        )
    }

    /// `U diag(f(√λ)) Uᵀ · x`, the shared skeleton of apply/solve.
    fn scaled_transform(
        &self,
        x: &BlockVec,
        f: impl Fn(f64) -> f64,
        context: &'static str,
    ) -> Result<BlockVec> {
        if x.nrows() != self.m {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("{} block rows", self.m),
                got: format!("{}", x.nrows()),
            });
        }
        let coeffs = self.eigenvectors.t().dot(x);
        let mut scaled = coeffs;
        for (mut row, &s) in scaled
            .rows_mut()
            .into_iter()
            .zip(self.sqrt_eigenvalues.iter())
        {
            let factor = f(s);
            row.mapv_inplace(|v| v * factor);
        }
        Ok(self.eigenvectors.dot(&scaled))
    }
}

/// Reads an edge list: one `i j` pair per line, 0-indexed, `#` comments and
/// blank lines ignored.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = std::fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "edge list line {}: expected two node indices, got '{line}'",
                    lineno + 1
                ))
            })
        };
        let i = parse(parts.next())?;
        let j = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::InvalidConfig(format!(
                "edge list line {}: trailing tokens in '{line}'",
                lineno + 1
            )));
        }
        edges.push((i, j));
    }
    Ok(edges)
}

/// Writes an edge list in the format [`read_edge_list`] accepts.
pub fn write_edge_list(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut text = String::new();
    for &(i, j) in edges {
        text.push_str(&format!("{i} {j}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues ascending, eigenvectors as columns)` with
/// `A = V diag(λ) Vᵀ`. Quadratic convergence makes a handful of sweeps
/// enough at the `m ≤ ~200` scale this crate targets, and the method is
/// deterministic — important for byte-reproducible runs.
fn jacobi_eigh(matrix: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let m = matrix.nrows();
    assert_eq!(m, matrix.ncols(), "jacobi_eigh needs a square matrix");
    let mut a = matrix.clone();
    let mut v: Array2<f64> = Array2::eye(m);
    if m > 1 {
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
        for _sweep in 0..128 {
            let mut off_sq = 0.0;
            for p in 0..m {
                for q in (p + 1)..m {
                    off_sq += a[[p, q]] * a[[p, q]];
                }
            }
            if (2.0 * off_sq).sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    let apq = a[[p, q]];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    // Rotation angle that zeroes a[p][q], via the stable
                    // tangent formula t = sgn(θ)/(|θ| + √(θ²+1)).
                    let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (theta * theta + 1.0).sqrt())
                    } else {
                        1.0 / (theta - (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);

                    a[[p, p]] -= t * apq;
                    a[[q, q]] += t * apq;
                    a[[p, q]] = 0.0;
                    a[[q, p]] = 0.0;
                    for i in 0..m {
                        if i != p && i != q {
                            let aip = a[[i, p]];
                            let aiq = a[[i, q]];
                            a[[i, p]] = aip - s * (aiq + tau * aip);
                            a[[p, i]] = a[[i, p]];
                            a[[i, q]] = aiq + s * (aip - tau * aiq);
                            a[[q, i]] = a[[i, q]];
                        }
                    }
                    for i in 0..m {
                        let vip = v[[i, p]];
                        let viq = v[[i, q]];
                        v[[i, p]] = vip - s * (viq + tau * vip);
                        v[[i, q]] = viq + s * (vip - tau * viq);
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        a[[i, i]]
            .partial_cmp(&a[[j, j]])
            .expect("eigenvalues are finite")
            .then(i.cmp(&j))
    });
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut eigenvectors = Array2::zeros((m, m));
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..m {
            eigenvectors[[r, new_col]] = v[[r, old_col]];
        }
    }
    (eigenvalues, eigenvectors)
}
