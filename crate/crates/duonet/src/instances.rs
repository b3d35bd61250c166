//! Built-in quadratic consensus instances with closed-form solutions.
//!
//! Node `i` holds `f_i(x) = (μ/2)‖x − b_i‖²` with centers `b_{ij} = 3i + j`.
//! Everything the convergence criteria need is available analytically:
//!
//! * consensus minimizer `x* = mean_i(b_i)` and `F* = Σ f_i(x*)`;
//! * squared gradient norm at the optimum `M_F² = Σ‖∇f_i(x*)‖²`;
//! * dual solutions: in barred variables `ȳ*_i = μ(x* − b_i)` (the point
//!   where every node's maximizer equals `x*`), and the minimum-norm
//!   unbarred `y*` solving `√W̄ y = ȳ*`, with `R_y = ‖y*‖`.
//!
//! These are the reference values the solvers' traces (radius, gap vs `F*`)
//! and the Monte-Carlo success criteria are measured against.

use crate::graph::{NetworkGraph, SqrtLaplacian};
use crate::oracles::{ConjugateOracle, GaussianQuadraticOracle, QuadraticOracle};
use crate::BlockVec;
use ndarray::{Array1, Axis};

#[derive(Clone, Debug)]
pub struct QuadraticConsensusInstance {
    pub b: BlockVec,
    pub mu: f64,
    /// Consensus minimizer (one block; every node agrees on it).
    pub x_star: Array1<f64>,
    pub f_star: f64,
    /// `Σ_i ‖∇f_i(x*)‖²`.
    pub m_f_sq: f64,
    /// Optimal dual iterate in barred variables, `ȳ*_i = μ(x* − b_i)`.
    pub y_bar_star: BlockVec,
    /// Minimum-norm dual solution in unbarred variables (`√W̄ y* = ȳ*`).
    pub y_star: BlockVec,
    /// `‖y*‖₂` — the dual-solution radius; consensus residuals are judged
    /// against `ε/R_y`.
    pub r_y: f64,
}

/// The standard instance on a given graph: centers `b_{ij} = 3i + j`.
pub fn quadratic_consensus(graph: &NetworkGraph, n: usize, mu: f64) -> QuadraticConsensusInstance {
    let m = graph.m();
    let mut b = BlockVec::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            b[[i, j]] = (3 * i + j) as f64;
        }
    }
    quadratic_consensus_with_centers(graph, b, mu)
}

/// Same closed forms for arbitrary centers.
pub fn quadratic_consensus_with_centers(
    graph: &NetworkGraph,
    b: BlockVec,
    mu: f64,
) -> QuadraticConsensusInstance {
    assert_eq!(b.nrows(), graph.m(), "one center per node");
    assert!(mu > 0.0);
    let x_star = b.mean_axis(Axis(0)).expect("at least one node");
    let mut f_star = 0.0;
    let mut m_f_sq = 0.0;
    let mut y_bar_star = BlockVec::zeros(b.raw_dim());
    for (i, row) in b.rows().into_iter().enumerate() {
        let diff = &x_star - &row;
        let sq = diff.dot(&diff);
        f_star += 0.5 * mu * sq;
        m_f_sq += mu * mu * sq;
        y_bar_star.row_mut(i).assign(&(diff.mapv(|v| mu * v)));
    }
    let sqrt_w = SqrtLaplacian::from_graph(graph);
    let y_star = sqrt_w
        .min_norm_solve(&y_bar_star)
        .expect("shape fixed by construction");
    let r_y = y_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    QuadraticConsensusInstance {
        b,
        mu,
        x_star,
        f_star,
        m_f_sq,
        y_bar_star,
        y_star,
        r_y,
    }
}

impl QuadraticConsensusInstance {
    pub fn exact_oracles(&self) -> Vec<Box<dyn ConjugateOracle>> {
        self.b
            .rows()
            .into_iter()
            .map(|row| {
                Box::new(QuadraticOracle::new(self.mu, row.to_owned())) as Box<dyn ConjugateOracle>
            })
            .collect()
    }

    pub fn gaussian_oracles(&self, sigma_x_sq: f64) -> Vec<Box<dyn ConjugateOracle>> {
        self.b
            .rows()
            .into_iter()
            .map(|row| {
                Box::new(GaussianQuadraticOracle::new(
                    self.mu,
                    row.to_owned(),
                    sigma_x_sq,
                )) as Box<dyn ConjugateOracle>
            })
            .collect()
    }
}
