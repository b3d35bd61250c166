//! Dual-decomposition solvers for decentralized consensus optimization.
//!
//! The problem: `m` nodes of a connected network each hold a convex function
//! `f_i` and must agree on a common minimizer of `Σ f_i(x_i)` subject to the
//! consensus constraint `x_1 = … = x_m`, encoded spectrally as `√W x = 0`
//! with `W` the graph Laplacian lifted blockwise. Dualizing the constraint
//! yields a smooth dual objective `ψ(y) = Σ φ_i([√W y]_i)` built from the
//! Fenchel conjugates `φ_i`, whose gradient is assembled from purely local
//! primal maximizers — one Laplacian application per iteration, i.e. one
//! neighbor-exchange communication round.
//!
//! Two solvers operate on that dual:
//!
//! * [`solver_det`] — an accelerated dual gradient method with the explicit
//!   step schedule `α_{k+1} = (k+2)/(4L)`, for exact conjugate oracles;
//! * [`solver_stoch`] — the same acceleration template driven by mini-batched
//!   stochastic oracles, with the implicit `α` recurrence and an adaptive
//!   batch-size rule that preserves the deterministic rate with high
//!   probability.
//!
//! Both recover a primal solution as an ergodic (weighted) average of oracle
//! outputs. The [`barycenter`] module instantiates the machinery for entropic
//! Wasserstein barycenters, where the conjugate has a closed log-sum-exp form
//! and a cheap unbiased column sampler. [`diagnostics`] holds the measurement
//! side: duality gaps, consensus residuals, trace serialization, and checkers
//! for the supporting inequalities the solvers rely on.

pub mod barycenter;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod instances;
pub mod oracles;
pub mod rng;
pub mod solver_det;
pub mod solver_stoch;

pub use error::{Error, Result};

/// An `m × n` stack of per-node vectors: row `i` is node `i`'s block.
///
/// All solver state (`λ`, `ζ`, `y`, primal iterates) uses this layout; the
/// lifted Laplacian `W̄ ⊗ I_n` acts on it row-wise and is never materialized.
pub type BlockVec = ndarray::Array2<f64>;
