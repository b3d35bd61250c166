//! Per-node dual (conjugate) oracles and batched stochastic gradients.
//!
//! Node `i` exposes its local function through the Fenchel conjugate
//! `φ_i(y) = max_x {⟨y, x⟩ − f_i(x)}`. The maximizer `x_i(y)` is
//! simultaneously the gradient of `φ_i` (Demyanov–Danskin), which is what
//! lets the solvers run entirely on conjugate evaluations: the dual
//! objective is `ψ(y) = Σ_i φ_i([√W y]_i)` and its gradient is
//! `√W · stack(x_i([√W y]_i))`.
//!
//! Stochastic oracles return noisy draws `x_i(y, ξ)`; [`batched_primal`]
//! averages `r` of them per node. Every sample's randomness comes from the
//! keyed stream `(seed, iteration, node, sample)` and the average is reduced
//! in fixed node-then-sample order, so batches are reproducible and
//! independent of any parallel scheduling.

use crate::error::{Error, Result};
use crate::graph::SqrtLaplacian;
use crate::rng::stream;
use crate::BlockVec;
use ndarray::{Array1, ArrayView1};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A node's dual oracle: conjugate value, primal maximizer, optional sampler.
pub trait ConjugateOracle: Send + Sync {
    /// Block dimension `n`.
    fn dim(&self) -> usize;

    /// `φ_i(y)`.
    fn value(&self, y: ArrayView1<f64>) -> f64;

    /// `x_i(y) = argmax_x {⟨y, x⟩ − f_i(x)}`, also `∇φ_i(y)`.
    fn primal_argmax(&self, y: ArrayView1<f64>) -> Array1<f64>;

    /// `f_i(x)`, used for primal objectives and duality gaps.
    fn primal_value(&self, x: ArrayView1<f64>) -> f64;

    /// One stochastic draw `x_i(y, ξ)`, or `None` for deterministic oracles.
    fn sample_primal(&self, _y: ArrayView1<f64>, _rng: &mut ChaCha8Rng) -> Option<Array1<f64>> {
        None
    }

    /// Strong-convexity modulus of `f_i` when known (drives the default
    /// smoothness `L_ψ = λ_max(W)/μ`).
    fn strong_convexity(&self) -> Option<f64> {
        None
    }

    /// Config-facing identifier (`quadratic_exact`, `quadratic_gaussian`,
    /// `ot_entropic`).
    fn kind(&self) -> &'static str;
}

/// Oracle for `f_i(x) = (μ/2)‖x − b_i‖²`: everything in closed form.
///
/// `φ_i(y) = ⟨y, b_i⟩ + ‖y‖²/(2μ)` and `x_i(y) = b_i + y/μ`.
#[derive(Clone, Debug)]
pub struct QuadraticOracle {
    pub mu: f64,
    pub b: Array1<f64>,
}

impl QuadraticOracle {
    pub fn new(mu: f64, b: Array1<f64>) -> Self {
        assert!(mu > 0.0, "strong convexity modulus must be positive");
        QuadraticOracle { mu, b }
    }
}

impl ConjugateOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&self, y: ArrayView1<f64>) -> f64 {
        y.dot(&self.b) + y.dot(&y) / (2.0 * self.mu)
    }

    fn primal_argmax(&self, y: ArrayView1<f64>) -> Array1<f64> {
        &self.b + &(&y / self.mu)
    }

    fn primal_value(&self, x: ArrayView1<f64>) -> f64 {
        let d = &x - &self.b;
        0.5 * self.mu * d.dot(&d)
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.mu)
    }

    fn kind(&self) -> &'static str {
        "quadratic_exact"
    }
}

/// Quadratic oracle whose sampler adds Gaussian noise to the exact
/// maximizer: variance `σ_x²/n` per coordinate, so `E‖x(y,ξ) − x(y)‖² = σ_x²`
/// regardless of the block dimension.
#[derive(Clone, Debug)]
pub struct GaussianQuadraticOracle {
    pub base: QuadraticOracle,
    pub sigma_x_sq: f64,
}

impl GaussianQuadraticOracle {
    pub fn new(mu: f64, b: Array1<f64>, sigma_x_sq: f64) -> Self {
        assert!(sigma_x_sq >= 0.0, "variance must be nonnegative");
        GaussianQuadraticOracle {
            base: QuadraticOracle::new(mu, b),
            sigma_x_sq,
        }
    }
}

impl ConjugateOracle for GaussianQuadraticOracle {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, y: ArrayView1<f64>) -> f64 {
        self.base.value(y)
    }

    fn primal_argmax(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.base.primal_argmax(y)
    }

    fn primal_value(&self, x: ArrayView1<f64>) -> f64 {
        self.base.primal_value(x)
    }

    fn sample_primal(&self, y: ArrayView1<f64>, rng: &mut ChaCha8Rng) -> Option<Array1<f64>> {
        let mut x = self.base.primal_argmax(y);
        if self.sigma_x_sq > 0.0 {
            let sd = (self.sigma_x_sq / x.len() as f64).sqrt();
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += sd * z;
            }
        }
        Some(x)
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.base.mu)
    }

    fn kind(&self) -> &'static str {
        "quadratic_gaussian"
    }
}

/// Variance constants of a stochastic dual oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticDualConfig {
    /// Per-sample primal variance proxy `σ_x²`.
    pub sigma_x_sq: f64,
    /// Dual-gradient variance `σ_ψ² = λ_max(W)·σ_x²`.
    pub sigma_psi_sq: f64,
}

impl StochasticDualConfig {
    pub fn new(sigma_x_sq: f64, lambda_max: f64) -> Self {
        assert!(sigma_x_sq >= 0.0);
        StochasticDualConfig {
            sigma_x_sq,
            sigma_psi_sq: lambda_max * sigma_x_sq,
        }
    }
}

fn check_oracle_blocks(
    oracles: &[Box<dyn ConjugateOracle>],
    x: &BlockVec,
    context: &'static str,
) -> Result<()> {
    if x.nrows() != oracles.len() {
        return Err(Error::DimensionMismatch {
            context,
            expected: format!("{} block rows", oracles.len()),
            got: format!("{}", x.nrows()),
        });
    }
    for (i, o) in oracles.iter().enumerate() {
        if o.dim() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("oracle {i} dimension {}", o.dim()),
                got: format!("{} columns", x.ncols()),
            });
        }
    }
    Ok(())
}

/// Mean of `r` per-node primal samples at the dual point `√W λ`.
///
/// Node `i` averages `x_i([√W λ]_i, ξ_t)` for `t = 0..r` with the running
/// mean update `m ← m + (x − m)/(t+1)`; a zero-variance sampler therefore
/// reproduces `primal_argmax` bit for bit, batch size notwithstanding.
pub fn batched_primal(
    oracles: &[Box<dyn ConjugateOracle>],
    sqrt_w: &SqrtLaplacian,
    lambda: &BlockVec,
    r: u64,
    seed: u64,
    iteration: u64,
) -> Result<BlockVec> {
    assert!(r >= 1, "batch size must be at least 1");
    check_oracle_blocks(oracles, lambda, "batched_primal")?;
    let swl = sqrt_w.apply(lambda)?;
    let n = lambda.ncols();
    let mut out = BlockVec::zeros((oracles.len(), n));
    for (i, oracle) in oracles.iter().enumerate() {
        let y = swl.row(i);
        let mut mean = Array1::<f64>::zeros(n);
        for t in 0..r {
            let mut rng = stream(seed, iteration, i as u64, t);
            let x = oracle
                .sample_primal(y, &mut rng)
                .ok_or(Error::NoStochasticSupport { node: i })?;
            let weight = 1.0 / (t + 1) as f64;
            mean.zip_mut_with(&x, |m, &v| *m += (v - *m) * weight);
        }
        out.row_mut(i).assign(&mean);
    }
    Ok(out)
}

/// Batched stochastic dual gradient `∇Ψ(λ, ξ) = √W · batched_primal(λ)`.
pub fn batched_dual_grad(
    oracles: &[Box<dyn ConjugateOracle>],
    sqrt_w: &SqrtLaplacian,
    lambda: &BlockVec,
    r: u64,
    seed: u64,
    iteration: u64,
) -> Result<BlockVec> {
    let x = batched_primal(oracles, sqrt_w, lambda, r, seed, iteration)?;
    sqrt_w.apply(&x)
}

/// Dual objective `ψ(y) = Σ_i φ_i([√W y]_i)`.
pub fn dual_value(
    oracles: &[Box<dyn ConjugateOracle>],
    sqrt_w: &SqrtLaplacian,
    y: &BlockVec,
) -> Result<f64> {
    check_oracle_blocks(oracles, y, "dual_value")?;
    let swy = sqrt_w.apply(y)?;
    Ok(oracles
        .iter()
        .enumerate()
        .map(|(i, o)| o.value(swy.row(i)))
        .sum())
}

/// Dual objective in barred variables, `ψ̄(ȳ) = Σ_i φ_i(ȳ_i)` — what the
/// distributed iteration holds after the change of variables `ȳ = √W y`.
pub fn dual_value_nodewise(oracles: &[Box<dyn ConjugateOracle>], y_bar: &BlockVec) -> Result<f64> {
    check_oracle_blocks(oracles, y_bar, "dual_value_nodewise")?;
    Ok(oracles
        .iter()
        .enumerate()
        .map(|(i, o)| o.value(y_bar.row(i)))
        .sum())
}

/// Stacks the exact maximizers `x_i(p_i)` for per-node dual points `p`.
pub fn primal_blocks(oracles: &[Box<dyn ConjugateOracle>], points: &BlockVec) -> Result<BlockVec> {
    check_oracle_blocks(oracles, points, "primal_blocks")?;
    let mut out = BlockVec::zeros(points.raw_dim());
    for (i, o) in oracles.iter().enumerate() {
        out.row_mut(i).assign(&o.primal_argmax(points.row(i)));
    }
    Ok(out)
}

/// Primal objective `F(x) = Σ_i f_i(x_i)`.
pub fn primal_objective(oracles: &[Box<dyn ConjugateOracle>], x: &BlockVec) -> Result<f64> {
    check_oracle_blocks(oracles, x, "primal_objective")?;
    Ok(oracles
        .iter()
        .enumerate()
        .map(|(i, o)| o.primal_value(x.row(i)))
        .sum())
}
