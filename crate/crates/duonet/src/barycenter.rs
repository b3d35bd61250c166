//! Entropic Wasserstein-barycenter application.
//!
//! Each node holds a reference histogram `q_i` and the local objective
//! `f_i(p) = min_{π ∈ U(p, q_i)} ⟨π, C⟩ + μ·Σ_{jl} π_{jl} ln π_{jl}` — the
//! entropy-regularized transport cost from `p` to `q_i`. Its convex
//! conjugate has the closed form
//!
//! ```text
//! f_i*(u) = μ · Σ_j q_j · ln( (1/q_j) · Σ_l exp((u_l − C_{lj})/μ) )
//! ```
//!
//! whose gradient is the `q`-mixture of column softmaxes — cheap, and
//! sampleable one column at a time. That makes the barycenter problem
//! `min_p Σ_i f_i(p)` a drop-in instance for both dual solvers, with no
//! inner transport solve anywhere.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::NetworkGraph;
use crate::oracles::ConjugateOracle;

/// `|row sum − 1|` tolerance for histograms handed to the oracle.
const SIMPLEX_TOL: f64 = 1e-12;
/// Residual target for the semi-dual ascent inside `primal_value`.
const ASCENT_TOL: f64 = 1e-11;
const ASCENT_CAP: usize = 500_000;

/// Conjugate oracle for the entropic transport cost to a fixed histogram.
#[derive(Clone, Debug)]
pub struct EntropicOTOracle {
    /// `n×n` cost matrix; `C[l][j]` prices moving barycenter mass `l` to
    /// reference mass `j`.
    c: Array2<f64>,
    /// Reference histogram on the simplex.
    q: Array1<f64>,
    /// Entropic regularization `μ > 0`.
    mu_reg: f64,
}

impl EntropicOTOracle {
    pub fn new(c: Array2<f64>, q: Array1<f64>, mu_reg: f64) -> Result<Self> {
        check_cost(&c)?;
        check_simplex(q.view(), 0)?;
        if q.len() != c.nrows() {
            return Err(Error::DimensionMismatch {
                context: "EntropicOTOracle::new",
                expected: format!("histogram of length {}", c.nrows()),
                got: format!("{}", q.len()),
            });
        }
        if mu_reg <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "entropic regularization must be positive, got {mu_reg}"
            )));
        }
        Ok(Self { c, q, mu_reg })
    }

    pub fn q(&self) -> ArrayView1<'_, f64> {
        self.q.view()
    }

    pub fn mu_reg(&self) -> f64 {
        self.mu_reg
    }

    /// Softmax of `(u − C_{·j})/μ` — the conditional plan column given `j`.
    fn column_softmax(&self, u: ArrayView1<f64>, j: usize) -> Array1<f64> {
        let scores = Array1::from_iter(
            self.c
                .column(j)
                .iter()
                .zip(u.iter())
                .map(|(&c, &ui)| (ui - c) / self.mu_reg),
        );
        softmax(&scores)
    }

    /// Log-sum-exp of `(u − C_{·j})/μ`, stabilized by the column max.
    fn column_lse(&self, u: ArrayView1<f64>, j: usize) -> f64 {
        let scores: Vec<f64> = self
            .c
            .column(j)
            .iter()
            .zip(u.iter())
            .map(|(&c, &ui)| (ui - c) / self.mu_reg)
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
    }
}

impl ConjugateOracle for EntropicOTOracle {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn value(&self, y: ArrayView1<f64>) -> f64 {
        let mut total = 0.0;
        for (j, &qj) in self.q.iter().enumerate() {
            if qj == 0.0 {
                continue;
            }
            total += qj * (self.column_lse(y, j) - qj.ln());
        }
        self.mu_reg * total
    }

    fn primal_argmax(&self, y: ArrayView1<f64>) -> Array1<f64> {
        ot_conjugate_grad(self, y)
    }

    fn primal_value(&self, x: ArrayView1<f64>) -> f64 {
        semi_dual_ascent(self, x).0
    }

    fn sample_primal(&self, y: ArrayView1<f64>, rng: &mut ChaCha8Rng) -> Option<Array1<f64>> {
        Some(ot_conjugate_grad_sampled(self, y, rng))
    }

    fn strong_convexity(&self) -> Option<f64> {
        Some(self.mu_reg)
    }

    fn kind(&self) -> &'static str {
        "ot_entropic"
    }
}

/// Exact conjugate gradient: `Σ_j q_j · softmax((u − C_{·j})/μ)`, a point in
/// the simplex.
pub fn ot_conjugate_grad(oracle: &EntropicOTOracle, u: ArrayView1<f64>) -> Array1<f64> {
    let mut grad = Array1::zeros(u.len());
    for (j, &qj) in oracle.q.iter().enumerate() {
        if qj == 0.0 {
            continue;
        }
        grad.zip_mut_with(&oracle.column_softmax(u, j), |g, &s| *g += qj * s);
    }
    grad
}

/// One-column unbiased estimate of [`ot_conjugate_grad`]: draw `j ~ q`,
/// return that column's softmax.
pub fn ot_conjugate_grad_sampled(
    oracle: &EntropicOTOracle,
    u: ArrayView1<f64>,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    let draw: f64 = rng.random();
    let mut cum = 0.0;
    let mut picked = oracle.q.len() - 1;
    for (j, &qj) in oracle.q.iter().enumerate() {
        cum += qj;
        if draw < cum {
            picked = j;
            break;
        }
    }
    oracle.column_softmax(u, picked)
}

/// Barycenter instance assembled for the dual solvers.
pub struct BarycenterProblem {
    pub oracles: Vec<Box<dyn ConjugateOracle>>,
    /// Histogram length.
    pub n: usize,
    /// Node count.
    pub m: usize,
    /// Objective flatness constant `M_F² = 2·n·m·‖C‖²_∞`.
    pub m_f_sq: f64,
    /// Dual gradient smoothness `λ_max(W)/μ`.
    pub l_psi: f64,
    /// Default dual-gradient variance: `λ_max(W)·σ_x²` with the simplex
    /// deviation bound `σ_x² = 4`.
    pub sigma_psi_sq: f64,
    /// The alternative constant `m·λ_max(W)` (`--paper-constants`).
    pub sigma_psi_sq_paper: f64,
}

/// Validates the inputs and builds one entropic-OT oracle per node plus the
/// constants the stochastic solver needs (`M_F²`, `L_ψ`, `σ_ψ²`).
pub fn build_barycenter_problem(
    histograms: &Array2<f64>,
    cost: &Array2<f64>,
    mu_reg: f64,
    graph: &NetworkGraph,
) -> Result<BarycenterProblem> {
    check_cost(cost)?;
    let n = cost.nrows();
    let m = graph.m();
    if m < 2 {
        return Err(Error::InvalidConfig(
            "barycenter needs at least two nodes (a single node already holds its own histogram)"
                .into(),
        ));
    }
    if histograms.nrows() != m {
        return Err(Error::DimensionMismatch {
            context: "build_barycenter_problem",
            expected: format!("{m} histogram rows (one per node)"),
            got: format!("{}", histograms.nrows()),
        });
    }
    if histograms.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "build_barycenter_problem",
            expected: format!("histograms of length {n} to match the cost matrix"),
            got: format!("{}", histograms.ncols()),
        });
    }
    let mut oracles: Vec<Box<dyn ConjugateOracle>> = Vec::with_capacity(m);
    for (i, row) in histograms.axis_iter(Axis(0)).enumerate() {
        check_simplex(row, i)?;
        oracles.push(Box::new(EntropicOTOracle::new(
            cost.clone(),
            row.to_owned(),
            mu_reg,
        )?));
    }
    let c_max = cost.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let lambda_max = graph.lambda_max();
    Ok(BarycenterProblem {
        oracles,
        n,
        m,
        m_f_sq: 2.0 * n as f64 * m as f64 * c_max * c_max,
        l_psi: lambda_max / mu_reg,
        sigma_psi_sq: lambda_max * 4.0,
        sigma_psi_sq_paper: m as f64 * lambda_max,
    })
}

/// Entropic transport cost for `n = 2` by direct minimization over the
/// one-parameter family of couplings (golden-section on the plan's corner
/// mass) — an evaluator independent of the conjugate machinery.
pub fn transport_cost_n2(
    p: ArrayView1<f64>,
    q: ArrayView1<f64>,
    cost: &Array2<f64>,
    mu_reg: f64,
) -> f64 {
    assert!(p.len() == 2 && q.len() == 2 && cost.nrows() == 2 && cost.ncols() == 2);
    let objective = |t: f64| {
        let plan = [t, p[0] - t, q[0] - t, 1.0 - p[0] - q[0] + t];
        let linear = plan[0] * cost[[0, 0]]
            + plan[1] * cost[[0, 1]]
            + plan[2] * cost[[1, 0]]
            + plan[3] * cost[[1, 1]];
        linear + mu_reg * plan.iter().map(|&v| xlnx(v)).sum::<f64>()
    };
    let mut lo = (p[0] + q[0] - 1.0).max(0.0);
    let mut hi = p[0].min(q[0]);
    if hi <= lo {
        return objective(lo.min(hi).max(0.0));
    }
    // Golden-section: the objective is strictly convex in t.
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    for _ in 0..300 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
        if hi - lo <= 1e-16 {
            break;
        }
    }
    objective(0.5 * (lo + hi))
}

/// Brute-force barycenter for `n = 2`: scan `p = (t, 1−t)` on a grid and
/// return the best point and objective. Ground truth for desk-scale tests.
pub fn grid_search_barycenter(
    histograms: &Array2<f64>,
    cost: &Array2<f64>,
    mu_reg: f64,
    step: f64,
) -> Result<(Array1<f64>, f64)> {
    if histograms.ncols() != 2 {
        return Err(Error::InvalidConfig(format!(
            "grid search only covers n = 2 (1-D simplex), got n = {}",
            histograms.ncols()
        )));
    }
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidConfig(format!("bad grid step {step}")));
    }
    let steps = (1.0 / step).ceil() as usize;
    let mut best_t = 0.0;
    let mut best_f = f64::INFINITY;
    for i in 0..=steps {
        let t = (i as f64 * step).min(1.0);
        let p = Array1::from_vec(vec![t, 1.0 - t]);
        let f: f64 = histograms
            .axis_iter(Axis(0))
            .map(|q| transport_cost_n2(p.view(), q, cost, mu_reg))
            .sum();
        if f < best_f {
            best_f = f;
            best_t = t;
        }
    }
    Ok((Array1::from_vec(vec![best_t, 1.0 - best_t]), best_f))
}

/// Reference barycenter for small `n` (≤ 10): projected gradient on the
/// simplex, with `∇f_i(p)` taken as the semi-dual maximizer `u_i(p)`.
pub fn projected_gradient_barycenter(
    histograms: &Array2<f64>,
    cost: &Array2<f64>,
    mu_reg: f64,
    n_steps: usize,
) -> Result<(Array1<f64>, f64)> {
    let n = cost.nrows();
    if n > 10 {
        return Err(Error::InvalidConfig(format!(
            "the projected-gradient reference solver is desk-scale (n ≤ 10), got n = {n}"
        )));
    }
    let m = histograms.nrows();
    let oracles: Result<Vec<EntropicOTOracle>> = histograms
        .axis_iter(Axis(0))
        .map(|q| EntropicOTOracle::new(cost.clone(), q.to_owned(), mu_reg))
        .collect();
    let oracles = oracles?;
    let eta = mu_reg / m as f64;
    let mut p = Array1::from_elem(n, 1.0 / n as f64);
    for _ in 0..n_steps {
        let mut grad = Array1::zeros(n);
        for o in &oracles {
            let (_, u) = semi_dual_ascent(o, p.view());
            grad += &u;
        }
        let moved = &p - &(eta * &grad);
        p = project_to_simplex(moved.view());
    }
    let f = oracles
        .iter()
        .map(|o| semi_dual_ascent(o, p.view()).0)
        .sum();
    Ok((p, f))
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
fn project_to_simplex(v: ArrayView1<f64>) -> Array1<f64> {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let candidate = (cum - 1.0) / (i + 1) as f64;
        if s - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.mapv(|x| (x - tau).max(0.0))
}

/// Maximizes `⟨u, p⟩ − f*(u)` by gradient ascent with the natural step `μ`;
/// the optimum equals `f(p)` and the maximizer is a subgradient of `f` at
/// `p`. Returns `(f(p), u)`.
fn semi_dual_ascent(oracle: &EntropicOTOracle, p: ArrayView1<f64>) -> (f64, Array1<f64>) {
    let n = p.len();
    let mut u = Array1::zeros(n);
    for _ in 0..ASCENT_CAP {
        let grad = ot_conjugate_grad(oracle, u.view());
        let resid = p
            .iter()
            .zip(grad.iter())
            .map(|(&pi, &gi)| (pi - gi).abs())
            .fold(0.0f64, f64::max);
        if resid <= ASCENT_TOL {
            break;
        }
        u.zip_mut_with(&p.to_owned(), |ui, &pi| *ui += oracle.mu_reg * pi);
        u.zip_mut_with(&grad, |ui, &gi| *ui -= oracle.mu_reg * gi);
        // The objective is shift-invariant; recentering keeps u bounded.
        let mean = u.sum() / n as f64;
        u.mapv_inplace(|ui| ui - mean);
    }
    (u.dot(&p) - oracle.value(u.view()), u)
}

fn xlnx(x: f64) -> f64 {
    // Clamp tiny negatives from float cancellation at the plan's corners.
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn softmax(scores: &Array1<f64>) -> Array1<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = scores.mapv(|s| (s - m).exp());
    let total = out.sum();
    out.mapv_inplace(|v| v / total);
    out
}

fn check_cost(cost: &Array2<f64>) -> Result<()> {
    if cost.nrows() != cost.ncols() {
        return Err(Error::NonSquareCost {
            got: format!("{}×{}", cost.nrows(), cost.ncols()),
        });
    }
    if cost.nrows() == 0 {
        return Err(Error::NonSquareCost { got: "0×0".into() });
    }
    if cost.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidConfig(
            "cost matrix entries must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

fn check_simplex(row: ArrayView1<f64>, index: usize) -> Result<()> {
    if row.is_empty() {
        return Err(Error::NotASimplex {
            row: index,
            reason: "empty histogram".into(),
        });
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::NotASimplex {
            row: index,
            reason: format!("entry {v} is negative or non-finite"),
        });
    }
    let sum: f64 = row.sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotASimplex {
            row: index,
            reason: format!("sums to {sum}, not 1"),
        });
    }
    Ok(())
}

/// Reads histograms from CSV (one row per node, `#` comments allowed).
/// Rows summing within `[0.999, 1.001]` are renormalized; anything further
/// off is rejected as not a histogram.
pub fn read_histograms_csv(path: &Path) -> Result<Array2<f64>> {
    let mut rows = read_csv_matrix(path)?;
    for (i, mut row) in rows.axis_iter_mut(Axis(0)).enumerate() {
        if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NotASimplex {
                row: i,
                reason: format!("entry {v} is negative or non-finite"),
            });
        }
        let sum: f64 = row.sum();
        if !(0.999..=1.001).contains(&sum) {
            return Err(Error::NotASimplex {
                row: i,
                reason: format!("sums to {sum}, outside [0.999, 1.001]"),
            });
        }
        row.mapv_inplace(|v| v / sum);
    }
    Ok(rows)
}

/// Reads a cost matrix from CSV. Squareness and sign are validated when the
/// problem is assembled, not here.
pub fn read_cost_csv(path: &Path) -> Result<Array2<f64>> {
    read_csv_matrix(path)
}

/// Writes one comma-separated row per node with round-trip precision.
pub fn write_histograms_csv(path: &Path, rows: &Array2<f64>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = String::new();
    for row in rows.axis_iter(Axis(0)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_csv_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            let tok = tok.trim();
            row.push(tok.parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!(
                    "{}:{}: '{}' is not a number",
                    path.display(),
                    lineno + 1,
                    tok
                ))
            })?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidConfig(format!(
            "{}: ragged rows (expected {} columns everywhere)",
            path.display(),
            width
        )));
    }
    let m = rows.len();
    Array2::from_shape_vec((m, width), rows.concat())
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}
