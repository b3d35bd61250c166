//! Python surface for the duonet solvers.
//!
//! Thin wrappers: matrices cross the boundary as lists of row lists, vectors
//! as flat lists, and solver results come back as plain dicts. Validation
//! errors map to `ValueError`; runtime solver failures (divergence, batch
//! overflow, missing sampler) map to `RuntimeError`.

use ndarray::{Array1, Array2, Axis};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use duonet::barycenter::{
    build_barycenter_problem, ot_conjugate_grad, ot_conjugate_grad_sampled, EntropicOTOracle,
};
use duonet::graph::{build_graph, NetworkGraph, Topology};
use duonet::instances::quadratic_consensus;
use duonet::oracles::{primal_objective, ConjugateOracle};
use duonet::solver_det::{predict_iterations_det, solve_deterministic};
use duonet::solver_stoch::{
    predict_iterations_stoch, solve_stochastic, ReferenceSolution, StochParams,
};

fn to_py_err(e: duonet::Error) -> PyErr {
    use duonet::Error as E;
    match e {
        E::NonFiniteIterate { .. } | E::BatchOverflow { .. } | E::NoStochasticSupport { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let r = rows.len();
    let c = rows.first().map(|row| row.len()).unwrap_or(0);
    if r == 0 || c == 0 {
        return Err(PyValueError::new_err(format!(
            "{what} must be a non-empty matrix (list of equal-length rows)"
        )));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err(format!("{what} has ragged rows")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((r, c), flat).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn as_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_topology(name: &str, p: f64, seed: u64) -> PyResult<Topology> {
    let key = name.trim().to_ascii_lowercase();
    match key.as_str() {
        "erdos_renyi" | "er" => Ok(Topology::ErdosRenyi { p, seed }),
        other => other.parse().map_err(to_py_err),
    }
}

/// A connected undirected network with its Laplacian spectrum.
#[pyclass(module = "duonet_py", name = "Graph")]
struct PyGraph {
    inner: NetworkGraph,
}

#[pymethods]
impl PyGraph {
    /// `Graph(topology, m)` — topology is one of `path`, `cycle`, `star`,
    /// `complete`, or `erdos_renyi` (which uses `p` and `seed`).
    #[new]
    #[pyo3(signature = (topology, m, p = 0.5, seed = 0))]
    fn new(topology: &str, m: usize, p: f64, seed: u64) -> PyResult<Self> {
        let topo = parse_topology(topology, p, seed)?;
        Ok(Self {
            inner: build_graph(&topo, m).map_err(to_py_err)?,
        })
    }

    /// Build from explicit 0-indexed undirected edges.
    #[staticmethod]
    fn from_edges(m: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self {
            inner: NetworkGraph::from_edges(m, &edges).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    /// Largest Laplacian eigenvalue `λ_max(W)`.
    fn lambda_max(&self) -> f64 {
        self.inner.lambda_max()
    }

    /// Smallest positive Laplacian eigenvalue `λ_min⁺(W)`.
    fn lambda_min_plus(&self) -> f64 {
        self.inner.lambda_min_plus()
    }

    /// Condition number `χ = λ_max / λ_min⁺`.
    fn chi(&self) -> f64 {
        self.inner.chi()
    }

    /// Apply the lifted Laplacian `W̄ ⊗ I` to an `m × n` stack of node blocks.
    fn apply_w(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x, "x")?;
        let out = self.inner.apply_w(&x).map_err(to_py_err)?;
        Ok(as_rows(&out))
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(m={}, edges={}, chi={:.6})",
            self.inner.m(),
            self.inner.edges().len(),
            self.inner.chi()
        )
    }
}

/// Entropy-regularized optimal transport against a fixed reference marginal.
///
/// `value`/`grad` evaluate the smoothed conjugate of the transport cost at a
/// dual point `u`; `sample` draws the one-column unbiased gradient estimate;
/// `transport_cost` evaluates the primal transport cost at a candidate
/// first marginal `p`.
#[pyclass(module = "duonet_py", name = "EntropicOT")]
struct PyEntropicOT {
    inner: EntropicOTOracle,
}

impl PyEntropicOT {
    fn dual_point(&self, u: Vec<f64>) -> PyResult<Array1<f64>> {
        if u.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "expected a length-{} vector, got {}",
                self.inner.dim(),
                u.len()
            )));
        }
        Ok(Array1::from(u))
    }
}

#[pymethods]
impl PyEntropicOT {
    /// `EntropicOT(cost, q, mu_reg)` with an `n × n` cost matrix, a reference
    /// histogram `q` on the simplex, and entropic regularization `mu_reg > 0`.
    #[new]
    fn new(cost: Vec<Vec<f64>>, q: Vec<f64>, mu_reg: f64) -> PyResult<Self> {
        let c = matrix(cost, "cost")?;
        let q = Array1::from(q);
        Ok(Self {
            inner: EntropicOTOracle::new(c, q, mu_reg).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mu_reg(&self) -> f64 {
        self.inner.mu_reg()
    }

    /// Conjugate value `f*(u)`.
    fn value(&self, u: Vec<f64>) -> PyResult<f64> {
        let u = self.dual_point(u)?;
        Ok(self.inner.value(u.view()))
    }

    /// Conjugate gradient `∇f*(u)` — a point on the simplex.
    fn grad(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.dual_point(u)?;
        Ok(ot_conjugate_grad(&self.inner, u.view()).to_vec())
    }

    /// One-column unbiased estimate of `∇f*(u)`, keyed by `seed`.
    fn sample(&self, u: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
        let u = self.dual_point(u)?;
        let mut rng = duonet::rng::stream(seed, 0, 0, 0);
        Ok(ot_conjugate_grad_sampled(&self.inner, u.view(), &mut rng).to_vec())
    }

    /// Entropic transport cost from `p` to the stored marginal.
    fn transport_cost(&self, p: Vec<f64>) -> PyResult<f64> {
        let p = self.dual_point(p)?;
        if p.iter().any(|v| *v < 0.0) || (p.sum() - 1.0).abs() > 1e-9 {
            return Err(PyValueError::new_err(
                "p must be a probability vector (non-negative, summing to 1)",
            ));
        }
        Ok(self.inner.primal_value(p.view()))
    }

    fn __repr__(&self) -> String {
        format!(
            "EntropicOT(dim={}, mu_reg={})",
            self.inner.dim(),
            self.inner.mu_reg()
        )
    }
}

/// Run the deterministic accelerated dual method on the quadratic consensus
/// benchmark (`f_i(x) = μ/2·‖x − b_i‖²` with centers `b_ij = 3i + j`).
///
/// Returns a dict with the ergodic primal blocks `x`, the known consensus
/// minimizer `x_star`, the final duality-gap surrogate and consensus
/// residual, and iteration/communication counts.
#[pyfunction]
#[pyo3(signature = (topology, m, n = 1, mu = 1.0, iters = None, eps = 0.05, c_n = 1.0, p = 0.5, graph_seed = 0))]
#[allow(clippy::too_many_arguments)]
fn solve_quadratic_det(
    py: Python<'_>,
    topology: &str,
    m: usize,
    n: usize,
    mu: f64,
    iters: Option<usize>,
    eps: f64,
    c_n: f64,
    p: f64,
    graph_seed: u64,
) -> PyResult<Py<PyDict>> {
    let graph = build_graph(&parse_topology(topology, p, graph_seed)?, m).map_err(to_py_err)?;
    let inst = quadratic_consensus(&graph, n, mu);
    let oracles = inst.exact_oracles();
    let l_psi = graph.lambda_max() / mu;
    let n_iters =
        iters.unwrap_or_else(|| predict_iterations_det(inst.m_f_sq, mu, graph.chi(), eps, c_n));
    let out = solve_deterministic(&graph, &oracles, l_psi, n_iters).map_err(to_py_err)?;
    let last = out.trace.last().expect("at least one iteration");
    let f = primal_objective(&oracles, &out.x).map_err(to_py_err)?;

    let d = PyDict::new(py);
    d.set_item("x", as_rows(&out.x))?;
    d.set_item("x_star", inst.x_star.to_vec())?;
    d.set_item("f_minus_fstar", f - inst.f_star)?;
    d.set_item("dual_gap", last.gap)?;
    d.set_item("consensus_residual", last.consensus_residual)?;
    d.set_item("iterations", n_iters)?;
    d.set_item("comm_rounds", out.comm_rounds)?;
    Ok(d.unbind())
}

/// Run the mini-batched stochastic dual method on the quadratic consensus
/// benchmark with Gaussian primal samplers of variance `sigma_x_sq`.
///
/// Returns a dict that adds `oracle_calls` and a boolean `success`
/// (`F − F* ≤ eps` and `‖√W x‖ ≤ eps/R_y`) to the deterministic fields.
#[pyfunction]
#[pyo3(signature = (topology, m, n = 1, mu = 1.0, eps = 0.05, delta = 0.05, seed = 0,
                    sigma_x_sq = 1.0, iters = None, c_n = 1.0, c_r = 1.0,
                    batch_cap = 10_000_000, p = 0.5, graph_seed = 0))]
#[allow(clippy::too_many_arguments)]
fn solve_quadratic_stoch(
    py: Python<'_>,
    topology: &str,
    m: usize,
    n: usize,
    mu: f64,
    eps: f64,
    delta: f64,
    seed: u64,
    sigma_x_sq: f64,
    iters: Option<usize>,
    c_n: f64,
    c_r: f64,
    batch_cap: u64,
    p: f64,
    graph_seed: u64,
) -> PyResult<Py<PyDict>> {
    let graph = build_graph(&parse_topology(topology, p, graph_seed)?, m).map_err(to_py_err)?;
    let inst = quadratic_consensus(&graph, n, mu);
    let oracles = inst.gaussian_oracles(sigma_x_sq);
    let n_iters =
        iters.unwrap_or_else(|| predict_iterations_stoch(inst.m_f_sq, mu, graph.chi(), eps, c_n));
    let params = StochParams {
        l_psi: graph.lambda_max() / mu,
        eps,
        delta,
        seed,
        c_r,
        batch_cap,
        sigma_psi_sq: graph.lambda_max() * sigma_x_sq,
        n_iters,
        log_iterates: false,
    };
    let reference = ReferenceSolution {
        y_star: Some(inst.y_star.clone()),
        f_star: Some(inst.f_star),
    };
    let out = solve_stochastic(&graph, &oracles, &params, &reference).map_err(to_py_err)?;
    let last = out.trace.last().expect("at least one iteration");
    let f = primal_objective(&oracles, &out.x).map_err(to_py_err)?;
    let gap = f - inst.f_star;
    let success = gap <= eps && last.consensus_residual <= eps / inst.r_y;

    let d = PyDict::new(py);
    d.set_item("x", as_rows(&out.x))?;
    d.set_item("x_star", inst.x_star.to_vec())?;
    d.set_item("f_minus_fstar", gap)?;
    d.set_item("consensus_residual", last.consensus_residual)?;
    d.set_item("success", success)?;
    d.set_item("iterations", n_iters)?;
    d.set_item("oracle_calls", out.oracle_calls)?;
    d.set_item("comm_rounds", out.comm_rounds)?;
    Ok(d.unbind())
}

/// Compute an entropic Wasserstein barycenter of `histograms` (one row per
/// node of the network) under the given cost matrix, by running the
/// stochastic dual solver with one-column transport-gradient samplers.
///
/// Returns a dict with the per-node marginals, their row mean `barycenter`,
/// the primal objective `Σ_i W_μ(x_i, q_i)`, and diagnostics.
#[pyfunction]
#[pyo3(signature = (histograms, cost, mu_reg = 0.1, topology = "path", eps = 0.05, delta = 0.05,
                    seed = 0, sigma_x_sq = 4.0, iters = None, c_n = 1.0, c_r = 1.0,
                    batch_cap = 10_000_000, p = 0.5, graph_seed = 0))]
#[allow(clippy::too_many_arguments)]
fn solve_barycenter(
    py: Python<'_>,
    histograms: Vec<Vec<f64>>,
    cost: Vec<Vec<f64>>,
    mu_reg: f64,
    topology: &str,
    eps: f64,
    delta: f64,
    seed: u64,
    sigma_x_sq: f64,
    iters: Option<usize>,
    c_n: f64,
    c_r: f64,
    batch_cap: u64,
    p: f64,
    graph_seed: u64,
) -> PyResult<Py<PyDict>> {
    let h = matrix(histograms, "histograms")?;
    let c = matrix(cost, "cost")?;
    let graph =
        build_graph(&parse_topology(topology, p, graph_seed)?, h.nrows()).map_err(to_py_err)?;
    let problem = build_barycenter_problem(&h, &c, mu_reg, &graph).map_err(to_py_err)?;
    let n_iters = iters
        .unwrap_or_else(|| predict_iterations_stoch(problem.m_f_sq, mu_reg, graph.chi(), eps, c_n));
    let params = StochParams {
        l_psi: problem.l_psi,
        eps,
        delta,
        seed,
        c_r,
        batch_cap,
        sigma_psi_sq: graph.lambda_max() * sigma_x_sq,
        n_iters,
        log_iterates: false,
    };
    let out = solve_stochastic(
        &graph,
        &problem.oracles,
        &params,
        &ReferenceSolution::default(),
    )
    .map_err(to_py_err)?;
    let last = out.trace.last().expect("at least one iteration");
    let objective = primal_objective(&problem.oracles, &out.x).map_err(to_py_err)?;
    let mean = out.x.mean_axis(Axis(0)).expect("at least one node");

    let d = PyDict::new(py);
    d.set_item("marginals", as_rows(&out.x))?;
    d.set_item("barycenter", mean.to_vec())?;
    d.set_item("objective", objective)?;
    d.set_item("consensus_residual", last.consensus_residual)?;
    d.set_item("iterations", n_iters)?;
    d.set_item("oracle_calls", out.oracle_calls)?;
    d.set_item("comm_rounds", out.comm_rounds)?;
    Ok(d.unbind())
}

#[pymodule]
fn duonet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyEntropicOT>()?;
    m.add_function(wrap_pyfunction!(solve_quadratic_det, m)?)?;
    m.add_function(wrap_pyfunction!(solve_quadratic_stoch, m)?)?;
    m.add_function(wrap_pyfunction!(solve_barycenter, m)?)?;
    Ok(())
}
