//! Stochastic accelerated dual method with adaptive batch sizes.
//!
//! Same acceleration template as the deterministic solver, but the step
//! sizes come from the implicit recurrence `A_{k+1} = A_k + α_{k+1} =
//! 2L_ψ α_{k+1}²` (so `α_{k+1}` is the positive root of
//! `2L_ψα² − α − A_k = 0`), and the dual gradient is the mini-batch average
//! `∇Ψ(λ, ξ) = √W · (1/r) Σ x(√W λ, ξ_t)` with the batch size
//!
//! ```text
//! r_{k+1} = ⌈c_r · max{1, σ_ψ²·α_{k+1}·ln(N/δ)/ε}⌉
//! ```
//!
//! chosen so the accumulated gradient noise stays below the target accuracy
//! with probability `1 − 4δ`. Iterates live in the *unbarred* dual
//! variables:
//!
//! ```text
//! λ^{k+1} = (α_{k+1} ζ^k + A_k y^k) / A_{k+1}
//! ζ^{k+1} = ζ^k − α_{k+1} ∇Ψ(λ^{k+1}, ξ)
//! y^{k+1} = (α_{k+1} ζ^{k+1} + A_k y^k) / A_{k+1}
//! ```
//!
//! and the primal output is the ergodic average of the *batch means*,
//! `x^N = (1/A_N) Σ_{k=0}^{N−1} α_{k+1}·x(√W λ^{k+1}, {ξ})`.

use crate::diagnostics::TraceRecord;
use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, SqrtLaplacian};
use crate::oracles::{
    batched_primal, dual_value, primal_blocks, primal_objective, ConjugateOracle,
};
use crate::solver_det::predict_iterations_det;
use crate::BlockVec;

/// Positive root of `2L_ψα² − α − A_k = 0`:
/// `α_{k+1} = (1 + √(1 + 8L_ψA_k)) / (4L_ψ)`.
pub fn next_alpha(a_k: f64, l_psi: f64) -> f64 {
    assert!(a_k >= 0.0 && l_psi > 0.0);
    (1.0 + (1.0 + 8.0 * l_psi * a_k).sqrt()) / (4.0 * l_psi)
}

/// Batch size `⌈c_r · max{1, σ_ψ²·α·ln(N/δ)/ε}⌉` (at least 1).
pub fn batch_size(
    alpha: f64,
    sigma_psi_sq: f64,
    n_planned: usize,
    delta: f64,
    eps: f64,
    c_r: f64,
) -> u64 {
    assert!(alpha > 0.0 && sigma_psi_sq >= 0.0 && eps > 0.0 && c_r > 0.0);
    assert!(delta > 0.0 && n_planned >= 1);
    let target = sigma_psi_sq * alpha * (n_planned as f64 / delta).ln() / eps;
    ((c_r * target.max(1.0)).ceil() as u64).max(1)
}

/// Iteration budget for the stochastic solver — the same
/// `⌈c_N·√(M_F²·χ/(μ·ε))⌉` shape as the deterministic one, with the
/// logarithmic factors of the high-probability bound absorbed into `c_N`.
pub fn predict_iterations_stoch(m_f_sq: f64, mu: f64, chi: f64, eps: f64, c_n: f64) -> usize {
    predict_iterations_det(m_f_sq, mu, chi, eps, c_n)
}

#[derive(Clone, Debug)]
pub struct StochParams {
    pub l_psi: f64,
    pub eps: f64,
    /// Confidence parameter, constrained to (0, 1/4).
    pub delta: f64,
    pub seed: u64,
    pub c_r: f64,
    /// Per-iteration sample cap; exceeding it aborts with `BatchOverflow`.
    pub batch_cap: u64,
    /// Dual gradient variance `σ_ψ² = λ_max(W)·σ_x²`.
    pub sigma_psi_sq: f64,
    pub n_iters: usize,
    /// Record `(λ, ζ, y)` after every iteration (tests/debugging).
    pub log_iterates: bool,
}

/// Known optima for diagnostics; both optional.
#[derive(Clone, Debug, Default)]
pub struct ReferenceSolution {
    /// Dual solution `y*` (unbarred); enables the trace `radius` column.
    pub y_star: Option<BlockVec>,
    /// Optimal value `F*`; switches the trace gap to `F(x^k) − F*`.
    pub f_star: Option<f64>,
}

/// Post-iteration snapshot of the dual iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateSnapshot {
    pub lambda: BlockVec,
    pub zeta: BlockVec,
    pub y: BlockVec,
}

#[derive(Clone, Debug)]
pub struct StochOutput {
    /// Ergodic primal average `x^N`.
    pub x: BlockVec,
    /// Final dual iterate `y^N` (unbarred).
    pub y: BlockVec,
    pub trace: Vec<TraceRecord>,
    /// Total per-node oracle calls `Σ r_k`.
    pub oracle_calls: u64,
    pub comm_rounds: u64,
    pub iterates: Option<Vec<IterateSnapshot>>,
}

enum GradMode {
    Exact,
    Batched,
}

/// Runs the batched stochastic solver. Oracles must support sampling.
pub fn solve_stochastic(
    graph: &NetworkGraph,
    oracles: &[Box<dyn ConjugateOracle>],
    params: &StochParams,
    reference: &ReferenceSolution,
) -> Result<StochOutput> {
    run(graph, oracles, params, reference, GradMode::Batched)
}

/// Same recursion driven by exact gradients (`r_k ≡ 1`, no sampling) — the
/// noiseless baseline the zero-variance stochastic run must reproduce bit
/// for bit.
pub fn solve_stochastic_exact(
    graph: &NetworkGraph,
    oracles: &[Box<dyn ConjugateOracle>],
    params: &StochParams,
    reference: &ReferenceSolution,
) -> Result<StochOutput> {
    run(graph, oracles, params, reference, GradMode::Exact)
}

fn run(
    graph: &NetworkGraph,
    oracles: &[Box<dyn ConjugateOracle>],
    params: &StochParams,
    reference: &ReferenceSolution,
    mode: GradMode,
) -> Result<StochOutput> {
    validate(graph, oracles, params)?;
    let m = graph.m();
    let n = oracles[0].dim();
    let n_iters = params.n_iters;
    let sqrt_w = SqrtLaplacian::from_graph(graph);

    if matches!(mode, GradMode::Batched) && (n_iters as f64 / params.delta).ln() < 3.0 {
        eprintln!(
            "warning: ln(N/delta) = {:.3} < 3; the high-probability batch rule is outside its stated regime",
            (n_iters as f64 / params.delta).ln()
        );
    }

    let mut zeta = BlockVec::zeros((m, n));
    let mut y = BlockVec::zeros((m, n));
    let mut x_acc = BlockVec::zeros((m, n));
    let mut a_k = 0.0;
    let mut calls = 0u64;
    let mut trace = Vec::with_capacity(n_iters);
    let mut iterates = params.log_iterates.then(Vec::new);

    for k in 0..n_iters {
        let alpha = next_alpha(a_k, params.l_psi);
        let a_next = a_k + alpha;
        let r = match mode {
            GradMode::Exact => 1,
            GradMode::Batched => batch_size(
                alpha,
                params.sigma_psi_sq,
                n_iters,
                params.delta,
                params.eps,
                params.c_r,
            ),
        };
        if r > params.batch_cap {
            return Err(Error::BatchOverflow {
                requested: r,
                cap: params.batch_cap,
                iteration: k + 1,
            });
        }

        let lambda = combine(alpha, &zeta, a_k, &y, a_next);
        let x_hat = match mode {
            GradMode::Exact => primal_blocks(oracles, &sqrt_w.apply(&lambda)?)?,
            GradMode::Batched => {
                batched_primal(oracles, &sqrt_w, &lambda, r, params.seed, k as u64)?
            }
        };
        let grad = sqrt_w.apply(&x_hat)?;
        zeta.zip_mut_with(&grad, |z, &g| *z -= alpha * g);
        y = combine(alpha, &zeta, a_k, &y, a_next);
        a_k = a_next;
        calls += r;
        x_acc.zip_mut_with(&x_hat, |acc, &v| *acc += alpha * v);

        if !y.iter().all(|v| v.is_finite()) || !zeta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteIterate {
                what: "dual iterate",
                iteration: k + 1,
            });
        }

        let x_erg = x_acc.mapv(|v| v / a_k);
        let f = primal_objective(oracles, &x_erg)?;
        let gap = match reference.f_star {
            Some(f_star) => f - f_star,
            None => f + dual_value(oracles, &sqrt_w, &y)?,
        };
        let residual = frob(&sqrt_w.apply(&x_erg)?);
        let radius = reference
            .y_star
            .as_ref()
            .map(|y_star| frob(&(&zeta - y_star)));
        trace.push(TraceRecord {
            k: k + 1,
            gap,
            consensus_residual: residual,
            radius,
            r_k: r,
            cum_oracle_calls: calls,
            cum_comm_rounds: (k + 1) as u64,
            alpha_k: alpha,
            a_k,
        });
        if let Some(log) = iterates.as_mut() {
            log.push(IterateSnapshot {
                lambda,
                zeta: zeta.clone(),
                y: y.clone(),
            });
        }
    }

    Ok(StochOutput {
        x: x_acc.mapv(|v| v / a_k),
        y,
        trace,
        oracle_calls: calls,
        comm_rounds: n_iters as u64,
        iterates,
    })
}

fn validate(
    graph: &NetworkGraph,
    oracles: &[Box<dyn ConjugateOracle>],
    params: &StochParams,
) -> Result<()> {
    if params.l_psi <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "l_psi must be positive, got {}",
            params.l_psi
        )));
    }
    if params.eps <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "eps must be positive, got {}",
            params.eps
        )));
    }
    if !(0.0..0.25).contains(&params.delta) || params.delta == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "delta must lie in (0, 0.25), got {}",
            params.delta
        )));
    }
    if params.c_r <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "c_r must be positive, got {}",
            params.c_r
        )));
    }
    if params.sigma_psi_sq < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "sigma_psi_sq must be nonnegative, got {}",
            params.sigma_psi_sq
        )));
    }
    if params.batch_cap == 0 {
        return Err(Error::InvalidConfig("batch_cap must be positive".into()));
    }
    if params.n_iters == 0 {
        return Err(Error::InvalidConfig("need at least one iteration".into()));
    }
    if oracles.len() != graph.m() {
        return Err(Error::DimensionMismatch {
            context: "solve_stochastic",
            expected: format!("{} oracles", graph.m()),
            got: format!("{}", oracles.len()),
        });
    }
    let n = oracles[0].dim();
    if oracles.iter().any(|o| o.dim() != n) {
        return Err(Error::DimensionMismatch {
            context: "solve_stochastic",
            expected: format!("uniform block dimension {n}"),
            got: "mixed oracle dimensions".into(),
        });
    }
    Ok(())
}

fn combine(alpha: f64, u: &BlockVec, a_k: f64, v: &BlockVec, a_next: f64) -> BlockVec {
    let mut out = u.mapv(|val| alpha * val);
    out.zip_mut_with(v, |o, &val| *o = (*o + a_k * val) / a_next);
    out
}

fn frob(x: &BlockVec) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, Topology};
    use crate::instances::quadratic_consensus;

    #[test]
    fn alpha_base_cases() {
        assert_eq!(next_alpha(0.0, 2.0), 0.25);
        assert_eq!(next_alpha(0.0, 0.5), 1.0);
    }

    #[test]
    fn alpha_solves_its_quadratic_and_obeys_the_linear_bound() {
        for l_psi in [0.1, 1.0, 10.0] {
            let mut a = 0.0;
            for k in 0..10_000usize {
                let alpha = next_alpha(a, l_psi);
                let residual = 2.0 * l_psi * alpha * alpha - alpha - a;
                let scale = (2.0 * l_psi * alpha * alpha).abs().max(1.0);
                assert!(
                    residual.abs() <= 1e-12 * scale,
                    "L={l_psi}, k={k}: residual {residual}"
                );
                assert!(
                    alpha <= (k as f64 + 2.0) / (2.0 * l_psi) * (1.0 + 1e-12),
                    "L={l_psi}, k={k}: alpha {alpha} above the linear bound"
                );
                a += alpha;
            }
        }
    }

    #[test]
    fn a_n_grows_quadratically() {
        for l_psi in [0.1, 1.0, 10.0] {
            let mut a = 0.0;
            for k in 1..=500usize {
                a += next_alpha(a, l_psi);
                assert!(
                    a >= (k * k) as f64 / (8.0 * l_psi),
                    "L={l_psi}: A_{k} = {a} below N²/(8L)"
                );
            }
        }
    }

    #[test]
    fn alpha_growth_example() {
        // L_ψ = 0.5: α₁ = 1, α₂ = (1+√5)/2, A₂ = 1 + golden ratio.
        let l = 0.5;
        let a1 = next_alpha(0.0, l);
        assert_eq!(a1, 1.0);
        let a2 = next_alpha(a1, l);
        assert!((a2 - (1.0 + 5.0f64.sqrt()) / 2.0).abs() <= 1e-15);
    }

    #[test]
    fn batch_size_examples() {
        // Noiseless oracles need exactly one sample.
        assert_eq!(batch_size(123.0, 0.0, 100, 0.05, 1e-3, 1.0), 1);
        // A product of 7.2 rounds up to 8 (and 2 × 7.2 to 15).
        let eps = 0.5;
        let n = 20;
        let delta = 0.05;
        let sigma_psi_sq = 2.0;
        let alpha = 7.2 * eps / (sigma_psi_sq * (n as f64 / delta).ln());
        assert_eq!(batch_size(alpha, sigma_psi_sq, n, delta, eps, 1.0), 8);
        assert_eq!(batch_size(alpha, sigma_psi_sq, n, delta, eps, 2.0), 15);
    }

    #[test]
    fn predict_matches_the_deterministic_formula() {
        assert_eq!(
            predict_iterations_stoch(36.0, 1.0, 3.0, 0.05, 3.5),
            predict_iterations_det(36.0, 1.0, 3.0, 0.05, 3.5)
        );
        assert_eq!(predict_iterations_stoch(36.0, 1.0, 3.0, 0.05, 3.5), 163);
        // Quadrupling χ doubles the budget.
        assert_eq!(
            predict_iterations_stoch(10.0, 1.0, 40.0, 1.0, 1.0),
            2 * predict_iterations_stoch(10.0, 1.0, 10.0, 1.0, 1.0)
        );
    }

    fn fixture_params(seed: u64, sigma_psi_sq: f64, n_iters: usize) -> StochParams {
        StochParams {
            l_psi: 3.0,
            eps: 0.05,
            delta: 0.05,
            seed,
            c_r: 1.0,
            batch_cap: 10_000_000,
            sigma_psi_sq,
            n_iters,
            log_iterates: false,
        }
    }

    #[test]
    fn zero_noise_run_is_bitwise_deterministic() {
        let g = build_graph(&Topology::Path, 3).unwrap();
        let inst = quadratic_consensus(&g, 2, 1.0);
        let mut params = fixture_params(7, 0.0, 50);
        params.log_iterates = true;

        let noisy = solve_stochastic(
            &g,
            &inst.gaussian_oracles(0.0),
            &params,
            &Default::default(),
        )
        .unwrap();
        let exact = solve_stochastic_exact(&g, &inst.exact_oracles(), &params, &Default::default())
            .unwrap();

        let a = noisy.iterates.as_ref().unwrap();
        let b = exact.iterates.as_ref().unwrap();
        assert_eq!(a.len(), 50);
        for (snap_a, snap_b) in a.iter().zip(b.iter()) {
            assert_eq!(snap_a, snap_b);
        }
        assert_eq!(noisy.x, exact.x);
        assert_eq!(noisy.y, exact.y);
        assert!(noisy.trace.iter().all(|r| r.r_k == 1));
    }

    #[test]
    fn trace_invariants_on_a_noisy_run() {
        let g = build_graph(&Topology::Path, 3).unwrap();
        let inst = quadratic_consensus(&g, 2, 1.0);
        let params = fixture_params(3, 3.0, 80);
        let reference = ReferenceSolution {
            y_star: Some(inst.y_star.clone()),
            f_star: Some(inst.f_star),
        };
        let out = solve_stochastic(&g, &inst.gaussian_oracles(1.0), &params, &reference).unwrap();

        let mut a_prev = 0.0;
        let mut calls = 0;
        for r in &out.trace {
            let alpha = next_alpha(a_prev, params.l_psi);
            assert!((r.alpha_k - alpha).abs() <= 1e-12 * alpha);
            let a_k = a_prev + alpha;
            assert!(
                (r.a_k - a_k).abs() <= 1e-9 * a_k,
                "A_k drifted at k={}",
                r.k
            );
            // Convex-combination coefficient of the y/λ updates.
            let coeff = alpha / a_k;
            assert!(coeff > 0.0 && coeff <= 1.0);
            calls += r.r_k;
            assert_eq!(r.cum_oracle_calls, calls);
            assert_eq!(r.cum_comm_rounds, r.k as u64);
            assert!(r.radius.is_some());
            a_prev = a_k;
        }
        assert_eq!(out.oracle_calls, calls);
        assert_eq!(out.comm_rounds, 80);
        // Batches grow with α and stay nontrivial on a noisy instance.
        assert!(out.trace.last().unwrap().r_k > out.trace[0].r_k);
    }

    #[test]
    fn bounded_iterates_on_seeded_fixture_runs() {
        // Empirical radius bound: max_k ‖ζ^k − y*‖ ≤ 10·‖ζ⁰ − y*‖ on the
        // calibrated fixture (a smoke-sized sweep; the full 50-seed version
        // runs with the acceptance suite).
        let g = build_graph(&Topology::Path, 3).unwrap();
        let inst = quadratic_consensus(&g, 2, 1.0);
        let reference = ReferenceSolution {
            y_star: Some(inst.y_star.clone()),
            f_star: Some(inst.f_star),
        };
        for seed in 0..5 {
            let params = fixture_params(seed, 3.0, 163);
            let out =
                solve_stochastic(&g, &inst.gaussian_oracles(1.0), &params, &reference).unwrap();
            let r0 = inst.r_y; // ζ⁰ = 0, so ‖ζ⁰ − y*‖ = ‖y*‖
            let max_radius = out
                .trace
                .iter()
                .filter_map(|r| r.radius)
                .fold(0.0f64, f64::max);
            assert!(
                max_radius <= 10.0 * r0,
                "seed {seed}: J_emp = {}",
                max_radius / r0
            );
        }
    }

    #[test]
    fn batch_cap_aborts_cleanly() {
        let g = build_graph(&Topology::Path, 3).unwrap();
        let inst = quadratic_consensus(&g, 2, 1.0);
        let mut params = fixture_params(0, 3.0, 163);
        params.batch_cap = 10;
        let err = solve_stochastic(
            &g,
            &inst.gaussian_oracles(1.0),
            &params,
            &Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::BatchOverflow { cap: 10, .. }));
    }

    #[test]
    fn invalid_delta_is_rejected() {
        let g = build_graph(&Topology::Path, 3).unwrap();
        let inst = quadratic_consensus(&g, 2, 1.0);
        for delta in [0.0, 0.25, 0.3] {
            let mut params = fixture_params(0, 3.0, 10);
            params.delta = delta;
            assert!(matches!(
                solve_stochastic(
                    &g,
                    &inst.gaussian_oracles(1.0),
                    &params,
                    &Default::default()
                ),
                Err(Error::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn gap_column_tracks_primal_suboptimality_when_f_star_is_known() {
        let g = build_graph(&Topology::Path, 3).unwrap();
        let inst = quadratic_consensus(&g, 2, 1.0);
        let params = fixture_params(1, 3.0, 163);
        let reference = ReferenceSolution {
            y_star: None,
            f_star: Some(inst.f_star),
        };
        let out = solve_stochastic(&g, &inst.gaussian_oracles(1.0), &params, &reference).unwrap();
        let f = primal_objective(&inst.gaussian_oracles(1.0), &out.x).unwrap();
        let traced = out.trace.last().unwrap().gap;
        assert!((traced - (f - inst.f_star)).abs() <= 1e-12 * (1.0 + traced.abs()));
        assert!(out.trace.last().unwrap().radius.is_none());
    }
}
