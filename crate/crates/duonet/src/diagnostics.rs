//! Measurement side of the solvers: duality gaps, trace serialization, and
//! checkers for the supporting inequalities.
//!
//! A word on gap signs. `duality_gap` returns `F(x) + ψ(y)`, which weak
//! duality bounds below by zero only when `x` is *feasible* (a consensus
//! stack). Solver traces evaluate it along ergodic iterates that are not yet
//! feasible, where `F(x) + ψ(y) ≥ −R_y·‖√W x‖` is the honest lower bound —
//! trace gaps on well-conditioned instances are routinely small and
//! *negative* while the residual decays. Rate diagnostics therefore work
//! with `|gap|`.

use crate::error::{Error, Result};
use crate::graph::{NetworkGraph, SqrtLaplacian};
use crate::oracles::{dual_value, primal_objective, ConjugateOracle};
use crate::BlockVec;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// One per-iteration diagnostics row; the NDJSON trace schema.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// `F(x^k) + ψ̄(ȳ^k)` (deterministic runs), `F(x^k) − F*` when `F*` is
    /// known, else `F(x^k) + ψ(y^k)` (stochastic runs). Signed; see module
    /// docs.
    pub gap: f64,
    /// `‖√W x^k‖₂` of the running ergodic primal.
    pub consensus_residual: f64,
    /// `‖ζ^k − y*‖₂` when the dual solution is known; absent otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Batch size used this iteration (1 for deterministic runs).
    pub r_k: u64,
    /// Cumulative per-node oracle calls `Σ r_k`.
    pub cum_oracle_calls: u64,
    pub cum_comm_rounds: u64,
    pub alpha_k: f64,
    #[serde(rename = "A_k")]
    pub a_k: f64,
}

/// Writes a trace as NDJSON: one record per line, schema above.
pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for record in trace {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut trace = Vec::new();
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        trace.push(serde_json::from_str(&line)?);
    }
    Ok(trace)
}

/// `F(x) + ψ(y)`: upper-bounds `F(x) − F(x*)` for feasible `x`, and is
/// nonnegative there by weak duality.
pub fn duality_gap(
    oracles: &[Box<dyn ConjugateOracle>],
    graph: &NetworkGraph,
    x: &BlockVec,
    y: &BlockVec,
) -> Result<f64> {
    let sqrt_w = SqrtLaplacian::from_graph(graph);
    Ok(primal_objective(oracles, x)? + dual_value(oracles, &sqrt_w, y)?)
}

/// Result of [`check_recurrence_lemma`].
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RecurrenceReport {
    /// Premise `½r_l² ≤ A·r₀² + B·(r₀/N)·√(Σ_{k<l}(k+2)r_k²)` for l = 1..N.
    pub holds_premise: bool,
    /// `C = max{1, B + √(B² + 2A)}`.
    pub bound_c: f64,
    /// Conclusion `r_l ≤ C·r₀` for every l.
    pub holds_conclusion: bool,
}

/// Checks the bounded-growth recurrence: sequences satisfying the premise
/// stay within `C·r₀` for `C = max{1, B + √(B² + 2A)}`.
///
/// `r` holds `r_0..r_N` (so `N = r.len() − 1`); `r₀` must be positive.
pub fn check_recurrence_lemma(a: f64, b: f64, r: &[f64]) -> RecurrenceReport {
    assert!(!r.is_empty() && r[0] > 0.0, "need r_0 > 0");
    assert!(a >= 0.0 && b >= 0.0, "A and B must be nonnegative");
    let r0 = r[0];
    let n = r.len() - 1;
    let bound_c = 1.0f64.max(b + (b * b + 2.0 * a).sqrt());
    let mut holds_premise = true;
    if n > 0 {
        let mut weighted_sum = 0.0; // Σ_{k<l} (k+2) r_k²
        for l in 1..=n {
            weighted_sum += (l + 1) as f64 * r[l - 1] * r[l - 1];
            let rhs = a * r0 * r0 + b * (r0 / n as f64) * weighted_sum.sqrt();
            if 0.5 * r[l] * r[l] > rhs * (1.0 + 1e-12) {
                holds_premise = false;
                break;
            }
        }
    }
    let holds_conclusion = r.iter().all(|&v| v <= bound_c * r0 * (1.0 + 1e-12));
    RecurrenceReport {
        holds_premise,
        bound_c,
        holds_conclusion,
    }
}

/// Result of [`empirical_tail_check`].
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TailReport {
    /// γ grid, `{0.5, 1, 1.5, 2, 2.5, 3}·σ`.
    pub gamma: Vec<f64>,
    /// Empirical exceedance `P̂{‖·‖ ≥ γ}` per grid point.
    pub empirical: Vec<f64>,
    /// `2·exp(−γ²/(2σ²))·1.5` per grid point.
    pub bound: Vec<f64>,
    pub pass: bool,
}

/// Compares the empirical exceedance curve of deviation norms against the
/// sub-Gaussian tail `2·exp(−γ²/(2σ²))` with 1.5× slack — a testable
/// surrogate for the exponential-moment light-tail assumption.
///
/// Needs at least 10³ samples for the curve to mean anything.
pub fn empirical_tail_check(samples: &[f64], sigma_sq: f64) -> Result<TailReport> {
    const MIN_SAMPLES: usize = 1000;
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            min: MIN_SAMPLES,
        });
    }
    if sigma_sq <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tail check needs sigma_sq > 0, got {sigma_sq}"
        )));
    }
    let sigma = sigma_sq.sqrt();
    let total = samples.len() as f64;
    let mut gamma = Vec::new();
    let mut empirical = Vec::new();
    let mut bound = Vec::new();
    let mut pass = true;
    for mult in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0] {
        let g = mult * sigma;
        let exceed = samples.iter().filter(|&&s| s >= g).count() as f64 / total;
        let cap = 2.0 * (-g * g / (2.0 * sigma_sq)).exp() * 1.5;
        if exceed > cap {
            pass = false;
        }
        gamma.push(g);
        empirical.push(exceed);
        bound.push(cap);
    }
    Ok(TailReport {
        gamma,
        empirical,
        bound,
        pass,
    })
}
