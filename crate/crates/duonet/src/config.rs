//! Experiment configuration: a flat key–value bag shared by the CLI flags
//! and the `--config` file format, with the solver-side validity rules in
//! one place.

use std::path::Path;

use crate::error::{Error, Result};

/// Solver and experiment knobs. Fields that are `Option` can be derived
/// from the problem instance when absent (e.g. `L_ψ = λ_max(W)/μ`).
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Target accuracy ε > 0 for the duality gap.
    pub eps: f64,
    /// Confidence parameter δ ∈ (0, 0.25) of the high-probability bound.
    pub delta: f64,
    /// Base seed; trial `i` runs with `seed + i`.
    pub seed: u64,
    /// Multiplier on the predicted iteration budget.
    pub c_n: f64,
    /// Multiplier on the per-iteration batch size.
    pub c_r: f64,
    /// Dual smoothness override; derived as `λ_max(W)/μ` when absent.
    pub l_psi: Option<f64>,
    /// Primal strong-convexity modulus.
    pub mu: f64,
    /// Objective flatness constant override (`M_F²`).
    pub m_f_sq: Option<f64>,
    /// Primal oracle variance; defaults per application when absent
    /// (1 for the quadratic fixture, the simplex bound 4 for barycenters).
    pub sigma_x_sq: Option<f64>,
    /// Explicit iteration count, bypassing the predicted budget.
    pub n_override: Option<usize>,
    /// Abort threshold for a single iteration's batch size.
    pub batch_cap: u64,
    /// Number of seeded repetitions.
    pub trials: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps: 0.05,
            delta: 0.05,
            seed: 0,
            c_n: 1.0,
            c_r: 1.0,
            l_psi: None,
            mu: 1.0,
            m_f_sq: None,
            sigma_x_sq: None,
            n_override: None,
            batch_cap: 10_000_000,
            trials: 1,
        }
    }
}

/// `--flag-name`, `flag-name`, and `FLAG_NAME` all address the same key.
pub fn normalize_key(key: &str) -> String {
    key.trim()
        .trim_start_matches("--")
        .to_ascii_lowercase()
        .replace('-', "_")
}

impl SolverConfig {
    /// Applies one key–value pair. Returns `Ok(false)` when the key is not
    /// a config field (the CLI layer owns extra keys like `topology`).
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<bool> {
        let key = normalize_key(key);
        match key.as_str() {
            "eps" => self.eps = parse_f64(&key, value)?,
            "delta" => self.delta = parse_f64(&key, value)?,
            "seed" => self.seed = parse_u64(&key, value)?,
            "c_n" => self.c_n = parse_f64(&key, value)?,
            "c_r" => self.c_r = parse_f64(&key, value)?,
            "l_psi" => self.l_psi = Some(parse_f64(&key, value)?),
            "mu" => self.mu = parse_f64(&key, value)?,
            "m_f_sq" => self.m_f_sq = Some(parse_f64(&key, value)?),
            "sigma_x_sq" => self.sigma_x_sq = Some(parse_f64(&key, value)?),
            "n_override" | "iters" => self.n_override = Some(parse_usize(&key, value)?),
            "batch_cap" => self.batch_cap = parse_u64(&key, value)?,
            "trials" => self.trials = parse_usize(&key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Loads a flat `key = value` (or `key value`) file; `#` starts a
    /// comment. Unknown keys are errors — config files should not rot
    /// silently.
    pub fn from_file(path: &Path) -> Result<SolverConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut config = SolverConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k, v),
                None => line.split_once(char::is_whitespace).ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "{}:{}: expected 'key = value', got '{line}'",
                        path.display(),
                        lineno + 1
                    ))
                })?,
            };
            let (key, value) = (key.trim(), value.trim());
            if !config.apply_kv(key, value)? {
                return Err(Error::InvalidConfig(format!(
                    "{}:{}: unknown config key '{key}'",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps <= 0.0 || !self.eps.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 0.25), got {}",
                self.delta
            )));
        }
        if self.c_n <= 0.0 || self.c_r <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "c_n and c_r must be positive, got c_n = {}, c_r = {}",
                self.c_n, self.c_r
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if let Some(l) = self.l_psi {
            if l <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "l_psi must be positive, got {l}"
                )));
            }
        }
        if let Some(v) = self.m_f_sq {
            if v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "m_f_sq must be positive, got {v}"
                )));
            }
        }
        if let Some(v) = self.sigma_x_sq {
            if v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "sigma_x_sq must be nonnegative, got {v}"
                )));
            }
        }
        if let Some(n) = self.n_override {
            if n == 0 {
                return Err(Error::InvalidConfig("iters must be at least 1".into()));
            }
        }
        if self.batch_cap == 0 {
            return Err(Error::InvalidConfig("batch_cap must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        Ok(())
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: '{value}' is not a number")))
}

fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: '{value}' is not a nonnegative integer")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: '{value}' is not a nonnegative integer")))
}
