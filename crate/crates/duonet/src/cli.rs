//! Command-line front end: flag parsing, experiment orchestration (seed
//! sweeps run in parallel), and artifact writing.
//!
//! Exit codes: 0 success, 2 validation/input error, 3 solver failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::Serialize;

use crate::barycenter::{
    build_barycenter_problem, read_cost_csv, read_histograms_csv, write_histograms_csv,
};
use crate::config::{normalize_key, SolverConfig};
use crate::diagnostics::{check_recurrence_lemma, empirical_tail_check, write_trace, TraceRecord};
use crate::error::{Error, Result};
use crate::graph::{build_graph, read_edge_list, NetworkGraph, Topology};
use crate::instances::quadratic_consensus;
use crate::oracles::primal_objective;
use crate::solver_det::{predict_iterations_det, solve_deterministic};
use crate::solver_stoch::{
    next_alpha, predict_iterations_stoch, solve_stochastic, ReferenceSolution, StochParams,
};

const USAGE: &str = "\
duonet — simulator for dual accelerated methods on decentralized networks

USAGE: duonet <subcommand> [--flags]

SUBCOMMANDS:
  graph-info    Spectral report for a topology, as JSON
                  --topology path|cycle|star|complete|erdos-renyi|edge-list
                  --m <nodes> [--p <prob>] [--graph-seed <u64>]
                  [--edge-file <file>] [--out <file>]
  solve         Run a solver on the synthetic quadratic consensus instance
                  --algo det|stoch --topology <...> --m <nodes> [--n <dim>]
                  [--oracle quadratic-exact|quadratic-gaussian]
                  [--eps <e>] [--delta <d>] [--seed <s>] [--c-n <c>] [--c-r <c>]
                  [--l-psi <L>] [--mu <m>] [--m-f-sq <M>] [--sigma-x-sq <v>]
                  [--iters <N>] [--batch-cap <r>] [--trials <t>] [--serial]
                  [--config <file>] [--out <trace.ndjson>]
  barycenter    Entropic Wasserstein barycenter of per-node histograms
                  --histograms <h.csv> --cost <c.csv> --topology <...>
                  [--mu-reg <mu>] [--sigma-x-sq <v>] [--paper-constants]
                  [--eps --delta --seed --c-n --c-r --iters --batch-cap]
                  [--config <file>] [--out <trace.ndjson>]
  check-lemmas  Verify the step-size recurrence, the bounded-radius lemma,
                and the light-tail bound; exits nonzero on failure

Artifacts land next to --out, or in $DUONET_OUT_DIR (default ./out):
trace.ndjson, summary.json, trials.csv (--trials > 1), barycenter.csv.
Flags override --config file entries; file keys mirror flag names.";

/// Entry point for the binary. Returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let Some(cmd) = args.first() else {
        eprintln!("{USAGE}");
        return 2;
    };
    let rest = &args[1..];
    let outcome = match cmd.as_str() {
        "graph-info" => cmd_graph_info(rest),
        "solve" => cmd_solve(rest),
        "barycenter" => cmd_barycenter(rest),
        "check-lemmas" => cmd_check_lemmas(rest),
        "help" | "-h" | "--help" => {
            println!("{USAGE}");
            return 0;
        }
        other => {
            eprintln!("unknown subcommand '{other}'\n\n{USAGE}");
            return 2;
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFiniteIterate { .. }
        | Error::BatchOverflow { .. }
        | Error::NoStochasticSupport { .. } => 3,
        _ => 2,
    }
}

// ---------------------------------------------------------------------------
// Flag handling

struct Flags {
    values: BTreeMap<String, String>,
}

fn parse_flags(args: &[String], boolean: &[&str], allowed: &[&str]) -> Result<Flags> {
    let mut values = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let tok = &args[i];
        if !tok.starts_with("--") {
            return Err(Error::InvalidConfig(format!(
                "unexpected argument '{tok}' (flags start with --)"
            )));
        }
        let key = normalize_key(tok);
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown flag --{}",
                dashed(&key)
            )));
        }
        if boolean.contains(&key.as_str()) {
            values.insert(key, "true".to_string());
            i += 1;
            continue;
        }
        let value = args
            .get(i + 1)
            .ok_or_else(|| Error::InvalidConfig(format!("missing value for --{}", dashed(&key))))?;
        values.insert(key, value.clone());
        i += 2;
    }
    Ok(Flags { values })
}

fn dashed(key: &str) -> String {
    key.replace('_', "-")
}

impl Flags {
    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidConfig(format!("missing required flag --{}", dashed(key))))
    }

    fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::InvalidConfig(format!("--{}: '{v}' is not a number", dashed(key)))
                })
            })
            .transpose()
    }

    fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>().map_err(|_| {
                    Error::InvalidConfig(format!(
                        "--{}: '{v}' is not a nonnegative integer",
                        dashed(key)
                    ))
                })
            })
            .transpose()
    }

    fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.get_u64(key)?.map(|v| v as usize))
    }
}

/// Keys forwarded verbatim into [`SolverConfig`].
const CONFIG_KEYS: &[&str] = &[
    "eps",
    "delta",
    "seed",
    "c_n",
    "c_r",
    "l_psi",
    "mu",
    "m_f_sq",
    "sigma_x_sq",
    "iters",
    "n_override",
    "batch_cap",
    "trials",
];

fn load_config(flags: &Flags) -> Result<SolverConfig> {
    let mut config = match flags.get("config") {
        Some(path) => SolverConfig::from_file(Path::new(path))?,
        None => SolverConfig::default(),
    };
    for key in CONFIG_KEYS {
        if let Some(value) = flags.get(key) {
            config.apply_kv(key, value)?;
        }
    }
    config.validate()?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// Graph assembly shared by the subcommands

fn graph_from_flags(flags: &Flags, m_hint: Option<usize>) -> Result<(NetworkGraph, String)> {
    let raw = flags.require("topology")?;
    let name = normalize_key(raw);
    let m_flag = flags.get_usize("m")?;
    match name.as_str() {
        "erdos_renyi" | "er" => {
            let m = m_flag
                .or(m_hint)
                .ok_or_else(|| Error::InvalidConfig("missing required flag --m".into()))?;
            let p = flags
                .get_f64("p")?
                .ok_or_else(|| Error::InvalidConfig("missing required flag --p".into()))?;
            let seed = flags.get_u64("graph_seed")?.unwrap_or(0);
            let graph = build_graph(&Topology::ErdosRenyi { p, seed }, m)?;
            Ok((graph, "erdos_renyi".to_string()))
        }
        "edge_list" | "edgelist" => {
            let file = flags.require("edge_file")?;
            let edges = read_edge_list(Path::new(file))?;
            let inferred = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
            let m = m_flag.or(m_hint).unwrap_or(inferred);
            if m == 0 {
                return Err(Error::InvalidConfig(format!(
                    "edge list '{file}' is empty; pass --m"
                )));
            }
            Ok((
                NetworkGraph::from_edges(m, &edges)?,
                "edge_list".to_string(),
            ))
        }
        _ => {
            let topology: Topology = name.parse()?;
            let m = m_flag
                .or(m_hint)
                .ok_or_else(|| Error::InvalidConfig("missing required flag --m".into()))?;
            let graph = build_graph(&topology, m)?;
            Ok((graph, topology.to_string()))
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact plumbing

struct OutputPaths {
    trace: PathBuf,
    dir: PathBuf,
}

impl OutputPaths {
    fn new(flags: &Flags) -> OutputPaths {
        let trace = match flags.get("out") {
            Some(p) => PathBuf::from(p),
            None => {
                let dir = std::env::var("DUONET_OUT_DIR").unwrap_or_else(|_| "out".to_string());
                PathBuf::from(dir).join("trace.ndjson")
            }
        };
        let dir = match trace.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        OutputPaths { trace, dir }
    }

    fn summary(&self) -> PathBuf {
        self.dir.join("summary.json")
    }

    fn trials(&self) -> PathBuf {
        self.dir.join("trials.csv")
    }
}

#[derive(Serialize)]
struct Summary {
    algo: String,
    topology: String,
    m: usize,
    n: usize,
    eps: f64,
    delta: f64,
    iterations: usize,
    oracle_calls: u64,
    comm_rounds: u64,
    /// Last trace-row gap: `F(x^N) − F*` when `F*` is known (stochastic
    /// quadratic runs), otherwise the surrogate `F(x^N) + ψ(y^N)`.
    final_gap: f64,
    final_consensus_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    success_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
}

fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// graph-info

fn cmd_graph_info(args: &[String]) -> Result<i32> {
    let flags = parse_flags(
        args,
        &[],
        &["topology", "m", "p", "graph_seed", "edge_file", "out"],
    )?;
    let (graph, _) = graph_from_flags(&flags, None)?;
    let mut json = serde_json::to_string_pretty(&graph.info())?;
    json.push('\n');
    match flags.get("out") {
        Some(path) => {
            let path = Path::new(path);
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(path, json)?;
            println!("wrote {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// solve

struct TrialOutcome {
    seed: u64,
    /// Last trace-row gap (see [`Summary::final_gap`]).
    traced_gap: f64,
    /// `F(x^N) − F*`, the quantity the success criterion thresholds.
    primal_gap: f64,
    residual: f64,
    success: bool,
    oracle_calls: u64,
    comm_rounds: u64,
    trace: Option<Vec<TraceRecord>>,
}

fn cmd_solve(args: &[String]) -> Result<i32> {
    let flags = parse_flags(
        args,
        &["serial"],
        &[
            "algo",
            "topology",
            "m",
            "n",
            "p",
            "graph_seed",
            "edge_file",
            "oracle",
            "config",
            "out",
            "serial",
            "eps",
            "delta",
            "seed",
            "c_n",
            "c_r",
            "l_psi",
            "mu",
            "m_f_sq",
            "sigma_x_sq",
            "iters",
            "n_override",
            "batch_cap",
            "trials",
        ],
    )?;
    let config = load_config(&flags)?;
    let algo = flags.require("algo")?;
    if algo != "det" && algo != "stoch" {
        return Err(Error::InvalidConfig(format!(
            "--algo must be 'det' or 'stoch', got '{algo}'"
        )));
    }
    let (graph, topology) = graph_from_flags(&flags, None)?;
    let n = flags.get_usize("n")?.unwrap_or(1);
    if n == 0 {
        return Err(Error::InvalidConfig("--n must be at least 1".into()));
    }
    let oracle_kind = match flags.get("oracle") {
        Some(k) => normalize_key(k),
        None => {
            if algo == "det" {
                "quadratic_exact".to_string()
            } else {
                "quadratic_gaussian".to_string()
            }
        }
    };
    match oracle_kind.as_str() {
        "quadratic_exact" | "quadratic_gaussian" => {}
        other => {
            return Err(Error::InvalidConfig(format!(
                "--oracle must be quadratic-exact or quadratic-gaussian, got '{other}'"
            )))
        }
    }
    if algo == "stoch" && oracle_kind == "quadratic_exact" {
        return Err(Error::InvalidConfig(
            "the exact quadratic oracle has no sampler; use --oracle quadratic-gaussian or --algo det"
                .into(),
        ));
    }

    let instance = quadratic_consensus(&graph, n, config.mu);
    let sigma_x_sq = config.sigma_x_sq.unwrap_or(1.0);
    let l_psi = config.l_psi.unwrap_or(graph.lambda_max() / config.mu);
    let m_f_sq = config.m_f_sq.unwrap_or(instance.m_f_sq);
    let n_iters = config.n_override.unwrap_or_else(|| {
        if algo == "det" {
            predict_iterations_det(m_f_sq, config.mu, graph.chi(), config.eps, config.c_n)
        } else {
            predict_iterations_stoch(m_f_sq, config.mu, graph.chi(), config.eps, config.c_n)
        }
    });

    let run_one = |idx: usize| -> Result<TrialOutcome> {
        let seed = config.seed.wrapping_add(idx as u64);
        let keep_trace = idx == 0;
        let (trace, oracle_calls, comm_rounds, primal_gap, oracles) = if algo == "det" {
            let oracles = if oracle_kind == "quadratic_gaussian" {
                instance.gaussian_oracles(sigma_x_sq)
            } else {
                instance.exact_oracles()
            };
            let out = solve_deterministic(&graph, &oracles, l_psi, n_iters)?;
            let f = primal_objective(&oracles, &out.x)?;
            let calls = out.trace.last().map(|r| r.cum_oracle_calls).unwrap_or(0);
            (
                out.trace,
                calls,
                out.comm_rounds,
                f - instance.f_star,
                oracles,
            )
        } else {
            let oracles = instance.gaussian_oracles(sigma_x_sq);
            let params = StochParams {
                l_psi,
                eps: config.eps,
                delta: config.delta,
                seed,
                c_r: config.c_r,
                batch_cap: config.batch_cap,
                sigma_psi_sq: graph.lambda_max() * sigma_x_sq,
                n_iters,
                log_iterates: false,
            };
            let reference = ReferenceSolution {
                y_star: Some(instance.y_star.clone()),
                f_star: Some(instance.f_star),
            };
            let out = solve_stochastic(&graph, &oracles, &params, &reference)?;
            let f = primal_objective(&oracles, &out.x)?;
            (
                out.trace,
                out.oracle_calls,
                out.comm_rounds,
                f - instance.f_star,
                oracles,
            )
        };
        let _ = oracles;
        let last = trace.last().expect("n_iters >= 1 guarantees a trace row");
        let residual = last.consensus_residual;
        Ok(TrialOutcome {
            seed,
            traced_gap: last.gap,
            primal_gap,
            residual,
            success: primal_gap <= config.eps && residual <= config.eps / instance.r_y,
            oracle_calls,
            comm_rounds,
            trace: keep_trace.then_some(trace),
        })
    };

    let outcomes: Vec<TrialOutcome> = if config.trials > 1 && !flags.has("serial") {
        (0..config.trials)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..config.trials)
            .map(run_one)
            .collect::<Result<Vec<_>>>()?
    };

    let paths = OutputPaths::new(&flags);
    write_trace(
        &paths.trace,
        outcomes[0].trace.as_ref().expect("trial 0 keeps its trace"),
    )?;
    println!("wrote {}", paths.trace.display());

    if config.trials > 1 {
        let mut csv = String::from("trial,seed,f_minus_fstar,consensus_residual,success\n");
        for (idx, o) in outcomes.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                idx, o.seed, o.primal_gap, o.residual, o.success
            ));
        }
        std::fs::write(paths.trials(), csv)?;
        println!("wrote {}", paths.trials().display());
    }

    let success_fraction = (config.trials > 1)
        .then(|| outcomes.iter().filter(|o| o.success).count() as f64 / config.trials as f64);
    let summary = Summary {
        algo: algo.to_string(),
        topology,
        m: graph.m(),
        n,
        eps: config.eps,
        delta: config.delta,
        iterations: n_iters,
        oracle_calls: outcomes[0].oracle_calls,
        comm_rounds: outcomes[0].comm_rounds,
        final_gap: outcomes[0].traced_gap,
        final_consensus_residual: outcomes[0].residual,
        success_fraction,
        objective: None,
    };
    write_summary(&paths.summary(), &summary)?;
    println!("wrote {}", paths.summary().display());
    println!(
        "{algo} solve on {} (m={}, n={}): {} iterations, {} oracle calls, final gap {:.6e}, residual {:.6e}{}",
        summary.topology,
        summary.m,
        summary.n,
        n_iters,
        summary.oracle_calls,
        summary.final_gap,
        summary.final_consensus_residual,
        match success_fraction {
            Some(f) => format!(", success fraction {f:.2}"),
            None => String::new(),
        }
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// barycenter

fn cmd_barycenter(args: &[String]) -> Result<i32> {
    let flags = parse_flags(
        args,
        &["paper_constants"],
        &[
            "histograms",
            "cost",
            "mu_reg",
            "topology",
            "m",
            "p",
            "graph_seed",
            "edge_file",
            "config",
            "out",
            "paper_constants",
            "eps",
            "delta",
            "seed",
            "c_n",
            "c_r",
            "l_psi",
            "m_f_sq",
            "sigma_x_sq",
            "iters",
            "n_override",
            "batch_cap",
        ],
    )?;
    let config = load_config(&flags)?;
    if config.trials != 1 {
        return Err(Error::InvalidConfig(
            "trial sweeps are only wired for 'solve'".into(),
        ));
    }
    let mu_reg = flags.get_f64("mu_reg")?.unwrap_or(0.1);
    let histograms = read_histograms_csv(Path::new(flags.require("histograms")?))?;
    let cost = read_cost_csv(Path::new(flags.require("cost")?))?;
    let m = histograms.nrows();
    if let Some(m_flag) = flags.get_usize("m")? {
        if m_flag != m {
            return Err(Error::InvalidConfig(format!(
                "--m {m_flag} disagrees with the {m} histogram rows"
            )));
        }
    }
    let (graph, topology) = graph_from_flags(&flags, Some(m))?;
    if graph.m() != m {
        return Err(Error::InvalidConfig(format!(
            "graph has {} nodes but histograms have {m} rows",
            graph.m()
        )));
    }
    let problem = build_barycenter_problem(&histograms, &cost, mu_reg, &graph)?;

    let sigma_x_sq = config.sigma_x_sq.unwrap_or(4.0);
    let sigma_psi_sq = if flags.has("paper_constants") {
        problem.sigma_psi_sq_paper
    } else {
        graph.lambda_max() * sigma_x_sq
    };
    let l_psi = config.l_psi.unwrap_or(problem.l_psi);
    let m_f_sq = config.m_f_sq.unwrap_or(problem.m_f_sq);
    let n_iters = config.n_override.unwrap_or_else(|| {
        predict_iterations_stoch(m_f_sq, mu_reg, graph.chi(), config.eps, config.c_n)
    });
    let params = StochParams {
        l_psi,
        eps: config.eps,
        delta: config.delta,
        seed: config.seed,
        c_r: config.c_r,
        batch_cap: config.batch_cap,
        sigma_psi_sq,
        n_iters,
        log_iterates: false,
    };
    let out = solve_stochastic(
        &graph,
        &problem.oracles,
        &params,
        &ReferenceSolution::default(),
    )?;
    let objective = primal_objective(&problem.oracles, &out.x)?;
    let last = out
        .trace
        .last()
        .expect("n_iters >= 1 guarantees a trace row");

    let paths = OutputPaths::new(&flags);
    write_trace(&paths.trace, &out.trace)?;
    println!("wrote {}", paths.trace.display());
    let bary_path = paths.dir.join("barycenter.csv");
    write_histograms_csv(&bary_path, &out.x)?;
    println!("wrote {}", bary_path.display());
    let summary = Summary {
        algo: "stoch".to_string(),
        topology,
        m,
        n: problem.n,
        eps: config.eps,
        delta: config.delta,
        iterations: n_iters,
        oracle_calls: out.oracle_calls,
        comm_rounds: out.comm_rounds,
        final_gap: last.gap,
        final_consensus_residual: last.consensus_residual,
        success_fraction: None,
        objective: Some(objective),
    };
    write_summary(&paths.summary(), &summary)?;
    println!("wrote {}", paths.summary().display());
    println!(
        "barycenter on {} (m={m}, n={}): objective {:.6e}, residual {:.6e}, {} oracle calls",
        summary.topology, problem.n, objective, last.consensus_residual, out.oracle_calls
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// check-lemmas

fn cmd_check_lemmas(args: &[String]) -> Result<i32> {
    parse_flags(args, &[], &[])?;
    let mut all_pass = true;

    // Step-size recurrence: 2L_ψα² − α − A = 0 exactly, α below the linear
    // bound (k+2)/(2L_ψ), for three smoothness scales and 10⁴ iterations.
    let mut worst_residual = 0.0f64;
    let mut alpha_ok = true;
    for l_psi in [0.1, 1.0, 10.0] {
        let mut a = 0.0;
        for k in 0..10_000usize {
            let alpha = next_alpha(a, l_psi);
            let scale = (2.0 * l_psi * alpha * alpha).max(1.0);
            let residual = (2.0 * l_psi * alpha * alpha - alpha - a).abs() / scale;
            worst_residual = worst_residual.max(residual);
            if residual > 1e-12 || alpha > (k as f64 + 2.0) / (2.0 * l_psi) * (1.0 + 1e-12) {
                alpha_ok = false;
            }
            a += alpha;
        }
    }
    println!(
        "alpha-recurrence: {} (worst relative residual {:.2e} over 10^4 steps, L in {{0.1, 1, 10}})",
        if alpha_ok { "PASS" } else { "FAIL" },
        worst_residual
    );
    all_pass &= alpha_ok;

    // Bounded-radius recurrence: the two closed-form examples plus 100
    // rejection-sampled premise-satisfying sequences.
    let mut rec_ok = true;
    let constant = check_recurrence_lemma(0.5, 0.0, &[1.0; 10]);
    rec_ok &= constant.holds_premise && constant.bound_c == 1.0 && constant.holds_conclusion;
    let explicit = check_recurrence_lemma(1.0, 1.0, &[1.0; 5]);
    rec_ok &= (explicit.bound_c - (1.0 + 3.0f64.sqrt())).abs() <= 1e-12;
    rec_ok &= explicit.holds_premise && explicit.holds_conclusion;
    let mut accepted = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut attempts = 0usize;
    while accepted < 100 && attempts < 2_000_000 {
        attempts += 1;
        let a = 0.3 + 1.7 * rand::Rng::random::<f64>(&mut rng);
        let b = 1.5 * rand::Rng::random::<f64>(&mut rng);
        let len = 4 + (rand::Rng::random::<f64>(&mut rng) * 9.0) as usize;
        let r0 = 0.2 + 1.8 * rand::Rng::random::<f64>(&mut rng);
        let cap = r0 * (2.0 * a).sqrt() * 1.3;
        let mut r = vec![r0];
        for _ in 0..len {
            r.push(cap * rand::Rng::random::<f64>(&mut rng));
        }
        let report = check_recurrence_lemma(a, b, &r);
        if report.holds_premise {
            accepted += 1;
            if !report.holds_conclusion {
                rec_ok = false;
            }
        }
    }
    rec_ok &= accepted == 100;
    println!(
        "recurrence-lemma: {} (closed-form C checks and {accepted}/100 sampled premise-satisfying sequences)",
        if rec_ok { "PASS" } else { "FAIL" }
    );
    all_pass &= rec_ok;

    // Light-tail check: Gaussian deviations pass at 1.5x slack, Student-t(2)
    // deviations are flagged.
    let mut rng = ChaCha8Rng::seed_from_u64(823);
    let gaussian: Vec<f64> = (0..10_000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z.abs()
        })
        .collect();
    let gaussian_report = empirical_tail_check(&gaussian, 1.0)?;
    let student = StudentT::new(2.0).expect("valid dof");
    let heavy: Vec<f64> = (0..10_000)
        .map(|_| {
            let t: f64 = student.sample(&mut rng);
            t.abs()
        })
        .collect();
    let heavy_report = empirical_tail_check(&heavy, 1.0)?;
    let tail_ok = gaussian_report.pass && !heavy_report.pass;
    println!(
        "tail-check: {} (Gaussian deviations {}, Student-t(2) {})",
        if tail_ok { "PASS" } else { "FAIL" },
        if gaussian_report.pass {
            "within the sub-Gaussian envelope"
        } else {
            "escaped the envelope"
        },
        if heavy_report.pass {
            "NOT detected"
        } else {
            "detected as heavy-tailed"
        }
    );
    all_pass &= tail_ok;

    Ok(if all_pass { 0 } else { 3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::read_trace;

    fn run_cli(args: &[&str]) -> i32 {
        run(&args.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    #[test]
    fn help_and_unknown_subcommand() {
        assert_eq!(run_cli(&["help"]), 0);
        assert_eq!(run_cli(&["frobnicate"]), 2);
        assert_eq!(run_cli(&[]), 2);
    }

    #[test]
    fn graph_info_complete_graph_has_chi_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("info.json");
        assert_eq!(
            run_cli(&[
                "graph-info",
                "--topology",
                "complete",
                "--m",
                "4",
                "--out",
                out.to_str().unwrap()
            ]),
            0
        );
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(parsed["m"], 4);
        assert!((parsed["chi"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
        assert!((parsed["lambda_max"].as_f64().unwrap() - 4.0).abs() <= 1e-9);
    }

    #[test]
    fn missing_required_flag_is_a_two() {
        assert_eq!(run_cli(&["graph-info", "--m", "4"]), 2);
        assert_eq!(run_cli(&["solve", "--algo", "det", "--m", "3"]), 2);
        assert_eq!(run_cli(&["solve", "--topology", "path", "--m", "3"]), 2);
    }

    #[test]
    fn unknown_flag_is_rejected() {
        assert_eq!(
            run_cli(&[
                "graph-info",
                "--topology",
                "path",
                "--m",
                "3",
                "--frob",
                "1"
            ]),
            2
        );
    }

    #[test]
    fn solve_rejects_bad_combinations() {
        assert_eq!(
            run_cli(&["solve", "--algo", "walk", "--topology", "path", "--m", "3"]),
            2
        );
        assert_eq!(
            run_cli(&[
                "solve",
                "--algo",
                "stoch",
                "--topology",
                "path",
                "--m",
                "3",
                "--oracle",
                "quadratic-exact"
            ]),
            2
        );
        assert_eq!(
            run_cli(&[
                "solve",
                "--algo",
                "det",
                "--topology",
                "path",
                "--m",
                "3",
                "--eps",
                "0"
            ]),
            2
        );
    }

    #[test]
    fn deterministic_solve_writes_reproducible_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out1 = dir.path().join("a/trace.ndjson");
        let out2 = dir.path().join("b/trace.ndjson");
        for out in [&out1, &out2] {
            assert_eq!(
                run_cli(&[
                    "solve",
                    "--algo",
                    "det",
                    "--topology",
                    "path",
                    "--m",
                    "3",
                    "--n",
                    "2",
                    "--iters",
                    "40",
                    "--out",
                    out.to_str().unwrap()
                ]),
                0
            );
        }
        let t1 = std::fs::read(&out1).unwrap();
        let t2 = std::fs::read(&out2).unwrap();
        assert!(!t1.is_empty());
        assert_eq!(t1, t2);
        let s1 = std::fs::read(dir.path().join("a/summary.json")).unwrap();
        let s2 = std::fs::read(dir.path().join("b/summary.json")).unwrap();
        assert_eq!(s1, s2);
        let summary: serde_json::Value = serde_json::from_slice(&s1).unwrap();
        assert_eq!(summary["algo"], "det");
        assert_eq!(summary["iterations"], 40);
        assert_eq!(summary["comm_rounds"], 40);
        assert!(summary.get("success_fraction").is_none());
        let trace = read_trace(&out1).unwrap();
        assert_eq!(trace.len(), 40);
    }

    #[test]
    fn parallel_and_serial_trials_agree() {
        let dir = tempfile::tempdir().unwrap();
        let base = [
            "solve",
            "--algo",
            "stoch",
            "--topology",
            "path",
            "--m",
            "3",
            "--iters",
            "15",
            "--eps",
            "0.5",
            "--trials",
            "4",
            "--seed",
            "11",
        ];
        let out_par = dir.path().join("par/trace.ndjson");
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--out", out_par.to_str().unwrap()]);
        assert_eq!(run_cli(&args), 0);

        let out_ser = dir.path().join("ser/trace.ndjson");
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--out", out_ser.to_str().unwrap(), "--serial"]);
        assert_eq!(run_cli(&args), 0);

        for file in ["trace.ndjson", "summary.json", "trials.csv"] {
            let a = std::fs::read(dir.path().join("par").join(file)).unwrap();
            let b = std::fs::read(dir.path().join("ser").join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between parallel and serial runs");
        }
        let trials = std::fs::read_to_string(dir.path().join("par/trials.csv")).unwrap();
        let lines: Vec<&str> = trials.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(
            lines[0],
            "trial,seed,f_minus_fstar,consensus_residual,success"
        );
        assert!(lines[1].starts_with("0,11,"));
        assert!(lines[4].starts_with("3,14,"));
        let summary: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("par/summary.json")).unwrap(),
        )
        .unwrap();
        assert!(summary["success_fraction"].is_number());
    }

    #[test]
    fn diverging_solve_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("trace.ndjson");
        assert_eq!(
            run_cli(&[
                "solve",
                "--algo",
                "det",
                "--topology",
                "path",
                "--m",
                "3",
                "--iters",
                "200",
                "--l-psi",
                "1e-9",
                "--out",
                out.to_str().unwrap()
            ]),
            3
        );
    }

    #[test]
    fn batch_cap_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("trace.ndjson");
        assert_eq!(
            run_cli(&[
                "solve",
                "--algo",
                "stoch",
                "--topology",
                "path",
                "--m",
                "3",
                "--iters",
                "163",
                "--batch-cap",
                "5",
                "--out",
                out.to_str().unwrap()
            ]),
            3
        );
    }

    #[test]
    fn out_dir_env_var_is_honored() {
        let dir = tempfile::tempdir().unwrap();
        std::env::set_var("DUONET_OUT_DIR", dir.path());
        let code = run_cli(&[
            "solve",
            "--algo",
            "det",
            "--topology",
            "path",
            "--m",
            "3",
            "--iters",
            "5",
        ]);
        std::env::remove_var("DUONET_OUT_DIR");
        assert_eq!(code, 0);
        assert!(dir.path().join("trace.ndjson").exists());
        assert!(dir.path().join("summary.json").exists());
    }

    #[test]
    fn config_file_drives_a_solve_and_flags_override_it() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.conf");
        std::fs::write(&conf, "iters = 7\nseed = 3\neps = 0.5\n").unwrap();
        let out = dir.path().join("trace.ndjson");
        assert_eq!(
            run_cli(&[
                "solve",
                "--algo",
                "det",
                "--topology",
                "path",
                "--m",
                "3",
                "--config",
                conf.to_str().unwrap(),
                "--iters",
                "9",
                "--out",
                out.to_str().unwrap()
            ]),
            0
        );
        assert_eq!(read_trace(&out).unwrap().len(), 9);
    }

    #[test]
    fn barycenter_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("h.csv");
        let c = dir.path().join("c.csv");
        std::fs::write(&h, "0.3,0.7\n0.8,0.2\n").unwrap();
        std::fs::write(&c, "0,1\n1,0\n").unwrap();
        let out = dir.path().join("run/trace.ndjson");
        assert_eq!(
            run_cli(&[
                "barycenter",
                "--histograms",
                h.to_str().unwrap(),
                "--cost",
                c.to_str().unwrap(),
                "--topology",
                "path",
                "--mu-reg",
                "0.1",
                "--eps",
                "0.05",
                "--iters",
                "20",
                "--out",
                out.to_str().unwrap()
            ]),
            0
        );
        let bary =
            crate::barycenter::read_histograms_csv(&dir.path().join("run/barycenter.csv")).unwrap();
        assert_eq!(bary.nrows(), 2);
        assert_eq!(bary.ncols(), 2);
        let summary: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("run/summary.json")).unwrap(),
        )
        .unwrap();
        assert!(summary["objective"].is_number());
        assert_eq!(summary["m"], 2);
        assert_eq!(summary["n"], 2);
        assert_eq!(read_trace(&out).unwrap().len(), 20);
    }

    #[test]
    fn barycenter_rejects_mismatched_m() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("h.csv");
        let c = dir.path().join("c.csv");
        std::fs::write(&h, "0.3,0.7\n0.8,0.2\n").unwrap();
        std::fs::write(&c, "0,1\n1,0\n").unwrap();
        assert_eq!(
            run_cli(&[
                "barycenter",
                "--histograms",
                h.to_str().unwrap(),
                "--cost",
                c.to_str().unwrap(),
                "--topology",
                "path",
                "--m",
                "5"
            ]),
            2
        );
    }

    #[test]
    fn check_lemmas_passes() {
        assert_eq!(run_cli(&["check-lemmas"]), 0);
    }
}
