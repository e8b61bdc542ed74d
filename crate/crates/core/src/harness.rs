//! Scenario configuration, experiment orchestration, and result
//! persistence.
//!
//! A scenario is described by a TOML config (see `ScenarioConfig`); the
//! harness materializes costs, schedule, and starting point, attaches the
//! centralized optimum when the cost family supports one, runs the protocol
//! with gap-based stopping, evaluates the enabled certificates, and writes
//! `metrics.csv` / `certificates.txt` / `sweep.csv` / `compare.csv`. All
//! outputs are deterministic functions of the config (wall-clock columns
//! excepted), so identical configs produce byte-identical metrics files.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    conservation_certificate, cut_crossing_certificate, descent_certificate,
    envelope_certificate, geometric_bound_certificate, sublinear_bound_certificate,
    window_lower_bound_certificate, BoundParams, CertificateReport,
};
use crate::error::{Error, Result};
use crate::graph::{check_b_connectivity, Graph, GraphSchedule};
use crate::objectives::{quartics_from_params, sample_uniform_quartics, total_cost, Cost};
use crate::oracle::{
    default_tolerance, solve_optimal_bracketed, solve_quadratic_closed_form, OptimalSolution,
};
use crate::protocol::{
    center_free_round, default_center_free_weight, run_with, AllocationState, CenterFreeWeights,
    RoundTrace, StopRule, Trajectory,
};

/// Top-level scenario description, deserialized from TOML.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Resource total K.
    #[serde(alias = "K", default)]
    pub k_total: f64,
    /// Gap threshold for stopping and convergence-time measurement.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    /// Derivative-spread stop threshold; 0 disables it.
    #[serde(default)]
    pub stop_spread: f64,
    /// Evaluate certificates (requires keeping the full trajectory).
    #[serde(default = "default_true")]
    pub certificates: bool,
    pub graph: GraphConfig,
    pub cost: CostConfig,
    #[serde(default)]
    pub x0: X0Config,
    /// Uniform weight for the center-free baseline; default derives a safe
    /// weight from the instance each round.
    #[serde(default)]
    pub baseline_weight: Option<f64>,
    /// Full weight matrix for the baseline; must be symmetric.
    #[serde(default)]
    pub baseline_weight_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// Also write the per-round offer/accept log on export.
    #[serde(default)]
    pub export_traces: bool,
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_max_rounds() -> usize {
    1_000_000
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphKind,
    /// Connectivity window length B.
    #[serde(alias = "B", default = "default_window")]
    pub b: usize,
    #[serde(default)]
    pub seed: u64,
    /// Edge probability for `erdos_renyi`.
    #[serde(default = "default_edge_probability")]
    pub p: f64,
    /// Edge lists for `periodic`, one per round of the period.
    #[serde(default)]
    pub period: Vec<Vec<[usize; 2]>>,
}

fn default_window() -> usize {
    1
}

fn default_edge_probability() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Line,
    Ring,
    Star,
    Complete,
    Lollipop,
    ErdosRenyi,
    Periodic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub family: CostFamily,
    /// Sampling seed for `quadratic` and `quartic` when parameters are not
    /// given explicitly.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Quadratic curvatures and slopes.
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub b: Option<Vec<f64>>,
    /// Quartic weights and centers.
    #[serde(default)]
    pub w: Option<Vec<f64>>,
    #[serde(default)]
    pub a: Option<Vec<f64>>,
    /// Table derivatives plus their uniform Lipschitz constant.
    #[serde(default)]
    pub derivatives: Option<Vec<f64>>,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// Inflation factor for the quartic derivative envelope.
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
}

fn default_safety() -> f64 {
    1.5
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CostFamily {
    Quadratic,
    Quartic,
    Table,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct X0Config {
    #[serde(default)]
    pub kind: X0Kind,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum X0Kind {
    #[default]
    UniformSplit,
    Explicit,
    Zeros,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_seeds_per_n")]
    pub seeds_per_n: usize,
}

fn default_n_list() -> Vec<usize> {
    vec![4, 8, 16, 32, 64]
}

fn default_seeds_per_n() -> usize {
    10
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Overrides every sampling seed, for the CLI `--seed` flag.
    pub fn override_seed(&mut self, seed: u64) {
        self.graph.seed = seed;
        self.cost.seed = Some(seed);
    }
}

/// A materialized instance: costs, schedule, starting state, and the
/// centralized optimum when the cost family supports one.
pub struct Scenario {
    pub costs: Vec<Cost>,
    pub schedule: GraphSchedule,
    pub state0: AllocationState,
    pub oracle: Option<OptimalSolution>,
    pub warnings: Vec<String>,
}

/// Draws quadratic parameters: curvature uniform on [0.5, 2], slope uniform
/// on [-1, 1].
pub fn sample_quadratics(n: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (
                0.5 + 1.5 * rng.random::<f64>(),
                2.0 * rng.random::<f64>() - 1.0,
            )
        })
        .collect()
}

fn build_graph(config: &GraphConfig, n: usize) -> Result<GraphSchedule> {
    let window = config.b;
    match config.kind {
        GraphKind::Line => GraphSchedule::fixed(Graph::line(n)?, window),
        GraphKind::Ring => GraphSchedule::fixed(Graph::ring(n)?, window),
        GraphKind::Star => GraphSchedule::fixed(Graph::star(n)?, window),
        GraphKind::Complete => GraphSchedule::fixed(Graph::complete(n)?, window),
        GraphKind::Lollipop => GraphSchedule::fixed(Graph::lollipop(n)?, window),
        GraphKind::ErdosRenyi => {
            GraphSchedule::fixed(Graph::erdos_renyi(n, config.p, config.seed)?, window)
        }
        GraphKind::Periodic => {
            let graphs: Vec<Graph> = config
                .period
                .iter()
                .map(|edges| Graph::new(n, edges.iter().map(|e| (e[0], e[1]))))
                .collect::<Result<_>>()?;
            GraphSchedule::periodic(graphs, window)
        }
    }
}

fn build_x0(config: &X0Config, n: usize, k_total: f64) -> Result<Vec<f64>> {
    let x0 = match config.kind {
        X0Kind::UniformSplit => vec![k_total / n as f64; n],
        X0Kind::Zeros => {
            if k_total.abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "x0 kind `zeros` is infeasible for K = {k_total}"
                )));
            }
            vec![0.0; n]
        }
        X0Kind::Explicit => {
            let values = config
                .values
                .clone()
                .ok_or_else(|| Error::Config("x0 kind `explicit` requires values".into()))?;
            if values.len() != n {
                return Err(Error::Config(format!(
                    "x0 has {} entries, expected {n}",
                    values.len()
                )));
            }
            values
        }
    };
    let sum: f64 = x0.iter().sum();
    if (sum - k_total).abs() > 1e-12 * 1.0_f64.max(k_total.abs()) {
        return Err(Error::Config(format!(
            "materialized x0 sums to {sum}, expected {k_total}"
        )));
    }
    Ok(x0)
}

fn build_costs(config: &CostConfig, n: usize, x0: &[f64]) -> Result<Vec<Cost>> {
    let expect_len = |name: &str, v: &Vec<f64>| -> Result<()> {
        if v.len() != n {
            return Err(Error::Config(format!(
                "cost.{name} has {} entries, expected {n}",
                v.len()
            )));
        }
        Ok(())
    };
    match config.family {
        CostFamily::Quadratic => {
            let params: Vec<(f64, f64)> = match (&config.c, &config.b) {
                (Some(c), b) => {
                    expect_len("c", c)?;
                    let b = b.clone().unwrap_or_else(|| vec![0.0; n]);
                    expect_len("b", &b)?;
                    c.iter().copied().zip(b).collect()
                }
                (None, _) => {
                    let seed = config.seed.ok_or_else(|| {
                        Error::Config("quadratic costs need either c (+ b) or a seed".into())
                    })?;
                    sample_quadratics(n, seed)
                }
            };
            params.into_iter().map(|(c, b)| Cost::quadratic(c, b)).collect()
        }
        CostFamily::Quartic => {
            let params: Vec<(f64, f64)> = match (&config.w, &config.a) {
                (Some(w), Some(a)) => {
                    expect_len("w", w)?;
                    expect_len("a", a)?;
                    w.iter().copied().zip(a.iter().copied()).collect()
                }
                _ => {
                    let seed = config.seed.ok_or_else(|| {
                        Error::Config("quartic costs need either w and a or a seed".into())
                    })?;
                    sample_uniform_quartics(n, seed)?
                }
            };
            quartics_from_params(&params, x0, config.safety_factor)
        }
        CostFamily::Table => {
            let derivs = config
                .derivatives
                .clone()
                .ok_or_else(|| Error::Config("table costs need derivatives".into()))?;
            expect_len("derivatives", &derivs)?;
            let lipschitz = config
                .lipschitz
                .ok_or_else(|| Error::Config("table costs need a lipschitz constant".into()))?;
            derivs.into_iter().map(|d| Cost::table(d, lipschitz)).collect()
        }
    }
}

fn attach_oracle(
    config: &ScenarioConfig,
    costs: &[Cost],
    x0: &[f64],
) -> (Option<OptimalSolution>, Vec<String>) {
    let mut warnings = Vec::new();
    let oracle = match config.cost.family {
        CostFamily::Quadratic => match solve_quadratic_closed_form(costs, config.k_total) {
            Ok(sol) => Some(sol),
            Err(e) => {
                warnings.push(format!("oracle unavailable: {e}"));
                None
            }
        },
        CostFamily::Quartic => {
            let d0: Vec<f64> = costs.iter().zip(x0).map(|(c, &x)| c.derivative(x)).collect();
            let lo = d0.iter().fold(f64::INFINITY, |m, &v| m.min(v)) - 1.0;
            let hi = d0.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) + 1.0;
            match solve_optimal_bracketed(
                costs,
                config.k_total,
                default_tolerance(config.k_total),
                (lo, hi),
            ) {
                Ok(sol) => Some(sol),
                Err(e) => {
                    warnings.push(format!("oracle unavailable: {e}"));
                    None
                }
            }
        }
        CostFamily::Table => {
            warnings.push(
                "oracle unavailable for table costs; gap-based outputs downgraded to spread"
                    .into(),
            );
            None
        }
    };
    (oracle, warnings)
}

/// Materializes costs, schedule, and starting point from a config.
pub fn materialize(config: &ScenarioConfig) -> Result<Scenario> {
    if config.n < 2 {
        return Err(Error::Config(format!("n must be >= 2, got {}", config.n)));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::Config(format!(
            "epsilon must be positive, got {}",
            config.epsilon
        )));
    }
    let schedule = build_graph(&config.graph, config.n)?;
    let x0 = build_x0(&config.x0, config.n, config.k_total)?;
    let costs = build_costs(&config.cost, config.n, &x0)?;
    let (oracle, warnings) = attach_oracle(config, &costs, &x0);
    let state0 = AllocationState::new(x0, config.k_total)?;
    Ok(Scenario {
        costs,
        schedule,
        state0,
        oracle,
        warnings,
    })
}

/// One row of `metrics.csv`: state statistics at round `k` plus the activity
/// of the round that starts there. The final state appears as a last row
/// with empty activity columns.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub k: usize,
    pub f: Option<f64>,
    pub gap: Option<f64>,
    pub min_deriv: f64,
    pub max_deriv: f64,
    pub spread: f64,
    pub n_offers: Option<usize>,
    pub n_accepted: Option<usize>,
    pub descent_slack: Option<f64>,
    pub sum_x: f64,
}

/// Everything `run_scenario` produces.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub final_state: AllocationState,
    pub metrics: Vec<MetricsRow>,
    pub certificates: Vec<CertificateReport>,
    /// Kept only when certificates are enabled; long certificate-free runs
    /// stream instead of storing every state.
    pub trajectory: Option<Trajectory>,
    pub oracle: Option<OptimalSolution>,
    pub warnings: Vec<String>,
}

fn state_metrics(
    costs: &[Cost],
    state: &AllocationState,
    f_star: Option<f64>,
) -> (Option<f64>, Option<f64>, f64, f64, f64, f64) {
    let d: Vec<f64> = state.x().iter().zip(costs).map(|(&x, c)| c.derivative(x)).collect();
    let lo = d.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = d.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let f = total_cost(costs, state.x());
    let gap = match (f, f_star) {
        (Some(f), Some(fs)) => Some(f - fs),
        _ => None,
    };
    let sum_x: f64 = state.x().iter().sum();
    (f, gap, lo, hi, hi - lo, sum_x)
}

fn round_metrics_row(
    costs: &[Cost],
    before: &AllocationState,
    trace: &RoundTrace,
    after: &AllocationState,
    f_star: Option<f64>,
) -> MetricsRow {
    let (f, gap, lo, hi, spread, sum_x) = state_metrics(costs, before, f_star);
    let descent_slack = f.and_then(|f_now| {
        total_cost(costs, after.x()).map(|f_next| {
            let d = &trace.derivatives;
            let mut drop = 0.0;
            for &(i, j) in &trace.matched_edges {
                let diff = d[i] - d[j];
                drop += diff * diff / (4.0 * (costs[i].lipschitz() + costs[j].lipschitz()));
            }
            f_next - (f_now - drop)
        })
    });
    MetricsRow {
        k: before.round(),
        f,
        gap,
        min_deriv: lo,
        max_deriv: hi,
        spread,
        n_offers: Some(trace.offers.len()),
        n_accepted: Some(trace.accepted.len()),
        descent_slack,
        sum_x,
    }
}

fn final_metrics_row(costs: &[Cost], state: &AllocationState, f_star: Option<f64>) -> MetricsRow {
    let (f, gap, lo, hi, spread, sum_x) = state_metrics(costs, state, f_star);
    MetricsRow {
        k: state.round(),
        f,
        gap,
        min_deriv: lo,
        max_deriv: hi,
        spread,
        n_offers: None,
        n_accepted: None,
        descent_slack: None,
        sum_x,
    }
}

fn stop_rule(config: &ScenarioConfig, oracle: Option<&OptimalSolution>) -> StopRule {
    let mut stop = StopRule::max_rounds(config.max_rounds);
    if config.stop_spread > 0.0 {
        stop = stop.with_spread(config.stop_spread);
    }
    if let Some(sol) = oracle {
        stop = stop.with_gap(config.epsilon, sol.f_star);
    }
    stop
}

/// Runs one scenario: checks B-connectivity over the round budget, runs the
/// protocol with gap-based stopping (spread-based when no oracle exists),
/// collects per-round metrics, and evaluates the enabled certificates.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let scenario = materialize(config)?;
    let Scenario {
        costs,
        schedule,
        state0,
        oracle,
        mut warnings,
    } = scenario;

    let window = schedule.window();
    let horizon = config.max_rounds.max(window);
    let connectivity = check_b_connectivity(&schedule, window, horizon)?;
    if let Some(l) = connectivity.first_failing_window {
        return Err(Error::NotBConnected {
            window: l,
            start: l * window,
            end: (l + 1) * window - 1,
        });
    }

    let stop = stop_rule(config, oracle.as_ref());
    let f_star = oracle.as_ref().map(|s| s.f_star);
    let mut metrics: Vec<MetricsRow> = Vec::new();

    let (final_state, trajectory) = if config.certificates {
        let mut states = vec![state0.clone()];
        let mut traces = Vec::new();
        let final_state = run_with(&costs, &schedule, state0, &stop, |before, trace, after| {
            metrics.push(round_metrics_row(&costs, before, trace, after, f_star));
            traces.push(trace.clone());
            states.push(after.clone());
        })?;
        (final_state, Some(Trajectory { states, traces }))
    } else {
        let final_state = run_with(&costs, &schedule, state0, &stop, |before, trace, after| {
            metrics.push(round_metrics_row(&costs, before, trace, after, f_star));
        })?;
        (final_state, None)
    };
    metrics.push(final_metrics_row(&costs, &final_state, f_star));

    let mut certificates = Vec::new();
    if let Some(traj) = &trajectory {
        certificates.push(conservation_certificate(traj, config.k_total));
        certificates.push(descent_certificate(traj, &costs));
        certificates.push(envelope_certificate(traj, &costs));
        certificates.push(cut_crossing_certificate(traj, window));
        match &oracle {
            Some(sol) => {
                certificates.push(window_lower_bound_certificate(traj, &costs, window, sol));
                match BoundParams::from_instance(&costs, traj.initial_state().x(), config.k_total, window, sol)
                {
                    Ok(params) => {
                        certificates.push(sublinear_bound_certificate(traj, &costs, &params, sol));
                        certificates.push(geometric_bound_certificate(traj, &costs, &params, sol));
                    }
                    Err(e) => warnings.push(format!("theorem bounds unavailable: {e}")),
                }
            }
            None => warnings.push("oracle-dependent certificates skipped".into()),
        }
    }

    Ok(ScenarioOutcome {
        final_state,
        metrics,
        certificates,
        trajectory,
        oracle,
        warnings,
    })
}

/// Runs a scenario and writes `metrics.csv`, `certificates.txt`, and
/// optionally `traces.log` under `out_dir`.
pub fn run_scenario_to_dir(config: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutcome> {
    let outcome = run_scenario(config)?;
    fs::create_dir_all(out_dir)?;
    write_metrics_csv(&out_dir.join("metrics.csv"), &outcome.metrics)?;
    if !outcome.certificates.is_empty() {
        write_certificates(&out_dir.join("certificates.txt"), &outcome.certificates)?;
    }
    if config.export_traces {
        if let Some(traj) = &outcome.trajectory {
            write_trace_log(&out_dir.join("traces.log"), traj)?;
        }
    }
    Ok(outcome)
}

/// One sweep run.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub n: usize,
    pub seed: u64,
    /// First round with gap below epsilon; `None` when censored at the
    /// round budget.
    pub convergence_time: Option<usize>,
    pub final_gap: f64,
    pub rounds_run: usize,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln(median convergence time)` against `ln n`,
    /// over the n values where every seed converged.
    pub slope: Option<f64>,
    pub warnings: Vec<String>,
}

fn base_seed_of(base: &ScenarioConfig) -> u64 {
    base.cost.seed.unwrap_or(0)
}

fn sweep_run(base: &ScenarioConfig, n: usize, seed: u64) -> Result<SweepRow> {
    let mut config = base.clone();
    config.n = n;
    config.cost.seed = Some(seed);
    config.certificates = false;
    config.sweep = None;

    let scenario = materialize(&config)?;
    let window = scenario.schedule.window();
    let connectivity = check_b_connectivity(&scenario.schedule, window, config.max_rounds.max(window))?;
    if let Some(l) = connectivity.first_failing_window {
        return Err(Error::NotBConnected {
            window: l,
            start: l * window,
            end: (l + 1) * window - 1,
        });
    }
    let oracle = scenario.oracle.ok_or_else(|| {
        Error::Config("sweep requires a cost family with an oracle".into())
    })?;

    let started = Instant::now();
    let stop = StopRule::max_rounds(config.max_rounds).with_gap(config.epsilon, oracle.f_star);
    // Spot checks while streaming: conservation on every run, the descent
    // inequality on the first seed of each n.
    let check_descent = seed == base_seed_of(base);
    let costs = scenario.costs.clone();
    let k_total = config.k_total;
    let mut violation: Option<String> = None;
    let final_state = run_with(
        &scenario.costs,
        &scenario.schedule,
        scenario.state0,
        &stop,
        |before, trace, after| {
            if violation.is_some() {
                return;
            }
            let sum: f64 = after.x().iter().sum();
            let tol = crate::protocol::conservation_tolerance(k_total, after.x());
            if (sum - k_total).abs() > tol {
                violation = Some(format!(
                    "conservation violated at round {}: sum {sum}, expected {k_total}",
                    before.round()
                ));
                return;
            }
            if check_descent {
                let f_now = total_cost(&costs, before.x()).expect("quartics have values");
                let f_next = total_cost(&costs, after.x()).expect("quartics have values");
                let d = &trace.derivatives;
                let mut drop = 0.0;
                for &(i, j) in &trace.matched_edges {
                    let diff = d[i] - d[j];
                    drop += diff * diff / (4.0 * (costs[i].lipschitz() + costs[j].lipschitz()));
                }
                if f_next - (f_now - drop) > 1e-9 * (1.0 + f_now.abs()) {
                    violation = Some(format!(
                        "descent violated at round {}: F {f_now} -> {f_next}, required drop {drop}",
                        before.round()
                    ));
                }
            }
        },
    )?;
    if let Some(message) = violation {
        return Err(Error::Infeasible(format!("sweep run n={n} seed={seed}: {message}")));
    }
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let final_gap =
        total_cost(&scenario.costs, final_state.x()).expect("quartics have values") - oracle.f_star;
    let rounds_run = final_state.round();
    let convergence_time = (final_gap < config.epsilon).then_some(rounds_run);
    Ok(SweepRow {
        n,
        seed,
        convergence_time,
        final_gap,
        rounds_run,
        wall_time_ms,
    })
}

/// Runs the convergence-time sweep: for every `(n, seed)` draws fresh costs,
/// runs to `gap < epsilon`, and fits the log-log slope of median convergence
/// time against n. Runs execute in parallel; rows are sorted by `(n, seed)`.
pub fn sweep_nodes(
    base: &ScenarioConfig,
    n_list: &[usize],
    seeds_per_n: usize,
) -> Result<SweepResult> {
    if n_list.is_empty() {
        return Err(Error::Config("sweep requires a nonempty n list".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sweep n list must be strictly ascending".into()));
    }
    if seeds_per_n == 0 {
        return Err(Error::Config("sweep requires at least one seed per n".into()));
    }
    let base_seed = base_seed_of(base);
    let jobs: Vec<(usize, u64)> = n_list
        .iter()
        .flat_map(|&n| (0..seeds_per_n as u64).map(move |s| (n, base_seed + s)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(n, seed)| sweep_run(base, n, seed))
        .collect::<Result<Vec<SweepRow>>>()?;
    rows.sort_by_key(|r| (r.n, r.seed));

    let mut warnings = Vec::new();
    let mut points = Vec::new();
    for &n in n_list {
        let times: Vec<usize> = rows
            .iter()
            .filter(|r| r.n == n)
            .filter_map(|r| r.convergence_time)
            .collect();
        if times.len() < seeds_per_n {
            warnings.push(format!(
                "n={n}: {} of {seeds_per_n} runs censored at the round budget; \
                 excluded from the slope fit",
                seeds_per_n - times.len()
            ));
            continue;
        }
        let m = median(&times);
        if m <= 0.0 {
            warnings.push(format!("n={n}: median convergence time {m} <= 0; excluded"));
            continue;
        }
        points.push(((n as f64).ln(), m.ln()));
    }
    let slope = fit_slope(&points);
    if slope.is_none() {
        warnings.push("slope fit needs at least two usable n values".into());
    }
    Ok(SweepResult {
        rows,
        slope,
        warnings,
    })
}

fn median(sorted_source: &[usize]) -> f64 {
    let mut values: Vec<usize> = sorted_source.to_vec();
    values.sort_unstable();
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid] as f64
    } else {
        (values[mid - 1] + values[mid]) as f64 / 2.0
    }
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, y) in points {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    (den > 0.0).then(|| num / den)
}

/// Paired gap-versus-round comparison of gradient balancing against the
/// center-free baseline on the same instance.
#[derive(Clone, Debug)]
pub struct CompareRow {
    pub k: usize,
    pub gap_balancing: Option<f64>,
    pub gap_center_free: Option<f64>,
}

pub struct CompareResult {
    pub rows: Vec<CompareRow>,
    pub final_gap_balancing: f64,
    pub final_gap_center_free: f64,
}

/// Runs both methods on the identical materialized instance until each
/// reaches `gap < epsilon` or the round budget.
pub fn compare_baseline(config: &ScenarioConfig) -> Result<CompareResult> {
    let scenario = materialize(config)?;
    let oracle = scenario
        .oracle
        .ok_or_else(|| Error::Config("compare requires a cost family with an oracle".into()))?;
    let costs = &scenario.costs;
    let f_star = oracle.f_star;
    let gap_of = |state: &AllocationState| -> f64 {
        total_cost(costs, state.x()).expect("oracle implies values") - f_star
    };

    // Gradient balancing.
    let stop = StopRule::max_rounds(config.max_rounds).with_gap(config.epsilon, f_star);
    let mut gaps_balancing = vec![gap_of(&scenario.state0)];
    let final_gb = run_with(
        costs,
        &scenario.schedule,
        scenario.state0.clone(),
        &stop,
        |_, _, after| gaps_balancing.push(gap_of(after)),
    )?;

    // Center-free baseline with the same schedule and budget. Without an
    // explicit weight the safe default is derived from the current graph
    // each round.
    let configured_weights = if let Some(matrix) = &config.baseline_weight_matrix {
        Some(CenterFreeWeights::Matrix(matrix.clone()))
    } else {
        config.baseline_weight.map(CenterFreeWeights::Uniform)
    };
    let mut state = scenario.state0.clone();
    let mut gaps_center_free = vec![gap_of(&state)];
    for _ in 0..config.max_rounds {
        if gaps_center_free.last().copied().unwrap() < config.epsilon {
            break;
        }
        let graph = scenario.schedule.graph_at(state.round());
        let step_weights = configured_weights.clone().unwrap_or_else(|| {
            CenterFreeWeights::Uniform(default_center_free_weight(costs, graph.as_ref()))
        });
        state = center_free_round(&state, graph.as_ref(), costs, &step_weights)?;
        gaps_center_free.push(gap_of(&state));
    }

    let rows = (0..gaps_balancing.len().max(gaps_center_free.len()))
        .map(|k| CompareRow {
            k,
            gap_balancing: gaps_balancing.get(k).copied(),
            gap_center_free: gaps_center_free.get(k).copied(),
        })
        .collect();
    Ok(CompareResult {
        rows,
        final_gap_balancing: gap_of(&final_gb),
        final_gap_center_free: *gaps_center_free.last().unwrap(),
    })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|u| u.to_string()).unwrap_or_default()
}

/// Writes `metrics.csv`: header row first, one newline-terminated row per
/// round plus a final-state row, '.' decimal separator throughout.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = String::from(
        "k,F,gap,min_deriv,max_deriv,spread,n_offers,n_accepted,descent_slack,sum_x\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.k,
            fmt_opt(r.f),
            fmt_opt(r.gap),
            fmt_f64(r.min_deriv),
            fmt_f64(r.max_deriv),
            fmt_f64(r.spread),
            fmt_opt_usize(r.n_offers),
            fmt_opt_usize(r.n_accepted),
            fmt_opt(r.descent_slack),
            fmt_f64(r.sum_x),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("n,seed,convergence_time,final_gap,rounds_run,wall_time_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            r.seed,
            fmt_opt_usize(r.convergence_time),
            fmt_f64(r.final_gap),
            r.rounds_run,
            fmt_f64(r.wall_time_ms),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_compare_csv(path: &Path, rows: &[CompareRow]) -> Result<()> {
    let mut out = String::from("k,gap_balancing,gap_center_free\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.k,
            fmt_opt(r.gap_balancing),
            fmt_opt(r.gap_center_free),
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// One line per certificate: name, verdict, worst slack, first violation.
pub fn write_certificates(path: &Path, reports: &[CertificateReport]) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.summary_line());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Line-oriented offer/accept log, one line per protocol event.
pub fn write_trace_log(path: &Path, traj: &Trajectory) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for (k, trace) in traj.traces.iter().enumerate() {
        for o in &trace.offers {
            writeln!(w, "round={k} offer from={} to={} delta={}", o.from, o.to, o.delta)?;
        }
        for o in &trace.accepted {
            writeln!(w, "round={k} accept from={} to={} delta={}", o.from, o.to, o.delta)?;
        }
        for o in &trace.rejected {
            writeln!(w, "round={k} reject from={} to={} delta={}", o.from, o.to, o.delta)?;
        }
    }
    Ok(())
}

/// Structured-text rendering of an optimum for the `oracle` subcommand.
pub fn oracle_summary(solution: &OptimalSolution) -> String {
    let mut out = format!(
        "lambda_star = {}\nf_star = {}\ntolerance_achieved = {:e}\n",
        solution.lambda_star, solution.f_star, solution.tolerance_achieved
    );
    for (i, x) in solution.x_star.iter().enumerate() {
        out.push_str(&format!("x_star[{i}] = {x}\n"));
    }
    out
}

pub fn write_oracle_csv(path: &Path, solution: &OptimalSolution) -> Result<()> {
    let mut out = String::from("node,x_star\n");
    for (i, x) in solution.x_star.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", fmt_f64(*x)));
    }
    fs::write(path, out)?;
    Ok(())
}
