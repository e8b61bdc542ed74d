//! One synchronous round of the gradient balancing protocol and full
//! trajectories, plus the classic center-free baseline update.
//!
//! A round runs four lock-step phases: every node broadcasts its derivative
//! and Lipschitz constant; every node offers a transfer to its
//! strictly-smallest-derivative neighbor; every node accepts the largest
//! offer it received and rejects the rest; accepted transfers settle (the
//! receiver gains what the offerer gives up). Ties are broken by smallest
//! vertex index so runs are replayable.

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphSchedule};
use crate::objectives::{total_cost, Cost};

/// Feasible allocation vector together with the resource total it must sum
/// to and the round counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationState {
    x: Vec<f64>,
    total: f64,
    round: usize,
}

/// Conservation tolerance: `1e-9 * max(1, |K|, sum |x_i|)`.
pub fn conservation_tolerance(total: f64, x: &[f64]) -> f64 {
    let abs_sum: f64 = x.iter().map(|v| v.abs()).sum();
    1e-9 * 1.0_f64.max(total.abs()).max(abs_sum)
}

impl AllocationState {
    /// Builds a state at round 0, rejecting vectors that do not sum to
    /// `total` within the conservation tolerance.
    pub fn new(x: Vec<f64>, total: f64) -> Result<Self> {
        Self::at_round(x, total, 0)
    }

    fn at_round(x: Vec<f64>, total: f64, round: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Infeasible("empty allocation vector".into()));
        }
        if x.iter().any(|v| !v.is_finite()) || !total.is_finite() {
            return Err(Error::Infeasible("non-finite allocation".into()));
        }
        let sum: f64 = x.iter().sum();
        let tol = conservation_tolerance(total, &x);
        if (sum - total).abs() > tol {
            return Err(Error::Infeasible(format!(
                "allocation sums to {sum}, expected {total} (tolerance {tol:e})"
            )));
        }
        Ok(AllocationState { x, total, round })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Resource total the vector is conserved against.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn round(&self) -> usize {
        self.round
    }
}

/// A proposed transfer of `delta` resource units from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Offer {
    pub from: usize,
    pub to: usize,
    pub delta: f64,
}

/// Everything that happened in one round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrace {
    /// Derivatives at the state the round started from.
    pub derivatives: Vec<f64>,
    pub offers: Vec<Offer>,
    pub accepted: Vec<Offer>,
    pub rejected: Vec<Offer>,
    /// `(from, to)` of each accepted offer.
    pub matched_edges: Vec<(usize, usize)>,
}

/// Sequence of states and the traces that connect them;
/// `states.len() == traces.len() + 1`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<AllocationState>,
    pub traces: Vec<RoundTrace>,
}

impl Trajectory {
    pub fn rounds(&self) -> usize {
        self.traces.len()
    }

    pub fn initial_state(&self) -> &AllocationState {
        &self.states[0]
    }

    pub fn final_state(&self) -> &AllocationState {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Offer size `(d_i - d_p) / (2 (L_i + L_p))` from a node with derivative
/// `d_i` to a neighbor with strictly smaller derivative `d_p`.
pub fn compute_offer(d_i: f64, d_p: f64, l_i: f64, l_p: f64) -> Result<f64> {
    if !(d_p < d_i) {
        return Err(Error::InvalidParameter(format!(
            "no offer exists: receiver derivative {d_p} is not strictly below {d_i}"
        )));
    }
    let denom = l_i + l_p;
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degenerate costs: Lipschitz sum {denom} must be positive"
        )));
    }
    Ok((d_i - d_p) / (2.0 * denom))
}

/// Among neighbors whose derivative is strictly below `d_i` (by more than
/// `strict_tol`), returns the one with the minimum derivative; ties break to
/// the smallest vertex index. `None` when no neighbor qualifies.
pub fn select_offer_target(
    neighbor_derivs: &[(usize, f64)],
    d_i: f64,
    strict_tol: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(j, d_j) in neighbor_derivs {
        if !(d_j < d_i - strict_tol) {
            continue;
        }
        best = match best {
            None => Some((j, d_j)),
            Some((bj, bd)) if d_j < bd || (d_j == bd && j < bj) => Some((j, d_j)),
            keep => keep,
        };
    }
    best.map(|(j, _)| j)
}

/// Splits a nonempty list of offers to one node into the winner (maximal
/// `delta`, ties to smallest `from`) and the rejected rest.
pub fn accept_largest(offers: &[Offer]) -> Option<(Offer, Vec<Offer>)> {
    let mut winner = *offers.first()?;
    for &o in &offers[1..] {
        if o.delta > winner.delta || (o.delta == winner.delta && o.from < winner.from) {
            winner = o;
        }
    }
    let losers = offers
        .iter()
        .copied()
        .filter(|o| o.from != winner.from)
        .collect();
    Some((winner, losers))
}

/// Per-round options. `strict_tol` loosens the strictly-smaller comparison
/// in offer targeting; the default 0 uses exact floating-point comparison so
/// the matched edge set is a pure function of the state.
#[derive(Clone, Copy, Debug, Default)]
pub struct RoundOptions {
    pub strict_tol: f64,
}

/// Evaluates every node's derivative, rejecting non-finite values.
pub fn derivatives(costs: &[Cost], x: &[f64], round: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    for (node, (cost, &xi)) in costs.iter().zip(x).enumerate() {
        let d = cost.derivative(xi);
        if !d.is_finite() {
            return Err(Error::NonFiniteDerivative {
                node,
                round,
                value: d,
            });
        }
        out.push(d);
    }
    Ok(out)
}

/// `max_i d_i - min_i d_i`.
pub fn spread(derivs: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &d in derivs {
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi - lo
}

/// Executes one synchronous round on the given edge set.
pub fn round(
    state: &AllocationState,
    edges: &Graph,
    costs: &[Cost],
) -> Result<(AllocationState, RoundTrace)> {
    round_with_options(state, edges, costs, RoundOptions::default())
}

pub fn round_with_options(
    state: &AllocationState,
    edges: &Graph,
    costs: &[Cost],
    options: RoundOptions,
) -> Result<(AllocationState, RoundTrace)> {
    let n = state.len();
    if costs.len() != n || edges.vertex_count() != n {
        return Err(Error::InvalidParameter(format!(
            "size mismatch: {n} allocations, {} costs, {} vertices",
            costs.len(),
            edges.vertex_count()
        )));
    }
    let derivs = derivatives(costs, state.x(), state.round())?;

    // Offer phase: each node targets its strictly-smallest-derivative
    // neighbor. Offers that underflow to zero are dropped (delta must stay
    // strictly positive).
    let mut offers: Vec<Offer> = Vec::new();
    let adjacency = edges.adjacency();
    for i in 0..n {
        let neighbor_derivs: Vec<(usize, f64)> =
            adjacency[i].iter().map(|&j| (j, derivs[j])).collect();
        if let Some(p) = select_offer_target(&neighbor_derivs, derivs[i], options.strict_tol) {
            let delta = compute_offer(derivs[i], derivs[p], costs[i].lipschitz(), costs[p].lipschitz())?;
            if delta > 0.0 {
                offers.push(Offer { from: i, to: p, delta });
            }
        }
    }

    // Accept phase: each node accepts the largest offer it received.
    let mut incoming: Vec<Vec<Offer>> = vec![Vec::new(); n];
    for &offer in &offers {
        incoming[offer.to].push(offer);
    }
    let mut next = state.x().to_vec();
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for node_offers in &incoming {
        if let Some((winner, losers)) = accept_largest(node_offers) {
            next[winner.to] += winner.delta;
            accepted.push(winner);
            rejected.extend(losers);
        }
    }

    // Settle phase: every accepted offer is paid by its offerer.
    for offer in &accepted {
        next[offer.from] -= offer.delta;
    }

    let matched_edges = accepted.iter().map(|o| (o.from, o.to)).collect();
    let trace = RoundTrace {
        derivatives: derivs,
        offers,
        accepted,
        rejected,
        matched_edges,
    };
    let next_state = AllocationState::at_round(next, state.total(), state.round() + 1)?;
    Ok((next_state, trace))
}

/// Replays a round from its trace using the compact per-edge update
/// `x_i -= (d_i - d_j) / (2 (L_i + L_j))` over the matched edges. Reproduces
/// [`round`]'s output bit for bit (incoming transfers are applied before the
/// outgoing one, mirroring the accept-then-settle order).
pub fn apply_compact_update(
    state: &AllocationState,
    trace: &RoundTrace,
    costs: &[Cost],
) -> Result<AllocationState> {
    let d = &trace.derivatives;
    let mut x = state.x().to_vec();
    for i in 0..x.len() {
        let incoming = trace.accepted.iter().filter(|o| o.to == i);
        let outgoing = trace.accepted.iter().filter(|o| o.from == i);
        for offer in incoming.chain(outgoing) {
            let j = if offer.to == i { offer.from } else { offer.to };
            let term =
                (d[i] - d[j]) / (2.0 * (costs[i].lipschitz() + costs[j].lipschitz()));
            x[i] -= term;
        }
    }
    AllocationState::at_round(x, state.total(), state.round() + 1)
}

/// Stopping rule for a run: a hard round budget plus optional
/// derivative-spread and objective-gap thresholds (checked before each
/// round, so the returned state is the first one meeting a threshold).
#[derive(Clone, Copy, Debug)]
pub struct StopRule {
    pub max_rounds: usize,
    pub spread_below: Option<f64>,
    pub gap_below: Option<GapTarget>,
}

/// Stop when `F(x) - f_star < epsilon`. Requires costs with value functions.
#[derive(Clone, Copy, Debug)]
pub struct GapTarget {
    pub epsilon: f64,
    pub f_star: f64,
}

impl StopRule {
    pub fn max_rounds(max_rounds: usize) -> Self {
        StopRule {
            max_rounds,
            spread_below: None,
            gap_below: None,
        }
    }

    pub fn with_spread(mut self, spread_below: f64) -> Self {
        self.spread_below = Some(spread_below);
        self
    }

    pub fn with_gap(mut self, epsilon: f64, f_star: f64) -> Self {
        self.gap_below = Some(GapTarget { epsilon, f_star });
        self
    }
}

/// Streaming driver: applies rounds until the stop rule fires, invoking
/// `on_round(before, trace, after)` after every executed round. Returns the
/// final state. Memory stays O(n) regardless of run length.
pub fn run_with<F>(
    costs: &[Cost],
    schedule: &GraphSchedule,
    state0: AllocationState,
    stop: &StopRule,
    mut on_round: F,
) -> Result<AllocationState>
where
    F: FnMut(&AllocationState, &RoundTrace, &AllocationState),
{
    if costs.len() != state0.len() || schedule.vertex_count() != state0.len() {
        return Err(Error::InvalidParameter(format!(
            "size mismatch: {} allocations, {} costs, {} vertices",
            state0.len(),
            costs.len(),
            schedule.vertex_count()
        )));
    }
    let start_round = state0.round();
    let mut state = state0;
    loop {
        let derivs = derivatives(costs, state.x(), state.round())?;
        if let Some(tol) = stop.spread_below {
            if spread(&derivs) < tol {
                break;
            }
        }
        if let Some(target) = stop.gap_below {
            let f = total_cost(costs, state.x()).ok_or_else(|| {
                Error::InvalidParameter(
                    "gap-based stopping requires costs with value functions".into(),
                )
            })?;
            if f - target.f_star < target.epsilon {
                break;
            }
        }
        if state.round() - start_round >= stop.max_rounds {
            break;
        }
        let graph = schedule.graph_at(state.round());
        let (next, trace) = round(&state, graph.as_ref(), costs)?;
        on_round(&state, &trace, &next);
        state = next;
    }
    Ok(state)
}

/// Runs the protocol and records every state and trace.
pub fn run(
    costs: &[Cost],
    schedule: &GraphSchedule,
    state0: AllocationState,
    stop: &StopRule,
) -> Result<Trajectory> {
    let mut states = vec![state0.clone()];
    let mut traces = Vec::new();
    let final_state = run_with(costs, schedule, state0, stop, |_, trace, after| {
        traces.push(trace.clone());
        states.push(after.clone());
    })?;
    debug_assert_eq!(states.last().unwrap().x(), final_state.x());
    Ok(Trajectory { states, traces })
}

/// Symmetric nonnegative weights for the center-free baseline.
#[derive(Clone, Debug)]
pub enum CenterFreeWeights {
    /// One weight for every present edge.
    Uniform(f64),
    /// Full `n x n` matrix; must be symmetric with nonnegative entries.
    Matrix(Vec<Vec<f64>>),
}

/// Safe uniform weight `1 / (2 L_max (max_degree + 1))` for the current
/// graph.
pub fn default_center_free_weight(costs: &[Cost], edges: &Graph) -> f64 {
    let l_max = costs.iter().map(Cost::lipschitz).fold(0.0_f64, f64::max);
    let degree = edges.max_degree();
    1.0 / (2.0 * l_max.max(f64::MIN_POSITIVE) * (degree as f64 + 1.0))
}

/// One step of the classic center-free update
/// `x_i -= sum_j w_ij (d_i - d_j)` over present edges.
pub fn center_free_round(
    state: &AllocationState,
    edges: &Graph,
    costs: &[Cost],
    weights: &CenterFreeWeights,
) -> Result<AllocationState> {
    let n = state.len();
    if costs.len() != n || edges.vertex_count() != n {
        return Err(Error::InvalidParameter(format!(
            "size mismatch: {n} allocations, {} costs, {} vertices",
            costs.len(),
            edges.vertex_count()
        )));
    }
    let weight_at: Box<dyn Fn(usize, usize) -> f64> = match weights {
        CenterFreeWeights::Uniform(w) => {
            if !(*w >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "center-free weight {w} must be nonnegative"
                )));
            }
            let w = *w;
            Box::new(move |_, _| w)
        }
        CenterFreeWeights::Matrix(m) => {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidParameter(
                    "center-free weight matrix must be n x n".into(),
                ));
            }
            for (i, row) in m.iter().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    if !(w >= 0.0) {
                        return Err(Error::InvalidParameter(format!(
                            "center-free weight w[{i}][{j}] = {w} must be nonnegative"
                        )));
                    }
                    if w != m[j][i] {
                        return Err(Error::InvalidParameter(format!(
                            "asymmetric center-free weights break conservation: \
                             w[{i}][{j}] = {w} but w[{j}][{i}] = {}",
                            m[j][i]
                        )));
                    }
                }
            }
            let m = m.clone();
            Box::new(move |i, j| m[i][j])
        }
    };

    let derivs = derivatives(costs, state.x(), state.round())?;
    let mut next = state.x().to_vec();
    let adjacency = edges.adjacency();
    for i in 0..n {
        let mut flow = 0.0;
        for &j in &adjacency[i] {
            flow += weight_at(i, j) * (derivs[i] - derivs[j]);
        }
        next[i] -= flow;
    }
    AllocationState::at_round(next, state.total(), state.round() + 1)
}
