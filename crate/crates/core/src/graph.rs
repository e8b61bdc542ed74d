//! Undirected graphs, generators, round-indexed schedules, and the
//! B-connectivity check (joint connectivity of every aligned window of
//! rounds).

use std::borrow::Cow;
use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A simple undirected graph on vertices `0..n`.
///
/// Edges are stored normalized `(i, j)` with `i < j`, sorted; construction
/// rejects self-loops, duplicates, and out-of-range endpoints. Immutable
/// after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut normalized: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Graph(format!("self-loop at vertex {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::Graph(format!(
                    "edge ({a}, {b}) out of range for n={n}"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        if normalized.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Graph("duplicate edge".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &normalized {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            edges: normalized,
            adjacency,
        })
    }

    /// Path 0 - 1 - ... - (n-1).
    pub fn line(n: usize) -> Result<Self> {
        Self::require_at_least(n, 2, "line")?;
        Self::new(n, (0..n - 1).map(|i| (i, i + 1)))
    }

    /// Cycle on `n` vertices (a single edge for n = 2).
    pub fn ring(n: usize) -> Result<Self> {
        Self::require_at_least(n, 2, "ring")?;
        if n == 2 {
            return Self::new(2, [(0, 1)]);
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    /// Vertex 0 connected to every other vertex.
    pub fn star(n: usize) -> Result<Self> {
        Self::require_at_least(n, 2, "star")?;
        Self::new(n, (1..n).map(|i| (0, i)))
    }

    /// All n(n-1)/2 edges.
    pub fn complete(n: usize) -> Result<Self> {
        Self::require_at_least(n, 2, "complete")?;
        Self::new(
            n,
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))),
        )
    }

    /// Clique on the first `ceil(n/2)` vertices joined by one bridge edge to
    /// a path on the remaining `floor(n/2)`.
    pub fn lollipop(n: usize) -> Result<Self> {
        Self::require_at_least(n, 3, "lollipop")?;
        let clique = n.div_ceil(2);
        let mut edges = Vec::new();
        for i in 0..clique {
            for j in i + 1..clique {
                edges.push((i, j));
            }
        }
        edges.push((clique - 1, clique));
        for i in clique..n - 1 {
            edges.push((i, i + 1));
        }
        Self::new(n, edges)
    }

    /// Erdos-Renyi graph: each pair present independently with probability
    /// `p`, drawn from a ChaCha8 stream seeded with `seed`.
    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Self> {
        Self::require_at_least(n, 2, "erdos_renyi")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Graph(format!("edge probability {p} not in [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)
    }

    fn require_at_least(n: usize, min: usize, kind: &str) -> Result<()> {
        if n < min {
            return Err(Error::Graph(format!("{kind} graph requires n >= {min}, got {n}")));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `v`, sorted ascending.
    pub fn neighbors(&self, v: usize) -> Result<&[usize]> {
        self.adjacency
            .get(v)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Graph(format!("vertex {v} out of range for n={}", self.n)))
    }

    /// Per-vertex adjacency lists, sorted ascending.
    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Single connected component reachable from vertex 0 covering all of
    /// `0..n`. The empty graph on one vertex counts as connected.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// Union of edge sets over graphs on the same vertex set.
    pub fn union_of<'a>(n: usize, graphs: impl IntoIterator<Item = &'a Graph>) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for g in graphs {
            if g.n != n {
                return Err(Error::Graph(format!(
                    "union over mismatched vertex counts {} and {n}",
                    g.n
                )));
            }
            edges.extend_from_slice(&g.edges);
        }
        edges.sort_unstable();
        edges.dedup();
        Self::new(n, edges)
    }
}

/// Round-indexed source of edge sets with a declared connectivity window.
#[derive(Clone, Debug)]
pub struct GraphSchedule {
    n: usize,
    window: usize,
    source: ScheduleSource,
}

#[derive(Clone, Debug)]
enum ScheduleSource {
    Static(Graph),
    Periodic(Vec<Graph>),
    RandomEachRound { p: f64, seed: u64 },
}

impl GraphSchedule {
    /// Same graph every round.
    pub fn fixed(graph: Graph, window: usize) -> Result<Self> {
        Self::check_window(window)?;
        Ok(GraphSchedule {
            n: graph.vertex_count(),
            window,
            source: ScheduleSource::Static(graph),
        })
    }

    /// Round `k` receives `graphs[k % len]`. The period does not have to
    /// divide the window, but when it does every aligned window sees the
    /// whole period, which makes the connectivity check a single union.
    pub fn periodic(graphs: Vec<Graph>, window: usize) -> Result<Self> {
        Self::check_window(window)?;
        let first = graphs
            .first()
            .ok_or_else(|| Error::Graph("periodic schedule requires a nonempty list".into()))?;
        let n = first.vertex_count();
        if graphs.iter().any(|g| g.vertex_count() != n) {
            return Err(Error::Graph(
                "periodic schedule graphs must share the vertex count".into(),
            ));
        }
        Ok(GraphSchedule {
            n,
            window,
            source: ScheduleSource::Periodic(graphs),
        })
    }

    /// A fresh Erdos-Renyi graph every round; round `k` uses stream `k` of a
    /// ChaCha8 generator seeded with `seed`, so the schedule is a pure
    /// function of `(seed, k)`.
    pub fn random_each_round(n: usize, p: f64, seed: u64, window: usize) -> Result<Self> {
        Self::check_window(window)?;
        if n < 2 {
            return Err(Error::Graph(format!("schedule requires n >= 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Graph(format!("edge probability {p} not in [0, 1]")));
        }
        Ok(GraphSchedule {
            n,
            window,
            source: ScheduleSource::RandomEachRound { p, seed },
        })
    }

    fn check_window(window: usize) -> Result<()> {
        if window == 0 {
            return Err(Error::Graph("connectivity window must be >= 1".into()));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// Declared connectivity window length.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Edge set for round `k`. Deterministic: repeated calls at the same
    /// round yield identical graphs.
    pub fn graph_at(&self, k: usize) -> Cow<'_, Graph> {
        match &self.source {
            ScheduleSource::Static(g) => Cow::Borrowed(g),
            ScheduleSource::Periodic(graphs) => Cow::Borrowed(&graphs[k % graphs.len()]),
            ScheduleSource::RandomEachRound { p, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                let mut edges = Vec::new();
                for i in 0..self.n {
                    for j in i + 1..self.n {
                        if rng.random::<f64>() < *p {
                            edges.push((i, j));
                        }
                    }
                }
                Cow::Owned(Graph::new(self.n, edges).expect("generated edges are valid"))
            }
        }
    }

    fn period(&self) -> Option<usize> {
        match &self.source {
            ScheduleSource::Static(_) => Some(1),
            ScheduleSource::Periodic(graphs) => Some(graphs.len()),
            ScheduleSource::RandomEachRound { .. } => None,
        }
    }
}

/// Outcome of a B-connectivity check over a finite horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub windows_checked: usize,
    pub first_failing_window: Option<usize>,
}

impl ConnectivityReport {
    pub fn is_pass(&self) -> bool {
        self.first_failing_window.is_none()
    }
}

/// Checks that the union of edge sets over every aligned window
/// `[l * window, (l+1) * window)` fully contained in `0..horizon` is
/// connected. Returns the first failing window if any.
///
/// Periodic schedules repeat with period `p`, so only `p / gcd(p, window)`
/// distinct window phases exist; the check covers each phase once instead of
/// scanning the whole horizon.
pub fn check_b_connectivity(
    schedule: &GraphSchedule,
    window: usize,
    horizon: usize,
) -> Result<ConnectivityReport> {
    if window == 0 {
        return Err(Error::Graph("connectivity window must be >= 1".into()));
    }
    if horizon < window {
        return Err(Error::Graph(format!(
            "horizon {horizon} shorter than window {window}"
        )));
    }
    let total_windows = horizon / window;
    let windows_to_check = match schedule.period() {
        Some(p) => total_windows.min(p / gcd(p, window)),
        None => total_windows,
    };
    for l in 0..windows_to_check {
        let start = l * window;
        let graphs: Vec<Graph> = (start..start + window)
            .map(|k| schedule.graph_at(k).into_owned())
            .collect();
        let union = Graph::union_of(schedule.vertex_count(), graphs.iter())?;
        if !union.is_connected() {
            return Ok(ConnectivityReport {
                windows_checked: l + 1,
                first_failing_window: Some(l),
            });
        }
    }
    Ok(ConnectivityReport {
        windows_checked: windows_to_check,
        first_failing_window: None,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}
