//! Random Tanner graph realizations.
//!
//! Sampling places one socket per edge end on each side and connects
//! variable nodes to random free check sockets, highest degrees first,
//! steering around 4-cycles where possible. What is left is repaired with
//! degree-preserving edge swaps: first parallel edges, then 4-cycles by
//! simulated annealing. The plain configuration model (uniform socket
//! permutation) is available through [`sample_graph_tuned`].
//!
//! Some short, dense profiles cannot be realized without 4-cycles at all;
//! [`GirthPolicy`] decides whether that is an error or the graph with the
//! fewest cycles found is used.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::profile::NodeDegreeSpec;
use crate::seed;
use crate::{Error, Result};

/// Swap proposals allowed per edge by [`sample_graph`]. Dense short
/// profiles need thousands per edge before the last 4-cycle goes.
pub const SWAP_BUDGET_PER_EDGE: usize = 10_000;

/// Swap proposals per edge of the best-effort sampling used inside the
/// Monte-Carlo engines, where a graph is drawn per trajectory or frame.
pub const ENSEMBLE_BUDGET_PER_EDGE: usize = 100;

const ANNEAL_T_START: f64 = 0.3;
const ANNEAL_T_END: f64 = 0.02;
/// Share of annealing proposals that pick the partner edge by target check.
const TARGETED_SHARE: f64 = 0.5;

/// Bipartite variable/check node graph (the columns/rows of H).
///
/// Edges are sorted by variable node, then check node; edge ids index the
/// message arrays of the decoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TannerGraph {
    n_vn: usize,
    n_cn: usize,
    edge_vn: Vec<u32>,
    edge_cn: Vec<u32>,
    vn_start: Vec<usize>,
    cn_start: Vec<usize>,
    cn_edges: Vec<u32>,
    seed: u64,
}

impl TannerGraph {
    /// Builds a graph from an explicit edge list. Parallel edges and
    /// out-of-range indices are rejected.
    pub fn from_edges(
        n_vn: usize,
        n_cn: usize,
        edges: &[(usize, usize)],
        seed: u64,
    ) -> Result<Self> {
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "parallel edge between variable node {} and check node {}",
                w[0].0, w[0].1
            )));
        }
        if let Some(&(v, c)) = sorted.iter().find(|&&(v, c)| v >= n_vn || c >= n_cn) {
            return Err(Error::InvalidArgument(format!(
                "edge ({v}, {c}) outside a {n_vn} x {n_cn} graph"
            )));
        }
        let edge_vn: Vec<u32> = sorted.iter().map(|&(v, _)| v as u32).collect();
        let edge_cn: Vec<u32> = sorted.iter().map(|&(_, c)| c as u32).collect();

        let mut vn_start = vec![0usize; n_vn + 1];
        for &v in &edge_vn {
            vn_start[v as usize + 1] += 1;
        }
        let mut cn_start = vec![0usize; n_cn + 1];
        for &c in &edge_cn {
            cn_start[c as usize + 1] += 1;
        }
        for i in 0..n_vn {
            vn_start[i + 1] += vn_start[i];
        }
        for i in 0..n_cn {
            cn_start[i + 1] += cn_start[i];
        }
        let mut fill = cn_start.clone();
        let mut cn_edges = vec![0u32; edge_cn.len()];
        for (e, &c) in edge_cn.iter().enumerate() {
            cn_edges[fill[c as usize]] = e as u32;
            fill[c as usize] += 1;
        }
        Ok(TannerGraph {
            n_vn,
            n_cn,
            edge_vn,
            edge_cn,
            vn_start,
            cn_start,
            cn_edges,
            seed,
        })
    }

    pub fn num_vns(&self) -> usize {
        self.n_vn
    }

    pub fn num_cns(&self) -> usize {
        self.n_cn
    }

    pub fn num_edges(&self) -> usize {
        self.edge_vn.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(vn, cn)` endpoints of edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        (self.edge_vn[e] as usize, self.edge_cn[e] as usize)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edge_vn
            .iter()
            .zip(&self.edge_cn)
            .map(|(&v, &c)| (v as usize, c as usize))
    }

    /// Edge ids of variable node `v` (a contiguous range).
    pub fn vn_edge_range(&self, v: usize) -> std::ops::Range<usize> {
        self.vn_start[v]..self.vn_start[v + 1]
    }

    /// Edge ids of check node `c`.
    pub fn cn_edge_ids(&self, c: usize) -> &[u32] {
        &self.cn_edges[self.cn_start[c]..self.cn_start[c + 1]]
    }

    pub fn vn_degree(&self, v: usize) -> usize {
        self.vn_start[v + 1] - self.vn_start[v]
    }

    pub fn cn_degree(&self, c: usize) -> usize {
        self.cn_start[c + 1] - self.cn_start[c]
    }

    pub fn vn_neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.vn_edge_range(v).map(move |e| self.edge_cn[e] as usize)
    }

    pub fn cn_neighbors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.cn_edge_ids(c)
            .iter()
            .map(move |&e| self.edge_vn[e as usize] as usize)
    }

    /// True if `bits` (one byte per variable node, 0 or 1) satisfies every
    /// parity check.
    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        (0..self.n_cn).all(|c| self.cn_neighbors(c).fold(0u8, |acc, v| acc ^ bits[v]) == 0)
    }

    /// Whether the node degrees match `spec` exactly (as multisets).
    pub fn matches_spec(&self, spec: &NodeDegreeSpec) -> bool {
        let mut vn: Vec<u32> = (0..self.n_vn).map(|v| self.vn_degree(v) as u32).collect();
        let mut cn: Vec<u32> = (0..self.n_cn).map(|c| self.cn_degree(c) as u32).collect();
        vn.sort_unstable();
        cn.sort_unstable();
        vn == spec.vn_degrees() && cn == spec.cn_degrees()
    }

    /// Exports H in the alist text format (1-based indices, rows zero-padded).
    pub fn to_alist(&self) -> String {
        let vn_deg: Vec<usize> = (0..self.n_vn).map(|v| self.vn_degree(v)).collect();
        let cn_deg: Vec<usize> = (0..self.n_cn).map(|c| self.cn_degree(c)).collect();
        let max_v = vn_deg.iter().copied().max().unwrap_or(0);
        let max_c = cn_deg.iter().copied().max().unwrap_or(0);
        let mut out = String::new();
        let join = |it: &mut dyn Iterator<Item = usize>| {
            it.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(out, "{} {}", self.n_vn, self.n_cn);
        let _ = writeln!(out, "{max_v} {max_c}");
        let _ = writeln!(out, "{}", join(&mut vn_deg.iter().copied()));
        let _ = writeln!(out, "{}", join(&mut cn_deg.iter().copied()));
        for v in 0..self.n_vn {
            let mut row: Vec<usize> = self.vn_neighbors(v).map(|c| c + 1).collect();
            row.resize(max_v, 0);
            let _ = writeln!(out, "{}", join(&mut row.into_iter()));
        }
        for c in 0..self.n_cn {
            let mut row: Vec<usize> = self.cn_neighbors(c).map(|v| v + 1).collect();
            row.sort_unstable();
            row.resize(max_c, 0);
            let _ = writeln!(out, "{}", join(&mut row.into_iter()));
        }
        out
    }
}

/// Counts 4-cycles: for every pair of variable nodes sharing `s` check nodes,
/// `s choose 2`. Zero iff the girth exceeds 4.
pub fn count_4cycles(graph: &TannerGraph) -> usize {
    let adj = Adjacency::from_graph(graph);
    let mut overlap = vec![0u32; graph.num_vns()];
    let mut touched = Vec::new();
    (0..graph.num_vns())
        .map(|v| adj.cycles_at(v, |w| w > v, &mut overlap, &mut touched))
        .sum()
}

/// Draws a random graph for `spec` with no parallel edges and no 4-cycles.
/// Fails if the default budget of [`SWAP_BUDGET_PER_EDGE`] proposals per
/// edge runs out.
pub fn sample_graph(spec: &NodeDegreeSpec, seed: u64) -> Result<TannerGraph> {
    sample_graph_with_budget(spec, seed, SWAP_BUDGET_PER_EDGE * spec.edges)
}

pub fn sample_graph_with_budget(
    spec: &NodeDegreeSpec,
    seed: u64,
    budget: usize,
) -> Result<TannerGraph> {
    let out = sample_graph_best_effort(spec, seed, budget)?;
    if out.residual > 0 {
        return Err(Error::GraphConstruction(format!(
            "{} 4-cycles left after {budget} swap attempts",
            out.residual
        )));
    }
    Ok(out.graph)
}

/// Like [`sample_graph_with_budget`] but keeps the graph with the fewest
/// 4-cycles found when none is 4-cycle free. Only fails when no simple
/// graph was reached.
pub fn sample_graph_best_effort(
    spec: &NodeDegreeSpec,
    seed: u64,
    budget: usize,
) -> Result<Girth4Outcome> {
    sample_graph_tuned(spec, seed, budget, AnnealSchedule::default(), true)
}

/// How the simulation engines draw their graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GirthPolicy {
    /// Swap proposals per edge.
    pub budget_per_edge: usize,
    /// Fail instead of keeping a graph with 4-cycles left.
    pub strict: bool,
}

impl Default for GirthPolicy {
    fn default() -> Self {
        GirthPolicy {
            budget_per_edge: ENSEMBLE_BUDGET_PER_EDGE,
            strict: false,
        }
    }
}

impl GirthPolicy {
    pub fn sample(&self, spec: &NodeDegreeSpec, seed: u64) -> Result<Girth4Outcome> {
        let budget = self.budget_per_edge * spec.edges;
        if self.strict {
            let graph = sample_graph_with_budget(spec, seed, budget)?;
            Ok(Girth4Outcome { graph, residual: 0 })
        } else {
            sample_graph_best_effort(spec, seed, budget)
        }
    }
}

/// Temperatures of the 4-cycle annealing, first and last proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t_start: ANNEAL_T_START,
            t_end: ANNEAL_T_END,
        }
    }
}

/// Sampler with every knob exposed. With `greedy` set the initial graph is
/// built node by node, highest degrees first, avoiding 4-cycles where it
/// can; otherwise sockets are paired by a uniform permutation.
#[doc(hidden)]
pub fn sample_graph_tuned(
    spec: &NodeDegreeSpec,
    seed: u64,
    budget: usize,
    schedule: AnnealSchedule,
    greedy: bool,
) -> Result<Girth4Outcome> {
    spec.check()?;
    let mut rng = seed::rng(seed, &[seed::TAG_GRAPH]);
    let vn_deg = spec.vn_degrees();
    let cn_deg = spec.cn_degrees();
    let edges = if greedy {
        greedy_edges(&vn_deg, &cn_deg, &mut rng)
    } else {
        permuted_edges(&vn_deg, &cn_deg, &mut rng)
    };
    let mut adj = Adjacency::new(spec.n, spec.num_checks(), edges);

    let mut attempts = 0usize;
    loop {
        let parallel = adj.parallel_edges();
        let Some(&e1) = parallel.first() else { break };
        if attempts >= budget {
            return Err(Error::GraphConstruction(format!(
                "{} parallel edges left after {budget} swap attempts",
                parallel.len()
            )));
        }
        attempts += 1;
        let e2 = rng.random_range(0..adj.edges.len());
        if adj.swap_is_simple(e1, e2) {
            adj.swap(e1, e2);
        }
    }

    let remaining = budget.saturating_sub(attempts);
    let residual = adj.remove_4cycles(&mut rng, remaining, schedule);
    Ok(Girth4Outcome {
        graph: adj.into_graph(seed)?,
        residual,
    })
}

fn sockets(degrees: &[u32]) -> Vec<u32> {
    degrees
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i as u32, d as usize))
        .collect()
}

/// Configuration model: a uniform permutation pairs the sockets.
fn permuted_edges(vn_deg: &[u32], cn_deg: &[u32], rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let mut cn_sockets = sockets(cn_deg);
    cn_sockets.shuffle(rng);
    sockets(vn_deg).into_iter().zip(cn_sockets).collect()
}

/// Random picks for a free check socket before falling back to a scan.
const GREEDY_TRIES: usize = 32;

/// Connects variable nodes in decreasing degree order (random among equal
/// degrees). Each edge goes to a random free check socket that neither
/// repeats a neighbor nor closes a 4-cycle with the edges placed so far;
/// when no such socket exists the constraint is dropped and left to the
/// swap repair.
fn greedy_edges(vn_deg: &[u32], cn_deg: &[u32], rng: &mut ChaCha8Rng) -> Vec<(u32, u32)> {
    let mut order: Vec<usize> = (0..vn_deg.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&v| std::cmp::Reverse(vn_deg[v]));

    let mut free = sockets(cn_deg);
    let mut cn_adj: Vec<Vec<u32>> = vec![Vec::new(); cn_deg.len()];
    let mut mark = vec![0u32; vn_deg.len()];
    let mut edges = Vec::with_capacity(free.len());
    let mut chosen: Vec<u32> = Vec::new();

    for (stamp, &v) in order.iter().enumerate() {
        let stamp = stamp as u32 + 1;
        chosen.clear();
        for _ in 0..vn_deg[v] {
            let ok = |c: u32, chosen: &[u32], mark: &[u32]| {
                !chosen.contains(&c)
                    && cn_adj[c as usize]
                        .iter()
                        .all(|&w| mark[w as usize] != stamp)
            };
            let pick = (0..GREEDY_TRIES)
                .map(|_| rng.random_range(0..free.len()))
                .find(|&i| ok(free[i], &chosen, &mark))
                .or_else(|| (0..free.len()).find(|&i| ok(free[i], &chosen, &mark)))
                .or_else(|| (0..free.len()).find(|&i| !chosen.contains(&free[i])))
                .unwrap_or_else(|| rng.random_range(0..free.len()));
            let c = free.swap_remove(pick);
            for &w in &cn_adj[c as usize] {
                mark[w as usize] = stamp;
            }
            chosen.push(c);
        }
        for &c in &chosen {
            cn_adj[c as usize].push(v as u32);
            edges.push((v as u32, c));
        }
    }
    edges
}

/// Lower bound on the 4-cycle count of every simple graph realizing `spec`.
///
/// Take the `k` variable nodes of degree at least `t`, with `S` edges in
/// total. Spread over `M` checks as evenly as possible those edges still
/// produce `P = sum_c C(r_c, 2)` (node pair, shared check) incidences. With
/// only `C(k, 2)` pairs available, `P > C(k, 2)` forces pairs sharing two or
/// more checks, and spreading `P` evenly over the pairs gives the least
/// number of 4-cycles. The best threshold `t` is returned; 0 means the
/// counting argument proves nothing.
pub fn forced_4cycles(spec: &NodeDegreeSpec) -> usize {
    let m = spec.num_checks();
    if m == 0 {
        return 0;
    }
    let mut best = 0;
    for &t in spec.vn_counts.keys() {
        let (k, s) = spec
            .vn_counts
            .range(t..)
            .fold((0usize, 0usize), |(k, s), (&d, &n)| {
                (k + n, s + d as usize * n)
            });
        let incidences = spread_pairs(s, m);
        let pairs = k * k.saturating_sub(1) / 2;
        if pairs > 0 && incidences > pairs {
            best = best.max(spread_pairs(incidences, pairs));
        }
    }
    best
}

/// `min sum C(x_i, 2)` over `cells` non-negative integers summing to `total`.
fn spread_pairs(total: usize, cells: usize) -> usize {
    let (q, r) = (total / cells, total % cells);
    r * (q + 1) * q / 2 + (cells - r) * q * q.saturating_sub(1) / 2
}

/// Result of a 4-cycle removal pass.
#[derive(Debug, Clone)]
pub struct Girth4Outcome {
    pub graph: TannerGraph,
    /// 4-cycles left when the budget ran out (0 on success).
    pub residual: usize,
}

/// Randomized degree-preserving swaps until no 4-cycle remains or `budget`
/// swap proposals are spent. Returns the best graph seen and its 4-cycle
/// count.
pub fn remove_girth4(graph: &TannerGraph, seed: u64, budget: usize) -> Girth4Outcome {
    let edges = graph.edges().map(|(v, c)| (v as u32, c as u32)).collect();
    let mut adj = Adjacency::new(graph.num_vns(), graph.num_cns(), edges);
    let mut rng = seed::rng(seed, &[seed::TAG_GIRTH]);
    let residual = adj.remove_4cycles(&mut rng, budget, AnnealSchedule::default());
    let graph = adj
        .into_graph(graph.seed())
        .expect("swaps never create parallel edges");
    Girth4Outcome { graph, residual }
}

/// Mutable adjacency used while repairing a graph. Parallel edges are allowed
/// (and show up as repeated entries).
struct Adjacency {
    n_vn: usize,
    n_cn: usize,
    edges: Vec<(u32, u32)>,
    vn_adj: Vec<Vec<u32>>,
    cn_adj: Vec<Vec<u32>>,
    /// Edge id by endpoints; meaningful once the graph is simple.
    edge_pos: HashMap<(u32, u32), usize>,
}

impl Adjacency {
    fn new(n_vn: usize, n_cn: usize, edges: Vec<(u32, u32)>) -> Self {
        let mut vn_adj = vec![Vec::new(); n_vn];
        let mut cn_adj = vec![Vec::new(); n_cn];
        for &(v, c) in &edges {
            vn_adj[v as usize].push(c);
            cn_adj[c as usize].push(v);
        }
        let edge_pos = edges
            .iter()
            .enumerate()
            .map(|(e, &pair)| (pair, e))
            .collect();
        Adjacency {
            n_vn,
            n_cn,
            edges,
            vn_adj,
            cn_adj,
            edge_pos,
        }
    }

    fn from_graph(graph: &TannerGraph) -> Self {
        let edges = graph.edges().map(|(v, c)| (v as u32, c as u32)).collect();
        Adjacency::new(graph.num_vns(), graph.num_cns(), edges)
    }

    fn into_graph(self, seed: u64) -> Result<TannerGraph> {
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(v, c)| (v as usize, c as usize))
            .collect();
        TannerGraph::from_edges(self.n_vn, self.n_cn, &edges, seed)
    }

    fn parallel_edges(&self) -> Vec<usize> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for (e, &pair) in self.edges.iter().enumerate() {
            if !seen.insert(pair) {
                out.push(e);
            }
        }
        out
    }

    /// Exchanging check endpoints of `e1` and `e2` creates no parallel edge.
    fn swap_is_simple(&self, e1: usize, e2: usize) -> bool {
        let (u, c1) = self.edges[e1];
        let (v, c2) = self.edges[e2];
        u != v
            && c1 != c2
            && !self.vn_adj[u as usize].contains(&c2)
            && !self.vn_adj[v as usize].contains(&c1)
    }

    fn swap(&mut self, e1: usize, e2: usize) {
        let (u, c1) = self.edges[e1];
        let (v, c2) = self.edges[e2];
        replace_one(&mut self.vn_adj[u as usize], c1, c2);
        replace_one(&mut self.vn_adj[v as usize], c2, c1);
        replace_one(&mut self.cn_adj[c1 as usize], u, v);
        replace_one(&mut self.cn_adj[c2 as usize], v, u);
        for (key, e) in [((u, c1), e1), ((v, c2), e2)] {
            if self.edge_pos.get(&key) == Some(&e) {
                self.edge_pos.remove(&key);
            }
        }
        self.edges[e1] = (u, c2);
        self.edges[e2] = (v, c1);
        self.edge_pos.insert((u, c2), e1);
        self.edge_pos.insert((v, c1), e2);
    }

    /// 4-cycles between `v` and the variable nodes accepted by `keep`.
    fn cycles_at(
        &self,
        v: usize,
        keep: impl Fn(usize) -> bool,
        overlap: &mut [u32],
        touched: &mut Vec<usize>,
    ) -> usize {
        for &c in &self.vn_adj[v] {
            for &w in &self.cn_adj[c as usize] {
                let w = w as usize;
                if w != v && keep(w) {
                    if overlap[w] == 0 {
                        touched.push(w);
                    }
                    overlap[w] += 1;
                }
            }
        }
        let mut total = 0;
        for &w in touched.iter() {
            let s = overlap[w] as usize;
            total += s * (s - 1) / 2;
            overlap[w] = 0;
        }
        touched.clear();
        total
    }

    /// 4-cycles through at least one of `u`, `v`.
    fn local_cycles(
        &self,
        u: usize,
        v: usize,
        overlap: &mut [u32],
        touched: &mut Vec<usize>,
    ) -> usize {
        let at_u = self.cycles_at(u, |_| true, overlap, touched);
        let at_v = self.cycles_at(v, |w| w != u, overlap, touched);
        at_u + at_v
    }

    fn total_cycles(&self, overlap: &mut [u32], touched: &mut Vec<usize>) -> usize {
        (0..self.n_vn)
            .map(|v| self.cycles_at(v, |w| w > v, overlap, touched))
            .sum()
    }

    /// `e` lies on at least one 4-cycle.
    fn on_cycle(&self, e: usize, mark: &mut [u32], stamp: &mut u32) -> bool {
        let (u, c1) = self.edges[e];
        *stamp += 1;
        for &w in &self.cn_adj[c1 as usize] {
            mark[w as usize] = *stamp;
        }
        self.vn_adj[u as usize]
            .iter()
            .filter(|&&c| c != c1)
            .any(|&c| {
                self.cn_adj[c as usize]
                    .iter()
                    .any(|&w| w != u && mark[w as usize] == *stamp)
            })
    }

    /// A partner edge whose check node would take the variable node of `e1`
    /// without closing a 4-cycle at it, or `None` if there is no such check.
    fn targeted_partner(
        &self,
        e1: usize,
        rng: &mut ChaCha8Rng,
        mark: &mut [u32],
        stamp: &mut u32,
    ) -> Option<usize> {
        let (u, c1) = self.edges[e1];
        let u = u as usize;
        // mark every variable node two hops from u, not counting c1
        *stamp += 1;
        for &c in self.vn_adj[u].iter().filter(|&&c| c != c1) {
            for &w in &self.cn_adj[c as usize] {
                mark[w as usize] = *stamp;
            }
        }
        let n_cn = self.cn_adj.len();
        let start = rng.random_range(0..n_cn);
        let c2 = (0..n_cn).map(|k| (start + k) % n_cn).find(|&c| {
            c != c1 as usize
                && !self.cn_adj[c].is_empty()
                && self.cn_adj[c].iter().all(|&w| mark[w as usize] != *stamp)
        })?;
        let v = self.cn_adj[c2][rng.random_range(0..self.cn_adj[c2].len())];
        self.edge_index(v, c2 as u32)
    }

    fn edge_index(&self, v: u32, c: u32) -> Option<usize> {
        self.edge_pos.get(&(v, c)).copied()
    }

    /// Simulated annealing over degree-preserving swaps. The first endpoint
    /// of every proposal lies on a 4-cycle; uphill moves are accepted with
    /// probability `exp(-delta / t)` under a geometrically cooling `t`. The
    /// best state seen is kept. Returns the number of 4-cycles left.
    fn remove_4cycles(
        &mut self,
        rng: &mut ChaCha8Rng,
        budget: usize,
        schedule: AnnealSchedule,
    ) -> usize {
        let mut overlap = vec![0u32; self.n_vn];
        let mut touched = Vec::new();
        let mut mark = vec![0u32; self.n_vn];
        let mut stamp = 0u32;
        self.edge_pos = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &pair)| (pair, e))
            .collect();
        let mut total = self.total_cycles(&mut overlap, &mut touched);
        let mut best = (total, self.edges.clone());
        let cooling = (schedule.t_end / schedule.t_start).powf(1.0 / budget.max(1) as f64);
        let mut temp = schedule.t_start;
        // edges on a cycle, refreshed every `edges.len()` proposals; stale
        // entries are dropped when drawn
        let mut bad: Vec<usize> = Vec::new();
        let mut since_refresh = usize::MAX;
        let mut proposals = 0usize;
        while total > 0 && proposals < budget {
            if bad.is_empty() || since_refresh >= self.edges.len() {
                bad = (0..self.edges.len())
                    .filter(|&e| self.on_cycle(e, &mut mark, &mut stamp))
                    .collect();
                since_refresh = 0;
            }
            let k = rng.random_range(0..bad.len());
            let e1 = bad[k];
            if !self.on_cycle(e1, &mut mark, &mut stamp) {
                bad.swap_remove(k);
                continue;
            }
            proposals += 1;
            since_refresh += 1;
            temp *= cooling;
            let e2 = if rng.random::<f64>() < TARGETED_SHARE {
                match self.targeted_partner(e1, rng, &mut mark, &mut stamp) {
                    Some(e2) => e2,
                    None => continue,
                }
            } else {
                rng.random_range(0..self.edges.len())
            };
            if !self.swap_is_simple(e1, e2) {
                continue;
            }
            let u = self.edges[e1].0 as usize;
            let v = self.edges[e2].0 as usize;
            let before = self.local_cycles(u, v, &mut overlap, &mut touched);
            self.swap(e1, e2);
            let after = self.local_cycles(u, v, &mut overlap, &mut touched);
            if after > before && rng.random::<f64>() >= (-((after - before) as f64) / temp).exp() {
                self.swap(e1, e2);
                continue;
            }
            total = total + after - before;
            if total < best.0 {
                best = (total, self.edges.clone());
            }
        }
        if total > best.0 {
            self.restore(best.1);
            total = best.0;
        }
        total
    }

    fn restore(&mut self, edges: Vec<(u32, u32)>) {
        *self = Adjacency::new(self.n_vn, self.n_cn, edges);
    }
}

fn replace_one(list: &mut [u32], from: u32, to: u32) {
    if let Some(slot) = list.iter_mut().find(|x| **x == from) {
        *slot = to;
    }
}
