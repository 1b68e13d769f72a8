//! Min-cost max-flow formulation of the stock-constrained matching.
//!
//! The network has a source, one node per user, one node per item and a
//! sink. Source -> user edges carry the list length, item -> sink edges the
//! stock volume, and every admissible user -> item pair gets a unit edge whose
//! cost is `100 - ceil(100 * s^N)`. Minimizing cost at maximum flow then
//! maximizes the sum of two-decimal, rounded-up normalized scores.
//!
//! [`min_cost_max_flow`] is a capacity-scaling successive shortest path
//! solver with node potentials.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use crate::constraints::StockVector;
use crate::data::InteractionDataset;
use crate::diffusion::{ScoreKind, ScoreMatrix};
use crate::error::{Error, Result};
use crate::matching::RecommendationMatrix;

/// Score resolution of edge costs: scores are rounded up to `1 / SCALE`.
pub const COST_SCALE: i64 = 100;

/// `ceil(100 * s)` clamped to `[0, 100]`.
///
/// Products within 1e-9 of an integer snap to it, so a score stored as the
/// nearest double to 0.07 quantizes to 7 rather than 8.
pub fn quantized_score(s: f64) -> i64 {
    let scaled = s * COST_SCALE as f64;
    let nearest = scaled.round();
    let q = if (scaled - nearest).abs() < 1e-9 {
        nearest
    } else {
        scaled.ceil()
    };
    (q as i64).clamp(0, COST_SCALE)
}

/// Edge cost of a user-item pair with normalized score `s`.
pub fn pair_cost(s: f64) -> i64 {
    COST_SCALE - quantized_score(s)
}

/// Sum of quantized scores over all picks of `r`.
pub fn quantized_total(r: &RecommendationMatrix, scores: &ScoreMatrix) -> i64 {
    r.lists()
        .iter()
        .enumerate()
        .flat_map(|(u, p)| p.iter().map(move |&j| quantized_score(scores.get(u, j))))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub cap: i64,
    pub cost: i64,
    pub flow: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct MatchingLayout {
    users: usize,
    items: usize,
    l: usize,
}

/// Directed graph with integer capacities and costs.
///
/// Edge `k` owns residual arcs `2k` (forward, residual `cap - flow`, cost
/// `cost`) and `2k + 1` (reverse, residual `flow`, cost `-cost`).
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    n_nodes: usize,
    source: usize,
    sink: usize,
    edges: Vec<Edge>,
    potentials: Vec<i64>,
    layout: Option<MatchingLayout>,
}

impl FlowNetwork {
    pub fn new(n_nodes: usize, source: usize, sink: usize) -> Self {
        FlowNetwork {
            n_nodes,
            source,
            sink,
            edges: Vec::new(),
            potentials: vec![0; n_nodes],
            layout: None,
        }
    }

    /// Appends an edge; structure is checked by [`validate`](Self::validate).
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> usize {
        self.edges.push(Edge {
            from,
            to,
            cap,
            cost,
            flow: 0,
        });
        self.edges.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    /// Node potentials left by the last solve (zero before).
    pub fn potentials(&self) -> &[i64] {
        &self.potentials
    }

    pub fn arc_count(&self) -> usize {
        self.edges.len() * 2
    }

    /// `(tail, head, residual, cost)` of residual arc `a`.
    pub fn arc(&self, a: usize) -> (usize, usize, i64, i64) {
        let e = &self.edges[a / 2];
        if a.is_multiple_of(2) {
            (e.from, e.to, e.cap - e.flow, e.cost)
        } else {
            (e.to, e.from, e.flow, -e.cost)
        }
    }

    /// `cost(a) + pi(tail) - pi(head)` under the stored potentials.
    pub fn reduced_cost(&self, a: usize) -> i64 {
        let (u, v, _, c) = self.arc(a);
        c + self.potentials[u] - self.potentials[v]
    }

    pub fn validate(&self) -> Result<()> {
        if self.source >= self.n_nodes || self.sink >= self.n_nodes {
            return Err(Error::Network(
                "source or sink outside the node range".into(),
            ));
        }
        if self.source == self.sink {
            return Err(Error::Network("source equals sink".into()));
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.from >= self.n_nodes || e.to >= self.n_nodes {
                return Err(Error::Network(format!(
                    "edge {k} ({} -> {}) dangles outside {} nodes",
                    e.from, e.to, self.n_nodes
                )));
            }
            if e.from == e.to {
                return Err(Error::Network(format!("edge {k} is a self-loop")));
            }
            if e.cap <= 0 {
                return Err(Error::Network(format!("edge {k} has capacity {}", e.cap)));
            }
            if e.cost < 0 {
                return Err(Error::Network(format!(
                    "edge {k} has negative cost {}",
                    e.cost
                )));
            }
            if e.flow < 0 || e.flow > e.cap {
                return Err(Error::Network(format!(
                    "edge {k} carries flow {} of {}",
                    e.flow, e.cap
                )));
            }
        }
        Ok(())
    }

    /// Net flow leaving the source.
    pub fn flow_value(&self) -> i64 {
        self.edges
            .iter()
            .map(|e| {
                if e.from == self.source {
                    e.flow
                } else if e.to == self.source {
                    -e.flow
                } else {
                    0
                }
            })
            .sum()
    }

    pub fn flow_cost(&self) -> i64 {
        self.edges.iter().map(|e| e.flow * e.cost).sum()
    }

    /// Edge-list dump: header `nodes edges source sink`, then `from to cap cost`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "{} {} {} {}",
            self.n_nodes,
            self.edges.len(),
            self.source,
            self.sink
        )?;
        for e in &self.edges {
            writeln!(out, "{} {} {} {}", e.from, e.to, e.cap, e.cost)?;
        }
        Ok(())
    }

    pub fn user_node(&self, i: usize) -> Option<usize> {
        self.layout.filter(|l| i < l.users).map(|_| 1 + i)
    }

    pub fn item_node(&self, j: usize) -> Option<usize> {
        self.layout.filter(|l| j < l.items).map(|l| 1 + l.users + j)
    }
}

/// Result of [`min_cost_max_flow`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSolution {
    pub value: i64,
    pub cost: i64,
    /// Flow on each edge, indexed like [`FlowNetwork::edges`].
    pub flows: Vec<i64>,
}

/// Builds the matching network from row-normalized (`theta = 1`) scores.
///
/// Node 0 is the source, users are `1..=m`, items `m+1..=m+n` and the sink is
/// `m+n+1`. Users without training interactions get no user -> item edges, and
/// items with zero stock get no edges at all; every other non-interacted pair
/// becomes a unit edge, zero-score pairs at the maximum cost of 100.
pub fn build_matching_network(
    scores: &ScoreMatrix,
    dataset: &InteractionDataset,
    l: usize,
    stocks: &StockVector,
) -> Result<FlowNetwork> {
    match scores.kind() {
        ScoreKind::Normalized { theta: 1.0 } => {}
        kind => {
            return Err(Error::Parameter(format!(
                "the flow network needs row-normalized scores (theta = 1), got {kind:?}"
            )))
        }
    }
    let (m, n) = (dataset.n_users(), dataset.n_items());
    if scores.n_users() != m || scores.n_items() != n || stocks.len() != n {
        return Err(Error::Parameter(
            "scores, dataset and stocks disagree on dimensions".into(),
        ));
    }
    if l == 0 {
        return Err(Error::Parameter("list length must be at least 1".into()));
    }
    (m as i64)
        .checked_mul(l as i64)
        .and_then(|slots| slots.checked_mul(COST_SCALE))
        .ok_or_else(|| Error::Network("m * l * 100 overflows the cost accumulator".into()))?;

    let sink = m + n + 1;
    let mut net = FlowNetwork::new(m + n + 2, 0, sink);
    net.layout = Some(MatchingLayout {
        users: m,
        items: n,
        l,
    });
    for i in 0..m {
        net.add_edge(0, 1 + i, l as i64, 0);
    }
    for (i, &deg) in dataset.user_degrees().iter().enumerate() {
        if deg == 0 {
            continue;
        }
        let row = scores.row(i);
        let mut pos = 0;
        for j in 0..n as u32 {
            let mut s = 0.0;
            while pos < row.len() && row[pos].0 < j {
                pos += 1;
            }
            if pos < row.len() && row[pos].0 == j {
                s = row[pos].1;
            }
            if stocks.get(j as usize) == 0 || dataset.contains(i, j) {
                continue;
            }
            net.add_edge(1 + i, 1 + m + j as usize, 1, pair_cost(s));
        }
    }
    for j in 0..n {
        let q = stocks.get(j);
        if q > 0 {
            net.add_edge(1 + m + j, sink, q as i64, 0);
        }
    }
    Ok(net)
}

/// Solves min-cost max-flow on `network`, storing edge flows and the final
/// node potentials in it.
///
/// Internally the source is given a supply equal to its outgoing capacity and
/// a bypass arc `source -> sink` priced above any simple path absorbs what the
/// real network cannot carry, so the min-cost flow of the extended problem is
/// a min-cost maximum flow of the original one.
pub fn min_cost_max_flow(network: &mut FlowNetwork) -> Result<FlowSolution> {
    network.validate()?;
    let mut solver = Solver::new(network)?;
    solver.run()?;

    for (k, e) in network.edges.iter_mut().enumerate() {
        e.flow = solver.res[2 * k + 1];
    }
    network.potentials = solver.pot.clone();
    Ok(FlowSolution {
        value: network.flow_value(),
        cost: network.flow_cost(),
        flows: network.edges.iter().map(|e| e.flow).collect(),
    })
}

const INF: i64 = i64::MAX / 4;

struct Solver {
    n: usize,
    /// CSR offsets into `adj`, indexed by tail node.
    head: Vec<usize>,
    adj: Vec<u32>,
    to: Vec<u32>,
    res: Vec<i64>,
    cost: Vec<i64>,
    pot: Vec<i64>,
    excess: Vec<i64>,
    dist: Vec<i64>,
    max_cap: i64,
    // blocking-flow scratch
    cursor: Vec<usize>,
    dead: Vec<bool>,
    mark: Vec<u32>,
    stamp: u32,
    path: Vec<u32>,
}

impl Solver {
    fn new(net: &FlowNetwork) -> Result<Self> {
        let n = net.n_nodes;
        let (s, t) = (net.source, net.sink);
        let overflow = || Error::Network("capacities or costs overflow 64-bit arithmetic".into());

        let mut out_s: i64 = 0;
        let mut in_t: i64 = 0;
        let mut max_cost: i64 = 0;
        let mut max_cap: i64 = 0;
        for e in &net.edges {
            if e.from == s {
                out_s = out_s.checked_add(e.cap).ok_or_else(overflow)?;
            }
            if e.to == t {
                in_t = in_t.checked_add(e.cap).ok_or_else(overflow)?;
            }
            max_cost = max_cost.max(e.cost);
            max_cap = max_cap.max(e.cap);
        }
        let supply = out_s.min(in_t);
        // any simple residual path costs less than this in absolute value
        let bypass_cost = (n as i64)
            .checked_mul(max_cost)
            .and_then(|c| c.checked_add(1))
            .ok_or_else(overflow)?;
        bypass_cost
            .checked_mul(supply.max(1))
            .and_then(|c| c.checked_mul(16))
            .ok_or_else(overflow)?;

        let arcs = 2 * net.edges.len() + 2;
        let mut to = Vec::with_capacity(arcs);
        let mut res = Vec::with_capacity(arcs);
        let mut cost = Vec::with_capacity(arcs);
        let mut tails = Vec::with_capacity(arcs);
        let edge_iter = net
            .edges
            .iter()
            .map(|e| (e.from, e.to, e.cap - e.flow, e.flow, e.cost))
            .chain(std::iter::once((s, t, supply, 0, bypass_cost)));
        let mut excess = vec![0i64; n];
        for (u, v, fwd, back, c) in edge_iter {
            tails.extend([u, v]);
            to.extend([v as u32, u as u32]);
            res.extend([fwd, back]);
            cost.extend([c, -c]);
            // pre-existing flow counts toward the imbalances
            excess[u] -= back;
            excess[v] += back;
        }
        excess[s] += supply;
        excess[t] -= supply;

        let mut head = vec![0usize; n + 1];
        for &u in &tails {
            head[u + 1] += 1;
        }
        for v in 0..n {
            head[v + 1] += head[v];
        }
        let mut fill = head.clone();
        let mut adj = vec![0u32; arcs];
        for (a, &u) in tails.iter().enumerate() {
            adj[fill[u]] = a as u32;
            fill[u] += 1;
        }

        Ok(Solver {
            n,
            head,
            adj,
            to,
            res,
            cost,
            pot: vec![0; n],
            excess,
            dist: vec![INF; n],
            max_cap: max_cap.max(supply),
            cursor: vec![0; n],
            dead: vec![false; n],
            mark: vec![0; n],
            stamp: 0,
            path: Vec::new(),
        })
    }

    fn tail(&self, a: usize) -> usize {
        self.to[a ^ 1] as usize
    }

    fn reduced(&self, a: usize, u: usize) -> i64 {
        self.cost[a] + self.pot[u] - self.pot[self.to[a] as usize]
    }

    fn run(&mut self) -> Result<()> {
        if self.excess.iter().all(|&x| x == 0) {
            return Ok(());
        }
        let mut delta: i64 = 1;
        while delta <= self.max_cap / 2 {
            delta *= 2;
        }
        loop {
            self.saturate_negative_arcs(delta);
            while self.has_excess(delta) && self.has_deficit(delta) {
                if !self.shortest_paths(delta) {
                    break;
                }
                self.push_admissible(delta);
            }
            if delta == 1 {
                break;
            }
            delta /= 2;
        }
        if self.excess.iter().any(|&x| x != 0) {
            return Err(Error::Network(
                "flow imbalance left after the unit phase".into(),
            ));
        }
        Ok(())
    }

    fn has_excess(&self, delta: i64) -> bool {
        self.excess.iter().any(|&x| x >= delta)
    }

    fn has_deficit(&self, delta: i64) -> bool {
        self.excess.iter().any(|&x| x <= -delta)
    }

    /// Restores nonnegative reduced costs on arcs entering the delta-residual graph.
    fn saturate_negative_arcs(&mut self, delta: i64) {
        for a in 0..self.res.len() {
            let r = self.res[a];
            if r < delta {
                continue;
            }
            let u = self.tail(a);
            if self.reduced(a, u) < 0 {
                let v = self.to[a] as usize;
                self.res[a] = 0;
                self.res[a ^ 1] += r;
                self.excess[u] -= r;
                self.excess[v] += r;
            }
        }
    }

    /// Dijkstra from all excess nodes over arcs with residual >= delta, stopping
    /// at the nearest deficit node. Potentials grow by `min(dist, bound)`, which
    /// keeps reduced costs nonnegative and zeroes them along shortest paths.
    fn shortest_paths(&mut self, delta: i64) -> bool {
        self.dist.fill(INF);
        let mut heap = BinaryHeap::new();
        for v in 0..self.n {
            if self.excess[v] >= delta {
                self.dist[v] = 0;
                heap.push(Reverse((0i64, v)));
            }
        }
        let mut bound = None;
        while let Some(Reverse((d, v))) = heap.pop() {
            if d > self.dist[v] {
                continue;
            }
            if self.excess[v] <= -delta {
                bound = Some(d);
                break;
            }
            for k in self.head[v]..self.head[v + 1] {
                let a = self.adj[k] as usize;
                if self.res[a] < delta {
                    continue;
                }
                let w = self.to[a] as usize;
                let rc = self.reduced(a, v);
                debug_assert!(rc >= 0, "negative reduced cost {rc} on arc {a}");
                let nd = d + rc;
                if nd < self.dist[w] {
                    self.dist[w] = nd;
                    heap.push(Reverse((nd, w)));
                }
            }
        }
        let Some(bound) = bound else {
            return false;
        };
        for v in 0..self.n {
            self.pot[v] += self.dist[v].min(bound);
        }
        true
    }

    /// Pushes `delta` units along zero-reduced-cost paths from excess nodes to
    /// deficit nodes until none is left in the admissible graph.
    fn push_admissible(&mut self, delta: i64) {
        self.cursor.copy_from_slice(&self.head[..self.n]);
        self.dead.fill(false);
        for src in 0..self.n {
            while self.excess[src] >= delta && !self.dead[src] {
                if !self.push_one_path(src, delta) {
                    break;
                }
            }
        }
    }

    fn push_one_path(&mut self, src: usize, delta: i64) -> bool {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.fill(0);
            self.stamp = 1;
        }
        self.path.clear();
        self.mark[src] = self.stamp;
        let mut v = src;
        loop {
            if v != src && self.excess[v] <= -delta {
                for &a in &self.path {
                    self.res[a as usize] -= delta;
                    self.res[a as usize ^ 1] += delta;
                }
                self.excess[src] -= delta;
                self.excess[v] += delta;
                return true;
            }
            let mut next = None;
            while self.cursor[v] < self.head[v + 1] {
                let a = self.adj[self.cursor[v]] as usize;
                let w = self.to[a] as usize;
                if self.res[a] >= delta
                    && !self.dead[w]
                    && self.mark[w] != self.stamp
                    && self.reduced(a, v) == 0
                {
                    next = Some((a, w));
                    break;
                }
                self.cursor[v] += 1;
            }
            match next {
                Some((a, w)) => {
                    self.path.push(a as u32);
                    self.mark[w] = self.stamp;
                    v = w;
                }
                None => {
                    self.dead[v] = true;
                    let Some(a) = self.path.pop() else {
                        return false;
                    };
                    v = self.tail(a as usize);
                    self.cursor[v] += 1;
                }
            }
        }
    }
}

/// Reads the recommendation lists off a solved matching network: user `i`
/// gets item `j` iff the unit edge between them carries flow. Lists are
/// ordered by descending normalized score, then item index.
pub fn extract_recommendations(
    network: &FlowNetwork,
    dataset: &InteractionDataset,
    scores: &ScoreMatrix,
) -> Result<RecommendationMatrix> {
    let layout = network
        .layout
        .ok_or_else(|| Error::Parameter("not a matching network".into()))?;
    if layout.users != dataset.n_users() || layout.items != dataset.n_items() {
        return Err(Error::Parameter(
            "network and dataset disagree on dimensions".into(),
        ));
    }
    let first_item = 1 + layout.users;
    let mut picks = vec![Vec::new(); layout.users];
    for e in &network.edges {
        let is_pair = (1..first_item).contains(&e.from)
            && (first_item..first_item + layout.items).contains(&e.to);
        if is_pair && e.flow > 0 {
            picks[e.from - 1].push((e.to - first_item) as u32);
        }
    }
    for (u, list) in picks.iter_mut().enumerate() {
        list.sort_by(|&a, &b| {
            scores
                .get(u, b)
                .total_cmp(&scores.get(u, a))
                .then(a.cmp(&b))
        });
    }
    Ok(RecommendationMatrix::new(layout.items, layout.l, picks))
}
