//! Primal network simplex for the transportation problem.
//!
//! The bipartite graph has one node per source point (supply `a_i`), one per
//! target point (demand `b_j`) and an arc `i -> j` for every pair. An extra
//! root node with artificial arcs provides the initial spanning tree. Leaving
//! arcs are chosen by the strongly feasible tree rule (last blocking arc along
//! the cycle orientation), which rules out cycling on the heavily degenerate
//! uniform-weight instances audits produce. Entering arcs use block search
//! pricing.
//!
//! The tree is stored as adjacency lists and the parent/potential arrays are
//! rebuilt after each pivot. That costs O(nodes) per pivot, which is
//! negligible next to pricing at the sizes this crate targets.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

pub(crate) struct FlowSolution {
    pub flows: Array2<f64>,
    pub pivots: usize,
}

struct Simplex<'a> {
    n_rows: usize,
    n_cols: usize,
    n_real: usize,
    root: usize,
    cost: ArrayView2<'a, f64>,
    art_cost: f64,
    supply: Vec<f64>,
    // Per arc (real arcs first, then one artificial arc per node).
    flow: Vec<f64>,
    state: Vec<i8>,
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    // Per node, including the root.
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    order: Vec<usize>,
    tree_adj: Vec<Vec<usize>>,
    // Pricing.
    block_size: usize,
    next_arc: usize,
    price_tol: f64,
}

impl<'a> Simplex<'a> {
    fn new(supply_rows: ArrayView1<'_, f64>, demand_cols: ArrayView1<'_, f64>, cost: ArrayView2<'a, f64>) -> Self {
        let (n_rows, n_cols) = cost.dim();
        let n_nodes = n_rows + n_cols;
        let n_real = n_rows * n_cols;
        let root = n_nodes;
        let max_cost = cost.iter().copied().fold(0.0, f64::max);
        let art_cost = (max_cost + 1.0) * (n_nodes as f64 + 1.0);

        let mut supply = Vec::with_capacity(n_nodes + 1);
        supply.extend(supply_rows.iter().copied());
        supply.extend(demand_cols.iter().map(|b| -b));
        supply.push(0.0);

        let n_arcs = n_real + n_nodes;
        let mut flow = vec![0.0; n_arcs];
        let mut state = vec![STATE_LOWER; n_arcs];
        let mut art_source = vec![0; n_nodes];
        let mut art_target = vec![0; n_nodes];
        let mut tree_adj = vec![Vec::new(); n_nodes + 1];
        for u in 0..n_nodes {
            let e = n_real + u;
            state[e] = STATE_TREE;
            if supply[u] >= 0.0 {
                art_source[u] = u;
                art_target[u] = root;
                flow[e] = supply[u];
            } else {
                art_source[u] = root;
                art_target[u] = u;
                flow[e] = -supply[u];
            }
            tree_adj[u].push(e);
            tree_adj[root].push(e);
        }

        let block_size = ((n_real as f64).sqrt().ceil() as usize).max(10).min(n_real.max(1));
        let mut s = Self {
            n_rows,
            n_cols,
            n_real,
            root,
            cost,
            art_cost,
            supply,
            flow,
            state,
            art_source,
            art_target,
            parent: vec![root; n_nodes + 1],
            pred: vec![usize::MAX; n_nodes + 1],
            pred_dir: vec![DIR_UP; n_nodes + 1],
            depth: vec![0; n_nodes + 1],
            pi: vec![0.0; n_nodes + 1],
            order: Vec::with_capacity(n_nodes + 1),
            tree_adj,
            block_size,
            next_arc: 0,
            price_tol: 1e-11 * (max_cost + 1.0),
        };
        s.rebuild_tree();
        s
    }

    #[inline]
    fn source(&self, e: usize) -> usize {
        if e < self.n_real {
            e / self.n_cols
        } else {
            self.art_source[e - self.n_real]
        }
    }

    #[inline]
    fn target(&self, e: usize) -> usize {
        if e < self.n_real {
            self.n_rows + e % self.n_cols
        } else {
            self.art_target[e - self.n_real]
        }
    }

    #[inline]
    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.n_real {
            self.cost[[e / self.n_cols, e % self.n_cols]]
        } else if self.art_source[e - self.n_real] == self.root {
            self.art_cost
        } else {
            0.0
        }
    }

    /// Recompute parents, depths, potentials and a preorder from the tree arcs.
    /// Potentials satisfy `cost(e) + pi[source] - pi[target] = 0` on tree arcs.
    fn rebuild_tree(&mut self) {
        let root = self.root;
        self.order.clear();
        self.parent[root] = root;
        self.pred[root] = usize::MAX;
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            self.order.push(u);
            for k in 0..self.tree_adj[u].len() {
                let e = self.tree_adj[u][k];
                if e == self.pred[u] {
                    continue;
                }
                let (s, t) = (self.source(e), self.target(e));
                let (v, dir) = if s == u { (t, DIR_DOWN) } else { (s, DIR_UP) };
                let c = self.arc_cost(e);
                self.parent[v] = u;
                self.pred[v] = e;
                self.pred_dir[v] = dir;
                self.depth[v] = self.depth[u] + 1;
                self.pi[v] = if dir == DIR_UP {
                    self.pi[u] - c
                } else {
                    self.pi[u] + c
                };
                stack.push(v);
            }
        }
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        let i = e / self.n_cols;
        let j = self.n_rows + e % self.n_cols;
        self.cost[[e / self.n_cols, e % self.n_cols]] + self.pi[i] - self.pi[j]
    }

    /// Block search: scan arcs cyclically and return the most negative reduced
    /// cost within the first block that contains a candidate.
    fn find_entering(&mut self) -> Option<usize> {
        let m = self.n_real;
        let mut best = None;
        let mut min = -self.price_tol;
        let mut cnt = self.block_size;
        let start = self.next_arc;
        for k in 0..m {
            let e = start + k;
            let e = if e >= m { e - m } else { e };
            if self.state[e] == STATE_LOWER {
                let rc = self.reduced_cost(e);
                if rc < min {
                    min = rc;
                    best = Some(e);
                }
            }
            cnt -= 1;
            if cnt == 0 {
                if best.is_some() {
                    self.next_arc = if e + 1 == m { 0 } else { e + 1 };
                    return best;
                }
                cnt = self.block_size;
            }
        }
        best
    }

    fn find_join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] < self.depth[v] {
                v = self.parent[v];
            } else {
                u = self.parent[u];
            }
        }
        u
    }

    /// Push flow around the cycle closed by `in_arc` and swap tree arcs.
    fn pivot(&mut self, in_arc: usize) -> Result<()> {
        let first = self.source(in_arc);
        let second = self.target(in_arc);
        let join = self.find_join(first, second);

        let mut delta = f64::INFINITY;
        let mut u_out = usize::MAX;
        let mut u = first;
        while u != join {
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                }
            }
            u = self.parent[u];
        }
        if u_out == usize::MAX {
            return Err(Error::numerical("ot", "unbounded pivot in transport simplex"));
        }

        if delta > 0.0 {
            self.flow[in_arc] += delta;
            let mut u = first;
            while u != join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
            let mut u = second;
            while u != join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * delta;
                u = self.parent[u];
            }
        }

        let out_arc = self.pred[u_out];
        self.flow[out_arc] = 0.0;
        self.state[out_arc] = STATE_LOWER;
        self.state[in_arc] = STATE_TREE;
        for node in [self.source(out_arc), self.target(out_arc)] {
            let adj = &mut self.tree_adj[node];
            if let Some(pos) = adj.iter().position(|&e| e == out_arc) {
                adj.swap_remove(pos);
            }
        }
        self.tree_adj[first].push(in_arc);
        self.tree_adj[second].push(in_arc);
        self.rebuild_tree();
        Ok(())
    }

    /// Recompute tree flows from node supplies by sweeping the tree bottom-up.
    /// Each flow becomes a plain subtree sum, which removes drift accumulated
    /// over many pivots.
    fn settle_flows(&mut self) {
        let mut net = self.supply.clone();
        for k in (1..self.order.len()).rev() {
            let u = self.order[k];
            let e = self.pred[u];
            let value = if self.pred_dir[u] == DIR_UP { net[u] } else { -net[u] };
            self.flow[e] = value.max(0.0);
            let p = self.parent[u];
            net[p] += net[u];
        }
    }

    fn run(mut self, max_pivots: usize) -> Result<FlowSolution> {
        let mut pivots = 0;
        while let Some(e) = self.find_entering() {
            if pivots >= max_pivots {
                return Err(Error::numerical(
                    "ot",
                    format!(
                        "transport simplex did not converge after {pivots} pivots ({} x {} instance)",
                        self.n_rows, self.n_cols
                    ),
                ));
            }
            self.pivot(e)?;
            pivots += 1;
        }
        self.settle_flows();

        let stranded = (0..self.n_rows + self.n_cols)
            .filter(|&u| self.art_source[u] == self.root)
            .map(|u| self.flow[self.n_real + u])
            .fold(0.0, f64::max);
        if stranded > 1e-9 {
            return Err(Error::numerical(
                "ot",
                format!("transport simplex left {stranded:e} mass on artificial arcs"),
            ));
        }

        let flows = Array2::from_shape_vec((self.n_rows, self.n_cols), self.flow[..self.n_real].to_vec())
            .expect("flow vector has n_rows * n_cols entries");
        Ok(FlowSolution { flows, pivots })
    }
}

/// Minimise `<flows, cost>` subject to row sums `supply` and column sums
/// `demand`. Both marginals must carry the same total mass.
pub(crate) fn transport_simplex(
    supply: ArrayView1<'_, f64>,
    demand: ArrayView1<'_, f64>,
    cost: ArrayView2<'_, f64>,
    max_pivots: usize,
) -> Result<FlowSolution> {
    debug_assert_eq!(cost.dim(), (supply.len(), demand.len()));
    Simplex::new(supply, demand, cost).run(max_pivots)
}
