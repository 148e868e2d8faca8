//! Single-node Metropolis-Hastings moves over block assignments.

use rand::Rng;

use super::objective::{graph_constant, model_term, xlogx};
use crate::error::{Error, Result};
use crate::model::{NodeId, Partition, SegmentGraph};

/// Label of a node that takes no part in the chain.
pub(crate) const UNASSIGNED: u32 = u32::MAX;

/// Compressed adjacency with multiplicities; self-loops dropped.
#[derive(Clone, Debug)]
pub(crate) struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<u32>,
    /// Each neighbor repeated once per parallel edge, for uniform edge-end draws.
    end_offsets: Vec<usize>,
    ends: Vec<u32>,
    pub(crate) degree: Vec<u64>,
    pub(crate) edges: u64,
    pub(crate) constant: f64,
}

impl Adjacency {
    pub(crate) fn new(g: &SegmentGraph) -> Self {
        let n = g.node_count();
        let mut count = vec![0usize; n];
        let mut degree = vec![0u64; n];
        let mut edges = 0u64;
        for &(u, v, m) in g.edges() {
            if u == v {
                continue;
            }
            count[u as usize] += 1;
            count[v as usize] += 1;
            degree[u as usize] += m as u64;
            degree[v as usize] += m as u64;
            edges += m as u64;
        }
        let mut offsets = vec![0usize; n + 1];
        let mut end_offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + count[i];
            end_offsets[i + 1] = end_offsets[i] + degree[i] as usize;
        }
        let mut neighbors = vec![0u32; offsets[n]];
        let mut weights = vec![0u32; offsets[n]];
        let mut ends = vec![0u32; end_offsets[n]];
        let mut fill = offsets.clone();
        let mut end_fill = end_offsets.clone();
        for &(u, v, m) in g.edges() {
            if u == v {
                continue;
            }
            for (a, b) in [(u, v), (v, u)] {
                let a = a as usize;
                neighbors[fill[a]] = b;
                weights[fill[a]] = m;
                fill[a] += 1;
                for _ in 0..m {
                    ends[end_fill[a]] = b;
                    end_fill[a] += 1;
                }
            }
        }
        Self {
            offsets,
            neighbors,
            weights,
            end_offsets,
            ends,
            degree,
            edges,
            constant: graph_constant(g),
        }
    }

    pub(crate) fn node_count(&self) -> usize {
        self.degree.len()
    }

    pub(crate) fn neighbors(&self, v: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.neighbors[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    fn random_end<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> u32 {
        let (lo, hi) = (self.end_offsets[v], self.end_offsets[v + 1]);
        self.ends[rng.gen_range(lo..hi)]
    }
}

/// Which blocks a move may target.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveSet {
    /// Only occupied blocks, and never the move that empties a block: the
    /// block count stays fixed.
    Fixed,
    /// Any of `capacity` label slots; blocks can appear and disappear. The
    /// acceptance includes the label-multiplicity correction so that the
    /// chain samples unlabelled partitions.
    Free,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainParams {
    /// Inverse temperature. `0` accepts every proposal; `f64::INFINITY`
    /// accepts exactly the moves that do not increase the objective.
    pub beta: f64,
    /// Probability of proposing a uniformly random block instead of the block
    /// of a random neighbor.
    pub epsilon: f64,
    pub moves: MoveSet,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            epsilon: 0.1,
            moves: MoveSet::Fixed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    /// The proposal was the node's current block.
    Null,
    Rejected,
    Accepted { delta: f64 },
}

/// Lookup tables shared by the chain and the block-merge search.
#[derive(Clone, Debug)]
pub(crate) struct Tables {
    xlogx: Vec<f64>,
    model: Vec<f64>,
}

impl Tables {
    pub(crate) fn new(adj: &Adjacency, max_blocks: usize) -> Self {
        let top = 2 * adj.edges as usize + 1;
        let n = adj.node_count() as f64;
        let e = adj.edges as f64;
        Self {
            xlogx: (0..=top).map(|x| xlogx(x as f64)).collect(),
            model: (0..=max_blocks.max(1))
                .map(|b| if b == 0 { 0.0 } else { model_term(e, n, b) })
                .collect(),
        }
    }

    #[inline]
    pub(crate) fn f(&self, x: u64) -> f64 {
        self.xlogx[x as usize]
    }

    #[inline]
    pub(crate) fn model(&self, b: usize) -> f64 {
        self.model[b]
    }
}

/// Block assignment with the aggregate counts the objective needs.
#[derive(Clone, Debug)]
pub(crate) struct BlockState {
    pub(crate) labels: Vec<u32>,
    pub(crate) capacity: usize,
    pub(crate) sizes: Vec<u32>,
    pub(crate) block_degree: Vec<u64>,
    /// `capacity * capacity`, symmetric.
    pub(crate) matrix: Vec<u64>,
    occupied: Vec<u32>,
    /// Position of each block in `occupied`, or `u32::MAX`.
    slot: Vec<u32>,
}

impl BlockState {
    pub(crate) fn new(adj: &Adjacency, labels: Vec<u32>, capacity: usize) -> Self {
        let mut st = Self {
            labels,
            capacity,
            sizes: vec![0; capacity],
            block_degree: vec![0; capacity],
            matrix: vec![0; capacity * capacity],
            occupied: Vec::new(),
            slot: vec![u32::MAX; capacity],
        };
        for (v, &l) in st.labels.iter().enumerate() {
            if l == UNASSIGNED {
                continue;
            }
            st.sizes[l as usize] += 1;
            st.block_degree[l as usize] += adj.degree[v];
        }
        for v in 0..adj.node_count() {
            let r = st.labels[v];
            if r == UNASSIGNED {
                continue;
            }
            for (u, w) in adj.neighbors(v) {
                let s = st.labels[u as usize];
                st.matrix[r as usize * capacity + s as usize] += w as u64;
            }
        }
        for b in 0..capacity {
            if st.sizes[b] > 0 {
                st.add_occupied(b as u32);
            }
        }
        st
    }

    fn add_occupied(&mut self, b: u32) {
        self.slot[b as usize] = self.occupied.len() as u32;
        self.occupied.push(b);
    }

    fn remove_occupied(&mut self, b: u32) {
        let pos = self.slot[b as usize] as usize;
        let last = *self.occupied.last().unwrap();
        self.occupied.swap_remove(pos);
        if last != b {
            self.slot[last as usize] = pos as u32;
        }
        self.slot[b as usize] = u32::MAX;
    }

    pub(crate) fn num_blocks(&self) -> usize {
        self.occupied.len()
    }

    pub(crate) fn occupied(&self) -> &[u32] {
        &self.occupied
    }

    #[inline]
    pub(crate) fn e(&self, r: usize, s: usize) -> u64 {
        self.matrix[r * self.capacity + s]
    }

    /// Full description length of the current state.
    pub(crate) fn objective(&self, adj: &Adjacency, tables: &Tables) -> f64 {
        let mut value = adj.constant;
        for &r in &self.occupied {
            let r = r as usize;
            value += tables.f(self.block_degree[r]);
            for &s in &self.occupied {
                value -= 0.5 * tables.f(self.e(r, s as usize));
            }
        }
        value + tables.model(self.num_blocks())
    }
}

/// Scratch buffer of a node's edge counts into each block.
#[derive(Clone, Debug)]
pub(crate) struct NeighborCounts {
    counts: Vec<u64>,
    touched: Vec<u32>,
}

impl NeighborCounts {
    pub(crate) fn new(capacity: usize) -> Self {
        Self {
            counts: vec![0; capacity],
            touched: Vec::new(),
        }
    }

    fn fill(&mut self, adj: &Adjacency, labels: &[u32], v: usize) {
        for &t in &self.touched {
            self.counts[t as usize] = 0;
        }
        self.touched.clear();
        for (u, w) in adj.neighbors(v) {
            let t = labels[u as usize];
            if self.counts[t as usize] == 0 {
                self.touched.push(t);
            }
            self.counts[t as usize] += w as u64;
        }
    }

    fn get(&self, t: u32) -> u64 {
        self.counts[t as usize]
    }
}

/// Objective change from moving `v` (degree `k`) from `r` to `s`.
fn move_delta(st: &BlockState, nc: &NeighborCounts, tables: &Tables, k: u64, r: u32, s: u32, new_b: usize) -> f64 {
    let (ri, si) = (r as usize, s as usize);
    let (k_r, k_s) = (nc.get(r), nc.get(s));
    let mut matrix_sum = 0.0;
    for &t in &nc.touched {
        if t == r || t == s {
            continue;
        }
        let (ti, kt) = (t as usize, nc.get(t));
        let (ert, est) = (st.e(ri, ti), st.e(si, ti));
        matrix_sum += 2.0 * (tables.f(ert - kt) - tables.f(ert) + tables.f(est + kt) - tables.f(est));
    }
    let (err, ess, ers) = (st.e(ri, ri), st.e(si, si), st.e(ri, si));
    matrix_sum += tables.f(err - 2 * k_r) - tables.f(err);
    matrix_sum += tables.f(ess + 2 * k_s) - tables.f(ess);
    matrix_sum += 2.0 * (tables.f(ers + k_r - k_s) - tables.f(ers));
    let (dr, ds) = (st.block_degree[ri], st.block_degree[si]);
    let degree_part = tables.f(dr - k) - tables.f(dr) + tables.f(ds + k) - tables.f(ds);
    degree_part - 0.5 * matrix_sum + tables.model(new_b) - tables.model(st.num_blocks())
}

fn apply_move(st: &mut BlockState, nc: &NeighborCounts, k: u64, v: usize, r: u32, s: u32) {
    let cap = st.capacity;
    let (ri, si) = (r as usize, s as usize);
    for &t in &nc.touched {
        let (ti, kt) = (t as usize, nc.get(t));
        st.matrix[ri * cap + ti] -= kt;
        st.matrix[ti * cap + ri] -= kt;
        st.matrix[si * cap + ti] += kt;
        st.matrix[ti * cap + si] += kt;
    }
    st.block_degree[ri] -= k;
    st.block_degree[si] += k;
    st.sizes[ri] -= 1;
    st.sizes[si] += 1;
    if st.sizes[ri] == 0 {
        st.remove_occupied(r);
    }
    if st.sizes[si] == 1 {
        st.add_occupied(s);
    }
    st.labels[v] = s;
}

/// Markov chain over block assignments of one segment graph.
#[derive(Clone, Debug)]
pub struct McmcChain {
    pub(crate) adj: Adjacency,
    pub(crate) state: BlockState,
    pub(crate) tables: Tables,
    pub(crate) scratch: NeighborCounts,
    pub(crate) params: ChainParams,
    pub(crate) value: f64,
    node_total: usize,
}

impl McmcChain {
    /// Starts from `initial`, with `capacity` label slots (at least the
    /// number of blocks of `initial`).
    pub fn new(g: &SegmentGraph, initial: &Partition, capacity: usize, params: ChainParams) -> Result<Self> {
        if initial.node_count() != g.node_count() {
            return Err(Error::UniverseMismatch {
                expected: g.node_count(),
                found: initial.node_count(),
            });
        }
        if capacity < initial.num_blocks() {
            return Err(Error::InvalidConfig(format!(
                "capacity {capacity} below the {} blocks of the initial partition",
                initial.num_blocks()
            )));
        }
        validate_params(&params)?;
        let adj = Adjacency::new(g);
        let tables = Tables::new(&adj, capacity);
        Ok(Self::from_parts(adj, tables, initial.labels().to_vec(), capacity, params))
    }

    pub(crate) fn from_parts(adj: Adjacency, tables: Tables, labels: Vec<u32>, capacity: usize, params: ChainParams) -> Self {
        let node_total = labels.iter().filter(|&&l| l != UNASSIGNED).count();
        let state = BlockState::new(&adj, labels, capacity);
        let value = state.objective(&adj, &tables);
        Self {
            scratch: NeighborCounts::new(capacity),
            adj,
            state,
            tables,
            params,
            value,
            node_total,
        }
    }

    pub fn objective(&self) -> f64 {
        self.value
    }

    /// Recomputes the objective from the block counts.
    pub fn recompute_objective(&self) -> f64 {
        self.state.objective(&self.adj, &self.tables)
    }

    pub fn num_blocks(&self) -> usize {
        self.state.num_blocks()
    }

    pub fn labels(&self) -> &[u32] {
        &self.state.labels
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.params.beta = beta;
    }

    /// Current assignment with labels densified.
    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.state.labels).expect("chain state is a valid partition")
    }

    /// Proposes a new block for `node` and accepts or rejects it with the
    /// Metropolis-Hastings rule.
    pub fn propose_and_accept<R: Rng + ?Sized>(&mut self, node: NodeId, rng: &mut R) -> StepOutcome {
        let v = node as usize;
        let r = self.state.labels[v];
        if r == UNASSIGNED {
            return StepOutcome::Null;
        }
        let k = self.adj.degree[v];
        let eps = if k == 0 { 1.0 } else { self.params.epsilon };
        let slots = match self.params.moves {
            MoveSet::Fixed => self.state.num_blocks(),
            MoveSet::Free => self.state.capacity,
        };
        let s = if rng.gen::<f64>() < eps {
            match self.params.moves {
                MoveSet::Fixed => self.state.occupied()[rng.gen_range(0..slots)],
                MoveSet::Free => rng.gen_range(0..slots) as u32,
            }
        } else {
            self.state.labels[self.adj.random_end(v, rng) as usize]
        };
        if s == r {
            return StepOutcome::Null;
        }
        let leaves_empty = self.state.sizes[r as usize] == 1;
        let opens_new = self.state.sizes[s as usize] == 0;
        if self.params.moves == MoveSet::Fixed && leaves_empty {
            return StepOutcome::Rejected;
        }
        let b = self.state.num_blocks();
        let new_b = b - usize::from(leaves_empty) + usize::from(opens_new);

        self.scratch.fill(&self.adj, &self.state.labels, v);
        let delta = move_delta(&self.state, &self.scratch, &self.tables, k, r, s, new_b);

        let beta = self.params.beta;
        let accept = if beta == 0.0 {
            true
        } else if beta.is_infinite() {
            delta <= 0.0
        } else {
            let q = |t: u32| {
                let from_nbr = if k == 0 {
                    0.0
                } else {
                    self.scratch.get(t) as f64 / k as f64
                };
                eps / slots as f64 + (1.0 - eps) * from_nbr
            };
            let mut log_ratio = -beta * delta + (q(r) / q(s)).ln();
            if self.params.moves == MoveSet::Free {
                // Target over labelled states is exp(-beta S) / (capacity)_b.
                let c = self.state.capacity as f64;
                if new_b > b {
                    log_ratio -= (c - b as f64).ln();
                } else if new_b < b {
                    log_ratio += (c - b as f64 + 1.0).ln();
                }
            }
            log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp()
        };
        if !accept {
            return StepOutcome::Rejected;
        }
        apply_move(&mut self.state, &self.scratch, k, v, r, s);
        self.value += delta;
        StepOutcome::Accepted { delta }
    }

    /// Number of nodes taking part in the chain.
    pub fn active_nodes(&self) -> usize {
        self.node_total
    }
}

pub(crate) fn validate_params(p: &ChainParams) -> Result<()> {
    if p.beta.is_nan() || p.beta < 0.0 {
        return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", p.beta)));
    }
    if !(0.0..=1.0).contains(&p.epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in [0, 1], got {}",
            p.epsilon
        )));
    }
    Ok(())
}
