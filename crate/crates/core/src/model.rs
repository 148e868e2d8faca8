//! Graphs, time segments and partitions shared by every other module.
//!
//! All types here are immutable once built. Graphs are undirected; a
//! [`SegmentGraph`] stores each node pair once with `src <= dst` and an integer
//! multiplicity, mirroring the Poisson edge counts of the block model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node index in `[0, N)`.
pub type NodeId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimestampedEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub t: f64,
}

impl TimestampedEdge {
    pub fn new(src: NodeId, dst: NodeId, t: f64) -> Self {
        Self { src, dst, t }
    }
}

/// Uniform, non-overlapping time segments. Segment `s` covers
/// `[start + s * width, start + (s + 1) * width)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSegmentation {
    pub start: f64,
    pub width: f64,
    pub count: usize,
}

impl TimeSegmentation {
    pub fn new(start: f64, width: f64, count: usize) -> Result<Self> {
        let seg = Self { start, width, count };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() {
            return Err(Error::InvalidSegmentation("start must be finite".into()));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidSegmentation(format!(
                "width must be positive, got {}",
                self.width
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidSegmentation("count must be positive".into()));
        }
        Ok(())
    }

    pub fn end(&self) -> f64 {
        self.start + self.width * self.count as f64
    }

    pub fn segment_start(&self, segment: usize) -> f64 {
        self.start + self.width * segment as f64
    }

    pub fn midpoint(&self, segment: usize) -> f64 {
        self.start + self.width * (segment as f64 + 0.5)
    }

    /// Index of the segment containing `t`, or `None` outside the span.
    pub fn segment_of(&self, t: f64) -> Option<usize> {
        if !(t >= self.start && t < self.end()) {
            return None;
        }
        let idx = ((t - self.start) / self.width).floor() as usize;
        // Rounding can push t just below `end` onto index `count`.
        Some(idx.min(self.count - 1))
    }
}

/// Timestamped multigraph over dense node ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicGraph {
    node_count: usize,
    edges: Vec<TimestampedEdge>,
}

impl DynamicGraph {
    pub fn new(node_count: usize, edges: Vec<TimestampedEdge>) -> Result<Self> {
        for e in &edges {
            for node in [e.src, e.dst] {
                if node as usize >= node_count {
                    return Err(Error::NodeOutOfRange {
                        node: node as u64,
                        node_count,
                    });
                }
            }
        }
        Ok(Self { node_count, edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[TimestampedEdge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        let mut it = self.edges.iter().map(|e| e.t);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }

    /// Keeps only the edges inside the segmentation span. Node ids are kept.
    pub fn restrict_to(&self, seg: &TimeSegmentation) -> DynamicGraph {
        DynamicGraph {
            node_count: self.node_count,
            edges: self
                .edges
                .iter()
                .filter(|e| seg.segment_of(e.t).is_some())
                .copied()
                .collect(),
        }
    }

    /// Buckets every edge into its time segment.
    ///
    /// Fails with the index of the first edge whose timestamp falls outside
    /// the segmentation span. Empty segments yield empty graphs.
    pub fn slice(&self, seg: &TimeSegmentation) -> Result<Vec<SegmentGraph>> {
        seg.validate()?;
        let mut buckets: Vec<BTreeMap<(NodeId, NodeId), u32>> = vec![BTreeMap::new(); seg.count];
        for (index, e) in self.edges.iter().enumerate() {
            let s = seg
                .segment_of(e.t)
                .ok_or(Error::EdgeOutsideSpan { index, t: e.t })?;
            *buckets[s].entry(ordered(e.src, e.dst)).or_insert(0) += 1;
        }
        Ok(buckets
            .into_iter()
            .enumerate()
            .map(|(segment_index, map)| SegmentGraph {
                segment_index,
                node_count: self.node_count,
                edges: map.into_iter().map(|((u, v), m)| (u, v, m)).collect(),
            })
            .collect())
    }
}

fn ordered(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// One materialized time segment: undirected pairs with multiplicity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentGraph {
    segment_index: usize,
    node_count: usize,
    /// Sorted `(src, dst, multiplicity)` with `src <= dst` and multiplicity >= 1.
    edges: Vec<(NodeId, NodeId, u32)>,
}

impl SegmentGraph {
    pub fn empty(segment_index: usize, node_count: usize) -> Self {
        Self {
            segment_index,
            node_count,
            edges: Vec::new(),
        }
    }

    /// Builds a segment graph from unordered endpoint pairs; repeated pairs
    /// accumulate multiplicity.
    pub fn from_pairs<I>(segment_index: usize, node_count: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut map: BTreeMap<(NodeId, NodeId), u32> = BTreeMap::new();
        for (u, v) in pairs {
            for node in [u, v] {
                if node as usize >= node_count {
                    return Err(Error::NodeOutOfRange {
                        node: node as u64,
                        node_count,
                    });
                }
            }
            *map.entry(ordered(u, v)).or_insert(0) += 1;
        }
        Ok(Self {
            segment_index,
            node_count,
            edges: map.into_iter().map(|((u, v), m)| (u, v, m)).collect(),
        })
    }

    pub fn segment_index(&self) -> usize {
        self.segment_index
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(NodeId, NodeId, u32)] {
        &self.edges
    }

    pub fn multiplicity(&self, u: NodeId, v: NodeId) -> u32 {
        let key = ordered(u, v);
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|i| self.edges[i].2)
            .unwrap_or(0)
    }

    /// Total multiplicity over all pairs.
    pub fn edge_count(&self) -> u64 {
        self.edges.iter().map(|&(_, _, m)| m as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Weighted degree of every node; a self-loop adds two.
    pub fn degrees(&self) -> Vec<u64> {
        let mut deg = vec![0u64; self.node_count];
        for &(u, v, m) in &self.edges {
            deg[u as usize] += m as u64;
            deg[v as usize] += m as u64;
        }
        deg
    }
}

/// Disjoint assignment of nodes to blocks with labels dense in `[0, c)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Partition {
    labels: Vec<u32>,
    num_blocks: usize,
}

impl Partition {
    /// Accepts labels that already use every value in `[0, c)`.
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidPartition("no nodes".into()));
        }
        let c = *labels.iter().max().unwrap() as usize + 1;
        let mut seen = vec![false; c];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!(
                "labels are not dense: block {missing} is empty"
            )));
        }
        Ok(Self {
            labels,
            num_blocks: c,
        })
    }

    /// Densifies arbitrary labels, keeping the relative order of label values.
    pub fn from_labels(labels: &[u32]) -> Result<Self> {
        let mut values: Vec<u32> = labels.to_vec();
        values.sort_unstable();
        values.dedup();
        let dense = labels
            .iter()
            .map(|l| values.binary_search(l).unwrap() as u32)
            .collect();
        Self::new(dense)
    }

    /// Every node in one block.
    pub fn single_block(node_count: usize) -> Result<Self> {
        Self::new(vec![0; node_count])
    }

    pub fn singletons(node_count: usize) -> Result<Self> {
        Self::new((0..node_count as u32).collect())
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> u32 {
        self.labels[node as usize]
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_blocks];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Member lists per block, each sorted ascending.
    pub fn blocks(&self) -> Vec<Vec<NodeId>> {
        let mut blocks = vec![Vec::new(); self.num_blocks];
        for (node, &l) in self.labels.iter().enumerate() {
            blocks[l as usize].push(node as NodeId);
        }
        blocks
    }

    /// Relabels blocks in order of their first member.
    pub fn canonical(&self) -> Partition {
        let mut map = vec![u32::MAX; self.num_blocks];
        let mut next = 0u32;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l as usize] == u32::MAX {
                    map[l as usize] = next;
                    next += 1;
                }
                map[l as usize]
            })
            .collect();
        Partition {
            labels,
            num_blocks: self.num_blocks,
        }
    }

    /// Equal up to a permutation of block labels.
    pub fn equivalent(&self, other: &Partition) -> bool {
        self.canonical() == other.canonical()
    }

    /// Applies `perm[old_label] = new_label`.
    pub fn permuted(&self, perm: &[u32]) -> Result<Partition> {
        if perm.len() != self.num_blocks {
            return Err(Error::InvalidPartition(format!(
                "permutation has {} entries for {} blocks",
                perm.len(),
                self.num_blocks
            )));
        }
        Partition::new(self.labels.iter().map(|&l| perm[l as usize]).collect())
    }
}

impl TryFrom<Vec<u32>> for Partition {
    type Error = Error;

    fn try_from(labels: Vec<u32>) -> Result<Self> {
        Partition::new(labels)
    }
}

impl From<Partition> for Vec<u32> {
    fn from(p: Partition) -> Self {
        p.labels
    }
}

/// Node sets of a partition; set `x` holds exactly the nodes labelled `x`.
pub fn blocks_of(p: &Partition) -> Vec<Vec<NodeId>> {
    p.blocks()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edge(s: u32, d: u32, t: f64) -> TimestampedEdge {
        TimestampedEdge::new(s, d, t)
    }

    #[test]
    fn slice_buckets_by_timestamp() {
        let g = DynamicGraph::new(3, vec![edge(0, 1, 0.5), edge(0, 1, 0.7), edge(1, 2, 1.5)]).unwrap();
        let seg = TimeSegmentation::new(0.0, 1.0, 2).unwrap();
        let parts = g.slice(&seg).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].edges(), &[(0, 1, 2)]);
        assert_eq!(parts[1].edges(), &[(1, 2, 1)]);
        assert_eq!(parts[1].segment_index(), 1);
    }

    #[test]
    fn slice_empty_graph_gives_empty_segments() {
        let g = DynamicGraph::new(4, vec![]).unwrap();
        let seg = TimeSegmentation::new(0.0, 2.0, 5).unwrap();
        let parts = g.slice(&seg).unwrap();
        assert_eq!(parts.len(), 5);
        assert!(parts.iter().all(SegmentGraph::is_empty));
    }

    #[test]
    fn slice_rejects_edges_outside_span() {
        let g = DynamicGraph::new(2, vec![edge(0, 1, 0.5), edge(0, 1, 2.0)]).unwrap();
        let seg = TimeSegmentation::new(0.0, 1.0, 2).unwrap();
        match g.slice(&seg) {
            Err(Error::EdgeOutsideSpan { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected EdgeOutsideSpan, got {other:?}"),
        }
        let before = DynamicGraph::new(2, vec![edge(1, 0, -0.1)]).unwrap();
        assert!(matches!(
            before.slice(&seg),
            Err(Error::EdgeOutsideSpan { index: 0, .. })
        ));
    }

    #[test]
    fn undirected_pairs_are_merged() {
        let g = DynamicGraph::new(3, vec![edge(2, 1, 0.0), edge(1, 2, 0.1)]).unwrap();
        let seg = TimeSegmentation::new(0.0, 1.0, 1).unwrap();
        let parts = g.slice(&seg).unwrap();
        assert_eq!(parts[0].edges(), &[(1, 2, 2)]);
        assert_eq!(parts[0].multiplicity(2, 1), 2);
    }

    #[test]
    fn bad_node_ids_rejected() {
        assert!(DynamicGraph::new(2, vec![edge(0, 2, 0.0)]).is_err());
        assert!(SegmentGraph::from_pairs(0, 2, [(0, 5)]).is_err());
    }

    #[test]
    fn segmentation_validation() {
        assert!(TimeSegmentation::new(0.0, 0.0, 1).is_err());
        assert!(TimeSegmentation::new(0.0, 1.0, 0).is_err());
        let seg = TimeSegmentation::new(10.0, 2.5, 4).unwrap();
        assert_eq!(seg.segment_of(10.0), Some(0));
        assert_eq!(seg.segment_of(19.999), Some(3));
        assert_eq!(seg.segment_of(20.0), None);
        assert_eq!(seg.midpoint(1), 13.75);
    }

    #[test]
    fn blocks_of_examples() {
        let p = Partition::new(vec![0, 0, 1]).unwrap();
        assert_eq!(blocks_of(&p), vec![vec![0, 1], vec![2]]);
        let p = Partition::new(vec![0, 0, 0]).unwrap();
        assert_eq!(blocks_of(&p), vec![vec![0, 1, 2]]);
        let p = Partition::from_labels(&[2, 0, 1]).unwrap();
        let blocks = blocks_of(&p);
        assert_eq!(blocks.len(), 3);
        assert!(blocks.iter().all(|b| b.len() == 1));
    }

    #[test]
    fn partition_requires_dense_labels() {
        assert!(Partition::new(vec![0, 2]).is_err());
        assert!(Partition::new(vec![]).is_err());
        let p = Partition::from_labels(&[7, 7, 3]).unwrap();
        assert_eq!(p.labels(), &[1, 1, 0]);
    }

    #[test]
    fn partition_json_is_a_label_array() {
        let p = Partition::new(vec![1, 0, 1]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[1,0,1]");
        let back: Partition = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Partition>("[0,2]").is_err());
    }

    fn arb_partition() -> impl Strategy<Value = Partition> {
        (1usize..30).prop_flat_map(|n| {
            proptest::collection::vec(0u32..6, n).prop_map(|l| Partition::from_labels(&l).unwrap())
        })
    }

    proptest! {
        #[test]
        fn slice_preserves_total_multiplicity(
            raw in proptest::collection::vec((0u32..8, 0u32..8, 0.0f64..10.0), 0..200),
            count in 1usize..7,
        ) {
            let edges: Vec<_> = raw.iter().map(|&(s, d, t)| edge(s, d, t)).collect();
            let g = DynamicGraph::new(8, edges).unwrap();
            let seg = TimeSegmentation::new(0.0, 10.0 / count as f64, count).unwrap();
            let parts = g.slice(&seg).unwrap();
            let total: u64 = parts.iter().map(SegmentGraph::edge_count).sum();
            prop_assert_eq!(total, raw.len() as u64);
            for p in &parts {
                prop_assert!(p.edges().iter().all(|&(u, v, m)| u <= v && m >= 1));
            }
        }

        #[test]
        fn blocks_are_disjoint_and_cover(p in arb_partition()) {
            let blocks = blocks_of(&p);
            let mut seen = vec![false; p.node_count()];
            for b in &blocks {
                prop_assert!(!b.is_empty());
                for &v in b {
                    prop_assert!(!seen[v as usize]);
                    seen[v as usize] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|s| s));
        }

        #[test]
        fn canonical_ignores_label_permutation(p in arb_partition(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<u32> = (0..p.num_blocks() as u32).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let q = p.permuted(&perm).unwrap();
            prop_assert!(p.equivalent(&q));
        }
    }
}
