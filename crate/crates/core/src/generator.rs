//! Time-varying degree-corrected stochastic block model.
//!
//! The expected count of edges between nodes `i` and `j` at time `t` is
//! `theta[i] * theta[j] * sigma[b_i][b_j](t)`. Each entry of the block
//! interaction matrix is a piecewise-linear function of time described by
//! keyframes; splits and merges are linear ramps of the entries between the
//! affected blocks.
//!
//! Time is measured in segment units: segment `s` spans `[s, s + 1)` and the
//! rates used to sample it are evaluated at its midpoint `s + 0.5`.
//!
//! Sampling draws a fixed number of edges from the normalized rate matrix,
//! i.e. the Poisson process conditioned on its total count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DynamicGraph, NodeId, Partition, SegmentGraph, TimeSegmentation, TimestampedEdge};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub value: f64,
}

/// Piecewise-linear function through its keyframes, constant outside them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Keyframe>", into = "Vec<Keyframe>")]
pub struct PiecewiseLinear {
    keyframes: Vec<Keyframe>,
}

impl PiecewiseLinear {
    pub fn constant(value: f64) -> Self {
        Self {
            keyframes: vec![Keyframe { t: 0.0, value }],
        }
    }

    pub fn new(mut keyframes: Vec<Keyframe>) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::InvalidModel("an entry needs at least one keyframe".into()));
        }
        if keyframes
            .iter()
            .any(|k| !k.t.is_finite() || !k.value.is_finite() || k.value < 0.0)
        {
            return Err(Error::InvalidModel(
                "keyframes must be finite with non-negative values".into(),
            ));
        }
        keyframes.sort_by(|a, b| a.t.total_cmp(&b.t));
        if keyframes.windows(2).any(|w| w[0].t == w[1].t && w[0].value != w[1].value) {
            return Err(Error::InvalidModel("conflicting keyframes at the same time".into()));
        }
        keyframes.dedup_by(|a, b| a.t == b.t);
        Ok(Self { keyframes })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = &self.keyframes;
        if t <= k[0].t {
            return k[0].value;
        }
        let last = k[k.len() - 1];
        if t >= last.t {
            return last.value;
        }
        let i = k.partition_point(|kf| kf.t <= t);
        let (a, b) = (k[i - 1], k[i]);
        a.value + (b.value - a.value) * ((t - a.t) / (b.t - a.t))
    }
}

impl TryFrom<Vec<Keyframe>> for PiecewiseLinear {
    type Error = Error;
    fn try_from(k: Vec<Keyframe>) -> Result<Self> {
        PiecewiseLinear::new(k)
    }
}

impl From<PiecewiseLinear> for Vec<Keyframe> {
    fn from(p: PiecewiseLinear) -> Self {
        p.keyframes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Split,
    Merge,
    Birth,
    Death,
}

/// A scheduled change to the block structure over `[t_start, t_end]`.
///
/// Blocks refer to model blocks. A split ramps the entries between the listed
/// blocks from the internal level down to the external level; a merge does
/// the reverse. Birth and death ramp the listed blocks' own internal entry
/// between the external and internal levels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pub kind: EventKind,
    pub blocks: Vec<u32>,
    pub t_start: u32,
    pub t_end: u32,
}

/// Contiguous run of segments sharing one ground-truth partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthPhase {
    pub from_segment: usize,
    pub partition: Partition,
}

/// One block-pair entry of the interaction matrix, `r <= s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaEntry {
    pub r: u32,
    pub s: u32,
    pub keyframes: PiecewiseLinear,
}

/// JSON document form of a [`BlockModelSchedule`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDoc {
    pub theta: Vec<f64>,
    pub blocks: Partition,
    pub sigma: Vec<SigmaEntry>,
    pub ground_truth: Vec<TruthPhase>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub noise_block: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleDoc", into = "ScheduleDoc")]
pub struct BlockModelSchedule {
    theta: Vec<f64>,
    blocks: Partition,
    /// Upper triangle, row-major, `num_blocks * (num_blocks + 1) / 2` entries.
    sigma: Vec<PiecewiseLinear>,
    ground_truth: Vec<TruthPhase>,
    events: Vec<EventSpec>,
    noise_block: Option<u32>,
}

fn tri_index(b: usize, r: usize, s: usize) -> usize {
    let (r, s) = if r <= s { (r, s) } else { (s, r) };
    r * b - r * (r + 1) / 2 + s
}

impl TryFrom<ScheduleDoc> for BlockModelSchedule {
    type Error = Error;

    fn try_from(doc: ScheduleDoc) -> Result<Self> {
        let n = doc.blocks.node_count();
        let b = doc.blocks.num_blocks();
        if doc.theta.len() != n {
            return Err(Error::InvalidModel(format!(
                "theta has {} entries for {} nodes",
                doc.theta.len(),
                n
            )));
        }
        if doc.theta.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::InvalidModel("theta must be positive".into()));
        }
        let mut sigma: Vec<Option<PiecewiseLinear>> = vec![None; b * (b + 1) / 2];
        for e in doc.sigma {
            let (r, s) = (e.r as usize, e.s as usize);
            if r > s || s >= b {
                return Err(Error::InvalidModel(format!(
                    "sigma entry ({r}, {s}) must satisfy r <= s < {b}"
                )));
            }
            let slot = &mut sigma[tri_index(b, r, s)];
            if slot.is_some() {
                return Err(Error::InvalidModel(format!("duplicate sigma entry ({r}, {s})")));
            }
            *slot = Some(e.keyframes);
        }
        let sigma = sigma
            .into_iter()
            .map(|e| e.unwrap_or_else(|| PiecewiseLinear::constant(0.0)))
            .collect();
        if doc.ground_truth.is_empty() || doc.ground_truth[0].from_segment != 0 {
            return Err(Error::InvalidModel("ground truth must start at segment 0".into()));
        }
        if doc
            .ground_truth
            .windows(2)
            .any(|w| w[0].from_segment >= w[1].from_segment)
        {
            return Err(Error::InvalidModel("ground truth phases must be increasing".into()));
        }
        if let Some(bad) = doc.ground_truth.iter().find(|p| p.partition.node_count() != n) {
            return Err(Error::UniverseMismatch {
                expected: n,
                found: bad.partition.node_count(),
            });
        }
        if let Some(nb) = doc.noise_block {
            if nb as usize >= b {
                return Err(Error::InvalidModel(format!("noise block {nb} out of range")));
            }
        }
        validate_events(&doc.events, b)?;
        Ok(Self {
            theta: doc.theta,
            blocks: doc.blocks,
            sigma,
            ground_truth: doc.ground_truth,
            events: doc.events,
            noise_block: doc.noise_block,
        })
    }
}

impl From<BlockModelSchedule> for ScheduleDoc {
    fn from(m: BlockModelSchedule) -> Self {
        let b = m.blocks.num_blocks();
        let mut sigma = Vec::with_capacity(m.sigma.len());
        let mut it = m.sigma.into_iter();
        for r in 0..b {
            for s in r..b {
                sigma.push(SigmaEntry {
                    r: r as u32,
                    s: s as u32,
                    keyframes: it.next().unwrap(),
                });
            }
        }
        ScheduleDoc {
            theta: m.theta,
            blocks: m.blocks,
            sigma,
            ground_truth: m.ground_truth,
            events: m.events,
            noise_block: m.noise_block,
        }
    }
}

fn validate_events(events: &[EventSpec], num_blocks: usize) -> Result<()> {
    for e in events {
        if e.t_start >= e.t_end {
            return Err(Error::InvalidModel(format!(
                "event window [{}, {}] is empty",
                e.t_start, e.t_end
            )));
        }
        let min_blocks = match e.kind {
            EventKind::Split | EventKind::Merge => 2,
            EventKind::Birth | EventKind::Death => 1,
        };
        if e.blocks.len() < min_blocks {
            return Err(Error::InvalidModel(format!(
                "{:?} event needs at least {min_blocks} blocks",
                e.kind
            )));
        }
        if let Some(&bad) = e.blocks.iter().find(|&&x| x as usize >= num_blocks) {
            return Err(Error::InvalidModel(format!("event refers to unknown block {bad}")));
        }
    }
    for (i, a) in events.iter().enumerate() {
        for b in &events[i + 1..] {
            let shares = a.blocks.iter().any(|x| b.blocks.contains(x));
            let overlaps = a.t_start < b.t_end && b.t_start < a.t_end;
            if shares && overlaps {
                return Err(Error::InvalidModel(format!(
                    "overlapping event windows [{}, {}] and [{}, {}] on the same blocks",
                    a.t_start, a.t_end, b.t_start, b.t_end
                )));
            }
        }
    }
    Ok(())
}

impl BlockModelSchedule {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn node_count(&self) -> usize {
        self.blocks.node_count()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.num_blocks()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Model blocks; these may be finer than the ground truth (a block that
    /// has not split yet is two model blocks with internal-level coupling).
    pub fn blocks(&self) -> &Partition {
        &self.blocks
    }

    pub fn events(&self) -> &[EventSpec] {
        &self.events
    }

    pub fn noise_block(&self) -> Option<u32> {
        self.noise_block
    }

    /// Nodes of the noise block, if any.
    pub fn noise_nodes(&self) -> Vec<NodeId> {
        match self.noise_block {
            Some(nb) => (0..self.node_count() as NodeId)
                .filter(|&v| self.blocks.label(v) == nb)
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn sigma_entry(&self, r: usize, s: usize) -> &PiecewiseLinear {
        &self.sigma[tri_index(self.num_blocks(), r, s)]
    }

    pub fn sigma(&self, r: usize, s: usize, t: f64) -> f64 {
        self.sigma_entry(r, s).eval(t)
    }

    /// Full symmetric matrix at time `t`, row-major.
    pub fn sigma_matrix(&self, t: f64) -> Vec<f64> {
        let b = self.num_blocks();
        let mut m = vec![0.0; b * b];
        for r in 0..b {
            for s in r..b {
                let v = self.sigma(r, s, t);
                m[r * b + s] = v;
                m[s * b + r] = v;
            }
        }
        m
    }

    /// Expected-count rate between two distinct nodes at time `t`.
    pub fn rate(&self, i: NodeId, j: NodeId, t: f64) -> f64 {
        let (bi, bj) = (self.blocks.label(i) as usize, self.blocks.label(j) as usize);
        self.theta[i as usize] * self.theta[j as usize] * self.sigma(bi, bj, t)
    }

    pub fn ground_truth(&self, segment: usize) -> &Partition {
        let idx = self
            .ground_truth
            .partition_point(|p| p.from_segment <= segment);
        &self.ground_truth[idx - 1].partition
    }

    pub fn truth_phases(&self) -> &[TruthPhase] {
        &self.ground_truth
    }

    /// Segments during which some event is still in progress.
    pub fn in_transition(&self, segment: usize) -> bool {
        let s = segment as u32;
        self.events.iter().any(|e| e.t_start <= s && s < e.t_end)
    }
}

pub fn segment_midpoint(segment: usize) -> f64 {
    segment as f64 + 0.5
}

/// Draws node pairs for one segment in proportion to their rates.
#[derive(Clone, Debug)]
pub struct PairSampler {
    pair_blocks: Vec<(usize, usize)>,
    pair_dist: WeightedIndex<f64>,
    members: Vec<Vec<NodeId>>,
    member_dist: Vec<Option<WeightedIndex<f64>>>,
}

impl PairSampler {
    pub fn new(model: &BlockModelSchedule, segment: usize) -> Result<Self> {
        let t = segment_midpoint(segment);
        let b = model.num_blocks();
        let members = model.blocks().blocks();
        let mut mass = vec![0.0; b];
        let mut square = vec![0.0; b];
        for (r, block) in members.iter().enumerate() {
            for &v in block {
                let th = model.theta[v as usize];
                mass[r] += th;
                square[r] += th * th;
            }
        }
        let mut pair_blocks = Vec::with_capacity(b * (b + 1) / 2);
        let mut weights = Vec::with_capacity(b * (b + 1) / 2);
        for r in 0..b {
            for s in r..b {
                let sig = model.sigma(r, s, t);
                let w = if r == s {
                    sig * (mass[r] * mass[r] - square[r]) / 2.0
                } else {
                    sig * mass[r] * mass[s]
                };
                pair_blocks.push((r, s));
                // Guard tiny negative values from cancellation in the diagonal term.
                weights.push(w.max(0.0));
            }
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::DegenerateModel);
        }
        let pair_dist = WeightedIndex::new(&weights).map_err(|_| Error::DegenerateModel)?;
        let member_dist = members
            .iter()
            .map(|block| WeightedIndex::new(block.iter().map(|&v| model.theta[v as usize])).ok())
            .collect();
        Ok(Self {
            pair_blocks,
            pair_dist,
            members,
            member_dist,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (NodeId, NodeId) {
        let (r, s) = self.pair_blocks[self.pair_dist.sample(rng)];
        let pick = |blk: usize, rng: &mut R| {
            let d = self.member_dist[blk].as_ref().expect("block with positive rate has members");
            self.members[blk][d.sample(rng)]
        };
        loop {
            let i = pick(r, rng);
            let j = pick(s, rng);
            // Self-loops are discarded; rejection keeps the pair law exact.
            if i != j {
                return if i < j { (i, j) } else { (j, i) };
            }
        }
    }
}

/// Samples exactly `edge_budget` edges for one segment.
pub fn sample_segment(
    model: &BlockModelSchedule,
    segment_index: usize,
    edge_budget: usize,
    rng_seed: u64,
) -> Result<SegmentGraph> {
    let pairs = sample_pairs(model, segment_index, edge_budget, rng_seed)?;
    SegmentGraph::from_pairs(segment_index, model.node_count(), pairs)
}

/// Ordered list of sampled pairs; prefixes of it are valid smaller samples.
pub fn sample_pairs(
    model: &BlockModelSchedule,
    segment_index: usize,
    edge_budget: usize,
    rng_seed: u64,
) -> Result<Vec<(NodeId, NodeId)>> {
    if edge_budget == 0 {
        return Err(Error::InvalidModel("edge budget must be positive".into()));
    }
    let sampler = PairSampler::new(model, segment_index)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok((0..edge_budget).map(|_| sampler.sample(&mut rng)).collect())
}

/// Samples every segment and stamps each edge with its segment index.
pub fn sample_dynamic(
    model: &BlockModelSchedule,
    segments: usize,
    per_segment_budget: usize,
    master_seed: u64,
) -> Result<DynamicGraph> {
    let mut edges = Vec::with_capacity(segments * per_segment_budget);
    for s in 0..segments {
        let seed = seed::seed_for(master_seed, seed::Stream::Generate, 0, s as u32, 0);
        for (u, v) in sample_pairs(model, s, per_segment_budget, seed)? {
            edges.push(TimestampedEdge::new(u, v, s as f64));
        }
    }
    DynamicGraph::new(model.node_count(), edges)
}

/// Rate levels that give a requested external/internal edge ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateLevels {
    pub internal: f64,
    pub external: f64,
}

impl RateLevels {
    /// With `internal = 1`, chooses `external` so that the expected number of
    /// edges between groups divided by the number within groups equals
    /// `ratio`. With unit theta the expected counts are proportional to
    /// `internal * sum_g C(n_g, 2)` and `external * sum_{g<h} n_g n_h`.
    pub fn for_ratio(group_sizes: &[usize], ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 0.0) {
            return Err(Error::InvalidModel(format!("bad edge ratio {ratio}")));
        }
        let total: f64 = group_sizes.iter().map(|&n| n as f64).sum();
        let within: f64 = group_sizes
            .iter()
            .map(|&n| n as f64 * (n as f64 - 1.0) / 2.0)
            .sum();
        let squares: f64 = group_sizes.iter().map(|&n| (n as f64).powi(2)).sum();
        let between = (total * total - squares) / 2.0;
        if within <= 0.0 || between <= 0.0 {
            return Err(Error::InvalidModel(
                "need at least two groups with internal pairs".into(),
            ));
        }
        Ok(Self {
            internal: 1.0,
            external: ratio * within / between,
        })
    }
}

/// Assembles a schedule from model blocks, constant levels and events.
#[derive(Clone, Debug)]
pub struct ScheduleBuilder {
    block_sizes: Vec<usize>,
    theta: Option<Vec<f64>>,
    levels: RateLevels,
    noise: Option<(u32, f64)>,
    events: Vec<EventSpec>,
    num_segments: usize,
}

impl ScheduleBuilder {
    pub fn new(block_sizes: Vec<usize>, levels: RateLevels, num_segments: usize) -> Self {
        Self {
            block_sizes,
            theta: None,
            levels,
            noise: None,
            events: Vec::new(),
            num_segments,
        }
    }

    pub fn theta(mut self, theta: Vec<f64>) -> Self {
        self.theta = Some(theta);
        self
    }

    /// Marks a block whose nodes connect to every node at `level`.
    pub fn noise_block(mut self, block: u32, level: f64) -> Self {
        self.noise = Some((block, level));
        self
    }

    pub fn event(mut self, event: EventSpec) -> Self {
        self.events.push(event);
        self
    }

    pub fn build(self) -> Result<BlockModelSchedule> {
        let b = self.block_sizes.len();
        if b == 0 || self.block_sizes.contains(&0) {
            return Err(Error::InvalidModel("blocks must be non-empty".into()));
        }
        if self.num_segments == 0 {
            return Err(Error::InvalidModel("need at least one segment".into()));
        }
        validate_events(&self.events, b)?;
        let noise_block = self.noise.map(|(nb, _)| nb);
        if let Some(nb) = noise_block {
            if nb as usize >= b {
                return Err(Error::InvalidModel(format!("noise block {nb} out of range")));
            }
            if self.events.iter().any(|e| e.blocks.contains(&nb)) {
                return Err(Error::InvalidModel("events cannot involve the noise block".into()));
            }
        }
        let labels: Vec<u32> = self
            .block_sizes
            .iter()
            .enumerate()
            .flat_map(|(r, &n)| std::iter::repeat_n(r as u32, n))
            .collect();
        let n = labels.len();
        let blocks = Partition::new(labels)?;
        let theta = self.theta.unwrap_or_else(|| vec![1.0; n]);

        let RateLevels { internal, external } = self.levels;
        let mut keyframes: Vec<Vec<Keyframe>> = vec![Vec::new(); b * (b + 1) / 2];
        for e in &self.events {
            let (t0, t1) = (e.t_start as f64, e.t_end as f64);
            let (from, to) = match e.kind {
                EventKind::Split | EventKind::Death => (internal, external),
                EventKind::Merge | EventKind::Birth => (external, internal),
            };
            let entries: Vec<(usize, usize)> = match e.kind {
                EventKind::Split | EventKind::Merge => {
                    let mut v = Vec::new();
                    for (i, &x) in e.blocks.iter().enumerate() {
                        for &y in &e.blocks[i + 1..] {
                            v.push((x as usize, y as usize));
                        }
                    }
                    v
                }
                EventKind::Birth | EventKind::Death => {
                    e.blocks.iter().map(|&x| (x as usize, x as usize)).collect()
                }
            };
            for (x, y) in entries {
                let k = &mut keyframes[tri_index(b, x, y)];
                k.push(Keyframe { t: t0, value: from });
                k.push(Keyframe { t: t1, value: to });
            }
        }
        let mut sigma = Vec::with_capacity(b * (b + 1) / 2);
        for r in 0..b {
            for s in r..b {
                let entry = match self.noise {
                    Some((nb, level)) if r == nb as usize || s == nb as usize => {
                        PiecewiseLinear::constant(level)
                    }
                    _ => {
                        let k = std::mem::take(&mut keyframes[tri_index(b, r, s)]);
                        if k.is_empty() {
                            PiecewiseLinear::constant(if r == s { internal } else { external })
                        } else {
                            PiecewiseLinear::new(k)?
                        }
                    }
                };
                sigma.push(entry);
            }
        }

        let mut ground_truth: Vec<TruthPhase> = Vec::new();
        for segment in 0..self.num_segments {
            let truth = truth_at(&blocks, &self.events, b, segment)?;
            if ground_truth.last().map(|p| &p.partition) != Some(&truth) {
                ground_truth.push(TruthPhase {
                    from_segment: segment,
                    partition: truth,
                });
            }
        }
        Ok(BlockModelSchedule {
            theta,
            blocks,
            sigma,
            ground_truth,
            events: self.events,
            noise_block,
        })
    }
}

/// Ground truth at a segment: during a transition the truth is already the
/// structure at the end of the transition.
fn truth_at(blocks: &Partition, events: &[EventSpec], b: usize, segment: usize) -> Result<Partition> {
    let mut parent: Vec<usize> = (0..b).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let s = segment as u32;
    for e in events {
        let joined = match e.kind {
            EventKind::Split => s < e.t_start,
            EventKind::Merge => s >= e.t_start,
            EventKind::Birth | EventKind::Death => false,
        };
        if joined {
            let first = e.blocks[0] as usize;
            for &x in &e.blocks[1..] {
                let (ra, rb) = (find(&mut parent, first), find(&mut parent, x as usize));
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let group: Vec<u32> = (0..b).map(|r| find(&mut parent, r) as u32).collect();
    Partition::from_labels(&blocks.labels().iter().map(|&l| group[l as usize]).collect::<Vec<_>>())
}

/// Parameters of the split/merge benchmark: a block that splits in two, two
/// blocks that merge, constant blocks and a group of noise nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitMergeParams {
    pub split_size: usize,
    pub merge_sizes: (usize, usize),
    pub constant_blocks: usize,
    pub constant_size: usize,
    pub noise_size: usize,
    pub split_window: (u32, u32),
    pub merge_window: (u32, u32),
    pub num_segments: usize,
    /// External/internal edge ratio among structured groups at segment 0.
    pub edge_ratio: f64,
    /// Noise rate relative to the one that gives noise nodes the mean
    /// structured degree.
    pub noise_factor: f64,
}

impl Default for SplitMergeParams {
    fn default() -> Self {
        Self {
            split_size: 100,
            merge_sizes: (50, 50),
            constant_blocks: 5,
            constant_size: 50,
            noise_size: 50,
            split_window: (2, 4),
            merge_window: (6, 8),
            num_segments: 10,
            edge_ratio: 0.2,
            noise_factor: 1.0,
        }
    }
}

/// Builds the split/merge schedule. Model blocks are, in node order: the two
/// halves of the splitting block, the two merging blocks, the constant
/// blocks, then the noise block when `noise_size > 0`.
pub fn build_split_merge_model(p: &SplitMergeParams) -> Result<BlockModelSchedule> {
    if p.split_size < 2 || p.merge_sizes.0 == 0 || p.merge_sizes.1 == 0 {
        return Err(Error::InvalidModel(
            "split block needs two nodes and merging blocks must be non-empty".into(),
        ));
    }
    if p.constant_blocks > 0 && p.constant_size == 0 {
        return Err(Error::InvalidModel("constant blocks must be non-empty".into()));
    }
    let half = p.split_size / 2;
    let mut sizes = vec![half, p.split_size - half, p.merge_sizes.0, p.merge_sizes.1];
    sizes.extend(std::iter::repeat_n(p.constant_size, p.constant_blocks));

    let mut groups = vec![p.split_size, p.merge_sizes.0, p.merge_sizes.1];
    groups.extend(std::iter::repeat_n(p.constant_size, p.constant_blocks));
    let levels = RateLevels::for_ratio(&groups, p.edge_ratio)?;

    let mut builder = ScheduleBuilder::new(sizes.clone(), levels, p.num_segments)
        .event(EventSpec {
            kind: EventKind::Split,
            blocks: vec![0, 1],
            t_start: p.split_window.0,
            t_end: p.split_window.1,
        })
        .event(EventSpec {
            kind: EventKind::Merge,
            blocks: vec![2, 3],
            t_start: p.merge_window.0,
            t_end: p.merge_window.1,
        });
    if p.noise_size > 0 {
        let structured: usize = groups.iter().sum();
        let within: f64 = groups.iter().map(|&n| n as f64 * (n as f64 - 1.0) / 2.0).sum();
        let between = (structured as f64).powi(2) / 2.0
            - groups.iter().map(|&n| (n as f64).powi(2)).sum::<f64>() / 2.0;
        let mean_degree =
            2.0 * (levels.internal * within + levels.external * between) / structured as f64;
        let total = structured + p.noise_size;
        let level = p.noise_factor * mean_degree / (total as f64 - 1.0);
        builder = builder.noise_block(sizes.len() as u32, level);
        sizes.push(p.noise_size);
        builder.block_sizes = sizes;
    }
    builder.build()
}

/// Static planted partition with the requested external/internal ratio.
pub fn build_planted_model(
    node_count: usize,
    num_blocks: usize,
    edge_ratio: f64,
) -> Result<BlockModelSchedule> {
    if num_blocks == 0 || num_blocks > node_count {
        return Err(Error::InvalidModel(format!(
            "cannot split {node_count} nodes into {num_blocks} blocks"
        )));
    }
    let sizes: Vec<usize> = (0..num_blocks)
        .map(|r| node_count / num_blocks + usize::from(r < node_count % num_blocks))
        .collect();
    let levels = RateLevels::for_ratio(&sizes, edge_ratio)?;
    ScheduleBuilder::new(sizes, levels, 1).build()
}

/// Real graph with synthetic nodes and edges appended.
#[derive(Clone, Debug)]
pub struct InjectedGraph {
    pub graph: DynamicGraph,
    /// Synthetic node `v` of the model is node `synthetic_offset + v`.
    pub synthetic_offset: usize,
}

impl InjectedGraph {
    pub fn synthetic_nodes(&self) -> std::ops::Range<NodeId> {
        self.synthetic_offset as NodeId..self.graph.node_count() as NodeId
    }
}

/// Inserts model-sampled nodes and edges into a real edge stream.
///
/// Per segment, `round(cross_fraction * budget)` edges join a uniformly random
/// synthetic node to a uniformly random real node and the rest are sampled
/// from the model between synthetic nodes. Synthetic edges carry the segment
/// start time. Real edges are copied unchanged. The synthetic-synthetic edges
/// of segment `s` equal `sample_segment(model, s, n, segment_seed(seed, s))`.
pub fn inject(
    real: &DynamicGraph,
    segmentation: &TimeSegmentation,
    model: &BlockModelSchedule,
    per_segment_budget: usize,
    cross_fraction: f64,
    seed: u64,
) -> Result<InjectedGraph> {
    if real.is_empty() || real.node_count() == 0 {
        return Err(Error::NoEdges);
    }
    if !(0.0..=1.0).contains(&cross_fraction) {
        return Err(Error::InvalidModel(format!(
            "cross fraction {cross_fraction} outside [0, 1]"
        )));
    }
    segmentation.validate()?;
    let offset = real.node_count();
    let synth = model.node_count();
    let n_cross = (cross_fraction * per_segment_budget as f64).round() as usize;
    let n_model = per_segment_budget - n_cross;
    let mut edges = real.edges().to_vec();
    for s in 0..segmentation.count {
        let t = segmentation.segment_start(s);
        if n_model > 0 {
            for (u, v) in sample_pairs(model, s, n_model, segment_seed(seed, s))? {
                edges.push(TimestampedEdge::new(
                    u + offset as NodeId,
                    v + offset as NodeId,
                    t,
                ));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::seed_for(
            seed,
            seed::Stream::Cross,
            0,
            s as u32,
            0,
        ));
        for _ in 0..n_cross {
            let u = (offset + rng.gen_range(0..synth)) as NodeId;
            let v = rng.gen_range(0..offset) as NodeId;
            edges.push(TimestampedEdge::new(u, v, t));
        }
    }
    Ok(InjectedGraph {
        graph: DynamicGraph::new(offset + synth, edges)?,
        synthetic_offset: offset,
    })
}

pub fn segment_seed(seed: u64, segment: usize) -> u64 {
    seed::seed_for(seed, seed::Stream::Generate, 0, segment as u32, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn two_blocks(sigma01: f64) -> BlockModelSchedule {
        ScheduleBuilder::new(
            vec![3, 3],
            RateLevels {
                internal: 1.0,
                external: sigma01,
            },
            1,
        )
        .build()
        .unwrap()
    }

    #[test]
    fn piecewise_linear_eval() {
        let f = PiecewiseLinear::new(vec![
            Keyframe { t: 4.0, value: 0.0 },
            Keyframe { t: 2.0, value: 1.0 },
        ])
        .unwrap();
        assert_eq!(f.eval(0.0), 1.0);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(3.0), 0.5);
        assert_eq!(f.eval(4.0), 0.0);
        assert_eq!(f.eval(9.0), 0.0);
        assert!(PiecewiseLinear::new(vec![]).is_err());
        assert!(PiecewiseLinear::new(vec![Keyframe { t: 0.0, value: -1.0 }]).is_err());
    }

    #[test]
    fn only_nonzero_rate_is_inside_block_zero() {
        let doc = ScheduleDoc {
            theta: vec![1.0; 6],
            blocks: Partition::new(vec![0, 0, 0, 1, 1, 1]).unwrap(),
            sigma: vec![SigmaEntry {
                r: 0,
                s: 0,
                keyframes: PiecewiseLinear::constant(1.0),
            }],
            ground_truth: vec![TruthPhase {
                from_segment: 0,
                partition: Partition::new(vec![0, 0, 0, 1, 1, 1]).unwrap(),
            }],
            events: vec![],
            noise_block: None,
        };
        let model = BlockModelSchedule::try_from(doc).unwrap();
        let g = sample_segment(&model, 0, 500, 3).unwrap();
        assert_eq!(g.edge_count(), 500);
        assert!(g.edges().iter().all(|&(u, v, _)| u < 3 && v < 3));
    }

    #[test]
    fn all_zero_rates_are_degenerate() {
        let model = ScheduleBuilder::new(
            vec![2, 2],
            RateLevels {
                internal: 0.0,
                external: 0.0,
            },
            1,
        )
        .build()
        .unwrap();
        assert!(matches!(sample_segment(&model, 0, 10, 0), Err(Error::DegenerateModel)));
        // A block of one node has no internal pairs either.
        let lonely = ScheduleBuilder::new(
            vec![1, 1],
            RateLevels {
                internal: 1.0,
                external: 0.0,
            },
            1,
        )
        .build()
        .unwrap();
        assert!(matches!(sample_segment(&lonely, 0, 10, 0), Err(Error::DegenerateModel)));
    }

    #[test]
    fn sampling_is_deterministic_and_undirected() {
        let model = build_planted_model(60, 3, 0.2).unwrap();
        let a = sample_segment(&model, 0, 400, 11).unwrap();
        let b = sample_segment(&model, 0, 400, 11).unwrap();
        let c = sample_segment(&model, 0, 400, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.edges().iter().all(|&(u, v, _)| u < v));
    }

    #[test]
    fn pair_frequencies_match_rates() {
        // Oracle: normalized rates computed directly from theta and sigma.
        let model = two_blocks(0.0);
        let draws = 100_000usize;
        let g = sample_segment(&model, 0, draws, 2024).unwrap();
        let mut total_rate = 0.0;
        let mut rates = HashMap::new();
        for i in 0..6u32 {
            for j in i + 1..6 {
                let r = model.rate(i, j, 0.5);
                total_rate += r;
                rates.insert((i, j), r);
            }
        }
        for (&(i, j), &r) in &rates {
            let p = r / total_rate;
            let observed = g.multiplicity(i, j) as f64;
            let expected = p * draws as f64;
            let se = (draws as f64 * p * (1.0 - p)).sqrt();
            if p == 0.0 {
                assert_eq!(observed, 0.0, "pair ({i},{j}) has zero rate");
            } else {
                assert!(
                    (observed - expected).abs() <= 3.0 * se,
                    "pair ({i},{j}): observed {observed}, expected {expected} ± {se}"
                );
            }
        }
    }

    #[test]
    fn planted_ratio_is_one_to_five() {
        let model = build_planted_model(500, 8, 0.2).unwrap();
        let truth = model.ground_truth(0).clone();
        let (mut ext, mut int) = (0u64, 0u64);
        for seed in 0..20 {
            let g = sample_segment(&model, 0, 1900, seed).unwrap();
            for &(u, v, m) in g.edges() {
                if truth.label(u) == truth.label(v) {
                    int += m as u64;
                } else {
                    ext += m as u64;
                }
            }
        }
        let n = (ext + int) as f64;
        let p = ext as f64 / n;
        // Binomial standard error of the external fraction around 1/6.
        let se = ((1.0 / 6.0) * (5.0 / 6.0) / n).sqrt();
        assert!((p - 1.0 / 6.0).abs() < 4.0 * se, "external fraction {p}");
    }

    #[test]
    fn split_ramp_endpoints() {
        let m = build_split_merge_model(&SplitMergeParams::default()).unwrap();
        let lv = RateLevels::for_ratio(&[100, 50, 50, 50, 50, 50, 50, 50], 0.2).unwrap();
        let entry = m.sigma_entry(0, 1);
        for t in [0.0, 1.0, 2.0] {
            assert_eq!(entry.eval(t), lv.internal);
        }
        for t in [4.0, 5.5, 9.5] {
            assert_eq!(entry.eval(t), lv.external);
        }
        let mid = entry.eval(3.0);
        assert!((mid - (lv.internal + lv.external) / 2.0).abs() <= 1e-15);
        let merge = m.sigma_entry(2, 3);
        assert_eq!(merge.eval(6.0), lv.external);
        assert_eq!(merge.eval(8.0), lv.internal);
        assert!((merge.eval(7.0) - (lv.internal + lv.external) / 2.0).abs() <= 1e-15);
        // Untouched pairs stay constant.
        assert_eq!(m.sigma(4, 4, 3.3), lv.internal);
        assert_eq!(m.sigma(4, 5, 3.3), lv.external);
    }

    #[test]
    fn split_merge_defaults() {
        let m = build_split_merge_model(&SplitMergeParams::default()).unwrap();
        assert_eq!(m.node_count(), 500);
        assert_eq!(m.num_blocks(), 10);
        // Oracle: 1 split parent + 2 pre-merge + 5 constant + 1 noise.
        assert_eq!(m.ground_truth(0).num_blocks(), 9);
        assert_eq!(m.ground_truth(1).num_blocks(), 9);
        // Transition segments already carry the end-of-transition truth.
        assert_eq!(m.ground_truth(2).num_blocks(), 10);
        assert_eq!(m.ground_truth(5).num_blocks(), 10);
        assert_eq!(m.ground_truth(6).num_blocks(), 9);
        // 2 split children + 1 merged + 5 constant + 1 noise.
        assert_eq!(m.ground_truth(9).num_blocks(), 9);
        assert_eq!(m.noise_nodes().len(), 50);
        assert!(m.in_transition(2) && m.in_transition(3) && !m.in_transition(4));
        assert!(m.in_transition(6) && m.in_transition(7) && !m.in_transition(8));
        let sizes9 = {
            let mut s = m.ground_truth(9).block_sizes();
            s.sort_unstable();
            s
        };
        assert_eq!(sizes9, vec![50, 50, 50, 50, 50, 50, 50, 50, 100]);
    }

    #[test]
    fn overlapping_events_on_same_block_rejected() {
        let lv = RateLevels {
            internal: 1.0,
            external: 0.1,
        };
        let err = ScheduleBuilder::new(vec![5, 5, 5], lv, 10)
            .event(EventSpec {
                kind: EventKind::Split,
                blocks: vec![0, 1],
                t_start: 2,
                t_end: 5,
            })
            .event(EventSpec {
                kind: EventKind::Merge,
                blocks: vec![1, 2],
                t_start: 4,
                t_end: 6,
            })
            .build();
        assert!(matches!(err, Err(Error::InvalidModel(_))));
        let bad_window = SplitMergeParams {
            split_window: (4, 4),
            ..Default::default()
        };
        assert!(build_split_merge_model(&bad_window).is_err());
        // Same blocks, disjoint windows: allowed.
        ScheduleBuilder::new(vec![5, 5], lv, 10)
            .event(EventSpec {
                kind: EventKind::Split,
                blocks: vec![0, 1],
                t_start: 1,
                t_end: 3,
            })
            .event(EventSpec {
                kind: EventKind::Merge,
                blocks: vec![0, 1],
                t_start: 5,
                t_end: 7,
            })
            .build()
            .unwrap();
    }

    #[test]
    fn birth_ramps_internal_rate() {
        let lv = RateLevels {
            internal: 1.0,
            external: 0.2,
        };
        let m = ScheduleBuilder::new(vec![4, 4], lv, 6)
            .event(EventSpec {
                kind: EventKind::Birth,
                blocks: vec![1],
                t_start: 1,
                t_end: 3,
            })
            .build()
            .unwrap();
        assert_eq!(m.sigma(1, 1, 0.5), 0.2);
        assert!((m.sigma(1, 1, 2.0) - 0.6).abs() < 1e-15);
        assert_eq!(m.sigma(1, 1, 3.5), 1.0);
        assert_eq!(m.ground_truth(0).num_blocks(), 2);
    }

    #[test]
    fn schedule_json_round_trip() {
        let m = build_split_merge_model(&SplitMergeParams::default()).unwrap();
        let text = m.to_json().unwrap();
        let back = BlockModelSchedule::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert!(BlockModelSchedule::from_json("{\"theta\":[1.0]}").is_err());
    }

    #[test]
    fn degree_correction_shifts_mass() {
        let mut theta = vec![1.0; 6];
        theta[0] = 5.0;
        let model = ScheduleBuilder::new(
            vec![6],
            RateLevels {
                internal: 1.0,
                external: 0.0,
            },
            1,
        )
        .theta(theta)
        .build()
        .unwrap();
        let g = sample_segment(&model, 0, 20_000, 1).unwrap();
        let deg = g.degrees();
        // Node 0 touches pairs with weight 5 each: 25 / (25 + 10) of all mass.
        let share = deg[0] as f64 / g.edge_count() as f64;
        assert!((share - 25.0 / 35.0).abs() < 0.02, "share {share}");
    }

    fn real_graph() -> (DynamicGraph, TimeSegmentation) {
        let seg = TimeSegmentation::new(0.0, 10.0, 3).unwrap();
        let edges = (0..30u32)
            .map(|i| TimestampedEdge::new(i % 7, (i * 3 + 1) % 7, i as f64))
            .filter(|e| e.src != e.dst)
            .collect();
        (DynamicGraph::new(7, edges).unwrap(), seg)
    }

    #[test]
    fn inject_splits_budget() {
        let (real, seg) = real_graph();
        let model = build_split_merge_model(&SplitMergeParams {
            constant_blocks: 0,
            noise_size: 0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(model.node_count(), 200);
        let out = inject(&real, &seg, &model, 960, 160.0 / 960.0, 5).unwrap();
        assert_eq!(out.synthetic_offset, 7);
        assert_eq!(out.graph.node_count(), 207);
        assert_eq!(&out.graph.edges()[..real.edges().len()], real.edges());
        let parts = out.graph.slice(&seg).unwrap();
        for p in &parts {
            let (mut ss, mut sr) = (0, 0);
            for &(u, v, m) in p.edges() {
                match (u >= 7, v >= 7) {
                    (true, true) => ss += m,
                    (false, true) | (true, false) => sr += m,
                    _ => {}
                }
            }
            assert_eq!((ss, sr), (800, 160));
        }
    }

    #[test]
    fn inject_degenerate_fractions() {
        let (real, seg) = real_graph();
        let model = build_planted_model(20, 2, 0.2).unwrap();
        let none = inject(&real, &seg, &model, 50, 0.0, 9).unwrap();
        let synthetic: Vec<_> = none.graph.edges()[real.edges().len()..].to_vec();
        for s in 0..seg.count {
            let expect = sample_segment(&model, s, 50, segment_seed(9, s)).unwrap();
            let got = SegmentGraph::from_pairs(
                s,
                20,
                synthetic
                    .iter()
                    .filter(|e| seg.segment_of(e.t) == Some(s))
                    .map(|e| (e.src - 7, e.dst - 7)),
            )
            .unwrap();
            assert_eq!(got, expect);
        }
        let all = inject(&real, &seg, &model, 50, 1.0, 9).unwrap();
        assert!(all.graph.edges()[real.edges().len()..]
            .iter()
            .all(|e| (e.src >= 7) != (e.dst >= 7)));
        let empty = DynamicGraph::new(3, vec![]).unwrap();
        assert!(inject(&empty, &seg, &model, 50, 0.5, 1).is_err());
        assert!(inject(&real, &seg, &model, 50, 1.5, 1).is_err());
    }
}
