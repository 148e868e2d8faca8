//! Resolution of a cloud of partitions into one representative partition.
//!
//! Every block of every partition in the cloud is scored by how well it is
//! matched elsewhere: for block `x` of partition `k`, the score is the mean
//! over the other partitions `l != k` of `max_y H(x, y)`, with `H` the
//! Jaccard index. Context clouds from neighbouring segments add their
//! partitions to that mean under the same `l != k` index rule.
//!
//! The representative is built greedily from the highest-scoring blocks and
//! has exactly as many blocks as the lower median of the cloud's block counts:
//!
//! 1. Blocks are visited by [`selection_order`]; a block is accepted if none
//!    of its members is claimed yet.
//! 2. If fewer than the target were accepted, further visits accept the
//!    unclaimed remainder of blocks that are at least half unclaimed, then of
//!    any block.
//! 3. If still short, accepted blocks are split along candidate boundaries.
//! 4. Unclaimed nodes join the accepted block with the highest Jaccard index
//!    to any cloud block containing them; ties go to the larger accepted
//!    block, then the earlier one.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{blocks_of, NodeId, Partition};

/// The K partitions produced for one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionCloud {
    pub segment_index: usize,
    pub partitions: Vec<Partition>,
}

impl PartitionCloud {
    pub fn new(segment_index: usize, partitions: Vec<Partition>) -> Result<Self> {
        let Some(first) = partitions.first() else {
            return Err(Error::InvalidPartition("a cloud needs at least one partition".into()));
        };
        let n = first.node_count();
        if let Some(bad) = partitions.iter().find(|p| p.node_count() != n) {
            return Err(Error::UniverseMismatch {
                expected: n,
                found: bad.node_count(),
            });
        }
        Ok(Self {
            segment_index,
            partitions,
        })
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.partitions.first().map_or(0, Partition::node_count)
    }

    /// Lower median of the block counts.
    pub fn median_block_count(&self) -> usize {
        let mut counts: Vec<usize> = self.partitions.iter().map(Partition::num_blocks).collect();
        counts.sort_unstable();
        counts[(counts.len() - 1) / 2]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockScore {
    /// Index of the partition within its cloud.
    pub partition: usize,
    /// Label of the block within that partition.
    pub block: u32,
    pub score: f64,
    /// Members in ascending order.
    pub members: Vec<NodeId>,
}

/// Jaccard index of two node sets.
pub fn similarity(x: &[NodeId], y: &[NodeId]) -> Result<f64> {
    let x: BTreeSet<NodeId> = x.iter().copied().collect();
    let y: BTreeSet<NodeId> = y.iter().copied().collect();
    let union = x.union(&y).count();
    if union == 0 {
        return Err(Error::EmptySets);
    }
    Ok(x.intersection(&y).count() as f64 / union as f64)
}

struct Indexed<'a> {
    partition: &'a Partition,
    blocks: Vec<Vec<NodeId>>,
}

impl<'a> Indexed<'a> {
    fn new(partition: &'a Partition) -> Self {
        Self {
            partition,
            blocks: blocks_of(partition),
        }
    }
}

/// `|x ∩ y|` for block `bx` of `px` and block `by` of `py`, walking the
/// smaller block and probing the other partition's label array.
fn intersection(px: &Indexed, bx: usize, py: &Indexed, by: usize, work: &mut u64) -> usize {
    let (x, y) = (&px.blocks[bx], &py.blocks[by]);
    if x.len() <= y.len() {
        *work += x.len() as u64;
        x.iter().filter(|&&v| py.partition.label(v) as usize == by).count()
    } else {
        *work += y.len() as u64;
        y.iter().filter(|&&v| px.partition.label(v) as usize == bx).count()
    }
}

fn best_match(px: &Indexed, bx: usize, py: &Indexed, work: &mut u64) -> f64 {
    let nx = px.blocks[bx].len();
    (0..py.blocks.len())
        .map(|by| {
            let i = intersection(px, bx, py, by, work);
            i as f64 / (nx + py.blocks[by].len() - i) as f64
        })
        .fold(0.0, f64::max)
}

fn check_context(cloud: &PartitionCloud, context: &[PartitionCloud]) -> Result<()> {
    let n = cloud.node_count();
    for c in context {
        if c.node_count() != n {
            return Err(Error::UniverseMismatch {
                expected: n,
                found: c.node_count(),
            });
        }
    }
    Ok(())
}

/// Scores every block of every partition in `cloud`.
pub fn score_blocks(cloud: &PartitionCloud, context: &[PartitionCloud]) -> Result<Vec<BlockScore>> {
    Ok(score_blocks_counted(cloud, context)?.0)
}

/// As [`score_blocks`], also returning the number of label probes made by
/// the block intersections.
pub fn score_blocks_counted(cloud: &PartitionCloud, context: &[PartitionCloud]) -> Result<(Vec<BlockScore>, u64)> {
    check_context(cloud, context)?;
    let own: Vec<Indexed> = cloud.partitions.iter().map(Indexed::new).collect();
    let ctx: Vec<Vec<Indexed>> = context
        .iter()
        .map(|c| c.partitions.iter().map(Indexed::new).collect())
        .collect();
    let mut work = 0u64;
    let mut scores = Vec::new();
    for (k, pk) in own.iter().enumerate() {
        for x in 0..pk.blocks.len() {
            let mut terms: Vec<f64> = Vec::new();
            for others in std::iter::once(&own).chain(ctx.iter()) {
                for (l, pl) in others.iter().enumerate() {
                    if l != k {
                        terms.push(best_match(pk, x, pl, &mut work));
                    }
                }
            }
            if terms.is_empty() {
                return Err(Error::ExpectationUndefined);
            }
            // Summing in sorted order makes the score independent of partition order.
            terms.sort_by(f64::total_cmp);
            let score = terms.iter().sum::<f64>() / terms.len() as f64;
            scores.push(BlockScore {
                partition: k,
                block: x as u32,
                score,
                members: pk.blocks[x].clone(),
            });
        }
    }
    Ok((scores, work))
}

/// Scores are compared on a grid of this resolution, so that equal scores
/// reached through different floating-point sums tie.
pub const SCORE_RESOLUTION: f64 = 1e-9;

pub fn score_key(score: f64) -> i64 {
    (score / SCORE_RESOLUTION).round() as i64
}

/// Order used by the greedy selection: score descending (see
/// [`score_key`]), then size descending, then members lexicographically
/// ascending.
pub fn selection_order(a: &BlockScore, b: &BlockScore) -> Ordering {
    score_key(b.score)
        .cmp(&score_key(a.score))
        .then(b.members.len().cmp(&a.members.len()))
        .then_with(|| a.members.cmp(&b.members))
}

/// Representative partition of `cloud`, with exactly
/// [`PartitionCloud::median_block_count`] blocks.
pub fn resolve(cloud: &PartitionCloud, context: &[PartitionCloud]) -> Result<Partition> {
    let mut scores = score_blocks(cloud, context)?;
    scores.sort_by(selection_order);
    let n = cloud.node_count();
    let target = cloud.median_block_count();

    let mut owner = vec![u32::MAX; n];
    let mut accepted: Vec<Vec<NodeId>> = Vec::new();
    // Passes take blocks whose unclaimed part is all of, at least half of,
    // then any of the block. Near-duplicates of an accepted block are thus
    // skipped before slivers of them are taken.
    for min_fresh in [1.0, 0.5, 0.0] {
        for s in &scores {
            if accepted.len() == target {
                break;
            }
            let fresh: Vec<NodeId> = s.members.iter().copied().filter(|&v| owner[v as usize] == u32::MAX).collect();
            if fresh.is_empty() || (fresh.len() as f64) < min_fresh * s.members.len() as f64 {
                continue;
            }
            for &v in &fresh {
                owner[v as usize] = accepted.len() as u32;
            }
            accepted.push(fresh);
        }
    }

    // Every node is claimed but too few blocks were accepted: refine the
    // accepted blocks along candidate boundaries. The common refinement of
    // the cloud has at least `target` blocks, so this always terminates.
    'split: for s in &scores {
        if accepted.len() == target {
            break;
        }
        let inside: BTreeSet<NodeId> = s.members.iter().copied().collect();
        for a in 0..accepted.len() {
            let (keep, moved): (Vec<NodeId>, Vec<NodeId>) = accepted[a].iter().partition(|v| inside.contains(v));
            if keep.is_empty() || moved.is_empty() {
                continue;
            }
            for &v in &moved {
                owner[v as usize] = accepted.len() as u32;
            }
            accepted[a] = keep;
            accepted.push(moved);
            if accepted.len() == target {
                break 'split;
            }
        }
    }

    attach_leftovers(cloud, &accepted, &mut owner);
    Partition::new(owner).map(|p| p.canonical())
}

/// Attaches each unclaimed node to the accepted block most similar to any
/// cloud block containing it; ties go to the larger accepted block, then the
/// earlier one.
fn attach_leftovers(cloud: &PartitionCloud, accepted: &[Vec<NodeId>], owner: &mut [u32]) {
    if owner.iter().all(|&o| o != u32::MAX) {
        return;
    }
    let accepted_sets: Vec<BTreeSet<NodeId>> = accepted.iter().map(|a| a.iter().copied().collect()).collect();
    // jaccard[k][y][a] for cloud block y of partition k against accepted block a.
    let jaccard: Vec<Vec<Vec<f64>>> = cloud
        .partitions
        .iter()
        .map(|p| {
            blocks_of(p)
                .iter()
                .map(|y| {
                    accepted_sets
                        .iter()
                        .map(|a| {
                            let i = y.iter().filter(|v| a.contains(v)).count();
                            i as f64 / (y.len() + a.len() - i) as f64
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    for v in 0..owner.len() {
        if owner[v] != u32::MAX {
            continue;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, p) in cloud.partitions.iter().enumerate() {
            let row = &jaccard[k][p.label(v as NodeId) as usize];
            for (a, &h) in row.iter().enumerate() {
                let better = match best {
                    None => true,
                    Some((bh, bsize, ba)) => {
                        h > bh || (h == bh && (accepted[a].len() > bsize || (accepted[a].len() == bsize && a < ba)))
                    }
                };
                if better {
                    best = Some((h, accepted[a].len(), a));
                }
            }
        }
        owner[v] = best.expect("at least one accepted block").2 as u32;
    }
}

/// Predicted comparison work: `sum over ordered pairs k != l of N * min(c_k, c_l)`.
pub fn resolution_cost_estimate(cloud: &PartitionCloud) -> u64 {
    let n = cloud.node_count() as u64;
    let counts: Vec<u64> = cloud.partitions.iter().map(|p| p.num_blocks() as u64).collect();
    let mut total = 0;
    for (k, &ck) in counts.iter().enumerate() {
        for (l, &cl) in counts.iter().enumerate() {
            if k != l {
                total += n * ck.min(cl);
            }
        }
    }
    total
}
