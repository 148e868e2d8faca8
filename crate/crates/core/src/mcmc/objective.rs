//! Description length of the degree-corrected block model.
//!
//! For `E` edges, node degrees `k_i`, block edge-end counts `e_rs` (with
//! `e_rr` counting each internal edge twice), block degrees `e_r` and `B`
//! blocks over `N` nodes:
//!
//! ```text
//! S = E + sum_r e_r ln e_r - 1/2 sum_rs e_rs ln e_rs - sum_i k_i ln k_i + sum_ij ln A_ij!
//!     + E h(B (B + 1) / 2E) + N ln B,        h(x) = (1 + x) ln(1 + x) - x ln x
//! ```
//!
//! The first line is the negative log-likelihood of the Poisson model at its
//! maximum-likelihood parameters; the second is the cost of describing the
//! block matrix and the node labels. Self-loops are ignored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Partition, SegmentGraph};

/// Description length in nats; lower is better.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub value: f64,
}

pub(crate) fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn h(x: f64) -> f64 {
    (1.0 + x) * (1.0 + x).ln() - xlogx(x)
}

/// Model-description term for `b` blocks.
pub(crate) fn model_term(edges: f64, nodes: f64, b: usize) -> f64 {
    let b = b as f64;
    let matrix = if edges > 0.0 {
        edges * h(b * (b + 1.0) / (2.0 * edges))
    } else {
        0.0
    };
    matrix + nodes * b.ln()
}

pub(crate) fn ln_factorial(m: u32) -> f64 {
    (2..=m).map(|k| (k as f64).ln()).sum()
}

/// Partition-independent part of the likelihood: `E - sum k ln k + sum ln A!`.
pub(crate) fn graph_constant(g: &SegmentGraph) -> f64 {
    let mut edges = 0u64;
    let mut log_fact = 0.0;
    let mut deg = vec![0u64; g.node_count()];
    for &(u, v, m) in g.edges() {
        if u == v {
            continue;
        }
        edges += m as u64;
        log_fact += ln_factorial(m);
        deg[u as usize] += m as u64;
        deg[v as usize] += m as u64;
    }
    edges as f64 - deg.iter().map(|&k| xlogx(k as f64)).sum::<f64>() + log_fact
}

/// Description length of `p` on `g`.
pub fn objective(g: &SegmentGraph, p: &Partition) -> Result<ObjectiveValue> {
    if p.node_count() != g.node_count() {
        return Err(Error::UniverseMismatch {
            expected: g.node_count(),
            found: p.node_count(),
        });
    }
    let b = p.num_blocks();
    let mut matrix = vec![0u64; b * b];
    let mut edges = 0u64;
    for &(u, v, m) in g.edges() {
        if u == v {
            continue;
        }
        let (r, s) = (p.label(u) as usize, p.label(v) as usize);
        matrix[r * b + s] += m as u64;
        matrix[s * b + r] += m as u64;
        edges += m as u64;
    }
    let mut value = graph_constant(g);
    for r in 0..b {
        let row = &matrix[r * b..(r + 1) * b];
        value += xlogx(row.iter().sum::<u64>() as f64);
        value -= 0.5 * row.iter().map(|&e| xlogx(e as f64)).sum::<f64>();
    }
    value += model_term(edges as f64, g.node_count() as f64, b);
    Ok(ObjectiveValue { value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cliques(k: u32, size: u32) -> SegmentGraph {
        let mut pairs = Vec::new();
        for c in 0..k {
            for i in 0..size {
                for j in i + 1..size {
                    pairs.push((c * size + i, c * size + j));
                }
            }
        }
        SegmentGraph::from_pairs(0, (k * size) as usize, pairs).unwrap()
    }

    #[test]
    fn label_permutation_is_exact() {
        let g = cliques(3, 4);
        let p = Partition::new(vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]).unwrap();
        let q = p.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(objective(&g, &p).unwrap(), objective(&g, &q).unwrap());
    }

    #[test]
    fn merging_disconnected_cliques_costs() {
        let g = cliques(2, 6);
        let split = Partition::new((0..12).map(|i| (i / 6) as u32).collect()).unwrap();
        let merged = Partition::single_block(12).unwrap();
        assert!(objective(&g, &merged).unwrap().value > objective(&g, &split).unwrap().value);
    }

    #[test]
    fn finite_everywhere() {
        let g = SegmentGraph::from_pairs(0, 5, [(0, 1), (0, 1), (3, 3)]).unwrap();
        for labels in [vec![0, 0, 0, 0, 0], vec![0, 1, 2, 3, 4], vec![0, 1, 0, 1, 0]] {
            let p = Partition::new(labels).unwrap();
            assert!(objective(&g, &p).unwrap().value.is_finite());
        }
        let empty = SegmentGraph::empty(0, 3);
        assert!(objective(&empty, &Partition::single_block(3).unwrap())
            .unwrap()
            .value
            .is_finite());
    }

    #[test]
    fn universe_mismatch() {
        let g = cliques(1, 3);
        assert!(objective(&g, &Partition::single_block(4).unwrap()).is_err());
    }
}
