//! Community flow graph: one node per community per segment, with edges
//! between communities of consecutive segments that share members.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Partition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowNodeId {
    pub segment: usize,
    pub community: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowNode {
    pub segment: usize,
    pub community: u32,
    pub size: u64,
}

impl FlowNode {
    pub fn id(&self) -> FlowNodeId {
        FlowNodeId {
            segment: self.segment,
            community: self.community,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from: FlowNodeId,
    pub to: FlowNodeId,
    pub overlap: u64,
}

/// Nodes ordered by (segment, community); edges by (from, to).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
}

impl FlowGraph {
    pub fn node(&self, id: FlowNodeId) -> Option<&FlowNode> {
        self.nodes
            .binary_search_by(|n| n.id().cmp(&id))
            .ok()
            .map(|i| &self.nodes[i])
    }

    pub fn out_degree(&self, id: FlowNodeId) -> usize {
        self.edges.iter().filter(|e| e.from == id).count()
    }

    pub fn in_degree(&self, id: FlowNodeId) -> usize {
        self.edges.iter().filter(|e| e.to == id).count()
    }
}

/// Builds the flow graph of per-segment partitions over a common node set.
/// Edges with fewer than `min_overlap` shared members are dropped.
pub fn build_flow(reps: &[Partition], min_overlap: u64) -> Result<FlowGraph> {
    if reps.len() < 2 {
        return Err(Error::TooFewSegments(reps.len()));
    }
    let n = reps[0].node_count();
    if let Some(bad) = reps.iter().find(|p| p.node_count() != n) {
        return Err(Error::UniverseMismatch {
            expected: n,
            found: bad.node_count(),
        });
    }
    let min_overlap = min_overlap.max(1);
    let mut fg = FlowGraph::default();
    for (segment, p) in reps.iter().enumerate() {
        for (community, &size) in p.block_sizes().iter().enumerate() {
            fg.nodes.push(FlowNode {
                segment,
                community: community as u32,
                size: size as u64,
            });
        }
    }
    for (segment, pair) in reps.windows(2).enumerate() {
        let mut overlap: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        for v in 0..n as u32 {
            *overlap.entry((pair[0].label(v), pair[1].label(v))).or_insert(0) += 1;
        }
        for ((a, b), count) in overlap {
            if count >= min_overlap {
                fg.edges.push(FlowEdge {
                    from: FlowNodeId {
                        segment,
                        community: a,
                    },
                    to: FlowNodeId {
                        segment: segment + 1,
                        community: b,
                    },
                    overlap: count,
                });
            }
        }
    }
    Ok(fg)
}

/// Visual scale factors for [`emit_dot`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DotStyle {
    /// Node width in inches is `node_scale * sqrt(size)`.
    pub node_scale: f64,
    /// Edge penwidth is `edge_scale * overlap / min(size_from, size_to)`.
    pub edge_scale: f64,
}

impl Default for DotStyle {
    fn default() -> Self {
        Self {
            node_scale: 0.1,
            edge_scale: 6.0,
        }
    }
}

fn dot_id(id: FlowNodeId) -> String {
    format!("\"s{}c{}\"", id.segment, id.community)
}

/// Graphviz rendering with one left-to-right rank per segment.
pub fn emit_dot(fg: &FlowGraph, style: &DotStyle) -> String {
    let mut out = String::new();
    out.push_str("digraph flow {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=circle, fixedsize=true, label=\"\"];\n");
    out.push_str("  edge [arrowhead=none];\n");
    let mut by_segment: BTreeMap<usize, Vec<&FlowNode>> = BTreeMap::new();
    for node in &fg.nodes {
        by_segment.entry(node.segment).or_default().push(node);
    }
    for (segment, nodes) in &by_segment {
        writeln!(out, "  subgraph segment_{segment} {{").unwrap();
        out.push_str("    rank=same;\n");
        for node in nodes {
            writeln!(
                out,
                "    {} [width={:.4}, tooltip=\"segment {} community {} size {}\"];",
                dot_id(node.id()),
                style.node_scale * (node.size as f64).sqrt(),
                node.segment,
                node.community,
                node.size
            )
            .unwrap();
        }
        out.push_str("  }\n");
    }
    for e in &fg.edges {
        let smaller = match (fg.node(e.from), fg.node(e.to)) {
            (Some(a), Some(b)) => a.size.min(b.size).max(1),
            _ => e.overlap.max(1),
        };
        writeln!(
            out,
            "  {} -> {} [penwidth={:.4}, tooltip=\"{}\"];",
            dot_id(e.from),
            dot_id(e.to),
            style.edge_scale * e.overlap as f64 / smaller as f64,
            e.overlap
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

/// Canonical JSON: sorted keys, nodes and edges in graph order.
pub fn emit_json(fg: &FlowGraph) -> String {
    // Going through `Value` sorts object keys.
    let value = serde_json::to_value(fg).expect("flow graph serializes");
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<FlowGraph> {
    Ok(serde_json::from_str(text)?)
}
