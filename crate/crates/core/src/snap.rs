//! SNAP temporal edge lists: whitespace separated `SRC DST TIMESTAMP` lines
//! with integer fields. Lines starting with `#` are comments.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DynamicGraph, NodeId, Partition, TimestampedEdge};

/// Dense id `i` corresponds to `original_ids[i]` in the source file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMap {
    pub original_ids: Vec<u64>,
}

impl NodeMap {
    pub fn dense_id(&self, original: u64) -> Option<NodeId> {
        self.original_ids
            .binary_search(&original)
            .ok()
            .map(|i| i as NodeId)
    }
}

#[derive(Clone, Debug)]
pub struct SnapGraph {
    pub graph: DynamicGraph,
    pub node_map: NodeMap,
}

/// Parses a SNAP temporal edge list, remapping node ids to `[0, N)` in
/// ascending order of their original value.
pub fn parse_snap<R: BufRead>(reader: R) -> Result<SnapGraph> {
    let mut raw: Vec<(u64, u64, i64)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let int = |s: &str, what: &str| -> Result<i128> {
            s.parse::<i128>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("{what} is not an integer: {s:?}"),
            })
        };
        let src = int(fields[0], "source")?;
        let dst = int(fields[1], "target")?;
        let t = int(fields[2], "timestamp")?;
        if src < 0 || dst < 0 || src > u64::MAX as i128 || dst > u64::MAX as i128 {
            return Err(Error::Parse {
                line: lineno,
                msg: "node ids must be non-negative 64-bit integers".into(),
            });
        }
        if t < i64::MIN as i128 || t > i64::MAX as i128 {
            return Err(Error::Parse {
                line: lineno,
                msg: "timestamp out of range".into(),
            });
        }
        raw.push((src as u64, dst as u64, t as i64));
    }
    if raw.is_empty() {
        return Err(Error::NoEdges);
    }
    let ids: BTreeSet<u64> = raw.iter().flat_map(|&(s, d, _)| [s, d]).collect();
    let node_map = NodeMap {
        original_ids: ids.into_iter().collect(),
    };
    let edges = raw
        .into_iter()
        .map(|(s, d, t)| {
            TimestampedEdge::new(
                node_map.dense_id(s).unwrap(),
                node_map.dense_id(d).unwrap(),
                t as f64,
            )
        })
        .collect();
    let graph = DynamicGraph::new(node_map.original_ids.len(), edges)?;
    Ok(SnapGraph { graph, node_map })
}

/// Writes `SRC DST TIMESTAMP` lines using dense ids. Timestamps must be integral.
pub fn write_snap<W: Write>(graph: &DynamicGraph, mut out: W) -> Result<()> {
    for e in graph.edges() {
        if e.t.fract() != 0.0 || !e.t.is_finite() {
            return Err(Error::InvalidModel(format!(
                "timestamp {} is not an integer",
                e.t
            )));
        }
        writeln!(out, "{} {} {}", e.src, e.dst, e.t as i64)?;
    }
    Ok(())
}

/// Ground-truth file: one `NODE BLOCK` line per node.
pub fn write_truth<W: Write>(partition: &Partition, mut out: W) -> Result<()> {
    for (node, label) in partition.labels().iter().enumerate() {
        writeln!(out, "{node} {label}")?;
    }
    Ok(())
}

pub fn parse_truth<R: BufRead>(reader: R) -> Result<Partition> {
    let mut pairs: Vec<(usize, u32)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line: idx + 1,
            msg: msg.to_string(),
        };
        let mut it = trimmed.split_whitespace();
        let node = it
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| err("bad node id"))?;
        let block = it
            .next()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| err("bad block label"))?;
        if it.next().is_some() {
            return Err(err("expected 2 fields"));
        }
        pairs.push((node, block));
    }
    let n = pairs.len();
    let mut labels = vec![u32::MAX; n];
    for (node, block) in pairs {
        if node >= n || labels[node] != u32::MAX {
            return Err(Error::InvalidPartition(format!(
                "node {node} missing, duplicated or out of range"
            )));
        }
        labels[node] = block;
    }
    Partition::from_labels(&labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let g = parse_snap("0 1 100\n".as_bytes()).unwrap();
        assert_eq!(g.graph.node_count(), 2);
        assert_eq!(g.graph.edges().len(), 1);
        assert_eq!(g.graph.edges()[0].t, 100.0);
    }

    #[test]
    fn comments_only_is_an_error() {
        let err = parse_snap("# header\n# more\n\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::NoEdges));
        assert_eq!(err.to_string(), "no edges in input");
    }

    #[test]
    fn ids_are_remapped_densely() {
        let g = parse_snap("# c\n10 500 3\n500 7 4\n".as_bytes()).unwrap();
        assert_eq!(g.node_map.original_ids, vec![7, 10, 500]);
        let e = g.graph.edges();
        assert_eq!((e[0].src, e[0].dst), (1, 2));
        assert_eq!((e[1].src, e[1].dst), (2, 0));
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        match parse_snap("0 1 2\n0 1\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_snap("# x\n0 1 2\n0 a 3\n".as_bytes()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("not an integer"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_snap("0 1 2.5\n".as_bytes()).is_err());
        assert!(parse_snap("-1 1 2\n".as_bytes()).is_err());
    }

    #[test]
    fn write_then_parse() {
        let g = DynamicGraph::new(
            3,
            vec![TimestampedEdge::new(0, 2, 5.0), TimestampedEdge::new(1, 2, 6.0)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_snap(&g, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0 2 5\n1 2 6\n");
        let back = parse_snap(buf.as_slice()).unwrap();
        assert_eq!(back.graph, g);

        let frac = DynamicGraph::new(2, vec![TimestampedEdge::new(0, 1, 0.5)]).unwrap();
        assert!(write_snap(&frac, Vec::new()).is_err());
    }

    #[test]
    fn truth_file() {
        let p = Partition::new(vec![1, 0, 1]).unwrap();
        let mut buf = Vec::new();
        write_truth(&p, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "0 1\n1 0\n2 1\n");
        assert_eq!(parse_truth(buf.as_slice()).unwrap(), p);
        assert!(parse_truth("0 1\n0 1\n".as_bytes()).is_err());
    }
}
