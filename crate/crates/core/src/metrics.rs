//! Pairwise precision and recall against a ground-truth partition, and
//! aggregation of per-segment values over repeated runs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NodeId, Partition};

/// Counts over the unordered node pairs in scope.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairConfusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl PairConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pair confusion of `predicted` against `truth`, optionally restricted to
/// the pairs inside `scope`. Runs in linear time via the contingency table.
pub fn pair_confusion(predicted: &Partition, truth: &Partition, scope: Option<&[NodeId]>) -> Result<PairConfusion> {
    let n = truth.node_count();
    if predicted.node_count() != n {
        return Err(Error::UniverseMismatch {
            expected: n,
            found: predicted.node_count(),
        });
    }
    let mut cells: HashMap<(u32, u32), u64> = HashMap::new();
    let mut pred_sizes = vec![0u64; predicted.num_blocks()];
    let mut truth_sizes = vec![0u64; truth.num_blocks()];
    let mut count = 0u64;
    let mut visit = |v: NodeId| {
        let (p, t) = (predicted.label(v), truth.label(v));
        *cells.entry((p, t)).or_insert(0) += 1;
        pred_sizes[p as usize] += 1;
        truth_sizes[t as usize] += 1;
        count += 1;
    };
    match scope {
        None => (0..n as NodeId).for_each(&mut visit),
        Some(nodes) => {
            let mut seen = vec![false; n];
            for &v in nodes {
                if v as usize >= n {
                    return Err(Error::NodeOutOfRange {
                        node: v as u64,
                        node_count: n,
                    });
                }
                if !std::mem::replace(&mut seen[v as usize], true) {
                    visit(v);
                }
            }
        }
    }
    if count < 2 {
        return Err(Error::ScopeTooSmall);
    }
    let tp: u64 = cells.values().map(|&c| pairs(c)).sum();
    let pred_pairs: u64 = pred_sizes.iter().map(|&c| pairs(c)).sum();
    let truth_pairs: u64 = truth_sizes.iter().map(|&c| pairs(c)).sum();
    let fp = pred_pairs - tp;
    let fn_ = truth_pairs - tp;
    Ok(PairConfusion {
        tp,
        fp,
        fn_,
        tn: pairs(count) - tp - fp - fn_,
    })
}

/// `tp / (tp + fp)`, or `None` when nothing was co-clustered.
pub fn precision(c: &PairConfusion) -> Option<f64> {
    let d = c.tp + c.fp;
    (d > 0).then(|| c.tp as f64 / d as f64)
}

/// `tp / (tp + fn)`, or `None` when the truth has no co-clustered pairs.
pub fn recall(c: &PairConfusion) -> Option<f64> {
    let d = c.tp + c.fn_;
    (d > 0).then(|| c.tp as f64 / d as f64)
}

/// Mean and standard error of one segment over the defined runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    /// `None` when every run was undefined.
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub defined: usize,
    pub excluded: usize,
}

impl SeriesPoint {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let excluded = values.len() - defined.len();
        let n = defined.len();
        if n == 0 {
            return Self {
                mean: None,
                stderr: None,
                defined: 0,
                excluded,
            };
        }
        let mean = defined.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = defined.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean: Some(mean),
            stderr: Some(stderr),
            defined: n,
            excluded,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub per_segment: Vec<SeriesPoint>,
    pub runs: usize,
}

/// Aggregates `runs[r][s]` into per-segment mean and standard error.
pub fn aggregate(runs: &[Vec<Option<f64>>]) -> Result<MetricSeries> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidConfig("aggregation needs at least one run".into()));
    };
    let segments = first.len();
    if let Some(bad) = runs.iter().find(|r| r.len() != segments) {
        return Err(Error::InvalidConfig(format!(
            "runs disagree on segment count: {segments} vs {}",
            bad.len()
        )));
    }
    let per_segment = (0..segments)
        .map(|s| SeriesPoint::from_values(&runs.iter().map(|r| r[s]).collect::<Vec<_>>()))
        .collect();
    Ok(MetricSeries {
        per_segment,
        runs: runs.len(),
    })
}

/// One CSV row: a metric of one method at one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub segment: usize,
    pub method: String,
    pub metric: String,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub runs: usize,
    pub undefined: usize,
}

impl MetricRow {
    pub fn rows(method: &str, metric: &str, series: &MetricSeries) -> Vec<MetricRow> {
        series
            .per_segment
            .iter()
            .enumerate()
            .map(|(segment, p)| MetricRow {
                segment,
                method: method.to_string(),
                metric: metric.to_string(),
                mean: p.mean,
                stderr: p.stderr,
                runs: series.runs,
                undefined: p.excluded,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(p: &Partition, t: &Partition) -> PairConfusion {
        let mut c = PairConfusion::default();
        let n = p.node_count() as u32;
        for i in 0..n {
            for j in i + 1..n {
                match (p.label(i) == p.label(j), t.label(i) == t.label(j)) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
        }
        c
    }

    #[test]
    fn worked_example() {
        let pred = Partition::new(vec![0, 0, 0, 1]).unwrap();
        let truth = Partition::new(vec![0, 0, 1, 1]).unwrap();
        let c = pair_confusion(&pred, &truth, None).unwrap();
        assert_eq!(c, PairConfusion { tp: 1, fp: 2, fn_: 1, tn: 2 });
        assert_eq!(precision(&c), Some(1.0 / 3.0));
        assert_eq!(recall(&c), Some(0.5));
    }

    #[test]
    fn identity_and_degenerate() {
        let truth = Partition::new(vec![0, 0, 1, 1, 2]).unwrap();
        let c = pair_confusion(&truth, &truth, None).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = pair_confusion(&Partition::singletons(5).unwrap(), &truth, None).unwrap();
        assert_eq!((c.tp, c.fp), (0, 0));
        assert_eq!(precision(&c), None);
        assert_eq!(recall(&c), Some(0.0));
    }

    #[test]
    fn scope_restricts_pairs() {
        let pred = Partition::new(vec![0, 0, 0, 1]).unwrap();
        let truth = Partition::new(vec![0, 0, 1, 1]).unwrap();
        let c = pair_confusion(&pred, &truth, Some(&[0, 1, 1])).unwrap();
        assert_eq!(c, PairConfusion { tp: 1, fp: 0, fn_: 0, tn: 0 });
        assert!(matches!(pair_confusion(&pred, &truth, Some(&[2])), Err(Error::ScopeTooSmall)));
        assert!(matches!(
            pair_confusion(&pred, &truth, Some(&[0, 9])),
            Err(Error::NodeOutOfRange { .. })
        ));
        let other = Partition::single_block(3).unwrap();
        assert!(pair_confusion(&other, &truth, None).is_err());
    }

    #[test]
    fn aggregation() {
        let s = aggregate(&[vec![Some(0.4)], vec![Some(0.6)]]).unwrap();
        let p = s.per_segment[0];
        assert!((p.mean.unwrap() - 0.5).abs() < 1e-12);
        assert!((p.stderr.unwrap() - 0.1).abs() < 1e-12);

        let s = aggregate(&[vec![Some(0.7), None]]).unwrap();
        assert_eq!(s.per_segment[0].stderr, Some(0.0));
        assert_eq!(s.per_segment[1].mean, None);

        let s = aggregate(&vec![vec![None]; 10]).unwrap();
        assert_eq!(s.per_segment[0].excluded, 10);
        assert_eq!(s.per_segment[0].mean, None);

        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[vec![Some(1.0)], vec![]]).is_err());
    }

    fn labels(max_n: usize) -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
        (2..=max_n).prop_flat_map(|n| (prop::collection::vec(0u32..4, n), prop::collection::vec(0u32..4, n)))
    }

    proptest! {
        #[test]
        fn matches_naive_double_loop((a, b) in labels(12)) {
            let p = Partition::from_labels(&a).unwrap();
            let t = Partition::from_labels(&b).unwrap();
            let c = pair_confusion(&p, &t, None).unwrap();
            prop_assert_eq!(c, naive(&p, &t));
            let n = a.len() as u64;
            prop_assert_eq!(c.total(), n * (n - 1) / 2);
        }

        #[test]
        fn symmetric_and_permutation_invariant((a, b) in labels(20), shift in 0u32..4) {
            let p = Partition::from_labels(&a).unwrap();
            let t = Partition::from_labels(&b).unwrap();
            let c = pair_confusion(&p, &t, None).unwrap();
            let swapped = pair_confusion(&t, &p, None).unwrap();
            prop_assert_eq!((c.tp, c.fp, c.fn_, c.tn), (swapped.tp, swapped.fn_, swapped.fp, swapped.tn));
            let k = p.num_blocks() as u32;
            let perm: Vec<u32> = (0..k).map(|i| (i + shift) % k).collect();
            let q = p.permuted(&perm).unwrap();
            prop_assert_eq!(pair_confusion(&q, &t, None).unwrap(), c);
            for v in [precision(&c), recall(&c)].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
