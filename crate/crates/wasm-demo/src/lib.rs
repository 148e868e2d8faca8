//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three entry points, all taking and returning plain strings so the page
//! needs no glue beyond what `wasm-bindgen` generates:
//!
//! * [`truth_flow`] draws the planted split/merge schedule.
//! * [`detect`] samples every segment, runs an ensemble of clusterers,
//!   resolves each cloud with and without smoothing and reports scores.
//! * [`pair_scores`] compares two label vectors.

use commflow::flow::{build_flow, emit_dot, emit_json, DotStyle};
use commflow::generator::{build_split_merge_model, sample_segment, SplitMergeParams};
use commflow::mcmc::{cluster, ClustererConfig};
use commflow::metrics::{pair_confusion, precision, recall};
use commflow::resolver::{resolve, PartitionCloud};
use commflow::seed::{seed_for, Stream};
use commflow::Partition;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn params_from(json: &str) -> Result<SplitMergeParams, JsError> {
    if json.trim().is_empty() {
        return Ok(SplitMergeParams::default());
    }
    serde_json::from_str(json).map_err(js_err)
}

/// DOT source of the ground-truth flow graph for a split/merge schedule
/// given as JSON (empty string for the defaults).
#[wasm_bindgen]
pub fn truth_flow(params_json: &str) -> Result<String, JsError> {
    let params = params_from(params_json)?;
    let model = build_split_merge_model(&params).map_err(js_err)?;
    let truth: Vec<Partition> = (0..params.num_segments).map(|s| model.ground_truth(s).clone()).collect();
    let fg = build_flow(&truth, 1).map_err(js_err)?;
    Ok(emit_dot(&fg, &DotStyle::default()))
}

#[derive(Deserialize)]
#[serde(default)]
struct DetectRequest {
    params: SplitMergeParams,
    edges_per_segment: usize,
    ensemble_size: usize,
    sweeps: usize,
    seed: u64,
}

impl Default for DetectRequest {
    fn default() -> Self {
        Self {
            params: SplitMergeParams::default(),
            edges_per_segment: 2000,
            ensemble_size: 5,
            sweeps: 30,
            seed: 1,
        }
    }
}

#[derive(Serialize)]
struct SegmentScore {
    segment: usize,
    truth_blocks: usize,
    baseline: [Option<f64>; 2],
    ensemble: [Option<f64>; 2],
    smoothed: [Option<f64>; 2],
    smoothed_blocks: usize,
}

#[derive(Serialize)]
struct DetectReport {
    segments: Vec<SegmentScore>,
    flow_dot: String,
    flow_json: serde_json::Value,
}

fn scores(pred: &Partition, truth: &Partition) -> Result<[Option<f64>; 2], JsError> {
    let c = pair_confusion(pred, truth, None).map_err(js_err)?;
    Ok([precision(&c), recall(&c)])
}

/// Runs the whole pipeline on a sampled split/merge network. The request is
/// JSON with optional fields `params`, `edges_per_segment`, `ensemble_size`,
/// `sweeps` and `seed`. Returns JSON with per-segment `[precision, recall]`
/// pairs and the flow graph of the smoothed partitions.
#[wasm_bindgen]
pub fn detect(request_json: &str) -> Result<String, JsError> {
    let req: DetectRequest = if request_json.trim().is_empty() {
        DetectRequest::default()
    } else {
        serde_json::from_str(request_json).map_err(js_err)?
    };
    if req.ensemble_size == 0 {
        return Err(JsError::new("ensemble_size must be positive"));
    }
    let model = build_split_merge_model(&req.params).map_err(js_err)?;
    let base = ClustererConfig {
        sweeps: req.sweeps,
        ..ClustererConfig::default()
    };
    let mut clouds = Vec::with_capacity(req.params.num_segments);
    for s in 0..req.params.num_segments {
        let g_seed = seed_for(req.seed, Stream::Generate, 0, s as u32, 0);
        let g = sample_segment(&model, s, req.edges_per_segment, g_seed).map_err(js_err)?;
        let members = (0..req.ensemble_size)
            .map(|m| cluster(&g, &base.with_seed(seed_for(req.seed, Stream::Cluster, 0, s as u32, m as u32))))
            .collect::<Result<Vec<_>, _>>()
            .map_err(js_err)?;
        clouds.push(PartitionCloud::new(s, members).map_err(js_err)?);
    }

    let mut segments = Vec::with_capacity(clouds.len());
    let mut smoothed_reps = Vec::with_capacity(clouds.len());
    for (s, cloud) in clouds.iter().enumerate() {
        let truth = model.ground_truth(s);
        let ensemble = resolve(cloud, &[]).map_err(js_err)?;
        let lo = s.saturating_sub(1);
        let hi = (s + 1).min(clouds.len() - 1);
        let context: Vec<PartitionCloud> = (lo..=hi).filter(|&t| t != s).map(|t| clouds[t].clone()).collect();
        let smoothed = resolve(cloud, &context).map_err(js_err)?;
        segments.push(SegmentScore {
            segment: s,
            truth_blocks: truth.num_blocks(),
            baseline: scores(&cloud.partitions[0], truth)?,
            ensemble: scores(&ensemble, truth)?,
            smoothed: scores(&smoothed, truth)?,
            smoothed_blocks: smoothed.num_blocks(),
        });
        smoothed_reps.push(smoothed);
    }
    let fg = build_flow(&smoothed_reps, 1).map_err(js_err)?;
    let report = DetectReport {
        segments,
        flow_dot: emit_dot(&fg, &DotStyle::default()),
        flow_json: serde_json::from_str(&emit_json(&fg)).map_err(js_err)?,
    };
    serde_json::to_string(&report).map_err(js_err)
}

/// Pair precision and recall of `pred` against `truth`, both given as
/// comma- or whitespace-separated label lists. Returns
/// `{"tp":..,"fp":..,"fn":..,"tn":..,"precision":..,"recall":..}`.
#[wasm_bindgen]
pub fn pair_scores(pred: &str, truth: &str) -> Result<String, JsError> {
    let parse = |s: &str| -> Result<Partition, JsError> {
        let labels = s
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u32>().map_err(|_| JsError::new(&format!("bad label {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Partition::from_labels(&labels).map_err(js_err)
    };
    let c = pair_confusion(&parse(pred)?, &parse(truth)?, None).map_err(js_err)?;
    let mut v = serde_json::to_value(c).map_err(js_err)?;
    v["precision"] = serde_json::json!(precision(&c));
    v["recall"] = serde_json::json!(recall(&c));
    Ok(v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_truth_flow_is_a_digraph() {
        let dot = truth_flow("").unwrap();
        assert!(dot.starts_with("digraph flow"));
    }

    #[test]
    fn small_detection_reports_every_segment() {
        let req = r#"{"params": {"split_size": 20, "merge_sizes": [10, 10], "constant_blocks": 1,
            "constant_size": 10, "noise_size": 0, "num_segments": 4, "split_window": [1, 2],
            "merge_window": [2, 3]}, "edges_per_segment": 300, "ensemble_size": 2, "sweeps": 5}"#;
        let out: serde_json::Value = serde_json::from_str(&detect(req).unwrap()).unwrap();
        assert_eq!(out["segments"].as_array().unwrap().len(), 4);
        assert!(out["flow_dot"].as_str().unwrap().contains("rankdir=LR"));
    }

    #[test]
    fn pair_scores_on_identical_labels() {
        let v: serde_json::Value = serde_json::from_str(&pair_scores("0 0 1 1", "5,5,7,7").unwrap()).unwrap();
        assert_eq!(v["tp"], 2);
        assert_eq!(v["precision"], 1.0);
    }
}
