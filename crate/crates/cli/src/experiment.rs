//! End-to-end experiments: build the segment graphs, cluster every segment
//! K times, resolve the clouds, score against ground truth and write the
//! result bundle.

use std::ops::Range;
use std::path::PathBuf;

use commflow::flow::{build_flow, emit_dot, emit_json, DotStyle};
use commflow::generator::{
    build_planted_model, build_split_merge_model, inject, sample_pairs, sample_segment, BlockModelSchedule,
};
use commflow::metrics::{aggregate, pair_confusion, precision, recall, MetricRow};
use commflow::resolver::{resolve, PartitionCloud};
use commflow::seed::{seed_for, Stream};
use commflow::snap::NodeMap;
use commflow::{DynamicGraph, NodeId, Partition, SegmentGraph, TimeSegmentation};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{HarnessError, Result};
use crate::io::{self, CloudsDoc, PartitionsDoc, StagedDir};
use crate::pipeline::{run_jobs, thread_pool};

pub const BASELINE: &str = "baseline";
pub const ENSEMBLE: &str = "ensemble";
pub const SMOOTHED: &str = "smoothed";
pub const TRUTH: &str = "truth";

pub const BLOCKS: &str = "blocks";
pub const PRECISION: &str = "precision";
pub const RECALL: &str = "recall";

/// Everything the clustering stage needs, for all repetitions.
pub struct Instance {
    /// `[repetition][segment]`.
    pub graphs: Vec<Vec<SegmentGraph>>,
    /// Ground truth per segment over the full node set.
    pub truth: Option<Vec<Partition>>,
    /// Nodes whose pairs are scored; `None` scores all nodes.
    pub scope: Option<Vec<NodeId>>,
    pub transition: Vec<bool>,
    pub node_map: Option<NodeMap>,
}

#[derive(Clone, Debug)]
pub struct MethodResult {
    pub name: String,
    /// `[repetition][segment]`.
    pub partitions: Vec<Vec<Partition>>,
    pub rows: Vec<MetricRow>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub segments: usize,
    pub methods: Vec<MethodResult>,
    pub truth: Option<Vec<Partition>>,
    pub transition: Vec<bool>,
    /// Clouds of the first repetition.
    pub clouds: Vec<PartitionCloud>,
    pub node_map: Option<NodeMap>,
}

impl ExperimentOutput {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn row(&self, method: &str, metric: &str, segment: usize) -> Option<&MetricRow> {
        self.method(method)?
            .rows
            .iter()
            .find(|r| r.metric == metric && r.segment == segment)
    }
}

fn generate_seed(cfg: &ExperimentConfig, rep: usize, segment: usize) -> u64 {
    seed_for(cfg.seed, Stream::Generate, rep as u32, segment as u32, 0)
}

pub fn cluster_seed(master: u64, rep: usize, segment: usize, member: usize) -> u64 {
    seed_for(master, Stream::Cluster, rep as u32, segment as u32, member as u32)
}

/// Builds the segment graphs and ground truth for every repetition.
pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    match cfg.mode {
        Mode::Emerging => {
            let spec = &cfg.emerging;
            let model = build_planted_model(spec.nodes, spec.blocks, spec.edge_ratio)?;
            let largest = *spec.budgets.last().expect("validated non-empty");
            let graphs = (0..cfg.repetitions)
                .map(|rep| {
                    let pairs = sample_pairs(&model, 0, largest, generate_seed(cfg, rep, 0))?;
                    spec.budgets
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| SegmentGraph::from_pairs(i, spec.nodes, pairs[..b].iter().copied()))
                        .collect::<commflow::Result<Vec<_>>>()
                })
                .collect::<commflow::Result<Vec<_>>>()?;
            let truth = vec![model.ground_truth(0).clone(); spec.budgets.len()];
            Ok(Instance {
                graphs,
                scope: noise_scope(cfg, &model),
                truth: Some(truth),
                transition: vec![false; spec.budgets.len()],
                node_map: None,
            })
        }
        Mode::SyntheticDynamic => {
            let spec = &cfg.dynamic;
            let (model, segments) = match &spec.schedule {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::in_file(path, e))?;
                    let model = BlockModelSchedule::from_json(&text).map_err(|e| HarnessError::in_file(path, e))?;
                    (model, spec.segments)
                }
                None => (build_split_merge_model(&spec.split_merge)?, spec.split_merge.num_segments),
            };
            let graphs = (0..cfg.repetitions)
                .map(|rep| {
                    (0..segments)
                        .map(|s| sample_segment(&model, s, spec.edges_per_segment, generate_seed(cfg, rep, s)))
                        .collect::<commflow::Result<Vec<_>>>()
                })
                .collect::<commflow::Result<Vec<_>>>()?;
            Ok(Instance {
                graphs,
                scope: noise_scope(cfg, &model),
                truth: Some((0..segments).map(|s| model.ground_truth(s).clone()).collect()),
                transition: (0..segments).map(|s| model.in_transition(s)).collect(),
                node_map: None,
            })
        }
        Mode::SemiSynthetic => {
            let (real, seg, node_map) = load_dataset(cfg)?;
            let spec = &cfg.injection;
            let model = build_split_merge_model(&spec.split_merge)?;
            let cross = spec.cross_edges_per_segment as f64 / spec.edges_per_segment as f64;
            let mut graphs = Vec::with_capacity(cfg.repetitions);
            let mut synthetic: Range<NodeId> = 0..0;
            for rep in 0..cfg.repetitions {
                let injected = inject(&real, &seg, &model, spec.edges_per_segment, cross, generate_seed(cfg, rep, 0))?;
                synthetic = injected.synthetic_nodes();
                graphs.push(injected.graph.slice(&seg)?);
            }
            let offset = synthetic.start;
            let truth = (0..seg.count)
                .map(|s| {
                    // Real nodes are outside the scored scope; any label will do.
                    let mut labels = vec![0u32; offset as usize];
                    labels.extend(model.ground_truth(s).labels().iter().map(|&l| l + 1));
                    Partition::from_labels(&labels)
                })
                .collect::<commflow::Result<Vec<_>>>()?;
            Ok(Instance {
                graphs,
                truth: Some(truth),
                scope: Some(synthetic.collect()),
                transition: (0..seg.count).map(|s| model.in_transition(s)).collect(),
                node_map: Some(node_map),
            })
        }
        Mode::Real => {
            let (real, seg, node_map) = load_dataset(cfg)?;
            let sliced = real.slice(&seg)?;
            Ok(Instance {
                graphs: vec![sliced; cfg.repetitions],
                truth: None,
                scope: None,
                transition: vec![false; seg.count],
                node_map: Some(node_map),
            })
        }
    }
}

fn noise_scope(cfg: &ExperimentConfig, model: &BlockModelSchedule) -> Option<Vec<NodeId>> {
    if !cfg.exclude_noise || model.noise_block().is_none() {
        return None;
    }
    let noise = model.noise_nodes();
    Some((0..model.node_count() as NodeId).filter(|v| noise.binary_search(v).is_err()).collect())
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<(DynamicGraph, TimeSegmentation, NodeMap)> {
    let path = cfg
        .dataset
        .path
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("this mode needs dataset.path".into()))?;
    let snap = io::ingest_snap(path)?;
    let (first, _) = snap.graph.time_range().ok_or(commflow::Error::NoEdges)?;
    let seg = TimeSegmentation::new(
        cfg.dataset.start.unwrap_or(first),
        cfg.dataset.segment_width,
        cfg.dataset.segments,
    )?;
    Ok((snap.graph.restrict_to(&seg), seg, snap.node_map))
}

/// Runs the experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let instance = build_instance(cfg)?;
    run_instance(cfg, instance)
}

pub fn run_instance(cfg: &ExperimentConfig, instance: Instance) -> Result<ExperimentOutput> {
    let pool = thread_pool(cfg.worker_count())?;
    let reps = instance.graphs.len();
    let segments = instance.graphs.first().map_or(0, Vec::len);
    let k = cfg.ensemble_size;

    let mut jobs = Vec::with_capacity(reps * segments * k);
    for (rep, graphs) in instance.graphs.iter().enumerate() {
        for (s, g) in graphs.iter().enumerate() {
            for member in 0..k {
                jobs.push((g, cluster_seed(cfg.seed, rep, s, member)));
            }
        }
    }
    let mut flat = pool.install(|| run_jobs(jobs, &cfg.clusterer))?.into_iter();
    let clouds: Vec<Vec<PartitionCloud>> = (0..reps)
        .map(|_| {
            (0..segments)
                .map(|s| PartitionCloud::new(s, flat.by_ref().take(k).collect()))
                .collect::<commflow::Result<Vec<_>>>()
        })
        .collect::<commflow::Result<Vec<_>>>()?;

    let baseline: Vec<Vec<Partition>> = clouds
        .iter()
        .map(|row| row.iter().map(|c| c.partitions[0].clone()).collect())
        .collect();
    let ensemble = pool.install(|| resolve_all(&clouds, None))?;
    let mut methods = vec![(BASELINE, baseline), (ENSEMBLE, ensemble)];
    // Emerging-mode "segments" are edge budgets, not time steps.
    if let (Some(radius), false) = (cfg.smoothing, cfg.mode == Mode::Emerging) {
        methods.push((SMOOTHED, pool.install(|| resolve_all(&clouds, Some(radius)))?));
    }

    let methods = methods
        .into_iter()
        .map(|(name, partitions)| {
            let rows = score(name, &partitions, &instance)?;
            Ok(MethodResult {
                name: name.to_string(),
                partitions,
                rows,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentOutput {
        config: cfg.clone(),
        segments,
        methods,
        truth: instance.truth,
        transition: instance.transition,
        clouds: clouds.into_iter().next().unwrap_or_default(),
        node_map: instance.node_map,
    })
}

fn resolve_all(clouds: &[Vec<PartitionCloud>], radius: Option<usize>) -> Result<Vec<Vec<Partition>>> {
    let cells: Vec<(usize, usize)> = (0..clouds.len())
        .flat_map(|r| (0..clouds[r].len()).map(move |s| (r, s)))
        .collect();
    let resolved: Vec<commflow::Result<Partition>> = cells
        .par_iter()
        .map(|&(r, s)| {
            let row = &clouds[r];
            let context: Vec<PartitionCloud> = match radius {
                None => Vec::new(),
                Some(w) => (s.saturating_sub(w)..=(s + w).min(row.len() - 1))
                    .filter(|&t| t != s)
                    .map(|t| row[t].clone())
                    .collect(),
            };
            resolve(&row[s], &context)
        })
        .collect();
    let mut it = resolved.into_iter();
    clouds
        .iter()
        .map(|row| row.iter().map(|_| Ok(it.next().expect("one result per cell")?)).collect())
        .collect()
}

fn score(method: &str, partitions: &[Vec<Partition>], inst: &Instance) -> Result<Vec<MetricRow>> {
    let blocks: Vec<Vec<Option<f64>>> = partitions
        .iter()
        .map(|row| row.iter().map(|p| Some(p.num_blocks() as f64)).collect())
        .collect();
    let mut rows = MetricRow::rows(method, BLOCKS, &aggregate(&blocks)?);
    if let Some(truth) = &inst.truth {
        let mut prec = Vec::new();
        let mut rec = Vec::new();
        for row in partitions {
            let (mut pr, mut rc) = (Vec::new(), Vec::new());
            for (p, t) in row.iter().zip(truth) {
                let c = pair_confusion(p, t, inst.scope.as_deref())?;
                pr.push(precision(&c));
                rc.push(recall(&c));
            }
            prec.push(pr);
            rec.push(rc);
        }
        rows.extend(MetricRow::rows(method, PRECISION, &aggregate(&prec)?));
        rows.extend(MetricRow::rows(method, RECALL, &aggregate(&rec)?));
    }
    Ok(rows)
}

/// Manifest entry for the configuration, without the keys that do not
/// affect results (output location and worker count).
fn config_value(cfg: &ExperimentConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("output_dir");
        obj.remove("workers");
    }
    v
}

fn method_description(name: &str) -> &'static str {
    match name {
        BASELINE => "single clusterer run: the first ensemble member (member seed index 0)",
        ENSEMBLE => "representative partition of the segment's cloud",
        SMOOTHED => "representative partition scored against neighbouring segments' clouds",
        TRUTH => "ground-truth partitions",
        _ => "",
    }
}

fn write_partitions_dir(
    dir: &std::path::Path,
    name: &str,
    partitions: &[Vec<Partition>],
    rows: Option<&[MetricRow]>,
    out: &ExperimentOutput,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::in_file(dir, e))?;
    let doc = PartitionsDoc {
        method: Some(name.to_string()),
        repetitions: partitions.to_vec(),
    };
    io::write_json(&dir.join("partitions.json"), &doc)?;
    if let Some(rows) = rows {
        io::write_text(&dir.join("metrics.csv"), &io::metrics_csv(rows)?)?;
    }
    let mut files = vec!["partitions.json"];
    if rows.is_some() {
        files.push("metrics.csv");
    }
    if partitions.first().map_or(0, Vec::len) >= 2 {
        let fg = build_flow(&partitions[0], out.config.min_overlap)?;
        io::write_text(&dir.join("flow.dot"), &emit_dot(&fg, &DotStyle::default()))?;
        io::write_text(&dir.join("flow.json"), &emit_json(&fg))?;
        files.extend(["flow.dot", "flow.json"]);
    }
    files.sort_unstable();
    let manifest = json!({
        "experiment": out.config.name,
        "method": name,
        "description": method_description(name),
        "repetitions": partitions.len(),
        "segments": out.segments,
        "flow_repetition": 0,
        "files": files,
    });
    io::write_json(&dir.join("manifest.json"), &manifest)
}

/// Writes the result bundle to `<output_dir>/<name>/`, replacing any
/// previous bundle only once everything has been written.
pub fn write_outputs(out: &ExperimentOutput) -> Result<PathBuf> {
    let cfg = &out.config;
    let staged = StagedDir::new(&cfg.output_dir.join(&cfg.name))?;
    let root = staged.path().to_path_buf();

    let mut all_rows = Vec::new();
    for m in &out.methods {
        write_partitions_dir(&root.join(&m.name), &m.name, &m.partitions, Some(&m.rows), out)?;
        all_rows.extend(m.rows.iter().cloned());
    }
    if let Some(truth) = &out.truth {
        write_partitions_dir(&root.join(TRUTH), TRUTH, std::slice::from_ref(truth), None, out)?;
    }
    io::write_text(&root.join("metrics.csv"), &io::metrics_csv(&all_rows)?)?;
    io::write_json(
        &root.join("clouds.json"),
        &CloudsDoc {
            clouds: out.clouds.clone(),
        },
    )?;
    if let Some(map) = &out.node_map {
        io::write_node_map(&root.join("nodes.json"), map)?;
    }
    let transition: Vec<usize> = (0..out.transition.len()).filter(|&s| out.transition[s]).collect();
    let manifest = json!({
        "experiment": cfg.name,
        "mode": cfg.mode,
        "config": config_value(cfg),
        "methods": out.methods.iter().map(|m| m.name.as_str()).collect::<Vec<_>>(),
        "segments": out.segments,
        "transition_segments": transition,
        "baseline": method_description(BASELINE),
        "seeds": {
            "master": cfg.seed,
            "derivation": "splitmix64(master + 0x9E3779B97F4A7C15 * (key + 1)), key = stream << 56 | repetition << 40 | segment << 20 | member",
            "streams": {"generate": 1, "cluster": 2, "cross": 3, "shuffle": 4},
        },
        "generator": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    });
    io::write_json(&root.join("manifest.json"), &manifest)?;
    staged.commit()
}

/// Validates, runs and writes one experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<(ExperimentOutput, PathBuf)> {
    let out = run_experiment(cfg)?;
    let path = write_outputs(&out)?;
    Ok((out, path))
}
