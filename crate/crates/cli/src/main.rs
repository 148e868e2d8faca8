use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use commflow::flow::{build_flow, emit_dot, emit_json, DotStyle};
use commflow::generator::{build_planted_model, build_split_merge_model, sample_segment, BlockModelSchedule, SplitMergeParams};
use commflow::mcmc::ClustererConfig;
use commflow::metrics::{aggregate, pair_confusion, precision, recall, MetricRow};
use commflow::resolver::{resolve, PartitionCloud};
use commflow::snap::{write_snap, NodeMap};
use commflow::{DynamicGraph, TimeSegmentation, TimestampedEdge};
use harness::experiment::cluster_seed;
use harness::io::{self, CloudsDoc, PartitionsDoc};
use harness::pipeline::{run_segment_pipeline, thread_pool};
use harness::{ExperimentConfig, HarnessError, Mode, Result};

#[derive(Parser)]
#[command(name = "commflow", version, about = "Dynamic community detection with block-model ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dynamic graph from a block-model schedule.
    Generate(GenerateArgs),
    /// Cluster every segment of an edge list K times.
    Cluster(ClusterArgs),
    /// Resolve partition clouds into representative partitions.
    Resolve(ResolveArgs),
    /// Score partitions against ground truth.
    Evaluate(EvaluateArgs),
    /// Build the community flow graph of a partition sequence.
    Flow(FlowArgs),
    /// Run a full experiment from a config file.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    SplitMerge,
    Planted,
}

#[derive(Args)]
struct GenerateArgs {
    /// Schedule JSON; overrides --preset.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "split-merge")]
    preset: Preset,
    /// Planted preset: node count.
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    /// Planted preset: block count.
    #[arg(long, default_value_t = 8)]
    blocks: usize,
    /// External/internal edge ratio for the presets.
    #[arg(long, default_value_t = 0.2)]
    edge_ratio: f64,
    #[arg(long, default_value_t = 10)]
    segments: usize,
    #[arg(long, default_value_t = 2000)]
    edges_per_segment: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output SNAP edge list; the node map goes next to it as `.nodes.json`.
    #[arg(long)]
    out: PathBuf,
    /// Write the per-segment ground truth as a partitions document.
    #[arg(long)]
    truth_out: Option<PathBuf>,
    /// Write the schedule JSON that was sampled.
    #[arg(long)]
    schedule_out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    /// SNAP temporal edge list.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    segment_width: f64,
    /// Defaults to enough segments to cover the input.
    #[arg(long)]
    segments: Option<usize>,
    /// Defaults to the first timestamp.
    #[arg(long)]
    start: Option<f64>,
    #[arg(short = 'k', long, default_value_t = 10)]
    ensemble_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Clusterer config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sweeps: Option<usize>,
    /// Output clouds document; the node map goes next to it as `.nodes.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResolveArgs {
    #[arg(long)]
    clouds: PathBuf,
    /// Context radius in segments; 0 disables smoothing.
    #[arg(long, default_value_t = 0)]
    smoothing: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Partitions document to score; every repetition counts as one run.
    #[arg(long)]
    partitions: PathBuf,
    /// Partitions document whose first repetition is the per-segment truth.
    #[arg(long)]
    truth: PathBuf,
    /// Method name for the CSV; defaults to the document's.
    #[arg(long)]
    method: Option<String>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    partitions: PathBuf,
    #[arg(long, default_value_t = 0)]
    repetition: usize,
    #[arg(long, default_value_t = 1)]
    min_overlap: u64,
    /// DOT output; stdout when neither output is given.
    #[arg(long)]
    dot: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; defaults apply when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    /// Dataset for the semi-synthetic and real modes.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output root; results go to `<out>/<name>/`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Emerging,
    SyntheticDynamic,
    SemiSynthetic,
    Real,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Emerging => Mode::Emerging,
            ModeArg::SyntheticDynamic => Mode::SyntheticDynamic,
            ModeArg::SemiSynthetic => Mode::SemiSynthetic,
            ModeArg::Real => Mode::Real,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(3),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Cluster(a) => cluster(a),
        Command::Resolve(a) => resolve_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Flow(a) => flow(a),
        Command::Run(a) => run(a),
    }
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| HarnessError::in_file(path, e))
}

fn generate(a: GenerateArgs) -> Result<()> {
    if a.segments == 0 || a.edges_per_segment == 0 {
        return Err(HarnessError::Usage("--segments and --edges-per-segment must be positive".into()));
    }
    let model = match (&a.schedule, a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::in_file(path, e))?;
            BlockModelSchedule::from_json(&text).map_err(|e| HarnessError::in_file(path, e))?
        }
        (None, Preset::SplitMerge) => build_split_merge_model(&SplitMergeParams {
            num_segments: a.segments,
            edge_ratio: a.edge_ratio,
            ..SplitMergeParams::default()
        })?,
        (None, Preset::Planted) => build_planted_model(a.nodes, a.blocks, a.edge_ratio)?,
    };
    let mut edges = Vec::with_capacity(a.segments * a.edges_per_segment);
    for s in 0..a.segments {
        let seed = commflow::seed::seed_for(a.seed, commflow::seed::Stream::Generate, 0, s as u32, 0);
        let g = sample_segment(&model, s, a.edges_per_segment, seed)?;
        for &(u, v, m) in g.edges() {
            for _ in 0..m {
                edges.push(TimestampedEdge::new(u, v, s as f64));
            }
        }
    }
    let graph = DynamicGraph::new(model.node_count(), edges)?;
    write_snap(&graph, std::io::BufWriter::new(create(&a.out)?)).map_err(|e| HarnessError::in_file(&a.out, e))?;
    let identity = NodeMap {
        original_ids: (0..model.node_count() as u64).collect(),
    };
    io::write_node_map(&io::sidecar_path(&a.out), &identity)?;
    if let Some(path) = &a.truth_out {
        let doc = PartitionsDoc {
            method: Some("truth".into()),
            repetitions: vec![(0..a.segments).map(|s| model.ground_truth(s).clone()).collect()],
        };
        io::write_json(path, &doc)?;
    }
    if let Some(path) = &a.schedule_out {
        io::write_text(path, &model.to_json()?)?;
    }
    eprintln!("{} nodes, {} edges", graph.node_count(), graph.edges().len());
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    if a.ensemble_size == 0 || a.workers == Some(0) {
        return Err(HarnessError::Usage("--ensemble-size and --workers must be positive".into()));
    }
    let snap = io::ingest_snap(&a.input)?;
    eprintln!("{} nodes, {} edges", snap.graph.node_count(), snap.graph.edges().len());
    let (first, last) = snap.graph.time_range().ok_or(commflow::Error::NoEdges)?;
    let start = a.start.unwrap_or(first);
    let count = a
        .segments
        .unwrap_or_else(|| (((last - start) / a.segment_width).floor() as usize + 1).max(1));
    let seg = TimeSegmentation::new(start, a.segment_width, count)?;
    let graphs = snap.graph.restrict_to(&seg).slice(&seg)?;

    let mut cfg = match &a.config {
        Some(path) => io::read_json::<ClustererConfig>(path)?,
        None => ClustererConfig::default(),
    };
    if let Some(s) = a.sweeps {
        cfg.sweeps = s;
    }
    let pool = thread_pool(a.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))?;
    let clouds = graphs
        .iter()
        .enumerate()
        .map(|(s, g)| {
            let seeds: Vec<u64> = (0..a.ensemble_size).map(|k| cluster_seed(a.seed, 0, s, k)).collect();
            run_segment_pipeline(g, &cfg, &seeds, &pool)
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_json(&a.out, &CloudsDoc { clouds })?;
    io::write_node_map(&io::sidecar_path(&a.out), &snap.node_map)
}

fn resolve_cmd(a: ResolveArgs) -> Result<()> {
    let doc: CloudsDoc = io::read_json(&a.clouds)?;
    let clouds = &doc.clouds;
    let reps = clouds
        .iter()
        .enumerate()
        .map(|(s, cloud)| {
            let context: Vec<PartitionCloud> = if a.smoothing == 0 {
                Vec::new()
            } else {
                (s.saturating_sub(a.smoothing)..=(s + a.smoothing).min(clouds.len() - 1))
                    .filter(|&t| t != s)
                    .map(|t| clouds[t].clone())
                    .collect()
            };
            resolve(cloud, &context).map_err(|e| HarnessError::in_file(&a.clouds, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let method = if a.smoothing == 0 { "ensemble" } else { "smoothed" };
    io::write_json(
        &a.out,
        &PartitionsDoc {
            method: Some(method.into()),
            repetitions: vec![reps],
        },
    )
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let doc: PartitionsDoc = io::read_json(&a.partitions)?;
    let truth_doc: PartitionsDoc = io::read_json(&a.truth)?;
    let truth = truth_doc
        .repetitions
        .first()
        .ok_or_else(|| HarnessError::in_file(&a.truth, commflow::Error::InvalidPartition("no truth partitions".into())))?;
    let method = a.method.or(doc.method.clone()).unwrap_or_else(|| "method".into());
    let (mut blocks, mut prec, mut rec) = (Vec::new(), Vec::new(), Vec::new());
    for row in &doc.repetitions {
        if row.len() != truth.len() {
            return Err(HarnessError::Usage(format!(
                "{} segments in partitions but {} in truth",
                row.len(),
                truth.len()
            )));
        }
        let (mut b, mut p, mut r) = (Vec::new(), Vec::new(), Vec::new());
        for (part, t) in row.iter().zip(truth) {
            let c = pair_confusion(part, t, None)?;
            b.push(Some(part.num_blocks() as f64));
            p.push(precision(&c));
            r.push(recall(&c));
        }
        blocks.push(b);
        prec.push(p);
        rec.push(r);
    }
    let mut rows = MetricRow::rows(&method, "blocks", &aggregate(&blocks)?);
    rows.extend(MetricRow::rows(&method, "precision", &aggregate(&prec)?));
    rows.extend(MetricRow::rows(&method, "recall", &aggregate(&rec)?));
    let text = io::metrics_csv(&rows)?;
    match &a.out {
        Some(path) => io::write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn flow(a: FlowArgs) -> Result<()> {
    let doc: PartitionsDoc = io::read_json(&a.partitions)?;
    let reps = doc
        .repetitions
        .get(a.repetition)
        .ok_or_else(|| HarnessError::Usage(format!("no repetition {} in {}", a.repetition, a.partitions.display())))?;
    let fg = build_flow(reps, a.min_overlap).map_err(|e| HarnessError::in_file(&a.partitions, e))?;
    let dot = emit_dot(&fg, &DotStyle::default());
    if let Some(path) = &a.dot {
        io::write_text(path, &dot)?;
    }
    if let Some(path) = &a.json {
        io::write_text(path, &emit_json(&fg))?;
    }
    if a.dot.is_none() && a.json.is_none() {
        print!("{dot}");
    }
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg.mode = m.into();
    }
    if let Some(n) = a.name {
        cfg.name = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = a.workers {
        cfg.workers = Some(w);
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(k) = a.ensemble_size {
        cfg.ensemble_size = k;
    }
    if let Some(s) = a.sweeps {
        cfg.clusterer.sweeps = s;
    }
    if let Some(d) = a.dataset {
        cfg.dataset.path = Some(d);
    }
    if let Some(o) = a.out {
        cfg.output_dir = o;
    }
    let (_, path) = harness::execute(&cfg)?;
    println!("{}", path.display());
    Ok(())
}
