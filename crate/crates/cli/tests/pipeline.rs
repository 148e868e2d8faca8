use std::time::Instant;

use commflow::generator::{build_planted_model, sample_segment};
use commflow::mcmc::{cluster, ClustererConfig};
use harness::experiment::cluster_seed;
use harness::pipeline::{run_segment_pipeline, thread_pool};
use harness::{ingest_snap, run_experiment, ExperimentConfig, Mode};

fn graph(edges: usize) -> commflow::SegmentGraph {
    let model = build_planted_model(120, 4, 0.2).unwrap();
    sample_segment(&model, 0, edges, 11).unwrap()
}

#[test]
fn ingest_small_snap_file() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("g.txt");
    std::fs::write(&path, "0 1 100\n").unwrap();
    let snap = ingest_snap(&path).unwrap();
    assert_eq!(snap.graph.node_count(), 2);
    assert_eq!(snap.graph.edges().len(), 1);

    std::fs::write(&path, "# only a comment\n").unwrap();
    let err = ingest_snap(&path).unwrap_err().to_string();
    assert!(err.contains("no edges"), "{err}");
}

#[test]
fn single_member_cloud_is_a_direct_run() {
    let g = graph(600);
    let cfg = ClustererConfig {
        sweeps: 20,
        ..Default::default()
    };
    let cloud = run_segment_pipeline(&g, &cfg, &[42], &thread_pool(1).unwrap()).unwrap();
    assert_eq!(cloud.partitions, vec![cluster(&g, &cfg.with_seed(42)).unwrap()]);
}

#[test]
fn cloud_does_not_depend_on_worker_count() {
    let g = graph(600);
    let cfg = ClustererConfig {
        sweeps: 20,
        ..Default::default()
    };
    let seeds: Vec<u64> = (0..8).map(|m| cluster_seed(5, 0, 0, m)).collect();
    let one = run_segment_pipeline(&g, &cfg, &seeds, &thread_pool(1).unwrap()).unwrap();
    let eight = run_segment_pipeline(&g, &cfg, &seeds, &thread_pool(8).unwrap()).unwrap();
    assert_eq!(one.partitions, eight.partitions);
}

#[test]
fn empty_seed_list_is_rejected() {
    let g = graph(100);
    assert!(run_segment_pipeline(&g, &ClustererConfig::default(), &[], &thread_pool(1).unwrap()).is_err());
}

#[test]
fn parallel_ensemble_is_faster() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        eprintln!("skipping speedup check: {cores} core(s) available, need 4");
        return;
    }
    let g = graph(2000);
    let cfg = ClustererConfig {
        sweeps: 30,
        ..Default::default()
    };
    let seeds: Vec<u64> = (0..16).collect();
    let time = |workers| {
        let pool = thread_pool(workers).unwrap();
        let start = Instant::now();
        run_segment_pipeline(&g, &cfg, &seeds, &pool).unwrap();
        start.elapsed().as_secs_f64()
    };
    let (serial, parallel) = (time(1), time(8));
    assert!(parallel < serial / 2.0, "1 worker {serial:.2}s, 8 workers {parallel:.2}s");
}

#[test]
fn segments_are_clustered_independently() {
    let cfg = |segments| {
        let mut c = ExperimentConfig {
            name: "independence".into(),
            mode: Mode::Emerging,
            seed: 3,
            repetitions: 1,
            ensemble_size: 2,
            ..Default::default()
        };
        c.clusterer.sweeps = 10;
        c.emerging.nodes = 60;
        c.emerging.blocks = 3;
        c.emerging.budgets = (0..segments).map(|i| 200 + 100 * i).collect();
        c
    };
    let short = run_experiment(&cfg(2)).unwrap();
    let long = run_experiment(&cfg(4)).unwrap();
    assert_eq!(short.clouds[..], long.clouds[..2]);
}
