use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spacetime::metrics::{ari, changepoint_f1_points, directed_edge_f1, nmi};
use spacetime::pipeline::PipelineConfig;
use spacetime::regime::{ChangepointSet, VariablePartition};
use spacetime::synth::SynthConfig;
use spacetime_cli::commands::{self, Suite, SuiteEntry};
use spacetime_cli::files::{
    read_json, read_panel, write_json, write_panel, EdgeRecord, ModelFile, PartitionRecord, Report,
    TruthFile, TOOL_VERSION,
};
use tempfile::TempDir;

fn spacetime(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spacetime"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_synth() -> SynthConfig {
    SynthConfig {
        n_vars: 3,
        n_time: 120,
        n_changepoints: 1,
        n_regimes: 2,
        n_contexts: 1,
        edge_density: 0.3,
        ..SynthConfig::default()
    }
}

fn small_pipeline() -> PipelineConfig {
    PipelineConfig {
        n_perm: 50,
        max_iter: 2,
        ..PipelineConfig::default()
    }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A model that states exactly what the truth says.
fn model_from_truth(t: &TruthFile) -> ModelFile {
    ModelFile {
        tool_version: TOOL_VERSION.into(),
        n_vars: t.n_vars,
        n_time: t.n_time,
        max_lag: t.max_lag,
        var_names: (0..t.n_vars).map(|i| format!("var_{i}")).collect(),
        datasets: (0..t.context_of.len()).map(|d| d.to_string()).collect(),
        edges: t
            .edges
            .iter()
            .map(|&[source, target, lag]| EdgeRecord {
                source,
                target,
                lag,
                strength_bits: 1.0,
            })
            .collect(),
        changepoints: t.changepoints.clone(),
        partitions: t.partitions.clone(),
        meet: PartitionRecord {
            context_of: t.context_of.clone(),
            regime_of: t.regime_of.clone(),
        },
        total_score_bits: 0.0,
        trace: Vec::new(),
        warnings: Vec::new(),
        fixed_graph: false,
        fixed_changepoints: false,
        config: PipelineConfig::default(),
    }
}

#[test]
fn generate_defaults_write_header_plus_rows_and_are_deterministic() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for dir in [&a, &b] {
        let out = spacetime(&["generate", "--out", path(dir.path()), "--seed", "3"]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for idx in 0..2 {
        let name = format!("d{idx}.csv");
        let text = fs::read_to_string(a.path().join(&name)).unwrap();
        assert_eq!(text.lines().count(), 201);
        assert!(text.starts_with("t,"));
        assert_eq!(text, fs::read_to_string(b.path().join(&name)).unwrap());
    }
    assert_eq!(
        fs::read(a.path().join("truth.json")).unwrap(),
        fs::read(b.path().join("truth.json")).unwrap()
    );
}

#[test]
fn invalid_fraction_is_a_config_error_naming_the_field() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("gen.toml");
    fs::write(&cfg, "intervention_fraction = 1.5\n").unwrap();
    let out = spacetime(&[
        "generate",
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("intervention_fraction"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("gen.toml");
    fs::write(&cfg, "n_varz = 4\n").unwrap();
    let out = spacetime(&[
        "generate",
        "--config",
        path(&cfg),
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_directory_exits_with_io_code() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope");
    let out = spacetime(&["discover", "--data", path(&missing)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_csv_exits_with_data_code() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("d0.csv"), "t,var_0\n0,1.0\n1,oops\n").unwrap();
    let out = spacetime(&[
        "discover",
        "--data",
        path(dir.path()),
        "--out",
        path(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn malformed_model_exits_with_schema_code() {
    let dir = TempDir::new().unwrap();
    commands::generate(&small_synth(), dir.path()).unwrap();
    let model = dir.path().join("model.json");
    fs::write(&model, "{\"edges\": 3}").unwrap();
    let out = spacetime(&[
        "evaluate",
        "--model",
        path(&model),
        "--truth",
        path(&dir.path().join("truth.json")),
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn csv_and_json_round_trip_exactly() {
    let dir = TempDir::new().unwrap();
    let cfg = small_synth();
    let (panel, truth) = spacetime::synth::sample_instance(&cfg).unwrap();
    write_panel(dir.path(), &panel).unwrap();
    assert_eq!(read_panel(dir.path()).unwrap(), panel);

    let file = TruthFile::new(&cfg, &truth);
    let p = dir.path().join("truth.json");
    write_json(&p, &file).unwrap();
    let back: TruthFile = read_json(&p).unwrap();
    assert_eq!(back, file);

    let model = model_from_truth(&file);
    let p = dir.path().join("model.json");
    write_json(&p, &model).unwrap();
    assert_eq!(read_json::<ModelFile>(&p).unwrap(), model);
}

#[test]
fn evaluating_truth_against_itself_is_perfect() {
    let dir = TempDir::new().unwrap();
    let truth = commands::generate(&small_synth(), dir.path()).unwrap();
    let model = dir.path().join("model.json");
    write_json(&model, &model_from_truth(&truth)).unwrap();
    let out = spacetime(&[
        "evaluate",
        "--model",
        path(&model),
        "--truth",
        path(&dir.path().join("truth.json")),
    ]);
    assert!(out.status.success());
    let report: Report = read_json(&dir.path().join("report.json")).unwrap();
    for v in report.values() {
        assert_eq!(v, 1.0);
    }
}

#[test]
fn empty_model_scores_zero_edges() {
    let dir = TempDir::new().unwrap();
    let truth = commands::generate(&small_synth(), dir.path()).unwrap();
    assert!(!truth.edges.is_empty());
    let mut model = model_from_truth(&truth);
    model.edges.clear();
    model.changepoints.clear();
    model.meet.regime_of = vec![0];
    let report = commands::evaluate_files(&model, &truth, 5).unwrap();
    assert_eq!(report.f1_window_graph, 0.0);
    assert_eq!(report.f1_summary_graph, 0.0);
    assert_eq!(report.f1_changepoints, 0.0);
    assert_eq!(report.ari, 0.0);
}

#[test]
fn discover_with_fixed_truth_then_evaluate_matches_independent_reading() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    commands::generate(&small_synth(), &data).unwrap();
    let truth_path = data.join("truth.json");
    let cfg = dir.path().join("pipe.toml");
    fs::write(&cfg, "n_perm = 50\nmax_iter = 2\n").unwrap();
    let model_path = dir.path().join("model.json");
    let out = spacetime(&[
        "discover",
        "--data",
        path(&data),
        "--config",
        path(&cfg),
        "--out",
        path(&model_path),
        "--fix-graph",
        path(&truth_path),
        "--fix-changepoints",
        path(&truth_path),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = spacetime(&[
        "evaluate",
        "--model",
        path(&model_path),
        "--truth",
        path(&truth_path),
    ]);
    assert!(out.status.success());
    let report: Report = read_json(&dir.path().join("report.json")).unwrap();

    // recompute from the raw JSON documents
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model_path).unwrap()).unwrap();
    let t: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&truth_path).unwrap()).unwrap();
    assert_eq!(m["fixed_graph"], true);
    let nums = |v: &serde_json::Value| -> Vec<usize> {
        v.as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap() as usize)
            .collect()
    };
    let pred_cps = nums(&m["changepoints"]);
    let true_cps = nums(&t["changepoints"]);
    assert_eq!(pred_cps, true_cps);
    assert_eq!(
        report.f1_changepoints,
        changepoint_f1_points(&pred_cps, &true_cps, 5)
    );
    assert_eq!(report.f1_window_graph, 1.0);

    let n_time = t["n_time"].as_u64().unwrap() as usize;
    let per_t = |cps: &[usize], regimes: Vec<usize>| {
        let set = ChangepointSet::new(n_time, cps.to_vec()).unwrap();
        VariablePartition::new(&[0], &regimes)
            .unwrap()
            .regime_per_time(&set)
    };
    let a = per_t(&pred_cps, nums(&m["meet"]["regime_of"]));
    let b = per_t(&true_cps, nums(&t["regime_of"]));
    assert!((report.ari - ari(&a, &b).unwrap()).abs() < 1e-12);
    assert!((report.nmi - nmi(&a, &b).unwrap()).abs() < 1e-12);

    let truth: TruthFile = read_json(&truth_path).unwrap();
    let model: ModelFile = read_json(&model_path).unwrap();
    let g = directed_edge_f1(&model.graph().unwrap(), &truth.graph().unwrap()).unwrap();
    assert_eq!(g, report.f1_window_graph);
}

#[test]
fn free_discovery_writes_a_consistent_model() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    commands::generate(&small_synth(), &data).unwrap();
    let out = dir.path().join("model.json");
    let model = commands::discover(&data, &small_pipeline(), &Default::default(), &out).unwrap();
    assert_eq!(read_json::<ModelFile>(&out).unwrap(), model);
    assert!(model.trace.iter().any(|e| e.accepted));
    assert_eq!(model.partitions.len(), 3);
    let accepted: Vec<f64> = model
        .trace
        .iter()
        .filter(|e| e.accepted)
        .map(|e| e.score)
        .collect();
    assert!(accepted.windows(2).all(|w| w[1] < w[0]));
}

fn tiny_suite() -> Suite {
    Suite {
        seeds: vec![0, 1, 2],
        margin: 5,
        configs: vec![SuiteEntry {
            id: "oracle".into(),
            synth: small_synth(),
            pipeline: small_pipeline(),
            fix_graph: true,
            fix_changepoints: true,
        }],
    }
}

#[test]
fn bench_writes_one_row_per_seed_and_metric_and_resumes() {
    let dir = TempDir::new().unwrap();
    let suite_path = dir.path().join("suite.json");
    write_json(&suite_path, &tiny_suite()).unwrap();
    let out = dir.path().join("bench");
    let run = || {
        spacetime(&[
            "bench",
            "--suite",
            path(&suite_path),
            "--out",
            path(&out),
            "--emit-plot-data",
        ])
    };
    assert!(run().status.success());
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    for metric in Report::METRICS {
        let rows = agg
            .lines()
            .filter(|l| l.split(',').nth(2) == Some(metric))
            .count();
        assert_eq!(rows, 3, "{metric}");
    }
    assert!(out.join("plot_data.csv").exists());

    let model = commands::cell_dir(&out, "oracle", 1).join("model.json");
    let stamp = fs::metadata(&model).unwrap().modified().unwrap();
    assert!(run().status.success());
    assert_eq!(fs::metadata(&model).unwrap().modified().unwrap(), stamp);
    assert_eq!(fs::read_to_string(out.join("aggregate.csv")).unwrap(), agg);
}

proptest::proptest! {
    #[test]
    fn report_and_edge_json_round_trip(
        vals in proptest::collection::vec(-1e6f64..1e6, 6),
        margin in 0usize..50,
        lag in 0usize..5,
    ) {
        let report = Report {
            f1_window_graph: vals[0],
            f1_summary_graph: vals[1],
            f1_changepoints: vals[2],
            ari: vals[3],
            nmi: vals[4],
            margin,
        };
        let text = serde_json::to_string(&report).unwrap();
        proptest::prop_assert_eq!(serde_json::from_str::<Report>(&text).unwrap(), report);
        let edge = EdgeRecord { source: 1, target: 2, lag, strength_bits: vals[5] };
        let text = serde_json::to_string(&edge).unwrap();
        proptest::prop_assert_eq!(serde_json::from_str::<EdgeRecord>(&text).unwrap(), edge);
    }
}
