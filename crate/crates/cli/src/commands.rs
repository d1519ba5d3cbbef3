use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spacetime::metrics::{
    ari, changepoint_f1, directed_edge_f1, nmi, summary_edge_f1, DEFAULT_MARGIN,
};
use spacetime::panel::TimeSeriesPanel;
use spacetime::pipeline::{run_with, Fixed, PipelineConfig};
use spacetime::regime::VariablePartition;
use spacetime::synth::{sample_instance, SynthConfig};

use crate::error::{CliError, CliResult};
use crate::files::{
    read_config, read_json, read_panel, write_json, write_panel, ModelFile, Report, TruthFile,
};

/// Samples an instance and writes `d{idx}.csv` files plus `truth.json` into `out`.
pub fn generate(config: &SynthConfig, out: &Path) -> CliResult<TruthFile> {
    config.validate()?;
    let (panel, truth) = sample_instance(config)?;
    write_panel(out, &panel)?;
    let file = TruthFile::new(config, &truth);
    write_json(&out.join("truth.json"), &file)?;
    Ok(file)
}

pub fn load_synth_config(path: Option<&Path>) -> CliResult<SynthConfig> {
    path.map_or_else(|| Ok(SynthConfig::default()), read_config)
}

pub fn load_pipeline_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    path.map_or_else(|| Ok(PipelineConfig::default()), read_config)
}

#[derive(Clone, Debug, Default)]
pub struct DiscoverOptions {
    pub fix_graph: Option<PathBuf>,
    pub fix_changepoints: Option<PathBuf>,
}

fn check_truth_fits(truth: &TruthFile, panel: &TimeSeriesPanel, path: &Path) -> CliResult<()> {
    if truth.n_vars != panel.n_vars() || truth.n_time != panel.n_time() {
        return Err(CliError::Schema(format!(
            "{} describes {} variables x {} steps, data has {} x {}",
            path.display(),
            truth.n_vars,
            truth.n_time,
            panel.n_vars(),
            panel.n_time()
        )));
    }
    Ok(())
}

/// Runs discovery on a panel, optionally holding the graph or changepoints at their true values.
pub fn discover_panel(
    panel: &TimeSeriesPanel,
    config: &PipelineConfig,
    opts: &DiscoverOptions,
) -> CliResult<ModelFile> {
    let mut config = config.clone();
    let mut fixed = Fixed::default();
    if let Some(path) = &opts.fix_graph {
        let truth: TruthFile = read_json(path)?;
        check_truth_fits(&truth, panel, path)?;
        let graph = truth.graph()?;
        config.max_lag = graph.max_lag();
        fixed.graph = Some(graph);
    }
    if let Some(path) = &opts.fix_changepoints {
        let truth: TruthFile = read_json(path)?;
        check_truth_fits(&truth, panel, path)?;
        fixed.changepoints = Some(truth.changepoint_set()?);
    }
    config
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let result = run_with(panel, &config, &fixed)?;
    Ok(ModelFile::new(
        panel,
        &result,
        &config,
        fixed.graph.is_some(),
        fixed.changepoints.is_some(),
    ))
}

pub fn discover(
    data: &Path,
    config: &PipelineConfig,
    opts: &DiscoverOptions,
    out: &Path,
) -> CliResult<ModelFile> {
    let panel = read_panel(data)?;
    let model = discover_panel(&panel, config, opts)?;
    write_json(out, &model)?;
    Ok(model)
}

fn regime_labels(
    cps: &spacetime::regime::ChangepointSet,
    regime_of: &[usize],
    what: &str,
) -> CliResult<Vec<usize>> {
    if regime_of.len() != cps.n_intervals() {
        return Err(CliError::Schema(format!(
            "{what}: {} regime labels for {} intervals",
            regime_of.len(),
            cps.n_intervals()
        )));
    }
    let vp =
        VariablePartition::new(&[0], regime_of).map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(vp.regime_per_time(cps))
}

/// Scores a model against ground truth.
pub fn evaluate_files(model: &ModelFile, truth: &TruthFile, margin: usize) -> CliResult<Report> {
    if model.n_vars != truth.n_vars || model.n_time != truth.n_time {
        return Err(CliError::Schema(format!(
            "model is {} variables x {} steps, truth {} x {}",
            model.n_vars, model.n_time, truth.n_vars, truth.n_time
        )));
    }
    let pred = model.graph()?;
    let real = truth.graph()?;
    let pred_cps = model.changepoint_set()?;
    let real_cps = truth.changepoint_set()?;
    let a = regime_labels(&pred_cps, &model.meet.regime_of, "model")?;
    let b = regime_labels(&real_cps, &truth.regime_of, "truth")?;
    let schema = |e: spacetime::Error| CliError::Schema(e.to_string());
    Ok(Report {
        f1_window_graph: directed_edge_f1(&pred, &real).map_err(schema)?,
        f1_summary_graph: summary_edge_f1(&pred.summarize(), &real.summarize()).map_err(schema)?,
        f1_changepoints: changepoint_f1(&pred_cps, &real_cps, margin),
        ari: ari(&a, &b).map_err(schema)?,
        nmi: nmi(&a, &b).map_err(schema)?,
        margin,
    })
}

pub fn evaluate(model: &Path, truth: &Path, margin: usize) -> CliResult<Report> {
    let m: ModelFile = read_json(model)?;
    let t: TruthFile = read_json(truth)?;
    evaluate_files(&m, &t, margin)
}

fn default_margin() -> usize {
    DEFAULT_MARGIN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    pub id: String,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub fix_graph: bool,
    #[serde(default)]
    pub fix_changepoints: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub seeds: Vec<u64>,
    #[serde(default = "default_margin")]
    pub margin: usize,
    pub configs: Vec<SuiteEntry>,
}

impl Suite {
    pub fn validate(&self) -> CliResult<()> {
        if self.configs.is_empty() || self.seeds.is_empty() {
            return Err(CliError::Config(
                "suite needs at least one config and one seed".into(),
            ));
        }
        let mut ids: Vec<&str> = self.configs.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("config ids must be unique".into()));
        }
        if ids
            .iter()
            .any(|id| id.is_empty() || id.contains(['/', '\\', ',']))
        {
            return Err(CliError::Config(
                "config ids must be non-empty and free of `/`, `\\` and `,`".into(),
            ));
        }
        for c in &self.configs {
            c.synth
                .validate()
                .map_err(|e| CliError::Config(format!("{}: {e}", c.id)))?;
            c.pipeline
                .validate()
                .map_err(|e| CliError::Config(format!("{}: {e}", c.id)))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CellTiming {
    wall_time_s: f64,
}

pub fn cell_dir(out: &Path, config_id: &str, seed: u64) -> PathBuf {
    out.join("cells")
        .join(config_id)
        .join(format!("seed_{seed}"))
}

fn run_cell(entry: &SuiteEntry, seed: u64, margin: usize, dir: &Path) -> CliResult<(Report, f64)> {
    let report_path = dir.join("report.json");
    if report_path.exists() {
        let report: Report = read_json(&report_path)?;
        let timing: CellTiming = read_json(&dir.join("timing.json"))?;
        log::info!("{}: seed {seed} already complete", entry.id);
        return Ok((report, timing.wall_time_s));
    }
    let start = Instant::now();
    let synth = SynthConfig {
        seed,
        ..entry.synth.clone()
    };
    let data_dir = dir.join("data");
    generate(&synth, &data_dir)?;
    let truth_path = data_dir.join("truth.json");
    let pipeline = PipelineConfig {
        seed,
        ..entry.pipeline.clone()
    };
    let opts = DiscoverOptions {
        fix_graph: entry.fix_graph.then(|| truth_path.clone()),
        fix_changepoints: entry.fix_changepoints.then(|| truth_path.clone()),
    };
    let model_path = dir.join("model.json");
    discover(&data_dir, &pipeline, &opts, &model_path)?;
    let report = evaluate(&model_path, &truth_path, margin)?;
    let wall = start.elapsed().as_secs_f64();
    write_json(&dir.join("timing.json"), &CellTiming { wall_time_s: wall })?;
    // written last: its presence marks the cell complete
    write_json(&report_path, &report)?;
    Ok((report, wall))
}

/// Outcome of a benchmark run.
#[derive(Clone, Debug)]
pub struct BenchSummary {
    pub completed: usize,
    pub failed: usize,
}

/// Runs every (config, seed) cell and writes `aggregate.csv` and `timings.csv` into `out`.
///
/// Cells with an existing `report.json` are not recomputed. Wall times go to `timings.csv` only,
/// so the aggregate is reproducible byte for byte.
pub fn bench(suite: &Suite, out: &Path, emit_plot_data: bool) -> CliResult<BenchSummary> {
    suite.validate()?;
    let cells: Vec<(&SuiteEntry, u64)> = suite
        .configs
        .iter()
        .flat_map(|c| suite.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<CliResult<(Report, f64)>> = cells
        .par_iter()
        .map(|&(entry, seed)| {
            let r = run_cell(entry, seed, suite.margin, &cell_dir(out, &entry.id, seed));
            if let Err(e) = &r {
                log::error!("{} seed {seed} failed: {e}", entry.id);
            }
            r
        })
        .collect();

    let mut aggregate = String::from("config_id,seed,metric,value\n");
    let mut timings = String::from("config_id,seed,wall_time_s\n");
    let mut failed = 0;
    for (&(entry, seed), res) in cells.iter().zip(&results) {
        match res {
            Ok((report, wall)) => {
                for (name, v) in Report::METRICS.iter().zip(report.values()) {
                    let _ = writeln!(aggregate, "{},{seed},{name},{v}", entry.id);
                }
                let _ = writeln!(timings, "{},{seed},{wall}", entry.id);
            }
            Err(_) => failed += 1,
        }
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let agg_path = out.join("aggregate.csv");
    fs::write(&agg_path, aggregate).map_err(|e| CliError::io(&agg_path, e))?;
    let t_path = out.join("timings.csv");
    fs::write(&t_path, timings).map_err(|e| CliError::io(&t_path, e))?;
    if emit_plot_data {
        write_plot_data(suite, &cells, &results, out)?;
    }
    let summary = BenchSummary {
        completed: cells.len() - failed,
        failed,
    };
    if failed > 0 {
        return Err(CliError::BenchFailed(failed));
    }
    Ok(summary)
}

fn write_plot_data(
    suite: &Suite,
    cells: &[(&SuiteEntry, u64)],
    results: &[CliResult<(Report, f64)>],
    out: &Path,
) -> CliResult<()> {
    let mut text = String::from("config_id,metric,mean,std,n\n");
    for entry in &suite.configs {
        for (m, name) in Report::METRICS.iter().enumerate() {
            let vals: Vec<f64> = cells
                .iter()
                .zip(results)
                .filter(|((e, _), _)| e.id == entry.id)
                .filter_map(|(_, r)| r.as_ref().ok().map(|(rep, _)| rep.values()[m]))
                .collect();
            if vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let _ = writeln!(text, "{},{name},{mean},{std},{}", entry.id, vals.len());
        }
    }
    let path = out.join("plot_data.csv");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
