//! On-disk formats: per-dataset CSV panels and JSON documents.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use spacetime::graph::{LaggedEdge, WindowCausalGraph};
use spacetime::panel::TimeSeriesPanel;
use spacetime::pipeline::{PipelineConfig, PipelineResult, TraceEntry};
use spacetime::regime::{ChangepointSet, PartitionAssignment, VariablePartition};
use spacetime::synth::{CellMechanism, GroundTruth, SynthConfig};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn dataset_file(dir: &Path, idx: usize) -> PathBuf {
    dir.join(format!("d{idx}.csv"))
}

/// Writes `d{idx}.csv` per dataset with header `t,var_0,...`.
pub fn write_panel(dir: &Path, panel: &TimeSeriesPanel) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for d in 0..panel.n_datasets() {
        let path = dataset_file(dir, d);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        let mut header = vec!["t".to_string()];
        header.extend(panel.var_names().iter().cloned());
        w.write_record(&header).map_err(|e| csv_io(&path, e))?;
        for t in 0..panel.n_time() {
            let mut rec = vec![t.to_string()];
            rec.extend((0..panel.n_vars()).map(|i| panel.value(d, t, i).to_string()));
            w.write_record(&rec).map_err(|e| csv_io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Reads all `d{idx}.csv` files of `dir`; indices must run from 0 without gaps.
pub fn read_panel(dir: &Path) -> CliResult<TimeSeriesPanel> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(idx) = name
            .strip_prefix('d')
            .and_then(|s| s.strip_suffix(".csv"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            indices.push(idx);
        }
    }
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(CliError::Data(format!(
            "no d{{idx}}.csv files in {}",
            dir.display()
        )));
    }
    if indices.iter().enumerate().any(|(k, &i)| k != i) {
        return Err(CliError::Data(format!(
            "dataset files in {} are not numbered 0..{}",
            dir.display(),
            indices.len()
        )));
    }

    let mut names: Option<Vec<String>> = None;
    let mut matrices = Vec::new();
    let mut n_time = None;
    for &idx in &indices {
        let path = dataset_file(dir, idx);
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_io(&path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| csv_io(&path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.first().map(String::as_str) != Some("t") || header.len() < 2 {
            return Err(CliError::Data(format!(
                "{}: header must be `t,<var>,...`",
                path.display()
            )));
        }
        let vars = header[1..].to_vec();
        match &names {
            None => names = Some(vars.clone()),
            Some(n) if *n != vars => {
                return Err(CliError::Data(format!(
                    "{}: variables differ from d0.csv",
                    path.display()
                )))
            }
            Some(_) => {}
        }
        let mut values = Vec::new();
        let mut rows = 0;
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_io(&path, e))?;
            if rec.len() != header.len() {
                return Err(CliError::Data(format!(
                    "{}: row {} has {} fields, expected {}",
                    path.display(),
                    line + 1,
                    rec.len(),
                    header.len()
                )));
            }
            let t: usize = rec[0].trim().parse().map_err(|_| {
                CliError::Data(format!("{}: bad time index `{}`", path.display(), &rec[0]))
            })?;
            if t != rows {
                return Err(CliError::Data(format!(
                    "{}: time index {t} where {rows} was expected",
                    path.display()
                )));
            }
            for field in rec.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    CliError::Data(format!("{}: bad value `{field}`", path.display()))
                })?;
                if !v.is_finite() {
                    return Err(CliError::Data(format!(
                        "{}: non-finite value at t = {t}",
                        path.display()
                    )));
                }
                values.push(v);
            }
            rows += 1;
        }
        match n_time {
            None => n_time = Some(rows),
            Some(n) if n != rows => {
                return Err(CliError::Data(format!(
                    "{}: {rows} rows but d0.csv has {n}",
                    path.display()
                )))
            }
            Some(_) => {}
        }
        matrices.push(values);
    }
    let panel = TimeSeriesPanel::new(
        indices.iter().map(|i| format!("d{i}")).collect(),
        names.unwrap_or_default(),
        n_time.unwrap_or(0),
        matrices,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(panel)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Reads a JSON document; unparsable content is a schema mismatch.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// Parses a config file as TOML, falling back to JSON.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if !is_json {
        match toml::from_str(&text) {
            Ok(v) => return Ok(v),
            Err(e) if path.extension().is_some_and(|e| e == "toml") => {
                return Err(CliError::Config(format!("{}: {e}", path.display())))
            }
            Err(_) => {}
        }
    }
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionRecord {
    pub context_of: Vec<usize>,
    pub regime_of: Vec<usize>,
}

impl From<&VariablePartition> for PartitionRecord {
    fn from(vp: &VariablePartition) -> Self {
        Self {
            context_of: vp.context_of.clone(),
            regime_of: vp.regime_of.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub seed: u64,
    pub n_vars: usize,
    pub n_time: usize,
    pub max_lag: usize,
    /// `[source, target, lag]`.
    pub edges: Vec<[usize; 3]>,
    pub changepoints: Vec<usize>,
    pub context_of: Vec<usize>,
    pub regime_of: Vec<usize>,
    pub partitions: Vec<PartitionRecord>,
    pub mechanisms: Vec<CellMechanism>,
    pub config: SynthConfig,
}

impl TruthFile {
    pub fn new(config: &SynthConfig, truth: &GroundTruth) -> Self {
        Self {
            seed: config.seed,
            n_vars: truth.graph.n_vars(),
            n_time: truth.changepoints.n_time(),
            max_lag: truth.graph.max_lag(),
            edges: truth
                .graph
                .edges()
                .map(|e| [e.source, e.target, e.lag])
                .collect(),
            changepoints: truth.changepoints.points().to_vec(),
            context_of: truth.context_of.clone(),
            regime_of: truth.regime_of.clone(),
            partitions: truth
                .partitions
                .variables()
                .iter()
                .map(Into::into)
                .collect(),
            mechanisms: truth.mechanisms.clone(),
            config: config.clone(),
        }
    }

    pub fn graph(&self) -> CliResult<WindowCausalGraph> {
        graph_from_triples(self.n_vars, self.max_lag, &self.edges)
    }

    pub fn changepoint_set(&self) -> CliResult<ChangepointSet> {
        ChangepointSet::new(self.n_time, self.changepoints.clone())
            .map_err(|e| CliError::Schema(e.to_string()))
    }
}

pub fn graph_from_triples(
    n_vars: usize,
    max_lag: usize,
    triples: &[[usize; 3]],
) -> CliResult<WindowCausalGraph> {
    WindowCausalGraph::from_edges(
        n_vars,
        max_lag,
        triples.iter().map(|&[s, t, l]| LaggedEdge::new(s, t, l)),
    )
    .map_err(|e| CliError::Schema(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub source: usize,
    pub target: usize,
    pub lag: usize,
    /// Score reduction from this edge, in bits.
    pub strength_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub tool_version: String,
    pub n_vars: usize,
    pub n_time: usize,
    pub max_lag: usize,
    pub var_names: Vec<String>,
    pub datasets: Vec<String>,
    pub edges: Vec<EdgeRecord>,
    pub changepoints: Vec<usize>,
    pub partitions: Vec<PartitionRecord>,
    pub meet: PartitionRecord,
    pub total_score_bits: f64,
    pub trace: Vec<TraceEntry>,
    pub warnings: Vec<String>,
    pub fixed_graph: bool,
    pub fixed_changepoints: bool,
    pub config: PipelineConfig,
}

impl ModelFile {
    pub fn new(
        panel: &TimeSeriesPanel,
        result: &PipelineResult,
        config: &PipelineConfig,
        fixed_graph: bool,
        fixed_changepoints: bool,
    ) -> Self {
        let s = &result.state;
        Self {
            tool_version: TOOL_VERSION.to_string(),
            n_vars: panel.n_vars(),
            n_time: panel.n_time(),
            max_lag: s.graph.max_lag(),
            var_names: panel.var_names().to_vec(),
            datasets: panel.datasets().to_vec(),
            edges: result
                .edge_strengths
                .iter()
                .map(|(e, bits)| EdgeRecord {
                    source: e.source,
                    target: e.target,
                    lag: e.lag,
                    strength_bits: *bits,
                })
                .collect(),
            changepoints: s.changepoints.points().to_vec(),
            partitions: s.partitions.variables().iter().map(Into::into).collect(),
            meet: (&s.meet).into(),
            total_score_bits: s.total_score,
            trace: result.trace.clone(),
            warnings: result.warnings.clone(),
            fixed_graph,
            fixed_changepoints,
            config: config.clone(),
        }
    }

    pub fn graph(&self) -> CliResult<WindowCausalGraph> {
        let triples: Vec<[usize; 3]> = self
            .edges
            .iter()
            .map(|e| [e.source, e.target, e.lag])
            .collect();
        graph_from_triples(self.n_vars, self.max_lag, &triples)
    }

    pub fn changepoint_set(&self) -> CliResult<ChangepointSet> {
        ChangepointSet::new(self.n_time, self.changepoints.clone())
            .map_err(|e| CliError::Schema(e.to_string()))
    }
}

/// Rebuilds per-variable partitions from their records.
pub fn partition_assignment(records: &[PartitionRecord]) -> CliResult<PartitionAssignment> {
    let vars = records
        .iter()
        .map(|r| VariablePartition::new(&r.context_of, &r.regime_of))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Schema(e.to_string()))?;
    PartitionAssignment::new(vars).map_err(|e| CliError::Schema(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Directed F1 over lagged edges.
    pub f1_window_graph: f64,
    /// Directed F1 over the lag-collapsed graph.
    pub f1_summary_graph: f64,
    pub f1_changepoints: f64,
    /// Regime labels per time step, model against truth.
    pub ari: f64,
    pub nmi: f64,
    pub margin: usize,
}

impl Report {
    pub const METRICS: [&'static str; 5] = [
        "f1_window_graph",
        "f1_summary_graph",
        "f1_changepoints",
        "ari",
        "nmi",
    ];

    pub fn values(&self) -> [f64; 5] {
        [
            self.f1_window_graph,
            self.f1_summary_graph,
            self.f1_changepoints,
            self.ari,
            self.nmi,
        ]
    }

    /// Aligned two-column text table.
    pub fn table(&self) -> String {
        let width = Self::METRICS.iter().map(|m| m.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (name, v) in Self::METRICS.iter().zip(self.values()) {
            out.push_str(&format!("{name:<width$}  {v:.4}\n"));
        }
        out
    }
}
