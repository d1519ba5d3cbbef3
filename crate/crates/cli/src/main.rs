use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spacetime::metrics::DEFAULT_MARGIN;
use spacetime_cli::commands::{self, DiscoverOptions, Suite};
use spacetime_cli::files::{read_config, write_json};
use spacetime_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "spacetime",
    version,
    about = "Causal discovery over contexts and regimes"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic benchmark instance.
    Generate {
        /// Generator config (TOML, or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for `d{idx}.csv` and `truth.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Learn graph, changepoints and partitions from a directory of dataset CSVs.
    Discover {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        d_min: Option<usize>,
        #[arg(long)]
        max_lag: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Hold the graph of this `truth.json` fixed.
        #[arg(long)]
        fix_graph: Option<PathBuf>,
        /// Hold the changepoints of this `truth.json` fixed.
        #[arg(long)]
        fix_changepoints: Option<PathBuf>,
    },
    /// Compare a model against ground truth.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Changepoint matching tolerance in time steps.
        #[arg(long, default_value_t = DEFAULT_MARGIN)]
        margin: usize,
        /// Where to write the JSON report (default: `report.json` beside the model).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run generate, discover and evaluate over a suite of configs and seeds.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-config metric means to `plot_data.csv`.
        #[arg(long)]
        emit_plot_data: bool,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut cfg = commands::load_synth_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let truth = commands::generate(&cfg, &out)?;
            println!(
                "wrote {} datasets, {} edges, changepoints {:?} to {}",
                cfg.n_datasets,
                truth.edges.len(),
                truth.changepoints,
                out.display()
            );
        }
        Command::Discover {
            data,
            config,
            out,
            seed,
            d_min,
            max_lag,
            alpha,
            fix_graph,
            fix_changepoints,
        } => {
            let mut cfg = commands::load_pipeline_config(config.as_deref())?;
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = d_min {
                cfg.d_min = v;
            }
            if let Some(v) = max_lag {
                cfg.max_lag = v;
            }
            if let Some(v) = alpha {
                cfg.alpha = v;
            }
            cfg.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            let opts = DiscoverOptions {
                fix_graph,
                fix_changepoints,
            };
            let model = commands::discover(&data, &cfg, &opts, &out)?;
            println!(
                "{} edges, changepoints {:?}, score {:.3} bits -> {}",
                model.edges.len(),
                model.changepoints,
                model.total_score_bits,
                out.display()
            );
        }
        Command::Evaluate {
            model,
            truth,
            margin,
            out,
        } => {
            let report = commands::evaluate(&model, &truth, margin)?;
            let out = out.unwrap_or_else(|| model.with_file_name("report.json"));
            write_json(&out, &report)?;
            print!("{}", report.table());
        }
        Command::Bench {
            suite,
            out,
            emit_plot_data,
        } => {
            let suite: Suite = read_config(&suite)?;
            let summary = commands::bench(&suite, &out, emit_plot_data)?;
            println!(
                "{} cells complete -> {}",
                summary.completed,
                out.join("aggregate.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPACETIME_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
