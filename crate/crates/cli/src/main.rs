//! `classdisc`: run class discovery experiments from a JSON config.
//!
//! Exit codes: 0 on success, 1 for unusable input (config, data files,
//! output directory), 2 when a run fails.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use classdisc_core::report::{write_classcount_csv, write_clusters_csv, write_curves_csv};
use classdisc_core::{
    load_data, run_class_count_experiment, run_dynamic, run_static, Error, ExperimentConfig, RunMode, RunReport,
};

const WORKERS_VAR: &str = "CLASSDISC_WORKERS";

#[derive(Parser)]
#[command(name = "classdisc", version, about = "Discover new classes in out-of-distribution data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run static or dynamic discovery and write report.json, curves.csv
    /// and clusters.csv.
    Discover {
        /// Experiment config, or a report.json from an earlier run.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Dynamic)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster accuracy on fixed held-out classes as the number of training
    /// classes grows; writes classcount.csv.
    Classcount {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        counts: Vec<usize>,
        /// Classes forming the evaluation pool; defaults to the config's
        /// held-out classes.
        #[arg(long, value_delimiter = ',')]
        eval_held_out: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config (or report) against its schema and its data without
    /// running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Static,
    Dynamic,
}

enum Failure {
    Input(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Run(e.to_string())
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Reads an experiment config; a run report is accepted too and yields the
/// config embedded in it.
fn read_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
    match ExperimentConfig::from_json(&text) {
        Ok(cfg) => Ok(cfg),
        Err(config_err) => match RunReport::from_json(&text) {
            Ok(report) => Ok(report.config),
            Err(_) => Err(Failure::Input(format!("{}: {config_err}", path.display()))),
        },
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))
}

fn discover(config: &Path, mode: Mode, out: &Path) -> Outcome {
    let cfg = read_config(config)?;
    let data = load_data(&cfg.data)?;
    cfg.validate_with_data(&data)?;
    out_dir(out)?;
    let start = Instant::now();
    let (state, run_mode, final_dra) = match mode {
        Mode::Static => {
            let (state, report) = run_static(&cfg, &data)?;
            (state, RunMode::Static, report.dra)
        }
        Mode::Dynamic => {
            let (state, reports) = run_dynamic(&cfg, &data)?;
            let last = reports.last().map_or(0.0, |r| r.dra);
            (state, RunMode::Dynamic, last)
        }
    };
    let report = RunReport::new(run_mode, &cfg, &state, final_dra, start.elapsed().as_secs_f64());
    if let Some(why) = &report.early_stop {
        eprintln!("stopped early: {why}");
    }
    std::fs::write(out.join("report.json"), report.to_json())
        .map_err(|e| Failure::Input(format!("cannot write report.json: {e}")))?;
    write_curves_csv(&report.rounds, create(out, "curves.csv")?)?;
    write_clusters_csv(&report.rounds, create(out, "clusters.csv")?)?;
    println!("final DRA {final_dra:.4} after {} round(s); outputs in {}", report.rounds.len() - 1, out.display());
    Ok(())
}

/// Drops repeated counts, keeping the first occurrence.
fn dedup_counts(counts: &[usize]) -> Vec<usize> {
    let mut seen = Vec::new();
    for &c in counts {
        if seen.contains(&c) {
            eprintln!("warning: class count {c} given more than once; running it once");
        } else {
            seen.push(c);
        }
    }
    seen
}

fn classcount(config: &Path, counts: &[usize], eval_held_out: Option<&[usize]>, out: &Path) -> Outcome {
    let cfg = read_config(config)?;
    let data = load_data(&cfg.data)?;
    cfg.validate()?;
    let counts = dedup_counts(counts);
    let eval = eval_held_out.map_or_else(|| cfg.split.held_out_classes.clone(), <[usize]>::to_vec);
    out_dir(out)?;
    let rows = run_class_count_experiment(&cfg, &data, &counts, &eval)?;
    write_classcount_csv(&rows, create(out, "classcount.csv")?)?;
    for r in &rows {
        println!("{} classes: cluster accuracy {:.4}", r.class_count, r.cluster_accuracy);
    }
    Ok(())
}

fn validate(config: &Path) -> Outcome {
    let cfg = read_config(config)?;
    let data = load_data(&cfg.data)?;
    cfg.validate_with_data(&data)?;
    println!("{}: ok", config.display());
    Ok(())
}

fn configure_workers() -> Outcome {
    let Ok(raw) = std::env::var(WORKERS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Input(format!("{WORKERS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Run(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; help and version are not errors
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = configure_workers().and_then(|()| match &cli.command {
        Command::Discover { config, mode, out } => discover(config, *mode, out),
        Command::Classcount {
            config,
            counts,
            eval_held_out,
            out,
        } => classcount(config, counts, eval_held_out.as_deref(), out),
        Command::Validate { config } => validate(config),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("run failed: {msg}");
            ExitCode::from(2)
        }
    }
}
