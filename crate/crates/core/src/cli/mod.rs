//! Command-line frontend.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 numerical or runtime
//! failure, 3 validation failure.

pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::codes::{build_error_graph, CodeId};
use crate::error::{Error, Result};
use crate::montecarlo::{run_ensemble, run_ensemble_with_workers, Pipeline};
use crate::validation::{run_suite, Check, DEFAULT_SEED, SUITES};
use config::ResolvedConfig;
use manifest::{now_unix, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "errtrack",
    version,
    about = "Continuous-time error tracking for stabilizer codes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory receiving output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Emit every n-th filter step, overriding the config.
    #[arg(long, global = true)]
    pub emit_stride: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export the error graph of a catalog code with its structural counts.
    BuildGraph {
        /// bitflip3, five_qubit or toy1.
        code: String,
    },
    /// Run one trajectory and write its filter, bound, truth and outcome files.
    Trajectory {
        /// TOML config or a previous run's manifest.json.
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one ensemble per parameter point and write summary curves.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a validation suite (or `all`) and report each check.
    Validate { suite: String },
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::Config { .. } => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let started = now_unix();
    match &cli.command {
        Command::BuildGraph { code } => build_graph(cli, code, started),
        Command::Trajectory { config } => trajectory(cli, &resolve(cli, config)?, started),
        Command::Ensemble { config } => ensemble(cli, &resolve(cli, config)?, started),
        Command::Validate { suite } => validate(cli, suite, started),
    }
}

fn resolve(cli: &Cli, path: &Path) -> Result<ResolvedConfig> {
    let mut cfg = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(stride) = cli.emit_stride {
        cfg.override_emit_stride(stride);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(dir: &Path, name: &str, files: &mut Vec<String>) -> Result<BufWriter<File>> {
    files.push(name.to_string());
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
    files: &mut Vec<String>,
) -> Result<()> {
    files.push(name.to_string());
    let body = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(dir.join(name), body + "\n")?;
    Ok(())
}

fn build_graph(cli: &Cli, code: &str, started: f64) -> Result<i32> {
    let id: CodeId = code.parse()?;
    let dir = out_dir(cli)?;
    let graph = build_error_graph(&id.build());
    let stats = graph.stats();
    let mut files = Vec::new();
    graph.write_csv(create(&dir, &format!("{id}_graph.csv"), &mut files)?)?;
    write_json(&dir, &format!("{id}_graph_stats.json"), &stats, &mut files)?;
    let mut m = RunManifest::new(
        "build-graph",
        ResolvedConfig {
            points: Vec::new(),
            trajectory_index: 0,
        },
        started,
    );
    m.target = Some(id.to_string());
    m.finish(&dir, &files)?;
    println!(
        "{id}: {} nodes, degree {}, {} syndromes, {} classes",
        stats.nodes,
        stats
            .degree
            .map_or("non-uniform".to_string(), |d| d.to_string()),
        stats.syndromes,
        stats.classes
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    trajectory_index: usize,
    error: String,
    step: usize,
    config: &'a crate::montecarlo::ExperimentConfig,
}

fn trajectory(cli: &Cli, cfg: &ResolvedConfig, started: f64) -> Result<i32> {
    let [point] = cfg.points.as_slice() else {
        return Err(Error::Config {
            field: "kappa".into(),
            reason: format!(
                "trajectory needs a single parameter point, got {}",
                cfg.points.len()
            ),
        });
    };
    let dir = out_dir(cli)?;
    let pipe = Pipeline::new(point)?;
    let index = cfg.trajectory_index;
    let mut files = Vec::new();
    let result = match pipe.run(index) {
        Ok(r) => r,
        Err(e @ Error::Numerical { .. }) => {
            let Error::Numerical { step, .. } = &e else {
                unreachable!()
            };
            let diag = Diagnostics {
                trajectory_index: index,
                error: e.to_string(),
                step: *step,
                config: point,
            };
            write_json(&dir, "diagnostics.json", &diag, &mut files)?;
            RunManifest::new("trajectory", cfg.clone(), started).finish(&dir, &files)?;
            eprintln!("error: {e}");
            return Ok(EXIT_NUMERICAL);
        }
        Err(e) => return Err(e),
    };
    result
        .trajectory
        .write_csv(create(&dir, "trajectory.csv", &mut files)?)?;
    crate::metrics::write_snapshots_csv(
        &result.snapshots,
        create(&dir, "metrics.csv", &mut files)?,
    )?;
    result
        .path
        .write_csv(&pipe.error_chain, create(&dir, "truth.csv", &mut files)?)?;
    result.write_outcomes_csv(create(&dir, "outcomes.csv", &mut files)?)?;
    RunManifest::new("trajectory", cfg.clone(), started).finish(&dir, &files)?;
    let last = result.snapshots.last().unwrap();
    println!(
        "trajectory {index}: J(T) = {:.6}, p*(T) = {:.6}, truth {}, optimal {} ({}), naive {} ({})",
        last.j,
        last.p_star,
        result.truth,
        result.optimal,
        if result.optimal_success {
            "success"
        } else {
            "failure"
        },
        result.naive,
        if result.naive_success {
            "success"
        } else {
            "failure"
        },
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PointReport {
    file: String,
    kappa: f64,
    kappa_over_gamma_total: f64,
    successes: usize,
    failures: usize,
    optimal_rate: f64,
    naive_rate: f64,
    clip_events: usize,
    max_j_increase: f64,
    monotone_violations: usize,
    failure_reasons: Vec<(usize, String)>,
}

fn ensemble(cli: &Cli, cfg: &ResolvedConfig, started: f64) -> Result<i32> {
    let dir = out_dir(cli)?;
    let mut files = Vec::new();
    let mut reports = Vec::new();
    for (i, point) in cfg.points.iter().enumerate() {
        let summary = match cli.workers {
            Some(w) => run_ensemble_with_workers(point, w)?,
            None => run_ensemble(point)?,
        };
        let name = format!("summary_{i}.csv");
        summary.write_csv(create(&dir, &name, &mut files)?)?;
        let total = point.total_rate();
        println!(
            "point {i}: kappa = {}, J(T) = {:.4} +- {:.4}, optimal {:.3}, naive {:.3}, {} failed",
            point.kappa,
            summary.mean_j.last().unwrap(),
            summary.se_j.last().unwrap(),
            summary.optimal_rate(),
            summary.naive_rate(),
            summary.failures
        );
        reports.push(PointReport {
            file: name,
            kappa: point.kappa,
            kappa_over_gamma_total: if total > 0.0 {
                point.kappa / total
            } else {
                f64::INFINITY
            },
            successes: summary.successes,
            failures: summary.failures,
            optimal_rate: summary.optimal_rate(),
            naive_rate: summary.naive_rate(),
            clip_events: summary.clip_events,
            max_j_increase: summary.max_j_increase,
            monotone_violations: summary.monotone_violations,
            failure_reasons: summary.failure_reasons,
        });
    }
    write_json(&dir, "ensemble.json", &reports, &mut files)?;
    RunManifest::new("ensemble", cfg.clone(), started).finish(&dir, &files)?;
    Ok(EXIT_OK)
}

fn validate(cli: &Cli, suite: &str, started: f64) -> Result<i32> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let suites: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else {
        vec![suite]
    };
    let mut checks: Vec<Check> = Vec::new();
    for s in suites {
        let result = run_suite(s, seed).ok_or_else(|| {
            Error::Argument(format!(
                "unknown suite {s:?}; known suites: all, {}",
                SUITES.join(", ")
            ))
        })?;
        for c in result? {
            println!("{c}");
            checks.push(c);
        }
    }
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        write_json(dir, "validation.json", &checks, &mut files)?;
        let mut m = RunManifest::new(
            "validate",
            ResolvedConfig {
                points: Vec::new(),
                trajectory_index: 0,
            },
            started,
        );
        m.target = Some(suite.to_string());
        m.seed = seed;
        m.finish(dir, &files)?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    })
}
