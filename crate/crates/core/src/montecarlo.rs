//! Reproducible trajectory pipeline and ensemble aggregation.
//!
//! One trajectory samples a true error path on the full error graph,
//! synthesizes the measurement record it would produce, runs the tracking
//! filter and the syndrome filter over that record, and scores both
//! corrections at the horizon.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{chain_from_graph, sample_jump_path, JumpChain, JumpPath};
use crate::codes::{
    build_error_graph, class_chain, syndrome_chain, CodeId, ErrorGraph, StabilizerCode,
};
use crate::error::{Error, Result};
use crate::metrics::{score_recovery, InfoBound, InfoMode, InfoSnapshot};
use crate::pauli::PauliString;
use crate::rng::{stream, Substream};
use crate::signal::{truth_driven_record, MeasurementRecord};
use crate::stats::Welford;
use crate::wonham::{argmax, at_step, fmt_f, FilterState, Trajectory, WonhamFilter};

/// Largest admissible `κ·dt` (and `Γ·dt`).
pub const GRID_LIMIT: f64 = 1e-3;

/// Slack allowed on a single-step increase of the bound.
pub const MONOTONE_SLACK: f64 = 1e-3;

/// Trajectories handed to the worker pool per batch.
const BATCH: usize = 64;

/// Fully resolved parameters of one experiment point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub code: CodeId,
    pub gamma: f64,
    pub kappa: f64,
    pub dt: f64,
    pub horizon: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub emit_stride: usize,
    pub metric_mode: InfoMode,
}

impl ExperimentConfig {
    /// Config on the default grid (see [`default_dt`]) with roughly a
    /// thousand emitted samples.
    pub fn new(code: CodeId, gamma: f64, kappa: f64, horizon: f64) -> Self {
        let total = gamma * code.build().error_channels().len() as f64;
        let dt = default_dt(kappa, total, horizon);
        let steps = (horizon / dt).round().max(1.0) as usize;
        ExperimentConfig {
            code,
            gamma,
            kappa,
            dt,
            horizon,
            trajectories: 50,
            seed: 0,
            emit_stride: (steps / 1000).max(1),
            metric_mode: InfoMode::default(),
        }
    }

    /// Total error rate `Γ = γ · (number of channels)`.
    pub fn total_rate(&self) -> f64 {
        self.gamma * self.code.build().error_channels().len() as f64
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let field = |field: &str, reason: String| {
            Err(Error::Config {
                field: field.into(),
                reason,
            })
        };
        for (name, v) in [("gamma", self.gamma), ("kappa", self.kappa)] {
            if !(v.is_finite() && v >= 0.0) {
                return field(
                    name,
                    format!("rate must be finite and non-negative, got {v}"),
                );
            }
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return field("dt", format!("must be positive, got {}", self.dt));
        }
        let fast = self.kappa.max(self.total_rate());
        if fast * self.dt > GRID_LIMIT * (1.0 + 1e-9) {
            return field(
                "dt",
                format!(
                    "max(kappa, Gamma)*dt = {:e} exceeds {GRID_LIMIT:e}",
                    fast * self.dt
                ),
            );
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return field("horizon", format!("must be positive, got {}", self.horizon));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) || steps.round() < 1.0 {
            return field(
                "horizon",
                format!(
                    "{} is not a whole number of steps of dt = {:e}",
                    self.horizon, self.dt
                ),
            );
        }
        if self.trajectories == 0 {
            return field("trajectories", "must be at least 1".into());
        }
        if self.emit_stride == 0 {
            return field("emit_stride", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Largest step dividing `horizon` evenly with `max(κ, Γ, 1)·dt ≤ 10⁻³`.
pub fn default_dt(kappa: f64, total_rate: f64, horizon: f64) -> f64 {
    let coarsest = GRID_LIMIT / kappa.max(total_rate).max(1.0);
    if !(horizon.is_finite() && horizon > 0.0) {
        return coarsest;
    }
    horizon / (horizon / coarsest - 1e-9).ceil().max(1.0)
}

/// Graphs and chains shared by every trajectory of an experiment.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub code: StabilizerCode,
    /// All error strings; the truth path lives here.
    pub error_graph: ErrorGraph,
    pub error_chain: JumpChain,
    /// Units tracked by the optimal filter: strings or logical classes.
    pub filter_graph: ErrorGraph,
    pub filter_chain: JumpChain,
    pub syndrome_graph: ErrorGraph,
    pub syndrome_chain: JumpChain,
    pub bound: InfoBound,
}

impl Pipeline {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let code = config.code.build().with_rates(config.gamma, config.kappa);
        let error_graph = build_error_graph(&code);
        let error_chain = chain_from_graph(&error_graph, &code);
        let filter_graph = match config.metric_mode {
            InfoMode::PerString => error_graph.clone(),
            InfoMode::PerClass => class_chain(&code)?,
        };
        let filter_chain = chain_from_graph(&filter_graph, &code);
        let syndrome_graph = syndrome_chain(&code)?;
        let syndrome_chain = chain_from_graph(&syndrome_graph, &code);
        let bound = InfoBound::new(&filter_graph, config.metric_mode);
        Ok(Pipeline {
            config: config.clone(),
            code,
            error_graph,
            error_chain,
            filter_graph,
            filter_chain,
            syndrome_graph,
            syndrome_chain,
            bound,
        })
    }

    /// Filter prior: the no-error unit with certainty.
    pub fn initial_state(&self) -> FilterState {
        let id = PauliString::identity(self.code.num_qubits());
        FilterState::vertex(
            self.filter_chain.dim(),
            self.filter_graph.index_of(&id).expect("identity is a node"),
        )
    }

    pub fn sample_truth(&self, index: usize) -> JumpPath {
        let id = PauliString::identity(self.code.num_qubits());
        let start = self.error_graph.index_of(&id).expect("identity is a node");
        let mut rng = stream(self.config.seed, index as u64, Substream::Jumps);
        sample_jump_path(&self.error_chain, start, self.config.horizon, &mut rng)
    }

    pub fn record_for(&self, path: &JumpPath, index: usize) -> Result<MeasurementRecord> {
        let mut rng = stream(self.config.seed, index as u64, Substream::MeasurementNoise);
        truth_driven_record(
            path,
            &self.error_chain,
            self.config.dt,
            self.config.steps(),
            &mut rng,
        )
    }

    pub fn run(&self, index: usize) -> Result<TrajectoryResult> {
        let path = self.sample_truth(index);
        let record = self.record_for(&path, index)?;
        self.run_on_record(index, path, &record)
    }

    /// Runs both filters over `record` and scores their corrections against
    /// the final state of `path`.
    pub fn run_on_record(
        &self,
        index: usize,
        path: JumpPath,
        record: &MeasurementRecord,
    ) -> Result<TrajectoryResult> {
        let stride = self.config.emit_stride;
        let steps = record.steps();
        let mut filter = WonhamFilter::new(&self.filter_chain);
        let mut naive_filter = WonhamFilter::new(&self.syndrome_chain);
        let mut state = self.initial_state();
        let mut naive_state = FilterState::vertex(self.syndrome_chain.dim(), 0);
        let mut states = vec![state.clone()];
        let mut snapshots = vec![self.bound.snapshot(&state)];
        let mut clip_events = 0;
        let mut prev_j = snapshots[0].j;
        let mut max_increase = f64::NEG_INFINITY;
        let mut violations = 0;
        let mut dominance_violations = 0;
        for k in 0..steps {
            let dy = record.increment(k);
            clip_events += filter
                .step(&mut state, dy, record.dt)
                .map_err(|e| at_step(e, k))?
                .clipped;
            clip_events += naive_filter
                .step(&mut naive_state, dy, record.dt)
                .map_err(|e| at_step(e, k))?
                .clipped;
            let snap = self.bound.snapshot(&state);
            let inc = snap.j - prev_j;
            max_increase = max_increase.max(inc);
            if inc > MONOTONE_SLACK {
                violations += 1;
            }
            prev_j = snap.j;
            if snap.p_star > snap.j {
                dominance_violations += 1;
            }
            if (k + 1) % stride == 0 || k + 1 == steps {
                states.push(state.clone());
                snapshots.push(snap);
            }
        }
        let truth = self.error_graph.nodes[path.final_state()];
        let naive = self.syndrome_graph.nodes[argmax(&naive_state.p)];
        let optimal = self.bound.optimal_correction(&state);
        Ok(TrajectoryResult {
            index,
            naive_success: score_recovery(&naive, &truth, &self.code),
            optimal_success: score_recovery(&optimal, &truth, &self.code),
            path,
            truth,
            trajectory: Trajectory {
                states,
                clip_events,
            },
            snapshots,
            naive,
            optimal,
            max_j_increase: max_increase,
            monotone_violations: violations,
            dominance_violations,
        })
    }
}

/// Everything produced by one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub index: usize,
    pub path: JumpPath,
    pub truth: PauliString,
    pub trajectory: Trajectory,
    pub snapshots: Vec<InfoSnapshot>,
    pub naive: PauliString,
    pub optimal: PauliString,
    pub naive_success: bool,
    pub optimal_success: bool,
    /// Largest single-step change of the bound (over every step, not only
    /// emitted ones).
    pub max_j_increase: f64,
    pub monotone_violations: usize,
    pub dominance_violations: usize,
}

impl TrajectoryResult {
    /// CSV `policy,correction,truth,success`.
    pub fn write_outcomes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["policy", "correction", "truth", "success"])?;
        for (name, c, ok) in [
            ("naive", &self.naive, self.naive_success),
            ("optimal", &self.optimal, self.optimal_success),
        ] {
            w.write_record([
                name,
                &c.to_string(),
                &self.truth.to_string(),
                if ok { "1" } else { "0" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_trajectory(config: &ExperimentConfig, index: usize) -> Result<TrajectoryResult> {
    Pipeline::new(config)?.run(index)
}

/// Aggregated ensemble statistics on the shared emission grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub config: ExperimentConfig,
    pub times: Vec<f64>,
    pub mean_j: Vec<f64>,
    pub se_j: Vec<f64>,
    pub mean_p_star: Vec<f64>,
    pub se_p_star: Vec<f64>,
    pub successes: usize,
    pub failures: usize,
    pub naive_recoveries: usize,
    pub optimal_recoveries: usize,
    /// Trajectories where the optimal policy succeeded and the naive one
    /// failed, and the reverse.
    pub optimal_only: usize,
    pub naive_only: usize,
    pub clip_events: usize,
    pub max_j_increase: f64,
    pub monotone_violations: usize,
    pub dominance_violations: usize,
    /// `(trajectory index, reason)` for every failed trajectory.
    pub failure_reasons: Vec<(usize, String)>,
}

impl EnsembleSummary {
    pub fn naive_rate(&self) -> f64 {
        self.naive_recoveries as f64 / self.successes.max(1) as f64
    }

    pub fn optimal_rate(&self) -> f64 {
        self.optimal_recoveries as f64 / self.successes.max(1) as f64
    }

    /// CSV `t,mean_J,se_J,mean_pstar,se_pstar`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mean_J", "se_J", "mean_pstar", "se_pstar"])?;
        for k in 0..self.times.len() {
            w.write_record([
                fmt_f(self.times[k]),
                fmt_f(self.mean_j[k]),
                fmt_f(self.se_j[k]),
                fmt_f(self.mean_p_star[k]),
                fmt_f(self.se_p_star[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

type BatchItem = (usize, Result<(Vec<f64>, Reduced)>);

/// Per-trajectory data kept for aggregation.
struct Reduced {
    j: Vec<f64>,
    p_star: Vec<f64>,
    naive: bool,
    optimal: bool,
    clip_events: usize,
    max_increase: f64,
    violations: usize,
    dominance: usize,
}

/// Runs `config.trajectories` trajectories on the current rayon pool and
/// merges them in index order, so the summary does not depend on the
/// number of workers.
pub fn run_ensemble(config: &ExperimentConfig) -> Result<EnsembleSummary> {
    let pipe = Pipeline::new(config)?;
    let n = config.trajectories;
    let mut times: Option<Vec<f64>> = None;
    let mut acc_j: Vec<Welford> = Vec::new();
    let mut acc_p: Vec<Welford> = Vec::new();
    let mut summary = EnsembleSummary {
        config: config.clone(),
        times: Vec::new(),
        mean_j: Vec::new(),
        se_j: Vec::new(),
        mean_p_star: Vec::new(),
        se_p_star: Vec::new(),
        successes: 0,
        failures: 0,
        naive_recoveries: 0,
        optimal_recoveries: 0,
        optimal_only: 0,
        naive_only: 0,
        clip_events: 0,
        max_j_increase: f64::NEG_INFINITY,
        monotone_violations: 0,
        dominance_violations: 0,
        failure_reasons: Vec::new(),
    };
    for start in (0..n).step_by(BATCH) {
        let batch: Vec<BatchItem> = (start..(start + BATCH).min(n))
            .into_par_iter()
            .map(|i| {
                let r = pipe.run(i).map(|r| {
                    let t: Vec<f64> = r.snapshots.iter().map(|s| s.t).collect();
                    let red = Reduced {
                        j: r.snapshots.iter().map(|s| s.j).collect(),
                        p_star: r.snapshots.iter().map(|s| s.p_star).collect(),
                        naive: r.naive_success,
                        optimal: r.optimal_success,
                        clip_events: r.trajectory.clip_events,
                        max_increase: r.max_j_increase,
                        violations: r.monotone_violations,
                        dominance: r.dominance_violations,
                    };
                    (t, red)
                });
                (i, r)
            })
            .collect();
        for (i, res) in batch {
            match res {
                Ok((t, red)) => {
                    if times.is_none() {
                        acc_j = vec![Welford::default(); t.len()];
                        acc_p = vec![Welford::default(); t.len()];
                        times = Some(t);
                    }
                    for (k, (&j, &p)) in red.j.iter().zip(&red.p_star).enumerate() {
                        acc_j[k].push(j);
                        acc_p[k].push(p);
                    }
                    summary.successes += 1;
                    summary.naive_recoveries += red.naive as usize;
                    summary.optimal_recoveries += red.optimal as usize;
                    summary.optimal_only += (red.optimal && !red.naive) as usize;
                    summary.naive_only += (red.naive && !red.optimal) as usize;
                    summary.clip_events += red.clip_events;
                    summary.max_j_increase = summary.max_j_increase.max(red.max_increase);
                    summary.monotone_violations += red.violations;
                    summary.dominance_violations += red.dominance;
                }
                Err(e @ Error::Numerical { .. }) => {
                    summary.failures += 1;
                    summary.failure_reasons.push((i, e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
    }
    let Some(times) = times else {
        return Err(Error::Experiment(format!(
            "all {n} trajectories failed; first: {}",
            summary.failure_reasons[0].1
        )));
    };
    summary.times = times;
    summary.mean_j = acc_j.iter().map(Welford::mean).collect();
    summary.se_j = acc_j.iter().map(Welford::std_error).collect();
    summary.mean_p_star = acc_p.iter().map(Welford::mean).collect();
    summary.se_p_star = acc_p.iter().map(Welford::std_error).collect();
    Ok(summary)
}

/// Runs the ensemble on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<EnsembleSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_ensemble(config))
}

/// Decay of the mean bound for several measurement strengths: one ensemble
/// per `κ/Γ` ratio, every other parameter taken from `base`.
pub fn kappa_sweep(base: &ExperimentConfig, ratios: &[f64]) -> Result<Vec<EnsembleSummary>> {
    ratios
        .iter()
        .map(|&r| {
            let mut cfg =
                ExperimentConfig::new(base.code, base.gamma, r * base.total_rate(), base.horizon);
            cfg.trajectories = base.trajectories;
            cfg.seed = base.seed;
            cfg.metric_mode = base.metric_mode;
            run_ensemble(&cfg)
        })
        .collect()
}
