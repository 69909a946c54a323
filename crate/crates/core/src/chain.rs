//! Continuous-time Markov jump processes over error graphs.
//!
//! Intensities are stored sparsely: for each state the outgoing transitions
//! (used for exact path sampling) and the incoming ones (used for the filter
//! drift `Λᵀp`). `intensity(from, to)` follows the generator convention in
//! which rows sum to zero.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::codes::{ErrorGraph, StabilizerCode};
use crate::error::Result;
use crate::pauli::PauliString;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub to: usize,
    pub rate: f64,
    /// Error channels realizing this transition; each carries `rate / len`.
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct JumpChain {
    exit_rate: Vec<f64>,
    outgoing: Vec<Vec<Transition>>,
    incoming: Vec<Vec<(usize, f64)>>,
    /// `obs_levels[i][m]`: drift of measurement channel `i` in state `m`.
    obs_levels: Vec<Vec<f64>>,
    syndrome_of: Vec<usize>,
    num_syndromes: usize,
    channel_labels: Vec<PauliString>,
}

impl JumpChain {
    pub fn dim(&self) -> usize {
        self.exit_rate.len()
    }

    pub fn num_channels(&self) -> usize {
        self.obs_levels.len()
    }

    pub fn obs_levels(&self) -> &[Vec<f64>] {
        &self.obs_levels
    }

    pub fn obs_level(&self, channel: usize, state: usize) -> f64 {
        self.obs_levels[channel][state]
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        self.exit_rate[state]
    }

    pub fn outgoing(&self, state: usize) -> &[Transition] {
        &self.outgoing[state]
    }

    /// Transitions into `state` as `(source, rate)` pairs.
    pub fn incoming(&self, state: usize) -> &[(usize, f64)] {
        &self.incoming[state]
    }

    pub fn syndrome_of(&self, state: usize) -> usize {
        self.syndrome_of[state]
    }

    pub fn syndromes(&self) -> &[usize] {
        &self.syndrome_of
    }

    pub fn num_syndromes(&self) -> usize {
        self.num_syndromes
    }

    pub fn channel_label(&self, channel: usize) -> &PauliString {
        &self.channel_labels[channel]
    }

    /// Generator entry for the transition `from -> to`.
    pub fn intensity(&self, from: usize, to: usize) -> f64 {
        if from == to {
            return -self.exit_rate[from];
        }
        self.outgoing[from]
            .iter()
            .filter(|t| t.to == to)
            .map(|t| t.rate)
            .sum()
    }

    /// `out = Λᵀ p`.
    pub fn drift_into(&self, p: &[f64], out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            let inflow: f64 = self.incoming[m].iter().map(|&(n, r)| r * p[n]).sum();
            *o = inflow - self.exit_rate[m] * p[m];
        }
    }

    pub fn dense_intensity(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.intensity(i, j)).collect())
            .collect()
    }
}

/// Builds the jump chain for `graph`, using the code's rates: each channel
/// edge carries rate γ and channel `i` observes `2√κ` times the ±1 outcome
/// of generator `i`.
pub fn chain_from_graph(graph: &ErrorGraph, code: &StabilizerCode) -> JumpChain {
    let dim = graph.len();
    let gamma = code.gamma;
    let outgoing: Vec<Vec<Transition>> = graph
        .edges
        .iter()
        .map(|edges| {
            edges
                .iter()
                .filter(|_| gamma > 0.0)
                .map(|e| Transition {
                    to: e.to,
                    rate: gamma * e.multiplicity() as f64,
                    channels: e.channels.clone(),
                })
                .collect()
        })
        .collect();
    let exit_rate = outgoing
        .iter()
        .map(|ts| ts.iter().map(|t| t.rate).sum())
        .collect();
    let mut incoming = vec![Vec::new(); dim];
    for (from, ts) in outgoing.iter().enumerate() {
        for t in ts {
            incoming[t.to].push((from, t.rate));
        }
    }
    let level = 2.0 * code.kappa.sqrt();
    let obs_levels = (0..code.generators().len())
        .map(|i| {
            graph
                .syndrome_of
                .iter()
                .map(|&s| if s >> i & 1 == 1 { -level } else { level })
                .collect()
        })
        .collect();
    JumpChain {
        exit_rate,
        outgoing,
        incoming,
        obs_levels,
        syndrome_of: graph.syndrome_of.clone(),
        num_syndromes: graph.num_syndromes,
        channel_labels: code.error_channels().to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: usize,
    pub state: usize,
}

/// A sampled ground-truth error trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpPath {
    pub initial_state: usize,
    pub events: Vec<JumpEvent>,
    pub horizon: f64,
}

impl JumpPath {
    /// State occupied at time `t` (jumps at exactly `t` have happened).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.events.partition_point(|e| e.time <= t);
        if k == 0 {
            self.initial_state
        } else {
            self.events[k - 1].state
        }
    }

    pub fn final_state(&self) -> usize {
        self.events.last().map_or(self.initial_state, |e| e.state)
    }

    /// CSV rows `time,channel,new_state_index`.
    pub fn write_csv<W: Write>(&self, chain: &JumpChain, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "channel", "new_state_index"])?;
        for e in &self.events {
            w.write_record([
                format!("{:.17e}", e.time),
                chain.channel_label(e.channel).to_string(),
                e.state.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact (Gillespie) sampling of the chain from `initial` up to `horizon`.
pub fn sample_jump_path<R: Rng + ?Sized>(
    chain: &JumpChain,
    initial: usize,
    horizon: f64,
    rng: &mut R,
) -> JumpPath {
    assert!(horizon > 0.0, "horizon must be positive");
    assert!(initial < chain.dim(), "initial state out of range");
    let mut events = Vec::new();
    let mut state = initial;
    let mut t = 0.0;
    loop {
        let rate = chain.exit_rate(state);
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = Exp1.sample(rng);
        t += hold / rate;
        if t > horizon {
            break;
        }
        let mut u = rng.random::<f64>() * rate;
        let ts = chain.outgoing(state);
        let mut pick = ts.len() - 1;
        for (k, tr) in ts.iter().enumerate() {
            if u < tr.rate {
                pick = k;
                break;
            }
            u -= tr.rate;
        }
        let tr = &ts[pick];
        let channel = tr.channels[rng.random_range(0..tr.channels.len())];
        state = tr.to;
        events.push(JumpEvent {
            time: t,
            channel,
            state,
        });
    }
    JumpPath {
        initial_state: initial,
        events,
        horizon,
    }
}
