//! Wonham filter for a jump chain observed through white-noise channels.
//!
//! The update is Euler–Maruyama on the normalized (Kushner–Stratonovich)
//! equation
//!
//! ```text
//! dp = Λᵀp dt + Σᵢ (Hᵢ − hᵢᵀp) p (dYᵢ − hᵢᵀp dt)
//! ```
//!
//! with `Hᵢ = diag(hᵢ)`, followed by a normalization policy.

use std::io::Write;

use crate::chain::JumpChain;
use crate::error::{Error, Result};
use crate::signal::MeasurementRecord;

/// Sum-to-one tolerance of a valid filter state.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub p: Vec<f64>,
    pub t: f64,
}

impl FilterState {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(
                "filter state must be a probability vector".into(),
            ));
        }
        Ok(FilterState { p, t: 0.0 })
    }

    pub fn vertex(dim: usize, m: usize) -> Self {
        let mut p = vec![0.0; dim];
        p[m] = 1.0;
        FilterState { p, t: 0.0 }
    }

    pub fn uniform(dim: usize) -> Self {
        FilterState {
            p: vec![1.0 / dim as f64; dim],
            t: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.p)
    }

    /// Sums the probability vector over the blocks of `block_of`.
    pub fn lumped(&self, block_of: &[usize], blocks: usize) -> Vec<f64> {
        let mut out = vec![0.0; blocks];
        for (&b, &x) in block_of.iter().zip(&self.p) {
            out[b] += x;
        }
        out
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Clip negative entries to zero, then divide by the sum.
    #[default]
    ClipRenormalize,
    /// Divide by the sum only; matches the trace renormalization of the
    /// density-matrix filter.
    DivideByTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepInfo {
    /// Entries clipped to zero in this step.
    pub clipped: usize,
}

/// Reusable scratch space for stepping one filter.
#[derive(Debug, Clone)]
pub struct WonhamFilter<'a> {
    chain: &'a JumpChain,
    normalization: Normalization,
    drift: Vec<f64>,
    hbar: Vec<f64>,
    innov: Vec<f64>,
}

impl<'a> WonhamFilter<'a> {
    pub fn new(chain: &'a JumpChain) -> Self {
        WonhamFilter {
            chain,
            normalization: Normalization::default(),
            drift: vec![0.0; chain.dim()],
            hbar: vec![0.0; chain.num_channels()],
            innov: vec![0.0; chain.num_channels()],
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn chain(&self) -> &JumpChain {
        self.chain
    }

    /// Predicted drift `hᵢᵀp` of every measurement channel.
    pub fn predicted(&self, p: &[f64]) -> Vec<f64> {
        self.chain.obs_levels().iter().map(|h| dot(h, p)).collect()
    }

    /// Innovations `dYᵢ − hᵢᵀp dt` of the last step.
    pub fn last_innovations(&self) -> &[f64] {
        &self.innov
    }

    pub fn step(&mut self, state: &mut FilterState, dy: &[f64], dt: f64) -> Result<StepInfo> {
        debug_assert_eq!(dy.len(), self.chain.num_channels());
        debug_assert_eq!(state.dim(), self.chain.dim());
        let p = &mut state.p;
        let levels = self.chain.obs_levels();
        for (i, h) in levels.iter().enumerate() {
            self.hbar[i] = dot(h, p);
            self.innov[i] = dy[i] - self.hbar[i] * dt;
        }
        self.chain.drift_into(p, &mut self.drift);
        for m in 0..p.len() {
            let gain: f64 = levels
                .iter()
                .enumerate()
                .map(|(i, h)| (h[m] - self.hbar[i]) * self.innov[i])
                .sum();
            p[m] += self.drift[m] * dt + p[m] * gain;
        }
        state.t += dt;
        normalize(p, self.normalization)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(p: &mut [f64], policy: Normalization) -> Result<StepInfo> {
    let mut clipped = 0;
    if policy == Normalization::ClipRenormalize {
        for x in p.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
                clipped += 1;
            }
        }
    }
    let total: f64 = p.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numerical {
            step: 0,
            reason: format!(
                "probability mass {total:e} after update ({clipped} entries clipped); reduce dt"
            ),
        });
    }
    p.iter_mut().for_each(|x| *x /= total);
    Ok(StepInfo { clipped })
}

/// Emitted filter states plus clipping diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<FilterState>,
    pub clip_events: usize,
}

impl Trajectory {
    pub fn last(&self) -> &FilterState {
        self.states.last().unwrap()
    }

    /// CSV with `t` and the full vector for `dim <= 8`, otherwise the top
    /// eight `(index, probability)` pairs per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let dim = self.states.first().map_or(0, FilterState::dim);
        let top_k = 8;
        if dim <= top_k {
            let mut header = vec!["t".to_string()];
            header.extend((0..dim).map(|m| format!("p{m}")));
            w.write_record(&header)?;
            for s in &self.states {
                let mut row = vec![fmt_f(s.t)];
                row.extend(s.p.iter().map(|&x| fmt_f(x)));
                w.write_record(&row)?;
            }
        } else {
            let mut header = vec!["t".to_string()];
            for k in 0..top_k {
                header.push(format!("idx{k}"));
                header.push(format!("p{k}"));
            }
            w.write_record(&header)?;
            for s in &self.states {
                let mut order: Vec<usize> = (0..dim).collect();
                order.sort_by(|&a, &b| s.p[b].total_cmp(&s.p[a]).then(a.cmp(&b)));
                let mut row = vec![fmt_f(s.t)];
                for &m in &order[..top_k] {
                    row.push(m.to_string());
                    row.push(fmt_f(s.p[m]));
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

/// Runs the filter over `record` from `p0`, emitting every `stride`-th
/// state (always including the initial and final states).
pub fn run_filter(
    chain: &JumpChain,
    p0: &FilterState,
    record: &MeasurementRecord,
    stride: usize,
) -> Result<Trajectory> {
    run_filter_with(WonhamFilter::new(chain), p0, record, stride)
}

pub fn run_filter_with(
    mut filter: WonhamFilter<'_>,
    p0: &FilterState,
    record: &MeasurementRecord,
    stride: usize,
) -> Result<Trajectory> {
    let stride = stride.max(1);
    let mut state = p0.clone();
    let mut states = vec![state.clone()];
    let mut clip_events = 0;
    let steps = record.steps();
    for k in 0..steps {
        let info = filter
            .step(&mut state, record.increment(k), record.dt)
            .map_err(|e| at_step(e, k))?;
        clip_events += info.clipped;
        if (k + 1) % stride == 0 || k + 1 == steps {
            states.push(state.clone());
        }
    }
    Ok(Trajectory {
        states,
        clip_events,
    })
}

pub(crate) fn at_step(e: Error, k: usize) -> Error {
    match e {
        Error::Numerical { reason, .. } => Error::Numerical { step: k, reason },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::chain_from_graph;
    use crate::codes::{bitflip_code, syndrome_chain};
    use proptest::prelude::*;

    fn syn4(gamma: f64, kappa: f64) -> JumpChain {
        let code = bitflip_code().with_rates(gamma, kappa);
        chain_from_graph(&syndrome_chain(&code).unwrap(), &code)
    }

    #[test]
    fn vertex_is_fixed_without_errors() {
        let chain = syn4(0.0, 10.0);
        for m in 0..4 {
            let mut f = WonhamFilter::new(&chain);
            let mut s = FilterState::vertex(4, m);
            let dy: Vec<f64> = (0..2).map(|i| chain.obs_level(i, m) * 1e-3).collect();
            for _ in 0..100 {
                f.step(&mut s, &dy, 1e-3).unwrap();
            }
            assert_eq!(s.p, FilterState::vertex(4, m).p);
        }
    }

    #[test]
    fn uniform_has_zero_drift() {
        let chain = syn4(1.3, 1.0);
        let mut out = vec![1.0; 4];
        chain.drift_into(&[0.25; 4], &mut out);
        assert!(out.iter().all(|x| x.abs() < 1e-16));
    }

    // Straight-line four-state update written directly from the matrices.
    fn oracle_step(p: [f64; 4], gamma: f64, h: [[f64; 4]; 2], dy: [f64; 2], dt: f64) -> [f64; 4] {
        let lambda = |m: usize, n: usize| gamma * (1.0 - 4.0 * if m == n { 1.0 } else { 0.0 });
        let mut out = [0.0; 4];
        let hp = [0, 1].map(|i| h[i][0] * p[0] + h[i][1] * p[1] + h[i][2] * p[2] + h[i][3] * p[3]);
        for m in 0..4 {
            let mut drift = 0.0;
            for n in 0..4 {
                drift += lambda(n, m) * p[n];
            }
            let mut gain = 0.0;
            for i in 0..2 {
                gain += (h[i][m] - hp[i]) * p[m] * (dy[i] - hp[i] * dt);
            }
            out[m] = p[m] + drift * dt + gain;
        }
        out
    }

    #[test]
    fn one_step_matches_oracle() {
        let (gamma, kappa, dt) = (1.0, 40.0, 2.5e-5);
        let chain = syn4(gamma, kappa);
        let h = [0, 1].map(|i| [0, 1, 2, 3].map(|m| chain.obs_level(i, m)));
        let p0 = [0.7, 0.1, 0.1, 0.1];
        let dy = [0.0123, -0.0071];
        let expect = oracle_step(p0, gamma, h, dy, dt);
        let mut s = FilterState::new(p0.to_vec()).unwrap();
        WonhamFilter::new(&chain).step(&mut s, &dy, dt).unwrap();
        let total: f64 = expect.iter().sum();
        for m in 0..4 {
            assert!((s.p[m] - expect[m] / total).abs() < 1e-14);
        }
        assert!((s.t - dt).abs() < 1e-20);
    }

    #[test]
    fn empty_record_yields_initial_state() {
        let chain = syn4(1.0, 1.0);
        let rec = MeasurementRecord::new(1e-3, 2, Vec::new()).unwrap();
        let p0 = FilterState::uniform(4);
        let traj = run_filter(&chain, &p0, &rec, 10).unwrap();
        assert_eq!(traj.states, vec![p0]);
    }

    #[test]
    fn stride_emits_final_state() {
        let chain = syn4(1.0, 1.0);
        let rec = MeasurementRecord::new(1e-3, 2, vec![0.0; 2 * 25]).unwrap();
        let traj = run_filter(&chain, &FilterState::vertex(4, 0), &rec, 10).unwrap();
        let times: Vec<f64> = traj.states.iter().map(|s| (s.t * 1e3).round()).collect();
        assert_eq!(times, vec![0.0, 10.0, 20.0, 25.0]);
    }

    #[test]
    fn catastrophic_step_is_reported() {
        let chain = syn4(1.0, 100.0);
        let mut s = FilterState::vertex(4, 0);
        let err = WonhamFilter::new(&chain)
            .step(&mut s, &[f64::NAN, 0.0], 1e-3)
            .unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
    }

    #[test]
    fn vertex_absorption_on_consistent_record() {
        let chain = syn4(0.0, 25.0);
        let m = 2;
        let mut s = FilterState::new(vec![0.3, 0.2, 0.4, 0.1]).unwrap();
        let dy: Vec<f64> = (0..2).map(|i| chain.obs_level(i, m) * 1e-3).collect();
        let dist = |s: &FilterState| {
            s.p.iter()
                .enumerate()
                .map(|(n, x)| (x - (n == m) as u8 as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut f = WonhamFilter::new(&chain);
        let start = dist(&s);
        let mut last = start;
        for _ in 0..2000 {
            f.step(&mut s, &dy, 1e-3).unwrap();
            let d = dist(&s);
            assert!(d <= last + 1e-15);
            last = d;
        }
        assert!(last < start / 100.0, "{last} {:?}", s.p);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
    }

    #[test]
    fn top_k_csv_for_large_chains() {
        let mut p = vec![0.0; 16];
        p[5] = 0.75;
        p[9] = 0.25;
        let traj = Trajectory {
            states: vec![FilterState { p, t: 0.5 }],
            clip_events: 0,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 17);
        assert_eq!((row[1], row[3], row[5]), ("5", "9", "0"));
    }

    proptest! {
        #[test]
        fn simplex_preserved_under_large_increments(
            raw in proptest::collection::vec(0.0f64..1.0, 8),
            dys in proptest::collection::vec(-5.0f64..5.0, 2 * 20),
        ) {
            let code = bitflip_code().with_rates(1.0, 40.0);
            let chain = chain_from_graph(&crate::codes::build_error_graph(&code), &code);
            let total: f64 = raw.iter().sum::<f64>() + 1e-9;
            let mut s = FilterState { p: raw.iter().map(|x| (x + 1e-9 / 8.0) / total).collect(), t: 0.0 };
            let mut f = WonhamFilter::new(&chain);
            for dy in dys.chunks(2) {
                if f.step(&mut s, dy, 1e-3).is_err() {
                    break;
                }
                prop_assert!(s.p.iter().all(|&x| x >= 0.0));
                prop_assert!((s.p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
            }
        }
    }
}
