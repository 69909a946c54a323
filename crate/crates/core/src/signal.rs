//! Measurement record synthesis.
//!
//! Records can be generated from a ground-truth jump path plus white noise,
//! or from a running filter driven by Wiener innovations. Both produce
//! records with the same law.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chain::{JumpChain, JumpPath};
use crate::error::{Error, Result};
use crate::wonham::{at_step, FilterState, WonhamFilter};

/// Increments `dYᵢ` on a uniform grid, stored row-major (`steps × channels`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub dt: f64,
    channels: usize,
    increments: Vec<f64>,
}

impl MeasurementRecord {
    pub fn new(dt: f64, channels: usize, increments: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Argument(format!("dt must be positive, got {dt}")));
        }
        if channels == 0 || !increments.len().is_multiple_of(channels) {
            return Err(Error::Argument(
                "increment count is not a multiple of the channel count".into(),
            ));
        }
        if let Some(k) = increments.iter().position(|x| !x.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite increment at step {}",
                k / channels
            )));
        }
        Ok(MeasurementRecord {
            dt,
            channels,
            increments,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.channels
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.channels..(step + 1) * self.channels]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// CSV rows `step,dY1,...,dYg`; the first row is a header carrying `dt`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![format!("step(dt={:.17e})", self.dt)];
        header.extend((1..=self.channels).map(|i| format!("dY{i}")));
        w.write_record(&header)?;
        for k in 0..self.steps() {
            let mut row = vec![k.to_string()];
            row.extend(self.increment(k).iter().map(|x| format!("{x:.17e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let first = headers.get(0).unwrap_or_default();
        let dt = first
            .strip_prefix("step(dt=")
            .and_then(|s| s.strip_suffix(')'))
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Argument(format!("record header {first:?} does not carry dt")))?;
        let channels = headers.len() - 1;
        let mut increments = Vec::new();
        for (k, row) in r.records().enumerate() {
            let row = row?;
            if row.get(0).and_then(|s| s.parse::<usize>().ok()) != Some(k) {
                return Err(Error::Argument(format!(
                    "record rows out of order at row {k}"
                )));
            }
            for field in row.iter().skip(1) {
                increments.push(
                    field
                        .parse::<f64>()
                        .map_err(|e| Error::Argument(format!("bad increment {field:?}: {e}")))?,
                );
            }
        }
        MeasurementRecord::new(dt, channels, increments)
    }
}

fn truth_record<R: Rng + ?Sized>(
    path: &JumpPath,
    chain: &JumpChain,
    dt: f64,
    steps: usize,
    mut noise: Option<&mut R>,
) -> Result<MeasurementRecord> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    if steps as f64 * dt > path.horizon * (1.0 + 1e-12) {
        return Err(Error::Argument(
            "record horizon exceeds the jump path horizon".into(),
        ));
    }
    let g = chain.num_channels();
    let sq = dt.sqrt();
    let mut increments = Vec::with_capacity(steps * g);
    let mut next_event = 0;
    let mut state = path.initial_state;
    for k in 0..steps {
        let t = k as f64 * dt;
        while next_event < path.events.len() && path.events[next_event].time <= t {
            state = path.events[next_event].state;
            next_event += 1;
        }
        for i in 0..g {
            let xi: f64 = match noise.as_deref_mut() {
                Some(rng) => StandardNormal.sample(rng),
                None => 0.0,
            };
            increments.push(chain.obs_level(i, state) * dt + sq * xi);
        }
    }
    MeasurementRecord::new(dt, g, increments)
}

/// `dYᵢ = hᵢ^{m(t)} dt + √dt ξ`, with `m(t)` the path state at the left end
/// of each step.
pub fn truth_driven_record<R: Rng + ?Sized>(
    path: &JumpPath,
    chain: &JumpChain,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<MeasurementRecord> {
    truth_record(path, chain, dt, steps, Some(rng))
}

/// The drift part of [`truth_driven_record`] with the noise switched off.
pub fn noiseless_record(
    path: &JumpPath,
    chain: &JumpChain,
    dt: f64,
    steps: usize,
) -> Result<MeasurementRecord> {
    truth_record::<rand_chacha::ChaCha8Rng>(path, chain, dt, steps, None)
}

/// Output of [`innovations_driven_record`].
#[derive(Debug, Clone)]
pub struct InnovationsRun {
    pub record: MeasurementRecord,
    /// The Wiener increments that drove the filter, same layout as the record.
    pub innovations: Vec<f64>,
    pub final_state: FilterState,
    pub clip_events: usize,
}

/// Steps the filter with fresh Wiener increments `dW` and emits
/// `dYᵢ = dWᵢ + hᵢᵀp dt`.
pub fn innovations_driven_record<R: Rng + ?Sized>(
    p0: &FilterState,
    chain: &JumpChain,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Result<InnovationsRun> {
    let g = chain.num_channels();
    let sq = dt.sqrt();
    let mut filter = WonhamFilter::new(chain);
    let mut state = p0.clone();
    let mut increments = Vec::with_capacity(steps * g);
    let mut innovations = Vec::with_capacity(steps * g);
    let mut dy = vec![0.0; g];
    let mut clip_events = 0;
    for k in 0..steps {
        let predicted = filter.predicted(&state.p);
        for i in 0..g {
            let xi: f64 = StandardNormal.sample(rng);
            let dw = sq * xi;
            innovations.push(dw);
            dy[i] = dw + predicted[i] * dt;
        }
        increments.extend_from_slice(&dy);
        clip_events += filter
            .step(&mut state, &dy, dt)
            .map_err(|e| at_step(e, k))?
            .clipped;
    }
    Ok(InnovationsRun {
        record: MeasurementRecord::new(dt, g, increments)?,
        innovations,
        final_state: state,
        clip_events,
    })
}

/// Innovations recovered by re-running the filter over `record`.
pub fn recover_innovations(
    p0: &FilterState,
    chain: &JumpChain,
    record: &MeasurementRecord,
) -> Result<Vec<f64>> {
    let mut filter = WonhamFilter::new(chain);
    let mut state = p0.clone();
    let mut out = Vec::with_capacity(record.increments().len());
    for k in 0..record.steps() {
        filter
            .step(&mut state, record.increment(k), record.dt)
            .map_err(|e| at_step(e, k))?;
        out.extend_from_slice(filter.last_innovations());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{chain_from_graph, sample_jump_path, JumpEvent};
    use crate::codes::{bitflip_code, build_error_graph};
    use crate::rng::{stream, Substream};
    use crate::stats::Welford;

    fn chain8(gamma: f64, kappa: f64) -> JumpChain {
        let code = bitflip_code().with_rates(gamma, kappa);
        chain_from_graph(&build_error_graph(&code), &code)
    }

    #[test]
    fn noiseless_record_is_pure_drift() {
        let chain = chain8(1.0, 9.0);
        let path = JumpPath {
            initial_state: 0,
            events: vec![JumpEvent {
                time: 0.0105,
                channel: 0,
                state: 4,
            }],
            horizon: 0.1,
        };
        let dt = 1e-3;
        let rec = noiseless_record(&path, &chain, dt, 100).unwrap();
        for k in 0..100 {
            // state switches at the first grid point at or after the jump
            let m = if k >= 11 { 4 } else { 0 };
            for i in 0..2 {
                assert_eq!(rec.increment(k)[i] / dt, chain.obs_level(i, m));
            }
        }
    }

    #[test]
    fn fixed_state_moments() {
        let chain = chain8(0.0, 4.0);
        let path = JumpPath {
            initial_state: 5,
            events: vec![],
            horizon: 10.0,
        };
        let dt = 1e-3;
        let mut rng = stream(1, 0, Substream::MeasurementNoise);
        let rec = truth_driven_record(&path, &chain, dt, 10_000, &mut rng).unwrap();
        for i in 0..2 {
            let mut mean = Welford::default();
            for k in 0..rec.steps() {
                mean.push(rec.increment(k)[i]);
            }
            let h = chain.obs_level(i, 5);
            assert!((mean.mean() - h * dt).abs() < 3.0 * mean.std_error());
            // variance of the sample variance for Gaussian increments: 2σ⁴/(n-1)
            let var_se = (2.0 / (rec.steps() - 1) as f64).sqrt() * dt;
            assert!((mean.variance() - dt).abs() < 3.0 * var_se);
        }
        // channels are independent
        let n = rec.steps() as f64;
        let (a, b): (Vec<f64>, Vec<f64>) = (0..rec.steps())
            .map(|k| (rec.increment(k)[0], rec.increment(k)[1]))
            .unzip();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / n;
        let corr = cov
            / (mean(&a.iter().map(|x| (x - ma).powi(2)).collect::<Vec<_>>()).sqrt()
                * mean(&b.iter().map(|y| (y - mb).powi(2)).collect::<Vec<_>>()).sqrt());
        assert!(corr.abs() <= 3.0 / n.sqrt());
    }

    #[test]
    fn innovations_round_trip() {
        let chain = chain8(1.0, 40.0);
        let p0 = FilterState::vertex(8, 0);
        let mut rng = stream(4, 0, Substream::Innovations);
        let run = innovations_driven_record(&p0, &chain, 2.5e-5, 4000, &mut rng).unwrap();
        let back = recover_innovations(&p0, &chain, &run.record).unwrap();
        let worst = back
            .iter()
            .zip(&run.innovations)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-12, "{worst:e}");
    }

    #[test]
    fn zero_kappa_record_has_no_drift() {
        let chain = chain8(1.0, 0.0);
        let p0 = FilterState::vertex(8, 0);
        let run = innovations_driven_record(
            &p0,
            &chain,
            1e-3,
            500,
            &mut stream(4, 1, Substream::Innovations),
        )
        .unwrap();
        assert_eq!(run.record.increments(), &run.innovations[..]);
    }

    #[test]
    fn record_horizon_checked() {
        let chain = chain8(1.0, 1.0);
        let path = sample_jump_path(&chain, 0, 0.01, &mut stream(1, 1, Substream::Jumps));
        assert!(noiseless_record(&path, &chain, 1e-3, 20).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let chain = chain8(1.0, 40.0);
        let path = sample_jump_path(&chain, 0, 1.0, &mut stream(8, 0, Substream::Jumps));
        let rec = truth_driven_record(
            &path,
            &chain,
            1e-3,
            300,
            &mut stream(8, 0, Substream::MeasurementNoise),
        )
        .unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert_eq!(MeasurementRecord::read_csv(&buf[..]).unwrap(), rec);
        assert!(MeasurementRecord::read_csv(&b"step,dY1\n0,1.0\n"[..]).is_err());
    }
}
