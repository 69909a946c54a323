use errtrack::chain::{chain_from_graph, sample_jump_path, JumpChain};
use errtrack::codes::{bitflip_code, build_error_graph, syndrome_chain, ErrorGraph};
use errtrack::metrics::{naive_policy, optimal_policy, InfoMode};
use errtrack::rng::{stream, Substream};
use errtrack::signal::truth_driven_record;
use errtrack::stats::{ks_one_sample, normal_cdf, Welford};
use errtrack::wonham::{FilterState, WonhamFilter};
use proptest::prelude::*;

fn chains(gamma: f64, kappa: f64) -> (ErrorGraph, JumpChain, ErrorGraph, JumpChain) {
    let code = bitflip_code().with_rates(gamma, kappa);
    let g8 = build_error_graph(&code);
    let g4 = syndrome_chain(&code).unwrap();
    let c8 = chain_from_graph(&g8, &code);
    let c4 = chain_from_graph(&g4, &code);
    (g8, c8, g4, c4)
}

#[test]
fn extended_filter_tracks_the_true_error_at_high_snr() {
    let (_, c8, _, _) = chains(1.0, 100.0);
    let dt = 1e-5;
    let steps = 50_000;
    let mut hits = 0;
    let n = 200;
    for i in 0..n {
        let path = sample_jump_path(&c8, 0, 0.5, &mut stream(5, i, Substream::Jumps));
        let rec = truth_driven_record(
            &path,
            &c8,
            dt,
            steps,
            &mut stream(5, i, Substream::MeasurementNoise),
        )
        .unwrap();
        let mut f = WonhamFilter::new(&c8);
        let mut p = FilterState::vertex(8, 0);
        for k in 0..steps {
            f.step(&mut p, rec.increment(k), dt).unwrap();
        }
        hits += (p.argmax() == path.final_state()) as usize;
    }
    assert!(hits as f64 >= 0.9 * n as f64, "{hits}/{n}");
}

#[test]
fn extended_filter_lumps_to_syndrome_filter() {
    let (g8, c8, _, c4) = chains(1.0, 40.0);
    let dt = 2.5e-5;
    let steps = 4000;
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let path = sample_jump_path(
            &c8,
            0,
            dt * steps as f64,
            &mut stream(8, i, Substream::Jumps),
        );
        let rec = truth_driven_record(
            &path,
            &c8,
            dt,
            steps,
            &mut stream(8, i, Substream::MeasurementNoise),
        )
        .unwrap();
        let (mut f8, mut f4) = (WonhamFilter::new(&c8), WonhamFilter::new(&c4));
        let (mut p8, mut p4) = (FilterState::vertex(8, 0), FilterState::vertex(4, 0));
        for k in 0..steps {
            f8.step(&mut p8, rec.increment(k), dt).unwrap();
            f4.step(&mut p4, rec.increment(k), dt).unwrap();
            let lumped = p8.lumped(&g8.syndrome_of, 4);
            for (a, b) in lumped.iter().zip(&p4.p) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn innovations_of_truth_driven_records_are_white() {
    let (_, c8, _, _) = chains(1.0, 40.0);
    let dt = 2.5e-5;
    let steps = 2000;
    let mut scaled = Vec::new();
    let mut var = Welford::default();
    for i in 0..20 {
        let path = sample_jump_path(
            &c8,
            0,
            dt * steps as f64,
            &mut stream(13, i, Substream::Jumps),
        );
        let rec = truth_driven_record(
            &path,
            &c8,
            dt,
            steps,
            &mut stream(13, i, Substream::MeasurementNoise),
        )
        .unwrap();
        let mut f = WonhamFilter::new(&c8);
        let mut p = FilterState::vertex(8, 0);
        for k in 0..steps {
            f.step(&mut p, rec.increment(k), dt).unwrap();
            for &dw in f.last_innovations() {
                var.push(dw * dw);
                // thin the sample so the KS test sees near-independent draws
                if k % 10 == 0 {
                    scaled.push(dw / dt.sqrt());
                }
            }
        }
    }
    let ks = ks_one_sample(&scaled, normal_cdf);
    assert!(ks.p_value > 0.01, "{ks:?}");
    assert!(
        (var.mean() - dt).abs() < 3.0 * var.std_error(),
        "{} vs {dt}",
        var.mean()
    );
}

#[test]
fn measurement_channels_are_uncorrelated() {
    let (_, c8, _, _) = chains(1.0, 40.0);
    let dt = 2.5e-5;
    let steps = 40_000;
    let path = sample_jump_path(&c8, 0, 1.0, &mut stream(2, 0, Substream::Jumps));
    let rec = truth_driven_record(
        &path,
        &c8,
        dt,
        steps,
        &mut stream(2, 0, Substream::MeasurementNoise),
    )
    .unwrap();
    let noise: Vec<[f64; 2]> = (0..steps)
        .map(|k| {
            let m = path.state_at(k as f64 * dt);
            let dy = rec.increment(k);
            [
                dy[0] - c8.obs_level(0, m) * dt,
                dy[1] - c8.obs_level(1, m) * dt,
            ]
        })
        .collect();
    let mean = |c: usize| noise.iter().map(|x| x[c]).sum::<f64>() / steps as f64;
    let (m0, m1) = (mean(0), mean(1));
    let cov: f64 = noise.iter().map(|x| (x[0] - m0) * (x[1] - m1)).sum();
    let v0: f64 = noise.iter().map(|x| (x[0] - m0).powi(2)).sum();
    let v1: f64 = noise.iter().map(|x| (x[1] - m1).powi(2)).sum();
    let corr = cov / (v0 * v1).sqrt();
    assert!(corr.abs() <= 3.0 / (steps as f64).sqrt(), "{corr}");
}

proptest! {
    // mass on one syndrome pair with the weight-one member dominant: both
    // policies pick the same physical correction
    #[test]
    fn policies_agree_when_the_single_flip_dominates(
        syndrome in 0usize..4,
        dominant in 0.5f64..1.0,
        spill in 0.0f64..1e-3,
    ) {
        let (g8, _, g4, _) = chains(1.0, 40.0);
        let members: Vec<usize> = (0..8).filter(|&m| g8.syndrome_of[m] == syndrome).collect();
        let (light, heavy) = if g8.nodes[members[0]].weight() <= g8.nodes[members[1]].weight() {
            (members[0], members[1])
        } else {
            (members[1], members[0])
        };
        let mut p = vec![spill / 6.0; 8];
        p[light] = dominant * (1.0 - spill);
        p[heavy] = (1.0 - dominant) * (1.0 - spill) * 0.999;
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        let p8 = FilterState::new(p).unwrap();
        let p4 = FilterState::new(p8.lumped(&g8.syndrome_of, 4)).unwrap();
        prop_assert_eq!(naive_policy(&p4, &g4), optimal_policy(&p8, &g8, InfoMode::PerString));
    }

    #[test]
    fn policies_ignore_overall_scale(raw in prop::collection::vec(0.01f64..1.0, 8), scale in 0.1f64..10.0) {
        let (g8, _, g4, _) = chains(1.0, 40.0);
        let norm = |v: &[f64]| {
            let t: f64 = v.iter().sum();
            FilterState::new(v.iter().map(|x| x / t).collect()).unwrap()
        };
        let scaled: Vec<f64> = raw.iter().map(|x| x * scale).collect();
        let (a, b) = (norm(&raw), norm(&scaled));
        for mode in [InfoMode::PerString, InfoMode::PerClass] {
            prop_assert_eq!(optimal_policy(&a, &g8, mode), optimal_policy(&b, &g8, mode));
        }
        let (a4, b4) = (
            FilterState::new(a.lumped(&g8.syndrome_of, 4)).unwrap(),
            FilterState::new(b.lumped(&g8.syndrome_of, 4)).unwrap(),
        );
        prop_assert_eq!(naive_policy(&a4, &g4), naive_policy(&b4, &g4));
    }
}
