//! Information bound, correction policies and recovery scoring.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::chain::JumpChain;
use crate::codes::{ErrorGraph, StabilizerCode};
use crate::error::Result;
use crate::pauli::PauliString;
use crate::wonham::{argmax, fmt_f, FilterState};

/// Whether error strings equivalent modulo the stabilizer are lumped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum InfoMode {
    #[serde(rename = "per-string")]
    PerString,
    #[default]
    #[serde(rename = "per-class")]
    PerClass,
}

impl InfoMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InfoMode::PerString => "per-string",
            InfoMode::PerClass => "per-class",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoSnapshot {
    pub t: f64,
    /// Largest unit probability: the recovery probability of the optimal
    /// correction at this instant.
    pub p_star: f64,
    /// The bound: largest conditional probability of a unit given its syndrome.
    pub j: f64,
    /// Conditional probability of each unit given its syndrome; NaN where
    /// the syndrome has zero probability.
    pub ratios: Vec<f64>,
    pub syndrome_probs: Vec<f64>,
    /// Unit attaining `j` (lowest index on ties).
    pub argmax: usize,
    /// Syndromes left out of the max because their probability vanished.
    pub excluded_syndromes: usize,
}

/// Precomputed partition data for evaluating the bound on one graph.
#[derive(Debug, Clone)]
pub struct InfoBound {
    mode: InfoMode,
    unit_of: Vec<usize>,
    unit_syndrome: Vec<usize>,
    num_syndromes: usize,
    representatives: Vec<PauliString>,
}

impl InfoBound {
    pub fn new(graph: &ErrorGraph, mode: InfoMode) -> Self {
        let (unit_of, num_units) = match mode {
            InfoMode::PerString => ((0..graph.len()).collect(), graph.len()),
            InfoMode::PerClass => (graph.class_of.clone(), graph.num_classes),
        };
        let mut unit_syndrome = vec![0; num_units];
        let mut rep = vec![usize::MAX; num_units];
        for (node, &u) in unit_of.iter().enumerate() {
            unit_syndrome[u] = graph.syndrome_of[node];
            rep[u] = rep[u].min(node);
        }
        InfoBound {
            mode,
            unit_of,
            unit_syndrome,
            num_syndromes: graph.num_syndromes,
            representatives: rep.into_iter().map(|i| graph.nodes[i]).collect(),
        }
    }

    pub fn mode(&self) -> InfoMode {
        self.mode
    }

    pub fn num_units(&self) -> usize {
        self.unit_syndrome.len()
    }

    /// Correction applied when unit `u` is judged most likely.
    pub fn representative(&self, u: usize) -> &PauliString {
        &self.representatives[u]
    }

    pub fn unit_probs(&self, state: &FilterState) -> Vec<f64> {
        let mut q = vec![0.0; self.num_units()];
        for (&u, &x) in self.unit_of.iter().zip(&state.p) {
            q[u] += x;
        }
        q
    }

    pub fn snapshot(&self, state: &FilterState) -> InfoSnapshot {
        let q = self.unit_probs(state);
        let mut syn = vec![0.0; self.num_syndromes];
        for (&s, &x) in self.unit_syndrome.iter().zip(&q) {
            syn[s] += x;
        }
        // a syndrome total never exceeds 1, so clamp away rounding that would
        // put a ratio below its own unit probability
        let ratios: Vec<f64> = q
            .iter()
            .zip(&self.unit_syndrome)
            .map(|(&x, &s)| {
                if syn[s] > 0.0 {
                    (x / syn[s]).max(x).min(1.0)
                } else {
                    f64::NAN
                }
            })
            .collect();
        let mut best = None::<usize>;
        for (u, &r) in ratios.iter().enumerate() {
            if !r.is_nan() && best.is_none_or(|b| r > ratios[b]) {
                best = Some(u);
            }
        }
        let argmax_unit = best.expect("at least one syndrome carries probability");
        InfoSnapshot {
            t: state.t,
            p_star: q.iter().copied().fold(0.0, f64::max),
            j: ratios[argmax_unit],
            argmax: argmax_unit,
            excluded_syndromes: syn.iter().filter(|&&x| x <= 0.0).count(),
            ratios,
            syndrome_probs: syn,
        }
    }

    /// Correction for the most likely unit.
    pub fn optimal_correction(&self, state: &FilterState) -> PauliString {
        self.representatives[argmax(&self.unit_probs(state))]
    }
}

pub fn info_bound(state: &FilterState, graph: &ErrorGraph, mode: InfoMode) -> InfoSnapshot {
    InfoBound::new(graph, mode).snapshot(state)
}

/// `dJ/dt = −Σ_{n≠m*} Λ_{n→m*} (Pⁿ/P^{m*}) (J − Iⁿ)` where `P` is the
/// probability of a unit's syndrome. `chain` must be the chain on the
/// snapshot's units: the error-state chain per string, the class chain per
/// class. Units whose syndrome has zero probability contribute nothing.
pub fn info_bound_derivative(snapshot: &InfoSnapshot, chain: &JumpChain) -> f64 {
    assert_eq!(
        chain.dim(),
        snapshot.ratios.len(),
        "chain does not match the snapshot's units"
    );
    let m = snapshot.argmax;
    let p_m = snapshot.syndrome_probs[chain.syndrome_of(m)];
    -chain
        .incoming(m)
        .iter()
        .filter(|&&(n, _)| n != m)
        .map(|&(n, rate)| {
            let p_n = snapshot.syndrome_probs[chain.syndrome_of(n)];
            if p_n > 0.0 {
                rate * (p_n / p_m) * (snapshot.j - snapshot.ratios[n])
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

/// Conventional decoding: the correction assigned to the most likely
/// syndrome of the lumped syndrome chain.
pub fn naive_policy(p: &FilterState, syndrome_graph: &ErrorGraph) -> PauliString {
    syndrome_graph.nodes[argmax(&p.p)]
}

pub fn optimal_policy(p: &FilterState, graph: &ErrorGraph, mode: InfoMode) -> PauliString {
    InfoBound::new(graph, mode).optimal_correction(p)
}

/// Recovery succeeds iff `correction · truth` is a stabilizer element.
pub fn score_recovery(
    correction: &PauliString,
    truth: &PauliString,
    code: &StabilizerCode,
) -> bool {
    let residual = correction
        .multiply(truth)
        .expect("correction and truth act on the same qubits");
    code.in_stabilizer_group(&residual)
}

/// CSV rows `t,p_star,J,argmax,P0..P(s-1)`.
pub fn write_snapshots_csv<W: Write>(snapshots: &[InfoSnapshot], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let s = snapshots.first().map_or(0, |x| x.syndrome_probs.len());
    let mut header: Vec<String> = ["t", "p_star", "J", "argmax"]
        .iter()
        .map(|x| x.to_string())
        .collect();
    header.extend((0..s).map(|k| format!("P{k}")));
    w.write_record(&header)?;
    for snap in snapshots {
        let mut row = vec![
            fmt_f(snap.t),
            fmt_f(snap.p_star),
            fmt_f(snap.j),
            snap.argmax.to_string(),
        ];
        row.extend(snap.syndrome_probs.iter().map(|&x| fmt_f(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::chain_from_graph;
    use crate::codes::{bitflip_code, build_error_graph, five_qubit_code, syndrome_chain};
    use proptest::prelude::*;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn peaked(graph: &ErrorGraph, s: &str) -> FilterState {
        FilterState::vertex(graph.len(), graph.index_of(&p(s)).unwrap())
    }

    #[test]
    fn vertex_and_uniform_bounds() {
        let g = build_error_graph(&bitflip_code());
        let snap = info_bound(&peaked(&g, "IXI"), &g, InfoMode::PerString);
        assert_eq!(snap.j, 1.0);
        assert_eq!(snap.p_star, 1.0);
        assert_eq!(snap.excluded_syndromes, 3);
        let snap = info_bound(&FilterState::uniform(8), &g, InfoMode::PerString);
        assert!(snap.ratios.iter().all(|&r| (r - 0.5).abs() < 1e-15));
        assert!((snap.j - 0.5).abs() < 1e-15);
        assert!(snap.p_star <= snap.j);
    }

    #[test]
    fn per_class_equals_per_string_for_bitflip() {
        let g = build_error_graph(&bitflip_code());
        let state = FilterState::new(vec![0.3, 0.05, 0.1, 0.05, 0.2, 0.1, 0.15, 0.05]).unwrap();
        let a = info_bound(&state, &g, InfoMode::PerString);
        let b = info_bound(&state, &g, InfoMode::PerClass);
        assert_eq!(a, b);
    }

    #[test]
    fn derivative_vanishes_at_vertex_and_without_errors() {
        let code = bitflip_code().with_rates(1.0, 40.0);
        let g = build_error_graph(&code);
        let chain = chain_from_graph(&g, &code);
        let snap = info_bound(&peaked(&g, "III"), &g, InfoMode::PerString);
        assert_eq!(info_bound_derivative(&snap, &chain), 0.0);
        let still = bitflip_code().with_rates(0.0, 40.0);
        let chain0 = chain_from_graph(&g, &still);
        let state = FilterState::new(vec![0.3, 0.05, 0.1, 0.05, 0.2, 0.1, 0.15, 0.05]).unwrap();
        assert_eq!(
            info_bound_derivative(&info_bound(&state, &g, InfoMode::PerString), &chain0),
            0.0
        );
    }

    #[test]
    fn derivative_near_vertex_is_negative() {
        let gamma = 1.7;
        let code = bitflip_code().with_rates(gamma, 40.0);
        let g = build_error_graph(&code);
        let chain = chain_from_graph(&g, &code);
        let eps = 0.01;
        let mut state = peaked(&g, "III");
        state.p[0] = 1.0 - eps;
        // mass on the partner of the neighbor XII
        state.p[g.index_of(&p("IXX")).unwrap()] = eps;
        let snap = info_bound(&state, &g, InfoMode::PerString);
        assert_eq!(snap.argmax, 0);
        let d = info_bound_derivative(&snap, &chain);
        assert!((d + gamma * eps / (1.0 - eps)).abs() < 1e-14, "{d}");
    }

    #[test]
    fn naive_policy_table() {
        let g = syndrome_chain(&bitflip_code()).unwrap();
        assert_eq!(naive_policy(&FilterState::vertex(4, 0), &g), p("III"));
        // outcomes (+1, -1): only the second generator flips
        let s = FilterState::new(vec![0.1, 0.2, 0.6, 0.1]).unwrap();
        assert_eq!(naive_policy(&s, &g), p("IIX"));
        assert_eq!(
            naive_policy(&FilterState::new(vec![0.1, 0.4, 0.1, 0.4]).unwrap(), &g),
            p("IXI")
        );
        assert_eq!(naive_policy(&FilterState::uniform(4), &g), p("III"));
        assert_eq!(naive_policy(&FilterState::vertex(4, 3), &g), p("XII"));
    }

    #[test]
    fn optimal_policy_examples() {
        let g = build_error_graph(&bitflip_code());
        let mut s = FilterState::uniform(8);
        s.p = vec![0.05; 8];
        s.p[g.index_of(&p("IXX")).unwrap()] = 0.65;
        assert_eq!(optimal_policy(&s, &g, InfoMode::PerString), p("IXX"));
        assert_eq!(
            optimal_policy(&peaked(&g, "III"), &g, InfoMode::PerString),
            p("III")
        );
    }

    #[test]
    fn per_class_policy_sums_cosets() {
        let code = five_qubit_code();
        let g = build_error_graph(&code);
        let target = g.class_of[g.index_of(&p("IIYII")).unwrap()];
        let members: Vec<usize> = (0..g.len()).filter(|&i| g.class_of[i] == target).collect();
        assert_eq!(members.len(), 16);
        let mut state = FilterState {
            p: vec![0.0; 1024],
            t: 0.0,
        };
        for &m in &members {
            state.p[m] = 0.4 / 16.0;
        }
        let lone = g.index_of(&p("XIIII")).unwrap();
        state.p[lone] = 0.1;
        let rest: Vec<usize> = (0..g.len())
            .filter(|i| !members.contains(i) && *i != lone)
            .collect();
        for &r in &rest {
            state.p[r] = 0.5 / rest.len() as f64;
        }
        assert_eq!(optimal_policy(&state, &g, InfoMode::PerString), p("XIIII"));
        let chosen = optimal_policy(&state, &g, InfoMode::PerClass);
        assert_eq!(chosen, g.nodes[members[0]]);
        assert!(score_recovery(&chosen, &p("IIYII"), &code));
    }

    #[test]
    fn recovery_scoring() {
        let code = bitflip_code();
        assert!(score_recovery(&p("XII"), &p("XII"), &code));
        assert!(!score_recovery(&p("IXX"), &p("XII"), &code));
        let five = five_qubit_code();
        let truth = p("IYIIZ");
        let correction = truth.multiply(&p("XZZXI")).unwrap();
        assert!(score_recovery(&correction, &truth, &five));
        assert!(!score_recovery(&p("IIIII"), &truth, &five));
    }

    #[test]
    fn snapshot_csv_columns() {
        let g = build_error_graph(&bitflip_code());
        let snap = info_bound(&FilterState::uniform(8), &g, InfoMode::PerString);
        let mut buf = Vec::new();
        write_snapshots_csv(&[snap], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,p_star,J,argmax,P0,P1,P2,P3"
        );
    }

    proptest! {
        #[test]
        fn policies_agree_on_dominant_single_error(s in 0usize..4, w in 0.5f64..1.0, scale in 0.1f64..10.0) {
            let code = bitflip_code();
            let g = build_error_graph(&code);
            let sg = syndrome_chain(&code).unwrap();
            let lead = g.index_of(&sg.nodes[s]).unwrap();
            let partner = g.index_of(&sg.nodes[s].multiply(&p("XXX")).unwrap()).unwrap();
            let w = if w == 0.5 { 0.6 } else { w };
            let mut state = FilterState { p: vec![0.0; 8], t: 0.0 };
            state.p[lead] = w;
            state.p[partner] = 1.0 - w;
            let lumped = FilterState { p: state.lumped(&g.syndrome_of, 4), t: 0.0 };
            let naive = naive_policy(&lumped, &sg);
            let optimal = optimal_policy(&state, &g, InfoMode::PerString);
            prop_assert_eq!(naive, optimal);
            let scaled = FilterState { p: state.p.iter().map(|x| x * scale).collect(), t: 0.0 };
            prop_assert_eq!(optimal_policy(&scaled, &g, InfoMode::PerString), optimal);
            let lumped_scaled = FilterState { p: lumped.p.iter().map(|x| x * scale).collect(), t: 0.0 };
            prop_assert_eq!(naive_policy(&lumped_scaled, &sg), naive);
        }

        #[test]
        fn dominance_holds(raw in proptest::collection::vec(0.0f64..1.0, 8)) {
            let g = build_error_graph(&bitflip_code());
            let total: f64 = raw.iter().sum::<f64>() + 1e-12;
            let state = FilterState { p: raw.iter().map(|x| (x + 1e-12 / 8.0) / total).collect(), t: 0.0 };
            for mode in [InfoMode::PerString, InfoMode::PerClass] {
                let snap = info_bound(&state, &g, mode);
                prop_assert!(snap.p_star <= snap.j);
                prop_assert!(snap.j <= 1.0 + 1e-15);
                prop_assert!((snap.syndrome_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
