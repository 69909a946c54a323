//! Stabilizer code catalog and error-state graphs.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{check_commuting, syndrome_index_unchecked, Pauli, PauliString};

/// Catalog identifiers accepted by the CLI and config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeId {
    #[serde(rename = "bitflip3")]
    Bitflip3,
    #[serde(rename = "five_qubit")]
    FiveQubit,
    #[serde(rename = "toy1")]
    Toy1,
}

impl CodeId {
    pub const ALL: [CodeId; 3] = [CodeId::Bitflip3, CodeId::FiveQubit, CodeId::Toy1];

    pub fn as_str(self) -> &'static str {
        match self {
            CodeId::Bitflip3 => "bitflip3",
            CodeId::FiveQubit => "five_qubit",
            CodeId::Toy1 => "toy1",
        }
    }

    pub fn build(self) -> StabilizerCode {
        match self {
            CodeId::Bitflip3 => bitflip_code(),
            CodeId::FiveQubit => five_qubit_code(),
            CodeId::Toy1 => toy_code(),
        }
    }
}

impl fmt::Display for CodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CodeId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = CodeId::ALL.iter().map(|c| c.as_str()).collect();
                Error::Argument(format!(
                    "unknown code id {s:?}; known codes: {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub struct StabilizerCode {
    name: String,
    generators: Vec<PauliString>,
    error_channels: Vec<PauliString>,
    logical_x: Option<PauliString>,
    logical_z: Option<PauliString>,
    stabilizer_group: Vec<PauliString>,
    /// Per-channel error rate.
    pub gamma: f64,
    /// Measurement strength.
    pub kappa: f64,
}

impl StabilizerCode {
    pub fn new(
        name: impl Into<String>,
        generators: Vec<PauliString>,
        error_channels: Vec<PauliString>,
        logicals: Option<(PauliString, PauliString)>,
    ) -> Result<Self> {
        let n = generators
            .first()
            .or(error_channels.first())
            .map(|p| p.num_qubits())
            .ok_or_else(|| Error::CodeDefinition("code has no generators or channels".into()))?;
        let all_same = generators
            .iter()
            .chain(&error_channels)
            .chain(logicals.iter().flat_map(|(x, z)| [x, z]))
            .all(|p| p.num_qubits() == n);
        if !all_same {
            return Err(Error::CodeDefinition(
                "operators act on differing qubit counts".into(),
            ));
        }
        if generators.len() > n {
            return Err(Error::CodeDefinition(format!(
                "{} generators exceed {n} qubits",
                generators.len()
            )));
        }
        check_commuting(&generators)?;
        if error_channels.iter().any(|c| c.is_identity()) {
            return Err(Error::CodeDefinition(
                "the identity cannot be an error channel".into(),
            ));
        }
        let stabilizer_group: Vec<PauliString> = (0..1usize << generators.len())
            .map(|mask| {
                generators
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .fold(PauliString::identity(n), |acc, (_, g)| acc.mul_unchecked(g))
            })
            .collect();
        let mut sorted = stabilizer_group.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != stabilizer_group.len() {
            return Err(Error::CodeDefinition(
                "generators are not independent".into(),
            ));
        }
        if let Some((lx, lz)) = &logicals {
            let ok = generators
                .iter()
                .all(|g| !g.anticommutes_unchecked(lx) && !g.anticommutes_unchecked(lz))
                && lx.anticommutes_unchecked(lz);
            if !ok {
                return Err(Error::CodeDefinition(
                    "logical operators are inconsistent".into(),
                ));
            }
        }
        Ok(StabilizerCode {
            name: name.into(),
            generators,
            error_channels,
            logical_x: logicals.map(|l| l.0),
            logical_z: logicals.map(|l| l.1),
            stabilizer_group,
            gamma: 1.0,
            kappa: 1.0,
        })
    }

    pub fn with_rates(mut self, gamma: f64, kappa: f64) -> Self {
        assert!(gamma >= 0.0 && kappa >= 0.0, "rates must be non-negative");
        self.gamma = gamma;
        self.kappa = kappa;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_qubits(&self) -> usize {
        self.generators
            .first()
            .or(self.error_channels.first())
            .unwrap()
            .num_qubits()
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn error_channels(&self) -> &[PauliString] {
        &self.error_channels
    }

    pub fn logical_x(&self) -> Option<&PauliString> {
        self.logical_x.as_ref()
    }

    pub fn logical_z(&self) -> Option<&PauliString> {
        self.logical_z.as_ref()
    }

    /// All `2^g` elements of the phase-free stabilizer group, indexed by
    /// generator subset mask.
    pub fn stabilizer_group(&self) -> &[PauliString] {
        &self.stabilizer_group
    }

    pub fn num_syndromes(&self) -> usize {
        1 << self.generators.len()
    }

    /// Total error rate Γ.
    pub fn total_rate(&self) -> f64 {
        self.error_channels.len() as f64 * self.gamma
    }

    pub fn syndrome_index(&self, error: &PauliString) -> usize {
        syndrome_index_unchecked(error, &self.generators)
    }

    pub fn in_stabilizer_group(&self, p: &PauliString) -> bool {
        self.stabilizer_group.contains(p)
    }
}

/// Three-qubit bit-flip code with generators ZZI, ZIZ and X channels on
/// every qubit.
pub fn bitflip_code() -> StabilizerCode {
    let p = |s: &str| s.parse::<PauliString>().unwrap();
    StabilizerCode::new(
        "bitflip3",
        vec![p("ZZI"), p("ZIZ")],
        vec![p("XII"), p("IXI"), p("IIX")],
        Some((p("XXX"), p("ZII"))),
    )
    .unwrap()
}

/// Five-qubit perfect code (cyclic generators) under the single-qubit Pauli
/// channel: fifteen error channels X, Y, Z on each qubit.
pub fn five_qubit_code() -> StabilizerCode {
    let p = |s: &str| s.parse::<PauliString>().unwrap();
    let generators = ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"]
        .iter()
        .map(|s| p(s))
        .collect();
    let channels = (0..5)
        .flat_map(|q| [Pauli::X, Pauli::Y, Pauli::Z].map(|l| PauliString::single(5, q, l)))
        .collect();
    StabilizerCode::new(
        "five_qubit",
        generators,
        channels,
        Some((p("XXXXX"), p("ZZZZZ"))),
    )
    .unwrap()
}

/// Single qubit, one Z generator, one X channel: the minimal two-state chain.
pub fn toy_code() -> StabilizerCode {
    let p = |s: &str| s.parse::<PauliString>().unwrap();
    StabilizerCode::new("toy1", vec![p("Z")], vec![p("X")], None).unwrap()
}

/// Transition from one node to a neighbor, labeled by the channels
/// (indices into the code's channel list) that realize it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub to: usize,
    pub channels: Vec<usize>,
}

impl Edge {
    pub fn multiplicity(&self) -> usize {
        self.channels.len()
    }
}

#[derive(Debug, Clone)]
pub struct ErrorGraph {
    pub nodes: Vec<PauliString>,
    /// Outgoing edges per node, sorted by target.
    pub edges: Vec<Vec<Edge>>,
    pub syndrome_of: Vec<usize>,
    pub class_of: Vec<usize>,
    pub num_syndromes: usize,
    pub num_classes: usize,
}

impl ErrorGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, p: &PauliString) -> Option<usize> {
        self.nodes.binary_search(p).ok()
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[node].iter().map(|e| e.to)
    }

    /// Lowest-index member of each class.
    pub fn class_representatives(&self) -> Vec<usize> {
        let mut reps = vec![usize::MAX; self.num_classes];
        for (i, &c) in self.class_of.iter().enumerate() {
            reps[c] = reps[c].min(i);
        }
        reps
    }

    pub fn stats(&self) -> GraphStats {
        let degrees: Vec<usize> = self.edges.iter().map(|e| e.len()).collect();
        let min = degrees.iter().copied().min().unwrap_or(0);
        let max = degrees.iter().copied().max().unwrap_or(0);
        let mut per_syndrome = vec![0usize; self.num_syndromes];
        for &s in &self.syndrome_of {
            per_syndrome[s] += 1;
        }
        let mut per_class = vec![0usize; self.num_classes];
        for &c in &self.class_of {
            per_class[c] += 1;
        }
        let uniform = |v: &[usize]| {
            if v.iter().all(|&x| x == v[0]) {
                Some(v[0])
            } else {
                None
            }
        };
        GraphStats {
            nodes: self.len(),
            degree: (min == max).then_some(min),
            min_degree: min,
            max_degree: max,
            syndromes: per_syndrome.iter().filter(|&&c| c > 0).count(),
            nodes_per_syndrome: uniform(&per_syndrome),
            classes: self.num_classes,
            nodes_per_class: uniform(&per_class),
        }
    }

    /// Edge list as CSV: `node_index,node_pauli,syndrome,class,neighbors...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record([
            "node_index",
            "node_pauli",
            "syndrome",
            "class",
            "neighbor_indices",
        ])?;
        for i in 0..self.len() {
            let mut row = vec![
                i.to_string(),
                self.nodes[i].to_string(),
                self.syndrome_of[i].to_string(),
                self.class_of[i].to_string(),
            ];
            row.extend(self.neighbors(i).map(|j| j.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Lumps nodes into `blocks` by `block_of`, checking that every member of
    /// a block has the same number of channels into each other block.
    /// Transitions inside a block are dropped. Each lumped node is
    /// represented by the block member chosen by `representative`.
    fn lump(
        &self,
        block_of: &[usize],
        blocks: usize,
        representative: impl Fn(&[usize]) -> usize,
    ) -> Result<Vec<(usize, Vec<Edge>)>> {
        let mut members = vec![Vec::new(); blocks];
        for (i, &b) in block_of.iter().enumerate() {
            members[b].push(i);
        }
        let mut out = Vec::with_capacity(blocks);
        for (b, m) in members.iter().enumerate() {
            if m.is_empty() {
                return Err(Error::Construction(format!("block {b} has no members")));
            }
            let profile = |node: usize| {
                let mut targets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for e in &self.edges[node] {
                    let tb = block_of[e.to];
                    if tb != b {
                        targets.entry(tb).or_default().extend(&e.channels);
                    }
                }
                targets
            };
            let rep = representative(m);
            let rep_profile = profile(rep);
            for &node in m {
                let same = profile(node)
                    .iter()
                    .map(|(k, v)| (*k, v.len()))
                    .eq(rep_profile.iter().map(|(k, v)| (*k, v.len())));
                if !same {
                    return Err(Error::Construction(format!(
                        "lumping is not well defined: nodes {} and {} of block {b} have different block transition counts",
                        self.nodes[rep], self.nodes[node]
                    )));
                }
            }
            let edges = rep_profile
                .into_iter()
                .map(|(to, mut channels)| {
                    channels.sort_unstable();
                    Edge { to, channels }
                })
                .collect();
            out.push((rep, edges));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    /// `Some(d)` when every node has exactly `d` distinct neighbors.
    pub degree: Option<usize>,
    pub min_degree: usize,
    pub max_degree: usize,
    pub syndromes: usize,
    pub nodes_per_syndrome: Option<usize>,
    pub classes: usize,
    pub nodes_per_class: Option<usize>,
}

/// Closure of the identity under the code's error channels, with nodes in
/// `(x, z)` integer order (identity first).
pub fn build_error_graph(code: &StabilizerCode) -> ErrorGraph {
    let n = code.num_qubits();
    let channels = code.error_channels();
    let start = PauliString::identity(n);
    let mut seen = vec![start];
    let mut seen_set: HashMap<PauliString, ()> = HashMap::from([(start, ())]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for c in channels {
            let v = u.mul_unchecked(c);
            if seen_set.insert(v, ()).is_none() {
                seen.push(v);
                queue.push_back(v);
            }
        }
    }
    seen.sort();
    let nodes = seen;
    let index: HashMap<PauliString, usize> =
        nodes.iter().enumerate().map(|(i, p)| (*p, i)).collect();

    let edges = nodes
        .iter()
        .map(|u| {
            let mut by_target: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (k, c) in channels.iter().enumerate() {
                by_target
                    .entry(index[&u.mul_unchecked(c)])
                    .or_default()
                    .push(k);
            }
            by_target
                .into_iter()
                .map(|(to, channels)| Edge { to, channels })
                .collect()
        })
        .collect();

    let syndrome_of = nodes.iter().map(|p| code.syndrome_index(p)).collect();

    let mut class_of = vec![usize::MAX; nodes.len()];
    let mut num_classes = 0;
    for i in 0..nodes.len() {
        if class_of[i] != usize::MAX {
            continue;
        }
        for s in code.stabilizer_group() {
            if let Some(&j) = index.get(&nodes[i].mul_unchecked(s)) {
                class_of[j] = num_classes;
            }
        }
        num_classes += 1;
    }

    ErrorGraph {
        nodes,
        edges,
        syndrome_of,
        class_of,
        num_syndromes: code.num_syndromes(),
        num_classes,
    }
}

/// The chain of syndromes obtained by lumping the error graph. Each node is
/// the minimum-weight error of its syndrome (lowest index on ties), which is
/// also the conventional single-error correction for that syndrome.
pub fn syndrome_chain(code: &StabilizerCode) -> Result<ErrorGraph> {
    let full = build_error_graph(code);
    let lumped = full.lump(&full.syndrome_of, full.num_syndromes, |m| {
        *m.iter()
            .min_by_key(|&&i| (full.nodes[i].weight(), i))
            .unwrap()
    })?;
    let k = lumped.len();
    Ok(ErrorGraph {
        nodes: lumped.iter().map(|(rep, _)| full.nodes[*rep]).collect(),
        edges: lumped.into_iter().map(|(_, e)| e).collect(),
        syndrome_of: (0..k).collect(),
        class_of: (0..k).collect(),
        num_syndromes: k,
        num_classes: k,
    })
}

/// The chain of logical classes (stabilizer cosets), each represented by its
/// lowest-index member.
pub fn class_chain(code: &StabilizerCode) -> Result<ErrorGraph> {
    let full = build_error_graph(code);
    let lumped = full.lump(&full.class_of, full.num_classes, |m| m[0])?;
    let k = lumped.len();
    Ok(ErrorGraph {
        syndrome_of: lumped
            .iter()
            .map(|(rep, _)| full.syndrome_of[*rep])
            .collect(),
        nodes: lumped.iter().map(|(rep, _)| full.nodes[*rep]).collect(),
        edges: lumped.into_iter().map(|(_, e)| e).collect(),
        class_of: (0..k).collect(),
        num_syndromes: full.num_syndromes,
        num_classes: k,
    })
}
