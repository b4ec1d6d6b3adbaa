//! Detectors and weighted matching graphs for the repetition code.
//!
//! Ancilla `j` measures the parity of data qubits `j` and `j+1`; its first CX
//! touches qubit `j`, the second qubit `j+1`. Detector `(j, t)` compares round
//! `t` with round `t-1`; `t = 0` compares with the prepared state and
//! `t = cycles` compares with the stabilizers implied by the final readout.

mod erasure;
mod text;
mod weights;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::RepCodeNoiseModel;
use crate::sampler::{Basis, SyndromeRecord, ERASED};

pub use erasure::{merge_edges_for_erasure, naive_erasure_graph, reconstruct_detectors, Cluster, Reconstructed};
pub use text::{read_graph_text, write_graph_text};
pub use weights::{correlation_weights, no_erasure_baseline, WeightOptions, Weighted};

/// Probability assigned to edges never observed.
pub const P_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectorId {
    pub space: usize,
    pub time: usize,
}

impl DetectorId {
    pub fn new(space: usize, time: usize) -> Self {
        DetectorId { space, time }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Space,
    Time,
    Diagonal,
    Boundary,
}

impl EdgeKind {
    pub fn letter(self) -> char {
        match self {
            EdgeKind::Space => 'S',
            EdgeKind::Time => 'T',
            EdgeKind::Diagonal => 'D',
            EdgeKind::Boundary => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Node(usize),
    Boundary(Side),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: Endpoint,
    pub kind: EdgeKind,
    pub p: f64,
    pub w: f64,
    /// Data qubits flipped by the error this edge represents.
    pub qubits: u64,
}

/// A detector node. Spanning detectors produced by erasure handling cover
/// comparison times `id.time..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: DetectorId,
    pub last: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingGraph {
    pub d: usize,
    pub cycles: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
    #[serde(skip)]
    lookup: HashMap<DetectorId, usize>,
}

/// w = ln((1-p)/p).
pub fn weight_from_prob(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("edge probability must lie in (0,1), got {p}")));
    }
    Ok(((1.0 - p) / p).ln())
}

/// Inverse of [`weight_from_prob`].
pub fn prob_from_weight(w: f64) -> f64 {
    1.0 / (1.0 + w.exp())
}

/// Probability that an odd number of independent events fire.
pub fn p_odd(ps: &[f64]) -> f64 {
    0.5 * (1.0 - ps.iter().map(|p| 1.0 - 2.0 * p).product::<f64>())
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    if p.is_nan() {
        P_FLOOR
    } else {
        p.clamp(P_FLOOR, 0.5)
    }
}

impl MatchingGraph {
    /// Assemble a graph and build its indices.
    pub fn from_parts(d: usize, cycles: usize, nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut g = MatchingGraph { d, cycles, nodes, edges, adjacency: vec![], lookup: HashMap::new() };
        g.reindex()?;
        Ok(g)
    }

    pub(crate) fn reindex(&mut self) -> Result<()> {
        self.lookup.clear();
        for (k, n) in self.nodes.iter().enumerate() {
            if self.lookup.insert(n.id, k).is_some() {
                return Err(Error::InvalidInput(format!("duplicate detector {:?}", n.id)));
            }
        }
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            if e.a >= self.nodes.len() {
                return Err(Error::InvalidInput(format!("edge {k} refers to missing node")));
            }
            self.adjacency[e.a].push(k);
            if let Endpoint::Node(b) = e.b {
                if b >= self.nodes.len() || b == e.a {
                    return Err(Error::InvalidInput(format!("edge {k} has a bad endpoint")));
                }
                self.adjacency[b].push(k);
            }
        }
        Ok(())
    }

    /// Allowed edges of a (d, cycles) memory experiment, every p set to `p`.
    pub fn structure(d: usize, cycles: usize, p: f64) -> Result<Self> {
        if !(2..=63).contains(&d) {
            return Err(Error::InvalidInput(format!("distance {d} out of range")));
        }
        let na = d - 1;
        let layers = cycles + 1;
        let idx = |j: usize, t: usize| t * na + j;
        let nodes: Vec<Node> = (0..layers)
            .flat_map(|t| (0..na).map(move |j| Node { id: DetectorId::new(j, t), last: t }))
            .collect();
        let w = weight_from_prob(p)?;
        let mut edges = Vec::new();
        let mut push = |a: usize, b: Endpoint, kind: EdgeKind, qubits: u64| edges.push(Edge { a, b, kind, p, w, qubits });
        for t in 0..layers {
            push(idx(0, t), Endpoint::Boundary(Side::Left), EdgeKind::Boundary, 1);
            push(idx(na - 1, t), Endpoint::Boundary(Side::Right), EdgeKind::Boundary, 1 << (d - 1));
            for q in 1..d - 1 {
                push(idx(q - 1, t), Endpoint::Node(idx(q, t)), EdgeKind::Space, 1 << q);
            }
            if t + 1 < layers {
                for j in 0..na {
                    push(idx(j, t), Endpoint::Node(idx(j, t + 1)), EdgeKind::Time, 0);
                }
                for q in 1..d - 1 {
                    push(idx(q - 1, t), Endpoint::Node(idx(q, t + 1)), EdgeKind::Diagonal, 1 << q);
                }
            }
        }
        Self::from_parts(d, cycles, nodes, edges)
    }

    /// Graph with probabilities implied by a known noise model. Erasures are
    /// counted as random readouts (probability p_erase/2 of a flip).
    pub fn from_model(model: &RepCodeNoiseModel, cycles: usize) -> Result<Self> {
        model.validate()?;
        let d = model.d;
        let m = model.mid_cycle_fraction;
        let mut g = Self::structure(d, cycles, 0.5)?;
        for k in 0..g.edges.len() {
            let e = &g.edges[k];
            let t = g.nodes[e.a].id.time;
            let j = g.nodes[e.a].id.space;
            let p = match e.kind {
                EdgeKind::Space => {
                    let q = j + 1;
                    if t == cycles { model.p_final[q] } else { model.p_z[q] * (1.0 - m) }
                }
                EdgeKind::Diagonal => model.p_z[j + 1] * m,
                EdgeKind::Time => model.p_meas[j] + 0.5 * model.p_erase[j],
                EdgeKind::Boundary => match e.b {
                    Endpoint::Boundary(Side::Left) => {
                        let now = if t == cycles { model.p_final[0] } else { model.p_z[0] * (1.0 - m) };
                        let prev = if t > 0 { model.p_z[0] * m } else { 0.0 };
                        p_odd(&[now, prev])
                    }
                    _ => {
                        let q = d - 1;
                        if t == cycles {
                            model.p_final[q]
                        } else {
                            model.p_z[q]
                        }
                    }
                },
            };
            let p = clamp_prob(p);
            g.edges[k].p = p;
            g.edges[k].w = weight_from_prob(p)?;
        }
        Ok(g)
    }

    pub fn node_index(&self, id: DetectorId) -> Option<usize> {
        self.lookup.get(&id).copied()
    }

    pub fn incident(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// The other end of `edge` seen from `node`.
    pub fn other(&self, edge: usize, node: usize) -> Endpoint {
        let e = &self.edges[edge];
        if e.a == node {
            e.b
        } else {
            Endpoint::Node(e.a)
        }
    }

    /// Edge joining two detectors, if any.
    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency[a].iter().copied().find(|&k| self.other(k, a) == Endpoint::Node(b))
    }

    /// Set one edge's probability, keeping the weight consistent.
    pub fn set_prob(&mut self, edge: usize, p: f64) -> Result<()> {
        let e = &mut self.edges[edge];
        e.w = weight_from_prob(p)?;
        e.p = p;
        Ok(())
    }

    pub fn has_boundary(&self, side: Side) -> bool {
        self.edges.iter().any(|e| e.b == Endpoint::Boundary(side))
    }
}

/// Detector values of one shot, row-major `[time][space]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detectors {
    pub d: usize,
    pub layers: usize,
    pub values: Vec<u8>,
}

impl Detectors {
    pub fn get(&self, space: usize, time: usize) -> u8 {
        self.values[time * (self.d - 1) + space]
    }

    /// Nontrivial detectors in node-index order of [`MatchingGraph::structure`].
    pub fn defects(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, &v)| v == 1).map(|(k, _)| k).collect()
    }

    pub fn defect_ids(&self) -> Vec<DetectorId> {
        let na = self.d - 1;
        self.defects().into_iter().map(|k| DetectorId::new(k % na, k / na)).collect()
    }
}

/// Stabilizer values before the first round (X basis) and after the final readout.
pub(crate) fn boundary_layers(record: &SyndromeRecord) -> Result<(Vec<u8>, Vec<u8>)> {
    if record.basis != Basis::X {
        return Err(Error::InvalidInput("detectors are defined for X-basis records".into()));
    }
    let na = record.d - 1;
    let initial = (0..na).map(|j| record.initial_state[j] ^ record.initial_state[j + 1]).collect();
    let fin = (0..na).map(|j| record.finals[j] ^ record.finals[j + 1]).collect();
    Ok((initial, fin))
}

/// Compare consecutive syndrome rounds, including the initial and final layers.
pub fn detectors_from_record(record: &SyndromeRecord) -> Result<Detectors> {
    if record.has_erasures() {
        return Err(Error::InvalidInput(
            "record contains erased syndromes; use reconstruct_detectors or collapse_erasures".into(),
        ));
    }
    let (initial, fin) = boundary_layers(record)?;
    let na = record.d - 1;
    let c = record.cycles;
    let round = |t: isize, j: usize| -> u8 {
        if t < 0 {
            initial[j]
        } else if t as usize == c {
            fin[j]
        } else {
            record.syndrome(t as usize, j)
        }
    };
    let mut values = Vec::with_capacity((c + 1) * na);
    for t in 0..=c as isize {
        for j in 0..na {
            values.push(round(t - 1, j) ^ round(t, j));
        }
    }
    debug_assert!(!values.contains(&ERASED));
    Ok(Detectors { d: record.d, layers: c + 1, values })
}
