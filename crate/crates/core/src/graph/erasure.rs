//! Erasure handling: detectors that compare an erased syndrome are replaced by
//! one detector spanning the erased run, and the edges into the run are merged.

use std::collections::HashMap;

use super::{boundary_layers, p_odd, weight_from_prob, DetectorId, Edge, EdgeKind, Endpoint, MatchingGraph, Node};
use crate::error::{Error, Result};
use crate::sampler::{SyndromeRecord, ERASED};

/// A maximal run of erased rounds `first..=last` on one ancilla.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cluster {
    pub space: usize,
    pub first: usize,
    pub last: usize,
}

impl Cluster {
    /// The spanning detector replacing comparisons `first..=last+1`.
    pub fn node(&self) -> Node {
        Node { id: DetectorId::new(self.space, self.first), last: self.last + 1 }
    }
}

/// Detectors of one shot after bypassing erased syndromes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstructed {
    /// Surviving regular detectors in (time, space) order, then spanning ones.
    pub nodes: Vec<Node>,
    pub values: Vec<u8>,
    pub clusters: Vec<Cluster>,
}

impl Reconstructed {
    pub fn defect_ids(&self) -> Vec<DetectorId> {
        self.nodes.iter().zip(&self.values).filter(|(_, &v)| v == 1).map(|(n, _)| n.id).collect()
    }
}

pub fn find_clusters(record: &SyndromeRecord) -> Vec<Cluster> {
    let na = record.d - 1;
    let mut out = Vec::new();
    for j in 0..na {
        let mut t = 0;
        while t < record.cycles {
            if record.syndrome(t, j) == ERASED {
                let first = t;
                while t + 1 < record.cycles && record.syndrome(t + 1, j) == ERASED {
                    t += 1;
                }
                out.push(Cluster { space: j, first, last: t });
            }
            t += 1;
        }
    }
    out
}

pub fn reconstruct_detectors(record: &SyndromeRecord) -> Result<Reconstructed> {
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
    let clusters = find_clusters(record);
    let mut removed = vec![false; (c + 1) * na];
    for cl in &clusters {
        for t in cl.first..=cl.last + 1 {
            removed[t * na + cl.space] = true;
        }
    }
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for t in 0..=c {
        for j in 0..na {
            if !removed[t * na + j] {
                nodes.push(Node { id: DetectorId::new(j, t), last: t });
                values.push(round(t as isize - 1, j) ^ round(t as isize, j));
            }
        }
    }
    for cl in &clusters {
        nodes.push(cl.node());
        values.push(round(cl.first as isize - 1, cl.space) ^ round(cl.last as isize + 1, cl.space));
    }
    debug_assert!(values.iter().all(|&v| v <= 1));
    Ok(Reconstructed { nodes, values, clusters })
}

/// Rewrite `baseline` for one shot's erasure clusters. Parallel edges that
/// end up joining the same pair combine with odd-parity probability. With
/// `cap = Some(n)`, merges of more than `n` edges get p = 0.5.
pub fn merge_edges_for_erasure(baseline: &MatchingGraph, clusters: &[Cluster], cap: Option<usize>) -> Result<MatchingGraph> {
    if clusters.is_empty() {
        return Ok(baseline.clone());
    }
    let na = baseline.d - 1;
    let layers = baseline.cycles + 1;
    if baseline.nodes.len() != na * layers {
        return Err(Error::InvalidInput("baseline graph must be unmerged".into()));
    }
    const KEEP: usize = usize::MAX;
    let mut target = vec![KEEP; baseline.nodes.len()];
    for (ci, cl) in clusters.iter().enumerate() {
        if cl.last + 1 >= layers || cl.space >= na {
            return Err(Error::InvalidInput(format!("cluster {cl:?} outside the graph")));
        }
        for t in cl.first..=cl.last + 1 {
            let k = baseline.node_index(DetectorId::new(cl.space, t)).unwrap();
            target[k] = ci;
        }
    }
    let mut new_index = vec![0usize; baseline.nodes.len()];
    let mut nodes = Vec::with_capacity(baseline.nodes.len());
    for (k, n) in baseline.nodes.iter().enumerate() {
        if target[k] == KEEP {
            new_index[k] = nodes.len();
            nodes.push(*n);
        }
    }
    let first_span = nodes.len();
    nodes.extend(clusters.iter().map(Cluster::node));
    for k in 0..baseline.nodes.len() {
        if target[k] != KEEP {
            new_index[k] = first_span + target[k];
        }
    }

    struct Bucket {
        a: usize,
        b: Endpoint,
        kind: EdgeKind,
        qubits: u64,
        ps: Vec<f64>,
    }
    let mut buckets: Vec<Bucket> = Vec::with_capacity(baseline.edges.len());
    let mut index: HashMap<(usize, Endpoint), usize> = HashMap::with_capacity(baseline.edges.len());
    for e in &baseline.edges {
        let a = new_index[e.a];
        let (a, b) = match e.b {
            Endpoint::Node(b) => {
                let b = new_index[b];
                if a == b {
                    continue;
                }
                (a.min(b), Endpoint::Node(a.max(b)))
            }
            side => (a, side),
        };
        match index.get(&(a, b)) {
            Some(&k) => buckets[k].ps.push(e.p),
            None => {
                index.insert((a, b), buckets.len());
                buckets.push(Bucket { a, b, kind: e.kind, qubits: e.qubits, ps: vec![e.p] });
            }
        }
    }
    let mut edges = Vec::with_capacity(buckets.len());
    for bk in buckets {
        let p = match bk.ps.len() {
            1 => bk.ps[0],
            n if cap.is_some_and(|c| n > c) => 0.5,
            _ => p_odd(&bk.ps),
        };
        edges.push(Edge { a: bk.a, b: bk.b, kind: bk.kind, p, w: weight_from_prob(p)?, qubits: bk.qubits });
    }
    MatchingGraph::from_parts(baseline.d, baseline.cycles, nodes, edges)
}

/// Comparison variant: keep every detector, but give each time-like edge
/// across an erased syndrome zero weight.
pub fn naive_erasure_graph(baseline: &MatchingGraph, record: &SyndromeRecord) -> Result<MatchingGraph> {
    let mut g = baseline.clone();
    for t in 0..record.cycles {
        for j in 0..record.d - 1 {
            if record.syndrome(t, j) == ERASED {
                let a = g.node_index(DetectorId::new(j, t));
                let b = g.node_index(DetectorId::new(j, t + 1));
                let k = match (a, b) {
                    (Some(a), Some(b)) => g.edge_between(a, b),
                    _ => None,
                }
                .ok_or_else(|| Error::InvalidInput("baseline lacks a time edge".into()))?;
                g.set_prob(k, 0.5)?;
            }
        }
    }
    Ok(g)
}
