//! Minimum-weight perfect matching over detector graphs.
//!
//! Pairwise costs are shortest paths (Dijkstra from each defect, stopped once
//! every other defect and both boundaries are settled). The defect graph is
//! then solved exactly with the blossom algorithm after the usual reduction:
//! each defect gets a boundary copy, copies of two defects are joined exactly
//! when the defects are, and every edge weight is `C - cost`, so a
//! maximum-cardinality maximum-weight matching is a minimum-cost pairing.
//! Edge weights are quantized to multiples of 2⁻³⁰ so the matching runs on
//! exact integers.

pub mod blossom;

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DetectorId, Endpoint, MatchingGraph, Side};
use crate::sampler::{Basis, SyndromeRecord};

pub const WEIGHT_SCALE: f64 = (1u64 << 30) as f64;
const INF: i64 = i64::MAX / 4;

pub fn quantize(w: f64) -> i64 {
    (w * WEIGHT_SCALE).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Partner {
    Detector(DetectorId),
    Boundary(Side),
}

/// Data-qubit flips implied by the matched paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Correction {
    pub qubits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Sorted by first element; detector pairs list the smaller id first.
    pub pairs: Vec<(DetectorId, Partner)>,
    pub total_weight: f64,
    /// Total in units of 2⁻³⁰; exact.
    pub total_weight_q: i64,
    pub correction: Correction,
}

impl Matching {
    pub fn empty() -> Self {
        Matching { pairs: vec![], total_weight: 0.0, total_weight_q: 0, correction: Correction::default() }
    }
}

/// Shortest paths from one source.
struct Paths {
    dist: Vec<i64>,
    mask: Vec<u64>,
    boundary: [(i64, u64); 2],
}

fn side_index(s: Side) -> usize {
    match s {
        Side::Left => 0,
        Side::Right => 1,
    }
}

fn dijkstra(g: &MatchingGraph, wq: &[i64], src: usize, targets: Option<&[bool]>) -> Paths {
    let n = g.num_nodes();
    let mut dist = vec![INF; n];
    let mut mask = vec![0u64; n];
    let mut done = vec![false; n];
    let mut boundary = [(INF, 0u64); 2];
    let mut bdone = [false; 2];
    let mut remaining = targets.map(|t| t.iter().filter(|&&x| x).count() + 2);
    let mut heap = BinaryHeap::new();
    dist[src] = 0;
    heap.push(Reverse((0i64, src)));
    while let Some(Reverse((dv, u))) = heap.pop() {
        if u >= n {
            let s = u - n;
            if bdone[s] {
                continue;
            }
            bdone[s] = true;
            if let Some(r) = remaining.as_mut() {
                *r -= 1;
                if *r == 0 {
                    break;
                }
            }
            continue;
        }
        if done[u] {
            continue;
        }
        done[u] = true;
        if let (Some(r), Some(t)) = (remaining.as_mut(), targets) {
            if t[u] {
                *r -= 1;
                if *r == 0 {
                    break;
                }
            }
        }
        for &k in g.incident(u) {
            let e = &g.edges[k];
            let nd = dv + wq[k];
            match g.other(k, u) {
                Endpoint::Node(v) => {
                    if nd < dist[v] {
                        dist[v] = nd;
                        mask[v] = mask[u] ^ e.qubits;
                        heap.push(Reverse((nd, v)));
                    }
                }
                Endpoint::Boundary(s) => {
                    let si = side_index(s);
                    if nd < boundary[si].0 {
                        boundary[si] = (nd, mask[u] ^ e.qubits);
                        heap.push(Reverse((nd, n + si)));
                    }
                }
            }
        }
    }
    Paths { dist, mask, boundary }
}

fn quantized_weights(g: &MatchingGraph) -> Result<Vec<i64>> {
    g.edges
        .iter()
        .map(|e| {
            if e.w >= 0.0 && e.w.is_finite() {
                Ok(quantize(e.w))
            } else {
                Err(Error::InvalidInput(format!("edge weight {} must be finite and >= 0", e.w)))
            }
        })
        .collect()
}

fn nearest_boundary(b: &[(i64, u64); 2]) -> (i64, u64, Side) {
    if b[0].0 <= b[1].0 {
        (b[0].0, b[0].1, Side::Left)
    } else {
        (b[1].0, b[1].1, Side::Right)
    }
}

/// Solve the pairing problem given pairwise costs among `k` defects.
fn solve_pairing<D, B>(k: usize, pair: D, bnd: B) -> Result<(Vec<Option<usize>>, i64, u64)>
where
    D: Fn(usize, usize) -> (i64, u64),
    B: Fn(usize) -> (i64, u64, Side),
{
    // partner[i] = Some(j) for a defect pair, None for the boundary
    let mut partner = vec![None; k];
    if k == 0 {
        return Ok((partner, 0, 0));
    }
    let bd: Vec<(i64, u64, Side)> = (0..k).map(&bnd).collect();
    let mut costs: Vec<(usize, usize, i64)> = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (d, _) = pair(i, j);
            // pairing through a path no shorter than both boundary routes is never needed
            if d < INF && (bd[i].0 >= INF || bd[j].0 >= INF || d < bd[i].0 + bd[j].0) {
                costs.push((i, j, d));
            }
        }
    }
    let cmax = costs.iter().map(|c| c.2).chain(bd.iter().map(|b| b.0).filter(|&b| b < INF)).max().unwrap_or(0);
    let c = cmax + 1;
    let mut edges = Vec::with_capacity(2 * costs.len() + k);
    for &(i, j, d) in &costs {
        edges.push((i, j, c - d));
        edges.push((k + i, k + j, c));
    }
    for (i, b) in bd.iter().enumerate() {
        if b.0 < INF {
            edges.push((i, k + i, c - b.0));
        }
    }
    let mate = blossom::max_weight_matching(2 * k, &edges, true);
    let mut total = 0i64;
    let mut corr = 0u64;
    for i in 0..k {
        match mate[i] {
            Some(m) if m == k + i => {
                total += bd[i].0;
                corr ^= bd[i].1;
            }
            Some(m) if m < k => {
                partner[i] = Some(m);
                if i < m {
                    let (d, mk) = pair(i, m);
                    total += d;
                    corr ^= mk;
                }
            }
            _ => return Err(Error::InvalidInput("no perfect matching: a defect cannot reach any boundary".into())),
        }
    }
    Ok((partner, total, corr))
}

fn build_matching(
    g: &MatchingGraph,
    nodes: &[usize],
    partner: &[Option<usize>],
    sides: &[Side],
    total: i64,
    corr: u64,
) -> Matching {
    let mut pairs = Vec::with_capacity(nodes.len());
    for (i, p) in partner.iter().enumerate() {
        let a = g.nodes[nodes[i]].id;
        match p {
            None => pairs.push((a, Partner::Boundary(sides[i]))),
            Some(j) => {
                let b = g.nodes[nodes[*j]].id;
                if a < b {
                    pairs.push((a, Partner::Detector(b)));
                }
            }
        }
    }
    pairs.sort();
    Matching { pairs, total_weight: total as f64 / WEIGHT_SCALE, total_weight_q: total, correction: Correction { qubits: corr } }
}

fn resolve(g: &MatchingGraph, defects: &[DetectorId]) -> Result<Vec<usize>> {
    let mut nodes = defects
        .iter()
        .map(|&id| g.node_index(id).ok_or_else(|| Error::InvalidInput(format!("detector {id:?} not in graph"))))
        .collect::<Result<Vec<_>>>()?;
    nodes.sort_unstable();
    if nodes.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("duplicate defect".into()));
    }
    Ok(nodes)
}

/// Exact minimum-weight matching of the given nontrivial detectors.
pub fn decode(g: &MatchingGraph, defects: &[DetectorId]) -> Result<Matching> {
    let nodes = resolve(g, defects)?;
    decode_nodes(g, &nodes)
}

/// [`decode`] with defects given as sorted node indices.
pub fn decode_nodes(g: &MatchingGraph, nodes: &[usize]) -> Result<Matching> {
    if nodes.is_empty() {
        return Ok(Matching::empty());
    }
    let wq = quantized_weights(g)?;
    let mut is_target = vec![false; g.num_nodes()];
    for &v in nodes {
        is_target[v] = true;
    }
    let paths: Vec<Paths> = nodes
        .iter()
        .map(|&s| {
            is_target[s] = false;
            let p = dijkstra(g, &wq, s, Some(&is_target));
            is_target[s] = true;
            p
        })
        .collect();
    let bnd = |i: usize| nearest_boundary(&paths[i].boundary);
    let sides: Vec<Side> = (0..nodes.len()).map(|i| bnd(i).2).collect();
    let (partner, total, corr) =
        solve_pairing(nodes.len(), |i, j| (paths[i].dist[nodes[j]], paths[i].mask[nodes[j]]), bnd)?;
    Ok(build_matching(g, nodes, &partner, &sides, total, corr))
}

/// All-pairs shortest paths of a fixed graph, for decoding many shots.
pub struct PathCache {
    n: usize,
    dist: Vec<i64>,
    mask: Vec<u64>,
    boundary: Vec<(i64, u64, Side)>,
}

impl PathCache {
    pub fn new(g: &MatchingGraph) -> Result<Self> {
        let wq = quantized_weights(g)?;
        let n = g.num_nodes();
        let mut dist = Vec::with_capacity(n * n);
        let mut mask = Vec::with_capacity(n * n);
        let mut boundary = Vec::with_capacity(n);
        for s in 0..n {
            let p = dijkstra(g, &wq, s, None);
            dist.extend_from_slice(&p.dist);
            mask.extend_from_slice(&p.mask);
            boundary.push(nearest_boundary(&p.boundary));
        }
        Ok(PathCache { n, dist, mask, boundary })
    }

    pub fn decode_nodes(&self, g: &MatchingGraph, nodes: &[usize]) -> Result<Matching> {
        if g.num_nodes() != self.n {
            return Err(Error::InvalidInput("path cache built for a different graph".into()));
        }
        if nodes.is_empty() {
            return Ok(Matching::empty());
        }
        let at = |i: usize, j: usize| nodes[i] * self.n + nodes[j];
        let bnd = |i: usize| self.boundary[nodes[i]];
        let sides: Vec<Side> = (0..nodes.len()).map(|i| bnd(i).2).collect();
        let (partner, total, corr) =
            solve_pairing(nodes.len(), |i, j| (self.dist[at(i, j)], self.mask[at(i, j)]), bnd)?;
        Ok(build_matching(g, nodes, &partner, &sides, total, corr))
    }

    /// Correction only; skips building the pair list.
    pub fn correction(&self, nodes: &[usize]) -> Result<Correction> {
        if nodes.is_empty() {
            return Ok(Correction::default());
        }
        let at = |i: usize, j: usize| nodes[i] * self.n + nodes[j];
        let (_, _, corr) = solve_pairing(
            nodes.len(),
            |i, j| (self.dist[at(i, j)], self.mask[at(i, j)]),
            |i| self.boundary[nodes[i]],
        )?;
        Ok(Correction { qubits: corr })
    }
}

/// Largest defect count accepted by [`brute_force`].
pub const BRUTE_FORCE_MAX: usize = 12;

/// Exhaustive minimum over all pairings, using Floyd-Warshall distances.
/// Among minima the lexicographically smallest pair list wins.
pub fn brute_force(g: &MatchingGraph, defects: &[DetectorId]) -> Result<Matching> {
    if defects.len() > BRUTE_FORCE_MAX {
        return Err(Error::Size(format!("{} defects exceed the brute-force limit of {BRUTE_FORCE_MAX}", defects.len())));
    }
    let nodes = resolve(g, defects)?;
    if nodes.is_empty() {
        return Ok(Matching::empty());
    }
    let wq = quantized_weights(g)?;
    let n = g.num_nodes();
    let mut d = vec![INF; n * n];
    let mut m = vec![0u64; n * n];
    let mut direct_b = vec![[(INF, 0u64); 2]; n];
    for i in 0..n {
        d[i * n + i] = 0;
    }
    for (k, e) in g.edges.iter().enumerate() {
        match e.b {
            Endpoint::Node(b) => {
                for (x, y) in [(e.a, b), (b, e.a)] {
                    if wq[k] < d[x * n + y] {
                        d[x * n + y] = wq[k];
                        m[x * n + y] = e.qubits;
                    }
                }
            }
            Endpoint::Boundary(s) => {
                let si = side_index(s);
                if wq[k] < direct_b[e.a][si].0 {
                    direct_b[e.a][si] = (wq[k], e.qubits);
                }
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i * n + k];
            if dik >= INF {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                    m[i * n + j] = m[i * n + k] ^ m[k * n + j];
                }
            }
        }
    }
    let nb: Vec<(i64, u64, Side)> = nodes
        .iter()
        .map(|&s| {
            let mut best = [(INF, 0u64); 2];
            for v in 0..n {
                for si in 0..2 {
                    let (bw, bm) = direct_b[v][si];
                    if bw < INF && d[s * n + v] < INF && d[s * n + v] + bw < best[si].0 {
                        best[si] = (d[s * n + v] + bw, m[s * n + v] ^ bm);
                    }
                }
            }
            nearest_boundary(&best)
        })
        .collect();

    struct Search<'a> {
        k: usize,
        pair: &'a dyn Fn(usize, usize) -> i64,
        nb: &'a [(i64, u64, Side)],
        best: i64,
        best_partner: Vec<Option<usize>>,
        cur: Vec<Option<usize>>,
        used: Vec<bool>,
    }
    fn rec(s: &mut Search, cost: i64) {
        let Some(i) = (0..s.k).find(|&i| !s.used[i]) else {
            if cost < s.best {
                s.best = cost;
                s.best_partner = s.cur.clone();
            }
            return;
        };
        s.used[i] = true;
        for j in i + 1..s.k {
            if !s.used[j] {
                let c = (s.pair)(i, j);
                if c < INF {
                    s.used[j] = true;
                    s.cur[i] = Some(j);
                    s.cur[j] = Some(i);
                    rec(s, cost + c);
                    s.cur[j] = None;
                    s.used[j] = false;
                }
            }
        }
        s.cur[i] = None;
        if s.nb[i].0 < INF {
            rec(s, cost + s.nb[i].0);
        }
        s.used[i] = false;
    }
    let pair = |i: usize, j: usize| d[nodes[i] * n + nodes[j]];
    let k = nodes.len();
    let mut s = Search { k, pair: &pair, nb: &nb, best: INF, best_partner: vec![], cur: vec![None; k], used: vec![false; k] };
    rec(&mut s, 0);
    if s.best >= INF {
        return Err(Error::InvalidInput("no perfect matching: a defect cannot reach any boundary".into()));
    }
    let mut corr = 0u64;
    for i in 0..k {
        match s.best_partner[i] {
            None => corr ^= nb[i].1,
            Some(j) if i < j => corr ^= m[nodes[i] * n + nodes[j]],
            _ => {}
        }
    }
    let sides: Vec<Side> = nb.iter().map(|b| b.2).collect();
    Ok(build_matching(g, &nodes, &s.best_partner, &sides, s.best, corr))
}

/// Logical flip of one shot. X basis: corrected final parity of qubit 0 against
/// its initial parity. Z basis: parity of all final values against the initial
/// ones; corrections do not act on Z, so the matching must be empty.
pub fn score(record: &SyndromeRecord, matching: &Matching) -> Result<bool> {
    match record.basis {
        Basis::X => Ok(score_x(record, matching.correction)),
        Basis::Z => {
            if !matching.pairs.is_empty() {
                return Err(Error::InvalidInput("Z-basis records are not decoded".into()));
            }
            Ok(score_z(record))
        }
    }
}

pub fn score_x(record: &SyndromeRecord, c: Correction) -> bool {
    (record.initial_state[0] ^ record.finals[0] ^ (c.qubits & 1) as u8) == 1
}

pub fn score_z(record: &SyndromeRecord) -> bool {
    record.initial_state.iter().zip(&record.finals).fold(0u8, |acc, (i, f)| acc ^ i ^ f) == 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{detectors_from_record, weight_from_prob};

    fn rec(d: usize, cycles: usize) -> SyndromeRecord {
        SyndromeRecord {
            basis: Basis::X,
            d,
            cycles,
            initial_state: vec![0; d],
            syndromes: vec![0; cycles * (d - 1)],
            finals: vec![0; d],
            shot_seed: 0,
            true_flips: 0,
        }
    }

    #[test]
    fn empty_defects() {
        let g = MatchingGraph::structure(5, 2, 0.1).unwrap();
        let m = decode(&g, &[]).unwrap();
        assert_eq!(m.total_weight, 0.0);
        assert!(m.pairs.is_empty());
        assert_eq!(brute_force(&g, &[]).unwrap().total_weight, 0.0);
    }

    #[test]
    fn single_defect_goes_to_nearest_boundary() {
        let g = MatchingGraph::structure(5, 0, 0.1).unwrap();
        let m = decode(&g, &[DetectorId::new(0, 0)]).unwrap();
        assert_eq!(m.pairs, vec![(DetectorId::new(0, 0), Partner::Boundary(Side::Left))]);
        let m = decode(&g, &[DetectorId::new(3, 0)]).unwrap();
        assert_eq!(m.pairs, vec![(DetectorId::new(3, 0), Partner::Boundary(Side::Right))]);
        assert!(decode(&g, &[DetectorId::new(9, 0)]).is_err());
    }

    #[test]
    fn two_defects_on_a_path() {
        // d = 6, single layer: five detectors on a line with boundary at both ends
        let mut g = MatchingGraph::structure(6, 0, 0.1).unwrap();
        let w1 = weight_from_prob(0.1).unwrap();
        let a = DetectorId::new(1, 0);
        let b = DetectorId::new(3, 0);
        // pairing costs 2 w, two boundary routes cost 2 w + 2 w
        let m = decode(&g, &[a, b]).unwrap();
        assert_eq!(m.pairs, vec![(a, Partner::Detector(b))]);
        assert!((m.total_weight - 2.0 * w1).abs() < 1e-8);
        // make the middle edges expensive: boundary routes win
        for e in g.edges.iter_mut() {
            if e.qubits == 1 << 2 || e.qubits == 1 << 3 {
                e.p = 1e-4;
                e.w = weight_from_prob(1e-4).unwrap();
            }
        }
        let m = decode(&g, &[a, b]).unwrap();
        let bf = brute_force(&g, &[a, b]).unwrap();
        assert_eq!(m.total_weight_q, bf.total_weight_q);
        assert!(matches!(m.pairs[0].1, Partner::Boundary(_)));
        assert!((m.total_weight - 4.0 * w1).abs() < 1e-8);
    }

    #[test]
    fn scale_invariance() {
        let mut g = MatchingGraph::structure(5, 3, 0.1).unwrap();
        for (k, e) in g.edges.iter_mut().enumerate() {
            e.w = 0.5 + (k % 7) as f64 * 0.37;
        }
        let defects = [DetectorId::new(0, 0), DetectorId::new(2, 1), DetectorId::new(3, 3), DetectorId::new(1, 2)];
        let m1 = decode(&g, &defects).unwrap();
        for e in g.edges.iter_mut() {
            e.w *= 4.0;
        }
        let m2 = decode(&g, &defects).unwrap();
        assert_eq!(m1.pairs, m2.pairs);
    }

    #[test]
    fn single_flip_corrected_and_worst_case_fails() {
        let d = 5;
        let g = MatchingGraph::structure(d, 2, 0.05).unwrap();
        // phase flip on qubit 2 before round 0 with perfect syndromes
        let mut r = rec(d, 2);
        for t in 0..2 {
            r.syndromes[t * 4 + 1] = 1;
            r.syndromes[t * 4 + 2] = 1;
        }
        r.finals[2] = 1;
        let det = detectors_from_record(&r).unwrap();
        let m = decode(&g, &det.defect_ids()).unwrap();
        assert!(!score(&r, &m).unwrap());
        assert_eq!(m.correction.qubits, 1 << 2);
        // flips on qubits 0, 1, 2: decoder prefers flipping 3 and 4
        let mut r = rec(d, 2);
        for t in 0..2 {
            r.syndromes[t * 4 + 2] = 1;
        }
        r.finals = vec![1, 1, 1, 0, 0];
        let det = detectors_from_record(&r).unwrap();
        let m = decode(&g, &det.defect_ids()).unwrap();
        assert!(score(&r, &m).unwrap());
    }

    #[test]
    fn cache_agrees_with_direct() {
        let mut g = MatchingGraph::structure(5, 4, 0.1).unwrap();
        for (k, e) in g.edges.iter_mut().enumerate() {
            e.w = 0.3 + ((k * 7919) % 13) as f64 * 0.21;
        }
        let cache = PathCache::new(&g).unwrap();
        let nodes = [0usize, 3, 5, 9, 12, 17, 18];
        let a = decode_nodes(&g, &nodes).unwrap();
        let b = cache.decode_nodes(&g, &nodes).unwrap();
        assert_eq!(a.total_weight_q, b.total_weight_q);
        assert_eq!(cache.correction(&nodes).unwrap(), b.correction);
    }

    #[test]
    fn brute_force_size_limit() {
        let g = MatchingGraph::structure(5, 5, 0.1).unwrap();
        let ids: Vec<DetectorId> = (0..13).map(|k| DetectorId::new(k % 4, k / 4)).collect();
        assert!(matches!(brute_force(&g, &ids), Err(Error::Size(_))));
    }

    #[test]
    fn z_scoring() {
        let mut r = rec(3, 1);
        r.basis = Basis::Z;
        r.initial_state = vec![1, 1, 1];
        r.finals = vec![1, 0, 1];
        assert!(score(&r, &Matching::empty()).unwrap());
    }
}
