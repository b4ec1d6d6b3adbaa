//! Edge probabilities estimated from detection-event statistics.
//!
//! Model: every detector value is the XOR of independent binary error
//! mechanisms. For an edge mechanism `e` with probability `p` shared by
//! detectors `i` and `j`, write `xᵢ = e ⊕ a` and `xⱼ = e ⊕ b`, where `a` and `b`
//! collect all other mechanisms and are independent of `e` and of each other.
//! For any XOR of independent bits, `1 − 2⟨x⟩` is the product of the
//! `1 − 2pₖ`. Hence
//!
//! ```text
//! 1 − 2⟨xᵢ⟩      = (1 − 2p)(1 − 2a)
//! 1 − 2⟨xⱼ⟩      = (1 − 2p)(1 − 2b)
//! 1 − 2⟨xᵢ ⊕ xⱼ⟩ = (1 − 2a)(1 − 2b)
//! ```
//!
//! and with `⟨xᵢ ⊕ xⱼ⟩ = ⟨xᵢ⟩ + ⟨xⱼ⟩ − 2⟨xᵢxⱼ⟩`,
//!
//! ```text
//! (1 − 2p)² = (1 − 2⟨xᵢ⟩)(1 − 2⟨xⱼ⟩) / (1 − 2⟨xᵢ⟩ − 2⟨xⱼ⟩ + 4⟨xᵢxⱼ⟩)
//!           = 1 − 4(⟨xᵢxⱼ⟩ − ⟨xᵢ⟩⟨xⱼ⟩) / (1 − 2⟨xᵢ⟩ − 2⟨xⱼ⟩ + 4⟨xᵢxⱼ⟩).
//! ```
//!
//! The boundary mechanism of a detector is whatever remains of its marginal
//! once the incident edges are divided out: `1 − 2p_b = (1 − 2⟨xᵢ⟩) / Π(1 − 2pₑ)`.

use rayon::prelude::*;

use super::{boundary_layers, clamp_prob, detectors_from_record, weight_from_prob, Endpoint, MatchingGraph, P_FLOOR};
use crate::error::{Error, Result};
use crate::sampler::{SyndromeRecord, ERASED};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightOptions {
    pub p_floor: f64,
}

impl Default for WeightOptions {
    fn default() -> Self {
        WeightOptions { p_floor: P_FLOOR }
    }
}

/// A weighted graph together with estimation diagnostics.
#[derive(Debug, Clone)]
pub struct Weighted {
    pub graph: MatchingGraph,
    pub diagnostics: Vec<String>,
}

/// Pairwise inversion; `None` when the discriminant is negative or undefined.
fn edge_probability(xi: f64, xj: f64, xij: f64) -> Option<f64> {
    let den = 1.0 - 2.0 * xi - 2.0 * xj + 4.0 * xij;
    if den <= 0.0 {
        return None;
    }
    let disc = 1.0 - 4.0 * (xij - xi * xj) / den;
    if disc < 0.0 {
        return None;
    }
    Some(0.5 - 0.5 * disc.sqrt())
}

fn check_batch(records: &[SyndromeRecord]) -> Result<(usize, usize)> {
    let first = records.first().ok_or_else(|| Error::InvalidInput("empty batch".into()))?;
    boundary_layers(first)?;
    if records.iter().any(|r| r.d != first.d || r.cycles != first.cycles || r.basis != first.basis) {
        return Err(Error::InvalidInput("batch is not homogeneous".into()));
    }
    Ok((first.d, first.cycles))
}

fn collapsed_detectors(r: &SyndromeRecord) -> Result<Vec<u8>> {
    if r.has_erasures() {
        Ok(detectors_from_record(&r.collapse_erasures())?.values)
    } else {
        Ok(detectors_from_record(r)?.values)
    }
}

/// Conditioned sufficient statistics. Side 0 of edge k is conditioned on its
/// node `a`, side 1 on node `b` (unused for boundary edges).
#[derive(Clone)]
struct Stats {
    n: Vec<u64>,
    x: Vec<u64>,
    other: Vec<[u64; 2]>,
    pair: Vec<[u64; 2]>,
}

impl Stats {
    fn new(nodes: usize, edges: usize) -> Self {
        Stats { n: vec![0; nodes], x: vec![0; nodes], other: vec![[0; 2]; edges], pair: vec![[0; 2]; edges] }
    }

    fn merge(mut self, o: Stats) -> Stats {
        for (a, b) in self.n.iter_mut().zip(o.n) {
            *a += b;
        }
        for (a, b) in self.x.iter_mut().zip(o.x) {
            *a += b;
        }
        for (a, b) in self.other.iter_mut().zip(o.other) {
            a[0] += b[0];
            a[1] += b[1];
        }
        for (a, b) in self.pair.iter_mut().zip(o.pair) {
            a[0] += b[0];
            a[1] += b[1];
        }
        self
    }

    fn add(&mut self, g: &MatchingGraph, det: &[u8], clean: &[bool]) {
        for (i, &c) in clean.iter().enumerate() {
            if c {
                self.n[i] += 1;
                self.x[i] += det[i] as u64;
            }
        }
        for (k, e) in g.edges.iter().enumerate() {
            if let Endpoint::Node(b) = e.b {
                let (xa, xb) = (det[e.a] as u64, det[b] as u64);
                if clean[e.a] {
                    self.other[k][0] += xb;
                    self.pair[k][0] += xa * xb;
                }
                if clean[b] {
                    self.other[k][1] += xa;
                    self.pair[k][1] += xa * xb;
                }
            }
        }
    }
}

fn accumulate<F>(g: &MatchingGraph, records: &[SyndromeRecord], clean_of: F) -> Result<Stats>
where
    F: Fn(&SyndromeRecord) -> Vec<bool> + Sync,
{
    let nn = g.num_nodes();
    let ne = g.edges.len();
    records
        .par_chunks(4096)
        .map(|chunk| {
            let mut s = Stats::new(nn, ne);
            for r in chunk {
                let det = collapsed_detectors(r)?;
                s.add(g, &det, &clean_of(r));
            }
            Ok(s)
        })
        .try_reduce(|| Stats::new(nn, ne), |a, b| Ok(a.merge(b)))
}

/// Turn statistics into probabilities. `fallback` supplies unconditioned
/// statistics for nodes whose conditioned sample is empty.
fn finish(mut g: MatchingGraph, s: &Stats, fallback: Option<&Stats>, opts: &WeightOptions) -> Result<Weighted> {
    let mut diagnostics = Vec::new();
    let floor = opts.p_floor;
    let clamp = |p: f64| clamp_prob(p).max(floor).min(0.5);
    let mut use_stats: Vec<&Stats> = vec![s; g.num_nodes()];
    if let Some(fb) = fallback {
        for i in 0..g.num_nodes() {
            if s.n[i] == 0 {
                diagnostics.push(format!("detector {:?}: no clean shots, using unconditioned estimate", g.nodes[i].id));
                use_stats[i] = fb;
            }
        }
    }
    for i in 0..g.num_nodes() {
        if use_stats[i].n[i] == 0 {
            return Err(Error::InvalidInput("no shots available for weighting".into()));
        }
    }
    let mean = |st: &Stats, i: usize, v: u64| v as f64 / st.n[i] as f64;
    // side estimates of every detector-detector edge
    let mut side_p: Vec<[Option<f64>; 2]> = vec![[None, None]; g.edges.len()];
    for (k, e) in g.edges.iter().enumerate() {
        if let Endpoint::Node(b) = e.b {
            for (side, node) in [(0usize, e.a), (1usize, b)] {
                let st = use_stats[node];
                let (xs, xo) = (mean(st, node, st.x[node]), mean(st, node, st.other[k][side]));
                let xx = mean(st, node, st.pair[k][side]);
                let p = match edge_probability(xs, xo, xx) {
                    Some(p) => clamp(p),
                    None => {
                        diagnostics.push(format!(
                            "edge {:?}-{:?}: negative discriminant, clamped to floor",
                            g.nodes[e.a].id, g.nodes[b].id
                        ));
                        floor
                    }
                };
                side_p[k][side] = Some(p);
            }
        }
    }
    for k in 0..g.edges.len() {
        if let [Some(p0), Some(p1)] = side_p[k] {
            g.set_prob(k, 0.5 * (p0 + p1))?;
        }
    }
    // residual boundary probabilities, using the node's own side estimates
    for i in 0..g.num_nodes() {
        let mut prod = 1.0;
        let mut bedges = Vec::new();
        for &k in g.incident(i) {
            match g.edges[k].b {
                Endpoint::Boundary(_) => bedges.push(k),
                Endpoint::Node(_) => {
                    let side = usize::from(g.edges[k].a != i);
                    prod *= 1.0 - 2.0 * side_p[k][side].unwrap();
                }
            }
        }
        if bedges.is_empty() {
            continue;
        }
        let st = use_stats[i];
        let xi = mean(st, i, st.x[i]);
        let r = (1.0 - 2.0 * xi) / prod;
        let total = 0.5 * (1.0 - r);
        // several boundary sides share the residual equally in the XOR sense
        let per_side = if bedges.len() == 1 {
            total
        } else {
            0.5 * (1.0 - (1.0 - 2.0 * clamp(total)).powf(1.0 / bedges.len() as f64))
        };
        for k in bedges {
            g.set_prob(k, clamp(per_side))?;
        }
    }
    for e in &mut g.edges {
        e.w = weight_from_prob(e.p)?;
    }
    Ok(Weighted { graph: g, diagnostics })
}

/// Correlation-based weights from a calibration batch. Erased syndromes are
/// read as 1.
pub fn correlation_weights(records: &[SyndromeRecord], opts: &WeightOptions) -> Result<Weighted> {
    let (d, cycles) = check_batch(records)?;
    let g = MatchingGraph::structure(d, cycles, 0.5)?;
    let nn = g.num_nodes();
    let s = accumulate(&g, records, |_| vec![true; nn])?;
    finish(g, &s, None, opts)
}

/// Which detectors compare at least one erased syndrome.
fn erased_detectors(r: &SyndromeRecord) -> Vec<bool> {
    let na = r.d - 1;
    let mut out = vec![false; (r.cycles + 1) * na];
    for t in 0..r.cycles {
        for j in 0..na {
            if r.syndrome(t, j) == ERASED {
                out[t * na + j] = true;
                out[(t + 1) * na + j] = true;
            }
        }
    }
    out
}

/// Weights estimated per detector from shots where no detector within one
/// edge of it involves an erased syndrome. Each detector-detector edge gets
/// one estimate from each endpoint; the two are averaged.
pub fn no_erasure_baseline(records: &[SyndromeRecord], opts: &WeightOptions) -> Result<Weighted> {
    let (d, cycles) = check_batch(records)?;
    let g = MatchingGraph::structure(d, cycles, 0.5)?;
    let nn = g.num_nodes();
    let neighbors: Vec<Vec<usize>> = (0..nn)
        .map(|i| {
            g.incident(i)
                .iter()
                .filter_map(|&k| match g.other(k, i) {
                    Endpoint::Node(o) => Some(o),
                    Endpoint::Boundary(_) => None,
                })
                .collect()
        })
        .collect();
    let conditioned = accumulate(&g, records, |r| {
        let dirty = erased_detectors(r);
        (0..nn).map(|i| !dirty[i] && neighbors[i].iter().all(|&o| !dirty[o])).collect()
    })?;
    let needs_fallback = conditioned.n.iter().any(|&n| n == 0);
    if needs_fallback {
        let plain = accumulate(&g, records, |_| vec![true; nn])?;
        finish(g, &conditioned, Some(&plain), opts)
    } else {
        finish(g, &conditioned, None, opts)
    }
}
