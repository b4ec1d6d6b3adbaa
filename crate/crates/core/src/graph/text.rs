//! Line-oriented graph format.
//!
//! ```text
//! # catrep-graph d=5 cycles=3
//! N 0 0          detector (space, time); spanning detectors write time as first:last
//! S 0 0 1 0 0.01 kind i1 t1 i2 t2 p
//! B 0 0 B L 0.02 boundary edges use B as the second detector and L/R as side
//! ```

use std::io::{BufRead, Write};

use super::{weight_from_prob, DetectorId, Edge, EdgeKind, Endpoint, MatchingGraph, Node, Side};
use crate::error::{Error, Result};

fn fmt_time(n: &Node) -> String {
    if n.last == n.id.time {
        n.id.time.to_string()
    } else {
        format!("{}:{}", n.id.time, n.last)
    }
}

pub fn write_graph_text<W: Write>(g: &MatchingGraph, mut w: W) -> Result<()> {
    writeln!(w, "# catrep-graph d={} cycles={}", g.d, g.cycles)?;
    for n in &g.nodes {
        writeln!(w, "N {} {}", n.id.space, fmt_time(n))?;
    }
    for e in &g.edges {
        let a = &g.nodes[e.a];
        let tail = match e.b {
            Endpoint::Node(b) => {
                let b = &g.nodes[b];
                format!("{} {}", b.id.space, fmt_time(b))
            }
            Endpoint::Boundary(Side::Left) => "B L".to_string(),
            Endpoint::Boundary(Side::Right) => "B R".to_string(),
        };
        writeln!(w, "{} {} {} {} {}", e.kind.letter(), a.id.space, fmt_time(a), tail, e.p)?;
    }
    Ok(())
}

fn bad(line: usize, msg: &str) -> Error {
    Error::Format(format!("line {line}: {msg}"))
}

fn parse_time(s: &str, line: usize) -> Result<(usize, usize)> {
    let p = |v: &str| v.parse::<usize>().map_err(|_| bad(line, "bad time"));
    match s.split_once(':') {
        Some((a, b)) => Ok((p(a)?, p(b)?)),
        None => {
            let t = p(s)?;
            Ok((t, t))
        }
    }
}

pub fn read_graph_text<R: BufRead>(r: R) -> Result<MatchingGraph> {
    let mut d = None;
    let mut cycles = None;
    let mut nodes = Vec::new();
    let mut raw_edges = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("d=") {
                    d = Some(v.parse::<usize>().map_err(|_| bad(ln, "bad d"))?);
                }
                if let Some(v) = tok.strip_prefix("cycles=") {
                    cycles = Some(v.parse::<usize>().map_err(|_| bad(ln, "bad cycles"))?);
                }
            }
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["N", s, t] => {
                let space = s.parse().map_err(|_| bad(ln, "bad space"))?;
                let (time, last) = parse_time(t, ln)?;
                nodes.push(Node { id: DetectorId::new(space, time), last });
            }
            [k, s1, t1, s2, t2, p] => {
                let kind = match *k {
                    "S" => EdgeKind::Space,
                    "T" => EdgeKind::Time,
                    "D" => EdgeKind::Diagonal,
                    "B" => EdgeKind::Boundary,
                    _ => return Err(bad(ln, "unknown edge kind")),
                };
                let a = DetectorId::new(s1.parse().map_err(|_| bad(ln, "bad space"))?, parse_time(t1, ln)?.0);
                let b = if *s2 == "B" {
                    match *t2 {
                        "L" => Err(Side::Left),
                        "R" => Err(Side::Right),
                        _ => return Err(bad(ln, "boundary side must be L or R")),
                    }
                } else {
                    Ok(DetectorId::new(s2.parse().map_err(|_| bad(ln, "bad space"))?, parse_time(t2, ln)?.0))
                };
                let p: f64 = p.parse().map_err(|_| bad(ln, "bad probability"))?;
                raw_edges.push((ln, kind, a, b, p));
            }
            _ => return Err(bad(ln, "unrecognized line")),
        }
    }
    let d = d.ok_or_else(|| Error::Format("missing d in header".into()))?;
    let cycles = cycles.ok_or_else(|| Error::Format("missing cycles in header".into()))?;
    let mut g = MatchingGraph::from_parts(d, cycles, nodes, vec![])?;
    let mut edges = Vec::with_capacity(raw_edges.len());
    for (ln, kind, a, b, p) in raw_edges {
        let ai = g.node_index(a).ok_or_else(|| bad(ln, "unknown detector"))?;
        let (b, qubits) = match b {
            Err(Side::Left) => (Endpoint::Boundary(Side::Left), 1u64),
            Err(Side::Right) => (Endpoint::Boundary(Side::Right), 1u64 << (d - 1)),
            Ok(id) => {
                let bi = g.node_index(id).ok_or_else(|| bad(ln, "unknown detector"))?;
                let q = if id.space == a.space { 0 } else { 1u64 << id.space.max(a.space) };
                (Endpoint::Node(bi), q)
            }
        };
        edges.push(Edge { a: ai, b, kind, p, w: weight_from_prob(p)?, qubits });
    }
    g.edges = edges;
    g.reindex()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{merge_edges_for_erasure, Cluster};

    #[test]
    fn round_trip() {
        let mut g = MatchingGraph::structure(4, 3, 0.1).unwrap();
        for (k, e) in g.edges.iter_mut().enumerate() {
            e.p = 0.001 * (k + 1) as f64;
            e.w = weight_from_prob(e.p).unwrap();
        }
        let g = merge_edges_for_erasure(&g, &[Cluster { space: 1, first: 0, last: 1 }], None).unwrap();
        let mut buf = Vec::new();
        write_graph_text(&g, &mut buf).unwrap();
        let back = read_graph_text(&buf[..]).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn golden_small_graph() {
        let g = MatchingGraph::structure(2, 1, 0.25).unwrap();
        let mut buf = Vec::new();
        write_graph_text(&g, &mut buf).unwrap();
        let want = "# catrep-graph d=2 cycles=1\nN 0 0\nN 0 1\nB 0 0 B L 0.25\nB 0 0 B R 0.25\nT 0 0 0 1 0.25\nB 0 1 B L 0.25\nB 0 1 B R 0.25\n";
        assert_eq!(String::from_utf8(buf).unwrap(), want);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_graph_text("# catrep-graph d=2 cycles=1\nX 1 2\n".as_bytes()).is_err());
        assert!(read_graph_text("N 0 0\n".as_bytes()).is_err());
    }
}
