use serde::Serialize;

use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeSummary {
    pub max: u64,
    pub mean: f64,
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    /// `histogram[0]` counts degree 0; `histogram[b]` for b >= 1 counts
    /// degrees in `[2^(b-1), 2^b)`.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    /// Node ids in ascending order; the degree vectors are aligned with it.
    pub ids: Vec<NodeId>,
    pub in_degree: Vec<u64>,
    pub out_degree: Vec<u64>,
    pub num_edges: u64,
    pub in_summary: DegreeSummary,
    pub out_summary: DegreeSummary,
}

impl DegreeStats {
    pub fn in_of(&self, id: NodeId) -> Option<u64> {
        self.ids.binary_search(&id).ok().map(|i| self.in_degree[i])
    }

    pub fn out_of(&self, id: NodeId) -> Option<u64> {
        self.ids.binary_search(&id).ok().map(|i| self.out_degree[i])
    }
}

fn log_bucket(d: u64) -> usize {
    if d == 0 {
        0
    } else {
        64 - d.leading_zeros() as usize
    }
}

fn summarize(degrees: &[u64]) -> DegreeSummary {
    let mut sorted = degrees.to_vec();
    sorted.sort_unstable();
    let pct = |p: f64| -> u64 {
        if sorted.is_empty() {
            return 0;
        }
        let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        sorted[rank - 1]
    };
    let max = sorted.last().copied().unwrap_or(0);
    let mut histogram = vec![0u64; log_bucket(max) + 1];
    for &d in degrees {
        histogram[log_bucket(d)] += 1;
    }
    let mean = if degrees.is_empty() {
        0.0
    } else {
        degrees.iter().sum::<u64>() as f64 / degrees.len() as f64
    };
    DegreeSummary {
        max,
        mean,
        p50: pct(0.5),
        p90: pct(0.9),
        p99: pct(0.99),
        histogram,
    }
}

pub fn compute_degree_stats(graph: &Graph) -> DegreeStats {
    let ids: Vec<NodeId> = graph.node_ids().collect();
    let mut in_degree = vec![0u64; ids.len()];
    let mut out_degree = vec![0u64; ids.len()];
    for (i, n) in graph.nodes().enumerate() {
        out_degree[i] = n.out_nbrs.len() as u64;
        for e in &n.out_nbrs {
            if let Ok(j) = ids.binary_search(&e.dst) {
                in_degree[j] += 1;
            }
        }
    }
    DegreeStats {
        in_summary: summarize(&in_degree),
        out_summary: summarize(&out_degree),
        num_edges: graph.num_edges() as u64,
        ids,
        in_degree,
        out_degree,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, IngestOptions};

    #[test]
    fn star_degrees() {
        let mut b = GraphBuilder::new(1);
        for i in 0..6u64 {
            b.add_node(i.into(), vec![0.0]).unwrap();
        }
        for i in 1..6u64 {
            b.add_edge(0, i, vec![]).unwrap();
        }
        let g = b.build(&IngestOptions::default()).unwrap();
        let s = compute_degree_stats(&g);
        assert_eq!(s.out_of(0.into()), Some(5));
        assert_eq!(s.in_of(3.into()), Some(1));
        assert_eq!(s.in_of(0.into()), Some(0));
        assert_eq!(s.out_summary.max, 5);
        // five leaves with out-degree 0, one centre in bucket [4, 8)
        assert_eq!(s.out_summary.histogram, vec![5, 0, 0, 1]);
    }

    #[test]
    fn empty_edge_set() {
        let mut b = GraphBuilder::new(1);
        for i in 0..4u64 {
            b.add_node(i.into(), vec![0.0]).unwrap();
        }
        let g = b.build(&IngestOptions::default()).unwrap();
        let s = compute_degree_stats(&g);
        assert!(s.in_degree.iter().chain(&s.out_degree).all(|&d| d == 0));
        assert_eq!(s.num_edges, 0);
    }
}
