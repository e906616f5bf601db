//! Synthetic graphs whose in- or out-degree follows a discrete power law.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{
    write_edge_table, write_node_table, Graph, GraphBuilder, IngestOptions, NodeId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SkewMode {
    In,
    Out,
    Both,
}

impl std::str::FromStr for SkewMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "in" => Ok(SkewMode::In),
            "out" => Ok(SkewMode::Out),
            "both" => Ok(SkewMode::Both),
            other => Err(format!("unknown skew mode {other:?} (in|out|both)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawConfig {
    pub num_nodes: usize,
    pub target_edges: usize,
    pub exponent: f64,
    pub skew: SkewMode,
    pub feature_dim: usize,
    pub edge_feature_dim: usize,
    pub num_classes: u32,
    pub seed: u64,
}

impl Default for PowerLawConfig {
    fn default() -> Self {
        PowerLawConfig {
            num_nodes: 1000,
            target_edges: 10_000,
            exponent: 2.1,
            skew: SkewMode::In,
            feature_dim: 16,
            edge_feature_dim: 0,
            num_classes: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedGraph {
    pub graph: Graph,
    /// One label per node, aligned with ascending node id.
    pub labels: Vec<u32>,
}

/// Inverse-CDF draw from `P(d) ∝ d^-alpha`, `d >= 1`.
fn draw_degree(rng: &mut ChaCha8Rng, alpha: f64, cap: usize) -> f64 {
    let u: f64 = rng.gen();
    let d = (1.0 - u).powf(-1.0 / (alpha - 1.0)).floor();
    d.clamp(1.0, cap as f64)
}

/// Split `total` into integers proportional to `weights`, none above `cap`.
fn apportion(weights: &[f64], total: usize, cap: usize) -> Vec<usize> {
    let n = weights.len();
    let mut share = vec![0.0f64; n];
    let mut fixed = vec![false; n];
    let mut remaining = total as f64;
    loop {
        let free_weight: f64 = (0..n).filter(|&i| !fixed[i]).map(|i| weights[i]).sum();
        if free_weight <= 0.0 {
            break;
        }
        let scale = remaining / free_weight;
        let mut capped_any = false;
        for i in 0..n {
            if !fixed[i] && weights[i] * scale > cap as f64 {
                fixed[i] = true;
                share[i] = cap as f64;
                remaining -= cap as f64;
                capped_any = true;
            }
        }
        if !capped_any {
            for i in 0..n {
                if !fixed[i] {
                    share[i] = weights[i] * scale;
                }
            }
            break;
        }
    }
    let mut out: Vec<usize> = share.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..n).filter(|&i| out[i] < cap).collect();
    order.sort_by(|&a, &b| {
        let fa = share[a] - share[a].floor();
        let fb = share[b] - share[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut deficit = total.saturating_sub(assigned);
    // Leftover units go to the largest remainders; a second pass covers
    // rounding shortfalls when many shares sit exactly at integers.
    while deficit > 0 {
        let before = deficit;
        for &i in &order {
            if deficit == 0 {
                break;
            }
            if out[i] < cap {
                out[i] += 1;
                deficit -= 1;
            }
        }
        if deficit == before {
            break;
        }
    }
    out
}

/// Sample `count` distinct nodes other than `exclude` uniformly.
fn sample_others(rng: &mut ChaCha8Rng, n: usize, exclude: usize, count: usize) -> Vec<usize> {
    index::sample(rng, n - 1, count)
        .into_iter()
        .map(|i| if i >= exclude { i + 1 } else { i })
        .collect()
}

pub fn generate_power_law(config: &PowerLawConfig) -> Result<GeneratedGraph> {
    let n = config.num_nodes;
    if n < 2 {
        return Err(Error::InvalidArgument(
            "num_nodes must be at least 2".into(),
        ));
    }
    if config.exponent.partial_cmp(&1.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument(
            "exponent must be greater than 1".into(),
        ));
    }
    let max_edges = n.saturating_mul(n - 1);
    if config.target_edges > max_edges {
        return Err(Error::InvalidArgument(format!(
            "{} edges cannot fit in a simple directed graph on {n} nodes",
            config.target_edges
        )));
    }
    if config.num_classes == 0 {
        return Err(Error::InvalidArgument(
            "num_classes must be positive".into(),
        ));
    }
    let m = config.target_edges;
    let cap = n - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let skewed: Vec<f64> = (0..n)
        .map(|_| draw_degree(&mut rng, config.exponent, cap))
        .collect();
    let degrees = apportion(&skewed, m, cap);

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(m);
    match config.skew {
        SkewMode::In => {
            for (v, &d) in degrees.iter().enumerate() {
                for u in sample_others(&mut rng, n, v, d) {
                    edges.push((u, v));
                }
            }
        }
        SkewMode::Out => {
            for (u, &d) in degrees.iter().enumerate() {
                for v in sample_others(&mut rng, n, u, d) {
                    edges.push((u, v));
                }
            }
        }
        SkewMode::Both => {
            // Out-degrees follow `degrees`; destinations are drawn in
            // proportion to an independent power-law weight sequence.
            let in_weights: Vec<f64> = (0..n)
                .map(|_| draw_degree(&mut rng, config.exponent, cap))
                .collect();
            let picker = WeightedIndex::new(&in_weights).expect("positive weights");
            let mut taken = std::collections::HashSet::new();
            for (u, &d) in degrees.iter().enumerate() {
                taken.clear();
                taken.insert(u);
                let mut attempts = 0usize;
                while taken.len() - 1 < d && attempts < 8 * d + 64 {
                    taken.insert(picker.sample(&mut rng));
                    attempts += 1;
                }
                let mut chosen: Vec<usize> = taken.iter().copied().filter(|&v| v != u).collect();
                if chosen.len() < d {
                    // Dense rows: finish with uniform picks among the rest.
                    let rest: Vec<usize> = (0..n).filter(|v| !taken.contains(v)).collect();
                    for i in index::sample(&mut rng, rest.len(), d - chosen.len()) {
                        chosen.push(rest[i]);
                    }
                }
                chosen.sort_unstable();
                edges.extend(chosen.into_iter().map(|v| (u, v)));
            }
        }
    }

    let mut builder =
        GraphBuilder::new(config.feature_dim).with_edge_feature_dim(config.edge_feature_dim);
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let feats: Vec<f32> = (0..config.feature_dim)
            .map(|_| rng.gen_range(-1.0f32..1.0))
            .collect();
        builder.add_node(NodeId::new(v as u64), feats)?;
        labels.push(rng.gen_range(0..config.num_classes));
    }
    edges.sort_unstable();
    for (u, v) in edges {
        let feats: Vec<f32> = (0..config.edge_feature_dim)
            .map(|_| rng.gen_range(-1.0f32..1.0))
            .collect();
        builder.add_edge(u as u64, v as u64, feats)?;
    }
    let graph = builder.build(&IngestOptions::default())?;
    Ok(GeneratedGraph { graph, labels })
}

/// Write `nodes.tsv`, `edges.tsv` and `labels.tsv` into `out_dir`.
pub fn write_generated(generated: &GeneratedGraph, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_node_table(&generated.graph, dir.join("nodes.tsv"))?;
    write_edge_table(&generated.graph, dir.join("edges.tsv"))?;
    let path = dir.join("labels.tsv");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for (id, label) in generated.graph.node_ids().zip(&generated.labels) {
        writeln!(w, "{id}\t{label}").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::compute_degree_stats;

    #[test]
    fn apportion_hits_total_under_cap() {
        let d = apportion(&[1.0, 1.0, 100.0], 10, 4);
        assert_eq!(d.iter().sum::<usize>(), 10);
        assert!(d.iter().all(|&x| x <= 4));
        assert_eq!(d[2], 4);
    }

    #[test]
    fn zero_edges_gives_isolated_nodes() {
        let g = generate_power_law(&PowerLawConfig {
            num_nodes: 10,
            target_edges: 0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(g.graph.num_nodes(), 10);
        assert_eq!(g.graph.num_edges(), 0);
    }

    #[test]
    fn edge_count_and_conservation() {
        for skew in [SkewMode::In, SkewMode::Out, SkewMode::Both] {
            let g = generate_power_law(&PowerLawConfig {
                num_nodes: 1000,
                target_edges: 10_000,
                skew,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(g.graph.num_edges(), 10_000, "{skew:?}");
            let s = compute_degree_stats(&g.graph);
            assert_eq!(s.in_degree.iter().sum::<u64>(), 10_000);
            assert_eq!(s.out_degree.iter().sum::<u64>(), 10_000);
            assert!(g.labels.iter().all(|&l| l < 2));
        }
    }

    #[test]
    fn skewed_side_is_heavy_tailed() {
        let g = generate_power_law(&PowerLawConfig {
            num_nodes: 1000,
            target_edges: 10_000,
            skew: SkewMode::In,
            ..Default::default()
        })
        .unwrap();
        let s = compute_degree_stats(&g.graph);
        // Uniform sources keep out-degrees concentrated; the in side has hubs.
        assert!(
            s.in_summary.max > 5 * s.out_summary.max / 2,
            "{} vs {}",
            s.in_summary.max,
            s.out_summary.max
        );
        assert!(s.in_summary.p50 < 10);
    }

    #[test]
    fn deterministic_tables() {
        let cfg = PowerLawConfig {
            num_nodes: 1000,
            target_edges: 10_000,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        write_generated(&generate_power_law(&cfg).unwrap(), &a).unwrap();
        write_generated(&generate_power_law(&cfg).unwrap(), &b).unwrap();
        for f in ["nodes.tsv", "edges.tsv", "labels.tsv"] {
            assert_eq!(
                std::fs::read(a.join(f)).unwrap(),
                std::fs::read(b.join(f)).unwrap()
            );
        }
    }

    #[test]
    fn rejects_infeasible() {
        let bad = PowerLawConfig {
            num_nodes: 3,
            target_edges: 7,
            ..Default::default()
        };
        assert!(generate_power_law(&bad).is_err());
        let bad = PowerLawConfig {
            exponent: 1.0,
            ..Default::default()
        };
        assert!(generate_power_law(&bad).is_err());
    }
}
