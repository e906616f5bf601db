use std::collections::BTreeMap;

use crate::gas::NodeState;
use crate::graph::{Graph, NodeId, NodeRecord};
use crate::rng::mix64;

/// Worker owning `id` among `num_workers`.
///
/// Physical nodes use `raw mod W`. Mirrors hash `(raw, group)` so the
/// mirrors of one hub spread over workers instead of sharing the hub's slot.
pub fn partition_of(id: NodeId, num_workers: usize) -> usize {
    assert!(num_workers >= 1, "num_workers must be positive");
    let w = num_workers as u64;
    match id.mirror {
        None => (id.raw % w) as usize,
        Some(g) => (mix64(id.raw ^ mix64(u64::from(g) + 1)) % w) as usize,
    }
}

/// One worker's share of the graph: its nodes with all their out-edges, and
/// the per-node state the backend maintains between supersteps.
#[derive(Debug, Clone, Default)]
pub struct GraphPartition {
    pub worker_id: usize,
    pub nodes: BTreeMap<NodeId, NodeRecord>,
    pub node_state: BTreeMap<NodeId, NodeState>,
}

impl GraphPartition {
    pub fn num_edges(&self) -> usize {
        self.nodes.values().map(|n| n.out_nbrs.len()).sum()
    }
}

pub fn partition_graph(graph: &Graph, num_workers: usize) -> Vec<GraphPartition> {
    let mut parts: Vec<GraphPartition> = (0..num_workers)
        .map(|w| GraphPartition {
            worker_id: w,
            ..Default::default()
        })
        .collect();
    for rec in graph.nodes() {
        parts[partition_of(rec.id, num_workers)]
            .nodes
            .insert(rec.id, rec.clone());
    }
    parts
}
