use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;

use crate::error::Result;
use crate::gas::{fused_forward, ModelBundle};
use crate::graph::{Graph, NodeId};
use crate::output::OutputRow;

/// In-edges of every node with their features, sorted by source.
pub struct InEdgeIndex<'g> {
    lists: BTreeMap<NodeId, Vec<(NodeId, &'g [f32])>>,
}

impl<'g> InEdgeIndex<'g> {
    pub fn new(graph: &'g Graph) -> Self {
        let mut lists: BTreeMap<NodeId, Vec<(NodeId, &'g [f32])>> =
            graph.node_ids().map(|id| (id, Vec::new())).collect();
        for n in graph.nodes() {
            for e in &n.out_nbrs {
                if let Some(l) = lists.get_mut(&e.dst) {
                    l.push((n.id, e.features.as_slice()));
                }
            }
        }
        InEdgeIndex { lists }
    }

    pub fn in_edges(&self, id: NodeId) -> &[(NodeId, &'g [f32])] {
        self.lists.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The subgraph induced by every node within `depth` in-hops of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct KHopNeighborhood {
    pub target: NodeId,
    pub depth: usize,
    /// `hops[d]` holds the nodes at shortest in-distance exactly `d`.
    pub hops: Vec<Vec<NodeId>>,
    pub distance: BTreeMap<NodeId, usize>,
    pub features: BTreeMap<NodeId, Vec<f32>>,
    /// Out-degree in the full graph, which degree-normalized layers need.
    pub out_degree: BTreeMap<NodeId, usize>,
    /// Induced in-edges `(src, features)` per included node, by source.
    pub in_edges: BTreeMap<NodeId, Vec<(NodeId, Vec<f32>)>>,
}

impl KHopNeighborhood {
    pub fn build(graph: &Graph, target: NodeId, depth: usize) -> Self {
        Self::build_with(graph, &InEdgeIndex::new(graph), target, depth)
    }

    /// Reverse breadth-first search over in-edges.
    pub fn build_with(
        graph: &Graph,
        index: &InEdgeIndex<'_>,
        target: NodeId,
        depth: usize,
    ) -> Self {
        let mut distance = BTreeMap::from([(target, 0usize)]);
        let mut hops = vec![vec![target]];
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            let d = distance[&v];
            if d == depth {
                continue;
            }
            for &(u, _) in index.in_edges(v) {
                if let std::collections::btree_map::Entry::Vacant(slot) = distance.entry(u) {
                    slot.insert(d + 1);
                    if hops.len() <= d + 1 {
                        hops.push(Vec::new());
                    }
                    hops[d + 1].push(u);
                    queue.push_back(u);
                }
            }
        }
        for h in hops.iter_mut() {
            h.sort();
        }
        let mut features = BTreeMap::new();
        let mut out_degree = BTreeMap::new();
        let mut in_edges = BTreeMap::new();
        for &id in distance.keys() {
            let rec = graph.node(id).expect("reached nodes exist");
            features.insert(id, rec.features.clone());
            out_degree.insert(id, rec.logical_out_degree());
            let induced: Vec<(NodeId, Vec<f32>)> = index
                .in_edges(id)
                .iter()
                .filter(|(u, _)| distance.contains_key(u))
                .map(|(u, f)| (*u, f.to_vec()))
                .collect();
            in_edges.insert(id, induced);
        }
        KHopNeighborhood {
            target,
            depth,
            hops,
            distance,
            features,
            out_degree,
            in_edges,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.distance.len()
    }

    pub fn num_edges(&self) -> usize {
        self.in_edges.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Ascending by id.
    pub rows: Vec<OutputRow>,
    /// Edge messages plus node updates evaluated over all targets.
    pub cost: u64,
}

/// Ground truth by brute force: extract each target's `K`-hop neighborhood
/// and run the model on it in isolation. `targets = None` means every node.
pub fn oracle_khop_forward(
    graph: &Graph,
    model: &ModelBundle,
    targets: Option<&[NodeId]>,
) -> Result<OracleResult> {
    model.validate()?;
    let k = model.num_layers();
    let index = InEdgeIndex::new(graph);
    let ids: Vec<NodeId> = match targets {
        Some(t) => t.to_vec(),
        None => graph.node_ids().collect(),
    };
    let preds = ids
        .par_iter()
        .map(|&id| {
            let nb = KHopNeighborhood::build_with(graph, &index, id, k);
            fused_forward(model, &nb)
        })
        .collect::<Result<Vec<_>>>()?;
    let cost = preds.iter().map(|p| p.cost).sum();
    let mut rows: Vec<OutputRow> = preds
        .into_iter()
        .map(|p| OutputRow {
            id: p.target,
            class: p.class,
            logits: p.logits,
        })
        .collect();
    rows.sort_by_key(|r| r.id);
    Ok(OracleResult { rows, cost })
}
