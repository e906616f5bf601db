use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeRecord, OutEdge};

/// Most mirrors one node can be split into (the group index is a `u8`).
pub const MAX_MIRRORS: usize = 256;

/// Split of every hub's out-edges into mirror groups.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShadowPlan {
    pub threshold: usize,
    /// Split node to the physical destinations of each of its mirrors.
    pub groups: BTreeMap<NodeId, Vec<Vec<NodeId>>>,
    /// False for a capped plan, which does not bound mirrors or nodes
    /// pointing at hubs.
    pub bounded: bool,
}

impl ShadowPlan {
    pub fn num_groups(&self, id: NodeId) -> usize {
        self.groups.get(&id).map_or(1, Vec::len)
    }

    pub fn group_sizes(&self, id: NodeId) -> Vec<usize> {
        self.groups
            .get(&id)
            .map(|g| g.iter().map(Vec::len).collect())
            .unwrap_or_default()
    }
}

/// Mirror count per node, grown until every node's out-degree, counted
/// after edges into split nodes fan out to all their mirrors, fits within
/// `threshold` per mirror. Counts only ever grow, so this terminates.
fn mirror_counts(graph: &Graph, threshold: usize) -> Result<BTreeMap<NodeId, usize>> {
    let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
    loop {
        let mut changed = false;
        for n in graph.nodes() {
            let expanded: usize = n
                .out_nbrs
                .iter()
                .map(|e| counts.get(&e.dst).copied().unwrap_or(1))
                .sum();
            let need = expanded.div_ceil(threshold).max(1);
            if need > counts.get(&n.id).copied().unwrap_or(1) {
                if need > MAX_MIRRORS {
                    return Err(Error::TooManyMirrors {
                        node: n.id,
                        groups: need,
                    });
                }
                counts.insert(n.id, need);
                changed = true;
            }
        }
        if !changed {
            return Ok(counts);
        }
    }
}

/// Split nodes into mirrors `id#0..id#n-1` so that no physical record has
/// more than `threshold` out-edges.
///
/// Every mirror keeps all in-edges: an edge `u -> v` into a split node
/// becomes `u -> v#g` for each group `g`. A node is split when its out-list
/// after that expansion exceeds the threshold, which can cascade to nodes
/// pointing at hubs. The expanded list is dealt round-robin in destination
/// order, so group sizes differ by at most one. Records whose out-list
/// changed remember their original out-degree.
pub fn plan_shadow_nodes(graph: &Graph, threshold: usize) -> Result<(ShadowPlan, Graph)> {
    check_input(graph, threshold)?;
    let counts = mirror_counts(graph, threshold)?;
    Ok(build_plan(graph, threshold, &counts, true))
}

/// Fallback for when [`plan_shadow_nodes`] would need more than
/// [`MAX_MIRRORS`] copies of some node: splits only nodes whose own
/// out-degree exceeds the threshold, into at most `MAX_MIRRORS` groups, with
/// no cascade. Outputs are unchanged but the degree bound is not guaranteed.
pub fn plan_shadow_nodes_capped(graph: &Graph, threshold: usize) -> Result<(ShadowPlan, Graph)> {
    check_input(graph, threshold)?;
    let counts = graph
        .nodes()
        .filter(|n| n.out_nbrs.len() > threshold)
        .map(|n| (n.id, n.out_nbrs.len().div_ceil(threshold).min(MAX_MIRRORS)))
        .collect();
    Ok(build_plan(graph, threshold, &counts, false))
}

fn check_input(graph: &Graph, threshold: usize) -> Result<()> {
    if threshold == 0 {
        return Err(Error::InvalidArgument(
            "shadow threshold must be at least 1".into(),
        ));
    }
    if let Some(n) = graph.nodes().find(|n| !n.id.is_physical()) {
        return Err(Error::InvalidArgument(format!(
            "graph already contains mirror {}",
            n.id
        )));
    }
    Ok(())
}

fn build_plan(
    graph: &Graph,
    threshold: usize,
    counts: &BTreeMap<NodeId, usize>,
    bounded: bool,
) -> (ShadowPlan, Graph) {
    let expand = |n: &NodeRecord| -> Vec<OutEdge> {
        let mut out = Vec::new();
        for e in &n.out_nbrs {
            match counts.get(&e.dst) {
                Some(&k) => out.extend((0..k).map(|g| OutEdge {
                    dst: NodeId::mirror(e.dst.raw, g as u8),
                    features: e.features.clone(),
                })),
                None => out.push(e.clone()),
            }
        }
        out.sort_by_key(|e| e.dst);
        out
    };

    let mut plan = ShadowPlan {
        threshold,
        groups: BTreeMap::new(),
        bounded,
    };
    let mut records = BTreeMap::new();
    for n in graph.nodes() {
        let deg = n.out_nbrs.len();
        let out = expand(n);
        match counts.get(&n.id) {
            Some(&count) => {
                let mut shares = vec![Vec::new(); count];
                for (i, e) in out.into_iter().enumerate() {
                    shares[i % count].push(e);
                }
                plan.groups.insert(
                    n.id,
                    shares
                        .iter()
                        .map(|s| s.iter().map(|e| e.dst).collect())
                        .collect(),
                );
                for (g, share) in shares.into_iter().enumerate() {
                    let id = NodeId::mirror(n.id.raw, g as u8);
                    records.insert(
                        id,
                        NodeRecord {
                            id,
                            features: n.features.clone(),
                            out_nbrs: share,
                            original_out_degree: Some(deg),
                        },
                    );
                }
            }
            None => {
                let changed = out.len() != deg;
                records.insert(
                    n.id,
                    NodeRecord {
                        id: n.id,
                        features: n.features.clone(),
                        out_nbrs: out,
                        original_out_degree: changed.then_some(deg),
                    },
                );
            }
        }
    }
    let rewritten = Graph::from_records(graph.feature_dim(), graph.edge_feature_dim(), records);
    (plan, rewritten)
}
