//! Graph data model: node identifiers, node records with materialized
//! out-adjacency, ingestion from node/edge tables, hash partitioning, degree
//! statistics and a synthetic power-law generator.

mod degree;
mod generator;
mod io;
mod partition;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use degree::{compute_degree_stats, DegreeStats, DegreeSummary};
pub use generator::{
    generate_power_law, write_generated, GeneratedGraph, PowerLawConfig, SkewMode,
};
pub use io::{ingest_tables, write_edge_table, write_node_table, IngestOptions};
pub use partition::{partition_graph, partition_of, GraphPartition};

/// Raw node features (`x_v`) or edge features (`e_{v,u}`).
pub type FeatureVector = Vec<f32>;

/// Node identifier. Physical nodes have no mirror group; shadow mirrors of a
/// hub carry the group index they were split into.
///
/// Ordering is by `raw` first, then by mirror group with the physical node
/// sorting before group 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub raw: u64,
    pub mirror: Option<u8>,
}

impl NodeId {
    pub const fn new(raw: u64) -> Self {
        NodeId { raw, mirror: None }
    }

    pub const fn mirror(raw: u64, group: u8) -> Self {
        NodeId {
            raw,
            mirror: Some(group),
        }
    }

    pub fn is_physical(&self) -> bool {
        self.mirror.is_none()
    }

    /// The physical node this id stands for.
    pub fn physical(&self) -> NodeId {
        NodeId::new(self.raw)
    }
}

impl From<u64> for NodeId {
    fn from(raw: u64) -> Self {
        NodeId::new(raw)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mirror {
            None => write!(f, "{}", self.raw),
            Some(g) => write!(f, "{}#{}", self.raw, g),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        let (raw, group) = match s.split_once('#') {
            Some((r, g)) => (r, Some(g)),
            None => (s, None),
        };
        let raw = raw
            .parse::<u64>()
            .map_err(|e| format!("bad node id {s:?}: {e}"))?;
        let mirror = match group {
            Some(g) => Some(
                g.parse::<u8>()
                    .map_err(|e| format!("bad mirror group in {s:?}: {e}"))?,
            ),
            None => None,
        };
        Ok(NodeId { raw, mirror })
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutEdge {
    pub dst: NodeId,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub features: FeatureVector,
    /// Sorted by destination id.
    pub out_nbrs: Vec<OutEdge>,
    /// Out-degree of the node before shadow rewriting, when it differs from
    /// `out_nbrs.len()`. Degree-normalized layers use the logical degree.
    pub original_out_degree: Option<usize>,
}

impl NodeRecord {
    pub fn new(id: NodeId, features: FeatureVector) -> Self {
        NodeRecord {
            id,
            features,
            out_nbrs: Vec::new(),
            original_out_degree: None,
        }
    }

    pub fn logical_out_degree(&self) -> usize {
        self.original_out_degree.unwrap_or(self.out_nbrs.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub src: NodeId,
    pub dst: NodeId,
    pub features: FeatureVector,
}

/// An immutable directed attributed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    feature_dim: usize,
    edge_feature_dim: usize,
    nodes: BTreeMap<NodeId, NodeRecord>,
    num_edges: usize,
}

impl Graph {
    pub(crate) fn from_records(
        feature_dim: usize,
        edge_feature_dim: usize,
        nodes: BTreeMap<NodeId, NodeRecord>,
    ) -> Self {
        let num_edges = nodes.values().map(|n| n.out_nbrs.len()).sum();
        Graph {
            feature_dim,
            edge_feature_dim,
            nodes,
            num_edges,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_feature_dim
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(&id)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &NodeRecord> + '_ {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeRecord> + '_ {
        self.nodes.values().flat_map(|n| {
            n.out_nbrs.iter().map(move |e| EdgeRecord {
                src: n.id,
                dst: e.dst,
                features: e.features.clone(),
            })
        })
    }

    /// In-neighbor lists, each sorted by source id.
    pub fn in_adjacency(&self) -> BTreeMap<NodeId, Vec<NodeId>> {
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> =
            self.nodes.keys().map(|&id| (id, Vec::new())).collect();
        // Sources are visited in ascending order, so every list ends up sorted.
        for n in self.nodes.values() {
            for e in &n.out_nbrs {
                if let Some(list) = adj.get_mut(&e.dst) {
                    list.push(n.id);
                }
            }
        }
        adj
    }

    pub fn max_out_degree(&self) -> usize {
        self.nodes
            .values()
            .map(|n| n.out_nbrs.len())
            .max()
            .unwrap_or(0)
    }

    pub fn into_records(self) -> BTreeMap<NodeId, NodeRecord> {
        self.nodes
    }
}

/// Incremental construction of a [`Graph`] with the ingestion rules applied:
/// duplicate edges and (unless enabled) self-loops are rejected, edges must
/// reference known nodes, and all feature vectors share one length.
#[derive(Debug)]
pub struct GraphBuilder {
    feature_dim: usize,
    edge_feature_dim: Option<usize>,
    nodes: BTreeMap<NodeId, NodeRecord>,
    pending: Vec<EdgeRecord>,
}

impl GraphBuilder {
    pub fn new(feature_dim: usize) -> Self {
        GraphBuilder {
            feature_dim,
            edge_feature_dim: None,
            nodes: BTreeMap::new(),
            pending: Vec::new(),
        }
    }

    pub fn with_edge_feature_dim(mut self, dim: usize) -> Self {
        self.edge_feature_dim = Some(dim);
        self
    }

    pub fn add_node(&mut self, id: NodeId, features: FeatureVector) -> Result<&mut Self> {
        if features.len() != self.feature_dim {
            return Err(Error::DimMismatch {
                expected: self.feature_dim,
                actual: features.len(),
                context: "node features",
            });
        }
        if self.nodes.contains_key(&id) {
            return Err(Error::DuplicateNode(id));
        }
        self.nodes.insert(id, NodeRecord::new(id, features));
        Ok(self)
    }

    pub fn add_edge(
        &mut self,
        src: impl Into<NodeId>,
        dst: impl Into<NodeId>,
        features: FeatureVector,
    ) -> Result<&mut Self> {
        let expected = *self.edge_feature_dim.get_or_insert(features.len());
        if features.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                actual: features.len(),
                context: "edge features",
            });
        }
        self.pending.push(EdgeRecord {
            src: src.into(),
            dst: dst.into(),
            features,
        });
        Ok(self)
    }

    pub fn build(self, options: &IngestOptions) -> Result<Graph> {
        let edge_dim = self.edge_feature_dim.unwrap_or(0);
        let mut nodes = self.nodes;
        for e in self.pending {
            if !nodes.contains_key(&e.dst) {
                return Err(Error::UnknownNode(e.dst));
            }
            if e.src == e.dst && !options.add_self_loops {
                return Err(Error::SelfLoop(e.src));
            }
            let rec = nodes.get_mut(&e.src).ok_or(Error::UnknownNode(e.src))?;
            rec.out_nbrs.push(OutEdge {
                dst: e.dst,
                features: e.features,
            });
        }
        for rec in nodes.values_mut() {
            rec.out_nbrs.sort_by_key(|e| e.dst);
            if let Some(w) = rec.out_nbrs.windows(2).find(|w| w[0].dst == w[1].dst) {
                return Err(Error::DuplicateEdge {
                    src: rec.id,
                    dst: w[0].dst,
                });
            }
        }

        let has_edge = |nodes: &BTreeMap<NodeId, NodeRecord>, s: NodeId, d: NodeId| {
            nodes[&s]
                .out_nbrs
                .binary_search_by_key(&d, |e| e.dst)
                .is_ok()
        };
        let mut additions = Vec::new();
        if options.add_reverse_edges {
            for rec in nodes.values() {
                for e in &rec.out_nbrs {
                    if !has_edge(&nodes, e.dst, rec.id) {
                        additions.push((e.dst, rec.id, e.features.clone()));
                    }
                }
            }
        }
        if options.add_self_loops {
            for rec in nodes.values() {
                if !has_edge(&nodes, rec.id, rec.id) {
                    additions.push((rec.id, rec.id, vec![0.0; edge_dim]));
                }
            }
        }
        if !additions.is_empty() {
            for (s, d, f) in additions {
                nodes
                    .get_mut(&s)
                    .expect("known node")
                    .out_nbrs
                    .push(OutEdge {
                        dst: d,
                        features: f,
                    });
            }
            for rec in nodes.values_mut() {
                rec.out_nbrs.sort_by_key(|e| e.dst);
                rec.out_nbrs.dedup_by_key(|e| e.dst);
            }
        }
        Ok(Graph::from_records(self.feature_dim, edge_dim, nodes))
    }
}
