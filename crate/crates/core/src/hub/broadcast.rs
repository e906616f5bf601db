use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::gas::{Message, Payload};
use crate::graph::NodeId;
use crate::math::DenseVector;

/// Payloads published for one step at one worker, keyed by sender.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BroadcastRegistry {
    entries: BTreeMap<NodeId, DenseVector>,
}

impl BroadcastRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, src: NodeId, payload: DenseVector) {
        self.entries.insert(src, payload);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn get(&self, src: NodeId) -> Option<&DenseVector> {
        self.entries.get(&src)
    }

    pub fn entries(&self) -> impl Iterator<Item = (NodeId, &DenseVector)> + '_ {
        self.entries.iter().map(|(s, p)| (*s, p))
    }
}

/// Output of encoding one hub's uniform message.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastEncoding {
    /// One `(destination worker, payload)` per worker hosting an out-neighbor.
    pub entries: Vec<(usize, DenseVector)>,
    /// One reference per out-edge, in out-edge order.
    pub refs: Vec<Message>,
}

/// Replace per-edge copies of `payload` with one entry per destination
/// worker and a reference per edge.
pub fn broadcast_encode(
    src: NodeId,
    payload: &DenseVector,
    dsts: &[NodeId],
    owner: impl Fn(NodeId) -> usize,
) -> BroadcastEncoding {
    let workers: BTreeSet<usize> = dsts.iter().map(|&d| owner(d)).collect();
    BroadcastEncoding {
        entries: workers.into_iter().map(|w| (w, payload.clone())).collect(),
        refs: dsts
            .iter()
            .map(|&dst| Message {
                dst,
                src,
                payload: Payload::BroadcastRef(src),
            })
            .collect(),
    }
}

/// Dense payload behind a reference.
pub fn broadcast_resolve(src: NodeId, registry: &BroadcastRegistry) -> Result<&DenseVector> {
    registry.get(src).ok_or(Error::UnresolvedBroadcast(src))
}
