//! Layer abstraction split into gather, aggregate, apply_node, apply_edge and
//! scatter stages, plus the built-in GraphSAGE, GAT and GCN layers.

mod aggregate;
mod fused;
mod layer;
mod model;

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeRecord};
use crate::math::DenseVector;

pub use aggregate::{aggregate_finalize, aggregate_merge, AggregateKind, AggregateState, Gathered};
pub(crate) use fused::gather_direct;
pub use fused::{fused_forward, FusedPrediction};
pub use layer::{Algorithm, GnnLayer, LayerParams, LayerSignature, NodeContext, ATTENTION_SLOPE};
pub use model::{
    argmax, load_model, model_from_json, model_to_json, predict, save_model, seeded_random_model,
    Head, ModelBundle, ModelDims, MODEL_FORMAT_VERSION,
};

/// Embedding of a node after `layer_index` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub embedding: DenseVector,
    pub layer_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(DenseVector),
    /// Sender-side partial aggregate of several messages to one destination.
    Partial(AggregateState),
    /// Stand-in for a payload registered once per destination worker.
    BroadcastRef(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub dst: NodeId,
    pub src: NodeId,
    pub payload: Payload,
}

/// Initial state: the raw features, unchanged.
pub fn init_embedding(layer0: &GnnLayer, record: &NodeRecord) -> Result<NodeState> {
    if record.features.len() != layer0.input_dim() {
        return Err(Error::DimMismatch {
            expected: layer0.input_dim(),
            actual: record.features.len(),
            context: "node features",
        });
    }
    Ok(NodeState {
        embedding: DenseVector::new(record.features.clone()),
        layer_index: 0,
    })
}
