//! Pieces shared by both execution backends: graph preparation, the
//! per-node scatter, sender-side combining and receiver-side gathering.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::gas::ModelBundle;
use crate::gas::{
    predict, AggregateKind, AggregateState, GnnLayer, Head, Message, NodeContext, NodeState,
    Payload,
};
use crate::graph::{Graph, NodeId, NodeRecord};
use crate::hub::{
    broadcast_encode, plan_shadow_nodes, plan_shadow_nodes_capped, LayerStrategy, ShadowPlan,
    StrategyConfig,
};
use crate::math::DenseVector;
use crate::metrics::RunMetrics;
use crate::output::OutputRow;

/// Result of a full-graph run on either backend.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    /// One row per physical node, ascending by id.
    pub rows: Vec<OutputRow>,
    pub metrics: RunMetrics,
    pub shadow: Option<ShadowPlan>,
    pub threshold: u64,
}

/// Graph as executed, after any shadow rewriting.
pub(crate) struct PreparedGraph<'a> {
    pub graph: Cow<'a, Graph>,
    pub shadow: Option<ShadowPlan>,
    pub threshold: u64,
}

pub(crate) fn prepare_graph<'a>(
    graph: &'a Graph,
    model: &ModelBundle,
    strategy: &StrategyConfig,
    workers: usize,
) -> Result<PreparedGraph<'a>> {
    model.validate()?;
    if workers == 0 {
        return Err(Error::InvalidArgument(
            "worker count must be at least 1".into(),
        ));
    }
    if graph.feature_dim() != model.feature_dim {
        return Err(Error::DimMismatch {
            expected: model.feature_dim,
            actual: graph.feature_dim(),
            context: "graph features vs model",
        });
    }
    let threshold = strategy.threshold(graph.num_edges(), workers);
    if strategy.shadow_nodes {
        let (plan, rewritten) = match plan_shadow_nodes(graph, threshold as usize) {
            Err(Error::TooManyMirrors { node, groups }) => {
                log::warn!(
                    "shadow nodes: bounded split needs {groups} copies of {node}; splitting only hubs (threshold {threshold})"
                );
                plan_shadow_nodes_capped(graph, threshold as usize)?
            }
            other => other?,
        };
        if !plan.groups.is_empty() {
            log::info!(
                "shadow nodes: {} hubs split (threshold {threshold})",
                plan.groups.len()
            );
            return Ok(PreparedGraph {
                graph: Cow::Owned(rewritten),
                shadow: Some(plan),
                threshold,
            });
        }
        return Ok(PreparedGraph {
            graph: Cow::Borrowed(graph),
            shadow: Some(plan),
            threshold,
        });
    }
    Ok(PreparedGraph {
        graph: Cow::Borrowed(graph),
        shadow: None,
        threshold,
    })
}

/// Messages and broadcast entries produced by scattering some nodes.
#[derive(Debug, Default)]
pub(crate) struct ScatterOut {
    pub messages: Vec<Message>,
    /// `(destination worker, src, payload)`.
    pub registry: Vec<(usize, NodeId, DenseVector)>,
}

/// Run `apply_edge` for every out-edge of `rec` and queue the results.
/// A uniform message is computed once; a hub's uniform message is broadcast
/// when the strategy allows.
pub(crate) fn scatter_node(
    layer: &GnnLayer,
    strategy: LayerStrategy,
    threshold: u64,
    rec: &NodeRecord,
    h: &[f32],
    owner: impl Fn(NodeId) -> usize,
    out: &mut ScatterOut,
) -> Result<()> {
    if rec.out_nbrs.is_empty() {
        return Ok(());
    }
    let ctx = NodeContext {
        out_degree: rec.logical_out_degree(),
    };
    if !layer.signature.message_uniform_over_out_edges {
        for e in &rec.out_nbrs {
            out.messages.push(Message {
                dst: e.dst,
                src: rec.id,
                payload: Payload::Dense(layer.apply_edge(h, ctx, &e.features)?),
            });
        }
        return Ok(());
    }
    let payload = layer.apply_edge(h, ctx, &rec.out_nbrs[0].features)?;
    if strategy.broadcast && rec.out_nbrs.len() as u64 > threshold {
        let dsts: Vec<NodeId> = rec.out_nbrs.iter().map(|e| e.dst).collect();
        let enc = broadcast_encode(rec.id, &payload, &dsts, owner);
        out.registry
            .extend(enc.entries.into_iter().map(|(w, p)| (w, rec.id, p)));
        out.messages.extend(enc.refs);
    } else {
        for e in &rec.out_nbrs {
            out.messages.push(Message {
                dst: e.dst,
                src: rec.id,
                payload: Payload::Dense(payload.clone()),
            });
        }
    }
    Ok(())
}

/// Fold one message into a running aggregate.
pub(crate) fn absorb_payload<'p>(
    state: &mut AggregateState,
    src: NodeId,
    payload: &Payload,
    lookup: &impl Fn(NodeId) -> Option<&'p DenseVector>,
) -> Result<()> {
    match payload {
        Payload::Dense(v) => state.absorb(src, v),
        Payload::Partial(p) => state.merge(p),
        Payload::BroadcastRef(s) => {
            let v = lookup(*s).ok_or(Error::UnresolvedBroadcast(*s))?;
            state.absorb(*s, v)
        }
    }
}

/// Merge every run of messages sharing a destination into one partial
/// aggregate. `msgs` must be sorted by destination. Lone messages pass
/// through unchanged. Returns the number of messages merged away.
pub(crate) fn combine_sorted<'p>(
    kind: AggregateKind,
    dim: usize,
    msgs: Vec<Message>,
    lookup: &impl Fn(NodeId) -> Option<&'p DenseVector>,
) -> Result<(Vec<Message>, u64)> {
    let before = msgs.len();
    let mut out: Vec<Message> = Vec::with_capacity(before);
    let mut iter = msgs.into_iter().peekable();
    while let Some(first) = iter.next() {
        if iter.peek().is_none_or(|m| m.dst != first.dst) {
            out.push(first);
            continue;
        }
        let mut state = AggregateState::empty(kind, dim);
        absorb_payload(&mut state, first.src, &first.payload, lookup)?;
        while let Some(m) = iter.next_if(|m| m.dst == first.dst) {
            absorb_payload(&mut state, m.src, &m.payload, lookup)?;
        }
        out.push(Message {
            dst: first.dst,
            src: first.src,
            payload: Payload::Partial(state),
        });
    }
    let saved = (before - out.len()) as u64;
    Ok((out, saved))
}

/// Apply the prediction head if `rec` is the record that reports for its
/// physical node (the node itself, or mirror #0).
pub(crate) fn output_row(head: &Head, id: NodeId, state: &NodeState) -> Result<Option<OutputRow>> {
    if id.mirror.is_some_and(|g| g != 0) {
        return Ok(None);
    }
    let (logits, class) = predict(head, state)?;
    Ok(Some(OutputRow {
        id: id.physical(),
        class,
        logits: logits.into_inner(),
    }))
}
