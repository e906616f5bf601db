use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gas::{gather_direct, predict, ModelBundle, NodeContext, NodeState};
use crate::graph::{Graph, NodeId};
use crate::harness::khop::InEdgeIndex;
use crate::math::DenseVector;
use crate::output::OutputRow;
use crate::rng::derive_seed;

/// Neighbor-sampled inference, the approximate baseline: each layer reads at
/// most `fanout` randomly chosen in-neighbors per node, drawn afresh for every
/// run. Returns one row set per run, each ascending by id.
pub fn sampled_inference(
    graph: &Graph,
    model: &ModelBundle,
    fanout: usize,
    runs: usize,
    seed: u64,
) -> Result<Vec<Vec<OutputRow>>> {
    model.validate()?;
    if fanout == 0 {
        return Err(Error::InvalidArgument("fanout must be at least 1".into()));
    }
    if graph.feature_dim() != model.feature_dim {
        return Err(Error::DimMismatch {
            expected: model.feature_dim,
            actual: graph.feature_dim(),
            context: "node features",
        });
    }
    let index = InEdgeIndex::new(graph);
    (0..runs)
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, run as u64));
            sampled_run(graph, model, &index, fanout, &mut rng)
        })
        .collect()
}

fn sampled_run(
    graph: &Graph,
    model: &ModelBundle,
    index: &InEdgeIndex<'_>,
    fanout: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<OutputRow>> {
    let degree: BTreeMap<NodeId, usize> = graph
        .nodes()
        .map(|n| (n.id, n.logical_out_degree()))
        .collect();
    let mut emb: BTreeMap<NodeId, Vec<f32>> =
        graph.nodes().map(|n| (n.id, n.features.clone())).collect();
    for layer in &model.layers {
        let mut next = BTreeMap::new();
        for (&v, h) in &emb {
            let all = index.in_edges(v);
            let mut picked: Vec<usize> = if all.len() <= fanout {
                (0..all.len()).collect()
            } else {
                sample(rng, all.len(), fanout).into_vec()
            };
            picked.sort_unstable();
            let mut msgs = Vec::with_capacity(picked.len());
            for i in picked {
                let (u, feats) = all[i];
                let ctx = NodeContext {
                    out_degree: degree[&u],
                };
                msgs.push((u, layer.apply_edge(&emb[&u], ctx, feats)?.into_inner()));
            }
            let gathered = gather_direct(layer.aggregate_kind(), &msgs, layer.message_dim());
            let ctx = NodeContext {
                out_degree: degree[&v],
            };
            next.insert(v, layer.apply_node(h, &gathered, ctx)?.into_inner());
        }
        emb = next;
    }
    emb.into_iter()
        .map(|(id, h)| {
            let state = NodeState {
                embedding: DenseVector::new(h),
                layer_index: model.num_layers(),
            };
            let (logits, class) = predict(&model.head, &state)?;
            Ok(OutputRow {
                id,
                class,
                logits: logits.into_inner(),
            })
        })
        .collect()
}
