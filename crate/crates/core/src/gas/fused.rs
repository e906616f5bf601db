use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gas::{predict, AggregateKind, Gathered, ModelBundle, NodeContext, NodeState};
use crate::graph::NodeId;
use crate::harness::KHopNeighborhood;
use crate::math::DenseVector;

#[derive(Debug, Clone, PartialEq)]
pub struct FusedPrediction {
    pub target: NodeId,
    pub logits: Vec<f32>,
    pub class: usize,
    /// Number of edge messages plus node updates evaluated.
    pub cost: u64,
}

/// Direct reduction of an in-edge message list, independent of the
/// partial-aggregate machinery the distributed backends use.
pub(crate) fn gather_direct(
    kind: AggregateKind,
    msgs: &[(NodeId, Vec<f32>)],
    dim: usize,
) -> Gathered {
    match kind {
        AggregateKind::SumCount => {
            let mut sum = vec![0.0f64; dim];
            for (_, m) in msgs {
                for (s, &x) in sum.iter_mut().zip(m) {
                    *s += f64::from(x);
                }
            }
            let n = msgs.len() as u64;
            let mean = if n == 0 {
                vec![0.0; dim]
            } else {
                sum.iter().map(|s| (s / n as f64) as f32).collect()
            };
            Gathered::Pooled {
                mean,
                sum: sum.iter().map(|&s| s as f32).collect(),
                count: n,
            }
        }
        AggregateKind::Max => {
            let mut value = vec![0.0f32; dim];
            for (i, (_, m)) in msgs.iter().enumerate() {
                for (v, &x) in value.iter_mut().zip(m) {
                    if i == 0 || x > *v {
                        *v = x;
                    }
                }
            }
            Gathered::Max {
                value,
                count: msgs.len() as u64,
            }
        }
        AggregateKind::Union => Gathered::Union(msgs.to_vec()),
    }
}

/// Forward pass of the whole model restricted to one target's k-hop
/// neighborhood. A node at distance `d` is evaluated for layers `1..=K-d`.
pub fn fused_forward(model: &ModelBundle, nbhd: &KHopNeighborhood) -> Result<FusedPrediction> {
    let k = model.num_layers();
    if nbhd.depth < k {
        return Err(Error::InsufficientDepth {
            depth: nbhd.depth,
            layers: k,
        });
    }
    let mut cost = 0u64;
    let mut emb: BTreeMap<NodeId, Vec<f32>> = nbhd
        .distance
        .iter()
        .filter(|(_, &d)| d <= k)
        .map(|(&id, _)| (id, nbhd.features[&id].clone()))
        .collect();
    for (l, layer) in model.layers.iter().enumerate() {
        let remaining = k - l - 1;
        let mut next = BTreeMap::new();
        for (&v, &d) in &nbhd.distance {
            if d > remaining {
                continue;
            }
            let mut msgs = Vec::new();
            for (u, feats) in nbhd.in_edges.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                let ctx = NodeContext {
                    out_degree: nbhd.out_degree[u],
                };
                msgs.push((*u, layer.apply_edge(&emb[u], ctx, feats)?.into_inner()));
                cost += 1;
            }
            msgs.sort_by_key(|(u, _)| *u);
            let gathered = gather_direct(layer.aggregate_kind(), &msgs, layer.message_dim());
            let ctx = NodeContext {
                out_degree: nbhd.out_degree[&v],
            };
            let h = layer.apply_node(&emb[&v], &gathered, ctx)?;
            cost += 1;
            next.insert(v, h.into_inner());
        }
        emb = next;
    }
    let state = NodeState {
        embedding: DenseVector::new(emb.remove(&nbhd.target).expect("target is at distance 0")),
        layer_index: k,
    };
    let (logits, class) = predict(&model.head, &state)?;
    Ok(FusedPrediction {
        target: nbhd.target,
        logits: logits.into_inner(),
        class,
        cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{Algorithm, GnnLayer, Head, LayerParams, LayerSignature};
    use crate::graph::{GraphBuilder, IngestOptions};
    use crate::harness::KHopNeighborhood;
    use crate::math::{matvec, Activation, DenseMatrix};

    fn star() -> crate::graph::Graph {
        let mut b = GraphBuilder::new(2);
        b.add_node(NodeId::new(0), vec![1.0, 1.0]).unwrap();
        b.add_node(NodeId::new(1), vec![2.0, 0.0]).unwrap();
        b.add_node(NodeId::new(2), vec![0.0, 4.0]).unwrap();
        b.add_node(NodeId::new(3), vec![5.0, 5.0]).unwrap();
        b.add_edge(1, 0, vec![]).unwrap();
        b.add_edge(2, 0, vec![]).unwrap();
        b.build(&IngestOptions::default()).unwrap()
    }

    fn sage_model(w_self: Vec<f32>, w_nbr: Vec<f32>) -> ModelBundle {
        ModelBundle {
            algorithm: Algorithm::Sage,
            feature_dim: 2,
            num_classes: 2,
            layers: vec![GnnLayer {
                params: LayerParams::Sage {
                    w_self: DenseMatrix::new(2, 2, w_self).unwrap(),
                    w_nbr: DenseMatrix::new(2, 2, w_nbr).unwrap(),
                    bias: DenseVector::zeros(2),
                },
                activation: Activation::Relu,
                signature: LayerSignature::builtin(Algorithm::Sage, 2, 2),
            }],
            head: Head {
                weight: DenseMatrix::identity(2),
                bias: DenseVector::zeros(2),
            },
        }
    }

    #[test]
    fn star_center_uses_leaf_mean() {
        let g = star();
        let w_self = vec![1.0, 0.5, -0.5, 1.0];
        let w_nbr = vec![0.25, 1.0, 1.0, -1.0];
        let m = sage_model(w_self.clone(), w_nbr.clone());
        let nb = KHopNeighborhood::build(&g, NodeId::new(0), 1);
        let out = fused_forward(&m, &nb).unwrap();
        let a = matvec(&DenseMatrix::new(2, 2, w_self).unwrap(), &[1.0, 1.0]).unwrap();
        let b = matvec(&DenseMatrix::new(2, 2, w_nbr).unwrap(), &[1.0, 2.0]).unwrap();
        let expect: Vec<f32> = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x + y).max(0.0))
            .collect();
        assert_eq!(out.logits, expect);
        assert_eq!(out.cost, 3);
    }

    #[test]
    fn isolated_node_sees_only_itself() {
        let g = star();
        let m = sage_model(vec![1.0, 0.0, 0.0, 1.0], vec![3.0, 3.0, 3.0, 3.0]);
        let nb = KHopNeighborhood::build(&g, NodeId::new(3), 1);
        let out = fused_forward(&m, &nb).unwrap();
        assert_eq!(out.logits, vec![5.0, 5.0]);
    }

    #[test]
    fn depth_must_cover_layers() {
        let g = star();
        let m = sage_model(vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0, 1.0]);
        let nb = KHopNeighborhood::build(&g, NodeId::new(0), 0);
        assert!(matches!(
            fused_forward(&m, &nb),
            Err(Error::InsufficientDepth {
                depth: 0,
                layers: 1
            })
        ));
    }
}
