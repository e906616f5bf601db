use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::{AggregateKind, Gathered};
use crate::math::{dot, matvec, softmax, Activation, DenseMatrix, DenseVector};

/// Negative slope of the attention-score LeakyReLU.
pub const ATTENTION_SLOPE: f32 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sage,
    Gat,
    Gcn,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Sage => "sage",
            Algorithm::Gat => "gat",
            Algorithm::Gcn => "gcn",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sage" => Ok(Algorithm::Sage),
            "gat" => Ok(Algorithm::Gat),
            "gcn" => Ok(Algorithm::Gcn),
            other => Err(format!("unknown model {other:?} (sage|gat|gcn)")),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-layer stage annotations recorded alongside the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSignature {
    pub aggregate_kind: AggregateKind,
    #[serde(rename = "size_reducing")]
    pub aggregate_is_size_reducing: bool,
    #[serde(rename = "message_uniform")]
    pub message_uniform_over_out_edges: bool,
    pub partial_gather: bool,
    pub broadcast: bool,
    pub shadow_nodes: bool,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl LayerSignature {
    /// Default annotations of a built-in algorithm.
    pub fn builtin(algorithm: Algorithm, input_dim: usize, output_dim: usize) -> Self {
        match algorithm {
            Algorithm::Sage | Algorithm::Gcn => LayerSignature {
                aggregate_kind: AggregateKind::SumCount,
                aggregate_is_size_reducing: true,
                message_uniform_over_out_edges: true,
                partial_gather: true,
                broadcast: true,
                shadow_nodes: false,
                input_dim,
                output_dim,
            },
            Algorithm::Gat => LayerSignature {
                aggregate_kind: AggregateKind::Union,
                aggregate_is_size_reducing: false,
                message_uniform_over_out_edges: true,
                partial_gather: false,
                broadcast: true,
                shadow_nodes: true,
                input_dim,
                output_dim,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.partial_gather && !self.aggregate_is_size_reducing {
            return Err(Error::Shape(
                "partial_gather requires a size-reducing aggregate".into(),
            ));
        }
        if self.aggregate_is_size_reducing != self.aggregate_kind.is_size_reducing() {
            return Err(Error::Shape(format!(
                "size_reducing flag disagrees with aggregate kind {}",
                self.aggregate_kind.name()
            )));
        }
        if self.broadcast && !self.message_uniform_over_out_edges {
            return Err(Error::Shape("broadcast requires uniform messages".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// `act(W_self·h + W_nbr·agg + b)`.
    Sage {
        w_self: DenseMatrix,
        w_nbr: DenseMatrix,
        bias: DenseVector,
    },
    /// `act(W·((h/√(d_out+1) + Σ m_u) / √(d_in+1)) + b)` with sender-side
    /// `m_u = h_u/√(d_out(u)+1)`.
    Gcn {
        weight: DenseMatrix,
        bias: DenseVector,
    },
    /// Single-head attention with self-attention folded into `apply_node`.
    Gat {
        weight: DenseMatrix,
        att_src: DenseVector,
        att_dst: DenseVector,
        bias: DenseVector,
    },
}

/// Local facts about the node a stage runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeContext {
    /// Logical out-degree (before any shadow split).
    pub out_degree: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    pub params: LayerParams,
    pub activation: Activation,
    pub signature: LayerSignature,
}

impl GnnLayer {
    pub fn algorithm(&self) -> Algorithm {
        match self.params {
            LayerParams::Sage { .. } => Algorithm::Sage,
            LayerParams::Gcn { .. } => Algorithm::Gcn,
            LayerParams::Gat { .. } => Algorithm::Gat,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.signature.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.signature.output_dim
    }

    /// Length of the payload `apply_edge` produces.
    pub fn message_dim(&self) -> usize {
        match self.params {
            LayerParams::Sage { .. } | LayerParams::Gcn { .. } => self.input_dim(),
            LayerParams::Gat { .. } => self.output_dim() + 1,
        }
    }

    pub fn aggregate_kind(&self) -> AggregateKind {
        self.signature.aggregate_kind
    }

    /// Check parameter shapes against the signature.
    pub fn validate(&self) -> Result<()> {
        self.signature.validate()?;
        let (i, o) = (self.input_dim(), self.output_dim());
        let mat = |m: &DenseMatrix, name: &str| {
            if m.rows() != o || m.cols() != i {
                Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {o}x{i}",
                    m.rows(),
                    m.cols()
                )))
            } else {
                Ok(())
            }
        };
        let vec = |v: &DenseVector, name: &str| {
            if v.dim() != o || !v.is_finite() {
                Err(Error::Shape(format!(
                    "{name} has dim {}, expected {o}",
                    v.dim()
                )))
            } else {
                Ok(())
            }
        };
        match &self.params {
            LayerParams::Sage {
                w_self,
                w_nbr,
                bias,
            } => {
                mat(w_self, "w_self")?;
                mat(w_nbr, "w_nbr")?;
                vec(bias, "bias")?;
                if self.aggregate_kind() == AggregateKind::Union {
                    return Err(Error::Shape("sage needs a mean or max aggregate".into()));
                }
            }
            LayerParams::Gcn { weight, bias } => {
                mat(weight, "weight")?;
                vec(bias, "bias")?;
                if self.aggregate_kind() != AggregateKind::SumCount {
                    return Err(Error::Shape("gcn needs the sum_count aggregate".into()));
                }
            }
            LayerParams::Gat {
                weight,
                att_src,
                att_dst,
                bias,
            } => {
                mat(weight, "weight")?;
                vec(att_src, "att_src")?;
                vec(att_dst, "att_dst")?;
                vec(bias, "bias")?;
                if self.aggregate_kind() != AggregateKind::Union {
                    return Err(Error::Shape("gat needs the union aggregate".into()));
                }
            }
        }
        Ok(())
    }

    /// Scatter-side computation: the message a node sends along an out-edge.
    /// Built-in messages ignore edge features and are uniform over out-edges.
    pub fn apply_edge(
        &self,
        h: &[f32],
        ctx: NodeContext,
        _edge_features: &[f32],
    ) -> Result<DenseVector> {
        match &self.params {
            LayerParams::Sage { .. } => Ok(DenseVector::new(h.to_vec())),
            LayerParams::Gcn { .. } => {
                let scale = 1.0 / ((ctx.out_degree + 1) as f32).sqrt();
                Ok(DenseVector::new(h.iter().map(|x| x * scale).collect()))
            }
            LayerParams::Gat {
                weight, att_src, ..
            } => {
                let mut z = matvec(weight, h)?.into_inner();
                let s = dot(att_src, &z);
                z.push(s);
                Ok(DenseVector::new(z))
            }
        }
    }

    /// Apply-side computation: combine the node's previous state with the
    /// finalized aggregate of its in-edge messages.
    pub fn apply_node(
        &self,
        h: &[f32],
        gathered: &Gathered,
        ctx: NodeContext,
    ) -> Result<DenseVector> {
        if h.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                actual: h.len(),
                context: "apply_node state",
            });
        }
        let mut out = match (&self.params, gathered) {
            (
                LayerParams::Sage {
                    w_self,
                    w_nbr,
                    bias,
                },
                Gathered::Pooled { mean: agg, .. },
            )
            | (
                LayerParams::Sage {
                    w_self,
                    w_nbr,
                    bias,
                },
                Gathered::Max { value: agg, .. },
            ) => {
                let a = matvec(w_self, h)?;
                let b = matvec(w_nbr, agg)?;
                a.iter()
                    .zip(b.iter())
                    .zip(bias.iter())
                    .map(|((x, y), c)| x + y + c)
                    .collect::<Vec<f32>>()
            }
            (LayerParams::Gcn { weight, bias }, Gathered::Pooled { sum, count, .. }) => {
                if sum.len() != h.len() {
                    return Err(Error::DimMismatch {
                        expected: h.len(),
                        actual: sum.len(),
                        context: "gcn aggregate",
                    });
                }
                let self_scale = 1.0 / ((ctx.out_degree + 1) as f32).sqrt();
                let recv_scale = 1.0 / ((*count + 1) as f32).sqrt();
                let mixed: Vec<f32> = h
                    .iter()
                    .zip(sum)
                    .map(|(x, s)| (x * self_scale + s) * recv_scale)
                    .collect();
                let wx = matvec(weight, &mixed)?;
                wx.iter().zip(bias.iter()).map(|(x, c)| x + c).collect()
            }
            (
                LayerParams::Gat {
                    weight,
                    att_src,
                    att_dst,
                    bias,
                },
                Gathered::Union(items),
            ) => {
                let o = self.output_dim();
                let z_self = matvec(weight, h)?;
                let s_self = dot(att_src, &z_self);
                let d_self = dot(att_dst, &z_self);
                let leaky = Activation::LeakyRelu {
                    slope: ATTENTION_SLOPE,
                };
                let mut scores = Vec::with_capacity(items.len() + 1);
                scores.push(leaky.apply_scalar(s_self + d_self));
                for (_, m) in items {
                    if m.len() != o + 1 {
                        return Err(Error::DimMismatch {
                            expected: o + 1,
                            actual: m.len(),
                            context: "gat message",
                        });
                    }
                    scores.push(leaky.apply_scalar(m[o] + d_self));
                }
                let alpha = softmax(&scores);
                let mut acc: Vec<f32> = z_self.iter().map(|z| alpha[0] * z).collect();
                for ((_, m), a) in items.iter().zip(alpha.iter().skip(1)) {
                    for (x, z) in acc.iter_mut().zip(&m[..o]) {
                        *x += a * z;
                    }
                }
                acc.iter().zip(bias.iter()).map(|(x, c)| x + c).collect()
            }
            (_, g) => {
                return Err(Error::KindMismatch(
                    self.aggregate_kind().name(),
                    match g {
                        Gathered::Pooled { .. } => "sum_count",
                        Gathered::Max { .. } => "max",
                        Gathered::Union(_) => "union",
                    },
                ))
            }
        };
        self.activation.apply(&mut out);
        Ok(DenseVector::new(out))
    }
}
