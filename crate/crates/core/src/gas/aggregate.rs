use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::math::ExactSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateKind {
    /// Vector sum plus message count; finalizes to the mean.
    SumCount,
    Max,
    /// Keeps every `(src, message)` pair; used when the reduction itself is
    /// not associative (attention).
    Union,
}

impl AggregateKind {
    pub fn name(&self) -> &'static str {
        match self {
            AggregateKind::SumCount => "sum_count",
            AggregateKind::Max => "max",
            AggregateKind::Union => "union",
        }
    }

    /// Whether merging shrinks the state, which is what makes sender-side
    /// combining worthwhile.
    pub fn is_size_reducing(&self) -> bool {
        !matches!(self, AggregateKind::Union)
    }
}

/// Partial reduction of in-edge messages. Merging is commutative and
/// associative: sums are kept exact, max uses a total order, and unions are
/// canonicalized by source id.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregateState {
    SumCount { sums: Vec<ExactSum>, count: u64 },
    Max { value: Vec<f32>, count: u64 },
    Union(Vec<(NodeId, Vec<f32>)>),
}

/// A finalized aggregate, as consumed by `apply_node`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gathered {
    Pooled {
        mean: Vec<f32>,
        sum: Vec<f32>,
        count: u64,
    },
    Max {
        value: Vec<f32>,
        count: u64,
    },
    /// Sorted by source id.
    Union(Vec<(NodeId, Vec<f32>)>),
}

impl Gathered {
    pub fn count(&self) -> u64 {
        match self {
            Gathered::Pooled { count, .. } | Gathered::Max { count, .. } => *count,
            Gathered::Union(items) => items.len() as u64,
        }
    }
}

impl AggregateState {
    pub fn empty(kind: AggregateKind, dim: usize) -> Self {
        match kind {
            AggregateKind::SumCount => AggregateState::SumCount {
                sums: vec![ExactSum::new(); dim],
                count: 0,
            },
            AggregateKind::Max => AggregateState::Max {
                value: vec![0.0; dim],
                count: 0,
            },
            AggregateKind::Union => AggregateState::Union(Vec::new()),
        }
    }

    /// State holding exactly one message.
    pub fn from_message(kind: AggregateKind, src: NodeId, payload: &[f32]) -> Self {
        match kind {
            AggregateKind::SumCount => AggregateState::SumCount {
                sums: payload
                    .iter()
                    .map(|&x| {
                        let mut s = ExactSum::new();
                        s.add(f64::from(x));
                        s
                    })
                    .collect(),
                count: 1,
            },
            AggregateKind::Max => AggregateState::Max {
                value: payload.to_vec(),
                count: 1,
            },
            AggregateKind::Union => AggregateState::Union(vec![(src, payload.to_vec())]),
        }
    }

    pub fn kind(&self) -> AggregateKind {
        match self {
            AggregateState::SumCount { .. } => AggregateKind::SumCount,
            AggregateState::Max { .. } => AggregateKind::Max,
            AggregateState::Union(_) => AggregateKind::Union,
        }
    }

    pub fn count(&self) -> u64 {
        match self {
            AggregateState::SumCount { count, .. } | AggregateState::Max { count, .. } => *count,
            AggregateState::Union(items) => items.len() as u64,
        }
    }

    /// Fold one dense message in.
    pub fn absorb(&mut self, src: NodeId, payload: &[f32]) -> Result<()> {
        match self {
            AggregateState::SumCount { sums, count } => {
                check_dim(sums.len(), payload.len(), *count)?;
                if sums.is_empty() {
                    sums.resize(payload.len(), ExactSum::new());
                }
                for (s, &x) in sums.iter_mut().zip(payload) {
                    s.add(f64::from(x));
                }
                *count += 1;
            }
            AggregateState::Max { value, count } => {
                check_dim(value.len(), payload.len(), *count)?;
                if *count == 0 {
                    value.clear();
                    value.extend_from_slice(payload);
                } else {
                    for (v, &x) in value.iter_mut().zip(payload) {
                        if x.total_cmp(v).is_gt() {
                            *v = x;
                        }
                    }
                }
                *count += 1;
            }
            AggregateState::Union(items) => {
                let sorted = items.last().is_none_or(|(last, _)| *last <= src);
                items.push((src, payload.to_vec()));
                if !sorted {
                    items.sort_by_key(|(s, _)| *s);
                }
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &AggregateState) -> Result<()> {
        match (self, other) {
            (
                AggregateState::SumCount { sums, count },
                AggregateState::SumCount {
                    sums: other_sums,
                    count: other_count,
                },
            ) => {
                if *other_count == 0 {
                    return Ok(());
                }
                if *count == 0 && sums.len() != other_sums.len() {
                    *sums = vec![ExactSum::new(); other_sums.len()];
                }
                check_dim(sums.len(), other_sums.len(), *count)?;
                for (s, o) in sums.iter_mut().zip(other_sums) {
                    s.merge(o);
                }
                *count += other_count;
            }
            (
                AggregateState::Max { value, count },
                AggregateState::Max {
                    value: other_value,
                    count: other_count,
                },
            ) => {
                if *other_count == 0 {
                    return Ok(());
                }
                if *count == 0 {
                    *value = other_value.clone();
                } else {
                    check_dim(value.len(), other_value.len(), *count)?;
                    for (v, &x) in value.iter_mut().zip(other_value) {
                        if x.total_cmp(v).is_gt() {
                            *v = x;
                        }
                    }
                }
                *count += other_count;
            }
            (AggregateState::Union(items), AggregateState::Union(other_items)) => {
                let sorted = match (items.last(), other_items.first()) {
                    (Some((a, _)), Some((b, _))) => a <= b,
                    _ => true,
                };
                items.extend(other_items.iter().cloned());
                if !sorted {
                    items.sort_by_key(|(s, _)| *s);
                }
            }
            (a, b) => return Err(Error::KindMismatch(a.kind().name(), b.kind().name())),
        }
        Ok(())
    }

    /// Reduce to what `apply_node` consumes. An empty sum/max finalizes to
    /// the zero vector of `dim`.
    pub fn finalize(self, dim: usize) -> Gathered {
        match self {
            AggregateState::SumCount { sums, count } => {
                if count == 0 {
                    return Gathered::Pooled {
                        mean: vec![0.0; dim],
                        sum: vec![0.0; dim],
                        count: 0,
                    };
                }
                let exact: Vec<f64> = sums.iter().map(ExactSum::value).collect();
                Gathered::Pooled {
                    mean: exact.iter().map(|s| (s / count as f64) as f32).collect(),
                    sum: exact.iter().map(|&s| s as f32).collect(),
                    count,
                }
            }
            AggregateState::Max { value, count } => Gathered::Max {
                value: if count == 0 { vec![0.0; dim] } else { value },
                count,
            },
            AggregateState::Union(mut items) => {
                items.sort_by_key(|(s, _)| *s);
                Gathered::Union(items)
            }
        }
    }
}

fn check_dim(have: usize, got: usize, count: u64) -> Result<()> {
    if count > 0 && have != got {
        return Err(Error::DimMismatch {
            expected: have,
            actual: got,
            context: "aggregate message",
        });
    }
    Ok(())
}

/// `a ⊕ b`.
pub fn aggregate_merge(a: &AggregateState, b: &AggregateState) -> Result<AggregateState> {
    let mut out = a.clone();
    out.merge(b)?;
    Ok(out)
}

pub fn aggregate_finalize(a: AggregateState, dim: usize) -> Gathered {
    a.finalize(dim)
}
