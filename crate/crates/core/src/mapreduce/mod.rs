//! Round-based external-memory backend. One map round turns node records
//! into keyed records; each of the `K` reduce rounds receives, per node, its
//! own state plus all in-edge messages, applies one layer and emits the
//! records for the next round. All state between rounds travels through the
//! shuffle.

mod shuffle;

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

pub use crate::codec::{KeyedRecord, RecordBody, RecordKind};
pub use shuffle::{shuffle, CombineSpec, GroupedRecords, ShuffleWriter, SpillRun, WriterStats};

use crate::codec::registry_entry_len;
use crate::error::{Error, Result};
use crate::gas::{init_embedding, AggregateState, GnnLayer, ModelBundle, NodeContext, NodeState};
use crate::graph::{partition_of, Graph, NodeId, NodeRecord};
use crate::hub::{BroadcastRegistry, StrategyConfig};
use crate::math::DenseVector;
use crate::metrics::{RunMetrics, StepMetrics};
use crate::output::OutputRow;
use crate::runtime::{
    absorb_payload, output_row, prepare_graph, scatter_node, InferenceResult, ScatterOut,
};

/// Broadcast payloads per destination reducer.
type Registry = Vec<Vec<(NodeId, DenseVector)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct MrConfig {
    pub num_reducers: usize,
    pub strategy: StrategyConfig,
    /// Shuffle buffer per task in encoded bytes; `None` keeps everything in
    /// memory.
    pub memory_budget_bytes: Option<usize>,
    /// Parent directory for run files; the system temp dir by default.
    pub spill_dir: Option<PathBuf>,
}

impl MrConfig {
    pub fn new(num_reducers: usize, strategy: StrategyConfig) -> Self {
        MrConfig {
            num_reducers,
            strategy,
            memory_budget_bytes: None,
            spill_dir: None,
        }
    }
}

/// Records a node emits for the next round: its own state, then one message
/// per out-edge (or broadcast references plus registry entries).
fn emit_node<'w>(
    rec: &NodeRecord,
    state: &NodeState,
    next: &GnnLayer,
    strategy: &StrategyConfig,
    threshold: u64,
    writer: &mut ShuffleWriter<'w>,
    registry_out: &mut [Vec<(NodeId, DenseVector)>],
) -> Result<()> {
    let r = registry_out.len();
    writer.push(KeyedRecord {
        key: rec.id,
        body: RecordBody::SelfState {
            embedding: state.embedding.to_vec(),
            out_degree: rec.logical_out_degree() as u64,
            out_nbrs: rec.out_nbrs.clone(),
        },
    })?;
    let mut out = ScatterOut::default();
    scatter_node(
        next,
        strategy.for_layer(next),
        threshold,
        rec,
        &state.embedding,
        |d| partition_of(d, r),
        &mut out,
    )?;
    for (dst_task, src, p) in out.registry {
        writer.add_local_payload(src, p.clone());
        registry_out[dst_task].push((src, p));
    }
    for m in out.messages {
        writer.push(KeyedRecord {
            key: m.dst,
            body: RecordBody::InEdgeMsg {
                src: m.src,
                payload: m.payload,
            },
        })?;
    }
    Ok(())
}

/// Map-side records for the whole graph with no strategies applied, in
/// emission order.
pub fn map_init(graph: &Graph, model: &ModelBundle) -> Result<Vec<KeyedRecord>> {
    let layer = &model.layers[0];
    let mut out = Vec::new();
    for rec in graph.nodes() {
        let st = init_embedding(layer, rec)?;
        out.push(KeyedRecord {
            key: rec.id,
            body: RecordBody::SelfState {
                embedding: st.embedding.to_vec(),
                out_degree: rec.logical_out_degree() as u64,
                out_nbrs: rec.out_nbrs.clone(),
            },
        });
        let ctx = NodeContext {
            out_degree: rec.logical_out_degree(),
        };
        for e in &rec.out_nbrs {
            out.push(KeyedRecord {
                key: e.dst,
                body: RecordBody::InEdgeMsg {
                    src: rec.id,
                    payload: crate::gas::Payload::Dense(layer.apply_edge(
                        &st.embedding,
                        ctx,
                        &e.features,
                    )?),
                },
            });
        }
    }
    Ok(out)
}

struct TaskOutput {
    runs: Vec<Vec<SpillRun>>,
    registry: Registry,
    rows: Vec<OutputRow>,
    metrics: StepMetrics,
}

struct RoundEnv<'a> {
    model: &'a ModelBundle,
    strategy: &'a StrategyConfig,
    threshold: u64,
    num_reducers: usize,
    budget: usize,
    spill_dir: &'a std::path::Path,
}

impl RoundEnv<'_> {
    fn writer(&self, round: usize, task: usize, next: &GnnLayer) -> ShuffleWriter<'_> {
        let strat = self.strategy.for_layer(next);
        let combine = strat.partial_gather.then_some(CombineSpec {
            kind: next.aggregate_kind(),
            dim: next.message_dim(),
        });
        ShuffleWriter::new(
            self.num_reducers,
            self.budget,
            self.spill_dir,
            format!("r{round}-t{task}"),
            combine,
        )
    }

    fn finish_writer(
        &self,
        writer: ShuffleWriter<'_>,
        registry: Registry,
        metrics: &mut StepMetrics,
    ) -> Result<(Vec<Vec<SpillRun>>, Registry)> {
        let (runs, stats) = writer.finish()?;
        metrics.msgs_out = stats.records;
        metrics.bytes_out = stats.bytes;
        metrics.combiner_savings = stats.combiner_savings;
        metrics.spilled_runs = stats.spilled_runs;
        for entries in &registry {
            metrics.bcast_out += entries.len() as u64;
            metrics.bytes_out += entries
                .iter()
                .map(|(_, p)| registry_entry_len(p) as u64)
                .sum::<u64>();
        }
        Ok((runs, registry))
    }

    fn map_task(&self, task: usize, nodes: &[&NodeRecord]) -> Result<TaskOutput> {
        let started = Instant::now();
        let mut metrics = StepMetrics::new(task, 0);
        let next = &self.model.layers[0];
        let mut writer = self.writer(0, task, next);
        let mut registry = vec![Vec::new(); self.num_reducers];
        for rec in nodes {
            let st = init_embedding(next, rec)?;
            emit_node(
                rec,
                &st,
                next,
                self.strategy,
                self.threshold,
                &mut writer,
                &mut registry,
            )?;
        }
        let (runs, registry) = self.finish_writer(writer, registry, &mut metrics)?;
        metrics.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(TaskOutput {
            runs,
            registry,
            rows: Vec::new(),
            metrics,
        })
    }

    /// Reduce round `k` (1-based) for reducer `task`.
    fn reduce_task(
        &self,
        k: usize,
        task: usize,
        runs: Vec<SpillRun>,
        registry: &BroadcastRegistry,
    ) -> Result<TaskOutput> {
        let started = Instant::now();
        let mut metrics = StepMetrics::new(task, k);
        let layer = &self.model.layers[k - 1];
        let last = k == self.model.num_layers();
        let next = (!last).then(|| &self.model.layers[k]);
        let mut writer = next.map(|n| self.writer(k, task, n));
        let mut registry_out = vec![Vec::new(); self.num_reducers];
        let mut rows = Vec::new();
        let lookup = |s: NodeId| registry.get(s);

        metrics.bcast_in = registry.len() as u64;
        metrics.bytes_in = registry
            .entries()
            .map(|(_, p)| registry_entry_len(p) as u64)
            .sum();

        let mut groups = GroupedRecords::new(runs)?;
        while let Some((key, group)) = groups.next_group()? {
            metrics.msgs_in += group.len() as u64;
            metrics.bytes_in += group.iter().map(|r| r.encoded_len() as u64).sum::<u64>();
            metrics.peak_group = metrics.peak_group.max(group.len() as u64);
            if partition_of(key, self.num_reducers) != task {
                return Err(Error::Misrouted {
                    node: key,
                    worker: task,
                });
            }
            let mut iter = group.into_iter();
            let Some(KeyedRecord {
                body:
                    RecordBody::SelfState {
                        embedding,
                        out_degree,
                        out_nbrs,
                    },
                ..
            }) = iter.next()
            else {
                return Err(Error::MissingSelfState(key));
            };
            let mut agg = AggregateState::empty(layer.aggregate_kind(), layer.message_dim());
            let mut received = 0u64;
            for r in iter {
                match r.body {
                    RecordBody::SelfState { .. } => return Err(Error::DuplicateSelfState(key)),
                    RecordBody::InEdgeMsg { src, payload } => {
                        absorb_payload(&mut agg, src, &payload, &lookup)?;
                        received += 1;
                    }
                    RecordBody::OutEdgeInfo { .. } => {}
                }
            }
            metrics.max_inbound = metrics.max_inbound.max(received);
            let ctx = NodeContext {
                out_degree: out_degree as usize,
            };
            let h = layer.apply_node(&embedding, &agg.finalize(layer.message_dim()), ctx)?;
            let state = NodeState {
                embedding: h,
                layer_index: k,
            };
            match (next, writer.as_mut()) {
                (Some(next), Some(w)) => {
                    let degree = out_degree as usize;
                    let rec = NodeRecord {
                        id: key,
                        features: Vec::new(),
                        original_out_degree: (degree != out_nbrs.len()).then_some(degree),
                        out_nbrs,
                    };
                    emit_node(
                        &rec,
                        &state,
                        next,
                        self.strategy,
                        self.threshold,
                        w,
                        &mut registry_out,
                    )?;
                }
                _ => {
                    if let Some(row) = output_row(&self.model.head, key, &state)? {
                        rows.push(row);
                    }
                }
            }
        }
        let (runs, registry_out) = match writer {
            Some(w) => self.finish_writer(w, registry_out, &mut metrics)?,
            None => (Vec::new(), registry_out),
        };
        metrics.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(TaskOutput {
            runs,
            registry: registry_out,
            rows,
            metrics,
        })
    }
}

/// Route every task's runs and registry entries to their reducers.
fn exchange(
    outputs: &mut [TaskOutput],
    num_reducers: usize,
) -> (Vec<Vec<SpillRun>>, Vec<BroadcastRegistry>) {
    let mut inputs: Vec<Vec<SpillRun>> = (0..num_reducers).map(|_| Vec::new()).collect();
    let mut registries = vec![BroadcastRegistry::new(); num_reducers];
    for out in outputs.iter_mut() {
        for (r, runs) in std::mem::take(&mut out.runs).into_iter().enumerate() {
            inputs[r].extend(runs);
        }
        for (r, entries) in std::mem::take(&mut out.registry).into_iter().enumerate() {
            for (src, p) in entries {
                registries[r].register(src, p);
            }
        }
    }
    (inputs, registries)
}

/// Full-graph inference as one map round plus `K` reduce rounds.
pub fn run_mr_inference(
    graph: &Graph,
    model: &ModelBundle,
    config: &MrConfig,
) -> Result<InferenceResult> {
    let r = config.num_reducers;
    let prepared = prepare_graph(graph, model, &config.strategy, r)?;
    let parent = config.spill_dir.clone().unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let tmp = tempfile::Builder::new()
        .prefix("fullgraph-shuffle-")
        .tempdir_in(&parent)
        .map_err(|e| Error::io(&parent, e))?;
    let env = RoundEnv {
        model,
        strategy: &config.strategy,
        threshold: prepared.threshold,
        num_reducers: r,
        budget: config.memory_budget_bytes.unwrap_or(usize::MAX),
        spill_dir: tmp.path(),
    };
    let k_total = model.num_layers();
    let mut metrics = RunMetrics::new("mapreduce", r, k_total + 1);

    let mut tasks: Vec<Vec<&NodeRecord>> = vec![Vec::new(); r];
    for rec in prepared.graph.nodes() {
        tasks[partition_of(rec.id, r)].push(rec);
    }
    let mut outputs: Vec<TaskOutput> = tasks
        .par_iter()
        .enumerate()
        .map(|(t, nodes)| env.map_task(t, nodes))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for k in 1..=k_total {
        for out in outputs.iter_mut() {
            metrics.record(std::mem::take(&mut out.metrics));
        }
        let (inputs, registries) = exchange(&mut outputs, r);
        outputs = inputs
            .into_par_iter()
            .zip(registries.par_iter())
            .enumerate()
            .map(|(t, (runs, reg))| env.reduce_task(k, t, runs, reg))
            .collect::<Result<_>>()?;
    }
    for out in outputs.iter_mut() {
        metrics.record(std::mem::take(&mut out.metrics));
        rows.append(&mut out.rows);
    }
    rows.sort_by_key(|row| row.id);
    drop(tmp);
    Ok(InferenceResult {
        rows,
        metrics,
        shadow: prepared.shadow,
        threshold: prepared.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{seeded_random_model, Algorithm, ModelDims};
    use crate::graph::{generate_power_law, GraphBuilder, IngestOptions, PowerLawConfig};
    use crate::pregel::{run_pregel_inference, PregelConfig};
    use std::collections::BTreeMap;

    fn group_by_key(records: &[KeyedRecord]) -> BTreeMap<NodeId, Vec<&KeyedRecord>> {
        let mut m: BTreeMap<NodeId, Vec<&KeyedRecord>> = BTreeMap::new();
        for r in records {
            m.entry(r.key).or_default().push(r);
        }
        m
    }

    fn model(alg: Algorithm, feature_dim: usize, k: usize) -> ModelBundle {
        let dims = ModelDims {
            feature_dim,
            hidden_dim: 6,
            num_classes: 3,
        };
        seeded_random_model(alg, dims, k, 21).unwrap()
    }

    fn small() -> Graph {
        let mut b = GraphBuilder::new(2);
        for i in 0..5u64 {
            b.add_node(NodeId::new(i), vec![i as f32, 1.0]).unwrap();
        }
        for (s, d) in [(0, 1), (0, 2), (0, 3), (2, 1), (3, 0)] {
            b.add_edge(s, d, vec![]).unwrap();
        }
        b.build(&IngestOptions::default()).unwrap()
    }

    #[test]
    fn map_record_counts() {
        let g = small();
        let recs = map_init(&g, &model(Algorithm::Sage, 2, 1)).unwrap();
        assert_eq!(recs.len(), 5 + 5);
        let by_key = group_by_key(&recs);
        // Isolated node 4: only its own state.
        assert_eq!(by_key[&NodeId::new(4)].len(), 1);
        // Node 0 emits 1 + 3 records.
        assert_eq!(
            recs.iter()
                .take_while(|r| r.key != NodeId::new(1) || r.kind() != RecordKind::SelfState)
                .count(),
            4
        );
        // Records keyed by a node reproduce its in-edges.
        let in_adj = g.in_adjacency();
        for (id, group) in by_key {
            let srcs: Vec<NodeId> = group
                .iter()
                .filter(|r| r.kind() == RecordKind::InEdgeMsg)
                .map(|r| r.src())
                .collect();
            assert_eq!(srcs, in_adj[&id]);
        }
    }

    #[test]
    fn single_node_uses_own_features() {
        let mut b = GraphBuilder::new(2);
        b.add_node(NodeId::new(0), vec![0.3, -0.7]).unwrap();
        let g = b.build(&IngestOptions::default()).unwrap();
        let m = model(Algorithm::Sage, 2, 2);
        let r = run_mr_inference(&g, &m, &MrConfig::new(1, StrategyConfig::none())).unwrap();
        let nb = crate::harness::KHopNeighborhood::build(&g, NodeId::new(0), 2);
        let f = crate::gas::fused_forward(&m, &nb).unwrap();
        assert_eq!(r.rows[0].logits, f.logits);
    }

    #[test]
    fn rounds_and_record_counts() {
        let g = small();
        let m = model(Algorithm::Gcn, 2, 3);
        let r = run_mr_inference(&g, &m, &MrConfig::new(2, StrategyConfig::none())).unwrap();
        assert_eq!(r.metrics.num_steps, 4);
        for k in 1..=3 {
            assert_eq!(r.metrics.step_totals(k).msgs_in, 10);
        }
        r.metrics.check_conservation().unwrap();
        assert_eq!(r.metrics.max_peak_group(), 3);
    }

    #[test]
    fn matches_pregel_and_survives_tiny_budget() {
        let gen = generate_power_law(&PowerLawConfig {
            num_nodes: 300,
            target_edges: 2000,
            feature_dim: 4,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        for alg in [Algorithm::Sage, Algorithm::Gat, Algorithm::Gcn] {
            let m = model(alg, 4, 2);
            let p = run_pregel_inference(
                &gen.graph,
                &m,
                &PregelConfig::new(2, StrategyConfig::none()),
            )
            .unwrap();
            let mut cfg = MrConfig::new(1, StrategyConfig::from_model(&m));
            cfg.memory_budget_bytes = Some(4096);
            let q = run_mr_inference(&gen.graph, &m, &cfg).unwrap();
            assert!(q.metrics.total_spilled_runs() > 1);
            assert_eq!(p.rows, q.rows, "{alg}");
        }
    }
}
