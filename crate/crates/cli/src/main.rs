use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fullgraph::gas::{
    load_model, save_model, seeded_random_model, Algorithm, ModelBundle, ModelDims,
};
use fullgraph::graph::{
    compute_degree_stats, generate_power_law, ingest_tables, write_generated, Graph, IngestOptions,
    NodeId, PowerLawConfig, SkewMode,
};
use fullgraph::harness::{
    compare_runs, export_metrics, load_metrics_json, oracle_khop_forward, sampled_inference,
    save_metrics_json,
};
use fullgraph::hub::StrategyConfig;
use fullgraph::mapreduce::{run_mr_inference, MrConfig};
use fullgraph::output::{read_output_table, write_output_table, OutputRow};
use fullgraph::pregel::{run_pregel_inference, PregelConfig};

#[derive(Parser)]
#[command(
    name = "fullgraph",
    version,
    about = "Full-graph GNN inference on Pregel and MapReduce backends"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a power-law graph as nodes.tsv, edges.tsv and labels.tsv.
    GenGraph(GenGraphArgs),
    /// Write a seeded random model to a JSON file.
    InitModel(InitModelArgs),
    /// Full-graph inference on one backend.
    Infer(InferArgs),
    /// Per-node k-hop reference inference.
    Oracle(OracleArgs),
    /// Neighbor-sampled inference repeated over several runs.
    SampleInfer(SampleArgs),
    /// Compare two or more output tables; exits 1 when they differ.
    Compare(CompareArgs),
    /// Convert a metrics JSON file to CSV.
    MetricsExport(MetricsExportArgs),
}

#[derive(Args)]
struct GenGraphArgs {
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 10_000)]
    edges: usize,
    #[arg(long, default_value_t = 2.1)]
    exponent: f64,
    #[arg(long, default_value = "in")]
    skew: SkewMode,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    edge_feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct InitModelArgs {
    #[arg(long, value_enum)]
    model: Alg,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long)]
    feature_dim: usize,
    #[arg(long, default_value_t = 16)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GraphArgs {
    /// Directory holding nodes.tsv and edges.tsv.
    #[arg(long)]
    graph_dir: PathBuf,
    #[arg(long)]
    add_reverse_edges: bool,
    #[arg(long)]
    add_self_loops: bool,
}

impl GraphArgs {
    fn load(&self) -> Result<Graph> {
        let opts = IngestOptions {
            add_reverse_edges: self.add_reverse_edges,
            add_self_loops: self.add_self_loops,
        };
        let g = ingest_tables(
            self.graph_dir.join("nodes.tsv"),
            self.graph_dir.join("edges.tsv"),
            &opts,
        )
        .with_context(|| format!("loading graph from {}", self.graph_dir.display()))?;
        info!("graph: {} nodes, {} edges", g.num_nodes(), g.num_edges());
        Ok(g)
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Model JSON; when absent a seeded random model is built.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<Alg>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, default_value_t = 16)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
}

impl ModelArgs {
    fn resolve(&self, graph: &Graph) -> Result<ModelBundle> {
        match &self.model_file {
            Some(path) => {
                let m = load_model(path)?;
                if let Some(alg) = self.model {
                    if Algorithm::from(alg) != m.algorithm {
                        bail!(
                            "--model {} does not match the model file ({})",
                            Algorithm::from(alg),
                            m.algorithm
                        );
                    }
                }
                if let Some(k) = self.layers {
                    if k != m.num_layers() {
                        bail!(
                            "--layers {k} does not match the model file ({} layers)",
                            m.num_layers()
                        );
                    }
                }
                Ok(m)
            }
            None => {
                let Some(alg) = self.model else {
                    bail!("either --model-file or --model is required");
                };
                let dims = ModelDims {
                    feature_dim: graph.feature_dim(),
                    hidden_dim: self.hidden_dim,
                    num_classes: self.classes,
                };
                Ok(seeded_random_model(
                    alg.into(),
                    dims,
                    self.layers.unwrap_or(2),
                    self.model_seed,
                )?)
            }
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Alg {
    Sage,
    Gat,
    Gcn,
}

impl From<Alg> for Algorithm {
    fn from(a: Alg) -> Self {
        match a {
            Alg::Sage => Algorithm::Sage,
            Alg::Gat => Algorithm::Gat,
            Alg::Gcn => Algorithm::Gcn,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Pregel,
    Mr,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "pregel")]
    backend: Backend,
    /// Workers for pregel, reducers for mr.
    #[arg(long, visible_alias = "reducers", default_value_t = 4)]
    workers: usize,
    /// Strategies: pg, bc, sn, comma-separated or repeated. `auto` takes the
    /// model's defaults; omitted means none.
    #[arg(long)]
    enable: Vec<String>,
    #[arg(long, default_value_t = fullgraph::hub::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long)]
    threshold_override: Option<u64>,
    #[arg(long)]
    memory_budget_bytes: Option<usize>,
    #[arg(long)]
    spill_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-worker, per-step metrics as JSON.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated node ids; all nodes when absent.
    #[arg(long)]
    targets: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 2)]
    fanout: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for one output table per run.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Output tables; every one is compared against the first.
    #[arg(required = true, num_args = 2..)]
    files: Vec<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    atol: f64,
}

#[derive(Args)]
struct MetricsExportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn strategy_from(args: &InferArgs, model: &ModelBundle) -> Result<StrategyConfig> {
    let spec = args.enable.join(",");
    let mut s = if spec.split(',').any(|p| p.trim() == "auto") {
        StrategyConfig::from_model(model)
    } else {
        StrategyConfig::none()
            .with_enabled(&spec)
            .map_err(anyhow::Error::msg)?
    };
    s.lambda = args.lambda;
    s.threshold_override = args.threshold_override;
    Ok(s)
}

fn write_rows(rows: &[OutputRow], path: &Path) -> Result<()> {
    write_output_table(rows, path)?;
    info!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}

fn infer(args: InferArgs) -> Result<()> {
    let graph = args.graph.load()?;
    let model = args.model.resolve(&graph)?;
    let strategy = strategy_from(&args, &model)?;
    info!("backend strategies: {}", strategy.label());
    let result = match args.backend {
        Backend::Pregel => {
            run_pregel_inference(&graph, &model, &PregelConfig::new(args.workers, strategy))?
        }
        Backend::Mr => {
            let mut cfg = MrConfig::new(args.workers, strategy);
            cfg.memory_budget_bytes = args.memory_budget_bytes;
            cfg.spill_dir = args.spill_dir.clone();
            run_mr_inference(&graph, &model, &cfg)?
        }
    };
    let t = result.metrics.totals();
    info!(
        "{} msgs, {} bytes, {} broadcast payloads, threshold {}",
        t.msgs_out, t.bytes_out, t.bcast_out, result.threshold
    );
    write_rows(&result.rows, &args.out)?;
    if let Some(p) = &args.metrics_out {
        save_metrics_json(&result.metrics, p)?;
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let graph = args.graph.load()?;
    let model = args.model.resolve(&graph)?;
    let targets = args
        .targets
        .as_deref()
        .map(|s| {
            s.split(',')
                .map(|t| t.trim().parse::<NodeId>().map_err(anyhow::Error::msg))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let res = oracle_khop_forward(&graph, &model, targets.as_deref())?;
    info!("oracle cost {}", res.cost);
    write_rows(&res.rows, &args.out)
}

fn sample_infer(args: SampleArgs) -> Result<()> {
    let graph = args.graph.load()?;
    let model = args.model.resolve(&graph)?;
    let stats = compute_degree_stats(&graph);
    let runs = sampled_inference(&graph, &model, args.fanout, args.runs, args.seed)?;
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, rows) in runs.iter().enumerate() {
            write_rows(rows, &dir.join(format!("run-{i}.tsv")))?;
        }
    }
    let report = compare_runs(&runs)?;
    info!("max in-degree {}", stats.in_summary.max);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn compare(args: CompareArgs) -> Result<bool> {
    let runs = args
        .files
        .iter()
        .map(read_output_table)
        .collect::<fullgraph::Result<Vec<_>>>()?;
    let report = compare_runs(&runs)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report.passed(args.atol))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenGraph(a) => {
            let cfg = PowerLawConfig {
                num_nodes: a.nodes,
                target_edges: a.edges,
                exponent: a.exponent,
                skew: a.skew,
                feature_dim: a.feature_dim,
                edge_feature_dim: a.edge_feature_dim,
                seed: a.seed,
                ..Default::default()
            };
            let gen = generate_power_law(&cfg)?;
            write_generated(&gen, &a.out_dir)?;
            info!(
                "generated {} nodes, {} edges",
                gen.graph.num_nodes(),
                gen.graph.num_edges()
            );
        }
        Command::InitModel(a) => {
            let dims = ModelDims {
                feature_dim: a.feature_dim,
                hidden_dim: a.hidden_dim,
                num_classes: a.classes,
            };
            let m = seeded_random_model(a.model.into(), dims, a.layers, a.seed)?;
            save_model(&m, &a.out)?;
        }
        Command::Infer(a) => infer(a)?,
        Command::Oracle(a) => oracle(a)?,
        Command::SampleInfer(a) => sample_infer(a)?,
        Command::Compare(a) => return compare(a),
        Command::MetricsExport(a) => export_metrics(&load_metrics_json(&a.input)?, &a.out)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            // Library errors already embed their cause in the message.
            let mut msg = String::new();
            for cause in e.chain().map(ToString::to_string) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
