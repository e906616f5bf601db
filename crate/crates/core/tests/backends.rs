use fullgraph::gas::{seeded_random_model, Algorithm, ModelDims};
use fullgraph::graph::{
    generate_power_law, ingest_tables, write_edge_table, write_node_table, IngestOptions,
    PowerLawConfig, SkewMode,
};
use fullgraph::harness::{compare_outputs, oracle_khop_forward};
use fullgraph::hub::StrategyConfig;
use fullgraph::mapreduce::{run_mr_inference, MrConfig};
use fullgraph::output::{format_output_table, read_output_table, write_output_table};
use fullgraph::pregel::{run_pregel_inference, PregelConfig};
use proptest::prelude::*;

fn skew(i: u8) -> SkewMode {
    [SkewMode::In, SkewMode::Out, SkewMode::Both][i as usize % 3]
}

fn alg(i: u8) -> Algorithm {
    [Algorithm::Sage, Algorithm::Gat, Algorithm::Gcn][i as usize % 3]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn backends_match_oracle(
        seed in 0u64..1000,
        nodes in 20usize..120,
        density in 2usize..8,
        skew_i in 0u8..3,
        alg_i in 0u8..3,
        layers in 1usize..4,
        workers in 1usize..6,
        bits in 0usize..8,
        budget in prop::option::of(512usize..8192),
    ) {
        let g = generate_power_law(&PowerLawConfig {
            num_nodes: nodes,
            target_edges: nodes * density,
            skew: skew(skew_i),
            feature_dim: 5,
            seed,
            ..Default::default()
        })
        .unwrap()
        .graph;
        let dims = ModelDims { feature_dim: 5, hidden_dim: 6, num_classes: 3 };
        let m = seeded_random_model(alg(alg_i), dims, layers, seed ^ 0x55).unwrap();
        let s = StrategyConfig::all_subsets()[bits];
        let oracle = oracle_khop_forward(&g, &m, None).unwrap().rows;
        let p = run_pregel_inference(&g, &m, &PregelConfig::new(workers, s)).unwrap();
        let mut cfg = MrConfig::new(workers, s);
        cfg.memory_budget_bytes = budget;
        let r = run_mr_inference(&g, &m, &cfg).unwrap();
        for rows in [&p.rows, &r.rows] {
            let rep = compare_outputs(&oracle, rows, 1e-4).unwrap();
            prop_assert!(rep.passed(1e-4), "{rep:?}");
        }
        prop_assert_eq!(format_output_table(&p.rows), format_output_table(&r.rows));
    }
}

#[test]
fn tables_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let g = generate_power_law(&PowerLawConfig {
        num_nodes: 150,
        target_edges: 900,
        skew: SkewMode::Both,
        feature_dim: 4,
        seed: 9,
        ..Default::default()
    })
    .unwrap()
    .graph;
    let (nodes, edges) = (dir.path().join("nodes.tsv"), dir.path().join("edges.tsv"));
    write_node_table(&g, &nodes).unwrap();
    write_edge_table(&g, &edges).unwrap();
    let loaded = ingest_tables(&nodes, &edges, &IngestOptions::default()).unwrap();
    assert_eq!(loaded.num_edges(), g.num_edges());

    let dims = ModelDims {
        feature_dim: 4,
        hidden_dim: 8,
        num_classes: 2,
    };
    let m = seeded_random_model(Algorithm::Gcn, dims, 2, 4).unwrap();
    let a = run_pregel_inference(&g, &m, &PregelConfig::new(3, StrategyConfig::none())).unwrap();
    let b =
        run_pregel_inference(&loaded, &m, &PregelConfig::new(3, StrategyConfig::none())).unwrap();
    assert_eq!(format_output_table(&a.rows), format_output_table(&b.rows));

    let out = dir.path().join("out.tsv");
    write_output_table(&a.rows, &out).unwrap();
    let back = read_output_table(&out).unwrap();
    assert!(compare_outputs(&a.rows, &back, 1e-6).unwrap().passed(1e-6));
}
