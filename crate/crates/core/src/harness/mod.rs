//! Reference oracle, sampled baseline, output comparison and metrics export.

mod compare;
mod export;
mod khop;
mod sampled;

pub use compare::{compare_outputs, compare_runs, ComparisonReport};
pub use export::{
    export_metrics, load_metrics_json, metrics_to_csv, save_metrics_json, METRICS_COLUMNS,
};
pub use khop::{oracle_khop_forward, InEdgeIndex, KHopNeighborhood, OracleResult};
pub use sampled::sampled_inference;
