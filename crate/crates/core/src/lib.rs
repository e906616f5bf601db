//! Full-graph GNN inference on two execution backends.
//!
//! A model is split into five stages per layer: gather in-edge messages,
//! aggregate them with a commutative and associative reduction, update the
//! node (`apply_node`), compute per-out-edge messages (`apply_edge`), and
//! scatter them. Every edge is visited once per layer, so the whole graph is
//! inferred in `K` rounds instead of recomputing each node's `K`-hop
//! neighborhood.
//!
//! - [`pregel`]: in-memory bulk-synchronous supersteps with combiners.
//! - [`mapreduce`]: map plus `K` reduce rounds over a sort-merge shuffle that
//!   spills to disk under a memory budget.
//! - [`hub`]: exact strategies for high-degree nodes.
//! - [`harness`]: the per-node k-hop oracle, sampled inference, output
//!   comparison and metrics export.

pub mod codec;
pub mod error;
pub mod gas;
pub mod graph;
pub mod harness;
pub mod hub;
pub mod mapreduce;
pub mod math;
pub mod metrics;
pub mod output;
pub mod pregel;
pub mod rng;
mod runtime;

pub use error::{Error, Result};
pub use runtime::InferenceResult;
