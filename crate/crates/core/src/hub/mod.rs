//! Exact mitigations for skewed degree distributions: sender-side partial
//! gather, per-worker broadcast of uniform messages, and shadow mirrors of
//! high out-degree nodes.

mod broadcast;
mod shadow;
mod threshold;

use serde::{Deserialize, Serialize};

use crate::gas::{GnnLayer, ModelBundle};

pub use broadcast::{broadcast_encode, broadcast_resolve, BroadcastEncoding, BroadcastRegistry};
pub use shadow::{plan_shadow_nodes, plan_shadow_nodes_capped, ShadowPlan, MAX_MIRRORS};
pub use threshold::{compute_hub_threshold, HubThreshold, DEFAULT_LAMBDA};

/// Which strategies a run asks for. A requested strategy is applied to a
/// layer only where that layer is eligible for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub partial_gather: bool,
    pub broadcast: bool,
    pub shadow_nodes: bool,
    pub lambda: f64,
    pub threshold_override: Option<u64>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig::none()
    }
}

/// Strategies in effect for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerStrategy {
    pub partial_gather: bool,
    pub broadcast: bool,
}

impl StrategyConfig {
    pub fn none() -> Self {
        StrategyConfig {
            partial_gather: false,
            broadcast: false,
            shadow_nodes: false,
            lambda: DEFAULT_LAMBDA,
            threshold_override: None,
        }
    }

    /// The strategies the model's layer signatures ask for.
    pub fn from_model(model: &ModelBundle) -> Self {
        let any = |f: fn(&GnnLayer) -> bool| model.layers.iter().any(f);
        StrategyConfig {
            partial_gather: any(|l| l.signature.partial_gather),
            broadcast: any(|l| l.signature.broadcast),
            shadow_nodes: any(|l| l.signature.shadow_nodes),
            ..StrategyConfig::none()
        }
    }

    /// Parse a comma-separated subset of `pg`, `bc`, `sn` (or `none`).
    pub fn with_enabled(mut self, spec: &str) -> Result<Self, String> {
        self.partial_gather = false;
        self.broadcast = false;
        self.shadow_nodes = false;
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part {
                "pg" | "partial-gather" => self.partial_gather = true,
                "bc" | "broadcast" => self.broadcast = true,
                "sn" | "shadow-nodes" => self.shadow_nodes = true,
                "none" => {}
                other => return Err(format!("unknown strategy {other:?} (pg|bc|sn)")),
            }
        }
        Ok(self)
    }

    /// All eight subsets of the three strategies.
    pub fn all_subsets() -> Vec<StrategyConfig> {
        (0..8u8)
            .map(|bits| StrategyConfig {
                partial_gather: bits & 1 != 0,
                broadcast: bits & 2 != 0,
                shadow_nodes: bits & 4 != 0,
                ..StrategyConfig::none()
            })
            .collect()
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.partial_gather {
            parts.push("pg");
        }
        if self.broadcast {
            parts.push("bc");
        }
        if self.shadow_nodes {
            parts.push("sn");
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join(",")
        }
    }

    pub fn for_layer(&self, layer: &GnnLayer) -> LayerStrategy {
        LayerStrategy {
            partial_gather: self.partial_gather && layer.signature.aggregate_is_size_reducing,
            broadcast: self.broadcast && layer.signature.message_uniform_over_out_edges,
        }
    }

    pub fn threshold(&self, total_edges: usize, total_workers: usize) -> u64 {
        match self.threshold_override {
            Some(t) => t.max(1),
            None => {
                compute_hub_threshold(self.lambda, total_edges as u64, total_workers as u64)
                    .threshold
            }
        }
    }
}
