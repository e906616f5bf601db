use serde::{Deserialize, Serialize};

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Degree above which a node counts as a hub.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HubThreshold {
    pub lambda: f64,
    pub total_edges: u64,
    pub total_workers: u64,
    pub threshold: u64,
}

impl HubThreshold {
    pub fn is_hub(&self, degree: usize) -> bool {
        degree as u64 > self.threshold
    }
}

/// `ceil(lambda * total_edges / total_workers)`, at least 1.
///
/// Quotients within a few ulps of an integer are snapped to it first, so
/// decimal inputs such as `0.1 * 1e9 / 1000` land on the intended integer
/// instead of the next one up.
pub fn compute_hub_threshold(lambda: f64, total_edges: u64, total_workers: u64) -> HubThreshold {
    assert!(
        lambda > 0.0 && total_workers > 0,
        "lambda and total_workers must be positive"
    );
    let q = lambda * total_edges as f64 / total_workers as f64;
    let nearest = q.round();
    let snapped = if (q - nearest).abs() <= 4.0 * f64::EPSILON * nearest.abs().max(1.0) {
        nearest
    } else {
        q.ceil()
    };
    HubThreshold {
        lambda,
        total_edges,
        total_workers,
        threshold: (snapped as u64).max(1),
    }
}
