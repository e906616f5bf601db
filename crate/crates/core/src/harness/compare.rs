use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::output::OutputRow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub nodes: usize,
    pub max_abs_diff: f64,
    pub mismatched_class_count: usize,
    pub runs: usize,
    /// Nodes that received more than one distinct class across runs.
    pub multi_class_nodes: usize,
    /// Number of distinct classes seen -> number of nodes.
    pub class_count_histogram: BTreeMap<usize, usize>,
}

impl ComparisonReport {
    pub fn passed(&self, atol: f64) -> bool {
        self.max_abs_diff <= atol && self.mismatched_class_count == 0
    }
}

fn index_rows(rows: &[OutputRow]) -> Result<BTreeMap<NodeId, &OutputRow>> {
    let mut map = BTreeMap::new();
    for r in rows {
        if map.insert(r.id, r).is_some() {
            return Err(Error::DuplicateNode(r.id));
        }
    }
    Ok(map)
}

fn describe_difference(
    a: &BTreeMap<NodeId, &OutputRow>,
    b: &BTreeMap<NodeId, &OutputRow>,
) -> String {
    let ka: BTreeSet<_> = a.keys().collect();
    let kb: BTreeSet<_> = b.keys().collect();
    let only_a = ka.difference(&kb).next();
    let only_b = kb.difference(&ka).next();
    match (only_a, only_b) {
        (Some(id), _) => format!(
            "node {id} missing from second output ({} vs {} rows)",
            a.len(),
            b.len()
        ),
        (_, Some(id)) => format!(
            "node {id} missing from first output ({} vs {} rows)",
            a.len(),
            b.len()
        ),
        _ => "node sets differ".to_string(),
    }
}

fn row_diff(a: &OutputRow, b: &OutputRow) -> f64 {
    if a.logits.len() != b.logits.len() {
        return f64::INFINITY;
    }
    a.logits
        .iter()
        .zip(&b.logits)
        .map(|(x, y)| {
            let d = (f64::from(*x) - f64::from(*y)).abs();
            if d.is_nan() {
                f64::INFINITY
            } else {
                d
            }
        })
        .fold(0.0, f64::max)
}

/// Element-wise comparison of two outputs over the same node set. The
/// tolerance only matters to [`ComparisonReport::passed`].
pub fn compare_outputs(a: &[OutputRow], b: &[OutputRow], _atol: f64) -> Result<ComparisonReport> {
    compare_runs(&[a.to_vec(), b.to_vec()])
}

/// Compares every run against the first and tallies distinct classes per node.
pub fn compare_runs(runs: &[Vec<OutputRow>]) -> Result<ComparisonReport> {
    let Some(first) = runs.first() else {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    };
    let base = index_rows(first)?;
    let mut max_abs_diff = 0.0f64;
    let mut mismatched = BTreeSet::new();
    let mut classes: BTreeMap<NodeId, BTreeSet<usize>> = base
        .iter()
        .map(|(&id, r)| (id, BTreeSet::from([r.class])))
        .collect();
    for run in &runs[1..] {
        let other = index_rows(run)?;
        if other.len() != base.len() || other.keys().zip(base.keys()).any(|(x, y)| x != y) {
            return Err(Error::IdSetMismatch(describe_difference(&base, &other)));
        }
        for (id, r) in &other {
            let b = base[id];
            max_abs_diff = max_abs_diff.max(row_diff(b, r));
            if b.class != r.class {
                mismatched.insert(*id);
            }
            classes.get_mut(id).expect("same id set").insert(r.class);
        }
    }
    let mut class_count_histogram = BTreeMap::new();
    for set in classes.values() {
        *class_count_histogram.entry(set.len()).or_insert(0) += 1;
    }
    Ok(ComparisonReport {
        nodes: base.len(),
        max_abs_diff,
        mismatched_class_count: mismatched.len(),
        runs: runs.len(),
        multi_class_nodes: classes.values().filter(|s| s.len() > 1).count(),
        class_count_histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: u64, class: usize, logits: &[f32]) -> OutputRow {
        OutputRow {
            id: NodeId::new(id),
            class,
            logits: logits.to_vec(),
        }
    }

    #[test]
    fn identical_outputs_pass() {
        let a = vec![row(1, 0, &[1.0, 0.0]), row(2, 1, &[0.0, 1.0])];
        let r = compare_outputs(&a, &a, 1e-4).unwrap();
        assert!(r.passed(1e-4));
        assert_eq!(r.max_abs_diff, 0.0);
        assert_eq!(r.multi_class_nodes, 0);
        assert_eq!(r.class_count_histogram, BTreeMap::from([(1, 2)]));
    }

    #[test]
    fn order_does_not_matter() {
        let a = vec![row(1, 0, &[1.0]), row(2, 0, &[2.0])];
        let b = vec![row(2, 0, &[2.0]), row(1, 0, &[1.0])];
        assert!(compare_outputs(&a, &b, 0.0).unwrap().passed(0.0));
    }

    #[test]
    fn class_flip_counts() {
        let a = vec![row(1, 0, &[1.0, 0.99])];
        let b = vec![row(1, 1, &[0.99, 1.0])];
        let r = compare_outputs(&a, &b, 1e-4).unwrap();
        assert_eq!(r.mismatched_class_count, 1);
        assert_eq!(r.multi_class_nodes, 1);
        assert!((r.max_abs_diff - 0.01).abs() < 1e-6);
        assert!(!r.passed(1e-4));
    }

    #[test]
    fn nan_never_passes() {
        let a = vec![row(1, 0, &[f32::NAN])];
        let r = compare_outputs(&a, &a, 1e-4).unwrap();
        assert!(!r.passed(1e-4));
    }

    #[test]
    fn differing_ids_are_an_error() {
        let a = vec![row(1, 0, &[1.0])];
        let b = vec![row(2, 0, &[1.0])];
        assert!(matches!(
            compare_outputs(&a, &b, 1e-4),
            Err(Error::IdSetMismatch(_))
        ));
        let c = vec![row(1, 0, &[1.0]), row(2, 0, &[1.0])];
        assert!(matches!(
            compare_outputs(&a, &c, 1e-4),
            Err(Error::IdSetMismatch(_))
        ));
    }

    #[test]
    fn runs_histogram() {
        let runs = vec![
            vec![row(1, 0, &[0.0]), row(2, 0, &[0.0])],
            vec![row(1, 1, &[0.0]), row(2, 0, &[0.0])],
            vec![row(1, 2, &[0.0]), row(2, 0, &[0.0])],
        ];
        let r = compare_runs(&runs).unwrap();
        assert_eq!(r.runs, 3);
        assert_eq!(r.multi_class_nodes, 1);
        assert_eq!(r.class_count_histogram, BTreeMap::from([(1, 1), (3, 1)]));
    }
}
