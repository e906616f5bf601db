//! Per-worker, per-step communication counters.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub worker: usize,
    pub step: usize,
    pub msgs_in: u64,
    pub msgs_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Broadcast payloads registered at other workers (out) or received (in).
    pub bcast_in: u64,
    pub bcast_out: u64,
    /// Messages merged away by sender-side combining.
    pub combiner_savings: u64,
    /// Largest number of messages any single node received.
    pub max_inbound: u64,
    /// Largest number of records in one reducer key group (MR only).
    pub peak_group: u64,
    pub spilled_runs: u64,
    pub wall_ms: f64,
}

impl StepMetrics {
    pub fn new(worker: usize, step: usize) -> Self {
        StepMetrics {
            worker,
            step,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub backend: String,
    pub num_workers: usize,
    pub num_steps: usize,
    /// Sorted by `(step, worker)`.
    pub steps: Vec<StepMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub msgs_in: u64,
    pub msgs_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub bcast_in: u64,
    pub bcast_out: u64,
    pub combiner_savings: u64,
    pub wall_ms: f64,
}

impl RunMetrics {
    pub fn new(backend: &str, num_workers: usize, num_steps: usize) -> Self {
        let steps = (0..num_steps)
            .flat_map(|s| (0..num_workers).map(move |w| StepMetrics::new(w, s)))
            .collect();
        RunMetrics {
            backend: backend.to_string(),
            num_workers,
            num_steps,
            steps,
        }
    }

    pub fn get(&self, worker: usize, step: usize) -> &StepMetrics {
        &self.steps[step * self.num_workers + worker]
    }

    pub fn get_mut(&mut self, worker: usize, step: usize) -> &mut StepMetrics {
        &mut self.steps[step * self.num_workers + worker]
    }

    /// Stores `m` in the slot named by its own worker and step.
    pub fn record(&mut self, m: StepMetrics) {
        let (w, s) = (m.worker, m.step);
        *self.get_mut(w, s) = m;
    }

    pub fn step(&self, step: usize) -> &[StepMetrics] {
        &self.steps[step * self.num_workers..(step + 1) * self.num_workers]
    }

    fn sum(rows: &[StepMetrics]) -> Totals {
        rows.iter().fold(Totals::default(), |mut t, m| {
            t.msgs_in += m.msgs_in;
            t.msgs_out += m.msgs_out;
            t.bytes_in += m.bytes_in;
            t.bytes_out += m.bytes_out;
            t.bcast_in += m.bcast_in;
            t.bcast_out += m.bcast_out;
            t.combiner_savings += m.combiner_savings;
            t.wall_ms += m.wall_ms;
            t
        })
    }

    pub fn step_totals(&self, step: usize) -> Totals {
        Self::sum(self.step(step))
    }

    pub fn totals(&self) -> Totals {
        Self::sum(&self.steps)
    }

    /// Everything sent in step `t` is received in step `t + 1`.
    pub fn check_conservation(&self) -> Result<(), String> {
        for t in 0..self.num_steps {
            let out = self.step_totals(t);
            let (msgs_in, bytes_in, bcast_in) = if t + 1 < self.num_steps {
                let n = self.step_totals(t + 1);
                (n.msgs_in, n.bytes_in, n.bcast_in)
            } else {
                (0, 0, 0)
            };
            if out.msgs_out != msgs_in || out.bytes_out != bytes_in || out.bcast_out != bcast_in {
                return Err(format!(
                    "step {t}: sent {} msgs / {} bytes / {} payloads, next step received {msgs_in} / {bytes_in} / {bcast_in}",
                    out.msgs_out, out.bytes_out, out.bcast_out
                ));
            }
        }
        Ok(())
    }

    pub fn max_inbound(&self) -> u64 {
        self.steps.iter().map(|m| m.max_inbound).max().unwrap_or(0)
    }

    pub fn max_peak_group(&self) -> u64 {
        self.steps.iter().map(|m| m.peak_group).max().unwrap_or(0)
    }

    pub fn total_spilled_runs(&self) -> u64 {
        self.steps.iter().map(|m| m.spilled_runs).sum()
    }

    /// Input bytes per worker summed over all steps.
    pub fn worker_bytes_in(&self) -> Vec<u64> {
        let mut v = vec![0u64; self.num_workers];
        for m in &self.steps {
            v[m.worker] += m.bytes_in;
        }
        v
    }

    pub fn worker_bytes_out(&self) -> Vec<u64> {
        let mut v = vec![0u64; self.num_workers];
        for m in &self.steps {
            v[m.worker] += m.bytes_out;
        }
        v
    }

    /// Mean input bytes over the top decile of workers (at least one).
    pub fn tail_decile_bytes_in(&self) -> f64 {
        tail_decile_mean(&self.worker_bytes_in())
    }
}

/// Mean of the largest `ceil(n / 10)` values.
pub fn tail_decile_mean(values: &[u64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| b.cmp(a));
    let k = v.len().div_ceil(10);
    v[..k].iter().sum::<u64>() as f64 / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conservation_detects_loss() {
        let mut m = RunMetrics::new("t", 2, 2);
        m.get_mut(0, 0).msgs_out = 3;
        m.get_mut(1, 1).msgs_in = 2;
        m.get_mut(0, 1).msgs_in = 1;
        assert!(m.check_conservation().is_ok());
        m.get_mut(0, 1).msgs_in = 0;
        assert!(m.check_conservation().is_err());
    }

    #[test]
    fn tail_decile() {
        assert_eq!(tail_decile_mean(&[1, 9, 3]), 9.0);
        let v: Vec<u64> = (1..=20).collect();
        assert_eq!(tail_decile_mean(&v), 19.5);
        assert_eq!(tail_decile_mean(&[]), 0.0);
    }
}
