use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::RunMetrics;

pub const METRICS_COLUMNS: [&str; 14] = [
    "backend",
    "worker",
    "step",
    "msgs_in",
    "msgs_out",
    "bytes_in",
    "bytes_out",
    "bcast_in",
    "bcast_out",
    "combiner_savings",
    "max_inbound",
    "peak_group",
    "spilled_runs",
    "wall_ms",
];

/// Metrics as CSV in a fixed column order: one row per `(step, worker)`, then
/// a `total` row and a `tail_decile` row holding the mean input bytes of the
/// busiest tenth of workers.
pub fn metrics_to_csv(metrics: &RunMetrics) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_COLUMNS)?;
    for m in &metrics.steps {
        w.write_record([
            metrics.backend.clone(),
            m.worker.to_string(),
            m.step.to_string(),
            m.msgs_in.to_string(),
            m.msgs_out.to_string(),
            m.bytes_in.to_string(),
            m.bytes_out.to_string(),
            m.bcast_in.to_string(),
            m.bcast_out.to_string(),
            m.combiner_savings.to_string(),
            m.max_inbound.to_string(),
            m.peak_group.to_string(),
            m.spilled_runs.to_string(),
            format!("{:.3}", m.wall_ms),
        ])?;
    }
    let t = metrics.totals();
    w.write_record([
        metrics.backend.clone(),
        "total".into(),
        "total".into(),
        t.msgs_in.to_string(),
        t.msgs_out.to_string(),
        t.bytes_in.to_string(),
        t.bytes_out.to_string(),
        t.bcast_in.to_string(),
        t.bcast_out.to_string(),
        t.combiner_savings.to_string(),
        metrics.max_inbound().to_string(),
        metrics.max_peak_group().to_string(),
        metrics.total_spilled_runs().to_string(),
        format!("{:.3}", t.wall_ms),
    ])?;
    let mut tail = vec![String::new(); METRICS_COLUMNS.len()];
    tail[0] = metrics.backend.clone();
    tail[1] = "tail_decile".into();
    tail[2] = "all".into();
    tail[5] = format!("{:.1}", metrics.tail_decile_bytes_in());
    w.write_record(&tail)?;
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn export_metrics(metrics: &RunMetrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = metrics_to_csv(metrics)?;
    File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn save_metrics_json(metrics: &RunMetrics, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(metrics)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_metrics_json(path: impl AsRef<Path>) -> Result<RunMetrics> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunMetrics {
        let mut m = RunMetrics::new("pregel", 2, 2);
        m.get_mut(0, 0).msgs_out = 3;
        m.get_mut(0, 0).bytes_out = 60;
        m.get_mut(1, 1).msgs_in = 3;
        m.get_mut(1, 1).bytes_in = 60;
        m.get_mut(1, 1).max_inbound = 2;
        m
    }

    #[test]
    fn csv_layout() {
        let text = metrics_to_csv(&sample()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert_eq!(lines[0], METRICS_COLUMNS.join(","));
        assert_eq!(lines[1], "pregel,0,0,0,3,0,60,0,0,0,0,0,0,0.000");
        assert_eq!(lines[5], "pregel,total,total,3,3,60,60,0,0,0,2,0,0,0.000");
        assert_eq!(lines[6], "pregel,tail_decile,all,,,60.0,,,,,,,,");
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_metrics_json(&sample(), &p).unwrap();
        assert_eq!(load_metrics_json(&p).unwrap(), sample());
        export_metrics(&sample(), dir.path().join("m.csv")).unwrap();
    }
}
