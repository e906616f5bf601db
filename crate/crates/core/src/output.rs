//! Prediction rows and the output table format `<id>\t<class>\t<l1,...,lC>`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct OutputRow {
    pub id: NodeId,
    pub class: usize,
    pub logits: Vec<f32>,
}

fn format_row(row: &OutputRow, out: &mut String) {
    use std::fmt::Write as _;
    let _ = write!(out, "{}\t{}\t", row.id, row.class);
    for (i, l) in row.logits.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{l}");
    }
    out.push('\n');
}

/// Serialized table; rows are written in the order given.
pub fn format_output_table(rows: &[OutputRow]) -> String {
    let mut s = String::new();
    for r in rows {
        format_row(r, &mut s);
    }
    s
}

pub fn write_output_table(rows: &[OutputRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut line = String::new();
    for r in rows {
        line.clear();
        format_row(r, &mut line);
        w.write_all(line.as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_output_table(path: impl AsRef<Path>) -> Result<Vec<OutputRow>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let mut cols = line.split('\t');
        let (Some(id), Some(class), Some(logits), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(err("expected 3 tab-separated columns".into()));
        };
        let id: NodeId = id.parse().map_err(err)?;
        let class: usize = class
            .trim()
            .parse()
            .map_err(|e| err(format!("bad class: {e}")))?;
        let logits = logits
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(format!("bad logit: {e}")))?;
        rows.push(OutputRow { id, class, logits });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let rows = vec![
            OutputRow {
                id: NodeId::new(3),
                class: 1,
                logits: vec![0.1, -2.5e-9, 7.0],
            },
            OutputRow {
                id: NodeId::new(10),
                class: 0,
                logits: vec![f32::MIN_POSITIVE, 1.0 / 3.0, 0.0],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.tsv");
        write_output_table(&rows, &p).unwrap();
        assert_eq!(read_output_table(&p).unwrap(), rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("3\t1\t0.1,"));
    }

    #[test]
    fn malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        std::fs::write(&p, "1\t0\t0.5\n2\tzero\t1\n").unwrap();
        assert!(matches!(
            read_output_table(&p),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
