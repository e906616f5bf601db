use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{FeatureVector, Graph, GraphBuilder, NodeId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Add `(v, u)` for every `(u, v)`; undirected datasets are loaded this way.
    pub add_reverse_edges: bool,
    /// Add `(v, v)` once per node. Also permits self-loops in the input.
    pub add_self_loops: bool,
}

fn parse_floats(field: &str) -> std::result::Result<FeatureVector, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|t| {
            let v = t
                .trim()
                .parse::<f32>()
                .map_err(|e| format!("bad float {t:?}: {e}"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite value {t:?}"))
            }
        })
        .collect()
}

fn parse_ids(field: &str) -> std::result::Result<Vec<NodeId>, String> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field.split(',').map(str::parse).collect()
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let owned = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(&owned, e))))
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty())))
}

/// Load a node table and an edge table.
///
/// The node table carries `<id>\t<features>\t<neighbors>`, the edge table
/// `<src>\t<dst>\t<edge features>`. Adjacency is the union of both sources;
/// edges named only in a neighbor list get zero edge features.
pub fn ingest_tables(
    node_table: impl AsRef<Path>,
    edge_table: impl AsRef<Path>,
    options: &IngestOptions,
) -> Result<Graph> {
    let node_path = node_table.as_ref();
    let edge_path = edge_table.as_ref();
    let perr = |path: &Path, line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut rows = Vec::new();
    let mut feature_dim = None;
    for (line_no, line) in lines(node_path)? {
        let line = line?;
        let mut fields = line.split('\t');
        let id: NodeId = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|m| perr(node_path, line_no, m))?;
        let feats =
            parse_floats(fields.next().unwrap_or("")).map_err(|m| perr(node_path, line_no, m))?;
        let nbrs =
            parse_ids(fields.next().unwrap_or("")).map_err(|m| perr(node_path, line_no, m))?;
        if fields.next().is_some() {
            return Err(perr(node_path, line_no, "too many fields".into()));
        }
        let dim = *feature_dim.get_or_insert(feats.len());
        if feats.len() != dim {
            return Err(perr(
                node_path,
                line_no,
                format!("expected {dim} features, found {}", feats.len()),
            ));
        }
        rows.push((line_no, id, feats, nbrs));
    }

    let mut edges = Vec::new();
    let mut edge_dim = None;
    for (line_no, line) in lines(edge_path)? {
        let line = line?;
        let mut fields = line.split('\t');
        let src: NodeId = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|m| perr(edge_path, line_no, m))?;
        let dst: NodeId = fields
            .next()
            .ok_or_else(|| perr(edge_path, line_no, "missing destination".into()))?
            .parse()
            .map_err(|m| perr(edge_path, line_no, m))?;
        let feats =
            parse_floats(fields.next().unwrap_or("")).map_err(|m| perr(edge_path, line_no, m))?;
        if fields.next().is_some() {
            return Err(perr(edge_path, line_no, "too many fields".into()));
        }
        let dim = *edge_dim.get_or_insert(feats.len());
        if feats.len() != dim {
            return Err(perr(
                edge_path,
                line_no,
                format!("expected {dim} edge features, found {}", feats.len()),
            ));
        }
        edges.push((line_no, src, dst, feats));
    }
    let edge_dim = edge_dim.unwrap_or(0);

    let mut builder = GraphBuilder::new(feature_dim.unwrap_or(0)).with_edge_feature_dim(edge_dim);
    let mut seen: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(edges.len());
    for (line_no, src, dst, feats) in edges {
        if !seen.insert((src, dst)) {
            return Err(perr(
                edge_path,
                line_no,
                format!("duplicate edge {src} -> {dst}"),
            ));
        }
        builder.add_edge(src, dst, feats)?;
    }
    let mut listed: HashSet<(NodeId, NodeId)> = HashSet::new();
    for (line_no, id, feats, nbrs) in rows {
        builder
            .add_node(id, feats)
            .map_err(|e| perr(node_path, line_no, e.to_string()))?;
        for nbr in nbrs {
            if !listed.insert((id, nbr)) {
                return Err(perr(
                    node_path,
                    line_no,
                    format!("duplicate neighbor {nbr}"),
                ));
            }
            if !seen.contains(&(id, nbr)) {
                builder.add_edge(id, nbr, vec![0.0; edge_dim])?;
            }
        }
    }
    builder.build(options)
}

fn join_floats(v: &[f32]) -> String {
    let mut s = String::with_capacity(v.len() * 8);
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&x.to_string());
    }
    s
}

pub fn write_node_table(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for n in graph.nodes() {
        let nbrs: Vec<String> = n.out_nbrs.iter().map(|e| e.dst.to_string()).collect();
        writeln!(
            w,
            "{}\t{}\t{}",
            n.id,
            join_floats(&n.features),
            nbrs.join(",")
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_edge_table(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for n in graph.nodes() {
        for e in &n.out_nbrs {
            writeln!(w, "{}\t{}\t{}", n.id, e.dst, join_floats(&e.features))
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
