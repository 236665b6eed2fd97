//! Readers and writers for the node-classification dataset layout.
//!
//! Edge file: UTF-8, one `u<TAB>v` pair per line, 0-indexed.
//! Node file: CSV with header `node_id,label,f_1,...,f_d`; the label may be
//! empty.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;

use super::{DataSplit, Graph};
use crate::error::{Error, Result};
use crate::numfmt::format_g17;

/// Loads a graph from an edge file and a node file.
///
/// The node count is the largest node id in the node file plus one; ids
/// without a row get zero features and no label. Edges listed in both
/// directions are merged, while a repeated identical line is an error.
pub fn load_node_classification_dataset(edge_path: &Path, node_path: &Path) -> Result<Graph> {
    let (features, labels) = read_nodes(node_path)?;
    let n = labels.len();
    let edges = read_edges(edge_path, n)?;
    Graph::from_edges_shared(n, &edges, Arc::new(features), labels, None)
}

fn read_nodes(path: &Path) -> Result<(Array2<f64>, Vec<Option<u32>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || &header[0] != "node_id" || &header[1] != "label" {
        return Err(Error::parse(path, 1, "header must start with node_id,label"));
    }
    let dim = header.len() - 2;

    let mut rows: Vec<(usize, Option<u32>, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad node id {:?}", &record[0])))?;
        let label = match record[1].trim() {
            "" => None,
            s => Some(
                s.parse::<u32>()
                    .map_err(|_| Error::parse(path, line, format!("bad label {s:?}")))?,
            ),
        };
        let feats = record
            .iter()
            .skip(2)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, line, format!("bad feature {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, label, feats));
    }

    let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let mut features = Array2::zeros((n, dim));
    let mut labels = vec![None; n];
    let mut seen = vec![false; n];
    for (i, (id, label, feats)) in rows.into_iter().enumerate() {
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::parse(path, i + 2, format!("duplicate row for node {id}")));
        }
        labels[id] = label;
        for (j, x) in feats.into_iter().enumerate() {
            features[[id, j]] = x;
        }
    }
    Ok((features, labels))
}

fn read_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines_seen: HashSet<(usize, usize)> = HashSet::new();
    let mut undirected: HashSet<(usize, usize)> = HashSet::new();
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, lineno, "expected two tab-separated node ids"));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(path, lineno, format!("bad node id {s:?}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        for x in [u, v] {
            if x >= num_nodes {
                return Err(Error::Range {
                    index: x,
                    limit: num_nodes,
                    context: "edge endpoint",
                });
            }
        }
        if u == v {
            return Err(Error::parse(path, lineno, format!("self-loop on node {u}")));
        }
        if !lines_seen.insert((u, v)) {
            return Err(Error::parse(path, lineno, format!("duplicate edge {u}\t{v}")));
        }
        if undirected.insert((u.min(v), u.max(v))) {
            edges.push((u.min(v), u.max(v)));
        }
    }
    Ok(edges)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Writes `graph` in the edge/node layout read by
/// [`load_node_classification_dataset`].
pub fn write_node_classification_dataset(graph: &Graph, edge_path: &Path, node_path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(edge_path).map_err(|e| Error::io(edge_path, e))?);
    for (u, v) in graph.edges() {
        writeln!(out, "{u}\t{v}").map_err(|e| Error::io(edge_path, e))?;
    }
    out.flush().map_err(|e| Error::io(edge_path, e))?;

    let mut out = BufWriter::new(File::create(node_path).map_err(|e| Error::io(node_path, e))?);
    let mut header = String::from("node_id,label");
    for j in 1..=graph.feature_dim() {
        header.push_str(&format!(",f_{j}"));
    }
    writeln!(out, "{header}").map_err(|e| Error::io(node_path, e))?;
    for (v, row) in graph.features().rows().into_iter().enumerate() {
        let mut line = format!("{v},{}", graph.labels()[v].map(|y| y.to_string()).unwrap_or_default());
        for &x in row {
            line.push(',');
            line.push_str(&format_g17(x));
        }
        writeln!(out, "{line}").map_err(|e| Error::io(node_path, e))?;
    }
    out.flush().map_err(|e| Error::io(node_path, e))
}

pub fn write_split(split: &DataSplit, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), split)?;
    Ok(())
}

pub fn read_split(path: &Path, num_nodes: usize) -> Result<DataSplit> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let split: DataSplit = serde_json::from_reader(BufReader::new(file))?;
    split.validate(num_nodes)?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn single_edge_is_symmetrized() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "0\t1\n");
        let n = write(dir.path(), "n.csv", "node_id,label,f_1\n0,0,1.0\n1,1,2.0\n");
        let g = load_node_classification_dataset(&e, &n).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(g.num_classes(), 2);
    }

    #[test]
    fn empty_edge_file() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "e.tsv", "");
        let n = write(dir.path(), "n.csv", "node_id,label,f_1\n0,,0\n1,0,0\n2,1,0\n");
        let g = load_node_classification_dataset(&e, &n).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges()), (3, 0));
        assert_eq!(g.labels()[0], None);
    }

    #[test]
    fn reverse_pairs_merge_but_repeats_fail() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "node_id,label,f_1\n0,0,0\n1,0,0\n");
        let e = write(dir.path(), "e.tsv", "0\t1\n1\t0\n");
        assert_eq!(load_node_classification_dataset(&e, &n).unwrap().num_edges(), 1);
        let e = write(dir.path(), "e2.tsv", "0\t1\n0\t1\n");
        let err = load_node_classification_dataset(&e, &n).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn error_paths_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let n = write(dir.path(), "n.csv", "node_id,label,f_1\n0,0,0\n1,0,0\n");
        let e = write(dir.path(), "bad.tsv", "0\t1\n1 0\n");
        assert!(matches!(
            load_node_classification_dataset(&e, &n),
            Err(Error::Parse { line: 2, .. })
        ));
        let e = write(dir.path(), "range.tsv", "0\t5\n");
        assert!(matches!(
            load_node_classification_dataset(&e, &n),
            Err(Error::Range { .. })
        ));
        let e = write(dir.path(), "loop.tsv", "1\t1\n");
        assert!(matches!(
            load_node_classification_dataset(&e, &n),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad_nodes = write(dir.path(), "bn.csv", "node_id,label,f_1\n0,x,0\n");
        let e = write(dir.path(), "ok.tsv", "");
        assert!(matches!(
            load_node_classification_dataset(&e, &bad_nodes),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
