//! Reader and writer for the TUDataset raw text layout.
//!
//! * `<DS>_A.txt`: one edge per line, `i, j`, 1-indexed global node ids
//! * `<DS>_graph_indicator.txt`: line `n` holds the 1-indexed graph id of node `n`
//! * `<DS>_graph_labels.txt`: one integer label per graph
//! * `<DS>_node_labels.txt` (optional): one integer label per node
//!
//! Fields may be separated by commas and/or whitespace.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Dataset, Graph};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn file_path(dir: &Path, name: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{name}_{suffix}.txt"))
}

fn read_mandatory(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::format(path, format!("cannot read file: {e}")))
}

/// Parses every non-blank line into integers; returns `(line_number, values)`.
fn parse_lines(path: &Path, text: &str) -> Result<Vec<(usize, Vec<i64>)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        let values = fields
            .iter()
            .map(|f| {
                f.parse::<i64>()
                    .map_err(|_| Error::format(path, format!("line {}: not an integer: {f:?}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((i + 1, values));
    }
    Ok(out)
}

fn single_column(path: &Path, text: &str) -> Result<Vec<(usize, i64)>> {
    parse_lines(path, text)?
        .into_iter()
        .map(|(line, v)| match v.as_slice() {
            [x] => Ok((line, *x)),
            _ => Err(Error::format(path, format!("line {line}: expected one value"))),
        })
        .collect()
}

/// Maps raw integer labels onto contiguous indices in ascending raw order.
fn remap(values: &[i64]) -> (Vec<usize>, usize) {
    let mut distinct: BTreeMap<i64, usize> = values.iter().map(|&v| (v, 0)).collect();
    for (i, slot) in distinct.values_mut().enumerate() {
        *slot = i;
    }
    (values.iter().map(|v| distinct[v]).collect(), distinct.len())
}

/// Loads `<directory>/<name>_*.txt`.
///
/// Node labels, when present, are one-hot encoded into the feature matrix;
/// otherwise graphs carry zero-width features (see
/// [`degree_onehot_features`](super::degree_onehot_features)).
pub fn load_tudataset(directory: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = directory.as_ref();
    let a_path = file_path(dir, name, "A");
    let ind_path = file_path(dir, name, "graph_indicator");
    let gl_path = file_path(dir, name, "graph_labels");
    let nl_path = file_path(dir, name, "node_labels");

    let a_text = read_mandatory(&a_path)?;
    let ind_text = read_mandatory(&ind_path)?;
    let gl_text = read_mandatory(&gl_path)?;

    let indicator = single_column(&ind_path, &ind_text)?;
    let graph_labels = single_column(&gl_path, &gl_text)?;
    let num_graphs = graph_labels.len();
    let num_nodes_total = indicator.len();

    // global node -> (graph, local id)
    let mut node_graph = Vec::with_capacity(num_nodes_total);
    let mut sizes = vec![0usize; num_graphs];
    let mut local = Vec::with_capacity(num_nodes_total);
    for &(line, g) in &indicator {
        if g < 1 || g as usize > num_graphs {
            return Err(Error::format(
                &ind_path,
                format!("line {line}: graph id {g} outside 1..={num_graphs}"),
            ));
        }
        let g = g as usize - 1;
        node_graph.push(g);
        local.push(sizes[g]);
        sizes[g] += 1;
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (line, v) in parse_lines(&a_path, &a_text)? {
        let (i, j) = match v.as_slice() {
            [i, j] => (*i, *j),
            _ => return Err(Error::format(&a_path, format!("line {line}: expected two node ids"))),
        };
        let lookup = |id: i64| -> Result<usize> {
            if id < 1 || id as usize > num_nodes_total {
                Err(Error::Integrity(format!(
                    "{} line {line}: node {id} absent from graph indicator ({num_nodes_total} nodes)",
                    a_path.display()
                )))
            } else {
                Ok(id as usize - 1)
            }
        };
        let (u, w) = (lookup(i)?, lookup(j)?);
        if node_graph[u] != node_graph[w] {
            return Err(Error::Integrity(format!(
                "{} line {line}: edge ({i}, {j}) connects different graphs",
                a_path.display()
            )));
        }
        edges[node_graph[u]].push((local[u], local[w]));
    }

    let node_labels = if nl_path.exists() {
        let text = read_mandatory(&nl_path)?;
        let labels = single_column(&nl_path, &text)?;
        if labels.len() != num_nodes_total {
            return Err(Error::Integrity(format!(
                "{} has {} entries for {num_nodes_total} nodes",
                nl_path.display(),
                labels.len()
            )));
        }
        Some(remap(&labels.iter().map(|&(_, v)| v).collect::<Vec<_>>()))
    } else {
        None
    };

    let (labels, num_classes) = remap(&graph_labels.iter().map(|&(_, v)| v).collect::<Vec<_>>());
    let dim = node_labels.as_ref().map_or(0, |(_, k)| *k);
    let mut features: Vec<Tensor<f64>> = sizes.iter().map(|&n| Tensor::zeros(n, dim)).collect();
    if let Some((codes, _)) = &node_labels {
        for (global, &code) in codes.iter().enumerate() {
            features[node_graph[global]][(local[global], code)] = 1.0;
        }
    }

    let graphs = features
        .into_iter()
        .zip(edges)
        .enumerate()
        .map(|(g, (x, e))| Graph::new(sizes[g], &e, x, labels[g]))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(name, graphs, num_classes)
}

/// Writes a dataset in TUDataset layout. Node labels are written as the
/// arg-max of each feature row when the dataset has features.
pub fn write_tudataset(dataset: &Dataset, directory: impl AsRef<Path>) -> Result<()> {
    let dir = directory.as_ref();
    fs::create_dir_all(dir)?;
    let name = &dataset.name;
    let mut a = fs::File::create(file_path(dir, name, "A"))?;
    let mut ind = fs::File::create(file_path(dir, name, "graph_indicator"))?;
    let mut gl = fs::File::create(file_path(dir, name, "graph_labels"))?;
    let mut nl = if dataset.feature_dim() > 0 {
        Some(fs::File::create(file_path(dir, name, "node_labels"))?)
    } else {
        None
    };
    let mut base = 0usize;
    for (gi, g) in dataset.graphs().iter().enumerate() {
        for u in 0..g.num_nodes() {
            writeln!(ind, "{}", gi + 1)?;
            if let Some(nl) = nl.as_mut() {
                let row = g.features().row(u);
                let arg = row
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
                writeln!(nl, "{arg}")?;
            }
            for &v in g.neighbors(u) {
                writeln!(a, "{}, {}", base + u + 1, base + v + 1)?;
            }
        }
        writeln!(gl, "{}", g.label())?;
        base += g.num_nodes();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(file_path(dir, name, suffix), body).unwrap();
    }

    #[test]
    fn two_graph_toy_directory() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n2, 1\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n2\n");
        write(dir.path(), "T", "graph_labels", "-1\n1\n");
        let ds = load_tudataset(dir.path(), "T").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.graphs()[0].num_nodes(), 2);
        assert_eq!(ds.graphs()[0].num_edges(), 1);
        assert_eq!(ds.graphs()[1].num_nodes(), 1);
        assert_eq!(ds.graphs()[1].num_edges(), 0);
        assert_eq!(ds.labels(), vec![0, 1]);
        assert_eq!(ds.feature_dim(), 0);
    }

    #[test]
    fn node_labels_become_one_hot_and_self_loops_drop() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1,1\n1 ,3\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n1\n");
        write(dir.path(), "T", "graph_labels", "0\n");
        write(dir.path(), "T", "node_labels", "5\n7\n5\n");
        let ds = load_tudataset(dir.path(), "T").unwrap();
        let g = &ds.graphs()[0];
        assert_eq!(g.edge_list(), vec![(0, 2)]);
        assert_eq!(g.features().row(1), &[0.0, 1.0]);
        assert_eq!(g.features().row(2), &[1.0, 0.0]);
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n");
        let err = load_tudataset(dir.path(), "T").unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("T_graph_labels.txt"), "{err}");
    }

    #[test]
    fn dangling_node_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "T", "A", "1, 2\n2, 9\n");
        write(dir.path(), "T", "graph_indicator", "1\n1\n");
        write(dir.path(), "T", "graph_labels", "0\n");
        let err = load_tudataset(dir.path(), "T").unwrap_err();
        assert!(matches!(err, Error::Integrity(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
