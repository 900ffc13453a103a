//! Graph data model: undirected graphs in CSR form with node features and a
//! class label, and datasets of such graphs.

mod features;
mod named;
mod split;
pub mod synthetic;
mod tudataset;

pub use features::{dataset_max_degree, degree_onehot_features};
pub use named::{load_dataset, tudataset_available, SYNTHETIC_DATASETS};
pub use split::{stratified_kfold, FoldSplit};
pub use tudataset::{load_tudataset, write_tudataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Simple undirected graph. Both edge directions are stored; neighbor lists are
/// sorted, free of self-loops and duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Tensor<f64>,
    label: usize,
}

impl Graph {
    /// Builds a graph from an edge list. Self-loops are dropped, duplicates
    /// merged and every edge stored in both directions.
    pub fn new(num_nodes: usize, edges: &[(usize, usize)], features: Tensor<f64>, label: usize) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(Error::Integrity(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                num_nodes
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Integrity(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Graph {
            num_nodes,
            offsets,
            neighbors,
            features,
            label,
        })
    }

    /// Graph whose nodes all carry the single feature `1.0`.
    pub fn unit_features(num_nodes: usize, edges: &[(usize, usize)], label: usize) -> Result<Self> {
        Self::new(num_nodes, edges, Tensor::filled(num_nodes, 1, 1.0), label)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn features(&self) -> &Tensor<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// CSR row offsets (length `num_nodes + 1`).
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// Concatenated CSR neighbor lists.
    pub fn adjacency(&self) -> &[usize] {
        &self.neighbors
    }

    /// Sorted list of undirected edges `(u, v)` with `u < v`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        (0..self.num_nodes)
            .flat_map(|u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect()
    }

    /// Same graph with node features replaced.
    pub fn with_features(&self, features: Tensor<f64>) -> Result<Self> {
        if features.rows() != self.num_nodes {
            return Err(Error::Integrity(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    /// Relabels nodes: node `u` of `self` becomes node `perm[u]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Contract("permutation is not a bijection".into()));
        }
        let edges: Vec<_> = self.edge_list().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
        let mut features = Tensor::zeros(n, self.feature_dim());
        for (u, &p) in perm.iter().enumerate() {
            features.row_mut(p).copy_from_slice(self.features.row(u));
        }
        Graph::new(n, &edges, features, self.label)
    }

    /// Subgraph induced by `keep`; node `keep[i]` becomes node `i`.
    pub fn induced_subgraph(&self, keep: &[usize]) -> Result<Self> {
        let mut index = vec![usize::MAX; self.num_nodes];
        for (i, &u) in keep.iter().enumerate() {
            if u >= self.num_nodes || index[u] != usize::MAX {
                return Err(Error::Contract(format!("invalid or repeated node {u}")));
            }
            index[u] = i;
        }
        let edges: Vec<_> = self
            .edge_list()
            .into_iter()
            .filter(|&(u, v)| index[u] != usize::MAX && index[v] != usize::MAX)
            .map(|(u, v)| (index[u], index[v]))
            .collect();
        let features = self.features.gather_rows(keep);
        Graph::new(keep.len(), &edges, features, self.label)
    }
}

/// Ordered collection of labelled graphs sharing one feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, Graph::feature_dim);
        for (i, g) in graphs.iter().enumerate() {
            if g.label() >= num_classes {
                return Err(Error::Integrity(format!(
                    "graph {i} has label {} but dataset has {num_classes} classes",
                    g.label()
                )));
            }
            if g.feature_dim() != feature_dim {
                return Err(Error::Integrity(format!(
                    "graph {i} has feature dim {} but dataset uses {feature_dim}",
                    g.feature_dim()
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(Graph::label).collect()
    }

    pub fn avg_nodes(&self) -> f64 {
        if self.graphs.is_empty() {
            return 0.0;
        }
        self.graphs.iter().map(|g| g.num_nodes() as f64).sum::<f64>() / self.graphs.len() as f64
    }

    pub fn avg_edges(&self) -> f64 {
        if self.graphs.is_empty() {
            return 0.0;
        }
        self.graphs.iter().map(|g| g.num_edges() as f64).sum::<f64>() / self.graphs.len() as f64
    }

    /// Per-class graph counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for g in &self.graphs {
            counts[g.label()] += 1;
        }
        counts
    }
}
