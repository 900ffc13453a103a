//! Louvain modularity optimisation: greedy local moves followed by community
//! aggregation, repeated until a level no longer improves modularity.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::rng::stream_rng;

const MIN_GAIN: f64 = 1e-7;

/// Partition of a graph's nodes into contiguous cluster ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub cluster_of: Vec<usize>,
    pub num_clusters: usize,
    pub modularity: f64,
}

impl ClusterAssignment {
    /// Node lists per cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (u, &c) in self.cluster_of.iter().enumerate() {
            out[c].push(u);
        }
        out
    }

    /// Renumbers an arbitrary labelling into `0..k` by first appearance.
    pub fn from_labels(graph: &Graph, labels: &[usize]) -> Self {
        let (cluster_of, num_clusters) = renumber(labels);
        let modularity = modularity(graph, &cluster_of);
        ClusterAssignment {
            cluster_of,
            num_clusters,
            modularity,
        }
    }
}

/// Modularity snapshot after each accepted aggregation level.
#[derive(Debug, Clone, PartialEq)]
pub struct LouvainTrace {
    pub levels: Vec<ClusterAssignment>,
}

/// Newman modularity of a partition of an unweighted graph.
pub fn modularity(graph: &Graph, cluster_of: &[usize]) -> f64 {
    let two_m = graph.adjacency().len() as f64;
    if two_m == 0.0 {
        return 0.0;
    }
    let k = cluster_of.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for u in 0..graph.num_nodes() {
        let cu = cluster_of[u];
        total[cu] += graph.degree(u) as f64;
        for &v in graph.neighbors(u) {
            if cluster_of[v] == cu {
                internal[cu] += 1.0;
            }
        }
    }
    internal
        .iter()
        .zip(&total)
        .map(|(&i, &t)| i / two_m - (t / two_m).powi(2))
        .sum()
}

fn renumber(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Weighted graph used at every aggregation level; `self_loops[i]` holds the
/// weight of edges internal to super-node `i` (each edge once).
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
}

impl Level {
    fn from_graph(graph: &Graph) -> Self {
        Level {
            adj: (0..graph.num_nodes())
                .map(|u| graph.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
                .collect(),
            self_loops: vec![0.0; graph.num_nodes()],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.self_loops[i]
    }

    fn aggregate(&self, comm: &[usize], k: usize) -> Level {
        let mut self_loops = vec![0.0; k];
        let mut weights: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for i in 0..self.len() {
            let ci = comm[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    // each internal edge is visited from both ends
                    self_loops[ci] += w / 2.0;
                } else {
                    *weights[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: weights.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loops,
        }
    }

    /// Greedy local moving. Returns the community of each super-node.
    fn one_level(&self, order: &[usize]) -> Vec<usize> {
        let n = self.len();
        let two_m: f64 = (0..n).map(|i| self.degree(i)).sum();
        let mut comm: Vec<usize> = (0..n).collect();
        if two_m == 0.0 {
            return comm;
        }
        let degree: Vec<f64> = (0..n).map(|i| self.degree(i)).collect();
        let mut tot = degree.clone();
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        loop {
            let mut moved = false;
            for &i in order {
                let ci = comm[i];
                let ki = degree[i];
                for &(j, w) in &self.adj[i] {
                    let cj = comm[j];
                    if link[cj] == 0.0 {
                        touched.push(cj);
                    }
                    link[cj] += w;
                }
                tot[ci] -= ki;
                let gain = |c: usize, link: &[f64], tot: &[f64]| link[c] - tot[c] * ki / two_m;
                let mut best = ci;
                let mut best_gain = gain(ci, &link, &tot);
                for &c in &touched {
                    let g = gain(c, &link, &tot);
                    if g > best_gain + 1e-12 {
                        best_gain = g;
                        best = c;
                    }
                }
                tot[best] += ki;
                if best != ci {
                    comm[i] = best;
                    moved = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        comm
    }
}

/// Louvain clustering with a seeded node visitation order; also returns the
/// partition after every accepted level.
pub fn louvain_trace(graph: &Graph, seed: u64) -> LouvainTrace {
    let n = graph.num_nodes();
    let mut rng = stream_rng(seed, &[0x10_0BA1]);
    let mut level = Level::from_graph(graph);
    let mut node_comm: Vec<usize> = (0..n).collect();
    let mut current_q = modularity(graph, &node_comm);
    let mut levels = vec![ClusterAssignment {
        cluster_of: node_comm.clone(),
        num_clusters: n,
        modularity: current_q,
    }];
    loop {
        let mut order: Vec<usize> = (0..level.len()).collect();
        order.shuffle(&mut rng);
        let comm = level.one_level(&order);
        let (comm, k) = renumber(&comm);
        if k == level.len() {
            break;
        }
        let candidate: Vec<usize> = node_comm.iter().map(|&c| comm[c]).collect();
        let q = modularity(graph, &candidate);
        if q - current_q < MIN_GAIN {
            break;
        }
        node_comm = candidate;
        current_q = q;
        levels.push(ClusterAssignment {
            cluster_of: node_comm.clone(),
            num_clusters: k,
            modularity: q,
        });
        level = level.aggregate(&comm, k);
    }
    LouvainTrace { levels }
}

/// Louvain clustering; deterministic given `seed`.
pub fn louvain_cluster(graph: &Graph, seed: u64) -> ClusterAssignment {
    let last = louvain_trace(graph, seed)
        .levels
        .pop()
        .expect("trace always holds the singleton level");
    // renumber by first appearance for a canonical labelling
    ClusterAssignment::from_labels(graph, &last.cluster_of)
}
