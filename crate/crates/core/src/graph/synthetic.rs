//! Deterministic graph generators: fixed reference graphs, random graphs for
//! property tests, and stand-ins for the benchmark datasets when the raw
//! files are not available.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{Dataset, Graph};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

/// Zachary's karate club, 0-indexed.
pub fn karate_club() -> Graph {
    const EDGES: [(usize, usize); 78] = [
        (0, 1),
        (0, 2),
        (0, 3),
        (0, 4),
        (0, 5),
        (0, 6),
        (0, 7),
        (0, 8),
        (0, 10),
        (0, 11),
        (0, 12),
        (0, 13),
        (0, 17),
        (0, 19),
        (0, 21),
        (0, 31),
        (1, 2),
        (1, 3),
        (1, 7),
        (1, 13),
        (1, 17),
        (1, 19),
        (1, 21),
        (1, 30),
        (2, 3),
        (2, 7),
        (2, 8),
        (2, 9),
        (2, 13),
        (2, 27),
        (2, 28),
        (2, 32),
        (3, 7),
        (3, 12),
        (3, 13),
        (4, 6),
        (4, 10),
        (5, 6),
        (5, 10),
        (5, 16),
        (6, 16),
        (8, 30),
        (8, 32),
        (8, 33),
        (9, 33),
        (13, 33),
        (14, 32),
        (14, 33),
        (15, 32),
        (15, 33),
        (18, 32),
        (18, 33),
        (19, 33),
        (20, 32),
        (20, 33),
        (22, 32),
        (22, 33),
        (23, 25),
        (23, 27),
        (23, 29),
        (23, 32),
        (23, 33),
        (24, 25),
        (24, 27),
        (24, 31),
        (25, 31),
        (26, 29),
        (26, 33),
        (27, 33),
        (28, 31),
        (28, 33),
        (29, 32),
        (29, 33),
        (30, 32),
        (30, 33),
        (31, 32),
        (31, 33),
        (32, 33),
    ];
    Graph::unit_features(34, &EDGES, 0).expect("static edge list is valid")
}

/// Two disjoint triangles on nodes {0,1,2} and {3,4,5}.
pub fn two_triangles() -> Graph {
    Graph::unit_features(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], 0).expect("static edge list is valid")
}

pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    Graph::unit_features(n, &edges, 0).expect("path edges are valid")
}

/// G(n, p) with standard-normal node features of width `feature_dim` and a
/// uniformly drawn label in `[0, num_classes)`.
pub fn random_graph(n: usize, p: f64, feature_dim: usize, num_classes: usize, seed: u64) -> Graph {
    let mut rng = stream_rng(seed, &[0xE7D0]);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let data = (0..n * feature_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let features = Tensor::from_vec(n, feature_dim, data).expect("sized buffer");
    let label = rng.gen_range(0..num_classes.max(1));
    Graph::new(n, &edges, features, label).expect("generated edges are valid")
}

/// Settings for the molecule-like dataset generator.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeConfig {
    pub positives: usize,
    pub negatives: usize,
    pub mean_nodes: f64,
    pub std_nodes: f64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Relative frequencies of atom types; the length is the feature width.
    pub atom_weights: Vec<f64>,
    /// Labels flipped in each direction after generation.
    pub flips_per_class: usize,
}

impl MoleculeConfig {
    /// Shaped after BZR: 405 graphs (86 positive), about 36 nodes and 38
    /// edges per graph.
    pub fn bzr_like() -> Self {
        MoleculeConfig {
            positives: 86,
            negatives: 319,
            mean_nodes: 35.75,
            std_nodes: 7.0,
            min_nodes: 13,
            max_nodes: 57,
            atom_weights: vec![0.58, 0.11, 0.11, 0.05, 0.04, 0.04, 0.03, 0.02, 0.01, 0.01],
            flips_per_class: 6,
        }
    }

    /// A small balanced variant for tests.
    pub fn small(num_graphs: usize) -> Self {
        let positives = num_graphs / 2;
        MoleculeConfig {
            positives,
            negatives: num_graphs - positives,
            mean_nodes: 12.0,
            std_nodes: 3.0,
            min_nodes: 5,
            max_nodes: 20,
            flips_per_class: 0,
            ..Self::bzr_like()
        }
    }
}

/// Molecule-like graphs: a valence-bounded tree backbone closed into five-
/// and six-membered rings, with categorical atom types as one-hot features.
/// A graph is positive when at least two bonds join an atom of type 1 to an
/// atom of type 2, so the label depends on adjacency and not just on atom
/// counts.
pub fn molecule_dataset(config: &MoleculeConfig, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, &[0xB2B]);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    while pos.len() < config.positives || neg.len() < config.negatives {
        let (n, edges, atoms) = molecule(config, &mut rng);
        let bonds = edges
            .iter()
            .filter(|&&(u, v)| matches!((atoms[u], atoms[v]), (1, 2) | (2, 1)))
            .count();
        let label = usize::from(bonds >= 2);
        let bucket = if label == 1 { &mut pos } else { &mut neg };
        let target = if label == 1 { config.positives } else { config.negatives };
        if bucket.len() < target {
            bucket.push((n, edges, atoms, label));
        }
    }
    let mut items: Vec<_> = pos.into_iter().chain(neg).collect();
    items.shuffle(&mut rng);
    let flips = config.flips_per_class;
    let mut flipped = [0usize; 2];
    for item in items.iter_mut() {
        if flipped[item.3] < flips {
            flipped[item.3] += 1;
            item.3 = 1 - item.3;
        }
    }
    let width = config.atom_weights.len();
    let graphs = items
        .into_iter()
        .map(|(n, edges, atoms, label)| {
            let mut x = Tensor::zeros(n, width);
            for (u, &a) in atoms.iter().enumerate() {
                x[(u, a)] = 1.0;
            }
            Graph::new(n, &edges, x, label).expect("generated edges are valid")
        })
        .collect();
    Dataset::new("synthetic-bzr", graphs, 2).expect("generated dataset is consistent")
}

fn molecule(config: &MoleculeConfig, rng: &mut crate::rng::Rng) -> (usize, Vec<(usize, usize)>, Vec<usize>) {
    let n = (config.mean_nodes + config.std_nodes * rng.sample::<f64, _>(StandardNormal))
        .round()
        .clamp(config.min_nodes as f64, config.max_nodes as f64) as usize;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut edges = Vec::with_capacity(n + 4);
    for i in 1..n {
        let lo = i.saturating_sub(3);
        let near: Vec<usize> = (lo..i).filter(|&j| adj[j].len() < 3).collect();
        let parent = match near.choose(rng) {
            Some(&p) => p,
            None => {
                let open: Vec<usize> = (0..i).filter(|&j| adj[j].len() < 4).collect();
                *open.choose(rng).unwrap_or(&(i - 1))
            }
        };
        adj[i].push(parent);
        adj[parent].push(i);
        edges.push((parent, i));
    }
    let rings = rng.gen_range(0..=(n / 6).min(6));
    for _ in 0..rings {
        let u = rng.gen_range(0..n);
        if adj[u].len() >= 3 {
            continue;
        }
        let span = rng.gen_range(4..=5);
        let candidates: Vec<usize> = at_distance(&adj, u, span)
            .into_iter()
            .filter(|&v| adj[v].len() < 3)
            .collect();
        if let Some(&v) = candidates.choose(rng) {
            adj[u].push(v);
            adj[v].push(u);
            edges.push((u.min(v), u.max(v)));
        }
    }
    let total: f64 = config.atom_weights.iter().sum();
    let atoms = (0..n)
        .map(|_| {
            let mut r = rng.gen::<f64>() * total;
            for (t, &w) in config.atom_weights.iter().enumerate() {
                if r < w {
                    return t;
                }
                r -= w;
            }
            config.atom_weights.len() - 1
        })
        .collect();
    (n, edges, atoms)
}

fn at_distance(adj: &[Vec<usize>], source: usize, d: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        if dist[u] == d {
            out.push(u);
            continue;
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    out
}

/// Discussion-thread graph in the style of REDDIT-BINARY: a reply tree grown
/// by preferential attachment. Question/answer threads (label 0) concentrate
/// replies on a few hubs; discussion threads (label 1) grow deeper chains.
/// Features are a single constant column; use
/// [`degree_onehot_features`](super::degree_onehot_features) for the usual
/// encoding.
pub fn reply_thread(n: usize, label: usize, seed: u64) -> Graph {
    let mut rng = stream_rng(seed, &[0x7EDD, label as u64]);
    let hub_bias = if label == 0 { 3.0 } else { 0.3 };
    let mut weight = vec![0.0f64; n];
    let mut edges = Vec::with_capacity(n);
    let mut total = 0.0;
    for i in 0..n {
        if i > 0 {
            let mut r = rng.gen::<f64>() * total;
            let mut parent = i - 1;
            for (j, &w) in weight[..i].iter().enumerate() {
                if r < w {
                    parent = j;
                    break;
                }
                r -= w;
            }
            edges.push((parent, i));
            weight[parent] += hub_bias;
            total += hub_bias;
        }
        weight[i] = 1.0;
        total += 1.0;
    }
    Graph::unit_features(n, &edges, label).expect("tree edges are valid")
}

/// Balanced set of reply threads with sizes drawn uniformly from
/// `[min_nodes, max_nodes]`.
pub fn reply_thread_dataset(num_graphs: usize, min_nodes: usize, max_nodes: usize, seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, &[0x7EDE]);
    let graphs = (0..num_graphs)
        .map(|i| {
            let n = rng.gen_range(min_nodes..=max_nodes);
            reply_thread(n, i % 2, crate::rng::derive_seed(seed, &[i as u64]))
        })
        .collect();
    Dataset::new("synthetic-reddit", graphs, 2).expect("generated dataset is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn karate_size() {
        let g = karate_club();
        assert_eq!(g.num_nodes(), 34);
        assert_eq!(g.num_edges(), 78);
    }

    #[test]
    fn bzr_like_shape() {
        let ds = molecule_dataset(&MoleculeConfig::bzr_like(), 0);
        assert_eq!(ds.len(), 405);
        assert_eq!(ds.class_counts(), vec![319, 86]);
        assert!((ds.avg_nodes() - 35.75).abs() < 2.0, "{}", ds.avg_nodes());
        assert!((ds.avg_edges() - 38.4).abs() < 3.0, "{}", ds.avg_edges());
        let again = molecule_dataset(&MoleculeConfig::bzr_like(), 0);
        assert_eq!(ds.graphs(), again.graphs());
    }

    #[test]
    fn reply_threads_are_trees() {
        let g = reply_thread(400, 0, 3);
        assert_eq!(g.num_edges(), 399);
        let ds = reply_thread_dataset(6, 30, 40, 1);
        assert_eq!(ds.class_counts(), vec![3, 3]);
    }
}
