use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::rng::stream_rng;

/// Random-walk paths of one graph. Each walk holds the start node followed by
/// up to `walk_length` steps; a walk from an isolated node is just the start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkPool {
    pub walks: Vec<Vec<usize>>,
    pub walk_length: usize,
    pub seed: u64,
}

impl WalkPool {
    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }
}

/// Walk of `walk_length` uniform neighbor steps from `start`.
pub fn walk_from<R: Rng>(graph: &Graph, start: usize, walk_length: usize, rng: &mut R) -> Vec<usize> {
    let mut walk = Vec::with_capacity(walk_length + 1);
    walk.push(start);
    let mut cur = start;
    for _ in 0..walk_length {
        let nbrs = graph.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        cur = nbrs[rng.gen_range(0..nbrs.len())];
        walk.push(cur);
    }
    walk
}

/// Samples `num_walks` walks, each from a uniformly drawn start node.
pub fn sample_walks(graph: &Graph, num_walks: usize, walk_length: usize, seed: u64) -> WalkPool {
    let mut rng = stream_rng(seed, &[0x3A1C]);
    let n = graph.num_nodes();
    let walks = if n == 0 {
        Vec::new()
    } else {
        (0..num_walks)
            .map(|_| {
                let start = rng.gen_range(0..n);
                walk_from(graph, start, walk_length, &mut rng)
            })
            .collect()
    };
    WalkPool {
        walks,
        walk_length,
        seed,
    }
}

/// Default walks per graph: a quarter of the node count, clamped to `[4, 64]`.
pub fn default_num_walks(num_nodes: usize) -> usize {
    (num_nodes / 4).clamp(4, 64)
}
