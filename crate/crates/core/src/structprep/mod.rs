//! Per-graph structural preprocessing, run once before training: Louvain
//! clusters, Laplacian positional encodings, 1-hop aggregated features and a
//! pool of random walks.

mod aggregate;
mod lape;
mod louvain;
mod walks;

pub use aggregate::ga_mlp_aggregate;
pub use lape::{laplacian_pe, laplacian_spectrum, normalized_laplacian};
pub use louvain::{louvain_cluster, louvain_trace, modularity, ClusterAssignment, LouvainTrace};
pub use walks::{default_num_walks, sample_walks, walk_from, WalkPool};

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

pub const STRUCT_CACHE_FORMAT: &str = "graphkd-structcache/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructConfig {
    /// Number of Laplacian eigenvectors per node.
    pub k_pe: usize,
    /// Steps per random walk.
    pub walk_length: usize,
    /// Walks drawn per graph per epoch; `None` uses [`default_num_walks`].
    pub num_walks: Option<usize>,
    /// Pool size as a multiple of the per-epoch walk count.
    pub pool_factor: usize,
}

impl Default for StructConfig {
    fn default() -> Self {
        StructConfig {
            k_pe: 8,
            walk_length: 8,
            num_walks: None,
            pool_factor: 4,
        }
    }
}

impl StructConfig {
    pub fn walks_per_epoch(&self, num_nodes: usize) -> usize {
        self.num_walks.unwrap_or_else(|| default_num_walks(num_nodes))
    }
}

/// Derived structure of one graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructCache {
    pub clusters: ClusterAssignment,
    pub lape: Tensor<f64>,
    /// `A D⁻¹ X`
    pub agg_features: Tensor<f64>,
    /// `A D⁻¹ LaPE`, used when positional encodings feed a GA-MLP.
    pub agg_lape: Tensor<f64>,
    pub walk_pool: WalkPool,
}

impl StructCache {
    pub fn build(graph: &Graph, config: &StructConfig, seed: u64) -> Result<Self> {
        let clusters = louvain_cluster(graph, derive_seed(seed, &[1]));
        let lape = laplacian_pe(graph, config.k_pe);
        let agg_features = ga_mlp_aggregate(graph, graph.features())?;
        let agg_lape = ga_mlp_aggregate(graph, &lape)?;
        let pool_size = config.walks_per_epoch(graph.num_nodes()) * config.pool_factor.max(1);
        let walk_pool = sample_walks(graph, pool_size, config.walk_length, derive_seed(seed, &[2]));
        Ok(StructCache {
            clusters,
            lape,
            agg_features,
            agg_lape,
            walk_pool,
        })
    }

    fn check(&self, graph: &Graph, k_pe: usize) -> Result<()> {
        let n = graph.num_nodes();
        let ok = self.clusters.cluster_of.len() == n
            && self.lape.shape().rows == n
            && self.lape.shape().cols == k_pe
            && self.agg_features.shape().rows == n
            && self.agg_features.shape().cols == graph.feature_dim()
            && self.agg_lape.shape().rows == n;
        if ok {
            Ok(())
        } else {
            Err(Error::Integrity(format!(
                "structure cache does not match a graph with {n} nodes"
            )))
        }
    }
}

/// Structure caches of a whole dataset plus the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructCacheSet {
    pub format: String,
    pub dataset: String,
    pub seed: u64,
    pub config: StructConfig,
    pub caches: Vec<StructCache>,
}

impl StructCacheSet {
    /// Preprocesses every graph; graph `i` uses a stream derived from `(seed, i)`.
    pub fn build(dataset: &Dataset, config: &StructConfig, seed: u64) -> Result<Self> {
        let caches = dataset
            .graphs()
            .par_iter()
            .enumerate()
            .map(|(i, g)| StructCache::build(g, config, derive_seed(seed, &[i as u64])))
            .collect::<Result<Vec<_>>>()?;
        Ok(StructCacheSet {
            format: STRUCT_CACHE_FORMAT.to_string(),
            dataset: dataset.name.clone(),
            seed,
            config: *config,
            caches,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// Loads a sidecar and checks it against `dataset`.
    pub fn load(path: impl AsRef<Path>, dataset: &Dataset) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let file = fs::File::open(path)?;
        let set: StructCacheSet = serde_json::from_reader(std::io::BufReader::new(file))?;
        if set.format != STRUCT_CACHE_FORMAT {
            return Err(Error::format(path, format!("unknown format tag {:?}", set.format)));
        }
        if set.caches.len() != dataset.len() {
            return Err(Error::Integrity(format!(
                "{} holds {} caches for {} graphs",
                path.display(),
                set.caches.len(),
                dataset.len()
            )));
        }
        for (c, g) in set.caches.iter().zip(dataset.graphs()) {
            c.check(g, set.config.k_pe)?;
        }
        Ok(set)
    }

    /// Conventional sidecar location next to the dataset files.
    pub fn sidecar_path(dir: impl AsRef<Path>, dataset: &str, seed: u64) -> std::path::PathBuf {
        dir.as_ref().join(format!("{dataset}.structcache.seed{seed}.json"))
    }
}
