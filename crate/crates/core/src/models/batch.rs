use super::config::{Architecture, GnnKind, ModelSpec, StudentKind};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::structprep::StructCache;
use crate::tensor::Tensor;

/// Disjoint union of graphs prepared for one model: node inputs, message
/// edges and the graph and cluster segment of every node.
#[derive(Debug, Clone)]
pub struct GraphBatch<S> {
    pub input: Tensor<S>,
    /// First node of each graph; one extra entry holds the total.
    pub node_offsets: Vec<usize>,
    pub graph_of: Vec<usize>,
    /// Global cluster index of each node; a graph without a structure cache
    /// forms a single cluster.
    pub cluster_of: Vec<usize>,
    /// First global cluster of each graph; one extra entry holds the total.
    pub cluster_offsets: Vec<usize>,
    pub labels: Vec<usize>,
    /// Directed message edges `src → dst`, both directions of every edge.
    pub edge_src: Vec<usize>,
    pub edge_dst: Vec<usize>,
    /// GCN propagation `D̂^-1/2 Â D̂^-1/2` as weighted edges including self-loops.
    pub norm_src: Vec<usize>,
    pub norm_dst: Vec<usize>,
    pub norm_weight: Tensor<S>,
}

impl<S: Scalar> GraphBatch<S> {
    pub fn num_graphs(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.graph_of.len()
    }

    pub fn num_clusters(&self) -> usize {
        *self.cluster_offsets.last().expect("offsets are never empty")
    }

    /// Builds the batch for `spec`. `caches[i]` belongs to `graphs[i]` and is
    /// required when the model input uses positional encodings or
    /// aggregated features.
    pub fn build(spec: &ModelSpec, graphs: &[&Graph], caches: Option<&[&StructCache]>) -> Result<Self> {
        if let Some(c) = caches {
            if c.len() != graphs.len() {
                return Err(Error::Contract(format!(
                    "{} structure caches for {} graphs",
                    c.len(),
                    graphs.len()
                )));
            }
        } else if spec.needs_struct_cache() {
            return Err(Error::Config(
                "student input needs structure caches (LaPE or aggregated features)".into(),
            ));
        }
        let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let width = spec.input_dim();
        let mut input = Vec::with_capacity(total * width);
        let mut node_offsets = Vec::with_capacity(graphs.len() + 1);
        let mut cluster_offsets = Vec::with_capacity(graphs.len() + 1);
        let mut graph_of = Vec::with_capacity(total);
        let mut cluster_of = Vec::with_capacity(total);
        let mut labels = Vec::with_capacity(graphs.len());
        let mut edge_src = Vec::new();
        let mut edge_dst = Vec::new();
        let gcn = matches!(spec.arch, Architecture::Teacher(c) if c.kind == GnnKind::Gcn);
        let (mut norm_src, mut norm_dst, mut norm_w) = (Vec::new(), Vec::new(), Vec::new());
        let (mut base, mut cbase) = (0, 0);
        for (gi, g) in graphs.iter().enumerate() {
            if g.feature_dim() != spec.feature_dim {
                return Err(Error::Contract(format!(
                    "graph feature width {} does not match model width {}",
                    g.feature_dim(),
                    spec.feature_dim
                )));
            }
            let n = g.num_nodes();
            let cache = caches.map(|c| c[gi]);
            node_offsets.push(base);
            cluster_offsets.push(cbase);
            labels.push(g.label());
            append_input(spec, g, cache, &mut input)?;
            match cache {
                Some(c) => {
                    if c.clusters.cluster_of.len() != n {
                        return Err(Error::Integrity(format!(
                            "cluster assignment covers {} nodes, graph has {n}",
                            c.clusters.cluster_of.len()
                        )));
                    }
                    cluster_of.extend(c.clusters.cluster_of.iter().map(|&k| cbase + k));
                    cbase += c.clusters.num_clusters;
                }
                None => {
                    cluster_of.extend(std::iter::repeat_n(cbase, n));
                    cbase += 1;
                }
            }
            graph_of.extend(std::iter::repeat_n(gi, n));
            for u in 0..n {
                for &v in g.neighbors(u) {
                    edge_src.push(base + v);
                    edge_dst.push(base + u);
                }
            }
            if gcn {
                for u in 0..n {
                    let du = (g.degree(u) + 1) as f64;
                    norm_src.push(base + u);
                    norm_dst.push(base + u);
                    norm_w.push(S::lit(1.0 / du));
                    for &v in g.neighbors(u) {
                        let dv = (g.degree(v) + 1) as f64;
                        norm_src.push(base + v);
                        norm_dst.push(base + u);
                        norm_w.push(S::lit(1.0 / (du * dv).sqrt()));
                    }
                }
            }
            base += n;
        }
        node_offsets.push(base);
        cluster_offsets.push(cbase);
        let norm_len = norm_w.len();
        Ok(GraphBatch {
            input: Tensor::from_vec(total, width, input)?,
            node_offsets,
            graph_of,
            cluster_of,
            cluster_offsets,
            labels,
            edge_src,
            edge_dst,
            norm_src,
            norm_dst,
            norm_weight: Tensor::from_vec(norm_len, 1, norm_w)?,
        })
    }
}

/// Per-node model input rows of one graph:
/// teacher `X`; MLP `X | lape`; GA-MLP `X | lape | A D⁻¹ X | A D⁻¹ lape`.
pub fn node_inputs(spec: &ModelSpec, graph: &Graph, cache: Option<&StructCache>) -> Result<Tensor<f64>> {
    let mut out = Vec::with_capacity(graph.num_nodes() * spec.input_dim());
    append_input::<f64>(spec, graph, cache, &mut out)?;
    Tensor::from_vec(graph.num_nodes(), spec.input_dim(), out)
}

fn append_input<S: Scalar>(
    spec: &ModelSpec,
    graph: &Graph,
    cache: Option<&StructCache>,
    out: &mut Vec<S>,
) -> Result<()> {
    let n = graph.num_nodes();
    let x = graph.features();
    let cfg = match spec.arch {
        Architecture::Teacher(_) => {
            out.extend(x.as_slice().iter().map(|&v| S::lit(v)));
            return Ok(());
        }
        Architecture::Student(c) => c,
    };
    let cache = match cache {
        Some(c) => Some(c),
        None if spec.needs_struct_cache() => return Err(Error::Config("student input needs a structure cache".into())),
        None => None,
    };
    let k = spec.k_pe;
    if let Some(c) = cache {
        if k > 0 && c.lape.cols() != k {
            return Err(Error::Config(format!(
                "model expects {k} positional columns, cache holds {}",
                c.lape.cols()
            )));
        }
        if c.lape.rows() != n || c.agg_features.rows() != n {
            return Err(Error::Integrity(format!(
                "structure cache rows do not match a graph with {n} nodes"
            )));
        }
    }
    for u in 0..n {
        out.extend(x.row(u).iter().map(|&v| S::lit(v)));
        if k > 0 {
            out.extend(cache.unwrap().lape.row(u).iter().map(|&v| S::lit(v)));
        }
        if cfg.kind == StudentKind::GaMlp {
            let c = cache.unwrap();
            out.extend(c.agg_features.row(u).iter().map(|&v| S::lit(v)));
            if k > 0 {
                out.extend(c.agg_lape.row(u).iter().map(|&v| S::lit(v)));
            }
        }
    }
    Ok(())
}
