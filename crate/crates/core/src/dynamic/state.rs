use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{Architecture, GraphBatch, Model, StudentKind};
use crate::structprep::{ga_mlp_aggregate, ClusterAssignment, StructCache, WalkPool};
use crate::tensor::Tensor;

/// Student prediction state of a graph whose nodes come and go. Each
/// present node contributes one pooled row; an update re-embeds only the
/// rows whose input changed.
///
/// Under `A D⁻¹` aggregation a node's row depends on its neighbors'
/// degrees, so inserting or removing `v` changes the rows of `v`, its
/// neighbors and their neighbors.
#[derive(Debug, Clone)]
pub struct IncrementalState<'a> {
    model: &'a Model<f64>,
    graph: &'a Graph,
    /// `X | lape` for every node of the full graph.
    base: Tensor<f64>,
    aggregate: bool,
    present: Vec<bool>,
    degree: Vec<usize>,
    agg: Tensor<f64>,
    contrib: Tensor<f64>,
    pooled: Vec<f64>,
}

fn base_rows(model: &Model<f64>, graph: &Graph, cache: &StructCache) -> Result<Tensor<f64>> {
    let k = model.spec().k_pe;
    if k == 0 {
        return Ok(graph.features().clone());
    }
    if cache.lape.cols() != k || cache.lape.rows() != graph.num_nodes() {
        return Err(Error::Config(format!(
            "student expects {k} positional columns for {} nodes, cache holds {}",
            graph.num_nodes(),
            cache.lape.shape()
        )));
    }
    Tensor::hstack(&[graph.features(), &cache.lape])
}

impl<'a> IncrementalState<'a> {
    /// State with the nodes flagged in `present`. Positional encodings stay
    /// those of the full graph.
    pub fn new(model: &'a Model<f64>, graph: &'a Graph, cache: &StructCache, present: &[bool]) -> Result<Self> {
        let Architecture::Student(cfg) = model.spec().arch else {
            return Err(Error::Contract(
                "incremental inference needs a node-wise student".into(),
            ));
        };
        let n = graph.num_nodes();
        if present.len() != n {
            return Err(Error::Contract(format!(
                "{} presence flags for {n} nodes",
                present.len()
            )));
        }
        let base = base_rows(model, graph, cache)?;
        let degree: Vec<usize> = (0..n)
            .map(|u| graph.neighbors(u).iter().filter(|&&v| present[v]).count())
            .collect();
        let h = model.spec().hidden();
        let mut state = IncrementalState {
            model,
            graph,
            agg: Tensor::zeros(n, base.cols()),
            base,
            aggregate: cfg.kind == StudentKind::GaMlp,
            present: present.to_vec(),
            degree,
            contrib: Tensor::zeros(n, h),
            pooled: vec![0.0; h],
        };
        let nodes: Vec<usize> = (0..n).filter(|&u| present[u]).collect();
        state.refresh(&nodes)?;
        Ok(state)
    }

    /// State with every node present.
    pub fn full(model: &'a Model<f64>, graph: &'a Graph, cache: &StructCache) -> Result<Self> {
        Self::new(model, graph, cache, &vec![true; graph.num_nodes()])
    }

    pub fn is_present(&self, u: usize) -> bool {
        self.present[u]
    }

    pub fn present_nodes(&self) -> Vec<usize> {
        (0..self.present.len()).filter(|&u| self.present[u]).collect()
    }

    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    pub fn logits(&self) -> Result<Vec<f64>> {
        self.model.head(&self.pooled)
    }

    /// Present nodes whose model input depends on `v`'s presence.
    fn affected(&self, v: usize) -> Vec<usize> {
        let mut out = vec![v];
        if self.aggregate {
            for &u in self.graph.neighbors(v) {
                if self.present[u] {
                    out.push(u);
                    out.extend(self.graph.neighbors(u).iter().copied().filter(|&w| self.present[w]));
                }
            }
            out.sort_unstable();
            out.dedup();
        }
        out
    }

    /// Recomputes the aggregated rows and pooled contributions of `nodes`,
    /// all of which must be present.
    fn refresh(&mut self, nodes: &[usize]) -> Result<()> {
        if nodes.is_empty() {
            return Ok(());
        }
        let b = self.base.cols();
        let width = if self.aggregate { 2 * b } else { b };
        let mut input = Vec::with_capacity(nodes.len() * width);
        for &u in nodes {
            input.extend_from_slice(self.base.row(u));
            if self.aggregate {
                let row = self.agg.row_mut(u);
                row.iter_mut().for_each(|x| *x = 0.0);
                for &v in self.graph.neighbors(u) {
                    if self.present[v] {
                        let w = 1.0 / self.degree[v] as f64;
                        for (r, &x) in row.iter_mut().zip(self.base.row(v)) {
                            *r += w * x;
                        }
                    }
                }
                input.extend_from_slice(self.agg.row(u));
            }
        }
        let rows = Tensor::from_vec(nodes.len(), width, input)?;
        let new = self.model.pool_rows(&self.model.embed_rows(&rows)?)?;
        for (i, &u) in nodes.iter().enumerate() {
            let old = self.contrib.row_mut(u);
            for ((p, o), &nv) in self.pooled.iter_mut().zip(old.iter_mut()).zip(new.row(i)) {
                *p += nv - *o;
                *o = nv;
            }
        }
        Ok(())
    }

    /// Adds `v` back together with every edge to a present node; returns the
    /// new logits.
    pub fn insert(&mut self, v: usize) -> Result<Vec<f64>> {
        if v >= self.present.len() || self.present[v] {
            return Err(Error::Contract(format!("node {v} is already present or out of range")));
        }
        self.present[v] = true;
        let mut deg = 0;
        for &u in self.graph.neighbors(v) {
            if self.present[u] {
                self.degree[u] += 1;
                deg += 1;
            }
        }
        self.degree[v] = deg;
        let nodes = self.affected(v);
        self.refresh(&nodes)?;
        self.logits()
    }

    /// Drops `v` and its incident edges; returns the new logits.
    pub fn remove(&mut self, v: usize) -> Result<Vec<f64>> {
        if v >= self.present.len() || !self.present[v] {
            return Err(Error::Contract(format!("node {v} is not present")));
        }
        let nodes = self.affected(v);
        self.present[v] = false;
        for &u in self.graph.neighbors(v) {
            if self.present[u] {
                self.degree[u] -= 1;
            }
        }
        self.degree[v] = 0;
        let old = self.contrib.row_mut(v);
        for (p, o) in self.pooled.iter_mut().zip(old.iter_mut()) {
            *p -= *o;
            *o = 0.0;
        }
        self.agg.row_mut(v).iter_mut().for_each(|x| *x = 0.0);
        let rest: Vec<usize> = nodes.into_iter().filter(|&u| u != v).collect();
        self.refresh(&rest)?;
        self.logits()
    }
}

/// Current graph: the subgraph induced by the present nodes, relabelled in
/// increasing id order.
pub fn current_graph(graph: &Graph, present: &[bool]) -> Result<(Graph, Vec<usize>)> {
    let keep: Vec<usize> = (0..graph.num_nodes()).filter(|&u| present[u]).collect();
    Ok((graph.induced_subgraph(&keep)?, keep))
}

/// Student logits from a from-scratch forward pass on the current graph,
/// reusing the full graph's positional encodings for surviving nodes.
pub fn full_student_logits(
    model: &Model<f64>,
    graph: &Graph,
    cache: &StructCache,
    present: &[bool],
) -> Result<Vec<f64>> {
    let (sub, keep) = current_graph(graph, present)?;
    let lape = cache.lape.gather_rows(&keep);
    let sub_cache = StructCache {
        clusters: ClusterAssignment::from_labels(&sub, &vec![0; sub.num_nodes()]),
        agg_features: ga_mlp_aggregate(&sub, sub.features())?,
        agg_lape: ga_mlp_aggregate(&sub, &lape)?,
        lape,
        walk_pool: WalkPool {
            walks: Vec::new(),
            walk_length: 0,
            seed: 0,
        },
    };
    let batch = GraphBatch::build(model.spec(), &[&sub], Some(&[&sub_cache]))?;
    Ok(model.predict(&batch)?.into_vec())
}

/// Teacher logits from a full forward pass on the current graph.
pub fn full_teacher_logits(model: &Model<f64>, graph: &Graph, present: &[bool]) -> Result<Vec<f64>> {
    let (sub, _) = current_graph(graph, present)?;
    let batch = GraphBatch::build(model.spec(), &[&sub], None)?;
    Ok(model.predict(&batch)?.into_vec())
}
