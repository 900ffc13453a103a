//! Teacher GNNs (GIN, GCN), node-wise students (MLP, 1-hop GA-MLP) and the
//! shared readout and classifier head.

mod batch;
mod config;

pub use batch::{node_inputs, GraphBatch};
pub use config::{Architecture, GnnConfig, GnnKind, ModelSpec, Readout, StudentConfig, StudentKind};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Rng};
use crate::scalar::Scalar;
use crate::tensor::{BoundParams, ParamId, ParamStore, Tape, Tensor, Var};

/// Tape handles of one forward pass over a [`GraphBatch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOutputs {
    /// `[nodes × hidden]`
    pub node_emb: Var,
    /// `[graphs × hidden]`
    pub graph_emb: Var,
    /// `[clusters × hidden]`, rows ordered by global cluster index.
    pub cluster_emb: Var,
    /// `[graphs × classes]`
    pub logits: Var,
}

/// Frozen outputs of one graph, as cached from a trained teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphOutputs<S> {
    pub logits: Vec<S>,
    pub node_emb: Tensor<S>,
    pub graph_emb: Vec<S>,
    pub cluster_emb: Tensor<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layer {
    Gin {
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
    Linear {
        w: ParamId,
        b: ParamId,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    layers: Vec<Layer>,
    gate: Option<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    spec: ModelSpec,
    params: ParamStore<S>,
    layout: Layout,
}

fn glorot<S: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Tensor<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| S::lit(rng.gen_range(-limit..limit))).collect();
    Tensor::from_vec(rows, cols, data).expect("sized buffer")
}

impl<S: Scalar> Model<S> {
    /// Glorot-uniform weights and zero biases drawn from a stream of `seed`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream_rng(seed, &[0x1417]);
        let mut params = ParamStore::new();
        let h = spec.hidden();
        let mut width = spec.input_dim();
        let mut layers = Vec::new();
        for l in 0..spec.num_layers() {
            let layer = match spec.arch {
                Architecture::Teacher(GnnConfig { kind: GnnKind::Gin, .. }) => Layer::Gin {
                    w1: params.add(format!("layer{l}.w1"), glorot(width, h, &mut rng)),
                    b1: params.add(format!("layer{l}.b1"), Tensor::zeros(1, h)),
                    w2: params.add(format!("layer{l}.w2"), glorot(h, h, &mut rng)),
                    b2: params.add(format!("layer{l}.b2"), Tensor::zeros(1, h)),
                },
                _ => Layer::Linear {
                    w: params.add(format!("layer{l}.w"), glorot(width, h, &mut rng)),
                    b: params.add(format!("layer{l}.b"), Tensor::zeros(1, h)),
                },
            };
            layers.push(layer);
            width = h;
        }
        let gate = (spec.readout() == Readout::Attention).then(|| {
            (
                params.add("gate.w", glorot(h, 1, &mut rng)),
                params.add("gate.b", Tensor::zeros(1, 1)),
            )
        });
        let head = (
            params.add("head.w", glorot(h, spec.num_classes, &mut rng)),
            params.add("head.b", Tensor::zeros(1, spec.num_classes)),
        );
        Ok(Model {
            spec,
            params,
            layout: Layout { layers, gate, head },
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(spec: ModelSpec, params: &ParamStore<S>) -> Result<Self> {
        let mut model = Self::new(spec, 0)?;
        model.params.load_from(params)?;
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        (0..self.params.len())
            .map(ParamId)
            .find(|&id| self.params.name(id) == name)
    }

    fn dropout(&self, tape: &mut Tape<S>, x: Var, rng: &mut Option<&mut Rng>) -> Result<Var> {
        let p = self.spec.dropout();
        let Some(rng) = rng.as_deref_mut() else {
            return Ok(x);
        };
        if p <= 0.0 {
            return Ok(x);
        }
        let shape = tape.shape(x);
        let keep = S::lit(1.0 / (1.0 - p));
        let mask = (0..shape.len())
            .map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep })
            .collect();
        let mask = tape.constant(Tensor::from_vec(shape.rows, shape.cols, mask)?);
        tape.mul(x, mask)
    }

    fn linear(tape: &mut Tape<S>, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = tape.matmul(x, w)?;
        tape.add_row(xw, b)
    }

    /// Forward pass over a batch. Passing `dropout` enables training-mode
    /// dropout drawn from that generator.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        p: &BoundParams,
        batch: &GraphBatch<S>,
        mut dropout: Option<&mut Rng>,
    ) -> Result<ForwardOutputs> {
        if batch.input.cols() != self.spec.input_dim() {
            return Err(Error::Shape {
                op: "model input",
                left: batch.input.shape().to_string(),
                right: format!("width {}", self.spec.input_dim()),
            });
        }
        let n = batch.num_nodes();
        let mut h = tape.constant(batch.input.clone());
        match self.spec.arch {
            Architecture::Teacher(cfg) => {
                let norm = (cfg.kind == GnnKind::Gcn).then(|| tape.constant(batch.norm_weight.clone()));
                for (l, layer) in self.layout.layers.iter().enumerate() {
                    if l > 0 {
                        h = self.dropout(tape, h, &mut dropout)?;
                    }
                    h = match *layer {
                        Layer::Gin { w1, b1, w2, b2 } => {
                            let msg = tape.gather_rows(h, &batch.edge_src)?;
                            let agg = tape.segment_sum(msg, &batch.edge_dst, n)?;
                            let z = tape.add(h, agg)?;
                            let a = Self::linear(tape, z, p[w1], p[b1])?;
                            let a = tape.relu(a)?;
                            let a = Self::linear(tape, a, p[w2], p[b2])?;
                            tape.relu(a)?
                        }
                        Layer::Linear { w, b } => {
                            let hw = tape.matmul(h, p[w])?;
                            let msg = tape.gather_rows(hw, &batch.norm_src)?;
                            let msg = tape.mul_col(msg, norm.expect("gcn weights"))?;
                            let agg = tape.segment_sum(msg, &batch.norm_dst, n)?;
                            let a = tape.add_row(agg, p[b])?;
                            tape.relu(a)?
                        }
                    };
                }
            }
            Architecture::Student(_) => {
                let last = self.layout.layers.len() - 1;
                for (l, layer) in self.layout.layers.iter().enumerate() {
                    let Layer::Linear { w, b } = *layer else {
                        unreachable!("students only hold linear layers")
                    };
                    let a = Self::linear(tape, h, p[w], p[b])?;
                    h = tape.relu(a)?;
                    if l < last {
                        h = self.dropout(tape, h, &mut dropout)?;
                    }
                }
            }
        }
        let pooled = match self.layout.gate {
            Some((w, b)) => {
                let s = Self::linear(tape, h, p[w], p[b])?;
                let g = tape.sigmoid(s)?;
                tape.mul_col(h, g)?
            }
            None => h,
        };
        let graph_emb = tape.segment_sum(pooled, &batch.graph_of, batch.num_graphs())?;
        let cluster_emb = tape.segment_sum(pooled, &batch.cluster_of, batch.num_clusters())?;
        let (hw, hb) = self.layout.head;
        let logits = Self::linear(tape, graph_emb, p[hw], p[hb])?;
        Ok(ForwardOutputs {
            node_emb: h,
            graph_emb,
            cluster_emb,
            logits,
        })
    }

    /// Evaluation-mode logits `[graphs × classes]`.
    pub fn predict(&self, batch: &GraphBatch<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &p, batch, None)?;
        Ok(tape.tensor(out.logits))
    }

    /// Evaluation-mode outputs split per graph.
    pub fn graph_outputs(&self, batch: &GraphBatch<S>) -> Result<Vec<GraphOutputs<S>>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &p, batch, None)?;
        let node = tape.tensor(out.node_emb);
        let graph = tape.tensor(out.graph_emb);
        let cluster = tape.tensor(out.cluster_emb);
        let logits = tape.tensor(out.logits);
        Ok((0..batch.num_graphs())
            .map(|g| {
                let nodes: Vec<usize> = (batch.node_offsets[g]..batch.node_offsets[g + 1]).collect();
                let clusters: Vec<usize> = (batch.cluster_offsets[g]..batch.cluster_offsets[g + 1]).collect();
                GraphOutputs {
                    logits: logits.row(g).to_vec(),
                    node_emb: node.gather_rows(&nodes),
                    graph_emb: graph.row(g).to_vec(),
                    cluster_emb: cluster.gather_rows(&clusters),
                }
            })
            .collect())
    }

    /// Student node embeddings for a block of input rows, without a tape.
    /// Each row is transformed independently.
    pub fn embed_rows(&self, rows: &Tensor<S>) -> Result<Tensor<S>> {
        if !matches!(self.spec.arch, Architecture::Student(_)) {
            return Err(Error::Contract("row-wise embedding needs a node-wise student".into()));
        }
        let mut h = rows.clone();
        for layer in &self.layout.layers {
            let Layer::Linear { w, b } = *layer else {
                unreachable!("students only hold linear layers")
            };
            h = h.matmul(self.params.get(w))?;
            let bias = self.params.get(b).as_slice();
            let c = bias.len();
            for (i, v) in h.as_mut_slice().iter_mut().enumerate() {
                let z = *v + bias[i % c];
                *v = if z > S::zero() { z } else { S::zero() };
            }
        }
        Ok(h)
    }

    /// Pooling contribution of each embedded row (the gated row under
    /// attention readout).
    pub fn pool_rows(&self, emb: &Tensor<S>) -> Result<Tensor<S>> {
        let Some((w, b)) = self.layout.gate else {
            return Ok(emb.clone());
        };
        let s = emb.matmul(self.params.get(w))?;
        let b = self.params.get(b).as_slice()[0];
        let mut out = emb.clone();
        for r in 0..out.rows() {
            let g = crate::tensor::sigmoid(s.as_slice()[r] + b);
            out.row_mut(r).iter_mut().for_each(|v| *v *= g);
        }
        Ok(out)
    }

    /// Classifier head applied to one pooled embedding.
    pub fn head(&self, pooled: &[S]) -> Result<Vec<S>> {
        let (w, b) = self.layout.head;
        let x = Tensor::from_vec(1, pooled.len(), pooled.to_vec())?;
        let mut out = x.matmul(self.params.get(w))?.into_vec();
        for (o, &bb) in out.iter_mut().zip(self.params.get(b).as_slice()) {
            *o += bb;
        }
        Ok(out)
    }
}
