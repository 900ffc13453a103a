//! Distillation objectives: ground-truth and soft-logit terms plus the three
//! structural terms (whole-graph, inter-cluster kernel, path consistency).
//!
//! Teacher quantities always enter the tape as constants.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ForwardOutputs, GraphBatch, GraphOutputs, ModelSpec};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

/// Guard added to vector norms before dividing.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillWeights {
    /// Whole-graph term.
    pub lambda: f64,
    /// Inter-cluster term.
    pub mu: f64,
    /// Path-consistency term.
    pub eta: f64,
    /// Soft-logit term; 0 gives plain supervised training.
    pub soft: f64,
    /// Soft-logit temperature; the term is scaled by `T²`.
    pub temperature: f64,
}

impl Default for DistillWeights {
    fn default() -> Self {
        DistillWeights {
            lambda: 0.1,
            mu: 0.1,
            eta: 1e-4,
            soft: 1.0,
            temperature: 1.0,
        }
    }
}

impl DistillWeights {
    /// Soft-logit distillation only.
    pub fn soft_only() -> Self {
        DistillWeights {
            lambda: 0.0,
            mu: 0.0,
            eta: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda, self.mu, self.eta, self.soft];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Unweighted values of the five loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub gt: f64,
    pub soft: f64,
    pub graph: f64,
    pub cluster: f64,
    pub path: f64,
}

/// `gt + soft·SL + λ·G + μ·C + η·P`
pub fn total_loss(parts: &LossParts, w: &DistillWeights) -> f64 {
    parts.gt + w.soft * parts.soft + w.lambda * parts.graph + w.mu * parts.cluster + w.eta * parts.path
}

fn zero<S: Scalar>(tape: &mut Tape<S>) -> Var {
    tape.constant(Tensor::zeros(1, 1))
}

/// Mean cross-entropy of `logits` `[B×K]` against `labels`.
pub fn loss_ground_truth<S: Scalar>(tape: &mut Tape<S>, logits: Var, labels: &[usize]) -> Result<Var> {
    let s = tape.shape(logits);
    if labels.len() != s.rows {
        return Err(Error::Shape {
            op: "loss_ground_truth",
            left: s.to_string(),
            right: format!("{} labels", labels.len()),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= s.cols) {
        return Err(Error::Contract(format!("label {bad} >= {} classes", s.cols)));
    }
    let ls = tape.log_softmax(logits, 1)?;
    let flat = tape.reshape(ls, s.rows * s.cols, 1)?;
    let idx: Vec<usize> = labels.iter().enumerate().map(|(b, &y)| b * s.cols + y).collect();
    let picked = tape.gather_rows(flat, &idx)?;
    let m = tape.mean(picked)?;
    tape.scale(m, -S::one())
}

/// Mean over rows of `KL(softmax(t/T) ‖ softmax(s/T))`, times `T²`.
pub fn loss_soft_logits<S: Scalar>(tape: &mut Tape<S>, student: Var, teacher: Var, temperature: f64) -> Result<Var> {
    let (ss, st) = (tape.shape(student), tape.shape(teacher));
    if ss != st {
        return Err(Error::Shape {
            op: "loss_soft_logits",
            left: ss.to_string(),
            right: st.to_string(),
        });
    }
    let inv_t = S::lit(1.0 / temperature);
    let t = tape.tensor(teacher);
    let t = tape.constant(t);
    let (s, t) = (tape.scale(student, inv_t)?, tape.scale(t, inv_t)?);
    let kl = row_kl(tape, t, s)?;
    let m = tape.mean(kl)?;
    tape.scale(m, S::lit(temperature * temperature))
}

/// Per-row `KL(softmax(t) ‖ softmax(s))` as a column; `t` must be constant.
fn row_kl<S: Scalar>(tape: &mut Tape<S>, t: Var, s: Var) -> Result<Var> {
    let lt = tape.log_softmax(t, 1)?;
    let pt = tape.softmax(t, 1)?;
    let ls = tape.log_softmax(s, 1)?;
    let d = tape.sub(lt, ls)?;
    let w = tape.mul(pt, d)?;
    tape.sum_along(w, 1)
}

/// Mean over rows of `‖t/‖t‖ − s/‖s‖‖²`.
pub fn loss_whole_graph<S: Scalar>(tape: &mut Tape<S>, h_t: Var, h_s: Var) -> Result<Var> {
    let (st, ss) = (tape.shape(h_t), tape.shape(h_s));
    if st != ss {
        return Err(Error::Shape {
            op: "loss_whole_graph",
            left: st.to_string(),
            right: ss.to_string(),
        });
    }
    let eps = S::lit(NORM_EPS);
    let t = tape.tensor(h_t);
    let t = tape.constant(t);
    let nt = tape.l2_normalize(t, 1, eps)?;
    let ns = tape.l2_normalize(h_s, 1, eps)?;
    let d = tape.sub(ns, nt)?;
    let f = tape.frobenius_sq(d)?;
    tape.scale(f, S::one() / S::lit(st.rows.max(1) as f64))
}

/// Cosine-similarity matrix of the rows of `reps`.
pub fn kernel_matrix<S: Scalar>(tape: &mut Tape<S>, reps: Var) -> Result<Var> {
    let n = tape.l2_normalize(reps, 1, S::lit(NORM_EPS))?;
    let nt = tape.transpose(n)?;
    tape.matmul(n, nt)
}

/// Value-only [`kernel_matrix`].
pub fn kernel_matrix_plain<S: Scalar>(reps: &Tensor<S>) -> Tensor<S> {
    let mut tape = Tape::new();
    let r = tape.constant(reps.clone());
    let k = kernel_matrix(&mut tape, r).expect("square product of a matrix with its transpose");
    tape.tensor(k)
}

/// `‖K_S − K_T‖_F²`
pub fn loss_inter_cluster<S: Scalar>(tape: &mut Tape<S>, k_s: Var, k_t: Var) -> Result<Var> {
    let (ss, st) = (tape.shape(k_s), tape.shape(k_t));
    if ss != st {
        return Err(Error::Integrity(format!(
            "cluster kernels differ in shape: student {ss}, teacher {st}"
        )));
    }
    let t = tape.tensor(k_t);
    let t = tape.constant(t);
    let d = tape.sub(k_s, t)?;
    tape.frobenius_sq(d)
}

/// `p(u|v) ∝ exp(h_uᵀh_v)` over every entry of `walk`, anchored at its
/// first node. Returns a `1×len` row.
pub fn path_softmax<S: Scalar>(tape: &mut Tape<S>, h: Var, walk: &[usize]) -> Result<Var> {
    if walk.is_empty() {
        return Err(Error::Contract("path_softmax needs a nonempty walk".into()));
    }
    let w = tape.gather_rows(h, walk)?;
    let a = tape.gather_rows(h, &walk[..1])?;
    let wt = tape.transpose(w)?;
    let scores = tape.matmul(a, wt)?;
    tape.softmax(scores, 1)
}

/// Walk-path logits: row `i` holds `h_{w_i[j]}ᵀ h_{w_i[0]}` for a group of
/// equal-length walks.
fn walk_scores<S: Scalar>(tape: &mut Tape<S>, h: Var, walks: &[&[usize]]) -> Result<Var> {
    let len = walks[0].len();
    let entries: Vec<usize> = walks.iter().flat_map(|w| w.iter().copied()).collect();
    let anchors: Vec<usize> = walks.iter().flat_map(|w| std::iter::repeat_n(w[0], len)).collect();
    let e = tape.gather_rows(h, &entries)?;
    let a = tape.gather_rows(h, &anchors)?;
    let prod = tape.mul(e, a)?;
    let dots = tape.sum_along(prod, 1)?;
    tape.reshape(dots, walks.len(), len)
}

/// Weighted sum over walks of `KL(p_T ‖ p_S)`.
fn weighted_path_kl<S: Scalar>(
    tape: &mut Tape<S>,
    h_t: Var,
    h_s: Var,
    walks: &[&[usize]],
    weights: &[f64],
) -> Result<Var> {
    let mut groups: BTreeMap<usize, (Vec<&[usize]>, Vec<S>)> = BTreeMap::new();
    for (w, &wt) in walks.iter().zip(weights) {
        // a singleton walk has a one-point distribution on both sides
        if w.len() > 1 {
            let g = groups.entry(w.len()).or_default();
            g.0.push(w);
            g.1.push(S::lit(wt));
        }
    }
    let mut total = zero(tape);
    for (_, (ws, wts)) in groups {
        let st = walk_scores(tape, h_t, &ws)?;
        let st = tape.tensor(st);
        let st = tape.constant(st);
        let ss = walk_scores(tape, h_s, &ws)?;
        let kl = row_kl(tape, st, ss)?;
        let wv = tape.constant(Tensor::from_vec(wts.len(), 1, wts)?);
        let weighted = tape.mul(kl, wv)?;
        let s = tape.sum(weighted)?;
        total = tape.add(total, s)?;
    }
    Ok(total)
}

/// Mean over walks of `KL(p_T(·|v) ‖ p_S(·|v))`; an empty walk set gives 0.
pub fn loss_path_consistency<S: Scalar>(tape: &mut Tape<S>, h_t: Var, h_s: Var, walks: &[Vec<usize>]) -> Result<Var> {
    if walks.is_empty() {
        return Ok(zero(tape));
    }
    let refs: Vec<&[usize]> = walks.iter().map(|w| w.as_slice()).collect();
    let wt = vec![1.0 / walks.len() as f64; walks.len()];
    let t = tape.tensor(h_t);
    let t = tape.constant(t);
    weighted_path_kl(tape, t, h_s, &refs, &wt)
}

/// `‖H_A H_Aᵀ − H_B H_Bᵀ‖_F²`: squared MMD under the kernel `⟨x, y⟩²`.
pub fn mmd_poly_sq<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<S> {
    if a.rows() != b.rows() {
        return Err(Error::Shape {
            op: "mmd_poly_sq",
            left: a.shape().to_string(),
            right: b.shape().to_string(),
        });
    }
    let ga = a.matmul(&a.transpose())?;
    let gb = b.matmul(&b.transpose())?;
    Ok(ga
        .as_slice()
        .iter()
        .zip(gb.as_slice())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum())
}

/// Frozen teacher outputs for every graph of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherCache {
    pub spec: ModelSpec,
    pub outputs: Vec<GraphOutputs<f64>>,
}

/// Teacher outputs stacked in batch order.
#[derive(Debug, Clone)]
pub struct TeacherBatch<S> {
    pub logits: Tensor<S>,
    pub graph_emb: Tensor<S>,
    pub node_emb: Tensor<S>,
    pub cluster_emb: Tensor<S>,
}

fn stack<S: Scalar>(parts: &[&Tensor<f64>], cols: usize) -> Result<Tensor<S>> {
    let rows = parts.iter().map(|p| p.rows()).sum();
    let data = parts
        .iter()
        .flat_map(|p| p.as_slice().iter().map(|&v| S::lit(v)))
        .collect();
    Tensor::from_vec(rows, cols, data)
}

impl TeacherCache {
    /// Teacher outputs of graphs `ids`, checked against the student batch
    /// built from the same graphs.
    pub fn batch<S: Scalar>(&self, ids: &[usize], batch: &GraphBatch<S>) -> Result<TeacherBatch<S>> {
        if ids.len() != batch.num_graphs() {
            return Err(Error::Contract(format!(
                "{} teacher ids for a batch of {} graphs",
                ids.len(),
                batch.num_graphs()
            )));
        }
        let mut outs = Vec::with_capacity(ids.len());
        for (b, &i) in ids.iter().enumerate() {
            let o = self
                .outputs
                .get(i)
                .ok_or_else(|| Error::Integrity(format!("no teacher output for graph {i}")))?;
            let nodes = batch.node_offsets[b + 1] - batch.node_offsets[b];
            let clusters = batch.cluster_offsets[b + 1] - batch.cluster_offsets[b];
            if o.node_emb.rows() != nodes {
                return Err(Error::Integrity(format!(
                    "teacher cache for graph {i} has {} nodes, graph has {nodes}",
                    o.node_emb.rows()
                )));
            }
            if o.cluster_emb.rows() != clusters {
                return Err(Error::Integrity(format!(
                    "teacher cache for graph {i} has {} clusters, structure cache has {clusters}",
                    o.cluster_emb.rows()
                )));
            }
            outs.push(o);
        }
        let h = self.spec.hidden();
        let k = self.spec.num_classes;
        let logits = outs.iter().flat_map(|o| o.logits.iter().map(|&v| S::lit(v))).collect();
        let graph = outs
            .iter()
            .flat_map(|o| o.graph_emb.iter().map(|&v| S::lit(v)))
            .collect();
        Ok(TeacherBatch {
            logits: Tensor::from_vec(ids.len(), k, logits)?,
            graph_emb: Tensor::from_vec(ids.len(), h, graph)?,
            node_emb: stack(&outs.iter().map(|o| &o.node_emb).collect::<Vec<_>>(), h)?,
            cluster_emb: stack(&outs.iter().map(|o| &o.cluster_emb).collect::<Vec<_>>(), h)?,
        })
    }
}

/// Batch objective: each term averaged over graphs, the path term first
/// averaged over each graph's walks. `walks[b]` holds local node ids of
/// batch graph `b`.
pub fn batch_loss<S: Scalar>(
    tape: &mut Tape<S>,
    student: &ForwardOutputs,
    teacher: &TeacherBatch<S>,
    batch: &GraphBatch<S>,
    walks: &[&[Vec<usize>]],
    weights: &DistillWeights,
) -> Result<(Var, LossParts)> {
    let b = batch.num_graphs();
    let inv_b = 1.0 / b.max(1) as f64;
    let gt = loss_ground_truth(tape, student.logits, &batch.labels)?;
    let t_logits = tape.constant(teacher.logits.clone());
    let sl = loss_soft_logits(tape, student.logits, t_logits, weights.temperature)?;
    let t_graph = tape.constant(teacher.graph_emb.clone());
    let lg = loss_whole_graph(tape, t_graph, student.graph_emb)?;

    // one Gram matrix over all clusters of the batch, masked to the
    // per-graph diagonal blocks
    let c = batch.num_clusters();
    let mut mask = vec![S::zero(); c * c];
    for g in 0..b {
        let (lo, hi) = (batch.cluster_offsets[g], batch.cluster_offsets[g + 1]);
        for i in lo..hi {
            for j in lo..hi {
                mask[i * c + j] = S::one();
            }
        }
    }
    let mask = tape.constant(Tensor::from_vec(c, c, mask)?);
    let t_cluster = tape.constant(teacher.cluster_emb.clone());
    if tape.shape(t_cluster).rows != c {
        return Err(Error::Integrity(format!(
            "teacher has {} clusters for a batch of {c}",
            tape.shape(t_cluster).rows
        )));
    }
    let ks = kernel_matrix(tape, student.cluster_emb)?;
    let kt = kernel_matrix(tape, t_cluster)?;
    let d = tape.sub(ks, kt)?;
    let d = tape.mul(d, mask)?;
    let lc = tape.frobenius_sq(d)?;
    let lc = tape.scale(lc, S::lit(inv_b))?;

    if walks.len() != b {
        return Err(Error::Contract(format!("{} walk sets for {b} graphs", walks.len())));
    }
    let mut all = Vec::new();
    let mut wts = Vec::new();
    for (g, ws) in walks.iter().enumerate() {
        let base = batch.node_offsets[g];
        for w in ws.iter() {
            all.push(w.iter().map(|&u| base + u).collect::<Vec<_>>());
            wts.push(inv_b / ws.len() as f64);
        }
    }
    let refs: Vec<&[usize]> = all.iter().map(|w| w.as_slice()).collect();
    let t_nodes = tape.constant(teacher.node_emb.clone());
    let lp = weighted_path_kl(tape, t_nodes, student.node_emb, &refs, &wts)?;

    let parts = LossParts {
        gt: tape.scalar(gt).to_f64_lossy(),
        soft: tape.scalar(sl).to_f64_lossy(),
        graph: tape.scalar(lg).to_f64_lossy(),
        cluster: tape.scalar(lc).to_f64_lossy(),
        path: tape.scalar(lp).to_f64_lossy(),
    };
    let mut total = gt;
    for (term, w) in [
        (sl, weights.soft),
        (lg, weights.lambda),
        (lc, weights.mu),
        (lp, weights.eta),
    ] {
        if w != 0.0 {
            let t = tape.scale(term, S::lit(w))?;
            total = tape.add(total, t)?;
        }
    }
    Ok((total, parts))
}
