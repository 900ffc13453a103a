#![allow(dead_code)]

use graphkd::distill::{
    kernel_matrix, loss_inter_cluster, loss_path_consistency, loss_soft_logits, loss_whole_graph, NORM_EPS,
};
use graphkd::graph::Graph;
use graphkd::models::GraphBatch;
use graphkd::tensor::{Tape, Tensor, Var};
use graphkd::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_RTOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Relative gradient error with an absolute floor of 1.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares reverse-mode gradients of a scalar function of leaf tensors
/// with central differences. Returns the largest relative error.
pub fn check_leaf_gradients(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    let eval = |xs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.scalar(out)
    };
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[i], t.as_slice().len());
        for (j, &a) in analytic.iter().enumerate() {
            let mut xs = inputs.to_vec();
            xs[i].as_mut_slice()[j] += FD_STEP;
            let up = eval(&xs);
            xs[i].as_mut_slice()[j] -= 2.0 * FD_STEP;
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(grad_error(a, numeric));
        }
    }
    worst
}

/// Overwrites every parameter with uniform noise so that no unit sits
/// exactly on a ReLU kink (zero-initialized biases would).
pub fn randomize_params(model: &mut Model, seed: u64) {
    let mut r = rng(seed);
    for t in model.params_mut().tensors_mut() {
        t.as_mut_slice().iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    }
}

/// Gradient check of a scalar function of a model's parameters.
pub fn check_param_gradients(
    model: &Model,
    batch: &GraphBatch<f64>,
    loss: impl Fn(&mut Tape<f64>, &graphkd::ForwardOutputs) -> Var,
) -> f64 {
    let value = |m: &Model| {
        let mut tape = Tape::new();
        let p = m.params().bind(&mut tape);
        let out = m.forward(&mut tape, &p, batch, None).unwrap();
        let l = loss(&mut tape, &out);
        (tape, p, l)
    };
    let (tape, p, l) = value(model);
    let grads = tape.backward(l).unwrap();
    let analytic = model.params().collect_grads(&p, &grads);
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (i, g) in analytic.iter().enumerate() {
        for (j, &gj) in g.iter().enumerate() {
            let orig = probe.params().tensors()[i].as_slice()[j];
            probe.params_mut().tensors_mut()[i].as_mut_slice()[j] = orig + FD_STEP;
            let (t, _, l) = value(&probe);
            let up = t.scalar(l);
            probe.params_mut().tensors_mut()[i].as_mut_slice()[j] = orig - FD_STEP;
            let (t, _, l) = value(&probe);
            let down = t.scalar(l);
            probe.params_mut().tensors_mut()[i].as_mut_slice()[j] = orig;
            worst = worst.max(grad_error(gj, (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Connected-ish random graph with Gaussian-free uniform features.
pub fn small_graph(n: usize, p: f64, feature_dim: usize, label: usize, r: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((r.gen_range(0..v), v));
    }
    for u in 0..n {
        for v in u + 1..n {
            if r.gen::<f64>() < p && !edges.contains(&(u, v)) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, &edges, random_tensor(n, feature_dim, r), label).unwrap()
}

pub const ROUNDING: f64 = 1e-12;

pub struct Instance {
    pub logits_s: Tensor<f64>,
    pub logits_t: Tensor<f64>,
    pub h_s: Tensor<f64>,
    pub h_t: Tensor<f64>,
    pub walks: Vec<Vec<usize>>,
    pub temperature: f64,
}

pub fn instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let b = r.gen_range(1..6);
    let k = r.gen_range(2..5);
    let n = r.gen_range(2..12);
    let d = r.gen_range(1..6);
    let scale = r.gen_range(0.1..5.0);
    let big = |rows, cols, r: &mut rand_chacha::ChaCha8Rng| {
        let mut t = random_tensor(rows, cols, r);
        t.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        t
    };
    let walks = (0..r.gen_range(0..6))
        .map(|_| (0..r.gen_range(1..6)).map(|_| r.gen_range(0..n)).collect())
        .collect();
    Instance {
        logits_s: big(b, k, &mut r),
        logits_t: big(b, k, &mut r),
        h_s: big(n, d, &mut r),
        h_t: big(n, d, &mut r),
        walks,
        temperature: r.gen_range(0.5..4.0),
    }
}

/// (soft, whole-graph, inter-cluster, path) for student and teacher tensors.
pub fn all_losses(i: &Instance, same: bool) -> [f64; 4] {
    let mut tape = Tape::new();
    let (ls, lt) = (tape.leaf(i.logits_s.clone()), tape.leaf(i.logits_t.clone()));
    let (hs, ht) = (tape.leaf(i.h_s.clone()), tape.leaf(i.h_t.clone()));
    let (lt, ht) = if same { (ls, hs) } else { (lt, ht) };
    let soft = loss_soft_logits(&mut tape, ls, lt, i.temperature).unwrap();
    let whole = loss_whole_graph(&mut tape, ht, hs).unwrap();
    let ks = kernel_matrix(&mut tape, hs).unwrap();
    let kt = kernel_matrix(&mut tape, ht).unwrap();
    let cluster = loss_inter_cluster(&mut tape, ks, kt).unwrap();
    let path = loss_path_consistency(&mut tape, ht, hs, &i.walks).unwrap();
    [soft, whole, cluster, path].map(|v| tape.scalar(v))
}

/// Rows divided by `‖x‖ + ε`, the normalization used inside the kernel.
pub fn normalize_rows(x: &Tensor<f64>) -> Tensor<f64> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt() + NORM_EPS;
        out.row_mut(r).iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Removes `k` random nodes from random graphs of 30–500 nodes, inserts them
/// back one at a time and compares incremental student logits with a full
/// forward pass after every step. Returns the largest absolute gap and the
/// number of compared steps.
pub fn incremental_gap(num_graphs: usize, seed: u64) -> (f64, usize) {
    use graphkd::dynamic::{full_student_logits, IncrementalState};
    use graphkd::models::{ModelSpec, Readout, StudentConfig};
    use graphkd::structprep::{StructCache, StructConfig};
    use rand::seq::index;

    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for i in 0..num_graphs {
        let n = r.gen_range(30..=500);
        let p = r.gen_range(1.0..4.0) / n as f64;
        let g = small_graph(n, p, 3, 0, &mut r);
        let cache = StructCache::build(&g, &StructConfig::default(), i as u64).unwrap();
        let readout = if i % 2 == 0 { Readout::Sum } else { Readout::Attention };
        let cfg = if i % 3 == 2 {
            StudentConfig::mlp(3, 16)
        } else {
            StudentConfig::ga_mlp(3, 16)
        };
        let spec = ModelSpec::student(
            StudentConfig {
                readout,
                ..cfg.with_lape()
            },
            3,
            8,
            2,
        );
        let model = Model::new(spec, i as u64).unwrap();
        let removed = index::sample(&mut r, n, 10).into_vec();
        let mut present = vec![true; n];
        for &v in &removed {
            present[v] = false;
        }
        let mut state = IncrementalState::new(&model, &g, &cache, &present).unwrap();
        for &v in &removed {
            let inc = state.insert(v).unwrap();
            present[v] = true;
            let full = full_student_logits(&model, &g, &cache, &present).unwrap();
            worst = inc.iter().zip(&full).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
            steps += 1;
        }
    }
    (worst, steps)
}

/// Largest finite-difference error of each distillation loss with respect to
/// its student input on one random instance.
pub fn loss_gradient_errors(seed: u64) -> [(&'static str, f64); 5] {
    use graphkd::distill::loss_ground_truth;
    let mut r = rng(seed);
    let (b, k, n, d) = (
        r.gen_range(1..5),
        r.gen_range(2..5),
        r.gen_range(2..=10),
        r.gen_range(1..5),
    );
    let s_logits = random_tensor(b, k, &mut r);
    let t_logits = random_tensor(b, k, &mut r);
    let labels: Vec<usize> = (0..b).map(|_| r.gen_range(0..k)).collect();
    let h_s = random_tensor(n, d, &mut r);
    let h_t = random_tensor(n, d, &mut r);
    let walks: Vec<Vec<usize>> = (0..3)
        .map(|_| (0..r.gen_range(2..6)).map(|_| r.gen_range(0..n)).collect())
        .collect();
    let temperature = r.gen_range(0.5..3.0);
    [
        (
            "ground truth",
            check_leaf_gradients(std::slice::from_ref(&s_logits), |t, v| {
                loss_ground_truth(t, v[0], &labels).unwrap()
            }),
        ),
        (
            "soft logits",
            check_leaf_gradients(&[s_logits], |t, v| {
                let tl = t.constant(t_logits.clone());
                loss_soft_logits(t, v[0], tl, temperature).unwrap()
            }),
        ),
        (
            "whole graph",
            check_leaf_gradients(std::slice::from_ref(&h_s), |t, v| {
                let ht = t.constant(h_t.clone());
                loss_whole_graph(t, ht, v[0]).unwrap()
            }),
        ),
        (
            "inter cluster",
            check_leaf_gradients(std::slice::from_ref(&h_s), |t, v| {
                let ht = t.constant(h_t.clone());
                let ks = kernel_matrix(t, v[0]).unwrap();
                let kt = kernel_matrix(t, ht).unwrap();
                loss_inter_cluster(t, ks, kt).unwrap()
            }),
        ),
        (
            "path",
            check_leaf_gradients(&[h_s], |t, v| {
                let ht = t.constant(h_t.clone());
                loss_path_consistency(t, ht, v[0], &walks).unwrap()
            }),
        ),
    ]
}

pub struct Fixture {
    graphs: Vec<Graph>,
    caches: Vec<graphkd::structprep::StructCache>,
    walks: Vec<Vec<Vec<usize>>>,
}

pub fn fixture(seed: u64) -> Fixture {
    let mut r = rng(seed);
    let graphs: Vec<_> = (0..3)
        .map(|i| {
            let n = r.gen_range(2..=10);
            small_graph(n, 0.3, 3, i % 2, &mut r)
        })
        .collect();
    let cfg = graphkd::structprep::StructConfig {
        k_pe: 4,
        ..Default::default()
    };
    let caches: Vec<_> = graphs
        .iter()
        .map(|g| graphkd::structprep::StructCache::build(g, &cfg, seed).unwrap())
        .collect();
    let walks = caches
        .iter()
        .map(|c| c.walk_pool.walks.iter().take(4).cloned().collect())
        .collect();
    Fixture { graphs, caches, walks }
}

/// Largest parameter-gradient error of the distillation objective of
/// `student` against a random `teacher` on a batch of three graphs of at most
/// ten nodes. Each loss term is checked alone and all together.
pub fn model_gradient_error(
    student: graphkd::models::ModelSpec,
    teacher: graphkd::models::ModelSpec,
    seed: u64,
) -> f64 {
    use graphkd::distill::{batch_loss, DistillWeights, TeacherBatch};
    let f = fixture(seed);
    let grefs: Vec<_> = f.graphs.iter().collect();
    let crefs: Vec<_> = f.caches.iter().collect();
    let t_model = Model::new(teacher, seed ^ 1).unwrap();
    let t_batch = GraphBatch::build(&teacher, &grefs, Some(&crefs)).unwrap();
    let mut tape = Tape::new();
    let p = t_model.params().bind_frozen(&mut tape);
    let out = t_model.forward(&mut tape, &p, &t_batch, None).unwrap();
    let tb = TeacherBatch {
        logits: tape.tensor(out.logits),
        graph_emb: tape.tensor(out.graph_emb),
        node_emb: tape.tensor(out.node_emb),
        cluster_emb: tape.tensor(out.cluster_emb),
    };
    let mut s_model = Model::new(student, seed).unwrap();
    randomize_params(&mut s_model, seed);
    let batch = GraphBatch::build(&student, &grefs, Some(&crefs)).unwrap();
    let walks: Vec<&[Vec<usize>]> = f.walks.iter().map(|w| w.as_slice()).collect();
    let mut worst: f64 = 0.0;
    for weights in [
        DistillWeights {
            lambda: 0.0,
            mu: 0.0,
            eta: 0.0,
            soft: 0.0,
            temperature: 2.0,
        },
        DistillWeights {
            lambda: 0.0,
            mu: 0.0,
            eta: 0.0,
            soft: 1.0,
            temperature: 2.0,
        },
        DistillWeights {
            lambda: 1.0,
            mu: 0.0,
            eta: 0.0,
            soft: 0.0,
            temperature: 2.0,
        },
        DistillWeights {
            lambda: 0.0,
            mu: 1.0,
            eta: 0.0,
            soft: 0.0,
            temperature: 2.0,
        },
        DistillWeights {
            lambda: 0.0,
            mu: 0.0,
            eta: 1.0,
            soft: 0.0,
            temperature: 2.0,
        },
        DistillWeights {
            lambda: 1.0,
            mu: 1.0,
            eta: 1.0,
            soft: 1.0,
            temperature: 2.0,
        },
    ]
    .iter()
    {
        let err = check_param_gradients(&s_model, &batch, |tape, out| {
            batch_loss(tape, out, &tb, &batch, &walks, weights).unwrap().0
        });
        worst = worst.max(err);
    }
    worst
}

/// Every set partition of `0..n` as restricted growth strings.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        grow(&mut vec![0], 0, n, &mut out);
    }
    out
}

/// Textbook modularity over the dense adjacency matrix.
pub fn dense_modularity(g: &Graph, c: &[usize]) -> f64 {
    let two_m = 2.0 * g.num_edges() as f64;
    let mut q = 0.0;
    for i in 0..g.num_nodes() {
        for j in 0..g.num_nodes() {
            if c[i] == c[j] {
                let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
                q += a - (g.degree(i) * g.degree(j)) as f64 / two_m;
            }
        }
    }
    q / two_m
}
