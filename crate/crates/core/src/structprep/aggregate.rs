use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

/// One-hop GA-MLP aggregation `A D⁻¹ X`: row `u` is
/// `Σ_{v ∈ N(u)} x_v / deg(v)`; isolated nodes get a zero row.
pub fn ga_mlp_aggregate(graph: &Graph, x: &Tensor<f64>) -> Result<Tensor<f64>> {
    if x.rows() != graph.num_nodes() {
        return Err(Error::Shape {
            op: "ga_mlp_aggregate",
            left: format!("{} nodes", graph.num_nodes()),
            right: x.shape().to_string(),
        });
    }
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for u in 0..graph.num_nodes() {
        for &v in graph.neighbors(u) {
            let w = 1.0 / graph.degree(v) as f64;
            let (src, dst) = (x.row(v).to_vec(), out.row_mut(u));
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += w * s);
        }
    }
    Ok(out)
}
