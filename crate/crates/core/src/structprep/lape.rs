//! Laplacian eigenvector positional encodings.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::graph::Graph;
use crate::tensor::Tensor;

/// Dense symmetric normalized Laplacian `I - D^{-1/2} A D^{-1/2}`; isolated
/// nodes contribute nothing to the adjacency term.
pub fn normalized_laplacian(graph: &Graph) -> DMatrix<f64> {
    let n = graph.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|u| match graph.degree(u) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect();
    let mut l = DMatrix::<f64>::identity(n, n);
    for u in 0..n {
        for &v in graph.neighbors(u) {
            l[(u, v)] -= inv_sqrt[u] * inv_sqrt[v];
        }
    }
    l
}

/// Eigenpairs of the normalized Laplacian sorted by ascending eigenvalue.
pub fn laplacian_spectrum(graph: &Graph) -> (Vec<f64>, DMatrix<f64>) {
    let n = graph.num_nodes();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(normalized_laplacian(graph));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Flips `column` so its largest-magnitude entry is positive; entries within
/// a relative 1e-9 of the maximum count as tied and the lowest index wins.
fn fix_sign(column: &mut [f64]) {
    let max = column.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return;
    }
    let pivot = column
        .iter()
        .position(|v| v.abs() >= max * (1.0 - 1e-9))
        .expect("maximum exists");
    if column[pivot] < 0.0 {
        column.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Eigenvectors of the `k_pe` smallest eigenvalues after the first, as
/// columns of an `n × k_pe` matrix. Missing columns (when `n - 1 < k_pe`) are
/// zero.
pub fn laplacian_pe(graph: &Graph, k_pe: usize) -> Tensor<f64> {
    let n = graph.num_nodes();
    let mut out = Tensor::zeros(n, k_pe);
    if n <= 1 {
        return out;
    }
    let (_, vectors) = laplacian_spectrum(graph);
    for c in 0..k_pe.min(n - 1) {
        let mut col: Vec<f64> = vectors.column(c + 1).iter().copied().collect();
        fix_sign(&mut col);
        for (r, v) in col.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    out
}
