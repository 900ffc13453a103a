use super::{Dataset, Graph};
use crate::error::Result;
use crate::tensor::Tensor;

/// Largest node degree across the whole dataset.
pub fn dataset_max_degree(dataset: &Dataset) -> usize {
    dataset
        .graphs()
        .iter()
        .flat_map(|g| (0..g.num_nodes()).map(move |u| g.degree(u)))
        .max()
        .unwrap_or(0)
}

/// Replaces node features by a one-hot encoding of `min(degree, max_degree)`.
pub fn degree_onehot_features(dataset: &Dataset, max_degree: usize) -> Result<Dataset> {
    let graphs = dataset
        .graphs()
        .iter()
        .map(|g| {
            let mut x = Tensor::zeros(g.num_nodes(), max_degree + 1);
            for u in 0..g.num_nodes() {
                x[(u, g.degree(u).min(max_degree))] = 1.0;
            }
            g.with_features(x)
        })
        .collect::<Result<Vec<Graph>>>()?;
    Dataset::new(dataset.name.clone(), graphs, dataset.num_classes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(leaves: usize) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|v| (0, v)).collect();
        Graph::unit_features(leaves + 2, &edges, 0).unwrap()
    }

    #[test]
    fn one_hot_clamps_and_handles_isolated() {
        let ds = Dataset::new("s", vec![star(3), star(9)], 1).unwrap();
        let out = degree_onehot_features(&ds, 5).unwrap();
        assert_eq!(out.feature_dim(), 6);
        let g3 = &out.graphs()[0];
        assert_eq!(g3.features().row(0), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        // last node is isolated
        assert_eq!(g3.features().row(4), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let g9 = &out.graphs()[1];
        assert_eq!(g9.features().row(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(dataset_max_degree(&ds), 9);
    }
}
