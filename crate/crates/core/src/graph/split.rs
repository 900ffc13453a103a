use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// One cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Stratified k-fold split. Each class is shuffled with a seeded RNG and dealt
/// round-robin across folds; the dealing position carries over between
/// classes so fold sizes also stay balanced.
pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (i, g) in dataset.graphs().iter().enumerate() {
        by_class[g.label()].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::Config(format!(
                "class {c} has {} graphs, fewer than k = {k}",
                members.len()
            )));
        }
    }
    let mut rng = stream_rng(seed, &[0x5EED_F01D]);
    let mut fold_of = vec![0usize; dataset.len()];
    let mut cursor = 0usize;
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = cursor % k;
            cursor += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test_ids, train_ids) = (0..dataset.len()).partition(|&i| fold_of[i] == f);
            FoldSplit {
                fold_index: f,
                train_ids,
                test_ids,
            }
        })
        .collect())
}
