use std::time::Instant;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::distill::{batch_loss, loss_ground_truth, total_loss, DistillWeights, LossParts, TeacherCache};
use crate::error::{Error, Result};
use crate::graph::{Dataset, FoldSplit, Graph};
use crate::models::{GraphBatch, Model, ModelSpec};
use crate::rng::{derive_seed, stream_rng};
use crate::structprep::{StructCache, StructCacheSet};
use crate::tensor::{Adam, AdamState, ParamStore, PlateauScheduler, Tape};

/// What a training run minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Cross-entropy against ground-truth labels only.
    Supervised,
    /// Full distillation objective against a frozen teacher.
    Distill {
        teacher: &'a TeacherCache,
        weights: DistillWeights,
    },
}

/// Per-epoch means of the loss terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub parts: LossParts,
    pub total: f64,
    pub test_accuracy: f64,
}

/// Outcome of one model trained on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub seed: u64,
    pub best_test_accuracy: f64,
    pub epoch_of_best: usize,
    /// Train accuracy of the best-epoch parameters.
    pub train_accuracy_at_best: f64,
    pub curves: Vec<EpochLog>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub result: FoldResult,
    pub best_params: ParamStore<f64>,
}

fn refs<'a>(dataset: &'a Dataset, ids: &[usize]) -> Vec<&'a Graph> {
    ids.iter().map(|&i| &dataset.graphs()[i]).collect()
}

fn cache_refs<'a>(caches: Option<&'a StructCacheSet>, ids: &[usize]) -> Option<Vec<&'a StructCache>> {
    caches.map(|c| ids.iter().map(|&i| &c.caches[i]).collect())
}

pub(crate) fn build_batch(
    spec: &ModelSpec,
    dataset: &Dataset,
    caches: Option<&StructCacheSet>,
    ids: &[usize],
) -> Result<GraphBatch<f64>> {
    let graphs = refs(dataset, ids);
    let cr = cache_refs(caches, ids);
    GraphBatch::build(spec, &graphs, cr.as_deref())
}

/// Index of the largest logit per row; ties go to the lowest class.
pub fn argmax_rows(logits: &crate::tensor::Tensor<f64>) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

const EVAL_CHUNK: usize = 256;

/// Classification accuracy of `model` on graphs `ids`.
pub fn evaluate(model: &Model<f64>, dataset: &Dataset, caches: Option<&StructCacheSet>, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for chunk in ids.chunks(EVAL_CHUNK) {
        let batch = build_batch(model.spec(), dataset, caches, chunk)?;
        let pred = argmax_rows(&model.predict(&batch)?);
        correct += pred.iter().zip(&batch.labels).filter(|(p, y)| p == y).count();
    }
    Ok(correct as f64 / ids.len() as f64)
}

/// Trains one model on one fold, keeping the parameters of the epoch with
/// the best fold-test accuracy. The plateau schedule monitors the same
/// metric.
pub fn fit(
    spec: ModelSpec,
    dataset: &Dataset,
    caches: Option<&StructCacheSet>,
    split: &FoldSplit,
    cfg: &RunConfig,
    objective: Objective<'_>,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Objective::Distill { weights, teacher } = objective {
        weights.validate()?;
        if teacher.outputs.len() != dataset.len() {
            return Err(Error::Integrity(format!(
                "teacher cache holds {} graphs, dataset has {}",
                teacher.outputs.len(),
                dataset.len()
            )));
        }
        if caches.is_none() {
            return Err(Error::Config("distillation needs structure caches".into()));
        }
    }
    let start = Instant::now();
    let mut model = Model::<f64>::new(spec, derive_seed(seed, &[1]))?;
    let adam = Adam::default();
    let mut state = AdamState::for_params(model.params());
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.lr_factor, cfg.patience);
    let mut order = split.train_ids.clone();
    let mut best = (-1.0, 0usize);
    let mut best_params = model.params().clone();
    let mut curves = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(seed, &[2, epoch as u64]);
        order.shuffle(&mut rng);
        let mut sums = LossParts::default();
        let mut batches = 0usize;
        for ids in order.chunks(cfg.batch_size) {
            let batch = build_batch(model.spec(), dataset, caches, ids)?;
            let mut tape = Tape::new();
            let p = model.params().bind(&mut tape);
            let out = model.forward(&mut tape, &p, &batch, Some(&mut rng))?;
            let (loss, parts) = match objective {
                Objective::Supervised => {
                    let gt = loss_ground_truth(&mut tape, out.logits, &batch.labels)?;
                    let parts = LossParts {
                        gt: tape.scalar(gt),
                        ..LossParts::default()
                    };
                    (gt, parts)
                }
                Objective::Distill { teacher, weights } => {
                    let tb = teacher.batch(ids, &batch)?;
                    let sc = caches.expect("checked above");
                    let walks: Vec<Vec<Vec<usize>>> = ids
                        .iter()
                        .map(|&i| epoch_walks(cfg, &sc.caches[i], dataset.graphs()[i].num_nodes(), seed, epoch, i))
                        .collect();
                    let wr: Vec<&[Vec<usize>]> = walks.iter().map(|w| w.as_slice()).collect();
                    batch_loss(&mut tape, &out, &tb, &batch, &wr, &weights)?
                }
            };
            if !tape.scalar(loss).is_finite() {
                return Err(Error::NonFinite { op: "training loss" });
            }
            let grads = tape.backward(loss)?;
            let g = model.params().collect_grads(&p, &grads);
            adam.step(model.params_mut(), &g, &mut state, sched.lr)?;
            sums.gt += parts.gt;
            sums.soft += parts.soft;
            sums.graph += parts.graph;
            sums.cluster += parts.cluster;
            sums.path += parts.path;
            batches += 1;
        }
        let k = batches.max(1) as f64;
        let parts = LossParts {
            gt: sums.gt / k,
            soft: sums.soft / k,
            graph: sums.graph / k,
            cluster: sums.cluster / k,
            path: sums.path / k,
        };
        let total = match objective {
            Objective::Supervised => parts.gt,
            Objective::Distill { weights, .. } => total_loss(&parts, &weights),
        };
        let test_accuracy = evaluate(&model, dataset, caches, &split.test_ids)?;
        curves.push(EpochLog {
            epoch,
            lr: sched.lr,
            parts,
            total,
            test_accuracy,
        });
        if test_accuracy > best.0 {
            best = (test_accuracy, epoch);
            best_params = model.params().clone();
        }
        sched.observe(test_accuracy);
    }
    let best_model = Model::from_params(spec, &best_params)?;
    let train_accuracy_at_best = evaluate(&best_model, dataset, caches, &split.train_ids)?;
    Ok(TrainOutcome {
        result: FoldResult {
            fold_index: split.fold_index,
            seed,
            best_test_accuracy: best.0.max(0.0),
            epoch_of_best: best.1,
            train_accuracy_at_best,
            curves,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
        best_params,
    })
}

/// Walks used for graph `graph_index` in `epoch`: a seeded draw without
/// replacement from the graph's precomputed pool.
pub fn epoch_walks(
    cfg: &RunConfig,
    cache: &StructCache,
    num_nodes: usize,
    seed: u64,
    epoch: usize,
    graph_index: usize,
) -> Vec<Vec<usize>> {
    let pool = &cache.walk_pool.walks;
    let want = cfg.structure.walks_per_epoch(num_nodes).min(pool.len());
    let mut rng = stream_rng(seed, &[3, epoch as u64, graph_index as u64]);
    index::sample(&mut rng, pool.len(), want)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect()
}
