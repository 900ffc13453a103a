//! Teacher training and selection, teacher-output caching, student
//! distillation, ablation and grid drivers over stratified folds.

mod fit;
mod report;

pub use fit::{argmax_rows, epoch_walks, evaluate, fit, EpochLog, FoldResult, Objective, TrainOutcome};
pub use report::{mean_std, read_csv, read_json, render_table, summarize, write_csv, write_json, ResultRow, Summary};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distill::{DistillWeights, TeacherCache};
use crate::error::{Error, Result};
use crate::graph::{Dataset, FoldSplit};
use crate::models::{GnnConfig, GraphBatch, Model, ModelSpec, StudentConfig};
use crate::rng::derive_seed;
use crate::structprep::{StructCacheSet, StructConfig};
use crate::tensor::{read_checkpoint, write_checkpoint, ParamStore};

const TEACHER_STREAM: u64 = 10;
const STUDENT_STREAM: u64 = 20;

/// Hyperparameters shared by teacher and student runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_factor: f64,
    pub patience: usize,
    pub weights: DistillWeights,
    pub seed: u64,
    /// Student trainings per fold, each with its own seed.
    pub repetitions: usize,
    pub structure: StructConfig,
    /// Worker threads; 1 runs everything serially.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epochs: 350,
            batch_size: 32,
            lr: 8e-3,
            lr_factor: 0.6,
            patience: 30,
            weights: DistillWeights::default(),
            seed: 0,
            repetitions: 3,
            structure: StructConfig::default(),
            jobs: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if self.patience >= self.epochs {
            return Err(Error::Config(format!(
                "patience {} must be below epochs {}",
                self.patience, self.epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return Err(Error::Config("lr must be > 0 and lr_factor in (0, 1]".into()));
        }
        if self.repetitions == 0 || self.jobs == 0 {
            return Err(Error::Config("repetitions and jobs must be at least 1".into()));
        }
        self.weights.validate()
    }

    /// Runs `f` over `items` on at most `jobs` threads; results keep item
    /// order.
    pub fn parallel_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Result<Vec<R>> {
        if self.jobs <= 1 {
            return Ok(items.iter().map(f).collect());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(|| items.par_iter().map(f).collect()))
    }
}

/// Seed of repetition `rep` of a student on `fold`; shared by every arm so
/// that arms differ only in their loss weights.
pub fn student_seed(root: u64, fold: usize, rep: usize) -> u64 {
    derive_seed(root, &[STUDENT_STREAM, fold as u64, rep as u64])
}

pub fn teacher_seed(root: u64, fold: usize, grid_index: usize) -> u64 {
    derive_seed(root, &[TEACHER_STREAM, fold as u64, grid_index as u64])
}

/// One teacher grid point on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRun {
    pub fold_index: usize,
    pub grid_index: usize,
    pub config: GnnConfig,
    pub result: Option<FoldResult>,
    /// Set when the run was aborted, e.g. on a diverging loss.
    pub failure: Option<String>,
}

/// Selected teacher of one fold.
#[derive(Debug, Clone)]
pub struct FoldTeacher {
    pub fold_index: usize,
    pub grid_index: usize,
    pub spec: ModelSpec,
    pub params: ParamStore<f64>,
    pub result: FoldResult,
}

impl FoldTeacher {
    pub fn model(&self) -> Result<Model<f64>> {
        Model::from_params(self.spec, &self.params)
    }
}

#[derive(Debug, Clone)]
pub struct TeacherTraining {
    pub selected: Vec<FoldTeacher>,
    pub runs: Vec<TeacherRun>,
}

/// Trains every grid configuration on every fold and keeps, per fold, the
/// checkpoint with the best fold-test accuracy. A diverging grid point is
/// recorded and skipped.
pub fn train_teacher(
    dataset: &Dataset,
    folds: &[FoldSplit],
    grid: &[GnnConfig],
    caches: Option<&StructCacheSet>,
    cfg: &RunConfig,
) -> Result<TeacherTraining> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::Config("teacher grid is empty".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..grid.len()).map(move |g| (f, g)))
        .collect();
    let outcomes = cfg.parallel_map(&tasks, |&(f, g)| {
        let spec = ModelSpec::teacher(grid[g], dataset.feature_dim(), dataset.num_classes());
        let seed = teacher_seed(cfg.seed, folds[f].fold_index, g);
        fit(spec, dataset, caches, &folds[f], cfg, Objective::Supervised, seed).map(|o| (spec, o))
    })?;
    let mut runs = Vec::with_capacity(tasks.len());
    let mut best: Vec<Option<FoldTeacher>> = vec![None; folds.len()];
    for (&(f, g), outcome) in tasks.iter().zip(outcomes) {
        let fold_index = folds[f].fold_index;
        match outcome {
            Ok((spec, o)) => {
                runs.push(TeacherRun {
                    fold_index,
                    grid_index: g,
                    config: grid[g],
                    result: Some(o.result.clone()),
                    failure: None,
                });
                let better = best[f]
                    .as_ref()
                    .is_none_or(|b| o.result.best_test_accuracy > b.result.best_test_accuracy);
                if better {
                    best[f] = Some(FoldTeacher {
                        fold_index,
                        grid_index: g,
                        spec,
                        params: o.best_params,
                        result: o.result,
                    });
                }
            }
            Err(e @ Error::NonFinite { .. }) => {
                log::warn!("teacher fold {fold_index} grid point {g} aborted: {e}");
                runs.push(TeacherRun {
                    fold_index,
                    grid_index: g,
                    config: grid[g],
                    result: None,
                    failure: Some(e.to_string()),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let selected = best
        .into_iter()
        .enumerate()
        .map(|(f, b)| {
            b.ok_or_else(|| {
                Error::Contract(format!(
                    "every teacher grid point diverged on fold {}",
                    folds[f].fold_index
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TeacherTraining { selected, runs })
}

/// Evaluation-mode outputs of a teacher for every graph, with cluster
/// embeddings pooled over the structure caches' assignments.
pub fn cache_teacher(teacher: &Model<f64>, dataset: &Dataset, caches: &StructCacheSet) -> Result<TeacherCache> {
    if caches.caches.len() != dataset.len() {
        return Err(Error::Integrity(format!(
            "{} structure caches for {} graphs",
            caches.caches.len(),
            dataset.len()
        )));
    }
    let mut outputs = Vec::with_capacity(dataset.len());
    let ids: Vec<usize> = (0..dataset.len()).collect();
    for chunk in ids.chunks(256) {
        let graphs: Vec<_> = chunk.iter().map(|&i| &dataset.graphs()[i]).collect();
        let cr: Vec<_> = chunk.iter().map(|&i| &caches.caches[i]).collect();
        let batch = GraphBatch::build(teacher.spec(), &graphs, Some(&cr))?;
        for (o, &i) in teacher.graph_outputs(&batch)?.into_iter().zip(chunk) {
            let want = caches.caches[i].clusters.num_clusters;
            if o.cluster_emb.rows() != want {
                return Err(Error::Integrity(format!(
                    "graph {i}: teacher pooled {} clusters, structure cache has {want}",
                    o.cluster_emb.rows()
                )));
            }
            outputs.push(o);
        }
    }
    Ok(TeacherCache {
        spec: *teacher.spec(),
        outputs,
    })
}

/// Student training regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StudentMode {
    /// Ground-truth labels only.
    Vanilla,
    Distill {
        weights: DistillWeights,
    },
}

/// Trains `cfg.repetitions` students per fold and returns them with their
/// best parameters, ordered fold-major. `teachers[f]` is the cache of fold
/// `f`'s selected teacher; vanilla runs ignore it.
pub fn train_students(
    dataset: &Dataset,
    folds: &[FoldSplit],
    teachers: &[TeacherCache],
    student: StudentConfig,
    caches: &StructCacheSet,
    cfg: &RunConfig,
    mode: StudentMode,
) -> Result<Vec<TrainOutcome>> {
    cfg.validate()?;
    if matches!(mode, StudentMode::Distill { .. }) && teachers.len() != folds.len() {
        return Err(Error::Config(format!(
            "{} teacher caches for {} folds",
            teachers.len(),
            folds.len()
        )));
    }
    let spec = ModelSpec::student(
        student,
        dataset.feature_dim(),
        caches.config.k_pe,
        dataset.num_classes(),
    );
    let tasks: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..cfg.repetitions).map(move |r| (f, r)))
        .collect();
    cfg.parallel_map(&tasks, |&(f, r)| {
        let objective = match mode {
            StudentMode::Vanilla => Objective::Supervised,
            StudentMode::Distill { weights } => Objective::Distill {
                teacher: &teachers[f],
                weights,
            },
        };
        let seed = student_seed(cfg.seed, folds[f].fold_index, r);
        fit(spec, dataset, Some(caches), &folds[f], cfg, objective, seed)
    })?
    .into_iter()
    .collect()
}

/// [`train_students`] reduced to the per-run results.
pub fn distill_student(
    dataset: &Dataset,
    folds: &[FoldSplit],
    teachers: &[TeacherCache],
    student: StudentConfig,
    caches: &StructCacheSet,
    cfg: &RunConfig,
    mode: StudentMode,
) -> Result<Vec<FoldResult>> {
    Ok(train_students(dataset, folds, teachers, student, caches, cfg, mode)?
        .into_iter()
        .map(|o| o.result)
        .collect())
}

/// One arm of an ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub weights: DistillWeights,
    pub results: Vec<FoldResult>,
}

impl ArmResult {
    /// Mean over seeds of the fold-mean best test accuracy, and its spread.
    pub fn accuracy(&self) -> (f64, f64) {
        // results are ordered fold-major, repetition-minor
        let reps = self
            .results
            .iter()
            .map(|r| r.fold_index)
            .filter(|&f| f == self.results[0].fold_index)
            .count()
            .max(1);
        let per_rep: Vec<f64> = (0..reps)
            .map(|k| {
                let accs: Vec<f64> = self
                    .results
                    .iter()
                    .skip(k)
                    .step_by(reps)
                    .map(|r| r.best_test_accuracy)
                    .collect();
                mean_std(&accs).0
            })
            .collect();
        mean_std(&per_rep)
    }
}

/// The five ablation arms derived from `base`: no structural term, each
/// structural term alone, and all three.
pub fn ablation_arms(base: &DistillWeights) -> Vec<(&'static str, DistillWeights)> {
    let none = DistillWeights {
        lambda: 0.0,
        mu: 0.0,
        eta: 0.0,
        ..*base
    };
    vec![
        ("baseline", none),
        (
            "graph",
            DistillWeights {
                lambda: base.lambda,
                ..none
            },
        ),
        ("cluster", DistillWeights { mu: base.mu, ..none }),
        ("path", DistillWeights { eta: base.eta, ..none }),
        ("full", *base),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<ArmResult>,
}

impl AblationReport {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == name)
    }

    /// Markdown comparison table in percent.
    pub fn table(&self) -> String {
        let mut out = String::from("| arm | λ | μ | η | accuracy (%) |\n|---|---|---|---|---|\n");
        for a in &self.arms {
            let (m, s) = a.accuracy();
            out.push_str(&format!(
                "| {} | {} | {} | {} | {:.2} ± {:.2} |\n",
                a.arm,
                a.weights.lambda,
                a.weights.mu,
                a.weights.eta,
                100.0 * m,
                100.0 * s
            ));
        }
        out
    }
}

/// Runs every ablation arm with `cfg.weights` as the full configuration.
pub fn ablate(
    dataset: &Dataset,
    folds: &[FoldSplit],
    teachers: &[TeacherCache],
    student: StudentConfig,
    caches: &StructCacheSet,
    cfg: &RunConfig,
) -> Result<AblationReport> {
    let arms = ablation_arms(&cfg.weights)
        .into_iter()
        .map(|(name, weights)| {
            let results = distill_student(
                dataset,
                folds,
                teachers,
                student,
                caches,
                cfg,
                StudentMode::Distill { weights },
            )?;
            Ok(ArmResult {
                arm: name.to_string(),
                weights,
                results,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { arms })
}

/// Loss-weight search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightGrid {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub etas: Vec<f64>,
}

impl Default for WeightGrid {
    fn default() -> Self {
        WeightGrid {
            lambdas: vec![1.0, 1e-1, 1e-2],
            mus: vec![1.0, 1e-1, 1e-2],
            etas: vec![1e-4, 1e-5],
        }
    }
}

impl WeightGrid {
    pub fn points(&self, base: &DistillWeights) -> Vec<DistillWeights> {
        let mut out = Vec::new();
        for &lambda in &self.lambdas {
            for &mu in &self.mus {
                for &eta in &self.etas {
                    out.push(DistillWeights {
                        lambda,
                        mu,
                        eta,
                        ..*base
                    });
                }
            }
        }
        out
    }
}

/// Distills one student per weight combination; the arms are named by
/// their weights.
pub fn grid(
    dataset: &Dataset,
    folds: &[FoldSplit],
    teachers: &[TeacherCache],
    student: StudentConfig,
    caches: &StructCacheSet,
    cfg: &RunConfig,
    space: &WeightGrid,
) -> Result<AblationReport> {
    let arms = space
        .points(&cfg.weights)
        .into_iter()
        .map(|weights| {
            let results = distill_student(
                dataset,
                folds,
                teachers,
                student,
                caches,
                cfg,
                StudentMode::Distill { weights },
            )?;
            Ok(ArmResult {
                arm: format!("l{}_m{}_e{}", weights.lambda, weights.mu, weights.eta),
                weights,
                results,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { arms })
}

/// CSV rows of fold results ordered fold-major with `reps` runs per fold.
pub fn result_rows(dataset: &str, method: &str, results: &[FoldResult], reps: usize) -> Vec<ResultRow> {
    results
        .iter()
        .enumerate()
        .map(|(i, r)| ResultRow {
            dataset: dataset.to_string(),
            method: method.to_string(),
            fold: r.fold_index,
            rep: i % reps.max(1),
            seed: r.seed,
            accuracy: r.best_test_accuracy,
        })
        .collect()
}

pub const MODEL_META_FORMAT: &str = "graphkd-model/1";

/// JSON sidecar of a parameter checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub format: String,
    pub fold_index: usize,
    /// Teacher grid point or student repetition.
    pub index: usize,
    pub seed: u64,
    pub spec: ModelSpec,
    pub best_test_accuracy: f64,
    pub epoch_of_best: usize,
    pub train_accuracy_at_best: f64,
}

/// `(params, meta)` paths of the checkpoint named `stem` in `dir`.
pub fn model_paths(dir: impl AsRef<Path>, stem: &str) -> (PathBuf, PathBuf) {
    let d = dir.as_ref();
    (d.join(format!("{stem}.params")), d.join(format!("{stem}.json")))
}

pub fn teacher_stem(fold: usize) -> String {
    format!("teacher_fold{fold}")
}

pub fn student_stem(fold: usize, rep: usize) -> String {
    format!("student_fold{fold}_rep{rep}")
}

/// Writes a checkpoint and its JSON metadata.
pub fn save_model(
    dir: impl AsRef<Path>,
    stem: &str,
    spec: &ModelSpec,
    params: &ParamStore<f64>,
    result: &FoldResult,
    index: usize,
) -> Result<()> {
    let (p, m) = model_paths(&dir, stem);
    write_checkpoint(params, p)?;
    write_json(
        m,
        &ModelMeta {
            format: MODEL_META_FORMAT.to_string(),
            fold_index: result.fold_index,
            index,
            seed: result.seed,
            spec: *spec,
            best_test_accuracy: result.best_test_accuracy,
            epoch_of_best: result.epoch_of_best,
            train_accuracy_at_best: result.train_accuracy_at_best,
        },
    )
}

pub fn load_model(dir: impl AsRef<Path>, stem: &str) -> Result<(Model<f64>, ModelMeta)> {
    let (p, m) = model_paths(&dir, stem);
    let meta: ModelMeta = read_json(&m)?;
    if meta.format != MODEL_META_FORMAT {
        return Err(Error::format(&m, format!("unknown format tag {:?}", meta.format)));
    }
    let store = read_checkpoint::<f64>(p)?;
    Ok((Model::from_params(meta.spec, &store)?, meta))
}

pub fn save_teacher(dir: impl AsRef<Path>, t: &FoldTeacher) -> Result<()> {
    save_model(
        dir,
        &teacher_stem(t.fold_index),
        &t.spec,
        &t.params,
        &t.result,
        t.grid_index,
    )
}

pub fn load_teacher(dir: impl AsRef<Path>, fold: usize) -> Result<(Model<f64>, ModelMeta)> {
    load_model(dir, &teacher_stem(fold))
}
