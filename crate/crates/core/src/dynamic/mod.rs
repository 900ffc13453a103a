//! Node removal and re-insertion on test graphs: incremental student
//! inference against full teacher recomputation, scored by prediction
//! error, prediction entropy and per-step latency.

mod state;

pub use state::{current_graph, full_student_logits, full_teacher_logits, IncrementalState};

use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::models::Model;
use crate::rng::{derive_seed, stream_rng};
use crate::structprep::StructCacheSet;
use crate::trainer::{mean_std, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicConfig {
    pub num_removed: usize,
    pub repetitions: usize,
    /// Graphs where `num_removed / num_nodes` exceeds this are skipped.
    pub max_removal_fraction: f64,
    pub seed: u64,
    /// Leading traces excluded from latency statistics.
    pub warmup_traces: usize,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            num_removed: 10,
            repetitions: 20,
            max_removal_fraction: 0.03,
            seed: 0,
            warmup_traces: 2,
        }
    }
}

/// Nodes removed from one graph and then inserted back in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationTrace {
    pub graph_id: usize,
    pub removed_nodes: Vec<usize>,
    pub repetition: usize,
    pub seed: u64,
}

/// Draws `repetitions` traces for every graph in `ids` that the removal cap
/// admits; returns the traces and the skipped graph ids.
pub fn make_traces(dataset: &Dataset, ids: &[usize], cfg: &DynamicConfig) -> (Vec<PerturbationTrace>, Vec<usize>) {
    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    for &g in ids {
        let n = dataset.graphs()[g].num_nodes();
        // at least one node must survive the removal
        if n <= cfg.num_removed || cfg.num_removed as f64 / n as f64 > cfg.max_removal_fraction {
            skipped.push(g);
            continue;
        }
        for rep in 0..cfg.repetitions {
            let seed = derive_seed(cfg.seed, &[0xD1, g as u64, rep as u64]);
            let mut rng = stream_rng(seed, &[]);
            traces.push(PerturbationTrace {
                graph_id: g,
                removed_nodes: index::sample(&mut rng, n, cfg.num_removed).into_vec(),
                repetition: rep,
                seed,
            });
        }
    }
    (traces, skipped)
}

/// Base-2 entropy of `softmax(logits)`.
pub fn entropy_bits(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&l| (l - m).exp()).sum();
    -logits
        .iter()
        .map(|&l| {
            let p = (l - m).exp() / z;
            if p > 0.0 {
                p * p.log2()
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Error flag and entropy of a prediction against the reference label; a
/// wrong prediction scores the maximum entropy `log2 K`.
fn score(logits: &[f64], reference: usize) -> (f64, f64) {
    if argmax(logits) == reference {
        (0.0, entropy_bits(logits))
    } else {
        (1.0, (logits.len() as f64).log2())
    }
}

/// Averages for `k` re-inserted nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub student_error: f64,
    pub student_entropy: f64,
    pub teacher_error: f64,
    pub teacher_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_k: Vec<KMetrics>,
    pub traces: usize,
    pub graphs_skipped: usize,
    /// Ground-truth accuracy on the original graphs.
    pub student_accuracy_original: f64,
    pub teacher_accuracy_original: f64,
    /// Ground-truth accuracy with every trace node removed.
    pub student_accuracy_removed: f64,
    pub teacher_accuracy_removed: f64,
    /// Largest gap between incremental and full student logits seen.
    pub max_incremental_gap: f64,
}

struct TraceScore {
    per_k: Vec<[f64; 4]>,
    correct: [f64; 4],
    gap: f64,
}

fn score_trace(
    dataset: &Dataset,
    caches: &StructCacheSet,
    student: &Model<f64>,
    teacher: &Model<f64>,
    trace: &PerturbationTrace,
) -> Result<TraceScore> {
    let g = &dataset.graphs()[trace.graph_id];
    let cache = &caches.caches[trace.graph_id];
    let n = g.num_nodes();
    let all = vec![true; n];
    let s_ref = argmax(&full_student_logits(student, g, cache, &all)?);
    let t_ref = argmax(&full_teacher_logits(teacher, g, &all)?);
    let mut present = all;
    for &v in &trace.removed_nodes {
        present[v] = false;
    }
    let mut state = IncrementalState::new(student, g, cache, &present)?;
    let mut per_k = Vec::with_capacity(trace.removed_nodes.len() + 1);
    let mut gap: f64 = 0.0;
    let mut correct = [0.0; 4];
    for k in 0..=trace.removed_nodes.len() {
        if k > 0 {
            let v = trace.removed_nodes[k - 1];
            state.insert(v)?;
            present[v] = true;
        }
        let s = state.logits()?;
        let full = full_student_logits(student, g, cache, &present)?;
        gap = s.iter().zip(&full).map(|(a, b)| (a - b).abs()).fold(gap, f64::max);
        let t = full_teacher_logits(teacher, g, &present)?;
        let (se, sh) = score(&s, s_ref);
        let (te, th) = score(&t, t_ref);
        per_k.push([se, sh, te, th]);
        if k == 0 {
            let y = g.label();
            correct = [
                f64::from(s_ref == y),
                f64::from(t_ref == y),
                f64::from(argmax(&s) == y),
                f64::from(argmax(&t) == y),
            ];
        }
    }
    Ok(TraceScore { per_k, correct, gap })
}

/// Scores every trace: prediction error and entropy against the original
/// graph's predicted label after each re-insertion. The student runs
/// incrementally and is checked against a full forward pass at every step.
pub fn perturb_and_score(
    dataset: &Dataset,
    caches: &StructCacheSet,
    student: &Model<f64>,
    teacher: &Model<f64>,
    traces: &[PerturbationTrace],
    graphs_skipped: usize,
    jobs: usize,
) -> Result<ScoreReport> {
    let runner = RunConfig {
        jobs: jobs.max(1),
        ..RunConfig::default()
    };
    let scores = runner
        .parallel_map(traces, |t| score_trace(dataset, caches, student, teacher, t))?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let steps = traces.first().map_or(0, |t| t.removed_nodes.len() + 1);
    if traces.iter().any(|t| t.removed_nodes.len() + 1 != steps) {
        return Err(Error::Contract("traces must remove the same number of nodes".into()));
    }
    let m = scores.len().max(1) as f64;
    let per_k = (0..steps)
        .map(|k| {
            let mut acc = [0.0; 4];
            for s in &scores {
                for (a, v) in acc.iter_mut().zip(s.per_k[k]) {
                    *a += v;
                }
            }
            KMetrics {
                k,
                student_error: acc[0] / m,
                student_entropy: acc[1] / m,
                teacher_error: acc[2] / m,
                teacher_entropy: acc[3] / m,
            }
        })
        .collect();
    let mut c = [0.0; 4];
    for s in &scores {
        for (a, v) in c.iter_mut().zip(s.correct) {
            *a += v;
        }
    }
    Ok(ScoreReport {
        per_k,
        traces: scores.len(),
        graphs_skipped,
        student_accuracy_original: c[0] / m,
        teacher_accuracy_original: c[1] / m,
        student_accuracy_removed: c[2] / m,
        teacher_accuracy_removed: c[3] / m,
        max_incremental_gap: scores.iter().map(|s| s.gap).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub steps: usize,
}

fn stats(mut xs: Vec<f64>) -> LatencyStats {
    if xs.is_empty() {
        return LatencyStats {
            mean_ms: 0.0,
            median_ms: 0.0,
            steps: 0,
        };
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    let median = if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    };
    LatencyStats {
        mean_ms: mean_std(&xs).0,
        median_ms: median,
        steps: xs.len(),
    }
}

/// Per-insertion latency of the three engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub incremental_student: LatencyStats,
    pub full_student: LatencyStats,
    pub full_teacher: LatencyStats,
    /// Mean milliseconds at insertion step `k` (index `k - 1`) per engine.
    pub per_k_ms: Vec<[f64; 3]>,
}

impl LatencyReport {
    /// Full-teacher over incremental-student mean latency.
    pub fn speedup(&self) -> f64 {
        self.full_teacher.mean_ms / self.incremental_student.mean_ms
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Times each insertion step: incremental student update, full student
/// recomputation and full teacher recomputation. Runs on the calling
/// thread.
pub fn time_inference(
    dataset: &Dataset,
    caches: &StructCacheSet,
    student: &Model<f64>,
    teacher: &Model<f64>,
    traces: &[PerturbationTrace],
    warmup_traces: usize,
) -> Result<LatencyReport> {
    let steps = traces.first().map_or(0, |t| t.removed_nodes.len());
    let mut samples: [Vec<f64>; 3] = Default::default();
    let mut per_k = vec![[0.0; 3]; steps];
    let mut counted = 0usize;
    for (i, trace) in traces.iter().enumerate() {
        let g = &dataset.graphs()[trace.graph_id];
        let cache = &caches.caches[trace.graph_id];
        let mut present = vec![true; g.num_nodes()];
        for &v in &trace.removed_nodes {
            present[v] = false;
        }
        let mut state = IncrementalState::new(student, g, cache, &present)?;
        let record = i >= warmup_traces;
        for (k, &v) in trace.removed_nodes.iter().enumerate() {
            let t0 = Instant::now();
            std::hint::black_box(state.insert(v)?);
            let a = ms(t0);
            present[v] = true;
            let t1 = Instant::now();
            std::hint::black_box(full_student_logits(student, g, cache, &present)?);
            let b = ms(t1);
            let t2 = Instant::now();
            std::hint::black_box(full_teacher_logits(teacher, g, &present)?);
            let c = ms(t2);
            if record {
                for (s, x) in samples.iter_mut().zip([a, b, c]) {
                    s.push(x);
                }
                for (p, x) in per_k[k].iter_mut().zip([a, b, c]) {
                    *p += x;
                }
            }
        }
        if record {
            counted += 1;
        }
    }
    for row in per_k.iter_mut() {
        row.iter_mut().for_each(|x| *x /= counted.max(1) as f64);
    }
    let [a, b, c] = samples;
    Ok(LatencyReport {
        incremental_student: stats(a),
        full_student: stats(b),
        full_teacher: stats(c),
        per_k_ms: per_k,
    })
}

#[derive(Debug, Serialize)]
struct CsvRow {
    k: usize,
    student_error: f64,
    student_entropy: f64,
    teacher_error: f64,
    teacher_entropy: f64,
    incremental_student_ms: Option<f64>,
    full_student_ms: Option<f64>,
    full_teacher_ms: Option<f64>,
}

/// Per-k CSV; latency columns are empty at `k = 0` or without timings.
pub fn write_per_k_csv(path: impl AsRef<Path>, scores: &ScoreReport, latency: Option<&LatencyReport>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for m in &scores.per_k {
        let lat = latency.and_then(|l| m.k.checked_sub(1).and_then(|i| l.per_k_ms.get(i)));
        w.serialize(CsvRow {
            k: m.k,
            student_error: m.student_error,
            student_entropy: m.student_entropy,
            teacher_error: m.teacher_error,
            teacher_entropy: m.teacher_entropy,
            incremental_student_ms: lat.map(|l| l[0]),
            full_student_ms: lat.map(|l| l[1]),
            full_teacher_ms: lat.map(|l| l[2]),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic;
    use crate::models::{ModelSpec, StudentConfig};
    use crate::structprep::{StructCache, StructConfig};

    #[test]
    fn entropy_of_uniform_binary_is_one() {
        assert!((entropy_bits(&[0.3, 0.3]) - 1.0).abs() < 1e-15);
        assert_eq!(score(&[0.0, 1.0], 0), (1.0, 1.0));
    }

    #[test]
    fn insert_remove_matches_full_forward() {
        let g = synthetic::random_graph(30, 0.15, 3, 2, 4);
        let cache = StructCache::build(&g, &StructConfig::default(), 0).unwrap();
        let spec = ModelSpec::student(StudentConfig::ga_mlp(3, 8).with_lape(), 3, 8, 2);
        let m = Model::<f64>::new(spec, 2).unwrap();
        let mut present = vec![true; 30];
        for v in [3, 7, 8, 20] {
            present[v] = false;
        }
        let mut st = IncrementalState::new(&m, &g, &cache, &present).unwrap();
        let before = st.pooled().to_vec();
        for v in [7, 3, 20, 8] {
            let inc = st.insert(v).unwrap();
            present[v] = true;
            let full = full_student_logits(&m, &g, &cache, &present).unwrap();
            for (a, b) in inc.iter().zip(&full) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for v in [8, 20, 3, 7] {
            st.remove(v).unwrap();
        }
        for (a, b) in st.pooled().iter().zip(&before) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(matches!(st.remove(3), Err(Error::Contract(_))));
        st.insert(3).unwrap();
        assert!(matches!(st.insert(3), Err(Error::Contract(_))));
    }

    #[test]
    fn removal_cap_skips_small_graphs() {
        let ds = synthetic::reply_thread_dataset(4, 30, 40, 0);
        let (traces, skipped) = make_traces(&ds, &[0, 1, 2, 3], &DynamicConfig::default());
        assert!(traces.is_empty());
        assert_eq!(skipped.len(), 4);
        let relaxed = DynamicConfig {
            max_removal_fraction: 0.5,
            repetitions: 2,
            ..DynamicConfig::default()
        };
        let (traces, _) = make_traces(&ds, &[0, 1], &relaxed);
        assert_eq!(traces.len(), 4);
    }
}
