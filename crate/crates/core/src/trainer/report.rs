use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One line of the flat results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub fold: usize,
    /// Repetition index within the fold; runs sharing it form one seed group.
    pub rep: usize,
    pub seed: u64,
    pub accuracy: f64,
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Accuracy summary of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dataset: String,
    pub method: String,
    pub runs: usize,
    /// Mean over repetitions of the fold-mean accuracy.
    pub mean: f64,
    /// Spread of the per-repetition fold means.
    pub std: f64,
}

/// Groups rows by (dataset, method) in order of first appearance. Each
/// repetition's folds are averaged first; mean and spread are taken over
/// repetitions.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.dataset.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dataset, method)| {
            let mine: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.method == method)
                .collect();
            let mut reps: Vec<usize> = mine.iter().map(|r| r.rep).collect();
            reps.sort_unstable();
            reps.dedup();
            let per_rep: Vec<f64> = reps
                .iter()
                .map(|&k| {
                    let accs: Vec<f64> = mine.iter().filter(|r| r.rep == k).map(|r| r.accuracy).collect();
                    mean_std(&accs).0
                })
                .collect();
            let (mean, std) = mean_std(&per_rep);
            Summary {
                dataset,
                method,
                runs: mine.len(),
                mean,
                std,
            }
        })
        .collect()
}

/// Markdown table of summaries in percent.
pub fn render_table(summaries: &[Summary]) -> String {
    let mut out = String::from("| dataset | method | runs | accuracy (%) |\n|---|---|---|---|\n");
    for s in summaries {
        out.push_str(&format!(
            "| {} | {} | {} | {:.2} ± {:.2} |\n",
            s.dataset,
            s.method,
            s.runs,
            100.0 * s.mean,
            100.0 * s.std
        ));
    }
    out
}
