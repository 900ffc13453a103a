use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use graphkd::error::{Error, Result};
use graphkd::graph::{load_dataset, Dataset, FoldSplit};
use graphkd::structprep::{StructCacheSet, STRUCT_CACHE_FORMAT};
use graphkd::trainer::{read_json, write_json, RunConfig, MODEL_META_FORMAT};

pub const MANIFEST_FORMAT: &str = "graphkd-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STRUCT_CACHE_FILE: &str = "structcache.json";
pub const FOLDS_FILE: &str = "folds.json";
pub const RESULTS_FILE: &str = "results.csv";

/// Provenance record written into every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub argv: Vec<String>,
    pub dataset: String,
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    pub run_config: RunConfig,
    /// Command-specific settings.
    pub details: serde_json::Value,
    pub formats: BTreeMap<String, String>,
    pub created: String,
}

impl Manifest {
    pub fn new(
        command: &str,
        dataset: &str,
        data_dir: Option<&Path>,
        cfg: &RunConfig,
        details: serde_json::Value,
    ) -> Self {
        let formats = [
            ("manifest", MANIFEST_FORMAT),
            ("model", MODEL_META_FORMAT),
            ("structcache", STRUCT_CACHE_FORMAT),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Manifest {
            format: MANIFEST_FORMAT.to_string(),
            command: command.to_string(),
            argv: std::env::args().collect(),
            dataset: dataset.to_string(),
            data_dir: data_dir.map(Path::to_path_buf),
            seed: cfg.seed,
            jobs: cfg.jobs,
            run_config: cfg.clone(),
            details,
            formats,
            created: chrono::Local::now().to_rfc3339(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(dir.join(MANIFEST_FILE), self)
    }

    /// Reads a run's manifest and checks that it came from `command`.
    pub fn read(dir: &Path, command: &str) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::MissingArtifact(dir.to_path_buf()));
        }
        let path = dir.join(MANIFEST_FILE);
        let m: Manifest = read_json(&path)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format {
                path,
                message: format!("unknown format tag {:?}", m.format),
            });
        }
        if m.command != command {
            return Err(Error::Config(format!(
                "{} is a `{}` run, expected `{command}`",
                dir.display(),
                m.command
            )));
        }
        Ok(m)
    }
}

/// `<out>/<dataset>_<command>_seed<seed>_<timestamp>` unless an explicit
/// directory is given. The directory is created.
pub fn create_run_dir(explicit: Option<&Path>, out: &Path, dataset: &str, command: &str, seed: u64) -> Result<PathBuf> {
    let dir = match explicit {
        Some(d) => d.to_path_buf(),
        None => {
            let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
            out.join(format!("{dataset}_{command}_seed{seed}_{stamp}"))
        }
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Everything a student command needs from a teacher run.
pub struct TeacherRunArtifacts {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub dataset: Dataset,
    pub folds: Vec<FoldSplit>,
    pub caches: StructCacheSet,
}

impl TeacherRunArtifacts {
    pub fn load(dir: &Path, data_dir: Option<&Path>) -> Result<Self> {
        let manifest = Manifest::read(dir, "train-teacher")?;
        let root = data_dir.or(manifest.data_dir.as_deref());
        let dataset = load_dataset(&manifest.dataset, root)?;
        let folds: Vec<FoldSplit> = read_json(dir.join(FOLDS_FILE))?;
        let path = dir.join(STRUCT_CACHE_FILE);
        if !path.is_file() {
            return Err(Error::MissingArtifact(path));
        }
        let caches = StructCacheSet::load(&path, &dataset)?;
        Ok(TeacherRunArtifacts {
            dir: dir.to_path_buf(),
            manifest,
            dataset,
            folds,
            caches,
        })
    }
}
