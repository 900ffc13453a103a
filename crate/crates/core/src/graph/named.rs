use std::path::Path;

use super::synthetic::{molecule_dataset, reply_thread_dataset, MoleculeConfig};
use super::{dataset_max_degree, degree_onehot_features, load_tudataset, Dataset};
use crate::error::{Error, Result};

/// Built-in generated datasets, usable without any files.
pub const SYNTHETIC_DATASETS: [&str; 2] = ["synthetic-bzr", "synthetic-reddit"];

/// Loads a dataset by name. `synthetic-*` names are generated; any other
/// name is read in TUDataset layout from `<root>/<name>/` or `<root>/`.
/// Datasets without node labels get degree one-hot features capped at the
/// dataset's maximum degree.
pub fn load_dataset(name: &str, root: Option<&Path>) -> Result<Dataset> {
    let ds = match name {
        "synthetic-bzr" => molecule_dataset(&MoleculeConfig::bzr_like(), 0),
        "synthetic-reddit" => reply_thread_dataset(200, 300, 500, 0),
        _ => {
            let root = root.ok_or_else(|| {
                Error::Config(format!(
                    "dataset {name} needs a data directory (--data-dir or GRAPHKD_DATA)"
                ))
            })?;
            let nested = root.join(name);
            let dir = if nested.is_dir() { nested } else { root.to_path_buf() };
            load_tudataset(&dir, name)?
        }
    };
    if ds.feature_dim() == 0 || ds.name == "synthetic-reddit" {
        let cap = dataset_max_degree(&ds);
        return degree_onehot_features(&ds, cap);
    }
    Ok(ds)
}

/// Whether `name` can be read from `root` in TUDataset layout.
pub fn tudataset_available(name: &str, root: &Path) -> bool {
    [root.join(name), root.to_path_buf()]
        .iter()
        .any(|d| d.join(format!("{name}_A.txt")).is_file())
}
