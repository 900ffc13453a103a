use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pooling used for graph-level and cluster-level readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    Sum,
    /// Per-node scalar gate `sigmoid(wᵀh + b)` applied before summing.
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GnnKind {
    Gin,
    Gcn,
}

/// Message-passing teacher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub kind: GnnKind,
    pub num_layers: usize,
    pub hidden: usize,
    /// Applied between message-passing layers while training.
    pub dropout: f64,
    pub readout: Readout,
}

impl GnnConfig {
    pub fn gin(num_layers: usize, hidden: usize) -> Self {
        GnnConfig {
            kind: GnnKind::Gin,
            num_layers,
            hidden,
            dropout: 0.0,
            readout: Readout::Sum,
        }
    }

    pub fn gcn(num_layers: usize, hidden: usize) -> Self {
        GnnConfig {
            kind: GnnKind::Gcn,
            ..Self::gin(num_layers, hidden)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudentKind {
    Mlp,
    GaMlp,
}

/// Node-wise student.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    pub kind: StudentKind,
    pub num_layers: usize,
    pub hidden: usize,
    /// Applied after every hidden relu while training.
    pub dropout: f64,
    pub use_lape: bool,
    pub readout: Readout,
}

impl StudentConfig {
    pub fn mlp(num_layers: usize, hidden: usize) -> Self {
        StudentConfig {
            kind: StudentKind::Mlp,
            num_layers,
            hidden,
            dropout: 0.0,
            use_lape: false,
            readout: Readout::Sum,
        }
    }

    pub fn ga_mlp(num_layers: usize, hidden: usize) -> Self {
        StudentConfig {
            kind: StudentKind::GaMlp,
            ..Self::mlp(num_layers, hidden)
        }
    }

    pub fn with_lape(mut self) -> Self {
        self.use_lape = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Architecture {
    Teacher(GnnConfig),
    Student(StudentConfig),
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub feature_dim: usize,
    /// Width of the positional encodings a LaPE student consumes.
    pub k_pe: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn teacher(config: GnnConfig, feature_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            arch: Architecture::Teacher(config),
            feature_dim,
            k_pe: 0,
            num_classes,
        }
    }

    pub fn student(config: StudentConfig, feature_dim: usize, k_pe: usize, num_classes: usize) -> Self {
        ModelSpec {
            arch: Architecture::Student(config),
            feature_dim,
            k_pe: if config.use_lape { k_pe } else { 0 },
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (layers, hidden, dropout) = match self.arch {
            Architecture::Teacher(c) => (c.num_layers, c.hidden, c.dropout),
            Architecture::Student(c) => (c.num_layers, c.hidden, c.dropout),
        };
        if layers == 0 || hidden == 0 {
            return Err(Error::Config("num_layers and hidden must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn hidden(&self) -> usize {
        match self.arch {
            Architecture::Teacher(c) => c.hidden,
            Architecture::Student(c) => c.hidden,
        }
    }

    pub fn num_layers(&self) -> usize {
        match self.arch {
            Architecture::Teacher(c) => c.num_layers,
            Architecture::Student(c) => c.num_layers,
        }
    }

    pub fn readout(&self) -> Readout {
        match self.arch {
            Architecture::Teacher(c) => c.readout,
            Architecture::Student(c) => c.readout,
        }
    }

    pub fn dropout(&self) -> f64 {
        match self.arch {
            Architecture::Teacher(c) => c.dropout,
            Architecture::Student(c) => c.dropout,
        }
    }

    /// Whether batches must carry structure caches for the model input.
    pub fn needs_struct_cache(&self) -> bool {
        matches!(
            self.arch,
            Architecture::Student(StudentConfig {
                kind: StudentKind::GaMlp,
                ..
            }) | Architecture::Student(StudentConfig { use_lape: true, .. })
        )
    }

    /// Width of the per-node model input.
    pub fn input_dim(&self) -> usize {
        match self.arch {
            Architecture::Teacher(_) => self.feature_dim,
            Architecture::Student(c) => {
                let base = self.feature_dim + self.k_pe;
                match c.kind {
                    StudentKind::Mlp => base,
                    StudentKind::GaMlp => 2 * base,
                }
            }
        }
    }
}
