use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use graphkd::distill::DistillWeights;
use graphkd::models::{GnnKind, Readout, StudentConfig, StudentKind};
use graphkd::structprep::StructConfig;
use graphkd::trainer::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "graphkd",
    version,
    about = "Distil GNN teachers into MLP students for graph classification"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Root directory holding TUDataset folders.
    #[arg(long, env = "GRAPHKD_DATA", global = true)]
    pub data_dir: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, default_value = "runs", global = true)]
    pub out_dir: PathBuf,
    /// Exact run directory, overriding the generated name.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// JSON file with run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 is fully serial.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the structure cache (clusters, LaPE, aggregates, walks).
    Preprocess {
        #[arg(long)]
        dataset: String,
        #[command(flatten)]
        structure: StructArgs,
        /// Sidecar path; defaults to `structcache.json` in the run directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the teacher grid on every fold and keep the best per fold.
    TrainTeacher(TeacherArgs),
    /// Distil students from a teacher run.
    Distill(DistillArgs),
    /// Re-score saved teachers or students on their fold test sets.
    Evaluate {
        /// Run directory holding checkpoints.
        #[arg(long)]
        run: PathBuf,
    },
    /// Baseline, single-term and full-objective arms.
    Ablate(StudentRunArgs),
    /// Search the λ, μ, η grid.
    Grid {
        #[command(flatten)]
        student: StudentRunArgs,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        mus: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
    },
    /// Node removal and re-insertion benchmark for a distilled student.
    DynamicBench(DynamicArgs),
    /// Summary tables from stored result CSVs.
    Report {
        /// Run directories or CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write the table to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TeacherChoice {
    Gin,
    Gcn,
}

impl From<TeacherChoice> for GnnKind {
    fn from(t: TeacherChoice) -> Self {
        match t {
            TeacherChoice::Gin => GnnKind::Gin,
            TeacherChoice::Gcn => GnnKind::Gcn,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StudentChoice {
    Mlp,
    GaMlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReadoutChoice {
    Sum,
    Attention,
}

impl From<ReadoutChoice> for Readout {
    fn from(r: ReadoutChoice) -> Self {
        match r {
            ReadoutChoice::Sum => Readout::Sum,
            ReadoutChoice::Attention => Readout::Attention,
        }
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_factor: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Student trainings per fold.
    #[arg(long)]
    pub repetitions: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct StructArgs {
    #[arg(long)]
    pub k_pe: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    /// Walks per graph per epoch (default: nodes/4 clamped to [4, 64]).
    #[arg(long)]
    pub num_walks: Option<usize>,
    #[arg(long)]
    pub pool_factor: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct WeightArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Soft-logit weight.
    #[arg(long)]
    pub soft: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TeacherArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_enum, default_value = "gin")]
    pub teacher: TeacherChoice,
    #[arg(long, value_delimiter = ',', default_values_t = [2, 3, 5])]
    pub layers: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [32, 64])]
    pub hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5])]
    pub dropout: Vec<f64>,
    #[arg(long, value_enum, default_value = "sum")]
    pub readout: ReadoutChoice,
    /// Reuse a structure cache instead of building one.
    #[arg(long)]
    pub struct_cache: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub structure: StructArgs,
}

#[derive(Debug, Clone, Args)]
pub struct StudentArgs {
    #[arg(long, value_enum, default_value = "mlp")]
    pub student: StudentChoice,
    /// Append Laplacian positional encodings to the input.
    #[arg(long)]
    pub lape: bool,
    #[arg(long, default_value_t = 3)]
    pub student_layers: usize,
    #[arg(long, default_value_t = 64)]
    pub student_hidden: usize,
    #[arg(long, default_value_t = 0.0)]
    pub student_dropout: f64,
    #[arg(long, value_enum, default_value = "sum")]
    pub readout: ReadoutChoice,
}

impl StudentArgs {
    pub fn config(&self) -> StudentConfig {
        StudentConfig {
            kind: match self.student {
                StudentChoice::Mlp => StudentKind::Mlp,
                StudentChoice::GaMlp => StudentKind::GaMlp,
            },
            num_layers: self.student_layers,
            hidden: self.student_hidden,
            dropout: self.student_dropout,
            use_lape: self.lape,
            readout: self.readout.into(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct StudentRunArgs {
    /// Run directory of `train-teacher`.
    #[arg(long)]
    pub teacher_run: PathBuf,
    #[command(flatten)]
    pub student: StudentArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DistillArgs {
    #[command(flatten)]
    pub run: StudentRunArgs,
    /// Train on ground-truth labels only.
    #[arg(long)]
    pub vanilla: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DynamicArgs {
    /// Run directory of `distill`.
    #[arg(long)]
    pub student_run: PathBuf,
    /// Fold whose test graphs are perturbed (default: first fold).
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub removed: usize,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0.03)]
    pub max_removal_fraction: f64,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Skip the latency measurement.
    #[arg(long)]
    pub no_timing: bool,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(epochs, batch_size, lr, lr_factor, patience, repetitions);
    }
}

impl StructArgs {
    pub fn apply(&self, s: &mut StructConfig) {
        if let Some(v) = self.k_pe {
            s.k_pe = v;
        }
        if let Some(v) = self.walk_length {
            s.walk_length = v;
        }
        if let Some(v) = self.num_walks {
            s.num_walks = Some(v);
        }
        if let Some(v) = self.pool_factor {
            s.pool_factor = v;
        }
    }
}

impl WeightArgs {
    pub fn apply(&self, w: &mut DistillWeights) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { w.$f = v; })* };
        }
        set!(lambda, mu, eta, soft, temperature);
    }
}
