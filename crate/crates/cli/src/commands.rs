use std::path::{Path, PathBuf};

use log::info;
use serde_json::json;

use graphkd::distill::TeacherCache;
use graphkd::dynamic::{make_traces, perturb_and_score, time_inference, write_per_k_csv, DynamicConfig};
use graphkd::error::{Error, Result};
use graphkd::graph::{load_dataset, stratified_kfold};
use graphkd::models::GnnConfig;
use graphkd::structprep::StructCacheSet;
use graphkd::trainer::{
    self, cache_teacher, evaluate, load_model, load_teacher, read_csv, read_json, render_table, result_rows,
    save_model, save_teacher, student_stem, summarize, train_students, train_teacher, write_csv, write_json, ModelMeta,
    RunConfig, StudentMode, WeightGrid,
};

use crate::args::{DistillArgs, DynamicArgs, GlobalArgs, StructArgs, StudentRunArgs, TeacherArgs};
use crate::run::{create_run_dir, Manifest, TeacherRunArtifacts, FOLDS_FILE, RESULTS_FILE, STRUCT_CACHE_FILE};

/// Defaults, then the JSON config file, then command-line flags.
pub fn base_config(global: &GlobalArgs, inherited: Option<&RunConfig>) -> Result<RunConfig> {
    let mut cfg = match (&global.config, inherited) {
        (Some(path), _) => read_json(path)?,
        (None, Some(c)) => c.clone(),
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = global.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

pub fn preprocess(global: &GlobalArgs, dataset: &str, structure: &StructArgs, output: Option<&Path>) -> Result<()> {
    let mut cfg = base_config(global, None)?;
    structure.apply(&mut cfg.structure);
    let ds = load_dataset(dataset, global.data_dir.as_deref())?;
    let caches = StructCacheSet::build(&ds, &cfg.structure, cfg.seed)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = create_run_dir(
                global.run_dir.as_deref(),
                &global.out_dir,
                &ds.name,
                "preprocess",
                cfg.seed,
            )?;
            Manifest::new("preprocess", &ds.name, global.data_dir.as_deref(), &cfg, json!({})).write(&dir)?;
            dir.join(STRUCT_CACHE_FILE)
        }
    };
    caches.save(&path)?;
    let clusters: usize = caches.caches.iter().map(|c| c.clusters.num_clusters).sum();
    println!(
        "{}: {} graphs, {:.2} clusters per graph, cache written to {}",
        ds.name,
        ds.len(),
        clusters as f64 / ds.len().max(1) as f64,
        path.display()
    );
    Ok(())
}

pub fn train_teacher_cmd(global: &GlobalArgs, a: &TeacherArgs) -> Result<()> {
    let mut cfg = base_config(global, None)?;
    a.train.apply(&mut cfg);
    a.structure.apply(&mut cfg.structure);
    cfg.validate()?;
    let ds = load_dataset(&a.dataset, global.data_dir.as_deref())?;
    let dir = create_run_dir(
        global.run_dir.as_deref(),
        &global.out_dir,
        &ds.name,
        "train-teacher",
        cfg.seed,
    )?;
    let caches = match &a.struct_cache {
        Some(p) => StructCacheSet::load(p, &ds)?,
        None => StructCacheSet::build(&ds, &cfg.structure, cfg.seed)?,
    };
    cfg.structure = caches.config;
    caches.save(dir.join(STRUCT_CACHE_FILE))?;
    let folds = stratified_kfold(&ds, a.folds, cfg.seed)?;
    write_json(dir.join(FOLDS_FILE), &folds)?;
    let mut grid = Vec::new();
    for &num_layers in &a.layers {
        for &hidden in &a.hidden {
            for &dropout in &a.dropout {
                grid.push(GnnConfig {
                    kind: a.teacher.into(),
                    num_layers,
                    hidden,
                    dropout,
                    readout: a.readout.into(),
                });
            }
        }
    }
    let details = json!({ "folds": a.folds, "grid": grid });
    Manifest::new("train-teacher", &ds.name, global.data_dir.as_deref(), &cfg, details).write(&dir)?;
    info!("training {} grid points on {} folds", grid.len(), folds.len());
    let training = train_teacher(&ds, &folds, &grid, None, &cfg)?;
    for t in &training.selected {
        save_teacher(&dir, t)?;
    }
    write_json(dir.join("teacher_runs.json"), &training.runs)?;
    let results: Vec<_> = training.selected.iter().map(|t| t.result.clone()).collect();
    let rows = result_rows(&ds.name, "teacher", &results, 1);
    write_csv(dir.join(RESULTS_FILE), &rows)?;
    for t in &training.selected {
        println!(
            "fold {}: grid point {} test accuracy {:.4} (epoch {})",
            t.fold_index, t.grid_index, t.result.best_test_accuracy, t.result.epoch_of_best
        );
    }
    print!("{}", render_table(&summarize(&rows)));
    println!("run directory: {}", dir.display());
    Ok(())
}

struct StudentSetup {
    teacher: TeacherRunArtifacts,
    caches: Vec<TeacherCache>,
    cfg: RunConfig,
}

fn student_setup(global: &GlobalArgs, a: &StudentRunArgs) -> Result<StudentSetup> {
    let teacher = TeacherRunArtifacts::load(&a.teacher_run, global.data_dir.as_deref())?;
    let mut cfg = base_config(global, Some(&teacher.manifest.run_config))?;
    a.train.apply(&mut cfg);
    a.weights.apply(&mut cfg.weights);
    cfg.structure = teacher.caches.config;
    cfg.validate()?;
    let caches = teacher
        .folds
        .iter()
        .map(|f| {
            let (model, _) = load_teacher(&teacher.dir, f.fold_index)?;
            cache_teacher(&model, &teacher.dataset, &teacher.caches)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StudentSetup { teacher, caches, cfg })
}

fn student_details(a: &StudentRunArgs, mode: &StudentMode) -> serde_json::Value {
    json!({
        "teacher_run": a.teacher_run,
        "student": a.student.config(),
        "mode": mode,
    })
}

pub fn distill(global: &GlobalArgs, d: &DistillArgs) -> Result<()> {
    let a = &d.run;
    let s = student_setup(global, a)?;
    let ds = &s.teacher.dataset;
    let mode = if d.vanilla {
        StudentMode::Vanilla
    } else {
        StudentMode::Distill { weights: s.cfg.weights }
    };
    let dir = create_run_dir(
        global.run_dir.as_deref(),
        &global.out_dir,
        &ds.name,
        "distill",
        s.cfg.seed,
    )?;
    Manifest::new(
        "distill",
        &ds.name,
        global.data_dir.as_deref(),
        &s.cfg,
        student_details(a, &mode),
    )
    .write(&dir)?;
    let student = a.student.config();
    let outcomes = train_students(
        ds,
        &s.teacher.folds,
        &s.caches,
        student,
        &s.teacher.caches,
        &s.cfg,
        mode,
    )?;
    let spec = graphkd::models::ModelSpec::student(
        student,
        ds.feature_dim(),
        s.teacher.caches.config.k_pe,
        ds.num_classes(),
    );
    for (i, o) in outcomes.iter().enumerate() {
        let rep = i % s.cfg.repetitions;
        save_model(
            &dir,
            &student_stem(o.result.fold_index, rep),
            &spec,
            &o.best_params,
            &o.result,
            rep,
        )?;
    }
    let results: Vec<_> = outcomes.into_iter().map(|o| o.result).collect();
    write_json(dir.join("curves.json"), &results)?;
    let method = if d.vanilla {
        "student-vanilla"
    } else {
        "student-distill"
    };
    let rows = result_rows(&ds.name, method, &results, s.cfg.repetitions);
    write_csv(dir.join(RESULTS_FILE), &rows)?;
    print!("{}", render_table(&summarize(&rows)));
    println!("run directory: {}", dir.display());
    Ok(())
}

pub fn ablate(global: &GlobalArgs, a: &StudentRunArgs) -> Result<()> {
    let s = student_setup(global, a)?;
    let ds = &s.teacher.dataset;
    let dir = create_run_dir(
        global.run_dir.as_deref(),
        &global.out_dir,
        &ds.name,
        "ablate",
        s.cfg.seed,
    )?;
    let details = json!({ "teacher_run": a.teacher_run, "student": a.student.config() });
    Manifest::new("ablate", &ds.name, global.data_dir.as_deref(), &s.cfg, details).write(&dir)?;
    let report = trainer::ablate(
        ds,
        &s.teacher.folds,
        &s.caches,
        a.student.config(),
        &s.teacher.caches,
        &s.cfg,
    )?;
    finish_arms(&dir, &ds.name, s.cfg.repetitions, &report)
}

pub fn grid(
    global: &GlobalArgs,
    a: &StudentRunArgs,
    lambdas: Option<&[f64]>,
    mus: Option<&[f64]>,
    etas: Option<&[f64]>,
) -> Result<()> {
    let s = student_setup(global, a)?;
    let ds = &s.teacher.dataset;
    let defaults = WeightGrid::default();
    let space = WeightGrid {
        lambdas: lambdas.map_or(defaults.lambdas, <[f64]>::to_vec),
        mus: mus.map_or(defaults.mus, <[f64]>::to_vec),
        etas: etas.map_or(defaults.etas, <[f64]>::to_vec),
    };
    let dir = create_run_dir(global.run_dir.as_deref(), &global.out_dir, &ds.name, "grid", s.cfg.seed)?;
    let details = json!({ "teacher_run": a.teacher_run, "student": a.student.config(), "space": space });
    Manifest::new("grid", &ds.name, global.data_dir.as_deref(), &s.cfg, details).write(&dir)?;
    let report = trainer::grid(
        ds,
        &s.teacher.folds,
        &s.caches,
        a.student.config(),
        &s.teacher.caches,
        &s.cfg,
        &space,
    )?;
    finish_arms(&dir, &ds.name, s.cfg.repetitions, &report)
}

fn finish_arms(dir: &Path, dataset: &str, reps: usize, report: &trainer::AblationReport) -> Result<()> {
    let rows: Vec<_> = report
        .arms
        .iter()
        .flat_map(|arm| result_rows(dataset, &arm.arm, &arm.results, reps))
        .collect();
    write_csv(dir.join(RESULTS_FILE), &rows)?;
    write_json(dir.join("arms.json"), report)?;
    print!("{}", report.table());
    println!("run directory: {}", dir.display());
    Ok(())
}

pub fn evaluate_cmd(global: &GlobalArgs, run: &Path) -> Result<()> {
    let probe: Manifest = read_json(run.join(crate::run::MANIFEST_FILE))?;
    let (teacher_dir, stems) = match probe.command.as_str() {
        "train-teacher" => {
            let folds: Vec<graphkd::graph::FoldSplit> = read_json(run.join(FOLDS_FILE))?;
            let stems = folds
                .iter()
                .map(|f| trainer::teacher_stem(f.fold_index))
                .collect::<Vec<_>>();
            (run.to_path_buf(), stems)
        }
        "distill" => {
            let teacher_run: PathBuf = serde_json::from_value(probe.details["teacher_run"].clone())?;
            let mut stems = Vec::new();
            let folds: Vec<graphkd::graph::FoldSplit> = read_json(teacher_run.join(FOLDS_FILE))?;
            for f in &folds {
                for r in 0..probe.run_config.repetitions {
                    stems.push(student_stem(f.fold_index, r));
                }
            }
            (teacher_run, stems)
        }
        other => return Err(Error::Config(format!("cannot evaluate a `{other}` run"))),
    };
    let t = TeacherRunArtifacts::load(&teacher_dir, global.data_dir.as_deref())?;
    println!("| checkpoint | stored | recomputed |\n|---|---|---|");
    for stem in stems {
        let (model, meta): (_, ModelMeta) = load_model(run, &stem)?;
        let fold = t
            .folds
            .iter()
            .find(|f| f.fold_index == meta.fold_index)
            .ok_or_else(|| Error::Integrity(format!("{stem}: fold {} not in split", meta.fold_index)))?;
        let acc = evaluate(&model, &t.dataset, Some(&t.caches), &fold.test_ids)?;
        println!("| {stem} | {:.4} | {:.4} |", meta.best_test_accuracy, acc);
    }
    Ok(())
}

pub fn dynamic_bench(global: &GlobalArgs, a: &DynamicArgs) -> Result<()> {
    let student_manifest = Manifest::read(&a.student_run, "distill")?;
    let teacher_run: PathBuf = serde_json::from_value(student_manifest.details["teacher_run"].clone())?;
    let t = TeacherRunArtifacts::load(&teacher_run, global.data_dir.as_deref())?;
    let fold = match a.fold {
        Some(f) => t
            .folds
            .iter()
            .find(|s| s.fold_index == f)
            .ok_or_else(|| Error::Config(format!("fold {f} not in the teacher run")))?,
        None => t
            .folds
            .first()
            .ok_or_else(|| Error::Integrity("teacher run has no folds".into()))?,
    };
    let (student, _) = load_model(&a.student_run, &student_stem(fold.fold_index, 0))?;
    let (teacher, _) = load_teacher(&teacher_run, fold.fold_index)?;
    let cfg = base_config(global, Some(&student_manifest.run_config))?;
    let dcfg = DynamicConfig {
        num_removed: a.removed,
        repetitions: a.repetitions,
        max_removal_fraction: a.max_removal_fraction,
        seed: cfg.seed,
        warmup_traces: a.warmup,
    };
    let ds = &t.dataset;
    let dir = create_run_dir(
        global.run_dir.as_deref(),
        &global.out_dir,
        &ds.name,
        "dynamic-bench",
        cfg.seed,
    )?;
    let details = json!({ "student_run": a.student_run, "fold": fold.fold_index, "dynamic": dcfg });
    Manifest::new("dynamic-bench", &ds.name, global.data_dir.as_deref(), &cfg, details).write(&dir)?;
    let (traces, skipped) = make_traces(ds, &fold.test_ids, &dcfg);
    if traces.is_empty() {
        return Err(Error::Config(format!(
            "no test graph admits removing {} nodes at fraction {}",
            a.removed, a.max_removal_fraction
        )));
    }
    write_json(dir.join("traces.json"), &traces)?;
    let scores = perturb_and_score(ds, &t.caches, &student, &teacher, &traces, skipped.len(), cfg.jobs)?;
    let latency = if a.no_timing {
        None
    } else {
        Some(time_inference(ds, &t.caches, &student, &teacher, &traces, a.warmup)?)
    };
    write_per_k_csv(dir.join("per_k.csv"), &scores, latency.as_ref())?;
    write_json(
        dir.join("dynamic.json"),
        &json!({ "scores": scores, "latency": latency }),
    )?;
    println!(
        "{} traces, {} graphs skipped, max incremental gap {:.2e}",
        scores.traces, scores.graphs_skipped, scores.max_incremental_gap
    );
    println!(
        "accuracy original/removed: student {:.4}/{:.4}, teacher {:.4}/{:.4}",
        scores.student_accuracy_original,
        scores.student_accuracy_removed,
        scores.teacher_accuracy_original,
        scores.teacher_accuracy_removed
    );
    if let Some(l) = &latency {
        println!(
            "mean ms per insertion: incremental student {:.4}, full student {:.4}, full teacher {:.4} (speedup {:.1}x)",
            l.incremental_student.mean_ms,
            l.full_student.mean_ms,
            l.full_teacher.mean_ms,
            l.speedup()
        );
    }
    println!("run directory: {}", dir.display());
    Ok(())
}

pub fn report(inputs: &[PathBuf], output: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for input in inputs {
        let path = if input.is_dir() {
            input.join(RESULTS_FILE)
        } else {
            input.clone()
        };
        rows.extend(read_csv(&path)?);
    }
    let table = render_table(&summarize(&rows));
    print!("{table}");
    if let Some(out) = output {
        std::fs::write(out, &table)?;
    }
    Ok(())
}
