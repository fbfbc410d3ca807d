//! End-to-end pipelines behind the CLI commands. Every pipeline is a pure
//! function of its inputs and seeds; artifacts are written under the
//! configured output directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::io::create;
use crate::dataset::{
    augment_shadows, build_response_vectors, group_identical, load_q_matrix, load_response_logs, split_dataset,
    DataSplit, EntityMode, ResponseDataset, ResponseLog,
};
use crate::error::{CdmError, Result};
use crate::metrics::{
    classification_metrics, distance_histogram, doc, ids, reo, Classification, HistogramBin, MetricsReport,
};
use crate::models::{Diagnosis, Dims, FitContext, Model, ModelKind};
use crate::training::{load_checkpoint, save_checkpoint, train, TrainConfig, TrainReport};

/// Loads the logs and Q-matrix named by `cfg` and applies preprocessing.
pub fn load_dataset(cfg: &RunConfig) -> Result<ResponseDataset> {
    let q = load_q_matrix(&cfg.q_path())?;
    let loaded = load_response_logs(&cfg.logs_path())?;
    let ds = ResponseDataset::from_loaded(loaded, &q, cfg.q_base)?;
    ds.preprocess(cfg.min_logs, cfg.first_attempt_only)
}

pub fn split(cfg: &RunConfig, ds: &ResponseDataset, seed: u64) -> Result<DataSplit> {
    split_dataset(&ds.logs, cfg.test_ratio, cfg.val_ratio, seed)
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(body.as_bytes()).map_err(|e| CdmError::io(path, e))?;
    w.flush().map_err(|e| CdmError::io(path, e))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A trained (or loaded) model with the fit context its diagnosis uses.
pub struct Fitted {
    pub model: Model,
    pub ctx: FitContext,
    pub report: Option<TrainReport>,
}

impl Fitted {
    pub fn diagnose(&self) -> Result<Diagnosis> {
        self.model.diagnose_all(&self.ctx)
    }
}

/// Trains a fresh model on `split.fit`, or wraps `checkpoint` when given.
pub fn fit_model(
    ds: &ResponseDataset,
    split: &DataSplit,
    tcfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<Fitted> {
    let dims = Dims::of(ds);
    let (model, report) = match checkpoint {
        Some(path) => {
            let model = load_checkpoint(path)?;
            if model.dims() != dims {
                return Err(CdmError::Validation(format!(
                    "checkpoint was trained on {:?}, dataset has {dims:?}",
                    model.dims()
                )));
            }
            (model, None)
        }
        None => {
            let mut model = tcfg.build_model(dims)?;
            let report = train(&mut model, split, &ds.q_matrix, tcfg)?;
            (model, Some(report))
        }
    };
    let ctx = FitContext::new(dims, &split.fit, &ds.q_matrix)?;
    Ok(Fitted { model, ctx, report })
}

/// Mean DOC on the fit and test logs and the resulting REO, from traits
/// diagnosed on the fit logs.
pub fn explainability(fitted: &Fitted, ds: &ResponseDataset, split: &DataSplit) -> Result<(f64, f64, f64)> {
    let traits = fitted.diagnose()?.learner_traits();
    let train_doc = doc(&traits, &split.fit, &ds.q_matrix)?.mean;
    let test_doc = doc(&traits, &split.test, &ds.q_matrix)?.mean;
    Ok((train_doc, test_doc, reo(train_doc, test_doc)?))
}

pub fn prediction(fitted: &Fitted, logs: &[ResponseLog], threshold: f64) -> Result<Classification> {
    let preds = fitted.model.predict_logs(&fitted.ctx, logs)?;
    let labels: Vec<u8> = logs.iter().map(|l| l.score).collect();
    classification_metrics(&preds, &labels, threshold)
}

/// Constant predictor: the fit-set correct rate for every log.
pub fn majority_baseline(fit: &[ResponseLog], test: &[ResponseLog], threshold: f64) -> Result<Classification> {
    if fit.is_empty() {
        return Err(CdmError::Empty("fit set"));
    }
    let rate = fit.iter().map(|l| f64::from(l.score)).sum::<f64>() / fit.len() as f64;
    let labels: Vec<u8> = test.iter().map(|l| l.score).collect();
    classification_metrics(&vec![rate; test.len()], &labels, threshold)
}

pub struct TrainArtifacts {
    pub report: TrainReport,
    pub metrics: MetricsReport,
    pub checkpoint: PathBuf,
}

/// Preprocess, split, train the configured model, then write the
/// checkpoint, training report, per-epoch CSV and test metrics.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainArtifacts> {
    let ds = load_dataset(cfg)?;
    let split = split(cfg, &ds, cfg.seed())?;
    let tcfg = cfg.train_config(cfg.model, cfg.seed());
    let fitted = fit_model(&ds, &split, &tcfg, None)?;
    let report = fitted.report.clone().expect("trained");
    let mut metrics = MetricsReport::default();
    if !split.test.is_empty() {
        let c = prediction(&fitted, &split.test, cfg.threshold)?;
        metrics.acc = Some(c.acc);
        metrics.rmse = Some(c.rmse);
        metrics.f1 = Some(c.f1);
        if cfg.model.concept_traits() {
            match explainability(&fitted, &ds, &split) {
                Ok((a, b, r)) => {
                    metrics.mean_doc_train = Some(a);
                    metrics.mean_doc_test = Some(b);
                    metrics.reo = Some(r);
                }
                Err(e) => log::warn!("DOC not available: {e}"),
            }
        }
    }
    let out = &cfg.out_dir;
    let checkpoint = out.join("model.ckpt");
    save_checkpoint(&fitted.model, &checkpoint)?;
    report.write_json(&out.join("train_report.json"))?;
    report.write_epochs_csv(&out.join("train_epochs.csv"))?;
    report.write_timing_csv(&out.join("train_timing.csv"))?;
    metrics.write_json(&out.join("metrics.json"))?;
    write_text(&out.join("config.txt"), &cfg.to_text())?;
    Ok(TrainArtifacts {
        report,
        metrics,
        checkpoint,
    })
}

/// One identifiability measurement on shadow-augmented data.
#[derive(Debug, Clone, PartialEq)]
pub struct IdsRun {
    pub ids: f64,
    pub histogram: Vec<HistogramBin>,
    /// Within-group pairs whose diagnoses differ at all.
    pub distinct_pairs: usize,
    pub pairs: usize,
}

/// Duplicates every entity of `mode`, splits the original logs (each
/// shadow's logs follow its original into the same part), trains, and
/// scores identifiability over groups of identical fit-set response vectors.
pub fn ids_run(
    ds: &ResponseDataset,
    mode: EntityMode,
    tcfg: &TrainConfig,
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
) -> Result<IdsRun> {
    let aug = augment_shadows(ds, mode);
    let split = split(cfg, ds, tcfg.seed)?.with_shadows(ds.n_learners, ds.n_questions, mode);
    let fitted = fit_model(&aug, &split, tcfg, checkpoint)?;
    let diagnosis = fitted.diagnose()?;
    let traits = match mode {
        EntityMode::Learner => diagnosis.learner_traits(),
        EntityMode::Question => diagnosis.question_params(),
    };
    let groups = group_identical(&build_response_vectors(
        aug.n_learners,
        aug.n_questions,
        &split.fit,
        mode,
    ));
    let distances = crate::metrics::within_group_distances(&traits, &groups)?;
    Ok(IdsRun {
        ids: ids(&traits, &groups)?,
        histogram: distance_histogram(&traits, &groups, cfg.hist_bin_width)?,
        distinct_pairs: distances.iter().filter(|&&d| d != 0.0).count(),
        pairs: distances.len(),
    })
}

fn experiment_models(cfg: &RunConfig) -> Result<Vec<ModelKind>> {
    match &cfg.from_checkpoint {
        Some(path) => Ok(vec![load_checkpoint(path)?.kind()]),
        None => Ok(cfg.models.clone()),
    }
}

fn seeds(cfg: &RunConfig, count: usize) -> Vec<u64> {
    let n = if cfg.from_checkpoint.is_some() { 1 } else { count.max(1) };
    (0..n as u64).map(|s| cfg.seed() + s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rq1Row {
    pub model: ModelKind,
    pub mode: EntityMode,
    pub ids: f64,
    pub ids_std: f64,
    pub runs: Vec<(u64, f64)>,
}

/// Identifiability table: `rq1.csv` (`model,mode,ids`, mean over seeds),
/// `rq1_runs.csv` with every seed, and one distance histogram per model
/// and mode from the first seed.
pub fn cmd_rq1(cfg: &RunConfig) -> Result<Vec<Rq1Row>> {
    let mut ds = load_dataset(cfg)?;
    if cfg.rq1_max_learners > 0 {
        ds = ds.take_learners(cfg.rq1_max_learners);
    }
    let mut rows = Vec::new();
    for kind in experiment_models(cfg)? {
        for &mode in &cfg.rq1_modes {
            let mut runs = Vec::new();
            for seed in seeds(cfg, cfg.rq1_seeds) {
                let tcfg = cfg.train_config(kind, seed);
                let run = ids_run(&ds, mode, &tcfg, cfg, cfg.from_checkpoint.as_deref())?;
                log::info!("rq1 {kind} {mode} seed {seed}: ids {:.4}", run.ids);
                if runs.is_empty() {
                    crate::metrics::write_histogram_csv(
                        &run.histogram,
                        &cfg.out_dir.join(format!("rq1_hist_{kind}_{mode}.csv")),
                    )?;
                }
                runs.push((seed, run.ids));
            }
            let (ids, ids_std) = mean_std(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
            rows.push(Rq1Row {
                model: kind,
                mode,
                ids,
                ids_std,
                runs,
            });
        }
    }
    let mut table = String::from("model,mode,ids\n");
    let mut detail = String::from("model,mode,seed,ids\n");
    for r in &rows {
        table.push_str(&format!("{},{},{}\n", r.model, r.mode, r.ids));
        for (seed, v) in &r.runs {
            detail.push_str(&format!("{},{},{seed},{v}\n", r.model, r.mode));
        }
    }
    write_text(&cfg.out_dir.join("rq1.csv"), &table)?;
    write_text(&cfg.out_dir.join("rq1_runs.csv"), &detail)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rq2Row {
    pub model: ModelKind,
    pub doc_train: f64,
    pub doc_test: f64,
    pub reo: f64,
    pub runs: Vec<(u64, f64, f64, f64)>,
}

/// Explainability table `rq2.csv` (`model,doc_train,doc_test,reo`, means
/// over seeds) and `rq2_runs.csv`. Models without concept-wise traits are
/// skipped.
pub fn cmd_rq2(cfg: &RunConfig) -> Result<Vec<Rq2Row>> {
    let ds = load_dataset(cfg)?;
    let mut rows = Vec::new();
    for kind in experiment_models(cfg)? {
        if !kind.concept_traits() {
            log::warn!("rq2: {kind} has no concept-wise traits, skipped");
            continue;
        }
        let mut runs = Vec::new();
        for seed in seeds(cfg, cfg.rq2_seeds) {
            let split = split(cfg, &ds, seed)?;
            let fitted = fit_model(
                &ds,
                &split,
                &cfg.train_config(kind, seed),
                cfg.from_checkpoint.as_deref(),
            )?;
            let (a, b, r) = explainability(&fitted, &ds, &split)?;
            log::info!("rq2 {kind} seed {seed}: doc {a:.4}/{b:.4} reo {r:.4}");
            runs.push((seed, a, b, r));
        }
        let col = |f: fn(&(u64, f64, f64, f64)) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>()).0;
        rows.push(Rq2Row {
            model: kind,
            doc_train: col(|r| r.1),
            doc_test: col(|r| r.2),
            reo: col(|r| r.3),
            runs,
        });
    }
    let mut table = String::from("model,doc_train,doc_test,reo\n");
    let mut detail = String::from("model,seed,doc_train,doc_test,reo\n");
    for r in &rows {
        table.push_str(&format!("{},{},{},{}\n", r.model, r.doc_train, r.doc_test, r.reo));
        for (seed, a, b, c) in &r.runs {
            detail.push_str(&format!("{},{seed},{a},{b},{c}\n", r.model));
        }
    }
    write_text(&cfg.out_dir.join("rq2.csv"), &table)?;
    write_text(&cfg.out_dir.join("rq2_runs.csv"), &detail)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rq3Row {
    /// Model name, or `majority` for the constant baseline.
    pub model: String,
    pub acc: f64,
    pub rmse: f64,
    pub f1: f64,
}

/// Prediction table `rq3.csv` (`model,acc,rmse,f1`, means over seeds) on
/// the test part, with traits diagnosed from the fit part.
pub fn cmd_rq3(cfg: &RunConfig) -> Result<Vec<Rq3Row>> {
    let ds = load_dataset(cfg)?;
    let mut entries: Vec<(String, Vec<Classification>)> = Vec::new();
    let seeds = seeds(cfg, cfg.rq3_seeds);
    if cfg.rq3_majority {
        let runs = seeds
            .iter()
            .map(|&s| {
                let sp = split(cfg, &ds, s)?;
                majority_baseline(&sp.fit, &sp.test, cfg.threshold)
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push(("majority".into(), runs));
    }
    for kind in experiment_models(cfg)? {
        let mut runs = Vec::new();
        for &seed in &seeds {
            let sp = split(cfg, &ds, seed)?;
            let fitted = fit_model(&ds, &sp, &cfg.train_config(kind, seed), cfg.from_checkpoint.as_deref())?;
            let c = prediction(&fitted, &sp.test, cfg.threshold)?;
            log::info!(
                "rq3 {kind} seed {seed}: acc {:.4} rmse {:.4} f1 {:.4}",
                c.acc,
                c.rmse,
                c.f1
            );
            runs.push(c);
        }
        entries.push((kind.to_string(), runs));
    }
    let rows: Vec<Rq3Row> = entries
        .into_iter()
        .map(|(model, runs)| {
            let m = |f: fn(&Classification) -> f64| mean_std(&runs.iter().map(f).collect::<Vec<_>>()).0;
            Rq3Row {
                model,
                acc: m(|c| c.acc),
                rmse: m(|c| c.rmse),
                f1: m(|c| c.f1),
            }
        })
        .collect();
    let mut table = String::from("model,acc,rmse,f1\n");
    for r in &rows {
        table.push_str(&format!("{},{},{},{}\n", r.model, r.acc, r.rmse, r.f1));
    }
    write_text(&cfg.out_dir.join("rq3.csv"), &table)?;
    Ok(rows)
}

fn entity_csv(ids: &[String], values: &crate::diffcore::Matrix) -> String {
    let mut body = String::from("entity_id");
    for k in 1..=values.cols() {
        body.push_str(&format!(",v_{k}"));
    }
    body.push('\n');
    for (i, id) in ids.iter().enumerate() {
        body.push_str(id);
        for v in values.row(i) {
            body.push_str(&format!(",{v}"));
        }
        body.push('\n');
    }
    body
}

/// Writes `learner_traits.csv` and `question_params.csv` for a checkpoint,
/// with external ids restored. Returns the two paths.
pub fn cmd_export(cfg: &RunConfig, checkpoint: &Path) -> Result<(PathBuf, PathBuf)> {
    let ds = load_dataset(cfg)?;
    let split = split(cfg, &ds, cfg.seed())?;
    let fitted = fit_model(&ds, &split, &cfg.train_config(cfg.model, cfg.seed()), Some(checkpoint))?;
    let d = fitted.diagnose()?;
    let traits = cfg.out_dir.join("learner_traits.csv");
    let params = cfg.out_dir.join("question_params.csv");
    write_text(&traits, &entity_csv(&ds.remap.learners, &d.learner_traits()))?;
    write_text(&params, &entity_csv(&ds.remap.questions, &d.question_params()))?;
    Ok((traits, params))
}

/// Writes a seeded synthetic dataset as `logs.csv` and `q.csv` in `dir`.
pub fn cmd_synth(dir: &Path, synth: &crate::dataset::synthetic::SyntheticConfig) -> Result<ResponseDataset> {
    let ds = crate::dataset::synthetic::generate(synth)?;
    crate::dataset::write_logs_csv(&dir.join("logs.csv"), &ds)?;
    crate::dataset::write_q_matrix_csv(&dir.join("q.csv"), &ds.q_matrix)?;
    Ok(ds)
}
