//! The seven pipeline commands. Exit codes: 0 success, 2 backend or
//! configuration failure, 3 input-artifact failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use snapback_core::batch::{write_request_file, BatchRequestRow};
use snapback_core::cache::ReconCache;
use snapback_core::error::Error as CoreError;
use snapback_core::features::{load_features, save_features, FeatureMatrix, FEATURE_NAMES};
use snapback_core::ingest::{load_and_preprocess, load_manifest, stratified_split, ImageRecord};
use snapback_core::model::{
    auprc, auroc, bootstrap_ci, confusion_at, reliability_bins, run_cv, youden_threshold,
    EvalReport, FoldScore, ModelBundle,
};
use snapback_core::pipeline::{extract_from_records, ExtractConfig, PipelineImage};
use snapback_core::robustness::{robustness_eval, AugmentationSpec};

use crate::backend::{resolve_backend, resolve_provider};
use crate::config::PipelineConfig;
use crate::rundir::RunDir;

pub struct CmdError {
    pub code: i32,
    pub err: anyhow::Error,
}

pub type CmdResult = Result<(), CmdError>;

fn backend_err(err: impl Into<anyhow::Error>) -> CmdError {
    CmdError {
        code: 2,
        err: err.into(),
    }
}

fn artifact_err(err: impl Into<anyhow::Error>) -> CmdError {
    CmdError {
        code: 3,
        err: err.into(),
    }
}

fn internal_err(err: impl Into<anyhow::Error>) -> CmdError {
    CmdError {
        code: 1,
        err: err.into(),
    }
}

fn classify_core(err: CoreError) -> CmdError {
    match err {
        CoreError::BackendInit(_) => backend_err(err),
        CoreError::Io(_)
        | CoreError::Csv(_)
        | CoreError::Json(_)
        | CoreError::SchemaMismatch(_)
        | CoreError::ImageDecode { .. } => artifact_err(err),
        other => internal_err(other),
    }
}

fn echo_config(cfg: &PipelineConfig, run: &RunDir) -> CmdResult {
    cfg.save(&run.config_echo()).map_err(internal_err)
}

fn manifest_records(cfg: &PipelineConfig) -> Result<Vec<ImageRecord>, CmdError> {
    let path = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| artifact_err(anyhow!("no manifest configured (set `manifest` or --manifest)")))?;
    let manifest = load_manifest(path).map_err(classify_core)?;
    for rej in &manifest.rejected {
        eprintln!("manifest line {}: rejected ({})", rej.line, rej.reason);
    }
    Ok(manifest.records)
}

fn write_failures(run: &RunDir, failures: &[snapback_core::pipeline::ExtractFailure]) -> CmdResult {
    let mut w = csv::Writer::from_path(run.failures_csv()).map_err(internal_err)?;
    w.write_record(["id", "reason"]).map_err(internal_err)?;
    for f in failures {
        w.write_record([f.id.as_str(), f.reason.as_str()])
            .map_err(internal_err)?;
    }
    w.flush().map_err(internal_err)?;
    Ok(())
}

/// extract: manifest -> cached reconstructions -> feature CSV. Resumable:
/// cache hits skip recomputation.
pub fn cmd_extract(cfg: &PipelineConfig) -> CmdResult {
    let records = manifest_records(cfg)?;
    let backend = resolve_backend(&cfg.backend, &records).map_err(classify_core)?;
    let provider = resolve_provider(&cfg.provider).map_err(classify_core)?;
    let schedule = cfg.schedule().map_err(internal_err)?;
    let params = cfg.reconstruction_params();

    let run = RunDir::new(cfg.run_dir()).map_err(internal_err)?;
    let _lock = run.lock().map_err(internal_err)?;
    echo_config(cfg, &run)?;

    let cache_root = cfg
        .cache_root
        .clone()
        .unwrap_or_else(|| run.default_cache_root());
    let cache = ReconCache::new(cache_root);

    let extract_cfg = ExtractConfig {
        backend: backend.as_ref(),
        provider: provider.as_ref(),
        schedule: &schedule,
        params: &params,
        cache: Some(&cache),
        ssim_tau: cfg.ssim_tau,
    };
    let data_root = cfg.data_root.as_deref();
    let outcome = extract_from_records(&records, data_root, &extract_cfg).map_err(classify_core)?;

    save_features(&outcome.matrix, &run.features_csv()).map_err(classify_core)?;
    write_failures(&run, &outcome.failures)?;

    // external engines get a batch request file for whatever is not cached
    if cfg.backend.starts_with("sd-") {
        let mut rows = Vec::new();
        for rec in &records {
            for &s in schedule.strengths() {
                if cache.get(&rec.id, s, &params).is_none() {
                    rows.push(BatchRequestRow::new(
                        &rec.id,
                        &rec.path.to_string_lossy(),
                        s,
                        &params,
                    ));
                }
            }
        }
        if !rows.is_empty() {
            write_request_file(&rows, &run.pending_requests_csv()).map_err(classify_core)?;
            eprintln!(
                "{} reconstruction jobs pending; see {}",
                rows.len(),
                run.pending_requests_csv().display()
            );
        }
    }

    println!(
        "extracted {} rows ({} failures) -> {}",
        outcome.matrix.rows.len(),
        outcome.failures.len(),
        run.features_csv().display()
    );
    Ok(())
}

fn matrix_to_xy(matrix: &FeatureMatrix) -> (Vec<Vec<Option<f64>>>, Vec<u8>, Vec<String>) {
    let x = matrix
        .rows
        .iter()
        .map(|r| r.features.values.to_vec())
        .collect();
    let y = matrix.rows.iter().map(|r| r.label).collect();
    let ids = matrix.rows.iter().map(|r| r.id.clone()).collect();
    (x, y, ids)
}

fn pseudo_records(ids: &[String], labels: &[u8]) -> Vec<ImageRecord> {
    ids.iter()
        .zip(labels)
        .map(|(id, &label)| ImageRecord {
            id: id.clone(),
            path: PathBuf::from(id),
            label,
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub threshold: f64,
    pub cv: EvalReport,
    pub holdout: EvalReport,
}

struct SplitData {
    train_x: Vec<Vec<Option<f64>>>,
    train_y: Vec<u8>,
    train_ids: Vec<String>,
    test_x: Vec<Vec<Option<f64>>>,
    test_y: Vec<u8>,
    test_ids: Vec<String>,
}

fn split_matrix(
    x: &[Vec<Option<f64>>],
    y: &[u8],
    ids: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitData, CmdError> {
    let records = pseudo_records(ids, y);
    let (train, test) = stratified_split(&records, test_fraction, seed).map_err(classify_core)?;
    let index_of = |id: &str| ids.iter().position(|i| i == id).unwrap();
    let collect = |part: &[ImageRecord]| {
        let idx: Vec<usize> = part.iter().map(|r| index_of(&r.id)).collect();
        (
            idx.iter().map(|&i| x[i].clone()).collect::<Vec<_>>(),
            idx.iter().map(|&i| y[i]).collect::<Vec<_>>(),
            idx.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>(),
        )
    };
    let (train_x, train_y, train_ids) = collect(&train);
    let (test_x, test_y, test_ids) = collect(&test);
    Ok(SplitData {
        train_x,
        train_y,
        train_ids,
        test_x,
        test_y,
        test_ids,
    })
}

/// Full training pipeline over a loaded feature matrix. Shared by `train`
/// (snap-back features) and `baseline` (pixel features).
#[allow(clippy::too_many_arguments)]
fn train_pipeline(
    x: &[Vec<Option<f64>>],
    y: &[u8],
    ids: &[String],
    feature_names: &[String],
    cfg: &PipelineConfig,
    run: &RunDir,
    report_path: &Path,
    save_bundle: bool,
) -> Result<TrainReport, CmdError> {
    let split = split_matrix(x, y, ids, cfg.test_fraction, cfg.seed)?;

    let cv = run_cv(
        &split.train_x,
        &split.train_y,
        feature_names,
        cfg.k,
        cfg.seed,
        cfg.reg_strength,
    )
    .map_err(classify_core)?;
    let threshold =
        youden_threshold(&cv.pooled_scores, &split.train_y).map_err(classify_core)?;

    let bundle = ModelBundle::fit(
        &split.train_x,
        &split.train_y,
        feature_names,
        cfg.reg_strength,
        threshold,
        cfg.seed,
    )
    .map_err(classify_core)?;

    let holdout_scores: Vec<f64> = split
        .test_x
        .iter()
        .map(|row| bundle.predict_proba(row))
        .collect::<Result<_, _>>()
        .map_err(classify_core)?;

    let cv_report = EvalReport {
        auroc: cv.pooled_auroc,
        auprc: cv.pooled_auprc,
        ci_low: cv.ci.0,
        ci_high: cv.ci.1,
        per_fold: cv.per_fold.clone(),
        confusion: confusion_at(&cv.pooled_scores, &split.train_y, threshold),
        reliability: reliability_bins(&cv.pooled_scores, &split.train_y, 10),
    };
    let holdout_ci =
        bootstrap_ci(&holdout_scores, &split.test_y, 1000, cfg.seed ^ 1).map_err(classify_core)?;
    let holdout_report = EvalReport {
        auroc: auroc(&holdout_scores, &split.test_y).map_err(classify_core)?,
        auprc: auprc(&holdout_scores, &split.test_y).map_err(classify_core)?,
        ci_low: holdout_ci.0,
        ci_high: holdout_ci.1,
        per_fold: Vec::<FoldScore>::new(),
        confusion: confusion_at(&holdout_scores, &split.test_y, threshold),
        reliability: reliability_bins(&holdout_scores, &split.test_y, 10),
    };
    let report = TrainReport {
        threshold,
        cv: cv_report,
        holdout: holdout_report,
    };

    if save_bundle {
        bundle.save_json(&run.bundle_json()).map_err(classify_core)?;
    }
    std::fs::write(
        report_path,
        serde_json::to_string_pretty(&report).map_err(internal_err)?,
    )
    .map_err(internal_err)?;
    report.cv.write_csvs(run.root()).map_err(classify_core)?;

    // out-of-fold and holdout scores, one row per image
    let mut w = csv::Writer::from_path(run.scores_csv()).map_err(internal_err)?;
    w.write_record(["id", "label", "split", "score"])
        .map_err(internal_err)?;
    for ((id, &label), &score) in split
        .train_ids
        .iter()
        .zip(&split.train_y)
        .zip(&cv.pooled_scores)
    {
        w.write_record([id.as_str(), &label.to_string(), "cv", &score.to_string()])
            .map_err(internal_err)?;
    }
    for ((id, &label), &score) in split.test_ids.iter().zip(&split.test_y).zip(&holdout_scores) {
        w.write_record([id.as_str(), &label.to_string(), "holdout", &score.to_string()])
            .map_err(internal_err)?;
    }
    w.flush().map_err(internal_err)?;
    Ok(report)
}

fn load_feature_matrix(path: &Path) -> Result<FeatureMatrix, CmdError> {
    load_features(path).map_err(|e| artifact_err(anyhow!("{}: {e}", path.display())))
}

/// train: stratified split, k-fold CV on the training split, threshold from
/// pooled out-of-fold scores, final fit on all training data, holdout eval.
pub fn cmd_train(cfg: &PipelineConfig, features: Option<&Path>) -> CmdResult {
    let run = RunDir::new(cfg.run_dir()).map_err(internal_err)?;
    let features_path = features
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.features_csv());
    let matrix = load_feature_matrix(&features_path)?;
    let (x, y, ids) = matrix_to_xy(&matrix);
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();

    let _lock = run.lock().map_err(internal_err)?;
    echo_config(cfg, &run)?;
    let report = train_pipeline(&x, &y, &ids, &names, cfg, &run, &run.report_json(), true)?;
    println!(
        "cv auroc {:.4} [{:.4}, {:.4}], holdout auroc {:.4}, threshold {:.4}",
        report.cv.auroc, report.cv.ci_low, report.cv.ci_high, report.holdout.auroc, report.threshold
    );
    Ok(())
}

/// eval: score a feature file with an existing bundle.
pub fn cmd_eval(cfg: &PipelineConfig, bundle_path: &Path, features: Option<&Path>) -> CmdResult {
    let run = RunDir::new(cfg.run_dir()).map_err(internal_err)?;
    let features_path = features
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.features_csv());
    let matrix = load_feature_matrix(&features_path)?;
    let bundle = ModelBundle::load_json(bundle_path)
        .map_err(|e| artifact_err(anyhow!("{}: {e}", bundle_path.display())))?;

    let (x, y, _) = matrix_to_xy(&matrix);
    let scores: Vec<f64> = x
        .iter()
        .map(|row| bundle.predict_proba(row))
        .collect::<Result<_, _>>()
        .map_err(classify_core)?;
    let ci = bootstrap_ci(&scores, &y, 1000, cfg.seed).map_err(classify_core)?;
    let report = EvalReport {
        auroc: auroc(&scores, &y).map_err(classify_core)?,
        auprc: auprc(&scores, &y).map_err(classify_core)?,
        ci_low: ci.0,
        ci_high: ci.1,
        per_fold: Vec::new(),
        confusion: confusion_at(&scores, &y, bundle.threshold),
        reliability: reliability_bins(&scores, &y, 10),
    };
    report
        .save_json(&run.root().join("eval_report.json"))
        .map_err(classify_core)?;
    println!("eval auroc {:.4}, auprc {:.4}", report.auroc, report.auprc);
    Ok(())
}

/// baseline: 32x32 pixel vectors through the identical model pipeline.
pub fn cmd_baseline(cfg: &PipelineConfig) -> CmdResult {
    let records = manifest_records(cfg)?;
    let data_root = cfg.data_root.as_deref();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut ids = Vec::new();
    for rec in &records {
        match load_and_preprocess(rec, data_root) {
            Ok(raster) => {
                let feats = snapback_core::features::pixel_baseline_features(&raster);
                x.push(feats.into_iter().map(Some).collect());
                y.push(rec.label);
                ids.push(rec.id.clone());
            }
            Err(e) => eprintln!("baseline: skipping {}: {e}", rec.id),
        }
    }
    if x.is_empty() {
        return Err(artifact_err(anyhow!("no decodable images for baseline")));
    }
    let names: Vec<String> = (0..3072).map(|i| format!("px_{i:04}")).collect();
    let run = RunDir::new(cfg.run_dir()).map_err(internal_err)?;
    let _lock = run.lock().map_err(internal_err)?;
    echo_config(cfg, &run)?;
    let report = train_pipeline(
        &x,
        &y,
        &ids,
        &names,
        cfg,
        &run,
        &run.root().join("baseline_report.json"),
        false,
    )?;
    println!(
        "pixel baseline cv auroc {:.4}, holdout auroc {:.4}",
        report.cv.auroc, report.holdout.auroc
    );
    Ok(())
}

fn default_ablation_subsets() -> Vec<Vec<String>> {
    let all: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    vec![
        all,
        vec!["knee_step".into(), "lpips_0.60".into(), "auc_lpips".into()],
        vec!["knee_step".into()],
        vec!["auc_lpips".into()],
        vec!["lpips_0.60".into()],
        vec!["delta_lp".into()],
    ]
}

fn read_subsets_file(path: &Path) -> Result<Vec<Vec<String>>, CmdError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read subsets file {}", path.display()))
        .map_err(artifact_err)?;
    let subsets: Vec<Vec<String>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect();
    if subsets.is_empty() {
        return Err(artifact_err(anyhow!("subsets file {} is empty", path.display())));
    }
    Ok(subsets)
}

/// ablate: CV AUROC per feature subset, on the same training split as
/// `train` so the all-features row reproduces its CV number.
pub fn cmd_ablate(cfg: &PipelineConfig, features: Option<&Path>, subsets: Option<&Path>) -> CmdResult {
    let run = RunDir::new(cfg.run_dir()).map_err(internal_err)?;
    let features_path = features
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.features_csv());
    let matrix = load_feature_matrix(&features_path)?;
    let (x, y, ids) = matrix_to_xy(&matrix);
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let split = split_matrix(&x, &y, &ids, cfg.test_fraction, cfg.seed)?;

    let subsets = match subsets {
        Some(path) => read_subsets_file(path)?,
        None => default_ablation_subsets(),
    };
    let table = snapback_core::model::ablation(
        &split.train_x,
        &split.train_y,
        &names,
        &subsets,
        cfg.k,
        cfg.seed,
        cfg.reg_strength,
    )
    .map_err(classify_core)?;

    let _lock = run.lock().map_err(internal_err)?;
    let mut w = csv::Writer::from_path(run.ablation_csv()).map_err(internal_err)?;
    w.write_record(["subset", "auroc"]).map_err(internal_err)?;
    let mut summary = String::new();
    for (subset, auc) in &table {
        w.write_record([subset.as_str(), &auc.to_string()])
            .map_err(internal_err)?;
        let _ = writeln!(summary, "{auc:.4}  {subset}");
    }
    w.flush().map_err(internal_err)?;
    print!("{summary}");
    Ok(())
}

/// robustness: augment, re-extract, score with the fixed bundle.
pub fn cmd_robustness(
    cfg: &PipelineConfig,
    bundle_path: Option<&Path>,
    conditions: Option<&str>,
) -> CmdResult {
    let records = manifest_records(cfg)?;
    let run = RunDir::new(cfg.run_dir()).map_err(internal_err)?;
    let bundle_path = bundle_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| run.bundle_json());
    let bundle = ModelBundle::load_json(&bundle_path)
        .map_err(|e| artifact_err(anyhow!("{}: {e}", bundle_path.display())))?;

    let backend = resolve_backend(&cfg.backend, &records).map_err(classify_core)?;
    let provider = resolve_provider(&cfg.provider).map_err(classify_core)?;
    let schedule = cfg.schedule().map_err(internal_err)?;
    let params = cfg.reconstruction_params();

    let specs: Vec<AugmentationSpec> = match conditions {
        None => AugmentationSpec::six_conditions(),
        Some(list) => list
            .split(',')
            .map(|c| {
                AugmentationSpec::parse(c.trim())
                    .ok_or_else(|| backend_err(anyhow!("unknown augmentation condition `{c}`")))
            })
            .collect::<Result<_, _>>()?,
    };

    let data_root = cfg.data_root.as_deref();
    let mut images = Vec::new();
    for rec in &records {
        match load_and_preprocess(rec, data_root) {
            Ok(raster) => images.push(PipelineImage {
                id: rec.id.clone(),
                label: rec.label,
                raster,
            }),
            Err(e) => eprintln!("robustness: skipping {}: {e}", rec.id),
        }
    }

    let report = robustness_eval(
        &images,
        &bundle,
        backend.as_ref(),
        provider.as_ref(),
        &schedule,
        &params,
        &specs,
        cfg.seed,
    )
    .map_err(classify_core)?;

    let _lock = run.lock().map_err(internal_err)?;
    report.write_csv(&run.robustness_csv()).map_err(classify_core)?;
    for row in &report.rows {
        println!(
            "{:<11} auroc {:.4}  (n={}, failed={})",
            row.condition, row.auroc, row.n_evaluated, row.n_failed
        );
    }
    Ok(())
}
