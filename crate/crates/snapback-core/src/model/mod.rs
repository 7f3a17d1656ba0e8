//! Classification and evaluation engine: median imputation, standardization,
//! l2 logistic regression, stratified k-fold CV, bootstrap CIs, Youden
//! threshold selection, and ranking metrics.

mod cv;
mod eval;
mod logreg;

pub use cv::{ablation, run_cv, stratified_fold_assignments, CvResult, FoldFit};
pub use eval::{
    auprc, auroc, bootstrap_ci, confusion_at, reliability_bins, youden_threshold, Confusion,
    ReliabilityBin,
};
pub use logreg::{train_logreg, LogRegFit};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A matrix with missing-value markers: rows x features.
pub type SparseMatrix = Vec<Vec<Option<f64>>>;

/// Per-feature medians of the non-missing training values. Errors if a
/// feature is entirely missing, naming it.
pub fn fit_imputer(x: &[Vec<Option<f64>>], feature_names: &[String]) -> Result<Vec<f64>> {
    let d = feature_names.len();
    let mut medians = Vec::with_capacity(d);
    for j in 0..d {
        let mut vals: Vec<f64> = x.iter().filter_map(|row| row[j]).collect();
        if vals.is_empty() {
            return Err(Error::AllMissingFeature(feature_names[j].clone()));
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        let m = if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        };
        medians.push(m);
    }
    Ok(medians)
}

/// Replace markers with medians; non-missing values pass through untouched.
pub fn apply_imputer(medians: &[f64], x: &[Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, v)| v.unwrap_or(medians[j]))
                .collect()
        })
        .collect()
}

/// Per-feature mean and population standard deviation. Zero-variance
/// features get std 1 so they pass through centered.
pub fn fit_scaler(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let d = x.first().map(|r| r.len()).unwrap_or(0);
    let mut means = vec![0.0; d];
    for row in x {
        for (j, &v) in row.iter().enumerate() {
            means[j] += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut vars = vec![0.0; d];
    for row in x {
        for (j, &v) in row.iter().enumerate() {
            let dlt = v - means[j];
            vars[j] += dlt * dlt;
        }
    }
    let stds: Vec<f64> = vars
        .iter()
        .map(|&v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (means, stds)
}

pub fn apply_scaler(means: &[f64], stds: &[f64], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| (v - means[j]) / stds[j])
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub seed: u64,
    pub reg_strength: f64,
    pub converged: bool,
    pub solver_iterations: usize,
    /// Omitted by default so identical configs produce byte-identical
    /// bundles; set explicitly when provenance beats reproducibility.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trained_at: Option<String>,
}

/// Everything needed to score a raw (possibly missing-valued) feature vector:
/// imputation medians, standardization statistics, linear weights, bias, and
/// the decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub feature_names: Vec<String>,
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub metadata: BundleMetadata,
}

impl ModelBundle {
    /// Fit imputer, scaler, and classifier on the full training matrix.
    /// The decision threshold is supplied by the caller (selected on pooled
    /// out-of-fold scores, never on the data being evaluated).
    pub fn fit(
        x: &[Vec<Option<f64>>],
        y: &[u8],
        feature_names: &[String],
        reg_strength: f64,
        threshold: f64,
        seed: u64,
    ) -> Result<Self> {
        let medians = fit_imputer(x, feature_names)?;
        let imputed = apply_imputer(&medians, x);
        let (means, stds) = fit_scaler(&imputed);
        let scaled = apply_scaler(&means, &stds, &imputed);
        let fit = train_logreg(&scaled, y, reg_strength, 1e-6, 1000)?;
        Ok(Self {
            feature_names: feature_names.to_vec(),
            medians,
            means,
            stds,
            weights: fit.weights,
            bias: fit.bias,
            threshold,
            metadata: BundleMetadata {
                seed,
                reg_strength,
                converged: fit.converged,
                solver_iterations: fit.iterations,
                trained_at: None,
            },
        })
    }

    /// sigmoid(w . standardize(impute(x)) + b), always in (0,1).
    pub fn predict_proba(&self, x: &[Option<f64>]) -> Result<f64> {
        if x.len() != self.feature_names.len() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} features, got {}",
                self.feature_names.len(),
                x.len()
            )));
        }
        let mut z = self.bias;
        for (j, v) in x.iter().enumerate() {
            let raw = v.unwrap_or(self.medians[j]);
            z += self.weights[j] * (raw - self.means[j]) / self.stds[j];
        }
        Ok(logreg::sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
    }

    /// Verdict "AI-generated" iff the probability clears the threshold.
    pub fn is_synthetic(&self, proba: f64) -> bool {
        proba >= self.threshold
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub auroc: f64,
    pub auprc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub auprc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub per_fold: Vec<FoldScore>,
    pub confusion: Confusion,
    pub reliability: Vec<ReliabilityBin>,
}

impl EvalReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Companion CSVs: per-fold table, reliability bins, confusion counts.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join("per_fold.csv"))?;
        w.write_record(["fold", "auroc", "auprc"])?;
        for (i, f) in self.per_fold.iter().enumerate() {
            w.write_record([i.to_string(), f.auroc.to_string(), f.auprc.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("reliability.csv"))?;
        w.write_record(["bin_lo", "bin_hi", "mean_predicted", "empirical_rate", "count"])?;
        for b in &self.reliability {
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.mean_predicted.map(|v| v.to_string()).unwrap_or_default(),
                b.empirical_rate.map(|v| v.to_string()).unwrap_or_default(),
                b.count.to_string(),
            ])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("confusion.csv"))?;
        w.write_record(["tp", "fp", "tn", "fn"])?;
        w.write_record([
            self.confusion.tp.to_string(),
            self.confusion.fp.to_string(),
            self.confusion.tn.to_string(),
            self.confusion.false_neg.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}
