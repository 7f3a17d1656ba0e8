//! Stratified k-fold cross-validation with per-fold refitting of the
//! imputer, scaler, and classifier (no leakage), plus the feature-ablation
//! runner.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::model::{
    apply_imputer, apply_scaler, auprc, auroc, bootstrap_ci, fit_imputer, fit_scaler,
    logreg::sigmoid, train_logreg, FoldScore,
};

/// Seeded stratified fold assignment: per-class shuffle, then round-robin.
/// Returns a fold index per input row.
pub fn stratified_fold_assignments(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidInput("k must be >= 2".into()));
    }
    for class in [0u8, 1u8] {
        let count = labels.iter().filter(|&&l| l == class).count();
        if count < k {
            return Err(Error::TooFewPerClass {
                label: class,
                count,
            });
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    Ok(assignment)
}

/// Everything fitted on one fold's training split, kept for leakage audits.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldFit {
    pub medians: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub test_indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub per_fold: Vec<FoldScore>,
    /// Out-of-fold score for every input row, in input order.
    pub pooled_scores: Vec<f64>,
    pub pooled_auroc: f64,
    pub pooled_auprc: f64,
    pub ci: (f64, f64),
    pub fold_fits: Vec<FoldFit>,
}

/// Bootstrap resamples drawn for the pooled-score confidence interval.
pub const BOOTSTRAP_SAMPLES: usize = 1000;

/// Stratified k-fold CV. Imputer, scaler, and classifier are fitted on the
/// training folds only; out-of-fold scores are pooled for the overall
/// AUROC/AUPRC and a seeded percentile bootstrap CI.
pub fn run_cv(
    x: &[Vec<Option<f64>>],
    y: &[u8],
    feature_names: &[String],
    k: usize,
    seed: u64,
    reg_strength: f64,
) -> Result<CvResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput("rows and labels must align".into()));
    }
    let assignment = stratified_fold_assignments(y, k, seed)?;
    let mut pooled_scores = vec![0.0f64; x.len()];
    let mut per_fold = Vec::with_capacity(k);
    let mut fold_fits = Vec::with_capacity(k);

    for fold in 0..k {
        let train_idx: Vec<usize> = (0..x.len()).filter(|&i| assignment[i] != fold).collect();
        let test_idx: Vec<usize> = (0..x.len()).filter(|&i| assignment[i] == fold).collect();
        let train_x: Vec<Vec<Option<f64>>> = train_idx.iter().map(|&i| x[i].clone()).collect();
        let train_y: Vec<u8> = train_idx.iter().map(|&i| y[i]).collect();

        let medians = fit_imputer(&train_x, feature_names)?;
        let imputed = apply_imputer(&medians, &train_x);
        let (means, stds) = fit_scaler(&imputed);
        let scaled = apply_scaler(&means, &stds, &imputed);
        let fit = train_logreg(&scaled, &train_y, reg_strength, 1e-6, 1000)?;

        let mut fold_scores = Vec::with_capacity(test_idx.len());
        for &i in &test_idx {
            let mut z = fit.bias;
            for (j, v) in x[i].iter().enumerate() {
                let raw = v.unwrap_or(medians[j]);
                z += fit.weights[j] * (raw - means[j]) / stds[j];
            }
            let p = sigmoid(z);
            pooled_scores[i] = p;
            fold_scores.push(p);
        }
        let fold_y: Vec<u8> = test_idx.iter().map(|&i| y[i]).collect();
        per_fold.push(FoldScore {
            auroc: auroc(&fold_scores, &fold_y)?,
            auprc: auprc(&fold_scores, &fold_y)?,
        });
        fold_fits.push(FoldFit {
            medians,
            means,
            stds,
            weights: fit.weights,
            bias: fit.bias,
            test_indices: test_idx,
        });
    }

    let pooled_auroc = auroc(&pooled_scores, y)?;
    let pooled_auprc = auprc(&pooled_scores, y)?;
    let ci = bootstrap_ci(&pooled_scores, y, BOOTSTRAP_SAMPLES, seed)?;
    Ok(CvResult {
        per_fold,
        pooled_scores,
        pooled_auroc,
        pooled_auprc,
        ci,
        fold_fits,
    })
}

/// Run CV restricted to each named feature subset; returns (subset label,
/// pooled AUROC) ranked best-first.
pub fn ablation(
    x: &[Vec<Option<f64>>],
    y: &[u8],
    feature_names: &[String],
    subsets: &[Vec<String>],
    k: usize,
    seed: u64,
    reg_strength: f64,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let mut cols = Vec::with_capacity(subset.len());
        for name in subset {
            let j = feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown feature `{name}`")))?;
            cols.push(j);
        }
        let projected: Vec<Vec<Option<f64>>> = x
            .iter()
            .map(|row| cols.iter().map(|&j| row[j]).collect())
            .collect();
        let sub_names: Vec<String> = subset.clone();
        let cv = run_cv(&projected, y, &sub_names, k, seed, reg_strength)?;
        out.push((subset.join("+"), cv.pooled_auroc));
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    /// Separable 2-feature data with a few missing entries.
    fn toy_data(n: usize, seed: u64) -> (Vec<Vec<Option<f64>>>, Vec<u8>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            let offset = f64::from(label) * 2.0;
            let a = rng.gen_range(-1.0..1.0) + offset;
            let b = rng.gen_range(-1.0..1.0);
            let a = if i % 13 == 0 { None } else { Some(a) };
            x.push(vec![a, Some(b)]);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn fold_assignment_is_stratified_and_deterministic() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
        let a = stratified_fold_assignments(&labels, 5, 3).unwrap();
        let b = stratified_fold_assignments(&labels, 5, 3).unwrap();
        assert_eq!(a, b);
        for fold in 0..5 {
            for class in 0..2u8 {
                let count = labels
                    .iter()
                    .zip(&a)
                    .filter(|(&l, &f)| l == class && f == fold)
                    .count();
                assert_eq!(count, 5);
            }
        }
    }

    #[test]
    fn fold_assignment_small_class_errors() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1];
        assert!(matches!(
            stratified_fold_assignments(&labels, 5, 0),
            Err(Error::TooFewPerClass { label: 1, .. })
        ));
    }

    #[test]
    fn cv_on_separable_data_is_strong_and_deterministic() {
        let (x, y) = toy_data(120, 6);
        let r1 = run_cv(&x, &y, &names(2), 5, 9, 1.0).unwrap();
        let r2 = run_cv(&x, &y, &names(2), 5, 9, 1.0).unwrap();
        assert!(r1.pooled_auroc > 0.9, "auroc {}", r1.pooled_auroc);
        assert_eq!(r1.pooled_scores, r2.pooled_scores);
        assert_eq!(r1.per_fold, r2.per_fold);
        assert_eq!(r1.ci, r2.ci);
        assert_eq!(r1.per_fold.len(), 5);
    }

    #[test]
    fn cv_shuffled_labels_is_chance() {
        let (x, _) = toy_data(200, 10);
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let mut y: Vec<u8> = (0..200).map(|i| (i % 2) as u8).collect();
        y.shuffle(&mut rng);
        let r = run_cv(&x, &y, &names(2), 5, 9, 1.0).unwrap();
        assert!(
            (0.4..=0.6).contains(&r.pooled_auroc),
            "auroc {}",
            r.pooled_auroc
        );
    }

    #[test]
    fn fold_fits_ignore_heldout_rows() {
        let (x, y) = toy_data(100, 2);
        let base = run_cv(&x, &y, &names(2), 5, 4, 1.0).unwrap();
        // wreck the held-out rows of fold 0 and refit
        let mut mutated = x.clone();
        for &i in &base.fold_fits[0].test_indices {
            mutated[i] = vec![Some(1e6), Some(-1e6)];
        }
        // fold fits must be identical where training rows are untouched
        let refit = run_cv(&mutated, &y, &names(2), 5, 4, 1.0).unwrap();
        assert_eq!(base.fold_fits[0].medians, refit.fold_fits[0].medians);
        assert_eq!(base.fold_fits[0].means, refit.fold_fits[0].means);
        assert_eq!(base.fold_fits[0].stds, refit.fold_fits[0].stds);
        assert_eq!(base.fold_fits[0].weights, refit.fold_fits[0].weights);
        assert_eq!(base.fold_fits[0].bias, refit.fold_fits[0].bias);
    }

    #[test]
    fn ablation_full_set_matches_cv_and_rejects_unknown() {
        let (x, y) = toy_data(80, 5);
        let full = run_cv(&x, &y, &names(2), 4, 1, 1.0).unwrap();
        let table = ablation(
            &x,
            &y,
            &names(2),
            &[vec!["f0".into(), "f1".into()], vec!["f1".into()]],
            4,
            1,
            1.0,
        )
        .unwrap();
        let full_row = table.iter().find(|(s, _)| s == "f0+f1").unwrap();
        assert!((full_row.1 - full.pooled_auroc).abs() < 1e-12);
        assert!(ablation(&x, &y, &names(2), &[vec!["nope".into()]], 4, 1, 1.0).is_err());
    }
}
