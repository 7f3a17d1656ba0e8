//! Threshold-free ranking metrics, threshold selection, and calibration
//! summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_both_classes(labels: &[u8]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Probability that a random positive outranks a random negative, ties
/// counted half. Computed with the average-rank formula; equals brute-force
/// pair counting.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_both_classes(labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // average ranks over tie groups (1-based)
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == 1)
        .map(|(i, _)| ranks[i])
        .sum();
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Average precision: precision summed at each positive-ranked threshold
/// times its recall increment. Ties broken by descending score, then stable
/// input order.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 {
        return Err(Error::InvalidInput("auprc needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut seen_pos = 0usize;
    let mut ap = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            seen_pos += 1;
            ap += seen_pos as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / pos as f64)
}

/// Youden's J threshold: argmax over unique score candidates of TPR - FPR,
/// verdict positive iff score >= theta, smallest qualifying theta on ties.
pub fn youden_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_both_classes(labels)?;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    let mut best_theta = candidates[0];
    let mut best_j = f64::NEG_INFINITY;
    for &theta in &candidates {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            if s >= theta {
                if l == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let j = tp as f64 / pos as f64 - fp as f64 / neg as f64;
        if j > best_j {
            best_j = j;
            best_theta = theta;
        }
    }
    Ok(best_theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub false_neg: usize,
}

/// Confusion counts at threshold theta; verdict synthetic iff score >= theta.
pub fn confusion_at(scores: &[f64], labels: &[u8], theta: f64) -> Confusion {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        false_neg: 0,
    };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= theta, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.false_neg += 1,
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub mean_predicted: Option<f64>,
    pub empirical_rate: Option<f64>,
    pub count: usize,
}

/// Equal-width calibration bins over [0,1]; empty bins emitted with count 0.
pub fn reliability_bins(scores: &[f64], labels: &[u8], n_bins: usize) -> Vec<ReliabilityBin> {
    let mut sums = vec![0.0f64; n_bins];
    let mut hits = vec![0usize; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = ((s * n_bins as f64).floor() as usize).min(n_bins - 1);
        sums[b] += s;
        counts[b] += 1;
        hits[b] += usize::from(l == 1);
    }
    (0..n_bins)
        .map(|b| ReliabilityBin {
            lo: b as f64 / n_bins as f64,
            hi: (b + 1) as f64 / n_bins as f64,
            mean_predicted: (counts[b] > 0).then(|| sums[b] / counts[b] as f64),
            empirical_rate: (counts[b] > 0).then(|| hits[b] as f64 / counts[b] as f64),
            count: counts[b],
        })
        .collect()
}

/// 95% percentile bootstrap CI for AUROC over (score, label) pairs.
/// Resamples that lose a class are skipped; B draws, seeded.
pub fn bootstrap_ci(scores: &[f64], labels: &[u8], b: usize, seed: u64) -> Result<(f64, f64)> {
    check_both_classes(labels)?;
    let n = scores.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(b);
    for _ in 0..b {
        let mut s = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            s.push(scores[i]);
            l.push(labels[i]);
        }
        if let Ok(a) = auroc(&s, &l) {
            stats.push(a);
        }
    }
    if stats.is_empty() {
        return Err(Error::InvalidInput("every bootstrap resample degenerated".into()));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| stats[((stats.len() - 1) as f64 * q).round() as usize];
    Ok((pick(0.025), pick(0.975)))
}

#[cfg(test)]
pub(crate) fn brute_force_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut total = 0.0;
    for (i, (&sp, &lp)) in scores.iter().zip(labels).enumerate() {
        if lp != 1 {
            continue;
        }
        for (j, (&sn, &ln)) in scores.iter().zip(labels).enumerate() {
            if ln != 0 || i == j {
                continue;
            }
            total += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    wins / total
}

#[cfg(test)]
pub(crate) fn brute_force_youden(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut cands: Vec<f64> = scores.to_vec();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let mut best = (f64::NEG_INFINITY, cands[0]);
    for &t in &cands {
        let tp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| s >= t && l == 1)
            .count() as f64;
        let fp = scores
            .iter()
            .zip(labels)
            .filter(|(&s, &l)| s >= t && l == 0)
            .count() as f64;
        let j = tp / pos - fp / neg;
        if j > best.0 {
            best = (j, t);
        }
    }
    best.1
}
