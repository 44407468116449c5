//! Evaluation: ROC curves, rank-statistic AUC, partial AUC, TPR at a fixed
//! FPR, and labeled test-set assembly from normal/anomaly audio pools.

use crate::audio::{mix_at_anr, AudioClip};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Metrics for one evaluation condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    /// Anomaly-to-normal power ratio of the condition, dB; None for pooled.
    pub anr_db: Option<f64>,
    pub n_normal: usize,
    pub n_anomalous: usize,
    pub auc: f64,
    pub pauc: f64,
    pub rho_tpr: f64,
    pub roc: Vec<RocPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub rho: f64,
    pub p: f64,
    pub conditions: Vec<ConditionReport>,
    pub pooled: ConditionReport,
}

/// ROC by sweeping a decision threshold over the pooled unique scores;
/// decision rule is `score > threshold`. Endpoints (0,0) and (1,1) are
/// always present.
pub fn roc_points(normals: &[f64], anomalies: &[f64]) -> Result<Vec<RocPoint>> {
    if normals.is_empty() || anomalies.is_empty() {
        return Err(Error::Data("ROC needs scores on both sides".into()));
    }
    let mut thresholds: Vec<f64> = normals.iter().chain(anomalies).cloned().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(RocPoint { fpr: 0.0, tpr: 0.0 });
    for t in thresholds {
        let fp = normals.iter().filter(|s| **s > t).count();
        let tp = anomalies.iter().filter(|s| **s > t).count();
        points.push(RocPoint {
            fpr: fp as f64 / normals.len() as f64,
            tpr: tp as f64 / anomalies.len() as f64,
        });
    }
    if points.last() != Some(&RocPoint { fpr: 1.0, tpr: 1.0 }) {
        points.push(RocPoint { fpr: 1.0, tpr: 1.0 });
    }
    Ok(points)
}

/// Rank-statistic AUC: the probability that a random anomaly outscores a
/// random normal, ties counted half. Integer accumulation keeps this exactly
/// equal to the all-pairs computation.
pub fn auc(normals: &[f64], anomalies: &[f64]) -> Result<f64> {
    if normals.is_empty() || anomalies.is_empty() {
        return Err(Error::Data("AUC needs scores on both sides".into()));
    }
    let mut sorted: Vec<f64> = normals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut wins = 0u64;
    let mut ties = 0u64;
    for a in anomalies {
        let below = sorted.partition_point(|n| n < a);
        let at_or_below = sorted.partition_point(|n| n <= a);
        wins += below as u64;
        ties += (at_or_below - below) as u64;
    }
    let pairs = (normals.len() * anomalies.len()) as f64;
    Ok((wins as f64 + 0.5 * ties as f64) / pairs)
}

/// Area under the ROC restricted to FPR in [0, p], normalized by p, with
/// trapezoidal interpolation at FPR = p.
pub fn pauc(roc: &[RocPoint], p: f64) -> f64 {
    assert!(p > 0.0 && p <= 1.0, "p must be in (0, 1]");
    let mut area = 0.0;
    for pair in roc.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.fpr >= p {
            break;
        }
        if b.fpr <= p {
            area += 0.5 * (a.tpr + b.tpr) * (b.fpr - a.fpr);
        } else {
            // segment straddles p: interpolate
            let t = (p - a.fpr) / (b.fpr - a.fpr);
            let tpr_p = a.tpr + t * (b.tpr - a.tpr);
            area += 0.5 * (a.tpr + tpr_p) * (p - a.fpr);
            break;
        }
    }
    area / p
}

/// TPR at FPR = rho: the highest ROC point at or below rho, linearly
/// interpolated toward the next point when rho falls between FPR values.
pub fn rho_tpr(roc: &[RocPoint], rho: f64) -> f64 {
    assert!(rho > 0.0 && rho < 1.0, "rho must be in (0, 1)");
    let mut idx = 0;
    for (i, pt) in roc.iter().enumerate() {
        if pt.fpr <= rho {
            idx = i;
        } else {
            break;
        }
    }
    let at = roc[idx];
    if at.fpr >= rho || idx + 1 >= roc.len() {
        return at.tpr;
    }
    let next = roc[idx + 1];
    let t = (rho - at.fpr) / (next.fpr - at.fpr);
    at.tpr + t * (next.tpr - at.tpr)
}

pub fn condition_report(
    anr_db: Option<f64>,
    normals: &[f64],
    anomalies: &[f64],
    rho: f64,
    p: f64,
) -> Result<ConditionReport> {
    let roc = roc_points(normals, anomalies)?;
    Ok(ConditionReport {
        anr_db,
        n_normal: normals.len(),
        n_anomalous: anomalies.len(),
        auc: auc(normals, anomalies)?,
        pauc: pauc(&roc, p),
        rho_tpr: rho_tpr(&roc, rho),
        roc,
    })
}

/// One labeled test item.
#[derive(Debug, Clone)]
pub struct TestItem {
    pub clip: AudioClip,
    pub anomalous: bool,
    pub anr_db: f64,
    /// Index of the anomaly clip this item was derived from.
    pub source: usize,
}

/// For every anomaly clip and every ratio: one normal cut (labeled normal)
/// and one mixture (labeled anomalous), both derived from a randomly chosen
/// sufficiently long normal clip.
pub fn build_test_set<R: Rng>(
    normal_pool: &[AudioClip],
    anomaly_pool: &[AudioClip],
    anr_list: &[f64],
    rng: &mut R,
) -> Result<Vec<TestItem>> {
    if normal_pool.is_empty() || anomaly_pool.is_empty() {
        return Err(Error::Data("empty audio pool".into()));
    }
    let mut items = Vec::new();
    for (source, anomaly) in anomaly_pool.iter().enumerate() {
        let candidates: Vec<&AudioClip> = normal_pool
            .iter()
            .filter(|n| n.len() >= anomaly.len())
            .collect();
        if candidates.is_empty() {
            return Err(Error::Data(format!(
                "no normal clip is at least as long as anomaly #{source} ({} samples)",
                anomaly.len()
            )));
        }
        for &anr_db in anr_list {
            let normal = candidates[rng.gen_range(0..candidates.len())];
            let mix = mix_at_anr(normal, anomaly, anr_db, rng)?;
            items.push(TestItem { clip: mix.normal_cut, anomalous: false, anr_db, source });
            items.push(TestItem { clip: mix.mixture, anomalous: true, anr_db, source });
        }
    }
    Ok(items)
}
