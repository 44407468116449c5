//! Clip-level detection: frame-wise thresholding followed by the decision
//! score `V`, the fraction of frames flagged anomalous. With `phi_v = 0` a
//! single exceeding frame marks the whole clip anomalous.

use crate::audio::FeatureMatrix;
use crate::error::Result;
use crate::model::TrainedModel;

#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub per_frame_scores: Vec<f64>,
    /// `V`: mean of per-frame binary decisions, in [0, 1].
    pub decision_score: f64,
    pub anomalous: bool,
    /// Largest per-frame score; the clip-level score used for ROC curves.
    pub max_score: f64,
}

pub fn detect_clip(
    model: &TrainedModel,
    features: &FeatureMatrix,
    phi: f64,
    phi_v: f64,
) -> Result<DetectionResult> {
    let scores = model.score_features(features)?;
    let flagged = scores.iter().filter(|s| **s > phi).count();
    let v = flagged as f64 / scores.len() as f64;
    let max_score = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(DetectionResult {
        decision_score: v,
        anomalous: v > phi_v,
        max_score,
        per_frame_scores: scores,
    })
}
