//! Context-windowed feature vectors and mean/variance normalization.

use super::{stft, AudioClip, MelFilterbank, Window, FRAME_LEN, HOP};
use crate::error::{Error, Result};
use crate::nn::Mat;
use serde::{Deserialize, Serialize};

/// Standard deviations below this are clamped so constant dimensions stay
/// finite under normalization.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_mels: usize,
    /// Context radius C; each feature row spans 2C+1 mel frames.
    pub context: usize,
    pub eps_floor: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { n_mels: 40, context: 5, eps_floor: 1e-10 }
    }
}

impl FeatureConfig {
    /// Feature dimension Q = n_mels * (2C + 1).
    pub fn dim(&self) -> usize {
        self.n_mels * (2 * self.context + 1)
    }
}

/// `T x Q` feature rows plus whether normalization has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Mat,
    pub normalized: bool,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.rows.rows()
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }
}

/// Per-dimension mean and (floored) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Row `t` is the concatenation of mel frames `t-C ..= t+C`, with the first
/// and last frames replicated at the edges so T is preserved.
pub fn frame_context(mels: &Mat, context: usize) -> Result<Mat> {
    let t = mels.rows();
    let d = mels.cols();
    if t == 0 {
        return Err(Error::Data("no frames to window".into()));
    }
    let width = 2 * context + 1;
    let mut out = Mat::zeros(t, d * width);
    for center in 0..t {
        let row = out.row_mut(center);
        for (slot, offset) in (-(context as isize)..=context as isize).enumerate() {
            let src = (center as isize + offset).clamp(0, t as isize - 1) as usize;
            row[slot * d..(slot + 1) * d].copy_from_slice(mels.row(src));
        }
    }
    Ok(out)
}

/// Full front end for one clip: Hann STFT, log-mel, context windows.
pub fn extract_features(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let spec = stft(clip, FRAME_LEN, HOP, Window::Hann)?;
    let fb = MelFilterbank::new(cfg.n_mels, FRAME_LEN, clip.sample_rate());
    let mels = fb.log_mel(&spec, cfg.eps_floor);
    let rows = frame_context(&mels, cfg.context)?;
    Ok(FeatureMatrix { rows, normalized: false })
}

/// Population mean/std over all rows of all matrices.
pub fn fit_norm_stats(sets: &[&FeatureMatrix]) -> Result<NormStats> {
    let dim = sets
        .first()
        .map(|f| f.dim())
        .ok_or_else(|| Error::Data("no feature sets".into()))?;
    if sets.iter().any(|f| f.dim() != dim) {
        return Err(Error::Dim("feature sets disagree on dimension".into()));
    }
    let total: usize = sets.iter().map(|f| f.n_frames()).sum();
    if total < 2 {
        return Err(Error::Data("need at least 2 frames to fit statistics".into()));
    }
    let mut mean = vec![0.0; dim];
    for f in sets {
        for r in 0..f.n_frames() {
            for (m, v) in mean.iter_mut().zip(f.rows.row(r)) {
                *m += v;
            }
        }
    }
    for m in &mut mean {
        *m /= total as f64;
    }
    let mut var = vec![0.0; dim];
    for f in sets {
        for r in 0..f.n_frames() {
            for ((s, v), m) in var.iter_mut().zip(f.rows.row(r)).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
    }
    let std = var
        .iter()
        .map(|s| (s / total as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

pub fn apply_norm(features: &FeatureMatrix, stats: &NormStats) -> Result<FeatureMatrix> {
    if features.dim() != stats.mean.len() {
        return Err(Error::Dim(format!(
            "features have dim {}, stats have dim {}",
            features.dim(),
            stats.mean.len()
        )));
    }
    let mut rows = features.rows.clone();
    for r in 0..rows.rows() {
        let row = rows.row_mut(r);
        for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
            *v = (*v - m) / s;
        }
    }
    Ok(FeatureMatrix { rows, normalized: true })
}
