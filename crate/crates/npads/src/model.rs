//! The trained-model container and its versioned binary file format.
//!
//! Layout: magic, version, config JSON, normalization stats, the three
//! network blocks, the latent mixture, thresholds, the calibration score
//! table, and a trailing SHA-256 digest of everything before it.

use crate::audio::{apply_norm, FeatureMatrix, NormStats};
use crate::error::{Error, Result};
use crate::gmm::DiagGmm;
use crate::nn::{read_f64, read_u32, Mlp};
use crate::objectives::{anomaly_scores_batch, select_threshold};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"NPADSMDL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// Retained for reproducibility of the anomaly simulation.
    pub generator: Mlp,
    pub norm: NormStats,
    pub gmm: DiagGmm,
    /// Deployed anomaly-score threshold, the sorted-score rule applied to all
    /// normal training frames at `rho_deploy`.
    pub threshold: f64,
    pub rho_deploy: f64,
    /// Anomaly scores of all normal training frames, descending. Lets any
    /// other deployment ratio be resolved after training.
    pub calibration_scores: Vec<f64>,
    /// Echo of the run configuration, JSON.
    pub config_json: String,
    pub seed: u64,
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// Normalize raw features with the stored stats and score each frame.
    pub fn score_features(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        let normalized = if features.normalized {
            features.clone()
        } else {
            apply_norm(features, &self.norm)?
        };
        anomaly_scores_batch(&self.encoder, &self.decoder, &normalized.rows)
    }

    /// Threshold whose training-data false-positive rate is `rho`.
    pub fn threshold_at(&self, rho: f64) -> Result<f64> {
        select_threshold(&self.calibration_scores, rho)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let mut body = Vec::new();
        self.write_body(&mut body)?;
        let digest = Sha256::digest(&body);
        let mut file = std::fs::File::create(path)?;
        file.write_all(&body)?;
        file.write_all(&digest)?;
        Ok(hex::encode(digest))
    }

    /// Load and verify the digest; returns the model and the digest hex.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if bytes.len() < 32 {
            return Err(Error::Data(format!("{}: truncated model file", path.display())));
        }
        let (body, stored) = bytes.split_at(bytes.len() - 32);
        let digest = Sha256::digest(body);
        if digest.as_slice() != stored {
            return Err(Error::Data(format!(
                "{}: digest mismatch, file corrupted",
                path.display()
            )));
        }
        let model = Self::read_body(&mut &body[..])?;
        Ok((model, hex::encode(digest)))
    }

    fn write_body<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let cfg = self.config_json.as_bytes();
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(cfg)?;
        w.write_all(&self.seed.to_le_bytes())?;

        let q = self.norm.mean.len() as u32;
        w.write_all(&q.to_le_bytes())?;
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            w.write_all(&v.to_le_bytes())?;
        }

        self.encoder.write_to(w)?;
        self.decoder.write_to(w)?;
        self.generator.write_to(w)?;

        w.write_all(&(self.gmm.n_components() as u32).to_le_bytes())?;
        w.write_all(&(self.gmm.dim() as u32).to_le_bytes())?;
        for v in &self.gmm.weights {
            w.write_all(&v.to_le_bytes())?;
        }
        for row in self.gmm.means.iter().chain(&self.gmm.variances) {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }

        w.write_all(&self.threshold.to_le_bytes())?;
        w.write_all(&self.rho_deploy.to_le_bytes())?;
        w.write_all(&(self.calibration_scores.len() as u32).to_le_bytes())?;
        for v in &self.calibration_scores {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    fn read_body<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Data("not a model file".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Data(format!("unsupported model version {version}")));
        }
        let cfg_len = read_u32(r)? as usize;
        let mut cfg = vec![0u8; cfg_len];
        r.read_exact(&mut cfg)?;
        let config_json = String::from_utf8(cfg)
            .map_err(|_| Error::Data("model config is not UTF-8".into()))?;
        let mut seed_bytes = [0u8; 8];
        r.read_exact(&mut seed_bytes)?;
        let seed = u64::from_le_bytes(seed_bytes);

        let q = read_u32(r)? as usize;
        let mut mean = vec![0.0; q];
        for v in &mut mean {
            *v = read_f64(r)?;
        }
        let mut std = vec![0.0; q];
        for v in &mut std {
            *v = read_f64(r)?;
        }

        let encoder = Mlp::read_from(r)?;
        let decoder = Mlp::read_from(r)?;
        let generator = Mlp::read_from(r)?;

        let k = read_u32(r)? as usize;
        let dim = read_u32(r)? as usize;
        let mut weights = vec![0.0; k];
        for v in &mut weights {
            *v = read_f64(r)?;
        }
        let mut read_rows = |k: usize, dim: usize, r: &mut R| -> Result<Vec<Vec<f64>>> {
            let mut rows = Vec::with_capacity(k);
            for _ in 0..k {
                let mut row = vec![0.0; dim];
                for v in &mut row {
                    *v = read_f64(r)?;
                }
                rows.push(row);
            }
            Ok(rows)
        };
        let means = read_rows(k, dim, r)?;
        let variances = read_rows(k, dim, r)?;
        let gmm = DiagGmm { weights, means, variances };
        gmm.validate()?;

        let threshold = read_f64(r)?;
        let rho_deploy = read_f64(r)?;
        let n_cal = read_u32(r)? as usize;
        let mut calibration_scores = vec![0.0; n_cal];
        for v in &mut calibration_scores {
            *v = read_f64(r)?;
        }

        Ok(TrainedModel {
            encoder,
            decoder,
            generator,
            norm: NormStats { mean, std },
            gmm,
            threshold,
            rho_deploy,
            calibration_scores,
            config_json,
            seed,
        })
    }
}
